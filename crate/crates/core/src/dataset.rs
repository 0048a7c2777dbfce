//! SQuAD2.0 data model: load, save, validate, and summarize.
//!
//! Unknown fields at every level are kept in an `extra` map so files from
//! other tools survive a round trip.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::text::{char_len, CharIndex};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation in {path} at `{location}`: {message}")]
    Schema {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QADataset {
    pub version: String,
    #[serde(rename = "data")]
    pub articles: Vec<Article>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<Question>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub question: String,
    pub answers: Vec<AnswerSpan>,
    /// Absent in SQuAD1.1-style files; those questions are all answerable.
    #[serde(default)]
    pub is_impossible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_answers: Option<Vec<AnswerSpan>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    /// Offset in code points into the owning context.
    pub answer_start: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AnswerSpan {
    pub fn new(text: impl Into<String>, answer_start: usize) -> Self {
        Self {
            text: text.into(),
            answer_start,
            extra: Map::new(),
        }
    }

    /// Exclusive code-point end.
    pub fn end(&self) -> usize {
        self.answer_start + char_len(&self.text)
    }
}

impl QADataset {
    pub fn new(version: impl Into<String>, articles: Vec<Article>) -> Self {
        Self {
            version: version.into(),
            articles,
            extra: Map::new(),
        }
    }

    pub fn empty() -> Self {
        Self::new("v2.0", Vec::new())
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = (usize, usize, &Paragraph)> {
        self.articles
            .iter()
            .enumerate()
            .flat_map(|(ai, a)| a.paragraphs.iter().enumerate().map(move |(pi, p)| (ai, pi, p)))
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.paragraphs().flat_map(|(_, _, p)| p.qas.iter())
    }

    pub fn paragraph_count(&self) -> usize {
        self.articles.iter().map(|a| a.paragraphs.len()).sum()
    }

    pub fn from_json_str(s: &str, origin: &Path) -> Result<Self, DatasetError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let location = e.path().to_string();
            let inner = e.into_inner();
            match inner.classify() {
                serde_json::error::Category::Data => DatasetError::Schema {
                    path: origin.to_path_buf(),
                    location,
                    message: inner.to_string(),
                },
                _ => DatasetError::Parse {
                    path: origin.to_path_buf(),
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                },
            }
        })
    }

    /// Canonical compact serialization.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("dataset serialization is infallible")
    }
}

impl Article {
    pub fn new(title: impl Into<String>, paragraphs: Vec<Paragraph>) -> Self {
        Self {
            title: title.into(),
            paragraphs,
            extra: Map::new(),
        }
    }
}

impl Paragraph {
    pub fn new(context: impl Into<String>, qas: Vec<Question>) -> Self {
        Self {
            context: context.into(),
            qas,
            extra: Map::new(),
        }
    }
}

impl Question {
    pub fn answerable(id: impl Into<String>, question: impl Into<String>, answers: Vec<AnswerSpan>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            answers,
            is_impossible: false,
            plausible_answers: None,
            extra: Map::new(),
        }
    }

    pub fn impossible(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            answers: Vec::new(),
            is_impossible: true,
            plausible_answers: None,
            extra: Map::new(),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<QADataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut buf = String::new();
    std::io::Read::read_to_string(&mut reader, &mut buf).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    QADataset::from_json_str(&buf, path)
}

/// Writes the dataset atomically (temp file in the same directory, then rename).
pub fn save_dataset(ds: &QADataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    crate::artifact::write_atomic(path, |w| {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, ds).map_err(std::io::Error::other)?;
        w.flush()
    })
    .map_err(|source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// The context substring at `answer_start` differs from the answer text.
    TextMismatch {
        expected: String,
        found: String,
    },
    OutOfBounds {
        answer_start: usize,
        answer_len: usize,
        context_len: usize,
    },
    ImpossibleWithAnswers,
    AnswerableWithoutAnswers,
    DuplicateId,
    EmptyContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub question_id: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks one answer against its context. `None` means the answer is well placed.
pub fn check_answer(context: &CharIndex<'_>, answer: &AnswerSpan) -> Option<ViolationKind> {
    let len = char_len(&answer.text);
    match context.slice(answer.answer_start, answer.answer_start + len) {
        None => Some(ViolationKind::OutOfBounds {
            answer_start: answer.answer_start,
            answer_len: len,
            context_len: context.len(),
        }),
        Some(found) if found != answer.text => Some(ViolationKind::TextMismatch {
            expected: answer.text.clone(),
            found: found.to_string(),
        }),
        Some(_) => None,
    }
}

pub fn validate_alignment(ds: &QADataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (_, _, para) in ds.paragraphs() {
        let index = CharIndex::new(&para.context);
        for q in &para.qas {
            let mut push = |kind| {
                violations.push(Violation {
                    question_id: q.id.clone(),
                    kind,
                })
            };
            if !seen.insert(q.id.as_str()) {
                push(ViolationKind::DuplicateId);
            }
            if q.is_impossible {
                if !q.answers.is_empty() {
                    push(ViolationKind::ImpossibleWithAnswers);
                }
                continue;
            }
            if q.answers.is_empty() {
                push(ViolationKind::AnswerableWithoutAnswers);
                continue;
            }
            if para.context.is_empty() {
                push(ViolationKind::EmptyContext);
                continue;
            }
            for a in &q.answers {
                if let Some(kind) = check_answer(&index, a) {
                    push(kind);
                }
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub context_count: usize,
    pub answerable_count: usize,
    pub impossible_count: usize,
    pub mean_context_len: f64,
    pub mean_question_len: f64,
    pub mean_answer_len: f64,
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

pub fn dataset_stats(ds: &QADataset) -> DatasetStats {
    let (mut contexts, mut context_chars) = (0, 0);
    let (mut answerable, mut impossible, mut question_chars) = (0, 0, 0);
    let (mut answers, mut answer_chars) = (0, 0);
    for (_, _, p) in ds.paragraphs() {
        contexts += 1;
        context_chars += char_len(&p.context);
        for q in &p.qas {
            question_chars += char_len(&q.question);
            if q.is_impossible {
                impossible += 1;
            } else {
                answerable += 1;
                for a in &q.answers {
                    answers += 1;
                    answer_chars += char_len(&a.text);
                }
            }
        }
    }
    DatasetStats {
        context_count: contexts,
        answerable_count: answerable,
        impossible_count: impossible,
        mean_context_len: mean(context_chars, contexts),
        mean_question_len: mean(question_chars, answerable + impossible),
        mean_answer_len: mean(answer_chars, answers),
    }
}
