//! Rule-based sentence splitting and question-to-sentence assignment.
//!
//! A boundary falls after a run of `.`, `!`, `?` or `…` (plus any closing
//! quotes or brackets) when it is followed by whitespace and then an
//! uppercase letter, an opening quote or bracket, or a digit. A `.` ending
//! a token on the abbreviation list never ends a sentence.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::pick_longest;
use crate::dataset::{check_answer, AnswerSpan, Paragraph, ViolationKind};
use crate::text::{char_len, CharIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Sentences of one context together with the whitespace between them.
///
/// `leading + s0 + separators[0] + s1 + ... + trailing` is the context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub sentences: Vec<SentenceSpan>,
    pub separators: Vec<String>,
    pub leading: String,
    pub trailing: String,
}

impl Segmentation {
    pub fn reconstruct(&self) -> String {
        let mut out = self.leading.clone();
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push_str(&self.separators[i - 1]);
            }
            out.push_str(&s.text);
        }
        out.push_str(&self.trailing);
        out
    }

    /// Text of sentences `first..=last` with their inner separators.
    pub fn unit_text(&self, first: usize, last: usize) -> String {
        join_unit(
            self.sentences[first..=last].iter().map(|s| s.text.as_str()),
            &self.separators[first..last],
        )
    }
}

/// Interleave `parts` with `seps` (`seps.len() == parts.len() - 1`).
pub fn join_unit<'a>(parts: impl IntoIterator<Item = &'a str>, seps: &[String]) -> String {
    let mut out = String::new();
    for (i, p) in parts.into_iter().enumerate() {
        if i > 0 {
            out.push_str(&seps[i - 1]);
        }
        out.push_str(p);
    }
    out
}

/// Drop-in replacement point for other segmenters.
pub trait SentenceSplitter: Send + Sync {
    fn split(&self, context: &str) -> Segmentation;

    /// Stable description of the configuration, for artifact hashing.
    fn fingerprint(&self) -> String;
}

#[derive(Debug, Clone, Default)]
pub struct RuleSplitter {
    abbreviations: HashSet<String>,
}

const TERMINATORS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '»', '”', '’', ')', ']', '}'];
const OPENERS: &[char] = &['"', '\'', '«', '“', '‘', '(', '[', '{', '¿', '¡'];

/// A small built-in list of English and Basque abbreviations.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "vs.", "etc.", "e.g.", "i.e.", "cf.", "approx.",
    "No.", "Vol.", "Jan.", "Feb.", "Mar.", "Apr.", "Aug.", "Sept.", "Oct.", "Nov.", "Dec.", "U.S.", "U.K.", "a.m.",
    "p.m.", "etab.", "adib.", "arg.", "k.a.", "K.a.", "K.o.", "or.", "zk.",
];

fn abbrev_key(token: &str) -> &str {
    token
        .trim_start_matches(|c| OPENERS.contains(&c))
        .trim_end_matches(|c| CLOSERS.contains(&c))
        .trim_end_matches('.')
}

impl RuleSplitter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let abbreviations = abbreviations
            .into_iter()
            .map(|a| abbrev_key(a.as_ref().trim()).to_string())
            .filter(|a| !a.is_empty())
            .collect();
        Self { abbreviations }
    }

    pub fn with_default_abbreviations() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }

    /// Reads a UTF-8 file with one abbreviation per line.
    pub fn from_abbreviation_file(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::new(text.lines().filter(|l| !l.trim().is_empty())))
    }

    pub fn is_abbreviation(&self, token: &str) -> bool {
        self.abbreviations.contains(abbrev_key(token))
    }
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || c.is_numeric() || OPENERS.contains(&c)
}

impl SentenceSplitter for RuleSplitter {
    fn fingerprint(&self) -> String {
        let mut list: Vec<&str> = self.abbreviations.iter().map(String::as_str).collect();
        list.sort_unstable();
        format!("rule:{}", list.join("\n"))
    }

    fn split(&self, context: &str) -> Segmentation {
        let chars: Vec<char> = context.chars().collect();
        let n = chars.len();
        let collect = |a: usize, b: usize| chars[a..b].iter().collect::<String>();

        let first = chars.iter().position(|c| !c.is_whitespace()).unwrap_or(n);
        let last_end = chars.iter().rposition(|c| !c.is_whitespace()).map_or(first, |p| p + 1);

        let mut sentences = Vec::new();
        let mut separators = Vec::new();
        let mut start = first;
        let mut i = first;
        while i < last_end {
            if !TERMINATORS.contains(&chars[i]) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < n && TERMINATORS.contains(&chars[j + 1]) {
                j += 1;
            }
            while j + 1 < n && CLOSERS.contains(&chars[j + 1]) {
                j += 1;
            }
            let end = j + 1;
            let mut next = end;
            while next < n && chars[next].is_whitespace() {
                next += 1;
            }
            let boundary = next > end && next < last_end && starts_sentence(chars[next]) && {
                let only_periods = chars[i..end].iter().all(|c| *c == '.' || CLOSERS.contains(c));
                let tok_start = chars[..end]
                    .iter()
                    .rposition(|c| c.is_whitespace())
                    .map_or(0, |p| p + 1);
                !(only_periods && self.is_abbreviation(&collect(tok_start, end)))
            };
            if boundary {
                sentences.push(SentenceSpan {
                    start,
                    end,
                    text: collect(start, end),
                });
                separators.push(collect(end, next));
                start = next;
                i = next;
            } else {
                i = end;
            }
        }
        if start < last_end {
            sentences.push(SentenceSpan {
                start,
                end: last_end,
                text: collect(start, last_end),
            });
        }
        Segmentation {
            sentences,
            separators,
            leading: collect(0, first),
            trailing: collect(last_end.max(first), n),
        }
    }
}

pub fn split_sentences(context: &str, splitter: &dyn SentenceSplitter) -> Segmentation {
    splitter.split(context)
}

/// Where one answerable question's (longest) answer sits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub question_id: String,
    /// First sentence of the unit.
    pub first: usize,
    /// Last sentence of the unit, inclusive.
    pub last: usize,
    pub local_answer_start: usize,
    /// The answer that was mapped, with surrounding whitespace trimmed.
    pub answer: AnswerSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapViolation {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceMap {
    pub segmentation: Segmentation,
    pub assignments: Vec<Assignment>,
    pub violations: Vec<MapViolation>,
}

impl SentenceMap {
    pub fn assignment(&self, question_id: &str) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.question_id == question_id)
    }

    pub fn unit_text(&self, a: &Assignment) -> String {
        self.segmentation.unit_text(a.first, a.last)
    }
}

fn trim_answer(answer: &AnswerSpan) -> Option<AnswerSpan> {
    let lead = answer.text.chars().take_while(|c| c.is_whitespace()).count();
    let trimmed = answer.text.trim();
    if trimmed.is_empty() {
        return None;
    }
    Some(AnswerSpan {
        text: trimmed.to_string(),
        answer_start: answer.answer_start + lead,
        extra: answer.extra.clone(),
    })
}

pub fn map_qas(paragraph: &Paragraph, segmentation: Segmentation) -> SentenceMap {
    let index = CharIndex::new(&paragraph.context);
    let mut assignments = Vec::new();
    let mut violations = Vec::new();
    for q in paragraph.qas.iter().filter(|q| !q.is_impossible) {
        let mut violate = |reason: String| {
            violations.push(MapViolation {
                question_id: q.id.clone(),
                reason,
            })
        };
        let longest = match pick_longest(&q.answers) {
            Ok(a) => a,
            Err(e) => {
                violate(e.to_string());
                continue;
            }
        };
        if let Some(kind) = check_answer(&index, longest) {
            violate(match kind {
                ViolationKind::OutOfBounds { .. } => "answer offset outside context bounds".into(),
                _ => "answer text does not match context at answer_start".into(),
            });
            continue;
        }
        let Some(answer) = trim_answer(longest) else {
            violate("answer is whitespace only".into());
            continue;
        };
        let (a, b) = (answer.answer_start, answer.end());
        let sents = &segmentation.sentences;
        let first = sents.iter().position(|s| s.end > a);
        let last = sents.iter().rposition(|s| s.start < b);
        match (first, last) {
            (Some(first), Some(last)) if first <= last && sents[first].start <= a && sents[last].end >= b => {
                assignments.push(Assignment {
                    question_id: q.id.clone(),
                    first,
                    last,
                    local_answer_start: a - sents[first].start,
                    answer,
                });
            }
            _ => violate("answer is not covered by any sentence".into()),
        }
    }
    SentenceMap {
        segmentation,
        assignments,
        violations,
    }
}

/// Convenience: check the assignment invariant against the unit text.
pub fn assignment_is_sound(map: &SentenceMap, a: &Assignment) -> bool {
    let unit = map.unit_text(a);
    let len = char_len(&a.answer.text);
    CharIndex::new(&unit).slice(a.local_answer_start, a.local_answer_start + len) == Some(a.answer.text.as_str())
}
