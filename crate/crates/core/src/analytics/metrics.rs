//! SQuAD v2 style exact match and token F1.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::dataset::QADataset;
use crate::exec::Execution;

/// Lowercases, strips punctuation and article words, collapses whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    pub articles: Vec<String>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::english()
    }
}

fn punct() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}[[:punct:]]]").expect("valid pattern"))
}

impl Normalizer {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(articles: I) -> Self {
        Self {
            articles: articles.into_iter().map(|a| a.into().to_lowercase()).collect(),
        }
    }

    pub fn english() -> Self {
        Self::new(["a", "an", "the"])
    }

    /// No article words; Basque marks definiteness with a suffix.
    pub fn basque() -> Self {
        Self::new(Vec::<String>::new())
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let stripped = punct().replace_all(&lower, "");
        stripped
            .split_whitespace()
            .filter(|t| !self.articles.iter().any(|a| a == t))
            .map(str::to_string)
            .collect()
    }

    pub fn normalize(&self, text: &str) -> String {
        self.tokens(text).join(" ")
    }
}

fn token_f1(gold: &[String], pred: &[String]) -> f64 {
    if gold.is_empty() || pred.is_empty() {
        return f64::from(u8::from(gold == pred));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub(super) fn pair_f1(a: &str, b: &str, n: &Normalizer) -> f64 {
    token_f1(&n.tokens(a), &n.tokens(b))
}

/// `(f1, em)` of `pred` against the best of `gold`. Gold answers that
/// normalize to nothing are ignored; with none left the question counts
/// as unanswerable and only an empty prediction scores.
pub fn f1_em(gold: &[String], pred: &str, n: &Normalizer) -> (f64, f64) {
    let mut golds: Vec<Vec<String>> = gold.iter().map(|g| n.tokens(g)).filter(|t| !t.is_empty()).collect();
    if golds.is_empty() {
        golds.push(Vec::new());
    }
    let p = n.tokens(pred);
    let mut best = (0.0f64, 0.0f64);
    for g in &golds {
        best.0 = best.0.max(token_f1(g, &p));
        best.1 = best.1.max(f64::from(u8::from(*g == p)));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub f1: f64,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean F1 × 100.
    pub f1: f64,
    /// Mean EM × 100.
    pub em: f64,
    pub total: usize,
    pub answerable: usize,
    pub impossible: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub has_ans_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub has_ans_em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_ans_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_ans_em: Option<f64>,
    /// Gold questions without a prediction, scored as empty answers.
    pub missing: Vec<String>,
    pub per_question: BTreeMap<String, QuestionScore>,
}

fn mean100(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| 100.0 * sum / n as f64)
}

pub fn evaluate(
    gold: &QADataset,
    predictions: &HashMap<String, String>,
    n: &Normalizer,
    execution: Execution,
) -> EvalReport {
    let questions: Vec<_> = gold.questions().collect();
    let scores = execution.map(&questions, |q| {
        let golds: Vec<String> = if q.is_impossible {
            Vec::new()
        } else {
            q.answers.iter().map(|a| a.text.clone()).collect()
        };
        let pred = predictions.get(&q.id);
        let (f1, em) = f1_em(&golds, pred.map_or("", String::as_str), n);
        (QuestionScore { f1, em }, pred.is_none())
    });
    let pick = |impossible: Option<bool>| {
        move |(q, s): (&&crate::dataset::Question, &(QuestionScore, bool))| {
            (impossible.is_none_or(|i| q.is_impossible == i)).then_some(s.0)
        }
    };
    let all = || questions.iter().zip(&scores);
    let stat = |imp: Option<bool>, em: bool| mean100(all().filter_map(pick(imp)).map(|s| if em { s.em } else { s.f1 }));
    let impossible = questions.iter().filter(|q| q.is_impossible).count();
    EvalReport {
        f1: stat(None, false).unwrap_or(0.0),
        em: stat(None, true).unwrap_or(0.0),
        total: questions.len(),
        answerable: questions.len() - impossible,
        impossible,
        has_ans_f1: stat(Some(false), false),
        has_ans_em: stat(Some(false), true),
        no_ans_f1: stat(Some(true), false),
        no_ans_em: stat(Some(true), true),
        missing: all().filter(|(_, s)| s.1).map(|(q, _)| q.id.clone()).collect(),
        per_question: all().map(|(q, s)| (q.id.clone(), s.0)).collect(),
    }
}

/// Reads a predictions file: one JSON object from question id to answer.
pub fn load_predictions(path: &Path) -> Result<HashMap<String, String>, AnalyticsError> {
    let text = fs::read_to_string(path).map_err(|source| AnalyticsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| AnalyticsError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
