//! Alignment error taxonomy and review files.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{pair_f1, Normalizer};
use super::AnalyticsError;
use crate::align::{pick_longest, tokenize};
use crate::artifact::write_atomic;
use crate::dataset::{AnswerSpan, QADataset};
use crate::text::CharIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Exact,
    Overlap,
    Missed,
    /// Only ever set by a human reviewer.
    MtError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysisRecord {
    pub question_id: String,
    pub category: ErrorCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_distance: Option<usize>,
}

/// Whole context tokens lying strictly between two disjoint spans.
fn word_distance(a: &AnswerSpan, b: &AnswerSpan, context: &str) -> usize {
    let gap = if a.end() <= b.answer_start {
        (a.end(), b.answer_start)
    } else if b.end() <= a.answer_start {
        (b.end(), a.answer_start)
    } else {
        return 0;
    };
    tokenize(context)
        .iter()
        .filter(|t| t.span.0 >= gap.0 && t.span.1 <= gap.1)
        .count()
}

fn shares_token(a: &str, b: &str, n: &Normalizer) -> bool {
    let bt = n.tokens(b);
    n.tokens(a).iter().any(|t| bt.contains(t))
}

pub fn classify_alignment_error(
    question_id: &str,
    pred: &AnswerSpan,
    gold: &AnswerSpan,
    context: &str,
    n: &Normalizer,
) -> ErrorAnalysisRecord {
    record(question_id, auto_category(pred, gold, n), pred, gold, Some(context), n)
}

fn auto_category(pred: &AnswerSpan, gold: &AnswerSpan, n: &Normalizer) -> ErrorCategory {
    if n.normalize(&pred.text) == n.normalize(&gold.text) {
        ErrorCategory::Exact
    } else if shares_token(&pred.text, &gold.text, n) {
        ErrorCategory::Overlap
    } else {
        ErrorCategory::Missed
    }
}

fn record(
    question_id: &str,
    category: ErrorCategory,
    pred: &AnswerSpan,
    gold: &AnswerSpan,
    context: Option<&str>,
    n: &Normalizer,
) -> ErrorAnalysisRecord {
    ErrorAnalysisRecord {
        question_id: question_id.to_string(),
        category,
        overlap_f1: (category == ErrorCategory::Overlap).then(|| pair_f1(&pred.text, &gold.text, n)),
        word_distance: match (category, context) {
            (ErrorCategory::Missed, Some(c)) => Some(word_distance(pred, gold, c)),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub total: usize,
    pub proportions: BTreeMap<ErrorCategory, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_overlap_f1: Option<f64>,
    pub distance_histogram: BTreeMap<usize, usize>,
}

pub fn error_summary(records: &[ErrorAnalysisRecord]) -> ErrorSummary {
    let mut counts: BTreeMap<ErrorCategory, usize> = BTreeMap::new();
    let mut hist = BTreeMap::new();
    let (mut f1_sum, mut f1_n) = (0.0, 0usize);
    for r in records {
        *counts.entry(r.category).or_default() += 1;
        if let Some(f) = r.overlap_f1 {
            f1_sum += f;
            f1_n += 1;
        }
        if let Some(d) = r.word_distance {
            *hist.entry(d).or_default() += 1;
        }
    }
    let total = records.len();
    ErrorSummary {
        total,
        proportions: counts.into_iter().map(|(c, k)| (c, k as f64 / total as f64)).collect(),
        mean_overlap_f1: (f1_n > 0).then(|| f1_sum / f1_n as f64),
        distance_histogram: hist,
    }
}

/// One reviewed question: gold and predicted spans, optionally the context
/// they index into, and an optional human category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub question_id: String,
    pub gold: AnswerSpan,
    pub predicted: AnswerSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
}

impl ReviewRecord {
    /// Human category when present, automatic classification otherwise.
    pub fn classify(&self, n: &Normalizer) -> ErrorAnalysisRecord {
        let category = self
            .category
            .unwrap_or_else(|| auto_category(&self.predicted, &self.gold, n));
        record(
            &self.question_id,
            category,
            &self.predicted,
            &self.gold,
            self.context.as_deref(),
            n,
        )
    }
}

pub fn load_review_file(path: &Path) -> Result<Vec<ReviewRecord>, AnalyticsError> {
    let text = fs::read_to_string(path).map_err(|source| AnalyticsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnalyticsError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_review_file(path: &Path, records: &[ReviewRecord]) -> std::io::Result<()> {
    write_atomic(path, |f| {
        for r in records {
            serde_json::to_writer(&mut *f, r)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Pairs each answerable question of `aligned` with the longest answer of
/// the same question in `reference`. The aligned context is attached only
/// when both datasets share it, since spans index into it.
pub fn review_aligned(reference: &QADataset, aligned: &QADataset) -> Vec<ReviewRecord> {
    let mut gold: HashMap<&str, (&AnswerSpan, &str)> = HashMap::new();
    for (_, _, p) in reference.paragraphs() {
        for q in &p.qas {
            if let Ok(a) = pick_longest(&q.answers) {
                gold.insert(&q.id, (a, &p.context));
            }
        }
    }
    let mut out = Vec::new();
    for (_, _, p) in aligned.paragraphs() {
        for q in p.qas.iter().filter(|q| !q.is_impossible) {
            let (Some(pred), Some((g, gctx))) = (q.answers.first(), gold.get(q.id.as_str())) else {
                continue;
            };
            let same = *gctx == p.context
                && CharIndex::new(&p.context).slice(g.answer_start, g.end()) == Some(g.text.as_str());
            out.push(ReviewRecord {
                question_id: q.id.clone(),
                gold: (*g).clone(),
                predicted: pred.clone(),
                context: same.then(|| p.context.clone()),
                category: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::find_char;

    const CTX: &str = "Errusiako hegoaldeko mugetako lur idorretan zabaltzen da.";

    fn at(t: &str) -> AnswerSpan {
        AnswerSpan::new(t, find_char(CTX, t).unwrap())
    }

    fn classify(p: &str, g: &str) -> ErrorAnalysisRecord {
        classify_alignment_error("q", &at(p), &at(g), CTX, &Normalizer::basque())
    }

    #[test]
    fn taxonomy_examples() {
        assert_eq!(
            classify("lur idorretan", "lur idorretan").category,
            ErrorCategory::Exact
        );
        let r = classify("hegoaldeko mugetako lur", "lur idorretan");
        assert_eq!(r.category, ErrorCategory::Overlap);
        assert!((r.overlap_f1.unwrap() - 0.4).abs() < 1e-15);
        let r = classify("mugetako", "lur idorretan");
        assert_eq!((r.category, r.word_distance), (ErrorCategory::Missed, Some(0)));
        let r = classify("Errusiako", "lur idorretan");
        assert_eq!(r.word_distance, Some(2));
        let r = classify("zabaltzen da.", "hegoaldeko");
        assert_eq!(r.word_distance, Some(3));
    }

    #[test]
    fn summary_of_four() {
        let recs = vec![
            classify("lur", "lur"),
            classify("da.", "da."),
            classify("hegoaldeko mugetako lur", "lur idorretan"),
            classify("mugetako", "lur idorretan"),
        ];
        let s = error_summary(&recs);
        assert_eq!(s.proportions[&ErrorCategory::Exact], 0.5);
        assert_eq!(s.proportions[&ErrorCategory::Overlap], 0.25);
        assert_eq!(s.proportions[&ErrorCategory::Missed], 0.25);
        assert!((s.mean_overlap_f1.unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(s.distance_histogram, BTreeMap::from([(0, 1)]));
        let empty = error_summary(&[]);
        assert_eq!((empty.total, empty.proportions.len()), (0, 0));
        let all_exact = error_summary(&vec![classify("lur", "lur"); 10]);
        assert_eq!(all_exact.proportions, BTreeMap::from([(ErrorCategory::Exact, 1.0)]));
        assert_eq!(all_exact.mean_overlap_f1, None);
        assert!(all_exact.distance_histogram.is_empty());
    }

    #[test]
    fn review_file_round_trip_with_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("review.jsonl");
        let recs = vec![
            ReviewRecord {
                question_id: "a".into(),
                gold: at("lur idorretan"),
                predicted: at("mugetako"),
                context: Some(CTX.into()),
                category: None,
            },
            ReviewRecord {
                question_id: "b".into(),
                gold: at("lur idorretan"),
                predicted: at("Errusiako"),
                context: None,
                category: Some(ErrorCategory::MtError),
            },
        ];
        save_review_file(&path, &recs).unwrap();
        let back = load_review_file(&path).unwrap();
        assert_eq!(back, recs);
        let n = Normalizer::basque();
        assert_eq!(back[0].classify(&n).word_distance, Some(0));
        let b = back[1].classify(&n);
        assert_eq!(
            (b.category, b.overlap_f1, b.word_distance),
            (ErrorCategory::MtError, None, None)
        );
    }

    #[test]
    fn trichotomy_over_all_span_pairs() {
        let toks = tokenize(CTX);
        let spans: Vec<AnswerSpan> = (0..toks.len())
            .flat_map(|i| (i..toks.len()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (s, e) = (toks[i].span.0, toks[j].span.1);
                AnswerSpan::new(CharIndex::new(CTX).slice(s, e).unwrap(), s)
            })
            .collect();
        let n = Normalizer::basque();
        for p in &spans {
            for g in &spans {
                let r = classify_alignment_error("q", p, g, CTX, &n);
                match r.category {
                    ErrorCategory::Exact => assert_eq!(p.text, g.text),
                    ErrorCategory::Overlap => assert!(r.overlap_f1.unwrap() > 0.0 && r.overlap_f1.unwrap() < 1.0),
                    ErrorCategory::Missed => assert!(r.word_distance.is_some()),
                    ErrorCategory::MtError => unreachable!(),
                }
            }
        }
    }
}
