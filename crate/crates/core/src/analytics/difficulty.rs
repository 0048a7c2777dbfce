//! Difficulty proxies: corruption rate, context/question overlap, question
//! types, and externally computed dependency depths.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Normalizer;
use super::AnalyticsError;
use crate::dataset::QADataset;

/// Fraction of `(sentence, translated answer)` pairs whose answer is not a
/// verbatim substring of the sentence.
pub fn corruption_rate<S: AsRef<str>, A: AsRef<str>>(pairs: &[(S, A)]) -> Result<f64, AnalyticsError> {
    if pairs.is_empty() {
        return Err(AnalyticsError::EmptyInput("corruption rate"));
    }
    let corrupted = pairs.iter().filter(|(s, a)| !s.as_ref().contains(a.as_ref())).count();
    Ok(corrupted as f64 / pairs.len() as f64)
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS(reference, hypothesis) / |hypothesis|.
pub fn rouge_l_precision<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, AnalyticsError> {
    if hypothesis.is_empty() {
        return Err(AnalyticsError::EmptyInput("ROUGE-L precision hypothesis"));
    }
    Ok(lcs_len(reference, hypothesis) as f64 / hypothesis.len() as f64)
}

pub trait Lemmatizer: Send + Sync {
    fn lemma(&self, token: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityLemmatizer;

impl Lemmatizer for IdentityLemmatizer {
    fn lemma(&self, token: &str) -> String {
        token.to_string()
    }
}

/// Per-question ROUGE-L precision of the question against its context, over
/// normalized and lemmatized tokens. Questions without tokens are skipped.
pub fn context_question_overlap(ds: &QADataset, n: &Normalizer, lemmatizer: &dyn Lemmatizer) -> Vec<(String, f64)> {
    let lemmas = |t: &str| -> Vec<String> { n.tokens(t).iter().map(|w| lemmatizer.lemma(w)).collect() };
    let mut out = Vec::new();
    for (_, _, p) in ds.paragraphs() {
        let ctx = lemmas(&p.context);
        for q in &p.qas {
            if let Ok(score) = rouge_l_precision(&ctx, &lemmas(&q.question)) {
                out.push((q.id.clone(), score));
            }
        }
    }
    out
}

/// Ordered `(label, markers)` pairs; a marker may span several words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionLexicon {
    pub entries: Vec<(String, Vec<String>)>,
}

impl Default for QuestionLexicon {
    fn default() -> Self {
        let e = |label: &str, markers: &[&str]| (label.to_string(), markers.iter().map(|m| m.to_string()).collect());
        Self {
            entries: vec![
                e(
                    "how-many-much",
                    &["how many", "how much", "zenbat", "zenbatek", "zenbatean"],
                ),
                e(
                    "what",
                    &[
                        "what", "which", "zer", "zein", "zeintzuk", "zerk", "zeri", "zertan", "zeinek",
                    ],
                ),
                e("when", &["when", "noiz", "noiztik", "noiz arte"]),
                e("where", &["where", "non", "nora", "nondik", "nongo"]),
                e(
                    "who",
                    &[
                        "who", "whom", "whose", "nor", "nork", "nori", "noren", "norekin", "nortzuk",
                    ],
                ),
                e("how", &["how", "nola"]),
                e("why", &["why", "zergatik", "zertarako"]),
            ],
        }
    }
}

pub fn question_type(question: &str, lexicon: &QuestionLexicon, n: &Normalizer) -> String {
    let tokens = n.tokens(question);
    for (label, markers) in &lexicon.entries {
        for m in markers {
            let mt = n.tokens(m);
            if !mt.is_empty() && tokens.windows(mt.len()).any(|w| w == mt.as_slice()) {
                return label.clone();
            }
        }
    }
    "other".into()
}

pub fn question_type_counts(ds: &QADataset, lexicon: &QuestionLexicon, n: &Normalizer) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for q in ds.questions() {
        *out.entry(question_type(&q.question, lexicon, n)).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub histogram: BTreeMap<usize, usize>,
}

/// Summarizes dependency depths of answers computed by an external parser.
pub fn depth_summary(depths: &HashMap<String, usize>) -> DepthSummary {
    let mut histogram = BTreeMap::new();
    for &d in depths.values() {
        *histogram.entry(d).or_default() += 1;
    }
    let total: usize = histogram.iter().map(|(d, c)| d * c).sum();
    DepthSummary {
        count: depths.len(),
        mean: (!depths.is_empty()).then(|| total as f64 / depths.len() as f64),
        histogram,
    }
}

/// Reads a JSON object mapping question ids to answer depths.
pub fn load_depths(path: &Path) -> Result<HashMap<String, usize>, AnalyticsError> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn corruption_examples() {
        assert_eq!(corruption_rate(&[("a b c", "b c"), ("x", "x")]).unwrap(), 0.0);
        let quarter = [("a b", "a"), ("a b", "b"), ("a b", "a b"), ("a b", "c")];
        assert_eq!(corruption_rate(&quarter).unwrap(), 0.25);
        assert!(corruption_rate::<&str, &str>(&[]).is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_precision(&toks("a b c d"), &toks("b d")).unwrap(), 1.0);
        assert_eq!(rouge_l_precision(&toks("a b c d"), &toks("x y")).unwrap(), 0.0);
        assert_eq!(rouge_l_precision(&toks("a b c d"), &toks("b c")).unwrap(), 1.0);
        assert_eq!(rouge_l_precision(&toks("a b c d"), &toks("d c b a")).unwrap(), 0.25);
        assert!(rouge_l_precision(&toks("a"), &[]).is_err());
    }

    #[test]
    fn question_type_examples() {
        let lx = QuestionLexicon::default();
        let n = Normalizer::basque();
        assert_eq!(question_type("Nola deitzen da errusiar estepa?", &lx, &n), "how");
        assert_eq!(question_type("Zenbat urte ditu?", &lx, &n), "how-many-much");
        assert_eq!(question_type("Azaldu hori.", &lx, &n), "other");
        assert_eq!(question_type("How many years?", &lx, &n), "how-many-much");
        assert_eq!(question_type("How old is it?", &lx, &n), "how");
        assert_eq!(question_type("Zein da hiriburua?", &lx, &n), "what");
    }

    #[test]
    fn depth_hook() {
        let d: HashMap<String, usize> = [("a".into(), 2), ("b".into(), 4), ("c".into(), 2)].into();
        let s = depth_summary(&d);
        assert_eq!(s.count, 3);
        assert!((s.mean.unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.histogram, BTreeMap::from([(2, 2), (4, 1)]));
        assert_eq!(depth_summary(&HashMap::new()).mean, None);
    }

    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        // longest subsequence of b, by subset enumeration, that is also one of a
        let is_sub = |sub: &[u8], of: &[u8]| {
            let mut it = of.iter();
            sub.iter().all(|x| it.any(|y| y == x))
        };
        (0u32..1 << b.len())
            .map(|mask| {
                (0..b.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| b[i])
                    .collect::<Vec<_>>()
            })
            .filter(|s| is_sub(s, a))
            .map(|s| s.len())
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in proptest::collection::vec(0u8..3, 0..8), b in proptest::collection::vec(0u8..3, 0..8)) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn appending_to_reference_never_lowers_precision(
            r in proptest::collection::vec(0u8..4, 0..10),
            extra in proptest::collection::vec(0u8..4, 0..5),
            h in proptest::collection::vec(0u8..4, 1..6),
        ) {
            let base = rouge_l_precision(&r, &h).unwrap();
            let mut longer = r.clone();
            longer.extend(extra);
            prop_assert!(rouge_l_precision(&longer, &h).unwrap() >= base);
        }
    }
}
