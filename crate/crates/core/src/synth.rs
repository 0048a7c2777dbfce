//! Seeded synthetic data: sample datasets, a perturbing mock MT engine, and
//! corrupted-answer corpora for comparing aligners.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::align::{align_answer, levenshtein_align, literal_align, tokenize, AlignConfig, Alignment};
use crate::dataset::{AnswerSpan, Article, Paragraph, QADataset, Question};
use crate::embed::EmbeddingProvider;
use crate::exec::Execution;
use crate::text::{char_len, char_slice};
use crate::translate::{ClientError, MtClient};

const SYLLABLES: &[&str] = &[
    "ba", "be", "bi", "da", "de", "di", "ga", "ge", "go", "ka", "ke", "ko", "la", "le", "lu", "ma", "me", "mi", "na",
    "ne", "no", "ra", "re", "ri", "sa", "se", "su", "ta", "te", "tu", "tza", "tze", "txa", "txo", "za", "ze", "zu",
    "ar", "en", "or", "ur", "ez", "an", "ak", "et",
];

fn word(rng: &mut impl Rng, min_len: usize) -> String {
    let mut w = String::new();
    while char_len(&w) < min_len || (char_len(&w) < min_len + 4 && rng.random_bool(0.4)) {
        w.push_str(SYLLABLES.choose(rng).expect("non-empty"));
    }
    w
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// A random `(sentence words, sentence text)` pair.
fn sentence(rng: &mut impl Rng) -> (Vec<String>, String) {
    let n = rng.random_range(4..=12);
    let mut words: Vec<String> = (0..n).map(|_| word(rng, 2)).collect();
    if rng.random_bool(0.15) {
        let at = rng.random_range(1..n);
        words.insert(at, "Dr.".into());
        words.insert(at + 1, capitalize(&word(rng, 3)));
    }
    if rng.random_bool(0.2) {
        let at = rng.random_range(0..words.len() - 1);
        words[at].push(',');
    }
    words[0] = capitalize(&words[0]);
    let end = *[".", ".", ".", "!", "?"].choose(rng).expect("non-empty");
    let text = format!("{}{end}", words.join(" "));
    (words, text)
}

/// A seeded SQuAD-format dataset of `n_paragraphs` paragraphs with several
/// answerable and impossible questions each.
pub fn sample_dataset(n_paragraphs: usize, seed: u64) -> QADataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::new();
    let mut qid = 0usize;
    let per_article = 5;
    for a in 0..n_paragraphs.div_ceil(per_article) {
        let mut paragraphs = Vec::new();
        for _ in 0..per_article.min(n_paragraphs - a * per_article) {
            let n_sent = rng.random_range(1..=5);
            let mut context = String::new();
            let mut sentence_starts = Vec::new();
            if rng.random_bool(0.05) {
                context.push(' ');
            }
            for i in 0..n_sent {
                if i > 0 {
                    context.push_str(["  ", " ", " ", "\n"].choose(&mut rng).expect("non-empty"));
                }
                let (_, text) = sentence(&mut rng);
                sentence_starts.push((char_len(&context), text.clone()));
                context.push_str(&text);
            }
            let mut qas = Vec::new();
            for _ in 0..rng.random_range(1..=4) {
                qid += 1;
                let id = format!("q{qid:05}");
                let question = format!("{} {}?", capitalize(&word(&mut rng, 3)), word(&mut rng, 3));
                if rng.random_bool(0.2) {
                    qas.push(Question::impossible(id, question));
                    continue;
                }
                let (start, sent) = sentence_starts.choose(&mut rng).expect("non-empty").clone();
                let toks = tokenize(&sent);
                let i = rng.random_range(0..toks.len());
                let j = rng.random_range(i..toks.len().min(i + 4));
                let (s, e) = (toks[i].span.0, toks[j].span.1);
                let mut answers = vec![AnswerSpan::new(char_slice(&sent, s, e).expect("token span"), start + s)];
                if j > i && rng.random_bool(0.5) {
                    let t = &toks[i];
                    answers.push(AnswerSpan::new(t.text.clone(), start + t.span.0));
                }
                qas.push(Question::answerable(id, question, answers));
            }
            paragraphs.push(Paragraph::new(context, qas));
        }
        articles.push(Article::new(format!("Article {a}"), paragraphs));
    }
    QADataset::new("v2.0", articles)
}

/// Mock MT engine whose output is a seeded, deterministic function of the
/// input: tokens are re-inflected, dropped, upper-cased or padded with
/// extra words and punctuation.
#[derive(Debug, Clone, Copy)]
pub struct PerturbingClient {
    seed: u64,
}

impl PerturbingClient {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn perturb(&self, text: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(xxh3_64_with_seed(text.as_bytes(), self.seed));
        if rng.random_bool(0.02) {
            return String::new();
        }
        let mut out: Vec<String> = Vec::new();
        for tok in text.split_whitespace() {
            let r: f64 = rng.random();
            if r < 0.08 && !out.is_empty() {
                continue;
            }
            let mut t = tok.to_string();
            if r < 0.35 {
                t.push_str(
                    ["a", "ak", "an", "ean", "etik", "ko"]
                        .choose(&mut rng)
                        .expect("non-empty"),
                );
            } else if r < 0.4 {
                t = t.to_uppercase();
            }
            out.push(t);
            if rng.random_bool(0.05) {
                out.push(
                    ["eta", "(bai)", "«hau»", ",", "ere"]
                        .choose(&mut rng)
                        .expect("non-empty")
                        .to_string(),
                );
            }
        }
        if rng.random_bool(0.1) {
            out.insert(0, "Beraz,".into());
        }
        let joined = out.join(" ");
        if rng.random_bool(0.1) {
            format!(" {joined}\n")
        } else {
            joined
        }
    }
}

impl MtClient for PerturbingClient {
    fn engine_id(&self) -> String {
        format!("perturbing/s{}", self.seed)
    }

    fn translate(&self, texts: &[String], _: &str, _: &str) -> Result<Vec<String>, ClientError> {
        Ok(texts.iter().map(|t| self.perturb(t)).collect())
    }
}

/// A target sentence, the gold answer span inside it, and the answer as
/// translated on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub sentence: String,
    pub gold_span: (usize, usize),
    pub translated_answer: String,
}

impl Triplet {
    pub fn gold_text(&self) -> &str {
        char_slice(&self.sentence, self.gold_span.0, self.gold_span.1).expect("gold span inside sentence")
    }
}

const SUFFIXES: &[&str] = &[
    "a", "ak", "an", "ek", "en", "ko", "ra", "tik", "rekin", "aren", "ean", "etan",
];

fn random_suffix(rng: &mut impl Rng, len: usize) -> String {
    let fits: Vec<&&str> = SUFFIXES.iter().filter(|s| s.len() == len).collect();
    match fits.choose(rng) {
        Some(s) if rng.random_bool(0.5) => s.to_string(),
        _ => (0..len)
            .map(|_| *b"aeiouknrtz".choose(rng).expect("non-empty") as char)
            .collect(),
    }
}

fn perturb_token(rng: &mut impl Rng, tok: &str) -> String {
    let chars: Vec<char> = tok.chars().collect();
    let k = rng.random_range(1..=4);
    if rng.random_bool(0.5) || chars.len() < 4 {
        format!("{tok}{}", random_suffix(rng, k))
    } else {
        // replace up to k trailing characters, keeping a stem of at least 3
        let m = k.min(chars.len() - 3);
        let stem: String = chars[..chars.len() - m].iter().collect();
        format!("{stem}{}", random_suffix(rng, k))
    }
}

/// `n` seeded triplets whose translated answer differs from the gold span by
/// a suffix change on one or two tokens and never occurs verbatim.
pub fn corruption_corpus(n: usize, seed: u64) -> Vec<Triplet> {
    corpus(n, seed, true)
}

/// As [`corruption_corpus`] with the translated answer equal to the gold.
pub fn clean_corpus(n: usize, seed: u64) -> Vec<Triplet> {
    corpus(n, seed, false)
}

fn corpus(n: usize, seed: u64, corrupt: bool) -> Vec<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.random_range(6..=14);
        let mut seen = HashSet::new();
        let mut words = Vec::with_capacity(len);
        while words.len() < len {
            let w = word(&mut rng, 5);
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let sentence = format!("{}.", words.join(" "));
        let toks = tokenize(&sentence);
        let span_len = rng.random_range(1..=4);
        let first = rng.random_range(0..toks.len() - span_len);
        let last = first + span_len - 1;
        let gold_span = (toks[first].span.0, toks[last].span.1);
        let gold: Vec<String> = toks[first..=last].iter().map(|t| t.text.clone()).collect();
        let translated_answer = if corrupt {
            let mut answer = gold.clone();
            let k = rng.random_range(1..=2usize.min(span_len));
            let mut idx: Vec<usize> = (0..span_len).collect();
            for _ in 0..k {
                let pick = rng.random_range(0..idx.len());
                let i = idx.swap_remove(pick);
                answer[i] = perturb_token(&mut rng, &gold[i]);
            }
            let a = answer.join(" ");
            if sentence.contains(&a) {
                continue;
            }
            a
        } else {
            gold.join(" ")
        };
        out.push(Triplet {
            sentence,
            gold_span,
            translated_answer,
        });
    }
    out
}

pub enum Aligner<'a> {
    Literal,
    Levenshtein,
    Embedding(&'a dyn EmbeddingProvider),
}

impl Aligner<'_> {
    pub fn name(&self) -> String {
        match self {
            Aligner::Literal => "literal".into(),
            Aligner::Levenshtein => "levenshtein-baseline".into(),
            Aligner::Embedding(p) => format!("embedding({})", p.model_id()),
        }
    }

    pub fn align(&self, t: &Triplet, config: &AlignConfig) -> Alignment {
        match self {
            Aligner::Literal => literal_align(&t.sentence, &t.translated_answer),
            Aligner::Levenshtein => levenshtein_align(&t.sentence, &t.translated_answer, config),
            Aligner::Embedding(p) => align_answer(&t.sentence, &t.translated_answer, *p, config)
                .unwrap_or_else(|e| Alignment::unaligned(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub strategy: String,
    pub recovered: usize,
    pub total: usize,
    pub rate: f64,
}

/// Exact-span recovery of each aligner over `corpus`.
pub fn compare_aligners(
    corpus: &[Triplet],
    aligners: &[Aligner<'_>],
    config: &AlignConfig,
    execution: Execution,
) -> Vec<RecoveryRow> {
    aligners
        .iter()
        .map(|a| {
            let hits = execution.map(corpus, |t| {
                a.align(t, config).span.is_some_and(|s| s.char_span == t.gold_span)
            });
            let recovered = hits.iter().filter(|h| **h).count();
            RecoveryRow {
                strategy: a.name(),
                recovered,
                total: corpus.len(),
                rate: if corpus.is_empty() {
                    0.0
                } else {
                    recovered as f64 / corpus.len() as f64
                },
            }
        })
        .collect()
}
