//! Answer alignment: find the span of a translated sentence that best
//! matches an answer translated out of context.
//!
//! Candidates are all contiguous runs of whitespace tokens. The embedding
//! strategy pools the sentence's unit vectors over each candidate and picks
//! the candidate with the smallest cosine distance to the pooled answer
//! vector. A verbatim occurrence short-circuits the search.
//!
//! Ties are broken by earliest character start, then by shortest span, so
//! the choice never depends on enumeration order or worker count.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnswerSpan, Paragraph};
use crate::embed::{
    cosine_distance, embed_text, pool_span, sum_into, EmbedError, EmbeddingProvider, UnitEmbeddingSequence,
};
use crate::segment::{join_unit, SentenceMap};
use crate::text::{char_len, find_all_char, CharIndex};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cannot pick the longest of zero answers")]
    NoAnswers,
    #[error("question {question_id}: {source}")]
    Provider {
        question_id: String,
        #[source]
        source: EmbedError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: (usize, usize),
}

/// Maximal runs of non-whitespace with their code-point spans.
pub fn tokenize(sentence: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    let mut pos = 0;
    for c in sentence.chars() {
        if c.is_whitespace() {
            if let Some((s, t)) = cur.take() {
                out.push(Token {
                    text: t,
                    span: (s, pos),
                });
            }
        } else {
            cur.get_or_insert_with(|| (pos, String::new())).1.push(c);
        }
        pos += 1;
    }
    if let Some((s, t)) = cur {
        out.push(Token {
            text: t,
            span: (s, pos),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSpan {
    /// First and last token index, inclusive.
    pub token_range: (usize, usize),
    pub char_span: (usize, usize),
    pub text: String,
}

impl CandidateSpan {
    pub fn token_len(&self) -> usize {
        self.token_range.1 - self.token_range.0 + 1
    }

    fn order_key(&self) -> (usize, usize) {
        (self.char_span.0, self.char_span.1 - self.char_span.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Encode the sentence once and pool each candidate in context.
    #[default]
    InContext,
    /// Encode every candidate as its own text.
    Standalone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Longest candidate in tokens; `None` means unbounded.
    pub max_ngram_tokens: Option<usize>,
    /// Keep candidates whose token count lies within
    /// `[lo * |answer|, hi * |answer|]` (bounds clamped to at least one token).
    pub length_window: Option<(f64, f64)>,
    pub literal_shortcircuit: bool,
    pub pooling: PoolingMode,
    /// Number of ranked candidates kept for diagnostics.
    pub top_k: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            max_ngram_tokens: None,
            length_window: None,
            literal_shortcircuit: true,
            pooling: PoolingMode::InContext,
            top_k: 0,
        }
    }
}

pub fn enumerate_ngrams(
    sentence: &str,
    tokens: &[Token],
    config: &AlignConfig,
    answer_tokens: usize,
) -> Vec<CandidateSpan> {
    let n = tokens.len();
    let max_len = config.max_ngram_tokens.map_or(n, |m| m.max(1).min(n));
    let (min_len, max_len) = match config.length_window {
        Some((lo, hi)) => {
            let a = answer_tokens as f64;
            let min = ((lo * a).ceil() as usize).max(1);
            let max = ((hi * a).floor() as usize).max(1).min(max_len);
            (min, max)
        }
        None => (1, max_len),
    };
    let idx = CharIndex::new(sentence);
    let mut out = Vec::new();
    for i in 0..n {
        for len in min_len..=max_len {
            let j = i + len - 1;
            if j >= n {
                break;
            }
            let span = (tokens[i].span.0, tokens[j].span.1);
            out.push(CandidateSpan {
                token_range: (i, j),
                char_span: span,
                text: idx
                    .slice(span.0, span.1)
                    .expect("token spans lie in sentence")
                    .to_string(),
            });
        }
    }
    out
}

/// Longest answer by code-point length; ties go to the lowest offset.
pub fn pick_longest(answers: &[AnswerSpan]) -> Result<&AnswerSpan, AlignError> {
    answers
        .iter()
        .min_by(|a, b| {
            char_len(&b.text)
                .cmp(&char_len(&a.text))
                .then(a.answer_start.cmp(&b.answer_start))
        })
        .ok_or(AlignError::NoAnswers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Literal,
    Embedding,
    LevenshteinBaseline,
    Unaligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Verbatim matches only.
    Literal,
    /// Character edit distance over the candidate spans.
    Levenshtein,
    /// Cosine distance between pooled embeddings.
    Embedding,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Literal => "literal",
            Strategy::Levenshtein => "levenshtein-baseline",
            Strategy::Embedding => "embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: CandidateSpan,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub method: Method,
    pub span: Option<CandidateSpan>,
    /// Cosine distance (embedding), 0 (literal), or edit distance (baseline);
    /// absent when unaligned.
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranked_candidates: Vec<ScoredCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Alignment {
    pub fn unaligned(reason: impl Into<String>) -> Self {
        Self {
            method: Method::Unaligned,
            span: None,
            score: None,
            ranked_candidates: Vec::new(),
            reason: Some(reason.into()),
        }
    }

    pub fn is_aligned(&self) -> bool {
        self.method != Method::Unaligned
    }
}

fn cmp_scored(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.candidate.order_key().cmp(&b.candidate.order_key()))
}

fn pick(method: Method, mut scored: Vec<ScoredCandidate>, top_k: usize) -> Alignment {
    let Some(best) = scored.iter().min_by(|a, b| cmp_scored(a, b)).cloned() else {
        return Alignment::unaligned("no candidate spans");
    };
    let ranked = if top_k > 0 {
        scored.sort_by(cmp_scored);
        scored.truncate(top_k);
        scored
    } else {
        Vec::new()
    };
    Alignment {
        method,
        span: Some(best.candidate),
        score: Some(best.score),
        ranked_candidates: ranked,
        reason: None,
    }
}

/// Verbatim occurrence of `answer`; among several, the one whose relative
/// position is closest to `hint` (a fraction of the sentence length), or
/// the first when there is no hint.
fn literal_match(sentence: &str, answer: &str, hint: Option<f64>) -> Option<CandidateSpan> {
    let hits = find_all_char(sentence, answer);
    let first = *hits.first()?;
    let start = match hint {
        Some(h) if hits.len() > 1 => {
            let len = char_len(sentence).max(1) as f64;
            let mut best = first;
            let mut best_d = f64::INFINITY;
            for &s in &hits {
                let d = (s as f64 / len - h).abs();
                if d < best_d {
                    best = s;
                    best_d = d;
                }
            }
            best
        }
        _ => first,
    };
    let end = start + char_len(answer);
    let tokens = tokenize(sentence);
    let first_tok = tokens.iter().position(|t| t.span.1 > start)?;
    let last_tok = tokens.iter().rposition(|t| t.span.0 < end)?;
    Some(CandidateSpan {
        token_range: (first_tok, last_tok),
        char_span: (start, end),
        text: answer.to_string(),
    })
}

fn literal_alignment(span: CandidateSpan) -> Alignment {
    Alignment {
        method: Method::Literal,
        span: Some(span),
        score: Some(0.0),
        ranked_candidates: Vec::new(),
        reason: None,
    }
}

/// Scores every candidate against a precomputed sentence encoding.
fn embedding_scores(
    seq: &UnitEmbeddingSequence,
    candidates: &[CandidateSpan],
    answer_vec: &[f64],
) -> Vec<ScoredCandidate> {
    let mut out = Vec::with_capacity(candidates.len());
    let mut acc = vec![0.0; seq.dim];
    let mut run: Option<(usize, usize, usize)> = None; // (start token, lo, hi)
    let mut mean = vec![0.0; seq.dim];
    for c in candidates {
        let range = seq.overlapping(c.char_span.0, c.char_span.1);
        // candidates sharing a start token extend the running sum front to
        // back, which reproduces `pool_span` bit for bit
        let (lo, mut hi) = match run {
            Some((tok, lo, hi)) if tok == c.token_range.0 && lo == range.start && hi <= range.end => (lo, hi),
            _ => {
                acc.iter_mut().for_each(|a| *a = 0.0);
                (range.start, range.start)
            }
        };
        while hi < range.end {
            sum_into(&mut acc, &seq.vectors[hi]);
            hi += 1;
        }
        run = Some((c.token_range.0, lo, hi));
        if range.is_empty() {
            continue;
        }
        let n = (hi - lo) as f64;
        for (m, a) in mean.iter_mut().zip(&acc) {
            *m = a / n;
        }
        if let Ok(d) = cosine_distance(&mean, answer_vec) {
            out.push(ScoredCandidate {
                candidate: c.clone(),
                score: d,
            });
        }
    }
    out
}

fn full_span_vector(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, EmbedError> {
    let seq = embed_text(text, provider)?;
    Ok(pool_span(&seq, (0, char_len(text)))?.vector)
}

fn embedding_alignment(
    sentence: &str,
    sentence_seq: Option<&UnitEmbeddingSequence>,
    candidates: &[CandidateSpan],
    answer: &str,
    provider: &dyn EmbeddingProvider,
    config: &AlignConfig,
) -> Result<Alignment, EmbedError> {
    let answer_vec = full_span_vector(answer, provider)?;
    let scored = match config.pooling {
        PoolingMode::InContext => {
            let owned;
            let seq = match sentence_seq {
                Some(s) => s,
                None => {
                    owned = embed_text(sentence, provider)?;
                    &owned
                }
            };
            embedding_scores(seq, candidates, &answer_vec)
        }
        PoolingMode::Standalone => {
            let mut out = Vec::with_capacity(candidates.len());
            for c in candidates {
                let v = full_span_vector(&c.text, provider)?;
                if let Ok(d) = cosine_distance(&v, &answer_vec) {
                    out.push(ScoredCandidate {
                        candidate: c.clone(),
                        score: d,
                    });
                }
            }
            out
        }
    };
    Ok(pick(Method::Embedding, scored, config.top_k))
}

fn prepare(sentence: &str, answer: &str, config: &AlignConfig) -> Result<Vec<CandidateSpan>, Alignment> {
    if answer.is_empty() {
        return Err(Alignment::unaligned("translated answer is empty"));
    }
    let tokens = tokenize(sentence);
    if tokens.is_empty() {
        return Err(Alignment::unaligned("sentence has no tokens"));
    }
    let answer_tokens = tokenize(answer).len();
    Ok(enumerate_ngrams(sentence, &tokens, config, answer_tokens))
}

/// Embedding alignment of `translated_answer` within `sentence`.
pub fn align_answer(
    sentence: &str,
    translated_answer: &str,
    provider: &dyn EmbeddingProvider,
    config: &AlignConfig,
) -> Result<Alignment, EmbedError> {
    align_answer_hinted(sentence, translated_answer, None, provider, config)
}

/// As [`align_answer`], with a relative-position hint used only to choose
/// among several verbatim occurrences.
pub fn align_answer_hinted(
    sentence: &str,
    translated_answer: &str,
    hint: Option<f64>,
    provider: &dyn EmbeddingProvider,
    config: &AlignConfig,
) -> Result<Alignment, EmbedError> {
    align_inner(
        sentence,
        None,
        translated_answer,
        hint,
        Strategy::Embedding,
        Some(provider),
        config,
    )
}

/// Edit-distance baseline over the same candidate set.
pub fn levenshtein_align(sentence: &str, translated_answer: &str, config: &AlignConfig) -> Alignment {
    align_inner(
        sentence,
        None,
        translated_answer,
        None,
        Strategy::Levenshtein,
        None,
        config,
    )
    .expect("baseline never calls a provider")
}

/// Verbatim-only baseline.
pub fn literal_align(sentence: &str, translated_answer: &str) -> Alignment {
    let answer = translated_answer.trim();
    if answer.is_empty() {
        return Alignment::unaligned("translated answer is empty");
    }
    literal_match(sentence, answer, None)
        .map(literal_alignment)
        .unwrap_or_else(|| Alignment::unaligned("answer does not occur verbatim"))
}

fn align_inner(
    sentence: &str,
    sentence_seq: Option<&UnitEmbeddingSequence>,
    translated_answer: &str,
    hint: Option<f64>,
    strategy: Strategy,
    provider: Option<&dyn EmbeddingProvider>,
    config: &AlignConfig,
) -> Result<Alignment, EmbedError> {
    let answer = translated_answer.trim();
    if strategy == Strategy::Literal {
        return Ok(literal_align(sentence, answer));
    }
    let candidates = match prepare(sentence, answer, config) {
        Ok(c) => c,
        Err(unaligned) => return Ok(unaligned),
    };
    if config.literal_shortcircuit {
        if let Some(span) = literal_match(sentence, answer, hint) {
            return Ok(literal_alignment(span));
        }
    }
    match strategy {
        Strategy::Embedding => {
            let provider = provider.expect("embedding strategy needs a provider");
            embedding_alignment(sentence, sentence_seq, &candidates, answer, provider, config)
        }
        Strategy::Levenshtein => {
            let scored = candidates
                .into_iter()
                .map(|c| {
                    let score = strsim::levenshtein(&c.text, answer) as f64;
                    ScoredCandidate { candidate: c, score }
                })
                .collect();
            Ok(pick(Method::LevenshteinBaseline, scored, config.top_k))
        }
        Strategy::Literal => unreachable!(),
    }
}

/// Alignment of one answerable question, located within its sentence unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub question_id: String,
    /// Sentence unit `(first, last)`, inclusive.
    pub unit: Option<(usize, usize)>,
    /// Translated unit text that was searched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_answer: Option<String>,
    #[serde(flatten)]
    pub alignment: Alignment,
}

/// Aligns every answerable question of a paragraph. `sentences[i]` is the
/// translation of sentence `i`; `answers` maps question ids to the
/// translation of their longest answer.
pub fn align_paragraph(
    paragraph: &Paragraph,
    map: &SentenceMap,
    sentences: &[Option<String>],
    answers: &BTreeMap<String, Option<String>>,
    strategy: Strategy,
    provider: &dyn EmbeddingProvider,
    config: &AlignConfig,
) -> Result<Vec<AlignmentResult>, AlignError> {
    let seps = &map.segmentation.separators;
    let mut encoded: HashMap<(usize, usize), UnitEmbeddingSequence> = HashMap::new();
    let mut out = Vec::new();
    for q in paragraph.qas.iter().filter(|q| !q.is_impossible) {
        let unaligned = |unit, reason: String| AlignmentResult {
            question_id: q.id.clone(),
            unit,
            unit_text: None,
            translated_answer: None,
            alignment: Alignment::unaligned(reason),
        };
        let Some(a) = map.assignment(&q.id) else {
            let reason = map.violations.iter().find(|v| v.question_id == q.id).map_or_else(
                || "question has no sentence assignment".to_string(),
                |v| v.reason.clone(),
            );
            out.push(unaligned(None, reason));
            continue;
        };
        let unit = (a.first, a.last);
        let parts: Option<Vec<&str>> = sentences
            .get(a.first..=a.last)
            .and_then(|s| s.iter().map(|t| t.as_deref()).collect());
        let Some(parts) = parts else {
            out.push(unaligned(Some(unit), "missing sentence translation".into()));
            continue;
        };
        let Some(answer) = answers.get(&q.id).and_then(|t| t.as_deref()) else {
            out.push(unaligned(Some(unit), "missing answer translation".into()));
            continue;
        };
        let unit_text = join_unit(parts, &seps[a.first..a.last]);
        let source_len = char_len(&map.unit_text(a)).max(1);
        let hint = Some(a.local_answer_start as f64 / source_len as f64);

        let seq =
            if strategy == Strategy::Embedding && config.pooling == PoolingMode::InContext && !unit_text.is_empty() {
                if let std::collections::hash_map::Entry::Vacant(e) = encoded.entry(unit) {
                    let s = embed_text(&unit_text, provider).map_err(|source| AlignError::Provider {
                        question_id: q.id.clone(),
                        source,
                    })?;
                    e.insert(s);
                }
                encoded.get(&unit)
            } else {
                None
            };
        let alignment =
            align_inner(&unit_text, seq, answer, hint, strategy, Some(provider), config).map_err(|source| {
                AlignError::Provider {
                    question_id: q.id.clone(),
                    source,
                }
            })?;
        out.push(AlignmentResult {
            question_id: q.id.clone(),
            unit: Some(unit),
            unit_text: Some(unit_text),
            translated_answer: Some(answer.to_string()),
            alignment,
        });
    }
    Ok(out)
}
