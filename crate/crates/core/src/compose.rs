//! Reassembly of translated sentences into target contexts, answer
//! relocation, and boundary clean-up.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignmentResult, Method};
use crate::dataset::{AnswerSpan, Article, Paragraph, QADataset, Question};
use crate::segment::Segmentation;
use crate::text::{char_len, CharIndex};

pub const DEFAULT_PUNCT: &str = ",.;:!?()[]\"'«»¿¡";

const PAIRS: &[(char, char)] = &[
    ('(', ')'),
    ('[', ']'),
    ('{', '}'),
    ('«', '»'),
    ('“', '”'),
    ('‘', '’'),
    ('"', '"'),
    ('\'', '\''),
    ('¿', '?'),
    ('¡', '!'),
];

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("{sentences} sentences need {} separators, got {separators}", sentences.saturating_sub(1))]
    LengthMismatch { sentences: usize, separators: usize },
    #[error("question {question_id}: {message}")]
    Relocation { question_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JoinMode {
    /// Reuse the whitespace found between source sentences.
    #[default]
    SourceSeparators,
    /// Join with one space and drop leading/trailing whitespace.
    SingleSpace,
}

impl JoinMode {
    /// The layout composition will use for `seg`.
    pub fn layout(self, seg: &Segmentation) -> Segmentation {
        match self {
            JoinMode::SourceSeparators => seg.clone(),
            JoinMode::SingleSpace => Segmentation {
                sentences: seg.sentences.clone(),
                separators: vec![" ".into(); seg.separators.len()],
                leading: String::new(),
                trailing: String::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PlausibleAnswers {
    /// Copy `plausible_answers` of impossible questions unchanged.
    Keep,
    /// Omit them; their offsets refer to the source context.
    #[default]
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeConfig {
    pub punct_set: String,
    pub join: JoinMode,
    pub plausible_answers: PlausibleAnswers,
    /// Also clean up verbatim (literal) matches.
    pub postprocess_literal: bool,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            punct_set: DEFAULT_PUNCT.into(),
            join: JoinMode::default(),
            plausible_answers: PlausibleAnswers::default(),
            postprocess_literal: false,
        }
    }
}

/// Interleaves sentences with `separators`, returning the context and the
/// code-point span of each sentence in it.
pub fn compose_context(
    sentences: &[String],
    separators: &[String],
) -> Result<(String, Vec<(usize, usize)>), ComposeError> {
    compose_with(sentences, separators, "", "")
}

/// As [`compose_context`], wrapped in the leading and trailing whitespace
/// of `layout`.
pub fn compose_segmented(
    sentences: &[String],
    layout: &Segmentation,
) -> Result<(String, Vec<(usize, usize)>), ComposeError> {
    compose_with(sentences, &layout.separators, &layout.leading, &layout.trailing)
}

fn compose_with(
    sentences: &[String],
    separators: &[String],
    leading: &str,
    trailing: &str,
) -> Result<(String, Vec<(usize, usize)>), ComposeError> {
    if separators.len() != sentences.len().saturating_sub(1) {
        return Err(ComposeError::LengthMismatch {
            sentences: sentences.len(),
            separators: separators.len(),
        });
    }
    let mut out = String::from(leading);
    let mut pos = char_len(leading);
    let mut offsets = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push_str(&separators[i - 1]);
            pos += char_len(&separators[i - 1]);
        }
        let len = char_len(s);
        offsets.push((pos, pos + len));
        out.push_str(s);
        pos += len;
    }
    out.push_str(trailing);
    Ok((out, offsets))
}

/// Maps an aligned span from unit-local to context offsets.
pub fn relocate_answer(
    result: &AlignmentResult,
    unit_offset: (usize, usize),
    context: &str,
) -> Result<AnswerSpan, ComposeError> {
    let fail = |message: String| ComposeError::Relocation {
        question_id: result.question_id.clone(),
        message,
    };
    let span = result
        .alignment
        .span
        .as_ref()
        .ok_or_else(|| fail("cannot relocate an unaligned result".into()))?;
    let start = unit_offset.0 + span.char_span.0;
    let end = unit_offset.0 + span.char_span.1;
    if end > unit_offset.1 {
        return Err(fail(format!("span ends at {end}, past its unit end {}", unit_offset.1)));
    }
    match CharIndex::new(context).slice(start, end) {
        Some(t) if t == span.text => Ok(AnswerSpan::new(span.text.clone(), start)),
        Some(t) => Err(fail(format!(
            "relocated text {t:?} differs from aligned text {:?}",
            span.text
        ))),
        None => Err(fail(format!("span ({start}, {end}) exceeds the context"))),
    }
}

fn pair_closer(c: char) -> Option<char> {
    PAIRS.iter().find(|p| p.0 == c).map(|p| p.1)
}

fn pair_opener(c: char) -> Option<char> {
    PAIRS.iter().find(|p| p.1 == c).map(|p| p.0)
}

/// Strips punctuation from both ends of `span`, keeping an edge character
/// whose partner occurs inside the span.
pub fn postprocess_answer(span: &AnswerSpan, context: &str, punct_set: &str) -> AnswerSpan {
    let chars: Vec<char> = span.text.chars().collect();
    let (mut lo, mut hi) = (0, chars.len());
    loop {
        let before = (lo, hi);
        if lo < hi && punct_set.contains(chars[lo]) {
            let keep = pair_closer(chars[lo]).is_some_and(|close| chars[lo + 1..hi].contains(&close));
            if !keep {
                lo += 1;
            }
        }
        if lo < hi && punct_set.contains(chars[hi - 1]) {
            let keep = pair_opener(chars[hi - 1]).is_some_and(|open| chars[lo..hi - 1].contains(&open));
            if !keep {
                hi -= 1;
            }
        }
        if (lo, hi) == before {
            break;
        }
    }
    if lo >= hi {
        return span.clone();
    }
    let out = AnswerSpan {
        text: chars[lo..hi].iter().collect(),
        answer_start: span.answer_start + lo,
        extra: span.extra.clone(),
    };
    debug_assert_eq!(
        CharIndex::new(context).slice(out.answer_start, out.end()),
        Some(out.text.as_str())
    );
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drop {
    pub question_id: String,
    /// Position of the paragraph in document order.
    pub paragraph_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropManifest {
    pub drops: Vec<Drop>,
}

impl DropManifest {
    pub fn is_empty(&self) -> bool {
        self.drops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.drops.len()
    }

    /// Tab-separated `question_id, paragraph_index, reason`, one per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("question_id\tparagraph_index\treason\n");
        for d in &self.drops {
            let reason = d.reason.replace(['\t', '\n'], " ");
            let _ = writeln!(out, "{}\t{}\t{}", d.question_id, d.paragraph_index, reason);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedParagraph {
    pub context: String,
    pub sentence_offsets: Vec<(usize, usize)>,
    pub qas: Vec<Question>,
    /// `(question_id, reason)` for questions left out.
    pub dropped: Vec<(String, String)>,
}

/// Builds the target paragraph. `sentences` are the final target sentence
/// texts (one per source sentence), `questions` maps ids to translated
/// question text, and `alignments` holds one result per answerable question.
pub fn compose_paragraph(
    source: &Paragraph,
    layout: &Segmentation,
    sentences: &[String],
    questions: &BTreeMap<String, Option<String>>,
    alignments: &[AlignmentResult],
    config: &ComposeConfig,
) -> Result<ComposedParagraph, ComposeError> {
    let (context, offsets) = compose_segmented(sentences, layout)?;
    let by_id: HashMap<&str, &AlignmentResult> = alignments.iter().map(|r| (r.question_id.as_str(), r)).collect();
    let mut qas = Vec::new();
    let mut dropped = Vec::new();
    for q in &source.qas {
        let Some(text) = questions.get(&q.id).cloned().flatten() else {
            dropped.push((q.id.clone(), "missing question translation".into()));
            continue;
        };
        if q.is_impossible {
            qas.push(Question {
                id: q.id.clone(),
                question: text,
                answers: Vec::new(),
                is_impossible: true,
                plausible_answers: match config.plausible_answers {
                    PlausibleAnswers::Keep => q.plausible_answers.clone(),
                    PlausibleAnswers::Drop => None,
                },
                extra: q.extra.clone(),
            });
            continue;
        }
        let Some(result) = by_id.get(q.id.as_str()) else {
            dropped.push((q.id.clone(), "no alignment result".into()));
            continue;
        };
        let (method, unit) = (result.alignment.method, result.unit);
        let (Some((first, last)), true) = (unit, method != Method::Unaligned) else {
            let reason = result.alignment.reason.clone().unwrap_or_else(|| "unaligned".into());
            dropped.push((q.id.clone(), reason));
            continue;
        };
        let unit_offset = offsets
            .get(first)
            .zip(offsets.get(last))
            .map(|(a, b)| (a.0, b.1))
            .ok_or_else(|| ComposeError::Relocation {
                question_id: q.id.clone(),
                message: format!("unit ({first}, {last}) outside {} sentences", offsets.len()),
            })?;
        let mut answer = relocate_answer(result, unit_offset, &context)?;
        if method != Method::Literal || config.postprocess_literal {
            answer = postprocess_answer(&answer, &context, &config.punct_set);
        }
        qas.push(Question {
            id: q.id.clone(),
            question: text,
            answers: vec![answer],
            is_impossible: false,
            plausible_answers: None,
            extra: q.extra.clone(),
        });
    }
    Ok(ComposedParagraph {
        context,
        sentence_offsets: offsets,
        qas,
        dropped,
    })
}

/// Assembles the target dataset in source order. `composed` holds one
/// paragraph per source paragraph, in document order.
pub fn build_target_dataset(source: &QADataset, composed: &[ComposedParagraph]) -> (QADataset, DropManifest) {
    assert_eq!(
        composed.len(),
        source.paragraph_count(),
        "one composed paragraph per source paragraph"
    );
    let mut manifest = DropManifest::default();
    let mut it = composed.iter().enumerate();
    let articles = source
        .articles
        .iter()
        .map(|art| Article {
            title: art.title.clone(),
            paragraphs: art
                .paragraphs
                .iter()
                .map(|p| {
                    let (index, c) = it.next().expect("length checked");
                    manifest.drops.extend(c.dropped.iter().map(|(id, reason)| Drop {
                        question_id: id.clone(),
                        paragraph_index: index,
                        reason: reason.clone(),
                    }));
                    Paragraph {
                        context: c.context.clone(),
                        qas: c.qas.clone(),
                        extra: p.extra.clone(),
                    }
                })
                .collect(),
            extra: art.extra.clone(),
        })
        .collect();
    (
        QADataset {
            version: source.version.clone(),
            articles,
            extra: source.extra.clone(),
        },
        manifest,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{Alignment, CandidateSpan};
    use crate::dataset::validate_alignment;
    use crate::segment::{RuleSplitter, SentenceSplitter};

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn compose_examples() {
        let (c, o) = compose_context(&s(&["Bakarra."]), &[]).unwrap();
        assert_eq!((c.as_str(), o), ("Bakarra.", vec![(0, 8)]));
        let (c, o) = compose_context(&s(&["A da.", "B da."]), &s(&[" "])).unwrap();
        assert_eq!(c, "A da. B da.");
        assert_eq!(o, vec![(0, 5), (6, 11)]);
        assert_eq!(
            compose_context(&s(&["A", "B"]), &[]),
            Err(ComposeError::LengthMismatch {
                sentences: 2,
                separators: 0
            })
        );
    }

    #[test]
    fn identity_composition_is_byte_identical() {
        let ctx = "  Lehena da.\n\nBigarrena «hau» da!  Hirugarrena.\t";
        let seg = RuleSplitter::default().split(ctx);
        let texts: Vec<String> = seg.sentences.iter().map(|x| x.text.clone()).collect();
        let (c, o) = compose_segmented(&texts, &seg).unwrap();
        assert_eq!(c, ctx);
        for (span, sent) in o.iter().zip(&seg.sentences) {
            assert_eq!(*span, (sent.start, sent.end));
        }
        let flat = JoinMode::SingleSpace.layout(&seg);
        let (c, _) = compose_segmented(&texts, &flat).unwrap();
        assert_eq!(c, "Lehena da. Bigarrena «hau» da! Hirugarrena.");
    }

    fn result(id: &str, unit: (usize, usize), span: (usize, usize), text: &str, method: Method) -> AlignmentResult {
        AlignmentResult {
            question_id: id.into(),
            unit: Some(unit),
            unit_text: None,
            translated_answer: None,
            alignment: Alignment {
                method,
                span: Some(CandidateSpan {
                    token_range: (0, 0),
                    char_span: span,
                    text: text.into(),
                }),
                score: Some(0.0),
                ranked_candidates: Vec::new(),
                reason: None,
            },
        }
    }

    #[test]
    fn relocation_adds_unit_start() {
        let mut ctx = "x".repeat(100);
        ctx.push_str("abc hello world");
        let r = result("q", (1, 1), (4, 9), "hello", Method::Embedding);
        assert_eq!(relocate_answer(&r, (100, 115), &ctx).unwrap().answer_start, 104);
        let r = result("q", (0, 0), (0, 3), "xxx", Method::Embedding);
        assert_eq!(relocate_answer(&r, (0, 100), &ctx).unwrap().answer_start, 0);
        let r = result("q", (1, 1), (4, 20), "hello world....", Method::Embedding);
        assert!(relocate_answer(&r, (100, 115), &ctx).is_err());
    }

    #[test]
    fn relocation_through_a_two_sentence_unit() {
        let (ctx, o) = compose_context(&s(&["Aurre.", "Bat da.", "Bi dira."]), &s(&[" ", "  "])).unwrap();
        // unit 1..=2 text is "Bat da.  Bi dira."; "Bi" starts at local 9
        let r = result("q", (1, 2), (9, 11), "Bi", Method::Literal);
        let a = relocate_answer(&r, (o[1].0, o[2].1), &ctx).unwrap();
        assert_eq!(a.answer_start, 16);
        assert_eq!(&ctx[16..18], "Bi");
    }

    #[test]
    fn postprocess_examples() {
        let ctx = "Baso eta lur idorretan, zabal (1998) ,,, «hau» bai.";
        let p = |t: &str| {
            let start = crate::text::find_char(ctx, t).unwrap();
            postprocess_answer(&AnswerSpan::new(t, start), ctx, DEFAULT_PUNCT)
        };
        let a = p("lur idorretan,");
        assert_eq!((a.text.as_str(), a.answer_start), ("lur idorretan", 9));
        assert_eq!(p("(1998)").text, "(1998)");
        assert_eq!(p(",,,").text, ",,,");
        let a = p("(1998) ,");
        assert_eq!(a.text, "(1998) ");
        assert_eq!(p("«hau» bai.").text, "«hau» bai");
        let a = p(", zabal (1998");
        assert_eq!((a.text.as_str(), a.answer_start), (" zabal (1998", 23));
    }

    fn fixture() -> Paragraph {
        Paragraph::new(
            "Bat da. Bi dira. Hiru dira.",
            vec![
                Question::answerable("a", "Zer?", vec![AnswerSpan::new("Bat", 0)]),
                Question::answerable("b", "Zer?", vec![AnswerSpan::new("Bi", 8)]),
                Question::answerable("c", "Zer?", vec![AnswerSpan::new("Hiru", 17)]),
            ],
        )
    }

    #[test]
    fn build_counts_and_drops() {
        let p = fixture();
        let seg = RuleSplitter::default().split(&p.context);
        let sents: Vec<String> = seg.sentences.iter().map(|x| x.text.clone()).collect();
        let qs: BTreeMap<String, Option<String>> = ["a", "b", "c"]
            .iter()
            .map(|id| (id.to_string(), Some("Zer?".into())))
            .collect();
        let mut results = vec![
            result("a", (0, 0), (0, 3), "Bat", Method::Literal),
            result("b", (1, 1), (0, 2), "Bi", Method::Literal),
            result("c", (2, 2), (0, 4), "Hiru", Method::Literal),
        ];
        let source = QADataset::new("v2.0", vec![Article::new("T", vec![p.clone()])]);
        let c = compose_paragraph(&p, &seg, &sents, &qs, &results, &ComposeConfig::default()).unwrap();
        let (ds, m) = build_target_dataset(&source, &[c]);
        assert_eq!(ds, source);
        assert!(m.is_empty());

        results[1] = AlignmentResult {
            alignment: Alignment::unaligned("no candidate spans"),
            ..results[1].clone()
        };
        let c = compose_paragraph(&p, &seg, &sents, &qs, &results, &ComposeConfig::default()).unwrap();
        let (ds, m) = build_target_dataset(&source, &[c]);
        assert_eq!(ds.questions().count(), 2);
        assert_eq!(
            m.drops,
            vec![Drop {
                question_id: "b".into(),
                paragraph_index: 0,
                reason: "no candidate spans".into()
            }]
        );
        assert_eq!(
            m.to_tsv(),
            "question_id\tparagraph_index\treason\nb\t0\tno candidate spans\n"
        );
        assert!(validate_alignment(&ds).is_empty());
    }

    #[test]
    fn impossible_questions_keep_empty_answers() {
        let mut q = Question::impossible("x", "Nor?");
        q.plausible_answers = Some(vec![AnswerSpan::new("Bat", 0)]);
        let p = Paragraph::new("Bat da.", vec![q]);
        let seg = RuleSplitter::default().split(&p.context);
        let qs: BTreeMap<String, Option<String>> = [("x".to_string(), Some("Who?".to_string()))].into();
        let sents = s(&["Bat da."]);
        let c = compose_paragraph(&p, &seg, &sents, &qs, &[], &ComposeConfig::default()).unwrap();
        assert!(c.qas[0].is_impossible && c.qas[0].answers.is_empty());
        assert_eq!(c.qas[0].question, "Who?");
        assert_eq!(c.qas[0].plausible_answers, None);
        let keep = ComposeConfig {
            plausible_answers: PlausibleAnswers::Keep,
            ..ComposeConfig::default()
        };
        let c = compose_paragraph(&p, &seg, &sents, &qs, &[], &keep).unwrap();
        assert!(c.qas[0].plausible_answers.is_some());
        let c = compose_paragraph(&p, &seg, &sents, &BTreeMap::new(), &[], &keep).unwrap();
        assert!(c.qas.is_empty());
        assert_eq!(c.dropped[0].1, "missing question translation");
    }
}
