//! The four transfer stages (split, translate, align, compose) as pure
//! functions over in-memory records, plus an on-disk staged runner.

mod staged;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align_paragraph, AlignConfig, AlignError, AlignmentResult, Strategy};
use crate::compose::{
    build_target_dataset, compose_paragraph, ComposeConfig, ComposeError, ComposedParagraph, DropManifest,
};
use crate::dataset::QADataset;
use crate::embed::EmbeddingProvider;
use crate::exec::Execution;
use crate::segment::{map_qas, SentenceMap, SentenceSplitter};
use crate::translate::{translate_batch, MtClient, TranslateError, TranslateOptions, Translation, TranslationCache};

pub use staged::{StageOutcome, StagePaths, StagedRunner};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Artifact(#[from] crate::artifact::ArtifactError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("{0}")]
    Stale(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub paragraph_index: usize,
    #[serde(flatten)]
    pub map: SentenceMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateRecord {
    pub paragraph_index: usize,
    /// Target text per source sentence; `None` when translation failed.
    pub sentences: Vec<Option<String>>,
    /// Translated question text by id.
    pub questions: BTreeMap<String, Option<String>>,
    /// Translated longest answer by question id.
    pub answers: BTreeMap<String, Option<String>>,
    /// Sentences the engine left untranslated (source text kept).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub untranslated: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRecord {
    pub paragraph_index: usize,
    pub results: Vec<AlignmentResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeRecord {
    pub paragraph_index: usize,
    #[serde(flatten)]
    pub paragraph: ComposedParagraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub source_lang: String,
    pub target_lang: String,
    pub strategy: Strategy,
    pub align: AlignConfig,
    pub compose: ComposeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source_lang: "en".into(),
            target_lang: "eu".into(),
            strategy: Strategy::Embedding,
            align: AlignConfig::default(),
            compose: ComposeConfig::default(),
        }
    }
}

pub fn split_stage(ds: &QADataset, splitter: &dyn SentenceSplitter, execution: Execution) -> Vec<SplitRecord> {
    let paragraphs: Vec<_> = ds.paragraphs().map(|(_, _, p)| p).collect();
    let maps = execution.map(&paragraphs, |p| map_qas(p, splitter.split(&p.context)));
    maps.into_iter()
        .enumerate()
        .map(|(paragraph_index, map)| SplitRecord { paragraph_index, map })
        .collect()
}

enum Slot {
    Sentence(usize, usize),
    Question(usize, String),
    Answer(usize, String),
}

/// Translates every sentence, question, and mapped answer in one batched,
/// de-duplicated pass.
pub fn translate_stage(
    ds: &QADataset,
    splits: &[SplitRecord],
    config: &PipelineConfig,
    client: &dyn MtClient,
    cache: &TranslationCache,
    opts: &TranslateOptions,
) -> Vec<TranslateRecord> {
    let mut texts = Vec::new();
    let mut slots = Vec::new();
    for ((_, _, p), split) in ds.paragraphs().zip(splits) {
        let pi = split.paragraph_index;
        for (si, s) in split.map.segmentation.sentences.iter().enumerate() {
            texts.push(s.text.clone());
            slots.push(Slot::Sentence(pi, si));
        }
        for q in &p.qas {
            texts.push(q.question.clone());
            slots.push(Slot::Question(pi, q.id.clone()));
        }
        for a in &split.map.assignments {
            texts.push(a.answer.text.clone());
            slots.push(Slot::Answer(pi, a.question_id.clone()));
        }
    }
    let out = translate_batch(&texts, &config.source_lang, &config.target_lang, client, cache, opts);

    let mut records: Vec<TranslateRecord> = splits
        .iter()
        .map(|s| TranslateRecord {
            paragraph_index: s.paragraph_index,
            sentences: vec![None; s.map.segmentation.sentences.len()],
            questions: BTreeMap::new(),
            answers: BTreeMap::new(),
            untranslated: Vec::new(),
            errors: Vec::new(),
        })
        .collect();
    let describe = |e: &TranslateError| match e {
        TranslateError::Client { message, .. } | TranslateError::Cache { message, .. } => message.clone(),
        other => other.to_string(),
    };
    for (slot, res) in slots.into_iter().zip(out) {
        match slot {
            Slot::Sentence(pi, si) => {
                let r = &mut records[pi];
                match res {
                    Ok(Translation { text, untranslated }) => {
                        if untranslated {
                            r.untranslated.push(si);
                        }
                        let trimmed = text.trim();
                        r.sentences[si] = Some(if trimmed.is_empty() {
                            splits[pi].map.segmentation.sentences[si].text.clone()
                        } else {
                            trimmed.to_string()
                        });
                    }
                    Err(e) => r.errors.push(format!("sentence {si}: {}", describe(&e))),
                }
            }
            Slot::Question(pi, id) => {
                let r = &mut records[pi];
                if let Err(e) = &res {
                    r.errors.push(format!("question {id}: {}", describe(e)));
                }
                r.questions.insert(id, res.ok().map(|t| t.text));
            }
            Slot::Answer(pi, id) => {
                let r = &mut records[pi];
                if let Err(e) = &res {
                    r.errors.push(format!("answer of question {id}: {}", describe(e)));
                }
                r.answers.insert(id, res.ok().map(|t| t.text));
            }
        }
    }
    records
}

fn aligned_view(split: &SplitRecord, config: &PipelineConfig) -> SentenceMap {
    SentenceMap {
        segmentation: config.compose.join.layout(&split.map.segmentation),
        ..split.map.clone()
    }
}

pub fn align_stage(
    ds: &QADataset,
    splits: &[SplitRecord],
    translations: &[TranslateRecord],
    config: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
    execution: Execution,
) -> Result<Vec<AlignRecord>, AlignError> {
    let paragraphs: Vec<_> = ds.paragraphs().map(|(_, _, p)| p).collect();
    let results = execution.map_range(paragraphs.len(), |i| {
        let map = aligned_view(&splits[i], config);
        align_paragraph(
            paragraphs[i],
            &map,
            &translations[i].sentences,
            &translations[i].answers,
            config.strategy,
            provider,
            &config.align,
        )
    });
    results
        .into_iter()
        .enumerate()
        .map(|(paragraph_index, r)| {
            r.map(|results| AlignRecord {
                paragraph_index,
                results,
            })
        })
        .collect()
}

pub fn compose_stage(
    ds: &QADataset,
    splits: &[SplitRecord],
    translations: &[TranslateRecord],
    alignments: &[AlignRecord],
    config: &PipelineConfig,
    execution: Execution,
) -> Result<(QADataset, DropManifest, Vec<ComposeRecord>), ComposeError> {
    let paragraphs: Vec<_> = ds.paragraphs().map(|(_, _, p)| p).collect();
    let composed = execution.map_range(paragraphs.len(), |i| {
        let layout = config.compose.join.layout(&splits[i].map.segmentation);
        // a sentence that failed to translate keeps its source text
        let sentences: Vec<String> = translations[i]
            .sentences
            .iter()
            .zip(&layout.sentences)
            .map(|(t, s)| t.clone().unwrap_or_else(|| s.text.clone()))
            .collect();
        compose_paragraph(
            paragraphs[i],
            &layout,
            &sentences,
            &translations[i].questions,
            &alignments[i].results,
            &config.compose,
        )
    });
    let composed: Vec<ComposedParagraph> = composed.into_iter().collect::<Result<_, _>>()?;
    let (out, drops) = build_target_dataset(ds, &composed);
    let records = composed
        .into_iter()
        .enumerate()
        .map(|(paragraph_index, paragraph)| ComposeRecord {
            paragraph_index,
            paragraph,
        })
        .collect();
    Ok((out, drops, records))
}

/// Everything a full in-memory run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dataset: QADataset,
    pub drops: DropManifest,
    pub splits: Vec<SplitRecord>,
    pub translations: Vec<TranslateRecord>,
    pub alignments: Vec<AlignRecord>,
}

impl PipelineOutput {
    /// `(unit text, translated answer)` for every question that reached
    /// alignment.
    pub fn translated_pairs(&self) -> Vec<(String, String)> {
        translated_pairs(&self.alignments)
    }
}

pub fn translated_pairs(alignments: &[AlignRecord]) -> Vec<(String, String)> {
    alignments
        .iter()
        .flat_map(|r| &r.results)
        .filter_map(|r| Some((r.unit_text.clone()?, r.translated_answer.clone()?)))
        .collect()
}

pub struct Components<'a> {
    pub splitter: &'a dyn SentenceSplitter,
    pub client: &'a dyn MtClient,
    pub cache: &'a TranslationCache,
    pub provider: &'a dyn EmbeddingProvider,
}

pub fn run_pipeline(
    ds: &QADataset,
    config: &PipelineConfig,
    parts: &Components<'_>,
    opts: &TranslateOptions,
) -> Result<PipelineOutput, PipelineError> {
    let execution = opts.execution;
    let splits = split_stage(ds, parts.splitter, execution);
    let translations = translate_stage(ds, &splits, config, parts.client, parts.cache, opts);
    let alignments = align_stage(ds, &splits, &translations, config, parts.provider, execution)?;
    let (dataset, drops, _) = compose_stage(ds, &splits, &translations, &alignments, config, execution)?;
    Ok(PipelineOutput {
        dataset,
        drops,
        splits,
        translations,
        alignments,
    })
}
