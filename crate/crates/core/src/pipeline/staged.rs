//! Resumable on-disk execution of the pipeline stages.
//!
//! Each stage writes `<dir>/<stage>.jsonl` whose header carries a hash of
//! everything the stage depends on: the input file, upstream hashes, and
//! the relevant configuration. A stage whose artifact already carries the
//! expected hash is skipped.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    align_stage, compose_stage, split_stage, translate_stage, AlignRecord, Components, ComposeRecord, PipelineConfig,
    PipelineError, SplitRecord, TranslateRecord,
};
use crate::artifact::{hash_file, read_artifact, read_header, write_artifact, write_atomic, ContentHasher};
use crate::compose::{Drop, DropManifest};
use crate::dataset::{load_dataset, save_dataset, QADataset};
use crate::translate::TranslateOptions;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePaths {
    pub split: PathBuf,
    pub translate: PathBuf,
    pub align: PathBuf,
    pub compose: PathBuf,
    pub output: PathBuf,
    pub drops: PathBuf,
}

impl StagePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            split: dir.join("split.jsonl"),
            translate: dir.join("translate.jsonl"),
            align: dir.join("align.jsonl"),
            compose: dir.join("compose.jsonl"),
            output: dir.join("dataset.json"),
            drops: dir.join("drops.tsv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub skipped: bool,
    pub records: usize,
    pub content_hash: String,
    /// Questions dropped; only reported by the compose stage.
    pub drops: usize,
}

struct Hashes {
    split: String,
    translate: String,
    align: String,
    compose: String,
}

pub struct StagedRunner<'a> {
    pub input: PathBuf,
    pub paths: StagePaths,
    pub config: PipelineConfig,
    pub parts: Components<'a>,
    pub opts: TranslateOptions,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl StagedRunner<'_> {
    fn hashes(&self) -> Result<Hashes, PipelineError> {
        let c = &self.config;
        let split = ContentHasher::new()
            .part("input", hash_file(&self.input)?.as_bytes())
            .part("splitter", self.parts.splitter.fingerprint().as_bytes())
            .finish();
        let translate = ContentHasher::new()
            .part("split", split.as_bytes())
            .part("engine", self.parts.client.engine_id().as_bytes())
            .part("source_lang", c.source_lang.as_bytes())
            .part("target_lang", c.target_lang.as_bytes())
            .finish();
        let align = ContentHasher::new()
            .part("translate", translate.as_bytes())
            .part("provider", self.parts.provider.model_id().as_bytes())
            .json("strategy", &c.strategy)
            .json("align", &c.align)
            .json("join", &c.compose.join)
            .finish();
        let compose = ContentHasher::new()
            .part("align", align.as_bytes())
            .json("compose", &c.compose)
            .finish();
        Ok(Hashes {
            split,
            translate,
            align,
            compose,
        })
    }

    fn dataset(&self) -> Result<QADataset, PipelineError> {
        Ok(load_dataset(&self.input)?)
    }

    fn current(path: &Path, hash: &str) -> bool {
        read_header(path).is_ok_and(|h| h.content_hash == hash)
    }

    /// Loads an upstream artifact, insisting it matches the current inputs.
    fn upstream<T: DeserializeOwned>(path: &Path, stage: &str, hash: &str) -> Result<Vec<T>, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::Stale(format!(
                "missing {stage} artifact {}; run the {stage} stage first",
                path.display()
            )));
        }
        let (header, records) = read_artifact(path, stage)?;
        if header.content_hash != hash {
            return Err(PipelineError::Stale(format!(
                "{stage} artifact {} is out of date for the current input or configuration; rerun the {stage} stage",
                path.display()
            )));
        }
        Ok(records)
    }

    fn finish<T: Serialize>(
        stage: &'static str,
        path: &Path,
        hash: String,
        records: &[T],
    ) -> Result<StageOutcome, PipelineError> {
        write_artifact(path, stage, &hash, records)?;
        log::info!("{stage}: wrote {} records to {}", records.len(), path.display());
        Ok(StageOutcome {
            stage,
            skipped: false,
            records: records.len(),
            content_hash: hash,
            drops: 0,
        })
    }

    fn skipped(stage: &'static str, path: &Path, hash: String) -> Result<StageOutcome, PipelineError> {
        let records = read_header(path)?.records;
        log::info!("{stage}: up to date, skipping");
        Ok(StageOutcome {
            stage,
            skipped: true,
            records,
            content_hash: hash,
            drops: 0,
        })
    }

    pub fn split(&self) -> Result<StageOutcome, PipelineError> {
        let h = self.hashes()?;
        let path = &self.paths.split;
        if Self::current(path, &h.split) {
            return Self::skipped("split", path, h.split);
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let recs = split_stage(&self.dataset()?, self.parts.splitter, self.opts.execution);
        Self::finish("split", path, h.split, &recs)
    }

    pub fn translate(&self) -> Result<StageOutcome, PipelineError> {
        let h = self.hashes()?;
        let path = &self.paths.translate;
        if Self::current(path, &h.translate) {
            return Self::skipped("translate", path, h.translate);
        }
        let splits: Vec<SplitRecord> = Self::upstream(&self.paths.split, "split", &h.split)?;
        let recs = translate_stage(
            &self.dataset()?,
            &splits,
            &self.config,
            self.parts.client,
            self.parts.cache,
            &self.opts,
        );
        for r in &recs {
            for e in &r.errors {
                log::warn!("paragraph {}: {e}", r.paragraph_index);
            }
        }
        Self::finish("translate", path, h.translate, &recs)
    }

    pub fn align(&self) -> Result<StageOutcome, PipelineError> {
        let h = self.hashes()?;
        let path = &self.paths.align;
        if Self::current(path, &h.align) {
            return Self::skipped("align", path, h.align);
        }
        let splits: Vec<SplitRecord> = Self::upstream(&self.paths.split, "split", &h.split)?;
        let trans: Vec<TranslateRecord> = Self::upstream(&self.paths.translate, "translate", &h.translate)?;
        let recs = align_stage(
            &self.dataset()?,
            &splits,
            &trans,
            &self.config,
            self.parts.provider,
            self.opts.execution,
        )?;
        Self::finish("align", path, h.align, &recs)
    }

    pub fn compose(&self) -> Result<StageOutcome, PipelineError> {
        let h = self.hashes()?;
        let path = &self.paths.compose;
        if Self::current(path, &h.compose) && self.paths.output.exists() {
            let (_, recs): (_, Vec<ComposeRecord>) = read_artifact(path, "compose")?;
            let mut out = Self::skipped("compose", path, h.compose)?;
            out.drops = recs.iter().map(|r| r.paragraph.dropped.len()).sum();
            return Ok(out);
        }
        let splits: Vec<SplitRecord> = Self::upstream(&self.paths.split, "split", &h.split)?;
        let trans: Vec<TranslateRecord> = Self::upstream(&self.paths.translate, "translate", &h.translate)?;
        let aligns: Vec<AlignRecord> = Self::upstream(&self.paths.align, "align", &h.align)?;
        let (ds, drops, recs) = compose_stage(
            &self.dataset()?,
            &splits,
            &trans,
            &aligns,
            &self.config,
            self.opts.execution,
        )?;
        save_dataset(&ds, &self.paths.output)?;
        write_drops(&self.paths.drops, &drops)?;
        for Drop {
            question_id, reason, ..
        } in &drops.drops
        {
            log::warn!("dropped question {question_id}: {reason}");
        }
        let mut out = Self::finish("compose", path, h.compose, &recs)?;
        out.drops = drops.len();
        Ok(out)
    }

    /// All four stages in order, skipping those already up to date.
    pub fn run(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        Ok(vec![self.split()?, self.translate()?, self.align()?, self.compose()?])
    }

    /// Alignment records of the current align artifact.
    pub fn alignments(&self) -> Result<Vec<AlignRecord>, PipelineError> {
        let h = self.hashes()?;
        Self::upstream(&self.paths.align, "align", &h.align)
    }
}

fn write_drops(path: &Path, drops: &DropManifest) -> Result<(), PipelineError> {
    write_atomic(path, |f| std::io::Write::write_all(f, drops.to_tsv().as_bytes())).map_err(io_err(path))
}
