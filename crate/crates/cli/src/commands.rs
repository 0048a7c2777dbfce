use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use squad_transfer::align::{AlignConfig, PoolingMode};
use squad_transfer::analytics::{
    context_question_overlap, corruption_rate, depth_summary, error_summary, evaluate, load_depths, load_predictions,
    load_review_file, question_type_counts, review_aligned, save_review_file, DepthSummary, ErrorSummary,
    IdentityLemmatizer, Normalizer, QuestionLexicon,
};
use squad_transfer::artifact::read_artifact;
use squad_transfer::dataset::{dataset_stats, load_dataset, DatasetStats, QADataset};
use squad_transfer::pipeline::{translated_pairs, AlignRecord, StageOutcome, StagePaths, StagedRunner};
use squad_transfer::synth::{clean_corpus, compare_aligners, corruption_corpus, Aligner, RecoveryRow, Triplet};

use crate::config::Config;

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    /// Finished, but some questions were dropped.
    Drops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Split,
    Translate,
    Align,
    Compose,
}

pub fn normalizer(lang: &str) -> Normalizer {
    if lang == "en" {
        Normalizer::english()
    } else {
        Normalizer::basque()
    }
}

fn print_outcome(o: &StageOutcome) {
    let state = if o.skipped { "up to date" } else { "done" };
    println!(
        "{:<10} {state:<11} {} records  {}",
        o.stage,
        o.records,
        &o.content_hash[..12]
    );
}

pub fn stages(cfg: &Config, input: &Path, which: Option<Stage>, output: Option<&Path>) -> Result<Status> {
    if !input.is_file() {
        bail!("input dataset {} does not exist", input.display());
    }
    let backends = cfg.backends()?;
    let runner = StagedRunner {
        input: input.to_path_buf(),
        paths: StagePaths::in_dir(&cfg.artifact_dir),
        config: cfg.pipeline(),
        parts: backends.components(),
        opts: cfg.translate_options(),
    };
    let outcomes = match which {
        None => runner.run()?,
        Some(Stage::Split) => vec![runner.split()?],
        Some(Stage::Translate) => vec![runner.translate()?],
        Some(Stage::Align) => vec![runner.align()?],
        Some(Stage::Compose) => vec![runner.compose()?],
    };
    outcomes.iter().for_each(print_outcome);
    let Some(last) = outcomes.last().filter(|o| o.stage == "compose") else {
        return Ok(Status::Ok);
    };
    println!("dataset    {}", runner.paths.output.display());
    if let Some(out) = output {
        fs::copy(&runner.paths.output, out).with_context(|| format!("cannot write {}", out.display()))?;
        println!("copied to  {}", out.display());
    }
    if last.drops > 0 {
        println!(
            "dropped    {} questions, see {}",
            last.drops,
            runner.paths.drops.display()
        );
        return Ok(Status::Drops);
    }
    Ok(Status::Ok)
}

pub fn stats(path: &Path, json: bool) -> Result<Status> {
    let s = dataset_stats(&load_dataset(path)?);
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        print!("{}", render_stats(&s));
    }
    Ok(Status::Ok)
}

fn render_stats(s: &DatasetStats) -> String {
    format!(
        "contexts              {}\n\
         answerable questions  {}\n\
         impossible questions  {}\n\
         mean context length   {:.1} chars\n\
         mean question length  {:.1} chars\n\
         mean answer length    {:.1} chars\n",
        s.context_count,
        s.answerable_count,
        s.impossible_count,
        s.mean_context_len,
        s.mean_question_len,
        s.mean_answer_len
    )
}

pub fn evaluate_cmd(
    cfg: &Config,
    gold: &Path,
    predictions: &Path,
    lang: Option<&str>,
    per_question: bool,
) -> Result<Status> {
    let gold_ds = load_dataset(gold)?;
    let preds = load_predictions(predictions)?;
    let n = normalizer(lang.unwrap_or(&cfg.target_lang));
    let report = evaluate(&gold_ds, &preds, &n, cfg.execution());
    if !report.missing.is_empty() {
        log::warn!(
            "{} questions have no prediction and were scored as empty: {}",
            report.missing.len(),
            report.missing.join(", ")
        );
    }
    let mut v = serde_json::to_value(&report)?;
    if !per_question {
        v.as_object_mut().expect("object").remove("per_question");
    }
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct Overlap {
    questions: usize,
    mean_rouge_l_precision: Option<f64>,
}

#[derive(Serialize)]
struct DatasetProfile {
    overlap: Overlap,
    question_types: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    errors: ErrorSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    corruption_rate: Option<f64>,
    source: DatasetProfile,
    aligned: DatasetProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<DepthSummary>,
}

fn profile(ds: &QADataset, n: &Normalizer) -> DatasetProfile {
    let scores = context_question_overlap(ds, n, &IdentityLemmatizer);
    let mean = (!scores.is_empty()).then(|| scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64);
    DatasetProfile {
        overlap: Overlap {
            questions: scores.len(),
            mean_rouge_l_precision: mean,
        },
        question_types: question_type_counts(ds, &QuestionLexicon::default(), n),
    }
}

pub struct AnalyzeArgs<'a> {
    pub source: &'a Path,
    pub aligned: &'a Path,
    pub review: Option<&'a Path>,
    pub write_review: Option<&'a Path>,
    pub align_artifact: Option<&'a Path>,
    pub depths: Option<&'a Path>,
}

pub fn analyze(cfg: &Config, a: &AnalyzeArgs<'_>) -> Result<Status> {
    let source = load_dataset(a.source)?;
    let aligned = load_dataset(a.aligned)?;
    let src_n = normalizer(&cfg.source_lang);
    let tgt_n = normalizer(&cfg.target_lang);

    let reviews = match a.review {
        Some(p) => load_review_file(p)?,
        None => review_aligned(&source, &aligned),
    };
    if let Some(p) = a.write_review {
        save_review_file(p, &reviews).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let records: Vec<_> = reviews.iter().map(|r| r.classify(&tgt_n)).collect();

    let default_artifact = StagePaths::in_dir(&cfg.artifact_dir).align;
    let artifact = match a.align_artifact {
        Some(p) => Some(p.to_path_buf()),
        None => default_artifact.exists().then_some(default_artifact),
    };
    let corruption = match artifact {
        Some(p) => {
            let (_, recs): (_, Vec<AlignRecord>) = read_artifact(&p, "align")?;
            let pairs = translated_pairs(&recs);
            if pairs.is_empty() {
                None
            } else {
                Some(corruption_rate(&pairs)?)
            }
        }
        None => None,
    };
    let report = AnalyzeReport {
        errors: error_summary(&records),
        corruption_rate: corruption,
        source: profile(&source, &src_n),
        aligned: profile(&aligned, &tgt_n),
        depth: a.depths.map(load_depths).transpose()?.map(|d| depth_summary(&d)),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Status::Ok)
}

pub struct CompareArgs<'a> {
    pub corpus: Option<&'a Path>,
    pub size: usize,
    pub clean: bool,
    pub strategies: &'a [String],
    pub pooling: Option<PoolingMode>,
    pub write_corpus: Option<&'a Path>,
    pub json: bool,
}

fn read_corpus(path: &Path) -> Result<Vec<Triplet>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open corpus {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triplet =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid triplet", path.display(), i + 1))?;
        if t.sentence.chars().count() < t.gold_span.1 || t.gold_span.0 >= t.gold_span.1 {
            bail!("{}:{}: gold span outside the sentence", path.display(), i + 1);
        }
        out.push(t);
    }
    Ok(out)
}

fn write_corpus(path: &Path, corpus: &[Triplet]) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    for t in corpus {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn compare(cfg: &Config, a: &CompareArgs<'_>) -> Result<Status> {
    let corpus = match a.corpus {
        Some(p) => read_corpus(p)?,
        None if a.clean => clean_corpus(a.size, cfg.seed),
        None => corruption_corpus(a.size, cfg.seed),
    };
    if let Some(p) = a.write_corpus {
        write_corpus(p, &corpus)?;
    }
    let provider = cfg.provider()?;
    let mut aligners = Vec::new();
    for s in a.strategies {
        aligners.push(match s.as_str() {
            "literal" => Aligner::Literal,
            "levenshtein" | "levenshtein-baseline" => Aligner::Levenshtein,
            "embedding" => Aligner::Embedding(provider.as_ref()),
            other => bail!("unknown strategy {other:?}; expected literal, levenshtein or embedding"),
        });
    }
    let align = AlignConfig {
        pooling: a.pooling.unwrap_or(cfg.align.pooling),
        ..cfg.align.clone()
    };
    let rows = compare_aligners(&corpus, &aligners, &align, cfg.execution());
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", render_rows(&rows));
    }
    Ok(Status::Ok)
}

fn render_rows(rows: &[RecoveryRow]) -> String {
    let width = rows.iter().map(|r| r.strategy.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:<width$}  recovered  total  rate\n", "strategy");
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:>9}  {:>5}  {:.3}\n",
            r.strategy, r.recovered, r.total, r.rate
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_render_lists_every_count() {
        let s = DatasetStats {
            context_count: 2,
            answerable_count: 3,
            impossible_count: 1,
            mean_context_len: 10.0,
            mean_question_len: 4.25,
            mean_answer_len: 2.0,
        };
        let out = render_stats(&s);
        assert!(out.contains("contexts              2\n"));
        assert!(out.contains("impossible questions  1\n"));
        assert!(out.contains("4.2 chars") || out.contains("4.3 chars"));
    }

    #[test]
    fn rows_render_as_a_table() {
        let rows = vec![RecoveryRow {
            strategy: "literal".into(),
            recovered: 1,
            total: 4,
            rate: 0.25,
        }];
        assert_eq!(
            render_rows(&rows).lines().nth(1).unwrap(),
            "literal           1      4  0.250"
        );
    }
}
