use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use futures::stream::{self, StreamExt};
use intentkit_core::cache::JsonCache;
use intentkit_core::costlat::{CostModels, CostTable, ShapeSpec};
use intentkit_core::error::EvalError;
use intentkit_core::eval::{evaluate, funnel_dataset};
use intentkit_core::ingest::{convert_all, finalize_labels, write_dataset};
use intentkit_core::model::{read_trajectories, validate_trajectory};
use intentkit_core::pipeline::{build_finetune_dataset, run_method, RunContext};
use intentkit_core::{PipelineTrace, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_backends, load_judge};
use crate::manifest::{write_manifest, ManifestBuilder};
use crate::{Command, CostArgs, EvalArgs, IngestArgs, PrepArgs, RunArgs};

pub const TRACES_FILE: &str = "traces.jsonl";

/// Bad flags, configuration or input shape. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    /// Some items failed; outputs cover the rest.
    Partial,
}

impl Status {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Status::Clean
        } else {
            Status::Partial
        }
    }
}

pub async fn dispatch(command: Command) -> Result<Status> {
    match command {
        Command::Ingest(a) => ingest(a).await,
        Command::Run(a) => run(a).await,
        Command::Eval(a) => eval(a).await,
        Command::Funnel(a) => funnel(a).await,
        Command::Cost(a) => cost(a),
        Command::PrepFinetune(a) => prep_finetune(a).await,
    }
}

/// Collects output files so the manifest can list them.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn finish(mut self, manifest: ManifestBuilder) -> Result<()> {
        self.written.sort();
        write_manifest(&self.dir, &manifest.finish(self.written))
    }
}

#[derive(Serialize)]
struct ItemProblem {
    id: String,
    message: String,
}

fn dataset_root(dataset: &Path) -> PathBuf {
    dataset.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    let trajectories = read_trajectories(path).map_err(|e| usage(format!("dataset: {e}")))?;
    let root = dataset_root(path);
    let mut problems = Vec::new();
    for t in &trajectories {
        for v in validate_trajectory(t, &root) {
            problems.push(format!("{}: {}: {}", t.id, v.field, v.message));
        }
    }
    if !problems.is_empty() {
        return Err(usage(format!("dataset {} does not validate:\n  {}", path.display(), problems.join("\n  "))));
    }
    Ok(trajectories)
}

fn traces_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(TRACES_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_traces(p: &Path) -> Result<Vec<PipelineTrace>> {
    let path = traces_path(p);
    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("traces {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| usage(format!("traces {} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i)?);
        out.push('\n');
    }
    Ok(out)
}

async fn ingest(a: IngestArgs) -> Result<Status> {
    if !a.source.is_dir() {
        return Err(usage(format!("source {} is not a directory", a.source.display())));
    }
    let cleaner = a.backend_config.as_deref().map(load_backends).transpose()?;
    let mut manifest = ManifestBuilder::new(
        "ingest",
        a.common.seed,
        json!({
            "layout": a.layout,
            "backend": cleaner.as_ref().map(|c| &c.effective.clean),
        }),
    );
    manifest.input("source", &a.source)?;
    if let Some(p) = &a.backend_config {
        manifest.input("backend_config", p)?;
    }
    let (layout, seed, par) = (a.layout, a.common.seed, a.common.parallelism as usize);
    let src = a.source.clone();
    let mut outcome = tokio::task::spawn_blocking(move || convert_all(layout, &src, seed, par))
        .await
        .context("ingest worker")??;
    let mut out = Outputs::create(&a.common.out)?;
    let label_cache = match &cleaner {
        Some(_) => Some(JsonCache::open(&a.common.out.join("label_cache.json")).context("label cache")?),
        None => None,
    };
    let clean_pair = cleaner.as_ref().zip(label_cache.as_ref()).map(|(c, cache)| (&c.clean, cache));
    finalize_labels(&mut outcome, clean_pair).await;
    if let Some(cache) = &label_cache {
        cache.save().context("saving label cache")?;
        out.written.push("label_cache.json".into());
    }
    let violations = write_dataset(&a.common.out, &outcome.episodes)?;
    out.written.push("trajectories.jsonl".into());
    out.written.push("screenshots/".into());

    let failures: Vec<ItemProblem> = outcome
        .failures
        .iter()
        .map(|d| ItemProblem { id: d.episode.clone(), message: d.message.clone() })
        .chain(violations.iter().flat_map(|(id, vs)| {
            vs.iter().map(move |v| ItemProblem { id: id.clone(), message: format!("{}: {}", v.field, v.message) })
        }))
        .collect();
    let flagged: Vec<ItemProblem> = outcome
        .flagged
        .iter()
        .map(|d| ItemProblem { id: d.episode.clone(), message: d.message.clone() })
        .collect();
    let warnings: Vec<&String> = outcome.episodes.iter().flat_map(|e| &e.warnings).collect();
    out.json("diagnostics.json", &json!({ "failures": failures, "flagged": flagged, "warnings": warnings }))?;
    out.finish(manifest)?;

    for f in &failures {
        eprintln!("skipped {}: {}", f.id, f.message);
    }
    for f in &flagged {
        eprintln!("flagged {}: {}", f.id, f.message);
    }
    println!(
        "ingested {} episodes into {} ({} skipped, {} flagged)",
        outcome.episodes.len(),
        a.common.out.display(),
        outcome.failures.len(),
        flagged.len()
    );
    Ok(Status::from_failures(failures.len()))
}

async fn run(a: RunArgs) -> Result<Status> {
    let cfg = a.ablation.config();
    let dataset = load_dataset(&a.dataset)?;
    let loaded = load_backends(&a.backend_config)?;
    let mut manifest = ManifestBuilder::new(
        "run",
        a.common.seed,
        json!({ "method": a.method, "ablation": cfg, "backends": loaded.effective }),
    );
    manifest.input("dataset", &a.dataset)?;
    manifest.input("backend_config", &a.backend_config)?;
    let ctx = RunContext::new(dataset_root(&a.dataset), a.common.seed);
    let backends = &loaded.backends;
    let total = dataset.len();
    let outcomes: Vec<_> = stream::iter(&dataset)
        .map(|t| run_method(t, a.method, &cfg, backends, &ctx))
        .buffered(a.common.parallelism as usize)
        .collect()
        .await;
    let mut traces = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(t) => traces.push(t),
            Err(f) => {
                eprintln!("failed {}: {}", f.partial.trajectory_id, f.error);
                failures.push(ItemProblem { id: f.partial.trajectory_id.clone(), message: f.error.to_string() });
                traces.push(f.partial);
            }
        }
    }
    let mut out = Outputs::create(&a.common.out)?;
    out.text(TRACES_FILE, &jsonl(&traces)?)?;
    out.json("failures.json", &failures)?;
    out.finish(manifest)?;
    println!(
        "{}: {} trajectories, {} succeeded, {} failed; traces in {}",
        a.method,
        total,
        total - failures.len(),
        failures.len(),
        a.common.out.join(TRACES_FILE).display()
    );
    Ok(Status::from_failures(failures.len()))
}

fn eval_error(e: EvalError) -> anyhow::Error {
    match e {
        EvalError::UnsupportedMethod(_) | EvalError::NoSummaries(_) | EvalError::NoPrediction(_) | EvalError::NoFacts | EvalError::Empty => {
            usage(e.to_string())
        }
        other => other.into(),
    }
}

async fn eval(a: EvalArgs) -> Result<Status> {
    let traces = load_traces(&a.traces)?;
    let gold = load_dataset(&a.dataset)?;
    std::fs::create_dir_all(&a.common.out).with_context(|| format!("creating {}", a.common.out.display()))?;
    let judge = load_judge(&a.judge_config, &a.common.out)?;
    let mut manifest = ManifestBuilder::new("eval", a.common.seed, json!({ "judge": judge.effective }));
    manifest.input("traces", &traces_path(&a.traces))?;
    manifest.input("dataset", &a.dataset)?;
    manifest.input("judge_config", &a.judge_config)?;
    let report = evaluate(&traces, &gold, &judge.judge, judge.nli.as_deref(), a.common.parallelism as usize)
        .await
        .map_err(eval_error)?;
    judge.cache.save().context("saving judge cache")?;
    let mut out = Outputs::create(&a.common.out)?;
    if judge.cache_path.parent() == Some(a.common.out.as_path()) {
        out.written.push(judge.cache_path.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    let text = report.render_text();
    out.json("scores.json", &report)?;
    out.text("scores.txt", &text)?;
    out.finish(manifest)?;
    print!("{text}");
    eprintln!("judge calls: {}", judge.judge.calls());
    Ok(Status::from_failures(report.missing_traces.len() + report.unknown_traces.len()))
}

async fn funnel(a: EvalArgs) -> Result<Status> {
    let traces = load_traces(&a.traces)?;
    let gold = load_dataset(&a.dataset)?;
    std::fs::create_dir_all(&a.common.out).with_context(|| format!("creating {}", a.common.out.display()))?;
    let judge = load_judge(&a.judge_config, &a.common.out)?;
    let mut manifest = ManifestBuilder::new("funnel", a.common.seed, json!({ "judge": judge.effective }));
    manifest.input("traces", &traces_path(&a.traces))?;
    manifest.input("dataset", &a.dataset)?;
    manifest.input("judge_config", &a.judge_config)?;
    let summary = funnel_dataset(&traces, &gold, &judge.judge, a.common.parallelism as usize)
        .await
        .map_err(eval_error)?;
    judge.cache.save().context("saving judge cache")?;
    let mut out = Outputs::create(&a.common.out)?;
    if judge.cache_path.parent() == Some(a.common.out.as_path()) {
        out.written.push(judge.cache_path.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    let text = summary.render_text();
    out.json("funnel.json", &summary)?;
    out.text("funnel.txt", &text)?;
    out.finish(manifest)?;
    print!("{text}");
    Ok(Status::from_failures(summary.missing_traces.len() + summary.unknown_traces.len()))
}

fn cost(a: CostArgs) -> Result<Status> {
    let models = match &a.models_config {
        Some(p) => CostModels::load(p).map_err(|e| usage(format!("models config {}: {e}", p.display())))?,
        None => CostModels::default(),
    };
    let mut failures = Vec::new();
    let (table, source) = if let Some(p) = &a.input.shape {
        let spec = ShapeSpec::load(p).map_err(|e| usage(format!("shape {}: {e}", p.display())))?;
        (CostTable::from_shape(&spec, &models.price, &models.latency).map_err(|e| usage(e.to_string()))?, ("shape", p.clone()))
    } else if let Some(p) = &a.input.traces {
        let traces = load_traces(p)?;
        if traces.is_empty() {
            bail!(usage(format!("no traces in {}", traces_path(p).display())));
        }
        let (table, bad) = CostTable::from_traces(&traces, &models.price, &models.latency).map_err(|e| usage(e.to_string()))?;
        failures = bad.into_iter().map(|(id, e)| ItemProblem { id, message: e.to_string() }).collect();
        (table, ("traces", traces_path(p)))
    } else {
        let table = CostTable::from_shape(&ShapeSpec::reference(), &models.price, &models.latency).map_err(|e| usage(e.to_string()))?;
        (table, ("reference", PathBuf::new()))
    };
    for f in &failures {
        eprintln!("skipped {}: {}", f.id, f.message);
    }
    let text = table.render_text();
    print!("{text}");
    if let Some(dir) = &a.out {
        let mut manifest = ManifestBuilder::new("cost", 0, json!({ "models": models, "source": source.0 }));
        if !source.1.as_os_str().is_empty() {
            manifest.input(source.0, &source.1)?;
        }
        if let Some(p) = &a.models_config {
            manifest.input("models_config", p)?;
        }
        let mut out = Outputs::create(dir)?;
        out.json("cost.json", &table)?;
        out.text("cost.txt", &text)?;
        if !failures.is_empty() {
            out.json("failures.json", &failures)?;
        }
        out.finish(manifest)?;
    }
    Ok(Status::from_failures(failures.len()))
}

async fn prep_finetune(a: PrepArgs) -> Result<Status> {
    let cfg = a.ablation.config();
    let dataset = load_dataset(&a.dataset)?;
    let loaded = load_backends(&a.backend_config)?;
    let mut manifest = ManifestBuilder::new(
        "prep-finetune",
        a.common.seed,
        json!({ "ablation": cfg, "backends": loaded.effective }),
    );
    manifest.input("dataset", &a.dataset)?;
    manifest.input("backend_config", &a.backend_config)?;
    let ctx = RunContext::new(dataset_root(&a.dataset), a.common.seed);
    let build = build_finetune_dataset(&dataset, &cfg, &loaded.backends, &ctx, a.common.parallelism as usize).await;
    for (id, reason) in &build.skipped {
        eprintln!("skipped {id}: {reason}");
    }
    if build.examples.is_empty() {
        bail!("no usable trajectories; nothing written");
    }
    let refined = build.examples.iter().filter(|e| e.target_was_refined).count();
    let flagged = build.refinements.iter().filter(|r| r.flagged).count();
    let skipped: Vec<ItemProblem> = build
        .skipped
        .iter()
        .map(|(id, m)| ItemProblem { id: id.clone(), message: m.clone() })
        .collect();
    let mut out = Outputs::create(&a.common.out)?;
    out.text("finetune.jsonl", &build.to_jsonl())?;
    out.text("examples.jsonl", &jsonl(&build.examples)?)?;
    out.json(
        "refinement.json",
        &json!({
            "refined": refined,
            "unchanged": build.examples.len() - refined,
            "flagged": flagged,
            "skipped": skipped,
        }),
    )?;
    out.finish(manifest)?;
    println!(
        "{} examples written to {} ({} refined, {} unchanged, {} refinements flagged, {} skipped)",
        build.examples.len(),
        a.common.out.join("finetune.jsonl").display(),
        refined,
        build.examples.len() - refined,
        flagged,
        skipped.len()
    );
    Ok(Status::from_failures(skipped.len()))
}
