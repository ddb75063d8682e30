use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use intentkit_core::cache::JsonCache;
use intentkit_core::eval::{EntailmentScorer, FactJudge, HttpEntailment, LexicalEntailment};
use intentkit_core::gateway::{BackendConfig, Gateway};
use intentkit_core::pipeline::Backends;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commands::usage;

fn parse<T: DeserializeOwned>(path: &Path, text: &str) -> std::result::Result<T, String> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Backend configuration file. Either a single backend used for every
/// role, or a `[default]` table plus optional per-role overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    pub default: Option<BackendConfig>,
    pub stage1: Option<BackendConfig>,
    pub stage2: Option<BackendConfig>,
    pub stage2_prompted: Option<BackendConfig>,
    pub baseline: Option<BackendConfig>,
    pub refine: Option<BackendConfig>,
    pub clean: Option<BackendConfig>,
}

pub struct LoadedBackends {
    pub backends: Backends,
    pub clean: Gateway,
    /// Effective configuration, for the manifest.
    pub effective: BackendsFile,
}

pub fn load_backends(path: &Path) -> Result<LoadedBackends> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("backend config {}: {e}", path.display())))?;
    let file = match parse::<BackendsFile>(path, &text) {
        Ok(f) if f != BackendsFile::default() => f,
        roles_err => match parse::<BackendConfig>(path, &text) {
            Ok(single) => BackendsFile { default: Some(single), ..Default::default() },
            Err(single_err) => {
                let detail = roles_err.err().unwrap_or(single_err);
                return Err(usage(format!("backend config {}: {detail}", path.display())));
            }
        },
    };
    let base = base_dir(path);
    let build = |c: &BackendConfig| -> Result<Gateway> {
        c.build(&base)
            .map(|(gw, _)| gw)
            .map_err(|e| usage(format!("backend config {}: {e}", path.display())))
    };
    let default = file.default.as_ref().map(&build).transpose()?;
    let role = |c: &Option<BackendConfig>, name: &str| -> Result<(Gateway, BackendConfig)> {
        match (c, &default, &file.default) {
            (Some(c), _, _) => Ok((build(c)?, c.clone())),
            (None, Some(gw), Some(dc)) => Ok((gw.clone(), dc.clone())),
            _ => Err(usage(format!("backend config {}: no [{name}] or [default] backend", path.display()))),
        }
    };
    let (stage1, c1) = role(&file.stage1, "stage1")?;
    let (stage2, c2) = role(&file.stage2, "stage2")?;
    let (stage2_prompted, c3) = role(&file.stage2_prompted, "stage2_prompted")?;
    let (baseline, c4) = role(&file.baseline, "baseline")?;
    let (refine, c5) = role(&file.refine, "refine")?;
    let (clean, c6) = role(&file.clean, "clean")?;
    Ok(LoadedBackends {
        backends: Backends { stage1, stage2, stage2_prompted, baseline, refine },
        clean,
        effective: BackendsFile {
            default: file.default.clone(),
            stage1: Some(c1),
            stage2: Some(c2),
            stage2_prompted: Some(c3),
            baseline: Some(c4),
            refine: Some(c5),
            clean: Some(c6),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliKind {
    /// Word-overlap scorer; offline and deterministic.
    Lexical,
    /// `POST {premise, hypothesis}` returning `{entailment}`.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliConfig {
    pub kind: NliKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeFile {
    pub judge: BackendConfig,
    /// Cache file; relative paths resolve against the config file.
    /// Defaults to `judge_cache.json` in the output directory.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub nli: Option<NliConfig>,
}

pub struct JudgeSetup {
    pub judge: FactJudge,
    pub cache: Arc<JsonCache>,
    pub cache_path: PathBuf,
    pub nli: Option<Box<dyn EntailmentScorer>>,
    pub effective: JudgeFile,
}

pub fn load_judge(path: &Path, out_dir: &Path) -> Result<JudgeSetup> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("judge config {}: {e}", path.display())))?;
    let file: JudgeFile = parse(path, &text).map_err(|e| usage(format!("judge config {}: {e}", path.display())))?;
    let base = base_dir(path);
    let (gateway, _) = file
        .judge
        .build(&base)
        .map_err(|e| usage(format!("judge config {}: {e}", path.display())))?;
    let cache_path = match &file.cache {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => base.join(p),
        None => out_dir.join("judge_cache.json"),
    };
    let cache = Arc::new(
        JsonCache::open(&cache_path).with_context(|| format!("judge cache {}", cache_path.display()))?,
    );
    let nli: Option<Box<dyn EntailmentScorer>> = match &file.nli {
        None => None,
        Some(NliConfig { kind: NliKind::Lexical, .. }) => Some(Box::new(LexicalEntailment)),
        Some(NliConfig { kind: NliKind::Http, endpoint, timeout_secs }) => {
            let endpoint = endpoint
                .clone()
                .filter(|e| !e.is_empty())
                .ok_or_else(|| usage(format!("judge config {}: http nli needs an endpoint", path.display())))?;
            Some(Box::new(
                HttpEntailment::new(endpoint, Duration::from_secs(*timeout_secs)).map_err(|e| usage(e.to_string()))?,
            ))
        }
    };
    Ok(JudgeSetup {
        judge: FactJudge::new(gateway, cache.clone()),
        cache,
        cache_path,
        nli,
        effective: file,
    })
}
