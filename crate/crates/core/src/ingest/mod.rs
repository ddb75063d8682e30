//! Conversion of raw dataset episodes into canonical trajectories.

mod a11y;
mod action;
mod image_ops;
mod label;
mod sources;

use std::path::Path;

pub use a11y::{resolve_element, A11yNode, ElementQuery};
pub use action::format_action_string;
pub use image_ops::{
    crop_for_web, downsize, downsize_android, highlight_element, highlight_with_stroke, scale_rect_down,
    CropOutcome, CropSpec, ANDROID_DOWNSIZE_FACTOR, HIGHLIGHT_COLOR, HIGHLIGHT_STROKE, PAD_COLOR,
    WEB_CROP_HEIGHT, WEB_CROP_WIDTH,
};
pub use label::{clean_label, restructure_label};
pub use sources::{
    convert_episode, convert_mobile_episode, convert_web_episode, episode_dirs, ConvertedEpisode,
    SourceLayout, EPISODE_FILE,
};

use crate::cache::JsonCache;
use crate::error::IngestError;
use crate::gateway::Gateway;
use crate::model::{to_jsonl, validate_trajectory, Trajectory, Violation};
use crate::synthetic::png_bytes;

/// Per-episode problem that did not stop the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub episode: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub episodes: Vec<ConvertedEpisode>,
    /// Episodes that were skipped.
    pub failures: Vec<Diagnostic>,
    /// Episodes kept but flagged (for example, label cleaning failed).
    pub flagged: Vec<Diagnostic>,
}

/// Converts every episode under `source`, `parallelism` episodes at a
/// time. Output order follows the sorted episode directory names.
pub fn convert_all(
    layout: SourceLayout,
    source: &Path,
    seed: u64,
    parallelism: usize,
) -> Result<IngestOutcome, IngestError> {
    let dirs = episode_dirs(source)?;
    let chunk = dirs.len().div_ceil(parallelism.max(1)).max(1);
    let results: Vec<(String, Result<ConvertedEpisode, IngestError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = dirs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|d| {
                            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                            (name, convert_episode(layout, d, seed))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("ingest worker panicked")).collect()
    });
    let mut outcome = IngestOutcome::default();
    for (name, r) in results {
        match r {
            Ok(ep) => outcome.episodes.push(ep),
            Err(e) => outcome.failures.push(Diagnostic {
                episode: name,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Cleans (optionally) and restructures each episode's gold label.
///
/// A failed cleaning call keeps the raw label and flags the episode.
pub async fn finalize_labels(outcome: &mut IngestOutcome, cleaner: Option<(&Gateway, &JsonCache)>) {
    let cleaned: Vec<Option<Result<String, IngestError>>> =
        futures::future::join_all(outcome.episodes.iter().map(|ep| async move {
            match cleaner {
                Some((gw, cache)) => Some(clean_label(&ep.source_label, &ep.trajectory.id, gw, Some(cache)).await),
                None => None,
            }
        }))
        .await;
    let mut kept = Vec::new();
    for (mut ep, clean) in std::mem::take(&mut outcome.episodes).into_iter().zip(cleaned) {
        let raw = ep.source_label.trim().to_string();
        let label = match clean {
            Some(Ok(c)) => {
                ep.trajectory.gold_intent_raw = Some(raw.clone());
                c
            }
            Some(Err(e)) => {
                outcome.flagged.push(Diagnostic {
                    episode: ep.trajectory.id.clone(),
                    message: e.to_string(),
                });
                ep.trajectory.gold_intent_raw = Some(raw.clone());
                raw
            }
            None => raw,
        };
        match restructure_label(&label, ep.trajectory.app_or_site.as_deref()) {
            Ok(intent) => {
                ep.trajectory.gold_intent = intent;
                kept.push(ep);
            }
            Err(e) => outcome.failures.push(Diagnostic {
                episode: ep.trajectory.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    outcome.episodes = kept;
}

/// Writes `trajectories.jsonl` and the PNG screenshots under `out_dir`,
/// then validates every written trajectory.
pub fn write_dataset(out_dir: &Path, episodes: &[ConvertedEpisode]) -> Result<Vec<(String, Vec<Violation>)>, IngestError> {
    let io = |e: std::io::Error, p: &Path| IngestError::Episode {
        episode: p.display().to_string(),
        message: e.to_string(),
    };
    for ep in episodes {
        for (rel, img) in &ep.images {
            let path = out_dir.join(rel);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
            }
            std::fs::write(&path, png_bytes(img)).map_err(|e| io(e, &path))?;
        }
    }
    let trajectories: Vec<Trajectory> = episodes.iter().map(|e| e.trajectory.clone()).collect();
    let jsonl = out_dir.join("trajectories.jsonl");
    std::fs::write(&jsonl, to_jsonl(&trajectories)).map_err(|e| io(e, &jsonl))?;
    Ok(trajectories
        .iter()
        .map(|t| (t.id.clone(), validate_trajectory(t, out_dir)))
        .filter(|(_, v)| !v.is_empty())
        .collect())
}
