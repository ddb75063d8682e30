//! Readers for the two supported source layouts.
//!
//! Both layouts are a directory with one sub-directory per episode. Each
//! episode directory holds an `episode.json` record and the screenshots it
//! references by file name.
//!
//! Web layout (`episode.json`):
//!
//! ```json
//! {"annotation_id": "m-1", "website": "exploretock", "confirmed_task": "...",
//!  "actions": [{"operation": "CLICK", "element_name": "Adirondack", "value": "",
//!               "bbox": {"x": 10, "y": 900, "width": 200, "height": 40},
//!               "screenshot": "0.png"}]}
//! ```
//!
//! Mobile layout (`episode.json`):
//!
//! ```json
//! {"episode_id": "a-1", "app": "DoorDash", "goal": "...",
//!  "steps": [{"action_type": "click", "x": 540, "y": 1200,
//!             "screenshot": "0.png", "accessibility_tree": {...}}]}
//! ```

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{ActionKind, ActionRecord, ImageRef, IntentStatement, Interaction, Platform, Rect, Trajectory};
use crate::seed::derive_seed;

use super::a11y::{resolve_element, A11yNode, ElementQuery};
use super::image_ops::{crop_for_web, downsize_android, highlight_element, scale_rect_down, CropSpec, ANDROID_DOWNSIZE_FACTOR};

pub const EPISODE_FILE: &str = "episode.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLayout {
    Mind2web,
    Androidcontrol,
}

impl std::str::FromStr for SourceLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mind2web" | "web" => Ok(SourceLayout::Mind2web),
            "androidcontrol" | "android" => Ok(SourceLayout::Androidcontrol),
            _ => Err(format!("unknown source layout {s:?} (expected mind2web or androidcontrol)")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct WebEpisode {
    pub annotation_id: String,
    #[serde(default)]
    pub website: Option<String>,
    pub confirmed_task: String,
    pub actions: Vec<WebAction>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WebAction {
    pub operation: String,
    #[serde(default)]
    pub element_name: Option<String>,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub bbox: Option<Rect>,
    pub screenshot: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MobileEpisode {
    pub episode_id: String,
    #[serde(default)]
    pub app: Option<String>,
    pub goal: String,
    pub steps: Vec<MobileStep>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MobileStep {
    pub action_type: String,
    #[serde(default)]
    pub x: Option<i64>,
    #[serde(default)]
    pub y: Option<i64>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub app_name: Option<String>,
    pub screenshot: String,
    #[serde(default)]
    pub accessibility_tree: Option<A11yNode>,
}

/// An episode converted to a trajectory whose screenshots are still in
/// memory. Screenshot refs point at `screenshots/<id>/<index>.png`.
#[derive(Debug, Clone)]
pub struct ConvertedEpisode {
    pub trajectory: Trajectory,
    /// Label as found in the source, before cleaning or restructuring.
    pub source_label: String,
    pub images: Vec<(String, RgbImage)>,
    pub warnings: Vec<String>,
}

fn episode_err(episode: &str, message: impl Into<String>) -> IngestError {
    IngestError::Episode {
        episode: episode.to_string(),
        message: message.into(),
    }
}

fn load_rgb(dir: &Path, episode: &str, file: &str) -> Result<RgbImage, IngestError> {
    let path = dir.join(file);
    let bytes = std::fs::read(&path)
        .map_err(|e| episode_err(episode, format!("screenshot {}: {e}", path.display())))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| episode_err(episode, format!("screenshot {}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

fn screenshot_path(id: &str, index: u32) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    format!("screenshots/{safe}/{index}.png")
}

fn web_kind(op: &str) -> ActionKind {
    match op.to_ascii_uppercase().as_str() {
        "CLICK" => ActionKind::Click,
        "HOVER" => ActionKind::Hover,
        "TYPE" => ActionKind::TypeText,
        "SCROLL" => ActionKind::Scroll,
        _ => ActionKind::Other(op.to_ascii_lowercase()),
    }
}

fn mobile_kind(action_type: &str) -> ActionKind {
    match action_type {
        "click" | "tap" => ActionKind::Click,
        "input_text" | "type" => ActionKind::TypeText,
        "scroll" => ActionKind::Scroll,
        "navigate_back" | "navigate_home" => ActionKind::Navigate,
        other => ActionKind::Other(other.to_string()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, episode: &str) -> Result<T, IngestError> {
    let path = dir.join(EPISODE_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| episode_err(episode, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| episode_err(episode, format!("{}: {e}", path.display())))
}

/// Converts one web-layout episode: highlight the target element on the
/// full page, then crop 1280x768 around it with seeded margins.
pub fn convert_web_episode(dir: &Path, seed: u64) -> Result<ConvertedEpisode, IngestError> {
    let dir_name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let ep: WebEpisode = read_json(dir, &dir_name)?;
    let id = ep.annotation_id.clone();
    if ep.actions.is_empty() {
        return Err(episode_err(&id, "episode has no actions"));
    }
    let mut steps = Vec::new();
    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for (pos, a) in ep.actions.iter().enumerate() {
        let index = pos as u32 + 1;
        let page = load_rgb(dir, &id, &a.screenshot)?;
        let kind = web_kind(&a.operation);
        let (shot, bbox) = match a.bbox {
            Some(bbox) => {
                let highlighted = highlight_element(&page, bbox)?;
                let spec = CropSpec::web(derive_seed(seed, &[&id, &index.to_string()]));
                let crop = crop_for_web(&highlighted, bbox, &spec)?;
                warnings.extend(crop.warnings.iter().map(|w| format!("{id} step {index}: {w}")));
                (crop.image, Some(crop.bbox_in_crop))
            }
            None => {
                let spec = CropSpec::web(derive_seed(seed, &[&id, &index.to_string()]));
                let crop = crop_for_web(&page, Rect::new(0, 0, 1, 1), &spec)?;
                warnings.push(format!("{id} step {index}: no element box; cropped from the page top"));
                (crop.image, None)
            }
        };
        let typed_text = match kind {
            ActionKind::TypeText => Some(a.value.clone().unwrap_or_default()),
            _ => None,
        };
        let path = screenshot_path(&id, index);
        images.push((path.clone(), shot));
        steps.push(Interaction {
            index,
            screenshot: ImageRef::Path(path),
            action: ActionRecord {
                kind,
                element_name: a.element_name.clone().filter(|n| !n.trim().is_empty()),
                element_bbox: bbox,
                typed_text,
            },
            original_index: None,
        });
    }
    Ok(ConvertedEpisode {
        trajectory: Trajectory {
            id,
            platform: Platform::Web,
            app_or_site: ep.website.clone().filter(|w| !w.is_empty()),
            steps,
            gold_intent: IntentStatement::new(ep.confirmed_task.trim()),
            gold_intent_raw: None,
        },
        source_label: ep.confirmed_task,
        images,
        warnings,
    })
}

/// Converts one mobile-layout episode: resolve the tapped element in the
/// accessibility tree, highlight it, then downsize by 4.
pub fn convert_mobile_episode(dir: &Path) -> Result<ConvertedEpisode, IngestError> {
    let dir_name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let ep: MobileEpisode = read_json(dir, &dir_name)?;
    let id = ep.episode_id.clone();
    if ep.steps.is_empty() {
        return Err(episode_err(&id, "episode has no steps"));
    }
    let mut steps = Vec::new();
    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for (pos, s) in ep.steps.iter().enumerate() {
        let index = pos as u32 + 1;
        let full = load_rgb(dir, &id, &s.screenshot)?;
        let kind = mobile_kind(&s.action_type);
        let resolved = match (s.x, s.y, &s.accessibility_tree) {
            (Some(x), Some(y), Some(tree)) => resolve_element(tree, ElementQuery::Point { x, y }),
            _ => None,
        };
        let (mut element_name, mut full_bbox) = match resolved {
            Some((name, bbox)) => (Some(name), Some(bbox)),
            None => (None, None),
        };
        if full_bbox.is_none() {
            if let (Some(x), Some(y)) = (s.x, s.y) {
                warnings.push(format!("{id} step {index}: no element at ({x}, {y}); keeping the point"));
                full_bbox = Some(Rect::new(x, y, 1, 1));
            }
        }
        if matches!(kind, ActionKind::Other(ref k) if k == "open_app") {
            element_name = element_name.or_else(|| s.app_name.clone());
        }
        let highlighted = match full_bbox {
            Some(b) if resolved_is_box(b) => highlight_element(&full, b).unwrap_or_else(|_| full.clone()),
            _ => full.clone(),
        };
        let shot = downsize_android(&highlighted)?;
        let typed_text = match kind {
            ActionKind::TypeText => Some(s.text.clone().unwrap_or_default()),
            _ => None,
        };
        let path = screenshot_path(&id, index);
        images.push((path.clone(), shot));
        steps.push(Interaction {
            index,
            screenshot: ImageRef::Path(path),
            action: ActionRecord {
                kind,
                element_name,
                element_bbox: full_bbox.map(|b| scale_rect_down(b, ANDROID_DOWNSIZE_FACTOR)),
                typed_text,
            },
            original_index: None,
        });
    }
    Ok(ConvertedEpisode {
        trajectory: Trajectory {
            id,
            platform: Platform::Android,
            app_or_site: ep.app.clone().filter(|a| !a.is_empty()),
            steps,
            gold_intent: IntentStatement::new(ep.goal.trim()),
            gold_intent_raw: None,
        },
        source_label: ep.goal,
        images,
        warnings,
    })
}

fn resolved_is_box(b: Rect) -> bool {
    b.width > 1 || b.height > 1
}

/// Episode directories under `root`, sorted by name.
pub fn episode_dirs(root: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(root)
        .map_err(|e| episode_err(&root.display().to_string(), e.to_string()))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn convert_episode(layout: SourceLayout, dir: &Path, seed: u64) -> Result<ConvertedEpisode, IngestError> {
    match layout {
        SourceLayout::Mind2web => convert_web_episode(dir, seed),
        SourceLayout::Androidcontrol => convert_mobile_episode(dir),
    }
}
