//! Shared domain types and the canonical trajectory schema.
//!
//! A trajectory is stored as one JSON object per line. Screenshots are
//! either referenced by a path relative to the JSONL file's directory or
//! embedded inline as base64 PNG bytes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const PLATFORM_DELIMITER: &str = "; ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Web,
    Android,
}

/// Axis-aligned rectangle in pixel units. `x`/`y` may be negative for boxes
/// that hang off the top or left of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

impl Rect {
    pub const fn new(x: i64, y: i64, width: i64, height: i64) -> Self {
        Self { x, y, width, height }
    }

    pub fn right(&self) -> i64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.height
    }

    pub fn area(&self) -> i64 {
        self.width.max(0) * self.height.max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.width <= 0 || self.height <= 0
    }

    /// Half-open containment: the right and bottom edges are exclusive.
    pub fn contains_point(&self, px: i64, py: i64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        (r > x && b > y).then(|| Rect::new(x, y, r - x, b - y))
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Reference to a PNG screenshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    /// Path relative to the directory holding the trajectory file.
    Path(String),
    /// PNG bytes, base64-encoded on disk.
    Inline(#[serde(with = "base64_bytes")] Vec<u8>),
}

impl ImageRef {
    /// Loads the PNG bytes, resolving relative paths against `root`.
    pub fn load_bytes(&self, root: &Path) -> Result<Vec<u8>, ModelError> {
        match self {
            ImageRef::Inline(bytes) => Ok(bytes.clone()),
            ImageRef::Path(p) => {
                let full = root.join(p);
                std::fs::read(&full).map_err(|source| ModelError::Io {
                    path: full.display().to_string(),
                    source,
                })
            }
        }
    }
}

mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

/// Kind of user action. Unknown kinds are kept verbatim in `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Click,
    Hover,
    TypeText,
    Scroll,
    Navigate,
    Other(String),
}

impl ActionKind {
    pub fn as_str(&self) -> &str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Hover => "hover",
            ActionKind::TypeText => "type_text",
            ActionKind::Scroll => "scroll",
            ActionKind::Navigate => "navigate",
            ActionKind::Other(s) => s,
        }
    }
}

impl From<String> for ActionKind {
    fn from(s: String) -> Self {
        match s.as_str() {
            "click" => ActionKind::Click,
            "hover" => ActionKind::Hover,
            "type_text" => ActionKind::TypeText,
            "scroll" => ActionKind::Scroll,
            "navigate" => ActionKind::Navigate,
            _ => ActionKind::Other(s),
        }
    }
}

impl From<ActionKind> for String {
    fn from(k: ActionKind) -> Self {
        k.as_str().to_string()
    }
}

impl Serialize for ActionKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ActionKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(ActionKind::from)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_bbox: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typed_text: Option<String>,
}

impl ActionRecord {
    pub fn new(kind: ActionKind) -> Self {
        Self {
            kind,
            element_name: None,
            element_bbox: None,
            typed_text: None,
        }
    }

    pub fn click(name: impl Into<String>) -> Self {
        Self {
            element_name: Some(name.into()),
            ..Self::new(ActionKind::Click)
        }
    }

    pub fn type_text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            element_name: Some(name.into()),
            typed_text: Some(text.into()),
            ..Self::new(ActionKind::TypeText)
        }
    }

    pub fn with_bbox(mut self, bbox: Rect) -> Self {
        self.element_bbox = Some(bbox);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub index: u32,
    pub screenshot: ImageRef,
    pub action: ActionRecord,
    /// Index in the source trajectory before frame dropping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntentStatement {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_prefix: Option<String>,
}

impl IntentStatement {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            platform_prefix: None,
        }
    }

    /// Text handed to metrics. The platform identifier never reaches
    /// evaluation, including mentions left inside the intent body.
    pub fn eval_text(&self) -> String {
        match &self.platform_prefix {
            Some(prefix) => remove_platform_mentions(&self.text, prefix),
            None => self.text.clone(),
        }
    }
}

impl fmt::Display for IntentStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.platform_prefix {
            Some(p) => write!(f, "{p}{PLATFORM_DELIMITER}{}", self.text),
            None => f.write_str(&self.text),
        }
    }
}

/// Splits an "app-name/website; intent" label at the first `"; "`.
pub fn split_platform_prefix(label: &str) -> Result<IntentStatement, ModelError> {
    if label.trim().is_empty() {
        return Err(ModelError::EmptyLabel);
    }
    match label.split_once(PLATFORM_DELIMITER) {
        Some((prefix, rest)) => {
            if rest.trim().is_empty() {
                return Err(ModelError::EmptyIntent(label.to_string()));
            }
            Ok(IntentStatement {
                text: rest.trim().to_string(),
                platform_prefix: Some(prefix.trim().to_string()),
            })
        }
        None => Ok(IntentStatement::new(label)),
    }
}

/// Removes every case-insensitive mention of `platform` from `text`, along
/// with a directly preceding linking preposition ("on DoorDash",
/// "from DoorDash", ...). Whitespace is collapsed afterwards.
pub fn remove_platform_mentions(text: &str, platform: &str) -> String {
    const LINKERS: [&str; 6] = ["from", "on", "in", "at", "using", "via"];
    let platform = platform.trim();
    if platform.is_empty() {
        return text.to_string();
    }
    let lower = text.to_lowercase();
    let needle = platform.to_lowercase();
    // Byte offsets from the lowercase copy are only valid when lowercasing
    // preserved lengths, which holds for ASCII text.
    if lower.len() != text.len() {
        return text.replace(platform, " ").split_whitespace().collect::<Vec<_>>().join(" ");
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    while let Some(found) = lower[cursor..].find(&needle) {
        let start = cursor + found;
        let end = start + needle.len();
        let mut head = text[cursor..start].trim_end().to_string();
        let head_lower = head.to_lowercase();
        for linker in LINKERS {
            let is_word = head_lower.ends_with(linker)
                && head_lower[..head_lower.len() - linker.len()]
                    .chars()
                    .last()
                    .is_none_or(|c| c.is_whitespace());
            if is_word {
                head.truncate(head.len() - linker.len());
                break;
            }
        }
        out.push_str(&head);
        out.push(' ');
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    let collapsed = out.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches([',', ';', ' '])
        .trim_start_matches([',', ';', ' '])
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub platform: Platform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_or_site: Option<String>,
    pub steps: Vec<Interaction>,
    pub gold_intent: IntentStatement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_intent_raw: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Gold intent text as seen by metrics.
    pub fn gold_eval_text(&self) -> String {
        let text = self.gold_intent.eval_text();
        match &self.app_or_site {
            Some(app) => remove_platform_mentions(&text, app),
            None => text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub step_index: u32,
    pub screen_context: Vec<String>,
    pub user_actions: Vec<String>,
    pub speculative_intent: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_fallback: bool,
}

impl InteractionSummary {
    /// Screen context and user actions, without speculation.
    pub fn factual_lines(&self) -> impl Iterator<Item = &str> {
        self.screen_context
            .iter()
            .chain(self.user_actions.iter())
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cot,
    E2e,
    Decomposed,
    DecomposedLatencyOpt,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::E2e,
        Method::Cot,
        Method::Decomposed,
        Method::DecomposedLatencyOpt,
    ];

    pub fn cli_name(&self) -> &'static str {
        match self {
            Method::Cot => "cot",
            Method::E2e => "e2e",
            Method::Decomposed => "decomposed",
            Method::DecomposedLatencyOpt => "decomposed-latency-opt",
        }
    }

    pub fn is_decomposed(&self) -> bool {
        matches!(self, Method::Decomposed | Method::DecomposedLatencyOpt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Method {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cot" => Ok(Method::Cot),
            "e2e" => Ok(Method::E2e),
            "decomposed" => Ok(Method::Decomposed),
            "decomposed-latency-opt" => Ok(Method::DecomposedLatencyOpt),
            _ => Err(ModelError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    Summarize,
    Fuse,
    Cot,
    E2e,
    RefineLabel,
    CleanLabel,
    DecomposeFacts,
    JudgeEntailment,
}

/// One generation call made while running a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: CallRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    /// `None` only in hand-edited or foreign traces.
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    /// Counts toward end-of-session latency.
    pub end_of_session: bool,
    pub attempts: u32,
    pub image_count: u32,
    pub request_text: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub use_context_window: bool,
    pub structured_summaries: bool,
    pub refine_labels: bool,
    /// Fusion uses the fine-tuned stage-2 backend; `false` selects the
    /// prompted stage-2 backend instead.
    pub fine_tuned_fusion: bool,
    pub max_steps: u32,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            use_context_window: true,
            structured_summaries: true,
            refine_labels: true,
            fine_tuned_fusion: true,
            max_steps: 15,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_steps == 0 {
            return Err(ModelError::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub trajectory_id: String,
    pub method: Method,
    pub config: AblationConfig,
    /// Original indices of the steps that survived frame dropping.
    pub retained_steps: Vec<u32>,
    /// Stage-1 summaries as produced, speculative field included.
    pub summaries: Vec<InteractionSummary>,
    pub predicted_intent: Option<IntentStatement>,
    pub calls: Vec<CallRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineTrace {
    pub fn new(trajectory_id: impl Into<String>, method: Method, config: AblationConfig) -> Self {
        Self {
            trajectory_id: trajectory_id.into(),
            method,
            config,
            retained_steps: Vec::new(),
            summaries: Vec::new(),
            predicted_intent: None,
            calls: Vec::new(),
            warnings: Vec::new(),
            error: None,
        }
    }

    /// Summaries with the speculative field removed, as fed to fusion.
    pub fn stripped_summaries(&self) -> Vec<InteractionSummary> {
        self.summaries.iter().map(crate::pipeline::strip_speculative).collect()
    }

    /// The recorded summary for a step together with its stripped form.
    pub fn summary_pair(&self, step_index: u32) -> Option<(&InteractionSummary, InteractionSummary)> {
        self.summaries
            .iter()
            .find(|s| s.step_index == step_index)
            .map(|s| (s, crate::pipeline::strip_speculative(s)))
    }

    pub fn calls_with_role(&self, role: CallRole) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(move |c| c.role == role)
    }
}

/// A single invariant violation found by [`validate_trajectory`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "{} (field `{}`, step {step})", self.message, self.field),
            None => write!(f, "{} (field `{}`)", self.message, self.field),
        }
    }
}

fn violation(field: &str, step: Option<u32>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        step,
        message: message.into(),
    }
}

/// Checks every trajectory invariant. Path screenshots are resolved
/// against `root` and must decode as images.
pub fn validate_trajectory(t: &Trajectory, root: &Path) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.steps.is_empty() {
        out.push(violation("steps", None, "trajectory has no steps"));
    }
    for (pos, step) in t.steps.iter().enumerate() {
        let expected = pos as u32 + 1;
        if step.index != expected {
            out.push(violation(
                "steps.index",
                Some(step.index),
                format!("non-contiguous step index at position {expected}"),
            ));
        }
        check_action(&step.action, step.index, &mut out);
        match step.screenshot.load_bytes(root) {
            Ok(bytes) => {
                if image::load_from_memory(&bytes).is_err() {
                    out.push(violation(
                        "steps.screenshot",
                        Some(step.index),
                        "screenshot does not decode as an image",
                    ));
                }
            }
            Err(e) => out.push(violation("steps.screenshot", Some(step.index), e.to_string())),
        }
    }
    if t.gold_intent.text.trim().is_empty() {
        out.push(violation("gold_intent.text", None, "gold intent is empty"));
    }
    if let Some(prefix) = &t.gold_intent.platform_prefix {
        if prefix.contains(PLATFORM_DELIMITER) {
            out.push(violation(
                "gold_intent.platform_prefix",
                None,
                "platform prefix contains the delimiter",
            ));
        }
    }
    if let Some(app) = &t.app_or_site {
        if !app.is_empty() && t.gold_intent.text.contains(app.as_str()) {
            out.push(violation(
                "app_or_site",
                None,
                format!("platform identifier {app:?} appears inside the gold intent"),
            ));
        }
    }
    out
}

fn check_action(action: &ActionRecord, step: u32, out: &mut Vec<Violation>) {
    match action.kind {
        ActionKind::Click | ActionKind::Hover => {
            if action.element_name.is_none() && action.element_bbox.is_none() {
                out.push(violation(
                    "action",
                    Some(step),
                    format!("{} action has neither element_name nor element_bbox", action.kind),
                ));
            }
        }
        ActionKind::TypeText => {
            if action.typed_text.is_none() {
                out.push(violation("action.typed_text", Some(step), "type_text action has no typed_text"));
            }
        }
        _ => {}
    }
    if let Some(b) = action.element_bbox {
        if b.width < 0 || b.height < 0 {
            out.push(violation("action.element_bbox", Some(step), "negative bbox size"));
        }
    }
}

/// Reads a trajectory JSONL file. Blank lines are skipped.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trajectories(&text)
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>, ModelError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ModelError::Json { line: i + 1, source })
        })
        .collect()
}

pub fn to_jsonl(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        out.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
        out.push('\n');
    }
    out
}

/// Encodes bytes the way inline screenshots are stored.
pub fn encode_inline(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn three_step() -> Trajectory {
        synthetic::trajectory("t1", 3, 7)
    }

    #[test]
    fn well_formed_trajectory_has_no_violations() {
        assert_eq!(validate_trajectory(&three_step(), Path::new(".")), vec![]);
    }

    #[test]
    fn gap_in_step_indices_is_reported() {
        let mut t = three_step();
        t.steps.remove(1);
        t.steps[1].index = 3;
        let v = validate_trajectory(&t, Path::new("."));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "non-contiguous step index at position 2");
    }

    #[test]
    fn click_without_target_names_the_step() {
        let mut t = three_step();
        t.steps[1].action = ActionRecord::new(ActionKind::Click);
        let v = validate_trajectory(&t, Path::new("."));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].step, Some(2));
        assert!(v[0].to_string().contains("step 2"));
    }

    #[test]
    fn type_text_needs_text_and_bad_png_is_caught() {
        let mut t = three_step();
        t.steps[0].action = ActionRecord::new(ActionKind::TypeText);
        t.steps[2].screenshot = ImageRef::Inline(vec![1, 2, 3]);
        let v = validate_trajectory(&t, Path::new("."));
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn app_name_inside_gold_is_a_violation() {
        let mut t = three_step();
        t.app_or_site = Some("DoorDash".into());
        t.gold_intent = IntentStatement::new("order pizza from DoorDash");
        assert_eq!(validate_trajectory(&t, Path::new(".")).len(), 1);
    }

    #[test]
    fn split_examples() {
        let s = split_platform_prefix("DoorDash; order an olive pizza").unwrap();
        assert_eq!(s.platform_prefix.as_deref(), Some("DoorDash"));
        assert_eq!(s.text, "order an olive pizza");

        let s = split_platform_prefix("book a flight to LAX").unwrap();
        assert_eq!(s.platform_prefix, None);
        assert_eq!(s.text, "book a flight to LAX");

        let s = split_platform_prefix("a; b; c").unwrap();
        assert_eq!(s.platform_prefix.as_deref(), Some("a"));
        assert_eq!(s.text, "b; c");

        assert!(matches!(split_platform_prefix("  "), Err(ModelError::EmptyLabel)));
        assert!(split_platform_prefix("app; ").is_err());
    }

    #[test]
    fn remove_mentions_drops_linker() {
        assert_eq!(
            remove_platform_mentions("order an olive pizza from DoorDash", "DoorDash"),
            "order an olive pizza"
        );
        assert_eq!(remove_platform_mentions("Search doordash for sushi", "DoorDash"), "Search for sushi");
        assert_eq!(remove_platform_mentions("confirm the order", "DoorDash"), "confirm the order");
        // "on" inside a word is not a linker
        assert_eq!(remove_platform_mentions("Amazon Etsy deals", "Etsy"), "Amazon deals");
    }

    #[test]
    fn action_kind_round_trips_unknown_kinds() {
        let json = r#"{"kind":"long_press","element_name":"x"}"#;
        let a: ActionRecord = serde_json::from_str(json).unwrap();
        assert_eq!(a.kind, ActionKind::Other("long_press".into()));
        assert_eq!(serde_json::to_string(&a).unwrap(), json);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("decomposed-latency-opt".parse::<Method>().unwrap(), Method::DecomposedLatencyOpt);
        assert_eq!("decomposed_latency_opt".parse::<Method>().unwrap(), Method::DecomposedLatencyOpt);
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn rect_iou() {
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&Rect::new(20, 20, 5, 5)), 0.0);
        assert!((a.iou(&Rect::new(5, 0, 10, 10)) - 50.0 / 150.0).abs() < 1e-12);
    }
}
