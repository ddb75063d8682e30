//! Intent extraction methods: the two-stage decomposed pipeline, its
//! latency-optimized variant and the single-call baselines.

mod finetune;
mod frames;
mod summary;

use std::path::{Path, PathBuf};

use futures::future::join_all;

use crate::error::PipelineError;
use crate::gateway::{CallContext, Gateway, GenerationRequest, GenerationResult, ImageData, TemplateId};
use crate::ingest::format_action_string;
use crate::model::{
    split_platform_prefix, AblationConfig, CallRecord, CallRole, IntentStatement, Interaction,
    InteractionSummary, Method, PipelineTrace, Trajectory,
};

pub use finetune::{build_finetune_dataset, refine_label, FinetuneBuild, FinetuneExample, FinetuneRecord, RefinedLabel};
pub use frames::{build_context_window, drop_frames, ContextWindow};
pub use summary::{parse_structured_summary, render_summaries, FREEFORM_FORMAT, STRUCTURED_FORMAT};

/// Gateways used by a run. Each role can point at a different model.
#[derive(Debug, Clone)]
pub struct Backends {
    /// Stage-1 summarizer.
    pub stage1: Gateway,
    /// Fine-tuned stage-2 fusion model.
    pub stage2: Gateway,
    /// Prompted stage-2 model, used when fine-tuned fusion is disabled.
    pub stage2_prompted: Gateway,
    /// Single-call baselines.
    pub baseline: Gateway,
    /// Label refinement for fine-tuning data.
    pub refine: Gateway,
}

impl Backends {
    pub fn single(gateway: Gateway) -> Self {
        Self {
            stage1: gateway.clone(),
            stage2: gateway.clone(),
            stage2_prompted: gateway.clone(),
            baseline: gateway.clone(),
            refine: gateway,
        }
    }

    fn fusion(&self, cfg: &AblationConfig) -> &Gateway {
        if cfg.fine_tuned_fusion {
            &self.stage2
        } else {
            &self.stage2_prompted
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunContext {
    /// Directory that relative screenshot paths resolve against.
    pub root: PathBuf,
    pub seed: u64,
}

impl RunContext {
    pub fn new(root: impl Into<PathBuf>, seed: u64) -> Self {
        Self { root: root.into(), seed }
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: PipelineError,
    pub partial: PipelineTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.partial.trajectory_id, self.error)
    }
}

impl std::error::Error for RunFailure {}

fn fail(mut partial: PipelineTrace, error: PipelineError) -> RunFailure {
    partial.error = Some(error.to_string());
    RunFailure { error, partial }
}

/// Removes the speculative field. Everything else is kept as is.
pub fn strip_speculative(s: &InteractionSummary) -> InteractionSummary {
    InteractionSummary {
        speculative_intent: Vec::new(),
        ..s.clone()
    }
}

fn load_image(step: &Interaction, root: &Path) -> Result<ImageData, PipelineError> {
    let bytes = step.screenshot.load_bytes(root)?;
    Ok(ImageData::new(format!("step {}", step.index), bytes))
}

fn neighbour_block<'a>(label: &str, step: Option<&'a Interaction>) -> (String, Option<&'a Interaction>) {
    match step {
        Some(s) => (
            format!("\n{label} interaction (context only):\nScreen: {}\nAction: {}\n",
                crate::gateway::IMAGE_MARKER, format_action_string(&s.action)),
            Some(s),
        ),
        None => (String::new(), None),
    }
}

/// Stage 1 for one interaction. Returns the summary and every call made
/// for it. A structured reply that cannot be parsed is retried once; after
/// that the raw text is kept as the only user action and the summary is
/// flagged.
pub async fn summarize_interaction(
    window: ContextWindow<'_>,
    cfg: &AblationConfig,
    gateway: &Gateway,
    trajectory_id: &str,
    root: &Path,
) -> Result<(InteractionSummary, Vec<GenerationResult>), PipelineError> {
    let step = window.current.index;
    let (prev_block, prev, next_block, next) = if cfg.use_context_window {
        let (pb, p) = neighbour_block("Previous", window.previous);
        let (nb, n) = neighbour_block("Next", window.next);
        (pb, p, nb, n)
    } else {
        (String::new(), None, String::new(), None)
    };
    let mut req = GenerationRequest::new(TemplateId::Summarize)
        .var("previous", prev_block)
        .var("current_action", format_action_string(&window.current.action))
        .var("next", next_block)
        .var("format", if cfg.structured_summaries { STRUCTURED_FORMAT } else { FREEFORM_FORMAT })
        .context(CallContext::step(trajectory_id, step));
    for s in prev.into_iter().chain([window.current]).chain(next) {
        req = req.image(load_image(s, root)?);
    }

    let mut results = Vec::new();
    let first = gateway.generate(&req).await?;
    let text = first.text.clone();
    results.push(first);
    if !cfg.structured_summaries {
        let summary = InteractionSummary {
            step_index: step,
            screen_context: Vec::new(),
            user_actions: vec![text.trim().to_string()],
            speculative_intent: Vec::new(),
            parse_fallback: false,
        };
        return Ok((summary, results));
    }
    if let Some(s) = parse_structured_summary(&text, step) {
        return Ok((s, results));
    }
    let retry = gateway.generate(&req).await?;
    let retry_text = retry.text.clone();
    results.push(retry);
    let summary = parse_structured_summary(&retry_text, step).unwrap_or_else(|| InteractionSummary {
        step_index: step,
        screen_context: Vec::new(),
        user_actions: vec![retry_text.trim().to_string()],
        speculative_intent: Vec::new(),
        parse_fallback: true,
    });
    Ok((summary, results))
}

/// The text after the last line starting with `Intent:`, if any.
pub fn extract_intent_line(text: &str) -> Option<String> {
    text.lines().rev().find_map(|l| {
        let t = l.trim().trim_start_matches(['*', '#', ' ']);
        let head = t.get(..7)?;
        head.eq_ignore_ascii_case("intent:")
            .then(|| t[7..].trim().trim_matches('*').trim().to_string())
    })
}

fn to_intent(text: &str) -> Result<IntentStatement, PipelineError> {
    let body = extract_intent_line(text).unwrap_or_else(|| text.trim().to_string());
    let body = body.trim().trim_matches('"').trim();
    if body.is_empty() {
        return Err(PipelineError::EmptyIntent);
    }
    split_platform_prefix(body).map_err(|_| PipelineError::EmptyIntent)
}

/// Builds the stage-2 request. `final_step` carries the last interaction
/// unsummarized (latency-optimized variant).
pub fn fusion_request(
    summaries: &[InteractionSummary],
    final_step: Option<(&Interaction, ImageData)>,
    trajectory_id: &str,
) -> Result<GenerationRequest, PipelineError> {
    if summaries.is_empty() && final_step.is_none() {
        return Err(PipelineError::InvalidInput("fusion needs at least one summary".into()));
    }
    if summaries.iter().any(|s| !s.speculative_intent.is_empty()) {
        return Err(PipelineError::InvalidInput(
            "summaries passed to fusion must have the speculative field stripped".into(),
        ));
    }
    let mut req = GenerationRequest::new(TemplateId::FuseIntent)
        .var("summaries", render_summaries(summaries))
        .context(CallContext::trajectory(trajectory_id));
    match final_step {
        Some((step, image)) => {
            req = req
                .var(
                    "final_screen",
                    format!(
                        "Final interaction (not summarized):\nScreen: {}\nAction: {}\n",
                        crate::gateway::IMAGE_MARKER,
                        format_action_string(&step.action)
                    ),
                )
                .image(image);
        }
        None => req = req.var("final_screen", ""),
    }
    Ok(req)
}

/// Stage 2: fuses stripped summaries into one intent.
pub async fn fuse_intent(
    summaries: &[InteractionSummary],
    final_step: Option<(&Interaction, ImageData)>,
    gateway: &Gateway,
    trajectory_id: &str,
) -> Result<(IntentStatement, GenerationResult), PipelineError> {
    let req = fusion_request(summaries, final_step, trajectory_id)?;
    let result = gateway.generate(&req).await?;
    let intent = to_intent(&result.text)?;
    Ok((intent, result))
}

fn steps_block(steps: &[Interaction]) -> String {
    steps
        .iter()
        .map(|s| {
            format!(
                "Interaction {}:\nScreen: {}\nAction: {}\n",
                s.index,
                crate::gateway::IMAGE_MARKER,
                format_action_string(&s.action)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn prepare(t: &Trajectory, method: Method, cfg: &AblationConfig, ctx: &RunContext) -> Result<(Trajectory, PipelineTrace), RunFailure> {
    let trace = PipelineTrace::new(&t.id, method, *cfg);
    if let Err(e) = cfg.validate() {
        return Err(fail(trace, e.into()));
    }
    if t.steps.is_empty() {
        return Err(fail(trace, PipelineError::InvalidInput("trajectory has no steps".into())));
    }
    let kept = drop_frames(t, cfg.max_steps, ctx.seed);
    let mut trace = trace;
    trace.retained_steps = kept.steps.iter().map(|s| s.original_index.unwrap_or(s.index)).collect();
    if kept.steps.len() < t.steps.len() {
        trace.warnings.push(format!("dropped {} of {} steps", t.steps.len() - kept.steps.len(), t.steps.len()));
    }
    Ok((kept, trace))
}

async fn single_call(
    t: &Trajectory,
    method: Method,
    cfg: &AblationConfig,
    gateway: &Gateway,
    ctx: &RunContext,
) -> Result<PipelineTrace, RunFailure> {
    let (kept, mut trace) = prepare(t, method, cfg, ctx)?;
    let (template, role) = match method {
        Method::Cot => (TemplateId::Cot, CallRole::Cot),
        _ => (TemplateId::E2e, CallRole::E2e),
    };
    let mut req = GenerationRequest::new(template)
        .var("steps", steps_block(&kept.steps))
        .context(CallContext::trajectory(&t.id));
    for s in &kept.steps {
        match load_image(s, &ctx.root) {
            Ok(img) => req = req.image(img),
            Err(e) => return Err(fail(trace, e)),
        }
    }
    let result = match gateway.generate(&req).await {
        Ok(r) => r,
        Err(e) => return Err(fail(trace, e.into())),
    };
    trace.calls.push(result.to_call_record(role, None, true));
    if method == Method::Cot && extract_intent_line(&result.text).is_none() {
        trace.warnings.push("no 'Intent:' line in reasoning output; using the whole reply".into());
    }
    match to_intent(&result.text) {
        Ok(intent) => {
            trace.predicted_intent = Some(intent);
            Ok(trace)
        }
        Err(e) => Err(fail(trace, e)),
    }
}

/// Single call with step-by-step reasoning; the intent is read from the
/// final `Intent:` line.
pub async fn run_cot(t: &Trajectory, cfg: &AblationConfig, gateway: &Gateway, ctx: &RunContext) -> Result<PipelineTrace, RunFailure> {
    single_call(t, Method::Cot, cfg, gateway, ctx).await
}

/// Single call that answers with the intent directly.
pub async fn run_e2e(t: &Trajectory, cfg: &AblationConfig, gateway: &Gateway, ctx: &RunContext) -> Result<PipelineTrace, RunFailure> {
    single_call(t, Method::E2e, cfg, gateway, ctx).await
}

async fn decomposed(
    t: &Trajectory,
    method: Method,
    cfg: &AblationConfig,
    backends: &Backends,
    ctx: &RunContext,
) -> Result<PipelineTrace, RunFailure> {
    let (kept, mut trace) = prepare(t, method, cfg, ctx)?;
    let n = kept.steps.len();
    let summarized = if method == Method::DecomposedLatencyOpt { n - 1 } else { n };

    let jobs = (1..=summarized).map(|i| {
        let kept = &kept;
        async move {
            let window = build_context_window(kept, i)?;
            summarize_interaction(window, cfg, &backends.stage1, &kept.id, &ctx.root).await
        }
    });
    let mut first_error = None;
    for (i, outcome) in join_all(jobs).await.into_iter().enumerate() {
        let step = i as u32 + 1;
        match outcome {
            Ok((summary, results)) => {
                // Only the final summary of the plain variant runs after the
                // session ends.
                let eos = method == Method::Decomposed && step as usize == n;
                for r in &results {
                    trace.calls.push(r.to_call_record(CallRole::Summarize, Some(step), eos));
                }
                if summary.parse_fallback {
                    trace.warnings.push(format!("step {step}: summary did not parse; kept raw text"));
                }
                trace.summaries.push(summary);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(fail(trace, e));
    }

    let stripped = trace.stripped_summaries();
    let final_step = if method == Method::DecomposedLatencyOpt {
        let last = &kept.steps[n - 1];
        match load_image(last, &ctx.root) {
            Ok(img) => Some((last, img)),
            Err(e) => return Err(fail(trace, e)),
        }
    } else {
        None
    };
    let gateway = backends.fusion(cfg);
    let req = match fusion_request(&stripped, final_step, &t.id) {
        Ok(r) => r,
        Err(e) => return Err(fail(trace, e)),
    };
    let result = match gateway.generate(&req).await {
        Ok(r) => r,
        Err(e) => return Err(fail(trace, e.into())),
    };
    trace.calls.push(result.to_call_record(CallRole::Fuse, None, true));
    match to_intent(&result.text) {
        Ok(intent) => {
            trace.predicted_intent = Some(intent);
            Ok(trace)
        }
        Err(e) => Err(fail(trace, e)),
    }
}

/// Summarize every step, then fuse. Stage-1 calls run concurrently up to
/// the gateway's limit.
pub async fn run_decomposed(t: &Trajectory, cfg: &AblationConfig, backends: &Backends, ctx: &RunContext) -> Result<PipelineTrace, RunFailure> {
    decomposed(t, Method::Decomposed, cfg, backends, ctx).await
}

/// Summarize steps 1..n-1 while the session is running; at the end make a
/// single fusion call that also sees the final screen and action.
pub async fn run_latency_optimized(t: &Trajectory, cfg: &AblationConfig, backends: &Backends, ctx: &RunContext) -> Result<PipelineTrace, RunFailure> {
    decomposed(t, Method::DecomposedLatencyOpt, cfg, backends, ctx).await
}

pub async fn run_method(
    t: &Trajectory,
    method: Method,
    cfg: &AblationConfig,
    backends: &Backends,
    ctx: &RunContext,
) -> Result<PipelineTrace, RunFailure> {
    match method {
        Method::Cot => run_cot(t, cfg, &backends.baseline, ctx).await,
        Method::E2e => run_e2e(t, cfg, &backends.baseline, ctx).await,
        Method::Decomposed => run_decomposed(t, cfg, backends, ctx).await,
        Method::DecomposedLatencyOpt => run_latency_optimized(t, cfg, backends, ctx).await,
    }
}

/// Calls that run after the session ends.
pub fn end_of_session_calls(trace: &PipelineTrace) -> Vec<&CallRecord> {
    trace.calls.iter().filter(|c| c.end_of_session).collect()
}
