//! Uniform access to generation backends.
//!
//! Every prompt-based step goes through [`Gateway::generate`], which renders
//! the request's template, enforces the per-backend in-flight cap, retries
//! transient failures with exponential backoff and fills in token counts
//! when the backend does not report them.

mod config;
mod http;
mod stub;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::GatewayError;
use crate::model::{CallRecord, CallRole};

pub use config::{BackendConfig, BackendKind};
pub use http::OpenAiChatBackend;
pub use stub::{synthetic_reply, Responder, ScriptRule, ScriptedBackend, StubReply, StubScript};
pub use template::{Template, TemplateSet, IMAGE_MARKER};

/// Fixed token cost of one attached image.
pub const IMAGE_TOKENS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Cot,
    E2e,
    Summarize,
    FuseIntent,
    RefineLabel,
    CleanLabel,
    DecomposeFacts,
    JudgeEntailment,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Cot,
        TemplateId::E2e,
        TemplateId::Summarize,
        TemplateId::FuseIntent,
        TemplateId::RefineLabel,
        TemplateId::CleanLabel,
        TemplateId::DecomposeFacts,
        TemplateId::JudgeEntailment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Cot => "cot",
            TemplateId::E2e => "e2e",
            TemplateId::Summarize => "summarize",
            TemplateId::FuseIntent => "fuse_intent",
            TemplateId::RefineLabel => "refine_label",
            TemplateId::CleanLabel => "clean_label",
            TemplateId::DecomposeFacts => "decompose_facts",
            TemplateId::JudgeEntailment => "judge_entailment",
        }
    }

    pub fn accepts_images(&self) -> bool {
        matches!(
            self,
            TemplateId::Cot | TemplateId::E2e | TemplateId::Summarize | TemplateId::FuseIntent
        )
    }

    pub fn role(&self) -> CallRole {
        match self {
            TemplateId::Cot => CallRole::Cot,
            TemplateId::E2e => CallRole::E2e,
            TemplateId::Summarize => CallRole::Summarize,
            TemplateId::FuseIntent => CallRole::Fuse,
            TemplateId::RefineLabel => CallRole::RefineLabel,
            TemplateId::CleanLabel => CallRole::CleanLabel,
            TemplateId::DecomposeFacts => CallRole::DecomposeFacts,
            TemplateId::JudgeEntailment => CallRole::JudgeEntailment,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// PNG bytes attached to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageData {
    pub label: String,
    pub png: Arc<Vec<u8>>,
}

impl ImageData {
    pub fn new(label: impl Into<String>, png: Vec<u8>) -> Self {
        Self {
            label: label.into(),
            png: Arc::new(png),
        }
    }
}

/// Where a call belongs, for scripting and error messages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CallContext {
    pub trajectory_id: Option<String>,
    pub step_index: Option<u32>,
}

impl CallContext {
    pub fn trajectory(id: &str) -> Self {
        Self {
            trajectory_id: Some(id.to_string()),
            step_index: None,
        }
    }

    pub fn step(id: &str, step: u32) -> Self {
        Self {
            trajectory_id: Some(id.to_string()),
            step_index: Some(step),
        }
    }
}

impl fmt::Display for CallContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.trajectory_id, self.step_index) {
            (Some(t), Some(s)) => write!(f, "trajectory {t} step {s}"),
            (Some(t), None) => write!(f, "trajectory {t}"),
            (None, Some(s)) => write!(f, "step {s}"),
            (None, None) => f.write_str("request"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub template: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub images: Vec<ImageData>,
    pub max_output_tokens: Option<u32>,
    pub context: CallContext,
}

impl GenerationRequest {
    pub fn new(template: TemplateId) -> Self {
        Self {
            template,
            variables: BTreeMap::new(),
            images: Vec::new(),
            max_output_tokens: None,
            context: CallContext::default(),
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn image(mut self, image: ImageData) -> Self {
        self.images.push(image);
        self
    }

    pub fn context(mut self, context: CallContext) -> Self {
        self.context = context;
        self
    }
}

/// A request after template substitution, as handed to a backend.
#[derive(Debug, Clone)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    pub text: String,
    pub variables: BTreeMap<String, String>,
    pub images: Vec<ImageData>,
    pub max_output_tokens: u32,
    pub context: CallContext,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    pub latency_seconds: Option<f64>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendFailure {
    pub transient: bool,
    pub message: String,
}

impl BackendFailure {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
        }
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendFailure>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_seconds: Option<f64>,
    pub attempts: u32,
    pub prompt_text: String,
    pub image_count: u32,
}

impl GenerationResult {
    pub fn to_call_record(&self, role: CallRole, step_index: Option<u32>, end_of_session: bool) -> CallRecord {
        CallRecord {
            role,
            step_index,
            input_tokens: Some(self.input_tokens),
            output_tokens: Some(self.output_tokens),
            end_of_session,
            attempts: self.attempts,
            image_count: self.image_count,
            request_text: self.prompt_text.clone(),
            response_text: self.text.clone(),
            latency_seconds: self.latency_seconds,
        }
    }
}

/// Something whose token cost can be estimated.
#[derive(Debug, Clone, Copy)]
pub enum TokenItem<'a> {
    Text(&'a str),
    Image,
}

/// Images cost a fixed [`IMAGE_TOKENS`]; text falls back to
/// `ceil(chars / 4)`.
pub fn estimate_tokens(item: TokenItem<'_>) -> u64 {
    match item {
        TokenItem::Image => IMAGE_TOKENS,
        TokenItem::Text(s) => (s.chars().count() as u64).div_ceil(4),
    }
}

fn estimate_prompt_tokens(prompt: &RenderedPrompt) -> u64 {
    let text = prompt.text.replace(IMAGE_MARKER, "");
    estimate_tokens(TokenItem::Text(&text)) + IMAGE_TOKENS * prompt.images.len() as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayLimits {
    pub max_concurrency: usize,
    pub retry_budget: u32,
    pub backoff_base: Duration,
    pub default_max_output_tokens: u32,
}

impl Default for GatewayLimits {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            retry_budget: 3,
            backoff_base: Duration::from_millis(500),
            default_max_output_tokens: 512,
        }
    }
}

/// Cloneable handle to one backend plus its templates and throttle.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    templates: Arc<TemplateSet>,
    permits: Arc<Semaphore>,
    limits: GatewayLimits,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("limits", &self.limits).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(
        backend: Arc<dyn Backend>,
        templates: TemplateSet,
        limits: GatewayLimits,
    ) -> Result<Self, GatewayError> {
        if limits.max_concurrency == 0 {
            return Err(GatewayError::Config("max_concurrency must be at least 1".into()));
        }
        Ok(Self {
            backend,
            templates: Arc::new(templates),
            permits: Arc::new(Semaphore::new(limits.max_concurrency)),
            limits,
        })
    }

    /// Stub-backed gateway with built-in templates and no backoff delay.
    pub fn with_stub(stub: Arc<ScriptedBackend>) -> Self {
        let limits = GatewayLimits {
            backoff_base: Duration::ZERO,
            ..GatewayLimits::default()
        };
        Self::new(stub, TemplateSet::builtin(), limits).expect("default limits are valid")
    }

    pub fn limits(&self) -> GatewayLimits {
        self.limits
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Validates a request and substitutes its template without calling
    /// the backend.
    pub fn render(&self, req: &GenerationRequest) -> Result<RenderedPrompt, GatewayError> {
        if !req.images.is_empty() && !req.template.accepts_images() {
            return Err(GatewayError::ImagesNotAllowed { template: req.template });
        }
        let text = self.templates.get(req.template).render(&req.variables)?;
        let markers = text.matches(IMAGE_MARKER).count();
        if markers != req.images.len() {
            return Err(GatewayError::ImageCountMismatch {
                template: req.template,
                markers,
                images: req.images.len(),
            });
        }
        Ok(RenderedPrompt {
            template: req.template,
            text,
            variables: req.variables.clone(),
            images: req.images.clone(),
            max_output_tokens: req.max_output_tokens.unwrap_or(self.limits.default_max_output_tokens),
            context: req.context.clone(),
        })
    }

    pub async fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let prompt = self.render(req)?;
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.backend.complete(&prompt).await {
                Ok(c) => {
                    let output_tokens = c
                        .output_tokens
                        .unwrap_or_else(|| estimate_tokens(TokenItem::Text(&c.text)));
                    return Ok(GenerationResult {
                        input_tokens: c.input_tokens.unwrap_or_else(|| estimate_prompt_tokens(&prompt)),
                        output_tokens,
                        text: c.text,
                        latency_seconds: c.latency_seconds,
                        attempts,
                        prompt_text: prompt.text.clone(),
                        image_count: prompt.images.len() as u32,
                    });
                }
                Err(failure) => {
                    let retries_used = attempts - 1;
                    if !failure.transient || retries_used >= self.limits.retry_budget {
                        return Err(GatewayError::Backend {
                            template: prompt.template,
                            context: prompt.context.to_string(),
                            attempts,
                            message: failure.message,
                        });
                    }
                    let delay = self.limits.backoff_base.saturating_mul(1 << retries_used.min(16));
                    tracing::debug!(template = %prompt.template, attempts, ?delay, "retrying transient failure");
                    if !delay.is_zero() {
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub_gateway() -> (Arc<ScriptedBackend>, Gateway) {
        let stub = Arc::new(ScriptedBackend::new());
        (stub.clone(), Gateway::with_stub(stub))
    }

    fn clean(label: &str) -> GenerationRequest {
        GenerationRequest::new(TemplateId::CleanLabel).var("label", label)
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(TokenItem::Image), 256);
        assert_eq!(estimate_tokens(TokenItem::Text("")), 0);
        assert_eq!(estimate_tokens(TokenItem::Text("abcdefghijklmnopq")), 5);
        assert_eq!(estimate_tokens(TokenItem::Text("abcd")), 1);
    }

    #[tokio::test]
    async fn scripted_reply_for_template_and_step() {
        let (stub, gw) = stub_gateway();
        stub.script(
            TemplateId::CleanLabel,
            None,
            Some(3),
            vec![StubReply::text_with_tokens("scripted", 11, 2)],
        );
        let req = clean("x").context(CallContext::step("t", 3));
        let r = gw.generate(&req).await.unwrap();
        assert_eq!((r.text.as_str(), r.input_tokens, r.output_tokens), ("scripted", 11, 2));
        // other steps fall through to the default responder (identity)
        let r = gw.generate(&clean("x").context(CallContext::step("t", 4))).await.unwrap();
        assert_eq!(r.text, "x");
    }

    #[tokio::test]
    async fn unbound_placeholder_makes_no_call() {
        let (stub, gw) = stub_gateway();
        let err = gw.generate(&GenerationRequest::new(TemplateId::CleanLabel)).await.unwrap_err();
        assert!(matches!(err, GatewayError::UnboundPlaceholder { .. }));
        assert!(err.is_configuration());
        assert_eq!(stub.call_count(), 0);
    }

    #[tokio::test]
    async fn images_rejected_for_text_templates() {
        let (stub, gw) = stub_gateway();
        let req = clean("x").image(ImageData::new("current", vec![0]));
        assert!(matches!(gw.generate(&req).await, Err(GatewayError::ImagesNotAllowed { .. })));
        assert_eq!(stub.call_count(), 0);
    }

    #[tokio::test]
    async fn retries_within_budget() {
        let (stub, gw) = stub_gateway();
        stub.script(
            TemplateId::CleanLabel,
            None,
            None,
            vec![StubReply::transient("503"), StubReply::transient("503"), StubReply::text("ok")],
        );
        let r = gw.generate(&clean("x")).await.unwrap();
        assert_eq!(r.text, "ok");
        assert_eq!(r.attempts, 3);
        assert_eq!(stub.call_count(), 3);
    }

    #[tokio::test]
    async fn retry_budget_exhausted() {
        let stub = Arc::new(ScriptedBackend::new());
        let gw = Gateway::new(
            stub.clone(),
            TemplateSet::builtin(),
            GatewayLimits {
                retry_budget: 1,
                backoff_base: Duration::ZERO,
                ..GatewayLimits::default()
            },
        )
        .unwrap();
        stub.script(TemplateId::CleanLabel, None, None, vec![StubReply::transient("busy")]);
        let err = gw.generate(&clean("x").context(CallContext::step("traj-9", 2))).await.unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("clean_label") && msg.contains("traj-9") && msg.contains("2 attempt"), "{msg}");
        assert_eq!(stub.call_count(), 2);
    }

    #[tokio::test]
    async fn permanent_failures_are_not_retried() {
        let (stub, gw) = stub_gateway();
        stub.script(TemplateId::CleanLabel, None, None, vec![StubReply::permanent("400 bad request")]);
        assert!(gw.generate(&clean("x")).await.is_err());
        assert_eq!(stub.call_count(), 1);
    }

    #[tokio::test]
    async fn fallback_token_counts_include_images() {
        let (_stub, gw) = stub_gateway();
        let req = GenerationRequest::new(TemplateId::E2e)
            .var("steps", format!("Screen {IMAGE_MARKER}"))
            .image(ImageData::new("s1", vec![1]));
        let prompt = gw.render(&req).unwrap();
        let r = gw.generate(&req).await.unwrap();
        let expected = (prompt.text.replace(IMAGE_MARKER, "").chars().count() as u64).div_ceil(4) + 256;
        assert_eq!(r.input_tokens, expected);
        assert_eq!(r.image_count, 1);
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 4)]
    async fn in_flight_cap_is_enforced() {
        let stub = Arc::new(ScriptedBackend::new().with_delay(Duration::from_millis(20)));
        let gw = Gateway::new(
            stub.clone(),
            TemplateSet::builtin(),
            GatewayLimits {
                max_concurrency: 2,
                ..GatewayLimits::default()
            },
        )
        .unwrap();
        let reqs: Vec<_> = (0..8).map(|i| clean(&format!("l{i}"))).collect();
        let results = futures::future::join_all(reqs.iter().map(|r| gw.generate(r))).await;
        assert!(results.iter().all(Result::is_ok));
        assert_eq!(stub.max_in_flight(), 2);
        // results come back in request order
        assert_eq!(results[5].as_ref().unwrap().text, "l5");
    }
}
