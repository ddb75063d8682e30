//! Deterministic scripted backend for offline runs and tests.
//!
//! Replies are looked up by `(template, trajectory, step)`, most specific
//! key first. A scripted queue pops one reply per call and keeps repeating
//! its last entry. Requests with no script go to the responder, which by
//! default is [`synthetic_reply`]: a pure function of the rendered prompt.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

use super::{Backend, BackendFailure, Completion, RenderedPrompt, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StubReply {
    Text {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_tokens: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_tokens: Option<u64>,
    },
    Fail {
        fail: String,
        #[serde(default = "default_true")]
        transient: bool,
    },
}

fn default_true() -> bool {
    true
}

impl StubReply {
    pub fn text(text: impl Into<String>) -> Self {
        StubReply::Text {
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
        }
    }

    pub fn text_with_tokens(text: impl Into<String>, input: u64, output: u64) -> Self {
        StubReply::Text {
            text: text.into(),
            input_tokens: Some(input),
            output_tokens: Some(output),
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        StubReply::Fail {
            fail: message.into(),
            transient: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        StubReply::Fail {
            fail: message.into(),
            transient: false,
        }
    }

    fn into_result(self) -> Result<Completion, BackendFailure> {
        match self {
            StubReply::Text {
                text,
                input_tokens,
                output_tokens,
            } => Ok(Completion {
                text,
                input_tokens,
                output_tokens,
                latency_seconds: None,
            }),
            StubReply::Fail { fail, transient } => Err(BackendFailure {
                transient,
                message: fail,
            }),
        }
    }
}

/// One entry of a stub script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub template: TemplateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    pub replies: Vec<StubReply>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    pub rules: Vec<ScriptRule>,
}

impl StubScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("stub script {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("stub script {}: {e}", path.display())))
    }
}

pub type Responder = Arc<dyn Fn(&RenderedPrompt) -> StubReply + Send + Sync>;

type Key = (TemplateId, Option<String>, Option<u32>);

pub struct ScriptedBackend {
    scripts: Mutex<HashMap<Key, VecDeque<StubReply>>>,
    responder: Responder,
    log: Mutex<Vec<RenderedPrompt>>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay: Duration,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("calls", &self.call_count())
            .finish_non_exhaustive()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::with_responder(Arc::new(synthetic_reply))
    }

    pub fn with_responder(responder: Responder) -> Self {
        Self {
            scripts: Mutex::new(HashMap::new()),
            responder,
            log: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            delay: Duration::ZERO,
        }
    }

    pub fn from_script(script: StubScript) -> Self {
        let stub = Self::new();
        for rule in script.rules {
            stub.script(rule.template, rule.trajectory_id.as_deref(), rule.step_index, rule.replies);
        }
        stub
    }

    /// Simulated per-call latency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn script(
        &self,
        template: TemplateId,
        trajectory_id: Option<&str>,
        step_index: Option<u32>,
        replies: Vec<StubReply>,
    ) {
        if replies.is_empty() {
            return;
        }
        self.scripts
            .lock()
            .unwrap()
            .insert((template, trajectory_id.map(str::to_string), step_index), replies.into());
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// Every prompt received so far, in arrival order.
    pub fn requests(&self) -> Vec<RenderedPrompt> {
        self.log.lock().unwrap().clone()
    }

    pub fn requests_for(&self, template: TemplateId) -> Vec<RenderedPrompt> {
        self.requests().into_iter().filter(|p| p.template == template).collect()
    }

    fn next_scripted(&self, prompt: &RenderedPrompt) -> Option<StubReply> {
        let traj = prompt.context.trajectory_id.clone();
        let step = prompt.context.step_index;
        let keys = [
            (prompt.template, traj.clone(), step),
            (prompt.template, None, step),
            (prompt.template, traj, None),
            (prompt.template, None, None),
        ];
        let mut scripts = self.scripts.lock().unwrap();
        for key in keys {
            // a step-specific rule never matches a request without a step
            if key.2.is_some() && step.is_none() {
                continue;
            }
            if let Some(queue) = scripts.get_mut(&key) {
                return if queue.len() > 1 { queue.pop_front() } else { queue.front().cloned() };
            }
        }
        None
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.log.lock().unwrap().push(prompt.clone());
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let reply = self.next_scripted(prompt).unwrap_or_else(|| (self.responder)(prompt));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply.into_result()
    }
}

fn var<'a>(prompt: &'a RenderedPrompt, name: &str) -> &'a str {
    prompt.variables.get(name).map(String::as_str).unwrap_or("")
}

fn bullets(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter_map(|l| l.strip_prefix("- "))
        .map(str::trim)
}

/// Splits an intent into clause-level facts the way a cooperative judge
/// model would for simple sentences.
fn naive_facts(intent: &str) -> Vec<String> {
    let mut parts: Vec<String> = intent.lines().map(|l| l.trim().to_string()).collect();
    for sep in [", then ", ", ", " and "] {
        parts = parts
            .iter()
            .flat_map(|p| p.split(sep).map(str::trim).map(String::from).collect::<Vec<_>>())
            .filter(|p| !p.is_empty())
            .collect();
    }
    parts
}

/// Default stub behaviour per template. Pure and deterministic.
pub fn synthetic_reply(prompt: &RenderedPrompt) -> StubReply {
    let step = prompt.context.step_index.unwrap_or(0);
    let traj = prompt.context.trajectory_id.as_deref().unwrap_or("-");
    let text = match prompt.template {
        TemplateId::Summarize if var(prompt, "format").contains("SCREEN CONTEXT:") => format!(
            "SCREEN CONTEXT:\n- screen {step} is displayed\nUSER ACTION:\n- {}\nSPECULATIVE INTENT:\n- the user may be pursuing hidden goal {traj}/{step}",
            var(prompt, "current_action")
        ),
        TemplateId::Summarize => format!(
            "Screen {step} is displayed and the user did {}. Perhaps they are pursuing hidden goal {traj}/{step}.",
            var(prompt, "current_action")
        ),
        TemplateId::FuseIntent => {
            let summaries = var(prompt, "summaries");
            let mut in_actions = false;
            let mut actions = Vec::new();
            for line in summaries.lines().map(str::trim) {
                if line.eq_ignore_ascii_case("user actions:") {
                    in_actions = true;
                } else if line.ends_with(':') || line.is_empty() {
                    in_actions = false;
                } else if in_actions {
                    if let Some(a) = line.strip_prefix("- ") {
                        actions.push(a.to_string());
                    }
                }
            }
            if !var(prompt, "final_screen").trim().is_empty() {
                actions.push("finish on the final screen".into());
            }
            if actions.is_empty() {
                "complete the session".to_string()
            } else {
                actions.join(", then ")
            }
        }
        TemplateId::Cot | TemplateId::E2e => {
            let actions: Vec<&str> = var(prompt, "steps")
                .lines()
                .filter_map(|l| l.trim().strip_prefix("Action: "))
                .collect();
            let intent = actions.join(", then ");
            if prompt.template == TemplateId::Cot {
                let mut out = String::new();
                for (i, a) in actions.iter().enumerate() {
                    out.push_str(&format!("Step {}: the user does {a}\n", i + 1));
                }
                out.push_str(&format!("Intent: {intent}"));
                out
            } else {
                intent
            }
        }
        TemplateId::RefineLabel => var(prompt, "intent").to_string(),
        TemplateId::CleanLabel => var(prompt, "label").to_string(),
        TemplateId::DecomposeFacts => naive_facts(var(prompt, "intent"))
            .iter()
            .map(|f| format!("- {f}"))
            .collect::<Vec<_>>()
            .join("\n"),
        TemplateId::JudgeEntailment => {
            let fact = var(prompt, "fact").trim().to_lowercase();
            let supported = bullets(var(prompt, "facts")).any(|f| f.to_lowercase() == fact);
            if supported { "yes" } else { "no" }.to_string()
        }
    };
    StubReply::text(text)
}
