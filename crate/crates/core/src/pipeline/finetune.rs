//! Stage-2 training data: stripped stage-1 summaries paired with
//! (optionally refined) gold intents.

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::gateway::{CallContext, Gateway, GenerationRequest, TemplateId};
use crate::model::{AblationConfig, CallRecord, CallRole, IntentStatement, InteractionSummary, Method, Trajectory};

use super::{fusion_request, render_summaries, run_method, Backends, RunContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedLabel {
    pub trajectory_id: String,
    pub before: IntentStatement,
    pub after: IntentStatement,
    pub was_refined: bool,
    /// Set when the refiner returned nothing and the original was kept.
    pub flagged: bool,
    pub call: CallRecord,
}

/// Rewrites a gold intent so it carries only details the summaries
/// support. An empty reply keeps the original and flags it.
pub async fn refine_label(
    gold: &IntentStatement,
    summaries: &[InteractionSummary],
    gateway: &Gateway,
    trajectory_id: &str,
) -> Result<RefinedLabel, PipelineError> {
    if summaries.iter().any(|s| !s.speculative_intent.is_empty()) {
        return Err(PipelineError::InvalidInput(
            "refinement takes summaries with the speculative field stripped".into(),
        ));
    }
    let req = GenerationRequest::new(TemplateId::RefineLabel)
        .var("intent", gold.text.clone())
        .var("summaries", render_summaries(summaries))
        .context(CallContext::trajectory(trajectory_id));
    let result = gateway.generate(&req).await?;
    let call = result.to_call_record(CallRole::RefineLabel, None, false);
    let text = result.text.trim().trim_matches('"').trim();
    let (after, flagged) = if text.is_empty() {
        (gold.clone(), true)
    } else {
        let mut refined = crate::model::split_platform_prefix(text).unwrap_or_else(|_| IntentStatement::new(text));
        if refined.platform_prefix.is_none() {
            refined.platform_prefix = gold.platform_prefix.clone();
        }
        (refined, false)
    };
    Ok(RefinedLabel {
        trajectory_id: trajectory_id.to_string(),
        was_refined: after.text != gold.text,
        before: gold.clone(),
        after,
        flagged,
        call,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneExample {
    pub trajectory_id: String,
    pub summaries: Vec<InteractionSummary>,
    /// The exact prompt text the fusion model sees for these summaries.
    pub input: String,
    pub target: IntentStatement,
    pub original_target: IntentStatement,
    pub target_was_refined: bool,
}

/// Exported training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub input: String,
    pub target: String,
}

impl FinetuneExample {
    pub fn record(&self) -> FinetuneRecord {
        FinetuneRecord {
            input: self.input.clone(),
            target: self.target.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FinetuneBuild {
    pub examples: Vec<FinetuneExample>,
    /// Trajectories left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub refinements: Vec<RefinedLabel>,
}

impl FinetuneBuild {
    pub fn to_jsonl(&self) -> String {
        self.examples
            .iter()
            .map(|e| serde_json::to_string(&e.record()).expect("records serialize") + "\n")
            .collect()
    }
}

async fn one_example(
    t: &Trajectory,
    cfg: &AblationConfig,
    backends: &Backends,
    ctx: &RunContext,
) -> Result<(FinetuneExample, Option<RefinedLabel>), String> {
    // Only stage 1 matters here, but running the whole pipeline keeps the
    // summaries identical to what inference produces.
    let trace = match run_method(t, Method::Decomposed, cfg, backends, ctx).await {
        Ok(trace) => trace,
        Err(f) if f.partial.summaries.len() == f.partial.retained_steps.len() && !f.partial.summaries.is_empty() => f.partial,
        Err(f) => return Err(f.error.to_string()),
    };
    let stripped = trace.stripped_summaries();
    let gold = &t.gold_intent;
    let refined = if cfg.refine_labels {
        Some(refine_label(gold, &stripped, &backends.refine, &t.id).await.map_err(|e| e.to_string())?)
    } else {
        None
    };
    let target = refined.as_ref().map(|r| r.after.clone()).unwrap_or_else(|| gold.clone());
    let req = fusion_request(&stripped, None, &t.id).map_err(|e| e.to_string())?;
    let input = backends.fusion(cfg).render(&req).map_err(|e| e.to_string())?.text;
    Ok((
        FinetuneExample {
            trajectory_id: t.id.clone(),
            summaries: stripped,
            input,
            target_was_refined: refined.as_ref().is_some_and(|r| r.was_refined),
            original_target: gold.clone(),
            target,
        },
        refined,
    ))
}

/// Builds one example per trajectory, in input order. Trajectories whose
/// summaries cannot be produced are skipped and listed.
pub async fn build_finetune_dataset(
    trajectories: &[Trajectory],
    cfg: &AblationConfig,
    backends: &Backends,
    ctx: &RunContext,
    parallelism: usize,
) -> FinetuneBuild {
    let outcomes: Vec<_> = stream::iter(trajectories)
        .map(|t| async move { (t.id.clone(), one_example(t, cfg, backends, ctx).await) })
        .buffered(parallelism.max(1))
        .collect()
        .await;
    let mut build = FinetuneBuild::default();
    for (id, outcome) in outcomes {
        match outcome {
            Ok((example, refined)) => {
                build.examples.push(example);
                build.refinements.extend(refined);
            }
            Err(reason) => build.skipped.push((id, reason)),
        }
    }
    build
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{ScriptedBackend, StubReply};
    use crate::synthetic;

    #[tokio::test]
    async fn refinement_keeps_original_on_empty_reply() {
        let stub = Arc::new(ScriptedBackend::new());
        stub.script(TemplateId::RefineLabel, None, None, vec![StubReply::text("  ")]);
        let gw = Gateway::with_stub(stub);
        let gold = IntentStatement::new("Order a pizza");
        let r = refine_label(&gold, &[], &gw, "t").await.unwrap();
        assert!(r.flagged);
        assert!(!r.was_refined);
        assert_eq!(r.after, gold);
    }

    #[tokio::test]
    async fn refinement_drops_unsupported_detail() {
        let stub = Arc::new(ScriptedBackend::new());
        stub.script(TemplateId::RefineLabel, None, None, vec![StubReply::text("Order a pizza")]);
        let gw = Gateway::with_stub(stub);
        let mut gold = IntentStatement::new("Order a large pizza for Friday");
        gold.platform_prefix = Some("DoorDash".into());
        let r = refine_label(&gold, &[], &gw, "t").await.unwrap();
        assert!(r.was_refined);
        assert_eq!(r.after.to_string(), "DoorDash; Order a pizza");
    }

    #[tokio::test]
    async fn dataset_has_stripped_inputs_and_skips_failures() {
        let stub = Arc::new(ScriptedBackend::new());
        stub.script(TemplateId::Summarize, Some("syn-001"), None, vec![StubReply::permanent("gone")]);
        let backends = Backends::single(Gateway::with_stub(stub));
        let corpus = synthetic::corpus(3, 4, 5);
        let build = build_finetune_dataset(&corpus, &AblationConfig::default(), &backends, &RunContext::new(".", 1), 2).await;
        assert_eq!(build.examples.len(), 2);
        assert_eq!(build.skipped.len(), 1);
        assert_eq!(build.skipped[0].0, "syn-001");
        assert_eq!(build.refinements.len(), 2);
        for e in &build.examples {
            assert!(e.summaries.iter().all(|s| s.speculative_intent.is_empty()));
            assert!(!e.input.contains("hidden goal"));
        }
        assert_eq!(build.to_jsonl().lines().count(), 2);
    }
}
