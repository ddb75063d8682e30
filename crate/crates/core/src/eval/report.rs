use std::collections::BTreeMap;
use std::fmt::Write as _;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::model::{Method, PipelineTrace, Trajectory};

use super::bifact::{bifact, macro_average, micro_average, Aggregate, AlignmentCounts, FactAlignment, Scores};
use super::facts::{FactJudge, FactSet, FactSource};
use super::funnel::{check_funnel_trace, funnel, FunnelReport, FunnelTrace};
use super::nli::{nli_bidirectional, EntailmentScorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub trajectory_id: String,
    pub method: Method,
    pub gold_text: String,
    pub predicted_text: Option<String>,
    pub gold_facts: FactSet,
    pub predicted_facts: FactSet,
    pub alignment: FactAlignment,
    pub counts: AlignmentCounts,
    pub scores: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bi_nli: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub examples: Vec<ExampleScore>,
    pub micro: Aggregate,
    #[serde(rename = "macro")]
    pub macro_avg: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bi_nli_mean: Option<f64>,
    /// Gold trajectories with no trace.
    pub missing_traces: Vec<String>,
    /// Traces with no gold trajectory.
    pub unknown_traces: Vec<String>,
    pub warnings: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

impl ScoreReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:<24} {:>9} {:>9} {:>9} {:>9}", "trajectory", "method", "precision", "recall", "f1", "bi-nli");
        for e in &self.examples {
            let _ = writeln!(
                s,
                "{:<24} {:<24} {:>9} {:>9} {:>9.3} {:>9}",
                e.trajectory_id,
                e.method.cli_name(),
                fmt_opt(e.scores.precision),
                fmt_opt(e.scores.recall),
                e.scores.f1,
                fmt_opt(e.bi_nli)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "micro  precision {:.3}  recall {:.3}  f1 {:.3}", self.micro.precision, self.micro.recall, self.micro.f1);
        let _ = writeln!(s, "macro  precision {:.3}  recall {:.3}  f1 {:.3}", self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1);
        if let Some(n) = self.bi_nli_mean {
            let _ = writeln!(s, "bi-nli mean {n:.3}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Traces paired with their gold trajectory, in gold order.
pub struct Aligned<'a> {
    pub pairs: Vec<(&'a PipelineTrace, &'a Trajectory)>,
    pub missing_traces: Vec<String>,
    pub unknown_traces: Vec<String>,
}

pub fn align<'a>(traces: &'a [PipelineTrace], gold: &'a [Trajectory]) -> Aligned<'a> {
    let by_id: BTreeMap<&str, &PipelineTrace> = traces.iter().map(|t| (t.trajectory_id.as_str(), t)).collect();
    let gold_ids: BTreeMap<&str, ()> = gold.iter().map(|g| (g.id.as_str(), ())).collect();
    let mut pairs = Vec::new();
    let mut missing_traces = Vec::new();
    for g in gold {
        match by_id.get(g.id.as_str()) {
            Some(t) => pairs.push((*t, g)),
            None => missing_traces.push(g.id.clone()),
        }
    }
    let unknown_traces = traces
        .iter()
        .filter(|t| !gold_ids.contains_key(t.trajectory_id.as_str()))
        .map(|t| t.trajectory_id.clone())
        .collect();
    Aligned { pairs, missing_traces, unknown_traces }
}

async fn score_one(
    trace: &PipelineTrace,
    gold: &Trajectory,
    judge: &FactJudge,
    nli: Option<&dyn EntailmentScorer>,
) -> Result<ExampleScore, EvalError> {
    let gold_text = gold.gold_eval_text();
    let predicted_text = trace.predicted_intent.as_ref().map(|p| p.eval_text());
    let gold_facts = judge.decompose(&gold_text, FactSource::Gold).await?;
    let predicted_facts = match &predicted_text {
        Some(p) => judge.decompose(p, FactSource::Predicted).await?,
        None => FactSet::empty(FactSource::Predicted),
    };
    let (scores, alignment) = bifact(&gold_facts, &predicted_facts, judge).await?;
    let bi_nli = match (nli, &predicted_text) {
        (Some(n), Some(p)) if !p.trim().is_empty() && !gold_text.trim().is_empty() => Some(nli_bidirectional(&gold_text, p, n).await?),
        _ => None,
    };
    Ok(ExampleScore {
        trajectory_id: trace.trajectory_id.clone(),
        method: trace.method,
        gold_text,
        predicted_text,
        counts: alignment.counts(),
        gold_facts,
        predicted_facts,
        alignment,
        scores,
        bi_nli,
    })
}

/// BiFact and optional Bi-NLI for every trace that has a gold
/// trajectory. Platform prefixes and app mentions are removed from both
/// sides first.
pub async fn evaluate(
    traces: &[PipelineTrace],
    gold: &[Trajectory],
    judge: &FactJudge,
    nli: Option<&dyn EntailmentScorer>,
    parallelism: usize,
) -> Result<ScoreReport, EvalError> {
    let aligned = align(traces, gold);
    let examples: Vec<ExampleScore> = stream::iter(aligned.pairs.iter().copied())
        .map(|(t, g)| score_one(t, g, judge, nli))
        .buffered(parallelism.max(1))
        .try_collect()
        .await?;
    let counts: Vec<AlignmentCounts> = examples.iter().map(|e| e.counts).collect();
    let nli_values: Vec<f64> = examples.iter().filter_map(|e| e.bi_nli).collect();
    let mut warnings = Vec::new();
    if !aligned.missing_traces.is_empty() {
        warnings.push(format!("{} gold trajectories have no trace: {}", aligned.missing_traces.len(), aligned.missing_traces.join(", ")));
    }
    if !aligned.unknown_traces.is_empty() {
        warnings.push(format!("{} traces have no gold trajectory: {}", aligned.unknown_traces.len(), aligned.unknown_traces.join(", ")));
    }
    let failed = examples.iter().filter(|e| e.predicted_text.is_none()).count();
    if failed > 0 {
        warnings.push(format!("{failed} traces have no prediction and score zero recall"));
    }
    let flagged: usize = examples.iter().map(|e| e.alignment.flagged()).sum();
    if flagged > 0 {
        warnings.push(format!("{flagged} judgements had no usable answer and count as unsupported"));
    }
    Ok(ScoreReport {
        micro: micro_average(&counts)?,
        macro_avg: macro_average(&counts)?,
        bi_nli_mean: (!nli_values.is_empty()).then(|| nli_values.iter().sum::<f64>() / nli_values.len() as f64),
        examples,
        missing_traces: aligned.missing_traces,
        unknown_traces: aligned.unknown_traces,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelSummary {
    pub total: FunnelReport,
    pub traces: Vec<FunnelTrace>,
    pub missing_traces: Vec<String>,
    pub unknown_traces: Vec<String>,
}

impl FunnelSummary {
    pub fn render_text(&self) -> String {
        let mut s = format!("Error propagation over {} trajectories\n", self.traces.len());
        s.push_str(&self.total.render_text());
        if !self.missing_traces.is_empty() {
            let _ = writeln!(s, "warning: {} gold trajectories have no trace", self.missing_traces.len());
        }
        s
    }
}

/// Funnel over a dataset. Every trace is checked before any judge call.
pub async fn funnel_dataset(
    traces: &[PipelineTrace],
    gold: &[Trajectory],
    judge: &FactJudge,
    parallelism: usize,
) -> Result<FunnelSummary, EvalError> {
    let aligned = align(traces, gold);
    for (t, _) in &aligned.pairs {
        check_funnel_trace(t)?;
    }
    let per_trace: Vec<FunnelTrace> = stream::iter(aligned.pairs.iter().copied())
        .map(|(t, g)| async move {
            let gold_facts = judge.decompose(&g.gold_eval_text(), FactSource::Gold).await?;
            let predicted = t.predicted_intent.as_ref().map(|p| p.eval_text()).unwrap_or_default();
            let predicted_facts = judge.decompose(&predicted, FactSource::Predicted).await?;
            funnel(t, &gold_facts, &predicted_facts, judge).await
        })
        .buffered(parallelism.max(1))
        .try_collect()
        .await?;
    let total = per_trace.iter().fold(FunnelReport::default(), |a, f| a.add(f.report));
    Ok(FunnelSummary {
        total,
        traces: per_trace,
        missing_traces: aligned.missing_traces,
        unknown_traces: aligned.unknown_traces,
    })
}
