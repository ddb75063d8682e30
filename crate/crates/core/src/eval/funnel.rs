use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::model::{Method, PipelineTrace};

use super::bifact::JudgedFact;
use super::facts::{FactJudge, FactSet, FactSource};

/// Where each gold and predicted fact was lost or gained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FunnelReport {
    pub gold_total: u64,
    pub summarization_miss: u64,
    pub intent_extraction_miss: u64,
    pub survived: u64,
    pub predicted_total: u64,
    pub intent_extraction_hallucinated: u64,
    pub summarization_introduced: u64,
    pub correct: u64,
}

/// Per-fact membership for one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldFate {
    pub in_pool: bool,
    pub in_predicted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictedFate {
    pub in_pool: bool,
    pub in_gold: bool,
}

/// Partitions facts by stage. A gold fact missing from the pool is a
/// summarization miss whatever the prediction says; a predicted fact
/// missing from the pool is a hallucination whatever the gold says.
pub fn partition(gold: &[GoldFate], predicted: &[PredictedFate]) -> FunnelReport {
    let mut r = FunnelReport {
        gold_total: gold.len() as u64,
        predicted_total: predicted.len() as u64,
        ..Default::default()
    };
    for g in gold {
        match (g.in_pool, g.in_predicted) {
            (false, _) => r.summarization_miss += 1,
            (true, false) => r.intent_extraction_miss += 1,
            (true, true) => r.survived += 1,
        }
    }
    for p in predicted {
        match (p.in_pool, p.in_gold) {
            (false, _) => r.intent_extraction_hallucinated += 1,
            (true, false) => r.summarization_introduced += 1,
            (true, true) => r.correct += 1,
        }
    }
    r
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Funnel percentages. Second-stage rates are taken over what the first
/// stage let through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelPercentages {
    pub summarization_miss: f64,
    pub intent_extraction_miss_of_remaining: f64,
    pub survived: f64,
    pub intent_extraction_hallucinated: f64,
    pub summarization_introduced_of_remaining: f64,
    pub correct: f64,
}

impl FunnelReport {
    pub fn add(self, o: Self) -> Self {
        Self {
            gold_total: self.gold_total + o.gold_total,
            summarization_miss: self.summarization_miss + o.summarization_miss,
            intent_extraction_miss: self.intent_extraction_miss + o.intent_extraction_miss,
            survived: self.survived + o.survived,
            predicted_total: self.predicted_total + o.predicted_total,
            intent_extraction_hallucinated: self.intent_extraction_hallucinated + o.intent_extraction_hallucinated,
            summarization_introduced: self.summarization_introduced + o.summarization_introduced,
            correct: self.correct + o.correct,
        }
    }

    pub fn partition_holds(&self) -> bool {
        self.gold_total == self.summarization_miss + self.intent_extraction_miss + self.survived
            && self.predicted_total == self.intent_extraction_hallucinated + self.summarization_introduced + self.correct
    }

    pub fn percentages(&self) -> FunnelPercentages {
        FunnelPercentages {
            summarization_miss: pct(self.summarization_miss, self.gold_total),
            intent_extraction_miss_of_remaining: pct(self.intent_extraction_miss, self.gold_total - self.summarization_miss),
            survived: pct(self.survived, self.gold_total),
            intent_extraction_hallucinated: pct(self.intent_extraction_hallucinated, self.predicted_total),
            summarization_introduced_of_remaining: pct(
                self.summarization_introduced,
                self.predicted_total - self.intent_extraction_hallucinated,
            ),
            correct: pct(self.correct, self.predicted_total),
        }
    }

    pub fn render_text(&self) -> String {
        let p = self.percentages();
        let mut s = String::new();
        let _ = writeln!(s, "Recall side: {} gold facts", self.gold_total);
        let _ = writeln!(s, "  interaction summarization miss  {:>6}  {:>5.1}% of gold facts", self.summarization_miss, p.summarization_miss);
        let _ = writeln!(
            s,
            "  intent extraction miss          {:>6}  {:>5.1}% of facts in summaries",
            self.intent_extraction_miss, p.intent_extraction_miss_of_remaining
        );
        let _ = writeln!(s, "  survived                        {:>6}  {:>5.1}% of gold facts", self.survived, p.survived);
        let _ = writeln!(s, "Precision side: {} predicted facts", self.predicted_total);
        let _ = writeln!(
            s,
            "  intent extraction hallucinated  {:>6}  {:>5.1}% of predicted facts",
            self.intent_extraction_hallucinated, p.intent_extraction_hallucinated
        );
        let _ = writeln!(
            s,
            "  summarization introduced        {:>6}  {:>5.1}% of facts found in summaries",
            self.summarization_introduced, p.summarization_introduced_of_remaining
        );
        let _ = writeln!(s, "  correct                         {:>6}  {:>5.1}% of predicted facts", self.correct, p.correct);
        s
    }
}

/// Per-trace funnel details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelTrace {
    pub trajectory_id: String,
    pub pool: FactSet,
    pub gold_in_pool: Vec<JudgedFact>,
    pub gold_in_predicted: Vec<JudgedFact>,
    pub predicted_in_pool: Vec<JudgedFact>,
    pub predicted_in_gold: Vec<JudgedFact>,
    pub report: FunnelReport,
}

/// Rejects traces the funnel cannot attribute.
pub fn check_funnel_trace(trace: &PipelineTrace) -> Result<(), EvalError> {
    if trace.method != Method::Decomposed {
        return Err(EvalError::UnsupportedMethod(trace.method));
    }
    if trace.summaries.is_empty() {
        return Err(EvalError::NoSummaries(trace.trajectory_id.clone()));
    }
    if trace.predicted_intent.is_none() {
        return Err(EvalError::NoPrediction(trace.trajectory_id.clone()));
    }
    Ok(())
}

/// Facts stated by the stripped summaries of a trace.
pub async fn summary_pool(trace: &PipelineTrace, judge: &FactJudge) -> Result<FactSet, EvalError> {
    let lines: Vec<String> = trace
        .stripped_summaries()
        .iter()
        .flat_map(|s| s.factual_lines().map(str::to_string).collect::<Vec<_>>())
        .collect();
    judge.decompose(&lines.join("\n"), FactSource::SummaryPool).await
}

async fn judged(facts: &FactSet, against: &FactSet, judge: &FactJudge) -> Result<Vec<JudgedFact>, EvalError> {
    let mut out = Vec::with_capacity(facts.len());
    for f in &facts.facts {
        let j = judge.judge(f, against).await?;
        out.push(JudgedFact { fact: f.clone(), entailed: j.supported, flagged: j.flagged });
    }
    Ok(out)
}

/// Attributes every gold and predicted fact of one decomposed trace to a
/// pipeline stage.
pub async fn funnel(trace: &PipelineTrace, gold: &FactSet, predicted: &FactSet, judge: &FactJudge) -> Result<FunnelTrace, EvalError> {
    check_funnel_trace(trace)?;
    let pool = summary_pool(trace, judge).await?;
    let (gp, gx, pp, pg) = futures::try_join!(
        judged(gold, &pool, judge),
        judged(gold, predicted, judge),
        judged(predicted, &pool, judge),
        judged(predicted, gold, judge),
    )?;
    let gold_fates: Vec<GoldFate> = gp
        .iter()
        .zip(&gx)
        .map(|(a, b)| GoldFate { in_pool: a.entailed, in_predicted: b.entailed })
        .collect();
    let pred_fates: Vec<PredictedFate> = pp
        .iter()
        .zip(&pg)
        .map(|(a, b)| PredictedFate { in_pool: a.entailed, in_gold: b.entailed })
        .collect();
    Ok(FunnelTrace {
        trajectory_id: trace.trajectory_id.clone(),
        report: partition(&gold_fates, &pred_fates),
        pool,
        gold_in_pool: gp,
        gold_in_predicted: gx,
        predicted_in_pool: pp,
        predicted_in_gold: pg,
    })
}
