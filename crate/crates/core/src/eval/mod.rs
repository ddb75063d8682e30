//! Fact-level scoring (BiFact), bidirectional entailment (Bi-NLI) and the
//! stage-level error funnel.

mod bifact;
mod facts;
mod funnel;
mod nli;
mod report;

pub use bifact::{
    bifact, harmonic, macro_average, micro_average, Aggregate, AlignmentCounts, FactAlignment, JudgedFact, Ratio, Scores,
};
pub use facts::{parse_fact_lines, parse_yes_no, FactJudge, FactSet, FactSource, Judgement};
pub use funnel::{
    check_funnel_trace, funnel, partition, summary_pool, FunnelPercentages, FunnelReport, FunnelTrace, GoldFate,
    PredictedFate,
};
pub use nli::{nli_bidirectional, EntailmentScorer, HttpEntailment, LexicalEntailment};
pub use report::{align, evaluate, funnel_dataset, Aligned, ExampleScore, FunnelSummary, ScoreReport};
