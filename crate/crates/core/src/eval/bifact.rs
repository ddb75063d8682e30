use futures::future::try_join_all;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;

use super::facts::{FactJudge, FactSet};

/// Exact non-negative fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    /// `None` when the denominator is zero.
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        if self.den == 0 || other.den == 0 {
            return self.den == other.den;
        }
        self.num as u128 * other.den as u128 == other.num as u128 * self.den as u128
    }
}

impl Eq for Ratio {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub matched_predicted: u64,
    pub total_predicted: u64,
    pub matched_gold: u64,
    pub total_gold: u64,
}

impl AlignmentCounts {
    pub fn add(self, o: Self) -> Self {
        Self {
            matched_predicted: self.matched_predicted + o.matched_predicted,
            total_predicted: self.total_predicted + o.total_predicted,
            matched_gold: self.matched_gold + o.matched_gold,
            total_gold: self.total_gold + o.total_gold,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.matched_predicted <= self.total_predicted && self.matched_gold <= self.total_gold
    }

    pub fn precision_ratio(&self) -> Ratio {
        Ratio::new(self.matched_predicted, self.total_predicted)
    }

    pub fn recall_ratio(&self) -> Ratio {
        Ratio::new(self.matched_gold, self.total_gold)
    }

    /// F1 as an exact fraction: 2·mp·mg / (mp·tg + mg·tp), which is
    /// 2PR/(P+R) with the denominators cleared. Zero when P+R is zero or
    /// either side is undefined.
    pub fn f1_ratio(&self) -> (u128, u128) {
        let (mp, tp, mg, tg) = (
            self.matched_predicted as u128,
            self.total_predicted as u128,
            self.matched_gold as u128,
            self.total_gold as u128,
        );
        if tp == 0 || tg == 0 {
            return (0, 1);
        }
        let den = mp * tg + mg * tp;
        if den == 0 {
            (0, 1)
        } else {
            (2 * mp * mg, den)
        }
    }

    pub fn scores(&self) -> Scores {
        let precision = self.precision_ratio().value();
        let recall = self.recall_ratio().value();
        Scores {
            precision,
            recall,
            f1: harmonic(precision.unwrap_or(0.0), recall.unwrap_or(0.0)),
        }
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-example scores. Precision is `None` for an empty prediction and
/// recall is `None` for an empty gold set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedFact {
    pub fact: String,
    pub entailed: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactAlignment {
    /// Predicted facts judged against the gold set.
    pub predicted: Vec<JudgedFact>,
    /// Gold facts judged against the predicted set.
    pub gold: Vec<JudgedFact>,
}

impl FactAlignment {
    pub fn counts(&self) -> AlignmentCounts {
        let matched = |v: &[JudgedFact]| v.iter().filter(|f| f.entailed).count() as u64;
        AlignmentCounts {
            matched_predicted: matched(&self.predicted),
            total_predicted: self.predicted.len() as u64,
            matched_gold: matched(&self.gold),
            total_gold: self.gold.len() as u64,
        }
    }

    pub fn flagged(&self) -> usize {
        self.predicted.iter().chain(&self.gold).filter(|f| f.flagged).count()
    }
}

async fn judge_all(facts: &FactSet, against: &FactSet, judge: &FactJudge) -> Result<Vec<JudgedFact>, EvalError> {
    try_join_all(facts.facts.iter().map(|f| async move {
        let j = judge.judge(f, against).await?;
        Ok::<_, EvalError>(JudgedFact {
            fact: f.clone(),
            entailed: j.supported,
            flagged: j.flagged,
        })
    }))
    .await
}

/// Judges every predicted fact against the gold set and every gold fact
/// against the predicted set.
pub async fn bifact(gold: &FactSet, predicted: &FactSet, judge: &FactJudge) -> Result<(Scores, FactAlignment), EvalError> {
    let (p, g) = futures::try_join!(judge_all(predicted, gold, judge), judge_all(gold, predicted, judge))?;
    let alignment = FactAlignment { predicted: p, gold: g };
    Ok((alignment.counts().scores(), alignment))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Summed counts over the dataset; F1 is the harmonic mean of micro P and
/// micro R. Examples with no predicted facts add nothing to precision.
pub fn micro_average(counts: &[AlignmentCounts]) -> Result<Aggregate, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::Empty);
    }
    let total = counts.iter().fold(AlignmentCounts::default(), |a, c| a.add(*c));
    if total.total_predicted == 0 && total.total_gold == 0 {
        return Err(EvalError::NoFacts);
    }
    let precision = total.precision_ratio().value().unwrap_or(0.0);
    let recall = total.recall_ratio().value().unwrap_or(0.0);
    Ok(Aggregate {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Mean of per-example scores; undefined precision or recall values are
/// left out of their mean.
pub fn macro_average(counts: &[AlignmentCounts]) -> Result<Aggregate, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::Empty);
    }
    let scores: Vec<Scores> = counts.iter().map(AlignmentCounts::scores).collect();
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    Ok(Aggregate {
        precision: mean(scores.iter().filter_map(|s| s.precision).collect()),
        recall: mean(scores.iter().filter_map(|s| s.recall).collect()),
        f1: mean(scores.iter().map(|s| s.f1).collect()),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cache::JsonCache;
    use crate::eval::FactSource;
    use crate::gateway::{Gateway, ScriptedBackend};
    use proptest::prelude::*;

    fn c(mp: u64, tp: u64, mg: u64, tg: u64) -> AlignmentCounts {
        AlignmentCounts { matched_predicted: mp, total_predicted: tp, matched_gold: mg, total_gold: tg }
    }

    #[test]
    fn forced_arithmetic() {
        let s = c(2, 4, 2, 3).scores();
        assert_eq!(s.precision, Some(0.5));
        assert!((s.recall.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(c(2, 4, 2, 3).f1_ratio(), (8, 14));
        assert_eq!(c(3, 3, 3, 3).scores(), Scores { precision: Some(1.0), recall: Some(1.0), f1: 1.0 });
        let empty = c(0, 0, 0, 2).scores();
        assert_eq!((empty.precision, empty.recall, empty.f1), (None, Some(0.0), 0.0));
    }

    #[test]
    fn micro_sums_counts() {
        let m = micro_average(&[c(1, 2, 1, 2), c(3, 4, 3, 4)]).unwrap();
        assert!((m.precision - 4.0 / 6.0).abs() < 1e-12);
        assert!(matches!(micro_average(&[]), Err(EvalError::Empty)));
        assert!(matches!(micro_average(&[c(0, 0, 0, 0)]), Err(EvalError::NoFacts)));
        let m = micro_average(&[c(0, 0, 0, 2), c(1, 1, 1, 1)]).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0 / 3.0));
    }

    #[test]
    fn ratio_equality_is_exact() {
        assert_eq!(Ratio::new(2, 4), Ratio::new(1, 2));
        assert_ne!(Ratio::new(1, 3), Ratio::new(333, 1000));
        assert_eq!(Ratio::new(0, 0), Ratio::new(5, 0));
    }

    #[tokio::test]
    async fn identical_sets_score_one() {
        let j = FactJudge::new(Gateway::with_stub(Arc::new(ScriptedBackend::new())), Arc::new(JsonCache::in_memory()));
        let g = FactSet::new(FactSource::Gold, ["a", "b", "c"]);
        let p = FactSet::new(FactSource::Predicted, ["a", "b", "c"]);
        let (s, a) = bifact(&g, &p, &j).await.unwrap();
        assert_eq!(s.f1, 1.0);
        assert_eq!(a.counts(), c(3, 3, 3, 3));
        let (s, _) = bifact(&g, &FactSet::empty(FactSource::Predicted), &j).await.unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (None, Some(0.0), 0.0));
    }

    fn counts() -> impl Strategy<Value = AlignmentCounts> {
        (0u64..7, 0u64..7).prop_flat_map(|(tp, tg)| (0..=tp, Just(tp), 0..=tg, Just(tg)))
            .prop_map(|(mp, tp, mg, tg)| c(mp, tp, mg, tg))
    }

    proptest! {
        #[test]
        fn scores_are_bounded(x in counts()) {
            let s = x.scores();
            for v in [s.precision, s.recall].into_iter().flatten().chain([s.f1]) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let (Some(p), Some(r)) = (s.precision, s.recall) {
                if p > 0.0 && r > 0.0 {
                    prop_assert!(s.f1 <= p.max(r) + 1e-12 && s.f1 >= p.min(r) - 1e-12);
                }
            }
        }

        #[test]
        fn swap_symmetry(x in counts()) {
            let swapped = c(x.matched_gold, x.total_gold, x.matched_predicted, x.total_predicted);
            let (a, b) = (x.scores(), swapped.scores());
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }

        #[test]
        fn single_example_micro_equals_example(x in counts()) {
            prop_assume!(x.total_predicted > 0 && x.total_gold > 0);
            let m = micro_average(&[x]).unwrap();
            let s = x.scores();
            prop_assert_eq!(Some(m.precision), s.precision);
            prop_assert_eq!(Some(m.recall), s.recall);
            prop_assert!((m.f1 - s.f1).abs() < 1e-12);
        }
    }
}
