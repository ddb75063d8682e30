use rand::seq::index::sample;

use crate::error::PipelineError;
use crate::model::{Interaction, Trajectory};
use crate::seed::rng_for;

/// Keeps at most `max_steps` steps, dropping a seeded uniform random
/// subset. Survivors keep their relative order, are re-indexed from 1 and
/// remember their source index in `original_index`.
pub fn drop_frames(t: &Trajectory, max_steps: u32, seed: u64) -> Trajectory {
    let n = t.steps.len();
    let keep = max_steps.max(1) as usize;
    if n <= keep {
        return t.clone();
    }
    let mut rng = rng_for(seed, &["drop_frames", &t.id]);
    let mut chosen = sample(&mut rng, n, keep).into_vec();
    chosen.sort_unstable();
    let steps = chosen
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let src = &t.steps[i];
            Interaction {
                index: pos as u32 + 1,
                original_index: Some(src.original_index.unwrap_or(src.index)),
                ..src.clone()
            }
        })
        .collect();
    Trajectory { steps, ..t.clone() }
}

/// The interaction being summarized and its immediate neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextWindow<'a> {
    pub previous: Option<&'a Interaction>,
    pub current: &'a Interaction,
    pub next: Option<&'a Interaction>,
}

/// Window around step `i` (1-based).
pub fn build_context_window(t: &Trajectory, i: usize) -> Result<ContextWindow<'_>, PipelineError> {
    let n = t.steps.len();
    if i == 0 || i > n {
        return Err(PipelineError::StepOutOfRange { index: i, len: n });
    }
    Ok(ContextWindow {
        previous: (i > 1).then(|| &t.steps[i - 2]),
        current: &t.steps[i - 1],
        next: (i < n).then(|| &t.steps[i]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use proptest::prelude::*;

    #[test]
    fn short_trajectories_are_untouched() {
        let t = synthetic::trajectory("a", 7, 1);
        assert_eq!(drop_frames(&t, 15, 9), t);
    }

    #[test]
    fn long_trajectories_are_capped_in_order() {
        let t = synthetic::trajectory("a", 20, 1);
        let d = drop_frames(&t, 15, 9);
        assert_eq!(d.steps.len(), 15);
        let originals: Vec<u32> = d.steps.iter().map(|s| s.original_index.unwrap()).collect();
        assert!(originals.windows(2).all(|w| w[0] < w[1]));
        for s in &d.steps {
            let src = &t.steps[s.original_index.unwrap() as usize - 1];
            assert_eq!(src.action, s.action);
            assert_eq!(src.screenshot, s.screenshot);
        }
        assert_eq!(d.steps.iter().map(|s| s.index).collect::<Vec<_>>(), (1..=15).collect::<Vec<_>>());
        assert_eq!(drop_frames(&t, 15, 9), d);
        assert_ne!(drop_frames(&t, 15, 10), d);
    }

    #[test]
    fn windows_at_boundaries() {
        let t = synthetic::trajectory("w", 3, 1);
        let w = build_context_window(&t, 2).unwrap();
        assert_eq!((w.previous.unwrap().index, w.current.index, w.next.unwrap().index), (1, 2, 3));
        let w = build_context_window(&t, 1).unwrap();
        assert!(w.previous.is_none());
        assert_eq!((w.current.index, w.next.unwrap().index), (1, 2));
        let w = build_context_window(&t, 3).unwrap();
        assert!(w.next.is_none());
        let single = synthetic::trajectory("s", 1, 1);
        let w = build_context_window(&single, 1).unwrap();
        assert!(w.previous.is_none() && w.next.is_none());
        assert!(build_context_window(&t, 0).is_err());
        assert!(build_context_window(&t, 4).is_err());
    }

    proptest! {
        #[test]
        fn drop_frames_is_an_ordered_subsequence(n in 1u32..40, max in 1u32..20, seed in any::<u64>()) {
            let t = synthetic::trajectory("p", n, 3);
            let d = drop_frames(&t, max, seed);
            prop_assert_eq!(d.steps.len(), n.min(max) as usize);
            let mut src = t.steps.iter();
            for s in &d.steps {
                let orig = s.original_index.unwrap_or(s.index);
                prop_assert!(src.any(|o| o.index == orig && o.action == s.action));
            }
        }
    }
}
