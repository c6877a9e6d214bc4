//! Subtraction mode for no-diff models: a pair is scored by how much more
//! "detected" the mutated method looks than the original.

use serde::{Deserialize, Serialize};

use crate::eval::Prf;
use crate::model::NoDiffScore;

/// Candidate thresholds on `P(mutated) − P(original)`: 0.01 to 0.99 in steps
/// of 0.01.
pub fn tau_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauChoice {
    pub tau: f64,
    /// Pair-level metrics on the validation pairs at `tau`.
    pub validation: Prf,
}

/// Picks the difference threshold with the best pair-level F1 on labelled
/// pairs; ties go to higher precision, then to the smaller threshold.
pub fn choose_tau(scores: &[NoDiffScore]) -> TauChoice {
    let mut best: Option<TauChoice> = None;
    for tau in tau_grid() {
        let prf = Prf::from_pairs(
            scores.iter().map(|s| (s.mutated - s.original > tau, s.label.is_some_and(|l| l.is_detected()))),
        );
        let better = match &best {
            None => true,
            Some(b) => prf.f1 > b.validation.f1 || (prf.f1 == b.validation.f1 && prf.precision > b.validation.precision),
        };
        if better {
            best = Some(TauChoice { tau, validation: prf });
        }
    }
    best.expect("grid is non-empty")
}

/// Maps a difference in `[-1, 1]` to a probability, piecewise linearly, so
/// that `diff = tau` lands on 0.5 and the ends stay at 0 and 1.
pub fn subtraction_probability(diff: f64, tau: f64) -> f64 {
    let p = if diff <= tau { 0.5 * (diff + 1.0) / (tau + 1.0) } else { 0.5 + 0.5 * (diff - tau) / (1.0 - tau) };
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::Verdict;

    fn score(original: f64, mutated: f64, detected: bool) -> NoDiffScore {
        NoDiffScore {
            mutant_id: "m".into(),
            test_id: "t".into(),
            original,
            mutated,
            inference_cost: 1,
            label: Some(Verdict::from_detected(detected)),
        }
    }

    #[test]
    fn mapping_is_monotone_and_centred() {
        for tau in [0.01, 0.3, 0.99] {
            assert_eq!(subtraction_probability(tau, tau), 0.5);
            assert_eq!(subtraction_probability(-1.0, tau), 0.0);
            assert_eq!(subtraction_probability(1.0, tau), 1.0);
            let mut last = -1.0;
            for k in -100..=100 {
                let p = subtraction_probability(k as f64 / 100.0, tau);
                assert!(p >= last);
                last = p;
            }
        }
    }

    #[test]
    fn separable_scores_pick_a_separating_tau() {
        let scores = vec![score(0.1, 0.9, true), score(0.2, 0.6, true), score(0.25, 0.375, false), score(0.5, 0.5, false)];
        let c = choose_tau(&scores);
        assert_eq!(c.validation.f1, 1.0);
        // Differences are 0.8, 0.4, 0.125, 0.0; the smallest separating grid
        // point wins.
        assert!((c.tau - 0.13).abs() < 1e-12, "{}", c.tau);
    }
}
