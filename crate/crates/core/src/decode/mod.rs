//! Greedy CTC decoding and prefix beam search with shallow LM fusion.

mod beam;
mod oracle;

pub use beam::fusion_beam_search;
pub use oracle::{exhaustive_fusion_oracle, fusion_class_scores, FUSION_ORACLE_LIMIT};

use serde::{Deserialize, Serialize};

use crate::ctc::{squash, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::lm::LmModel;
use crate::scalar::Scalar;

/// Which frames pay the LM factor `P_LM(k | prefix)^w * b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmScoring {
    /// Only frames that emit a new unit into the squashed prefix.
    #[default]
    PerEmission,
    /// Every non-blank frame, including repeats that the squash collapses;
    /// a repeated frame of `k` is scored as `P_LM(k | prefix ending in k)`.
    PerFrame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub beam: usize,
    /// Insertion bonus, multiplied in for every scored non-blank frame.
    pub bonus: f64,
    /// Exponent on the LM probability.
    pub lm_weight: f64,
    pub scoring: LmScoring,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            beam: 40,
            bonus: 1.5,
            lm_weight: 1.0,
            scoring: LmScoring::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if !(self.bonus > 0.0 && self.bonus.is_finite()) {
            return Err(Error::Config(format!(
                "insertion bonus must be positive, got {}",
                self.bonus
            )));
        }
        if !self.lm_weight.is_finite() {
            return Err(Error::Config("LM weight must be finite".into()));
        }
        Ok(())
    }
}

/// A decoded unit sequence with its log fusion score.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub units: Vec<usize>,
    pub log_score: f64,
}

/// Per-frame argmax (ties to the lowest index), then squash.
pub fn greedy_decode<S: Scalar>(post: &PosteriorMatrix<S>) -> Vec<usize> {
    squash(&post.argmax_path())
}

fn check_lm<S: Scalar>(post: &PosteriorMatrix<S>, lm: Option<&LmModel>) -> Result<()> {
    if let Some(lm) = lm {
        if lm.classes() != post.classes() {
            return Err(Error::contract(format!(
                "LM covers {} units but the posterior has {}",
                lm.classes(),
                post.classes()
            )));
        }
    }
    Ok(())
}

/// Log of the factor paid by a scored non-blank frame.
#[inline]
fn lm_factor(dist: Option<&[f64]>, unit: usize, cfg: &FusionConfig) -> f64 {
    let lm = dist.map_or(0.0, |d| {
        if cfg.lm_weight == 0.0 {
            0.0
        } else {
            cfg.lm_weight * d[unit].ln()
        }
    });
    lm + cfg.bonus.ln()
}

/// Orders by descending score, then ascending unit sequence.
fn better(a_score: f64, a_units: &[usize], b_score: f64, b_units: &[usize]) -> bool {
    a_score > b_score || (a_score == b_score && a_units < b_units)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::brute_force_ctc;
    use crate::lm::LmBackend;
    use crate::numerics::Tensor2D;
    use crate::units::Inventory;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inventory(labels: usize) -> Inventory {
        Inventory::new(
            (0..labels)
                .map(|i| ((b'a' + i as u8) as char).to_string())
                .collect(),
            true,
        )
        .unwrap()
    }

    fn random_post(
        rng: &mut ChaCha8Rng,
        classes: usize,
        frames: usize,
        spread: f64,
    ) -> PosteriorMatrix<f64> {
        let logits = Tensor2D::from_fn(classes, frames, |_, _| rng.random_range(-spread..spread));
        PosteriorMatrix::from_logits(&logits)
    }

    fn random_lm(rng: &mut ChaCha8Rng, inv: &Inventory) -> LmModel {
        let labels = inv.num_labels();
        let corpus: Vec<Vec<usize>> = (0..6)
            .map(|_| {
                (0..rng.random_range(1..5))
                    .map(|_| rng.random_range(1..=labels))
                    .collect()
            })
            .collect();
        let order = rng.random_range(1..4);
        let alpha = rng.random_range(0.05..1.0);
        LmModel::train(&corpus, inv, &LmBackend::NGram { order, alpha }).unwrap()
    }

    fn probs(columns: &[&[f64]]) -> PosteriorMatrix<f64> {
        let cols: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
        PosteriorMatrix::from_probs(&Tensor2D::from_columns(cols[0].len(), &cols).unwrap()).unwrap()
    }

    fn full_beam(post: &PosteriorMatrix<f64>, bonus: f64, scoring: LmScoring) -> FusionConfig {
        FusionConfig {
            beam: post.classes().pow(post.frames() as u32),
            bonus,
            lm_weight: 1.0,
            scoring,
        }
    }

    #[test]
    fn greedy_examples() {
        let p = probs(&[
            &[0.6, 0.2, 0.2],
            &[0.1, 0.8, 0.1],
            &[0.1, 0.8, 0.1],
            &[0.7, 0.2, 0.1],
            &[0.1, 0.1, 0.8],
        ]);
        assert_eq!(p.argmax_path(), vec![0, 1, 1, 0, 2]);
        assert_eq!(greedy_decode(&p), vec![1, 2]);
        let blank = probs(&[&[0.9, 0.05, 0.05], &[0.5, 0.25, 0.25]]);
        assert!(greedy_decode(&blank).is_empty());
        let tie = probs(&[&[0.25, 0.5, 0.25], &[0.4, 0.2, 0.4]]);
        assert_eq!(greedy_decode(&tie), vec![1]);
    }

    proptest! {
        #[test]
        fn greedy_is_squash_of_argmax(seed in any::<u64>(), classes in 2usize..6, frames in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let post = random_post(&mut rng, classes, frames, 3.0);
            let mut path = Vec::new();
            for t in 0..frames {
                let mut best = 0;
                for k in 1..classes {
                    if post.log_prob(k, t) > post.log_prob(best, t) {
                        best = k;
                    }
                }
                path.push(best);
            }
            let mut reference: Vec<usize> = Vec::new();
            for (i, &p) in path.iter().enumerate() {
                if p != 0 && (i == 0 || path[i - 1] != p) {
                    reference.push(p);
                }
            }
            prop_assert_eq!(greedy_decode(&post), reference);
        }
    }

    #[test]
    fn full_beam_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for scoring in [LmScoring::PerEmission, LmScoring::PerFrame] {
            for _ in 0..50 {
                let classes = rng.random_range(2..4);
                let frames = rng.random_range(1..6);
                let inv = inventory(classes - 1);
                let lm = random_lm(&mut rng, &inv);
                let post = random_post(&mut rng, classes, frames, 2.0);
                let cfg = full_beam(&post, rng.random_range(0.3..3.0), scoring);
                let beam = fusion_beam_search(&post, Some(&lm), &cfg).unwrap();
                let oracle = exhaustive_fusion_oracle(&post, Some(&lm), &cfg).unwrap();
                assert_eq!(beam.units, oracle.units);
                assert!((beam.log_score - oracle.log_score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_lm_unit_bonus_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inv = inventory(3);
        let lm = LmModel::uniform(&inv).unwrap();
        for _ in 0..20 {
            let frames = rng.random_range(1..6);
            let post = random_post(&mut rng, 4, frames, 2.0);
            let cfg = full_beam(&post, 1.0, LmScoring::PerEmission);
            let beam = fusion_beam_search(&post, Some(&lm), &cfg).unwrap();
            let oracle = exhaustive_fusion_oracle(&post, Some(&lm), &cfg).unwrap();
            assert_eq!(beam.units, oracle.units);
            assert!((beam.log_score - oracle.log_score).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_lm_factorizes_acoustic_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inv = inventory(3);
        let lm = LmModel::uniform(&inv).unwrap();
        for _ in 0..20 {
            let post = random_post(&mut rng, 4, 4, 2.0);
            let cfg = full_beam(&post, 1.0, LmScoring::PerEmission);
            let best = exhaustive_fusion_oracle(&post, Some(&lm), &cfg).unwrap();
            let acoustic = brute_force_ctc(&post, &best.units).unwrap().ln();
            let expected = acoustic + best.units.len() as f64 * (1.0f64 / 3.0).ln();
            assert!((best.log_score - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_hand_arithmetic() {
        let inv = inventory(2);
        let lm = LmModel::train(
            &[vec![1], vec![1], vec![2]],
            &inv,
            &LmBackend::NGram {
                order: 2,
                alpha: 0.5,
            },
        )
        .unwrap();
        // P_LM(a | BOS) = 2.5 / 4, P_LM(b | BOS) = 1.5 / 4
        let post = probs(&[&[0.5, 0.3, 0.2]]);
        for (bonus, want) in [(1.0, vec![]), (3.0, vec![1])] {
            let cfg = FusionConfig {
                beam: 3,
                bonus,
                ..FusionConfig::default()
            };
            let a = 0.3 * 2.5 / 4.0 * bonus;
            let b = 0.2 * 1.5 / 4.0 * bonus;
            let best = if a > 0.5 { a } else { 0.5f64.max(b) };
            for hyp in [
                fusion_beam_search(&post, Some(&lm), &cfg).unwrap(),
                exhaustive_fusion_oracle(&post, Some(&lm), &cfg).unwrap(),
            ] {
                assert_eq!(hyp.units, want);
                assert!((hyp.log_score - best.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn per_frame_scoring_charges_repeats() {
        let inv = inventory(1);
        let lm = LmModel::uniform(&inv).unwrap();
        // single label, P_LM = 1: only the bonus differs between modes
        let post = probs(&[&[0.1, 0.9], &[0.1, 0.9]]);
        let emission = FusionConfig {
            beam: 4,
            bonus: 2.0,
            ..FusionConfig::default()
        };
        let frame = FusionConfig {
            scoring: LmScoring::PerFrame,
            ..emission.clone()
        };
        // paths for [a]: a_, _a, aa
        let per_emission: f64 = 0.9 * 0.1 * 2.0 + 0.1 * 0.9 * 2.0 + 0.81 * 2.0;
        let per_frame: f64 = 0.9 * 0.1 * 2.0 + 0.1 * 0.9 * 2.0 + 0.81 * 4.0;
        let a = fusion_beam_search(&post, Some(&lm), &emission).unwrap();
        let b = fusion_beam_search(&post, Some(&lm), &frame).unwrap();
        assert_eq!(a.units, vec![1]);
        assert!((a.log_score - per_emission.ln()).abs() < 1e-12);
        assert!((b.log_score - per_frame.ln()).abs() < 1e-12);
    }

    #[test]
    fn bonus_sweep_lengthens_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let inv = inventory(3);
        let lm = random_lm(&mut rng, &inv);
        let post = random_post(&mut rng, 4, 6, 1.5);
        let mut lengths = Vec::new();
        for exp in -6..=6 {
            let cfg = FusionConfig {
                beam: 16,
                bonus: 10f64.powi(exp),
                ..FusionConfig::default()
            };
            lengths.push(
                fusion_beam_search(&post, Some(&lm), &cfg)
                    .unwrap()
                    .units
                    .len(),
            );
        }
        assert_eq!(lengths[0], 0);
        assert!(*lengths.last().unwrap() >= 3);
        assert!(lengths.windows(2).all(|w| w[0] <= w[1]), "{lengths:?}");
    }

    // Pruning drops paths, so a beam score is a lower bound on the exact score
    // of its transcript. Widening the beam is not monotone in general.
    #[test]
    fn beam_scores_bounded_by_exact_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let inv = inventory(3);
            let lm = random_lm(&mut rng, &inv);
            let frames = rng.random_range(2..7);
            let post = random_post(&mut rng, 4, frames, 2.0);
            let exact = fusion_class_scores(&post, Some(&lm), &FusionConfig::default()).unwrap();
            let optimum = exact.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            for beam in 1..=8 {
                let cfg = FusionConfig {
                    beam,
                    ..FusionConfig::default()
                };
                let hyp = fusion_beam_search(&post, Some(&lm), &cfg).unwrap();
                assert!(hyp.log_score <= exact[&hyp.units] + 1e-12);
                assert!(hyp.log_score <= optimum + 1e-12);
            }
        }
    }

    #[test]
    fn wider_beam_can_score_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut found = false;
        for _ in 0..200 {
            let inv = inventory(3);
            let lm = random_lm(&mut rng, &inv);
            let frames = rng.random_range(2..8);
            let post = random_post(&mut rng, 4, frames, 2.0);
            let score = |beam| {
                let cfg = FusionConfig {
                    beam,
                    ..FusionConfig::default()
                };
                fusion_beam_search(&post, Some(&lm), &cfg)
                    .unwrap()
                    .log_score
            };
            let scores: Vec<f64> = (1..=8).map(score).collect();
            found |= scores.windows(2).any(|w| w[1] < w[0]);
        }
        assert!(found);
    }

    #[test]
    fn config_and_contract_errors() {
        let inv = inventory(2);
        let lm = LmModel::uniform(&inv).unwrap();
        let post = probs(&[&[0.5, 0.3, 0.2]]);
        let zero = FusionConfig {
            beam: 0,
            ..FusionConfig::default()
        };
        assert!(matches!(
            fusion_beam_search(&post, Some(&lm), &zero),
            Err(Error::Config(_))
        ));
        let neg = FusionConfig {
            bonus: 0.0,
            ..FusionConfig::default()
        };
        assert!(matches!(
            fusion_beam_search(&post, Some(&lm), &neg),
            Err(Error::Config(_))
        ));
        let wide = probs(&[&[0.4, 0.3, 0.2, 0.1]]);
        assert!(matches!(
            fusion_beam_search(&wide, Some(&lm), &FusionConfig::default()),
            Err(Error::Contract(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let big = random_post(&mut rng, 3, 13, 1.0);
        let lm3 = LmModel::uniform(&inv).unwrap();
        assert!(matches!(
            exhaustive_fusion_oracle(&big, Some(&lm3), &FusionConfig::default()),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn no_lm_uses_bonus_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let post = random_post(&mut rng, 3, 4, 2.0);
            let cfg = full_beam(&post, 1.0, LmScoring::PerEmission);
            let hyp = fusion_beam_search(&post, None, &cfg).unwrap();
            let acoustic = brute_force_ctc(&post, &hyp.units).unwrap().ln();
            assert!((hyp.log_score - acoustic).abs() < 1e-12);
            let oracle = exhaustive_fusion_oracle(&post, None, &cfg).unwrap();
            assert_eq!(hyp.units, oracle.units);
            assert!((hyp.log_score - oracle.log_score).abs() < 1e-9);
        }
    }
}
