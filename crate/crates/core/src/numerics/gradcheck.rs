use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step; must lie in `[1e-7, 1e-4]`.
    pub epsilon: f64,
    /// Coordinates checked; every coordinate is checked when there are fewer.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

/// Compares analytic gradients against central finite differences.
///
/// `f` maps a parameter set to `(value, gradient per parameter tensor)`. The
/// error of one coordinate is `|a - n| / max(1, |a|, |n|)`; the report
/// carries the maximum over the sampled coordinates.
pub fn grad_check<S, F>(
    mut f: F,
    params: &[Tensor2D<S>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&[Tensor2D<S>]) -> Result<(S, Vec<Tensor2D<S>>)>,
{
    if !(1e-7..=1e-4).contains(&cfg.epsilon) {
        return Err(Error::contract(format!(
            "epsilon {} outside [1e-7, 1e-4]",
            cfg.epsilon
        )));
    }
    let (v1, analytic) = f(params)?;
    let (v2, _) = f(params)?;
    if v1.to_f64_lossy().to_bits() != v2.to_f64_lossy().to_bits() {
        return Err(Error::OracleInvalid(format!(
            "function is not deterministic: {v1} then {v2}"
        )));
    }
    if analytic.len() != params.len()
        || analytic
            .iter()
            .zip(params)
            .any(|(g, p)| g.shape() != p.shape())
    {
        return Err(Error::contract(
            "analytic gradient shapes do not match parameters",
        ));
    }

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= cfg.samples {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, coords.len(), cfg.samples).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| coords[k]).collect()
    };

    let eps = S::of(cfg.epsilon);
    let mut work: Vec<Tensor2D<S>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (i, j) in chosen {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + eps;
        let (plus, _) = f(&work)?;
        work[i].data_mut()[j] = orig - eps;
        let (minus, _) = f(&work)?;
        work[i].data_mut()[j] = orig;

        let numeric = (plus - minus).to_f64_lossy() / (2.0 * cfg.epsilon);
        let a = analytic[i].data()[j].to_f64_lossy();
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if !(err <= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst = Some((i, j));
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_exact() {
        let w = Tensor2D::from_fn(3, 3, |r, c| r as f64 - 0.5 * c as f64 + 0.25);
        let report = grad_check(
            |p| {
                let mut g = p[0].clone();
                g.scale(2.0);
                Ok((p[0].sum_squares(), vec![g]))
            },
            &[w],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 9);
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let w = Tensor2D::filled(2, 2, 1.5);
        let report = grad_check(
            |p| Ok((p[0].sum_squares(), vec![p[0].clone()])),
            &[w],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error > 0.1);
    }

    #[test]
    fn nondeterminism_is_rejected() {
        let calls = Cell::new(0.0);
        let w = Tensor2D::filled(1, 1, 1.0);
        let err = grad_check(
            |p| {
                calls.set(calls.get() + 1.0);
                Ok((p[0].sum_squares() + calls.get(), vec![p[0].clone()]))
            },
            &[w],
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleInvalid(_)));
    }

    #[test]
    fn epsilon_range_enforced() {
        let w = Tensor2D::filled(1, 1, 1.0);
        let cfg = GradCheckConfig {
            epsilon: 1e-2,
            ..Default::default()
        };
        let res = grad_check(|p| Ok((p[0].sum_squares(), vec![p[0].clone()])), &[w], &cfg);
        assert!(matches!(res, Err(Error::Contract(_))));
    }
}
