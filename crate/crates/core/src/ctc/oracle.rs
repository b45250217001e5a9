use std::collections::BTreeMap;

use crate::ctc::{squash, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest path count the CTC enumeration oracle accepts.
pub const ORACLE_PATH_LIMIT: u128 = 10_000_000;

pub(crate) fn path_count(classes: usize, frames: usize, limit: u128) -> Result<u128> {
    let mut size: u128 = 1;
    for _ in 0..frames {
        size = size.saturating_mul(classes as u128);
        if size > limit {
            return Err(Error::OracleTooLarge { size, limit });
        }
    }
    Ok(size)
}

/// Calls `f` on every length-`frames` path over `classes` labels, in
/// lexicographic order.
pub fn for_each_path(classes: usize, frames: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; frames];
    loop {
        f(&path);
        let mut i = frames;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
        }
    }
}

/// `P(z | X)` by summing every path that squashes to `target`.
pub fn brute_force_ctc<S: Scalar>(post: &PosteriorMatrix<S>, target: &[usize]) -> Result<f64> {
    path_count(post.classes(), post.frames(), ORACLE_PATH_LIMIT)?;
    let mut total = 0.0f64;
    for_each_path(post.classes(), post.frames(), |p| {
        if squash(p) == target {
            total += path_prob(post, p);
        }
    });
    Ok(total)
}

/// Probability mass of every squash class reachable in `post`.
pub fn class_probabilities<S: Scalar>(
    post: &PosteriorMatrix<S>,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    path_count(post.classes(), post.frames(), ORACLE_PATH_LIMIT)?;
    let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for_each_path(post.classes(), post.frames(), |p| {
        *out.entry(squash(p)).or_default() += path_prob(post, p);
    });
    Ok(out)
}

fn path_prob<S: Scalar>(post: &PosteriorMatrix<S>, path: &[usize]) -> f64 {
    path.iter()
        .enumerate()
        .map(|(t, &k)| post.log_prob(k, t).to_f64_lossy().exp())
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2D;

    #[test]
    fn empty_target_is_product_of_blanks() {
        let p = PosteriorMatrix::from_probs(
            &Tensor2D::from_vec(2, 3, vec![0.7, 0.2, 0.9, 0.3, 0.8, 0.1]).unwrap(),
        )
        .unwrap();
        let got = brute_force_ctc(&p, &[]).unwrap();
        assert!((got - 0.7 * 0.2 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn classes_partition_unity() {
        let logits = Tensor2D::from_fn(3, 4, |k, t| (k as f64 - t as f64 * 0.4).sin());
        let p = PosteriorMatrix::from_logits(&logits);
        let total: f64 = class_probabilities(&p).unwrap().values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_limit_enforced() {
        let p = PosteriorMatrix::from_logits(&Tensor2D::<f64>::zeros(10, 8));
        assert!(matches!(
            brute_force_ctc(&p, &[1]),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn path_enumeration_order() {
        let mut seen = Vec::new();
        for_each_path(2, 2, |p| seen.push(p.to_vec()));
        assert_eq!(seen, [[0, 0], [0, 1], [1, 0], [1, 1]]);
    }

    mod props {
        use super::*;
        use crate::ctc::ctc_loss;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>)> {
            (2usize..=4, 1usize..=6).prop_flat_map(|(classes, frames)| {
                (
                    Just(classes),
                    Just(frames),
                    prop::collection::vec(-3.0f64..3.0, classes * frames),
                    prop::collection::vec(1..classes, 0..=3),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn forward_backward_equals_enumeration((classes, frames, logits, target) in instance()) {
                let p = PosteriorMatrix::from_logits(&Tensor2D::from_vec(classes, frames, logits).unwrap());
                let want = brute_force_ctc(&p, &target).unwrap();
                match ctc_loss(&p, &target) {
                    Ok(out) => {
                        let got = (-out.loss).exp();
                        prop_assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
                    }
                    Err(Error::InfeasibleTarget { .. }) => prop_assert_eq!(want, 0.0),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }

            #[test]
            fn loss_invariant_under_label_permutation((classes, frames, logits, target) in instance()) {
                let p = PosteriorMatrix::from_logits(&Tensor2D::from_vec(classes, frames, logits).unwrap());
                // rotate the non-blank labels
                let perm: Vec<usize> = (0..classes).map(|k| if k == 0 { 0 } else { k % (classes - 1) + 1 }).collect();
                let mut inverse = vec![0; classes];
                for (k, &src) in perm.iter().enumerate() {
                    inverse[src] = k;
                }
                let q = p.permute_rows(&perm);
                let mapped: Vec<usize> = target.iter().map(|&z| inverse[z]).collect();
                if let (Ok(a), Ok(b)) = (ctc_loss(&p, &target), ctc_loss(&q, &mapped)) {
                    prop_assert!((a.loss - b.loss).abs() < 1e-12);
                }
            }
        }
    }
}
