use crate::ctc::{augment, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::numerics::ops::log_add;
use crate::numerics::{log_softmax_cols, Tape, Tensor2D, Var};
use crate::scalar::Scalar;
use crate::units::BLANK;

/// Loss and gradient with respect to the pre-softmax logits.
#[derive(Clone, Debug)]
pub struct CtcOutput<S> {
    /// `-log P(z | X)`.
    pub loss: S,
    /// `|L'| x T`.
    pub grad: Tensor2D<S>,
}

/// Fewest frames any path for `target` needs: one per label plus one blank
/// between each adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` under `post` by forward-backward in
/// the log domain, with the gradient for logits whose log-softmax is `post`.
pub fn ctc_loss<S: Scalar>(post: &PosteriorMatrix<S>, target: &[usize]) -> Result<CtcOutput<S>> {
    let frames = post.frames();
    let classes = post.classes();
    if let Some(&bad) = target.iter().find(|&&z| z == BLANK || z >= classes) {
        return Err(Error::contract(format!(
            "target label {bad} outside 1..{classes}"
        )));
    }
    let required = min_frames(target).max(1);
    if frames < required {
        return Err(Error::InfeasibleTarget { frames, required });
    }

    let ext = augment(target);
    let states = ext.len();
    let neg_inf = S::neg_infinity();
    let lp = |k: usize, t: usize| post.log_prob(k, t);
    let skip_allowed = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![neg_inf; frames * states];
    alpha[0] = lp(ext[0], 0);
    if states > 1 {
        alpha[1] = lp(ext[1], 0);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if skip_allowed(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = if acc == neg_inf {
                neg_inf
            } else {
                acc + lp(ext[s], t)
            };
        }
    }

    let last = (frames - 1) * states;
    let log_p = if states > 1 {
        log_add(alpha[last + states - 1], alpha[last + states - 2])
    } else {
        alpha[last]
    };
    if log_p == neg_inf {
        return Err(Error::InfeasibleTarget { frames, required });
    }

    // beta[t][s]: log-probability of the remaining frames after t, given state s at t
    let mut beta = vec![neg_inf; frames * states];
    beta[last + states - 1] = S::zero();
    if states > 1 {
        beta[last + states - 2] = S::zero();
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let next = (t + 1) * states;
            let mut acc = beta[next + s] + lp(ext[s], t + 1);
            if s + 1 < states {
                acc = log_add(acc, beta[next + s + 1] + lp(ext[s + 1], t + 1));
            }
            if s + 2 < states && skip_allowed(s + 2) {
                acc = log_add(acc, beta[next + s + 2] + lp(ext[s + 2], t + 1));
            }
            beta[t * states + s] = acc;
        }
    }

    let mut grad = Tensor2D::zeros(classes, frames);
    let mut occupancy = vec![neg_inf; classes];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|v| *v = neg_inf);
        for s in 0..states {
            let g = alpha[t * states + s] + beta[t * states + s];
            occupancy[ext[s]] = log_add(occupancy[ext[s]], g);
        }
        for k in 0..classes {
            let y = lp(k, t).exp();
            let occ = if occupancy[k] == neg_inf {
                S::zero()
            } else {
                (occupancy[k] - log_p).exp()
            };
            grad.set(k, t, y - occ);
        }
    }
    Ok(CtcOutput { loss: -log_p, grad })
}

/// Records `ctc_loss(log_softmax(logits), target)` on `tape`.
pub fn ctc_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    logits: Var,
    target: &[usize],
) -> Result<Var> {
    let post = PosteriorMatrix::from_log_probs(log_softmax_cols(tape.value(logits)))?;
    let out = ctc_loss(&post, target)?;
    tape.fused_loss(logits, out.loss, out.grad)
}
