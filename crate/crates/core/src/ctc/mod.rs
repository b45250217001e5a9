//! CTC: the squash mapping, log-space forward-backward loss with gradients,
//! and an exhaustive path-enumeration oracle.

mod loss;
mod oracle;
mod posterior;

pub use loss::{ctc_loss, ctc_loss_on_tape, min_frames, CtcOutput};
pub(crate) use oracle::path_count;
pub use oracle::{brute_force_ctc, class_probabilities, for_each_path, ORACLE_PATH_LIMIT};
pub use posterior::PosteriorMatrix;

use crate::units::BLANK;

/// Collapses consecutive repeats, then drops blanks. Repeats separated by a
/// blank survive.
pub fn squash(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Blank-interleaved target `_ z1 _ z2 _ ... zU _`.
pub fn augment(target: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * target.len() + 1);
    out.push(BLANK);
    for &z in target {
        out.push(z);
        out.push(BLANK);
    }
    out
}
