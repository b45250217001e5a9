use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

/// Stacks groups of `factor` consecutive frames starting at `phase` into
/// single frames of `factor * F` dims (for 3: `[left ‖ middle ‖ right]`).
/// Indices past either end repeat the boundary frame; at least one output
/// frame is produced.
pub fn stack_frames(x: &FeatureMatrix, factor: usize, phase: usize) -> Result<FeatureMatrix> {
    if factor == 0 || phase >= factor {
        return Err(Error::contract(format!(
            "phase {phase} invalid for factor {factor}"
        )));
    }
    let (t, f) = (x.frames(), x.dim());
    let groups = t.saturating_sub(phase).div_ceil(factor).max(1);
    let src = x.values();
    let out = Tensor2D::from_fn(factor * f, groups, |row, g| {
        let (slot, feat) = (row / f, row % f);
        let frame = (phase + g * factor + slot).min(t - 1);
        src.get(feat, frame)
    });
    FeatureMatrix::new(x.utt_id.clone(), out)
}

/// One stacked sequence per phase `0..factor`.
pub fn subsample_augment(x: &FeatureMatrix, factor: usize) -> Result<Vec<FeatureMatrix>> {
    (0..factor)
        .map(|phase| stack_frames(x, factor, phase))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize, dim: usize) -> FeatureMatrix {
        let data: Vec<f64> = (0..frames * dim).map(|i| i as f64).collect();
        FeatureMatrix::from_frames("r", frames, dim, &data).unwrap()
    }

    #[test]
    fn nine_frames_of_43_dims() {
        let out = subsample_augment(&ramp(9, 43), 3).unwrap();
        assert_eq!(out.len(), 3);
        for m in &out {
            assert_eq!((m.frames(), m.dim()), (3, 129));
        }
    }

    #[test]
    fn layout_and_edge_repetition() {
        let x = ramp(4, 1);
        let p0 = stack_frames(&x, 3, 0).unwrap();
        // groups (0,1,2) and (3,3,3)
        assert_eq!(p0.values().col(0), vec![0.0, 1.0, 2.0]);
        assert_eq!(p0.values().col(1), vec![3.0, 3.0, 3.0]);
        let p2 = stack_frames(&x, 3, 2).unwrap();
        assert_eq!(p2.frames(), 1);
        assert_eq!(p2.values().col(0), vec![2.0, 3.0, 3.0]);
    }

    #[test]
    fn single_frame_repeats() {
        let x = FeatureMatrix::from_frames("s", 1, 2, &[1.5, -2.0]).unwrap();
        for m in subsample_augment(&x, 3).unwrap() {
            assert_eq!(m.frames(), 1);
            assert_eq!(m.values().col(0), vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0]);
        }
    }

    #[test]
    fn phases_differ_unless_constant() {
        let out = subsample_augment(&ramp(9, 2), 3).unwrap();
        assert_ne!(out[0], out[1]);
        assert_ne!(out[1], out[2]);
        let flat = FeatureMatrix::from_frames("c", 9, 2, &[0.25; 18]).unwrap();
        let out = subsample_augment(&flat, 3).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }
}
