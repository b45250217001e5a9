use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::ctc::{for_each_path, path_count, squash, PosteriorMatrix};
use crate::decode::{better, check_lm, lm_factor, FusionConfig, Hypothesis, LmScoring};
use crate::error::Result;
use crate::lm::LmModel;
use crate::numerics::ops::log_add;
use crate::scalar::Scalar;
use crate::units::BLANK;

/// Largest `|L'|^T` the fusion oracle enumerates.
pub const FUSION_ORACLE_LIMIT: u128 = 1_000_000;

/// LM distribution after a prefix, computed by replaying it from the start.
fn prefix_distribution(
    lm: &LmModel,
    cache: &mut HashMap<Vec<usize>, Arc<Vec<f64>>>,
    prefix: &[usize],
) -> Result<Arc<Vec<f64>>> {
    if let Some(d) = cache.get(prefix) {
        return Ok(d.clone());
    }
    let mut state = lm.initial_state();
    for &u in prefix {
        state = lm.advance(&state, u)?;
    }
    let d = lm.next_distribution(&state)?;
    cache.insert(prefix.to_vec(), d.clone());
    Ok(d)
}

/// Log fusion score of every squash class reachable in `post`, from scoring
/// each path independently. The beam width in `cfg` is ignored.
pub fn fusion_class_scores<S: Scalar>(
    post: &PosteriorMatrix<S>,
    lm: Option<&LmModel>,
    cfg: &FusionConfig,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    cfg.validate()?;
    check_lm(post, lm)?;
    path_count(post.classes(), post.frames(), FUSION_ORACLE_LIMIT)?;
    let mut cache = HashMap::new();
    let mut classes: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut failure = None;
    for_each_path(post.classes(), post.frames(), |path| {
        if failure.is_some() {
            return;
        }
        let mut score = 0.0;
        for (t, &p) in path.iter().enumerate() {
            score += post.log_prob(p, t).to_f64_lossy();
            if p == BLANK {
                continue;
            }
            let emits = t == 0 || path[t - 1] != p;
            if !emits && cfg.scoring == LmScoring::PerEmission {
                continue;
            }
            let dist = match lm {
                Some(m) => match prefix_distribution(m, &mut cache, &squash(&path[..t])) {
                    Ok(d) => Some(d),
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                },
                None => None,
            };
            score += lm_factor(dist.as_deref().map(|d| d.as_slice()), p, cfg);
        }
        let slot = classes.entry(squash(path)).or_insert(f64::NEG_INFINITY);
        *slot = log_add(*slot, score);
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(classes),
    }
}

/// Best squash class by exhaustive enumeration. Test-only reference for
/// [`super::fusion_beam_search`].
pub fn exhaustive_fusion_oracle<S: Scalar>(
    post: &PosteriorMatrix<S>,
    lm: Option<&LmModel>,
    cfg: &FusionConfig,
) -> Result<Hypothesis> {
    let classes = fusion_class_scores(post, lm, cfg)?;
    let mut best: Option<(&Vec<usize>, f64)> = None;
    for (units, &score) in &classes {
        if best.is_none_or(|(bu, bs)| better(score, units, bs, bu)) {
            best = Some((units, score));
        }
    }
    let (units, log_score) = best.expect("at least one path");
    Ok(Hypothesis {
        units: units.clone(),
        log_score,
    })
}
