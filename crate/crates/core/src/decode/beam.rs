use std::collections::HashMap;
use std::sync::Arc;

use crate::ctc::PosteriorMatrix;
use crate::decode::{better, check_lm, lm_factor, FusionConfig, Hypothesis, LmScoring};
use crate::error::Result;
use crate::lm::{LmModel, LmState};
use crate::numerics::ops::log_add;
use crate::scalar::Scalar;
use crate::units::BLANK;

struct Entry {
    prefix: Vec<usize>,
    /// Log probability of paths ending in blank / in the last label.
    pb: f64,
    pnb: f64,
    state: Option<LmState>,
    dist: Option<Arc<Vec<f64>>>,
}

impl Entry {
    fn total(&self) -> f64 {
        log_add(self.pb, self.pnb)
    }
}

enum Origin {
    Kept(usize),
    Extended(usize, usize),
}

struct Candidate {
    pb: f64,
    pnb: f64,
    origin: Origin,
}

impl Candidate {
    fn new(origin: Origin) -> Self {
        Self {
            pb: f64::NEG_INFINITY,
            pnb: f64::NEG_INFINITY,
            origin,
        }
    }
}

/// Prefix beam search maximizing the summed fusion score of all paths that
/// squash to a prefix. With `lm = None` only the insertion bonus applies.
pub fn fusion_beam_search<S: Scalar>(
    post: &PosteriorMatrix<S>,
    lm: Option<&LmModel>,
    cfg: &FusionConfig,
) -> Result<Hypothesis> {
    cfg.validate()?;
    check_lm(post, lm)?;
    let classes = post.classes();
    let state = lm.map(|m| m.initial_state());
    let dist = match (&state, lm) {
        (Some(s), Some(m)) => Some(m.next_distribution(s)?),
        _ => None,
    };
    let mut beam = vec![Entry {
        prefix: Vec::new(),
        pb: 0.0,
        pnb: f64::NEG_INFINITY,
        state,
        dist,
    }];
    let mut y = vec![0.0f64; classes];
    for t in 0..post.frames() {
        for (k, v) in y.iter_mut().enumerate() {
            *v = post.log_prob(k, t).to_f64_lossy();
        }
        let mut next: HashMap<Vec<usize>, Candidate> = HashMap::with_capacity(beam.len() * classes);
        for (i, e) in beam.iter().enumerate() {
            let total = e.total();
            let dist = e.dist.as_deref().map(|d| d.as_slice());
            let kept = next
                .entry(e.prefix.clone())
                .and_modify(|c| c.origin = Origin::Kept(i))
                .or_insert_with(|| Candidate::new(Origin::Kept(i)));
            kept.pb = log_add(kept.pb, total + y[BLANK]);
            let last = e.prefix.last().copied();
            if let Some(c) = last {
                let stay = match cfg.scoring {
                    LmScoring::PerEmission => 0.0,
                    LmScoring::PerFrame => lm_factor(dist, c, cfg),
                };
                kept.pnb = log_add(kept.pnb, e.pnb + y[c] + stay);
            }
            for (k, &yk) in y.iter().enumerate().skip(1) {
                let from = if Some(k) == last { e.pb } else { total };
                if from == f64::NEG_INFINITY {
                    continue;
                }
                let mut prefix = Vec::with_capacity(e.prefix.len() + 1);
                prefix.extend_from_slice(&e.prefix);
                prefix.push(k);
                let cand = next
                    .entry(prefix)
                    .or_insert_with(|| Candidate::new(Origin::Extended(i, k)));
                cand.pnb = log_add(cand.pnb, from + yk + lm_factor(dist, k, cfg));
            }
        }
        let mut ranked: Vec<(Vec<usize>, Candidate)> = next.into_iter().collect();
        ranked.sort_by(|(pa, a), (pb, b)| {
            let (sa, sb) = (log_add(a.pb, a.pnb), log_add(b.pb, b.pnb));
            sb.total_cmp(&sa).then_with(|| pa.cmp(pb))
        });
        ranked.truncate(cfg.beam);
        let mut fresh = Vec::with_capacity(ranked.len());
        for (prefix, cand) in ranked {
            let (state, dist) = match (cand.origin, lm) {
                (Origin::Kept(i), _) => (beam[i].state.clone(), beam[i].dist.clone()),
                (Origin::Extended(i, k), Some(m)) => {
                    let parent = beam[i]
                        .state
                        .as_ref()
                        .expect("LM state present when fusing");
                    let s = m.advance(parent, k)?;
                    let d = m.next_distribution(&s)?;
                    (Some(s), Some(d))
                }
                (Origin::Extended(..), None) => (None, None),
            };
            fresh.push(Entry {
                prefix,
                pb: cand.pb,
                pnb: cand.pnb,
                state,
                dist,
            });
        }
        beam = fresh;
    }
    let mut best = &beam[0];
    for e in &beam[1..] {
        if better(e.total(), &e.prefix, best.total(), &best.prefix) {
            best = e;
        }
    }
    Ok(Hypothesis {
        units: best.prefix.clone(),
        log_score: best.total(),
    })
}
