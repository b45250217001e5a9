use crate::error::{Error, Result};
use crate::model::graph::Dims;
use crate::model::{count_params, TopologyConfig, TopologyKind};
use crate::nn::projection_param_count;

/// A singletask config sized against a multitask reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityReport {
    pub config: TopologyConfig,
    pub target: usize,
    pub achieved: usize,
}

impl ParityReport {
    pub fn delta(&self) -> i64 {
        self.achieved as i64 - self.target as i64
    }

    pub fn exact(&self) -> bool {
        self.achieved == self.target
    }
}

/// Sizes an STL model predicting `reference.heads[head]` to the parameter
/// count of `reference`.
///
/// The STL keeps the reference's shared encoder and stacks as many trunk
/// BiLSTMs above `e0` as the reference cascade has, so its depth equals the
/// reference's deepest path. Three knobs then absorb the parameters of the
/// missing heads: the width of the last trunk BiLSTM, the head BiLSTM width,
/// and a bottleneck inside the output projection. Widths are searched by
/// increasing total deviation from their nominal values; the first
/// deviation level with an exact solution wins, preferring no bottleneck and
/// then the narrowest one. Without an exact solution within
/// `max_deviation`, the nominal widths with the closest bottleneck are
/// returned and [`ParityReport::delta`] is nonzero.
pub fn stl_parity(
    reference: &TopologyConfig,
    classes: &[usize],
    head: usize,
    max_deviation: usize,
) -> Result<ParityReport> {
    let target = count_params(reference, classes)?;
    let name = reference
        .heads
        .get(head)
        .ok_or_else(|| Error::Config(format!("reference has no head {head}")))?;
    let c = classes[head];
    let cascade = reference.resolved_cascade();
    let mut stl = TopologyConfig {
        kind: TopologyKind::Stl,
        heads: vec![name.clone()],
        cascade: cascade.clone(),
        bottleneck: 0,
        ..reference.clone()
    };
    let nominal_c = cascade.last().copied();
    let nominal_s = reference.head_hidden;

    // (cascade width, head width) -> exact bottleneck, if any
    let solve = |stl: &mut TopologyConfig, wc: Option<usize>, ws: usize| -> Result<Option<usize>> {
        if let (Some(w), Some(last)) = (wc, stl.cascade.last_mut()) {
            *last = w;
        }
        stl.head_hidden = ws;
        stl.bottleneck = 0;
        let direct = Dims::new(stl, &[c])?.param_count();
        if direct == target {
            return Ok(Some(0));
        }
        let rest =
            target as i128 - (direct - projection_param_count(2 * ws, c)) as i128 - c as i128;
        let per = (2 * ws + 1 + c) as i128;
        Ok((rest > 0 && rest % per == 0).then(|| (rest / per) as usize))
    };

    for dev in 0..=max_deviation {
        let mut best: Option<(usize, Option<usize>, usize)> = None;
        let dc_range: Vec<i64> = match nominal_c {
            Some(_) => (-(dev as i64)..=dev as i64).collect(),
            None => vec![0],
        };
        for dc in dc_range {
            let ds = dev as i64 - dc.abs();
            let wc = match nominal_c {
                Some(n) if n as i64 + dc >= 1 => Some((n as i64 + dc) as usize),
                Some(_) => continue,
                None => None,
            };
            let mut sides = vec![-ds, ds];
            sides.dedup();
            for s in sides {
                let ws = nominal_s as i64 + s;
                if ws < 1 {
                    continue;
                }
                let ws = ws as usize;
                if let Some(w) = solve(&mut stl, wc, ws)? {
                    if best.is_none_or(|(bw, _, _)| w < bw) {
                        best = Some((w, wc, ws));
                    }
                }
            }
        }
        if let Some((w, wc, ws)) = best {
            solve(&mut stl, wc, ws)?;
            stl.bottleneck = w;
            let achieved = count_params(&stl, &[c])?;
            debug_assert_eq!(achieved, target);
            return Ok(ParityReport {
                config: stl,
                target,
                achieved,
            });
        }
    }

    solve(&mut stl, nominal_c, nominal_s)?;
    let direct = count_params(&stl, &[c])?;
    if direct < target {
        let rest =
            target as f64 - (direct - projection_param_count(2 * nominal_s, c)) as f64 - c as f64;
        let per = (2 * nominal_s + 1 + c) as f64;
        let w = (rest / per).round().max(0.0) as usize;
        let with_w = TopologyConfig {
            bottleneck: w,
            ..stl.clone()
        };
        if w > 0 && count_params(&with_w, &[c])?.abs_diff(target) < direct.abs_diff(target) {
            stl = with_w;
        }
    }
    let achieved = count_params(&stl, &[c])?;
    Ok(ParityReport {
        config: stl,
        target,
        achieved,
    })
}
