use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureMatrix, Transcript};
use crate::error::{Error, Result};
use crate::model::{stack_frames, ModelGraph, TrainingConfig, UtteranceLoss};
use crate::nn::{ParamGroup, Sgd};
use crate::numerics::Tensor2D;
use crate::scalar::Scalar;
use crate::units::UnitCodec;

/// Stacked features and the transcript encoded in every head's inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample<S> {
    pub utt_id: String,
    pub features: Tensor2D<S>,
    pub targets: Vec<Vec<usize>>,
}

/// Batch-mean losses of one update. `per_head` is `None` for detached heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MultitaskLoss {
    pub per_head: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    /// `sum_h weight_h * loss_h`, averaged over used utterances.
    pub combined: f64,
    pub used: usize,
    /// Utterances too short for some weighted head's target.
    pub skipped: usize,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

pub fn encode_targets(codecs: &[UnitCodec], text: &str) -> Result<Vec<Vec<usize>>> {
    codecs.iter().map(|c| c.encode(text)).collect()
}

/// Model inputs for one utterance: phase-0 stacking (or every phase when
/// `augment`), at `subsample` frames per output frame.
pub fn model_inputs(
    x: &FeatureMatrix,
    subsample: usize,
    augment: bool,
) -> Result<Vec<FeatureMatrix>> {
    if subsample <= 1 {
        return Ok(vec![x.clone()]);
    }
    let phases = if augment { subsample } else { 1 };
    (0..phases).map(|p| stack_frames(x, subsample, p)).collect()
}

/// Encodes and stacks a corpus; with augmentation the list is `subsample`
/// times longer, phases of one utterance kept together.
pub fn prepare_examples(
    codecs: &[UnitCodec],
    corpus: &[(FeatureMatrix, Transcript)],
    cfg: &TrainingConfig,
) -> Result<Vec<TrainingExample<f64>>> {
    let mut out = Vec::with_capacity(corpus.len() * cfg.subsample.max(1));
    for (x, t) in corpus {
        let targets = encode_targets(codecs, &t.text)?;
        for stacked in model_inputs(x, cfg.subsample, cfg.augment)? {
            out.push(TrainingExample {
                utt_id: t.utt_id.clone(),
                features: stacked.into_values(),
                targets: targets.clone(),
            });
        }
    }
    Ok(out)
}

type Outcome<S> = Result<Option<(UtteranceLoss, Vec<Tensor2D<S>>)>>;

fn per_utterance<S: Scalar>(
    model: &ModelGraph<S>,
    batch: &[&TrainingExample<S>],
    weights: &[f64],
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Outcome<S>> {
    let run =
        |ex: &&TrainingExample<S>| model.loss_and_gradients(&ex.features, &ex.targets, weights);
    match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            batch.par_iter().map(run).collect()
        }),
        None => batch.iter().map(run).collect(),
    }
}

/// One SGD update on the mean loss of the feasible utterances in `batch`.
/// Gradients are summed in batch order whatever the thread count.
pub fn train_step<S: Scalar>(
    model: &mut ModelGraph<S>,
    batch: &[&TrainingExample<S>],
    weights: &[f64],
    optimizer: &Sgd,
    pool: Option<&rayon::ThreadPool>,
) -> Result<MultitaskLoss> {
    let heads = model.heads().len();
    let outcomes = per_utterance(model, batch, weights, pool);
    let mut sum: Option<Vec<Tensor2D<S>>> = None;
    let mut per_head = vec![0.0; heads];
    let mut combined = 0.0;
    let (mut used, mut skipped) = (0usize, 0usize);
    for outcome in outcomes {
        let Some((loss, grads)) = outcome? else {
            skipped += 1;
            continue;
        };
        used += 1;
        combined += loss.combined;
        for (acc, l) in per_head.iter_mut().zip(&loss.per_head) {
            *acc += l.unwrap_or(0.0);
        }
        match &mut sum {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
        }
    }
    let Some(mut grads) = sum else {
        return Err(Error::EmptyBatch);
    };
    let scale = S::of(1.0 / used as f64);
    for g in grads.iter_mut() {
        g.scale(scale);
    }
    let grad_norm = optimizer.step(model.tensors_mut(), &grads);
    let n = used as f64;
    Ok(MultitaskLoss {
        per_head: per_head
            .iter()
            .zip(weights)
            .map(|(&l, &w)| (w != 0.0).then_some(l / n))
            .collect(),
        weights: weights.to_vec(),
        combined: combined / n,
        used,
        skipped,
        grad_norm,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
    pub skipped: usize,
}

/// Batches of utterances with similar length: indices sorted by frame
/// count (ties by position) and cut into `batch_size` chunks.
pub fn length_sorted_batches(frames: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| (frames[i], i));
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Runs `cfg.epochs` epochs; batch order is reshuffled each epoch from
/// `cfg.seed`. Batches whose utterances are all infeasible are skipped.
pub fn train<S: Scalar>(
    model: &mut ModelGraph<S>,
    examples: &[TrainingExample<S>],
    cfg: &TrainingConfig,
    mut on_step: impl FnMut(usize, &MultitaskLoss),
) -> Result<Vec<EpochStats>> {
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = cfg.head_weights(model.heads().len())?;
    let pool = if cfg.jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let frames: Vec<usize> = examples.iter().map(|e| e.features.cols()).collect();
    let mut batches = length_sorted_batches(&frames, cfg.batch_size);
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        batches.shuffle(&mut rng);
        let (mut total, mut steps, mut skipped) = (0.0, 0usize, 0usize);
        for idx in &batches {
            let batch: Vec<&TrainingExample<S>> = idx.iter().map(|&i| &examples[i]).collect();
            match train_step(model, &batch, &weights, &cfg.optimizer, pool.as_ref()) {
                Ok(loss) => {
                    total += loss.combined;
                    steps += 1;
                    skipped += loss.skipped;
                    on_step(epoch, &loss);
                }
                Err(Error::EmptyBatch) => skipped += batch.len(),
                Err(e) => return Err(e),
            }
        }
        stats.push(EpochStats {
            epoch,
            mean_loss: if steps > 0 {
                total / steps as f64
            } else {
                f64::NAN
            },
            steps,
            skipped,
        });
    }
    Ok(stats)
}
