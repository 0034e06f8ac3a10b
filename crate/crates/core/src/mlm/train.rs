use std::sync::Arc;

use log::{debug, warn};
use rand::seq::SliceRandom;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linearize::linearize_shared;
use crate::masking::finetune_mask;
use crate::mlm::model::{Params, TinyMlm};
use crate::rng::{self, stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    /// Fine-tuning mask rate.
    pub eta: f64,
    pub language_markers: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            lr: 1e-2,
            momentum: 0.9,
            optimizer: Optimizer::Momentum,
            clip_norm: 1.0,
            eta: 0.7,
            language_markers: false,
        }
    }
}

struct OptState {
    first: Params,
    second: Option<Params>,
}

fn apply_update(model: &mut TinyMlm, grads: &Params, state: &mut OptState, cfg: &TrainConfig) {
    model.steps += 1;
    let params = model.params.slices_mut();
    let grads = grads.slices();
    let firsts = state.first.slices_mut();
    match (cfg.optimizer, &mut state.second) {
        (Optimizer::Adam, Some(second)) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            let t = model.steps as i32;
            let c1 = 1.0 - B1.powi(t);
            let c2 = 1.0 - B2.powi(t);
            for (((p, g), m), v) in params.into_iter().zip(grads).zip(firsts).zip(second.slices_mut()) {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    p[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
        _ => {
            for ((p, g), m) in params.into_iter().zip(grads).zip(firsts) {
                for i in 0..p.len() {
                    m[i] = cfg.momentum * m[i] + g[i];
                    p[i] -= cfg.lr * m[i];
                }
            }
        }
    }
}

/// Fine-tunes `model` on entity-masked linearized sentences of `corpus`.
///
/// Masks are redrawn at the start of every epoch. The loss is the mean negative
/// log-probability of the original tokens over masked positions only. Per-epoch
/// losses are appended to the model's loss history.
pub fn finetune(model: &mut TinyMlm, corpus: &Corpus, cfg: &TrainConfig, seed: u64) -> Result<()> {
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch_size and lr must be positive".into()));
    }
    let max_len = model.config.max_len;
    let mut sequences = Vec::new();
    for (idx, s) in corpus.sentences().iter().enumerate() {
        if !s.has_entities() {
            continue;
        }
        let seq = linearize_shared(Arc::new(s.clone()), cfg.language_markers);
        if seq.len() > max_len {
            warn!("skipping sentence {idx}: {} items exceed max length {max_len}", seq.len());
            continue;
        }
        sequences.push((idx, seq));
    }
    if sequences.is_empty() {
        return Err(Error::Training("corpus has no trainable entity tokens".into()));
    }

    let vocab_len = model.vocab.len();
    let mut grads = Params::zeros(vocab_len, &model.config);
    let mut state = OptState {
        first: Params::zeros(vocab_len, &model.config),
        second: matches!(cfg.optimizer, Optimizer::Adam)
            .then(|| Params::zeros(vocab_len, &model.config)),
    };

    for epoch in 0..cfg.epochs {
        let mut examples = Vec::with_capacity(sequences.len());
        for (idx, seq) in &sequences {
            let mut r = rng::stream(seed, &[stage::FINETUNE_MASK, epoch as u64, *idx as u64]);
            let plan = finetune_mask(seq, cfg.eta, &mut r).expect("sentence has entities");
            let ids = model.encode(&plan)?;
            let targets: Vec<usize> = plan.targets().iter().map(|t| model.vocab.id(t)).collect();
            examples.push((ids, plan.positions().to_vec(), targets));
        }
        examples.shuffle(&mut rng::stream(seed, &[stage::FINETUNE_SHUFFLE, epoch as u64]));

        let mut epoch_nll = 0.0;
        let mut epoch_count = 0usize;
        for batch in examples.chunks(cfg.batch_size) {
            let masked: usize = batch.iter().map(|(_, p, _)| p.len()).sum();
            let scale = 1.0 / masked as f64;
            grads.fill_zero();
            for (ids, positions, targets) in batch {
                epoch_nll += model.loss_and_grad(ids, positions, targets, scale, &mut grads);
            }
            epoch_count += masked;
            if cfg.clip_norm > 0.0 {
                let norm = grads.sum_squares().sqrt();
                if norm > cfg.clip_norm {
                    let f = cfg.clip_norm / norm;
                    for s in grads.slices_mut() {
                        s.iter_mut().for_each(|g| *g *= f);
                    }
                }
            }
            apply_update(model, &grads, &mut state, cfg);
            if !model.params.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite parameters after step {}",
                    model.steps
                )));
            }
        }
        let loss = epoch_nll / epoch_count as f64;
        debug!("epoch {epoch}: loss {loss:.4}");
        model.loss_history.push(loss);
    }
    Ok(())
}
