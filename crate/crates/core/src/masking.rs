//! Entity-only masking.
//!
//! Fine-tuning masks each entity token independently with rate `eta`.
//! Generation draws a dynamic rate per entity span from `N(mu, 1/n^2)` and masks
//! that fraction of the span's tokens.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linearize::{Item, LinearizedSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    /// Fine-tuning mask rate.
    pub eta: f64,
    /// Mean of the generation masking rate.
    pub mu: f64,
    pub top_k: usize,
    pub rounds: usize,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            eta: 0.7,
            mu: 0.5,
            top_k: 5,
            rounds: 3,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !rate_ok(self.eta) {
            return Err(Error::Config(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if !rate_ok(self.mu) {
            return Err(Error::Config(format!("mu must be in (0, 1], got {}", self.mu)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// A masked view of a linearized sequence.
///
/// Only entity surface tokens can be masked and at least one always is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    base: LinearizedSequence,
    positions: Vec<usize>,
    targets: Vec<String>,
}

impl MaskPlan {
    pub fn new(base: LinearizedSequence, mut positions: Vec<usize>) -> Result<Self> {
        positions.sort_unstable();
        positions.dedup();
        if positions.is_empty() {
            return Err(Error::MaskPlan("no masked positions".into()));
        }
        let mut targets = Vec::with_capacity(positions.len());
        for &p in &positions {
            if !base.is_entity_item(p) {
                return Err(Error::MaskPlan(format!(
                    "item {p} is not an entity token"
                )));
            }
            match &base.items()[p] {
                Item::Word(w) => targets.push(w.clone()),
                Item::Marker(_) => unreachable!("entity items are words"),
            }
        }
        Ok(MaskPlan {
            base,
            positions,
            targets,
        })
    }

    pub fn base(&self) -> &LinearizedSequence {
        &self.base
    }

    /// Masked item indices, ascending.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Original words at [`Self::positions`].
    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn is_masked(&self, item: usize) -> bool {
        self.positions.binary_search(&item).is_ok()
    }
}

/// Per-token Bernoulli(`eta`) masking of entity tokens, falling back to one
/// uniformly chosen entity token when the draw masks nothing.
pub fn finetune_mask<R: Rng + ?Sized>(
    seq: &LinearizedSequence,
    eta: f64,
    rng: &mut R,
) -> Option<MaskPlan> {
    let entities = seq.entity_items();
    if entities.is_empty() {
        return None;
    }
    let mut picked: Vec<usize> = entities
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < eta)
        .collect();
    if picked.is_empty() {
        picked.push(entities[rng.random_range(0..entities.len())]);
    }
    Some(MaskPlan::new(seq.clone(), picked).expect("entity items are maskable"))
}

/// Number of tokens to mask in an `n`-token span for a sampled rate `eps`.
pub fn span_mask_count(eps: f64, n: usize) -> usize {
    let eps = eps.clamp(0.0, 1.0);
    // f64::round rounds half away from zero.
    ((eps * n as f64).round() as usize).clamp(1, n)
}

/// Gaussian dynamic masking: each entity span of `n` tokens draws
/// `eps ~ N(mu, 1/n^2)` and masks `clamp(round(eps * n), 1, n)` of its tokens.
pub fn gen_mask<R: Rng + ?Sized>(
    seq: &LinearizedSequence,
    mu: f64,
    rng: &mut R,
) -> Option<MaskPlan> {
    let spans = seq.origin().spans();
    if spans.is_empty() {
        return None;
    }
    let mut picked = Vec::new();
    for span in spans {
        let n = span.len();
        let normal = Normal::new(mu, 1.0 / n as f64).expect("finite parameters");
        let m = span_mask_count(normal.sample(rng), n);
        for offset in index::sample(rng, n, m) {
            picked.push(seq.item_of_token(span.start + offset));
        }
    }
    Some(MaskPlan::new(seq.clone(), picked).expect("entity items are maskable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, Lang, Sentence};
    use crate::linearize::linearize;
    use crate::rng;

    fn sent(text: &str) -> Sentence {
        parse_conll(text, &Lang::new("en").unwrap()).unwrap().sentences()[0].clone()
    }

    #[test]
    fn entity_free_sentences_get_no_plan() {
        let seq = linearize(&sent("a O\nb O\n"), false);
        let mut r = rng::stream(0, &[]);
        assert!(finetune_mask(&seq, 0.7, &mut r).is_none());
        assert!(gen_mask(&seq, 0.5, &mut r).is_none());
    }

    #[test]
    fn eta_one_masks_every_entity_token() {
        let seq = linearize(&sent("Peter B-PER\nBlackburn I-PER\nsaid O\nEU B-ORG\n"), true);
        let mut r = rng::stream(1, &[]);
        let plan = finetune_mask(&seq, 1.0, &mut r).unwrap();
        assert_eq!(plan.positions(), seq.entity_items().as_slice());
        assert_eq!(plan.targets(), ["Peter", "Blackburn", "EU"]);
    }

    #[test]
    fn single_token_entity_always_masked_in_generation() {
        let seq = linearize(&sent("EU B-ORG\nrejects O\n"), false);
        for seed in 0..200 {
            let plan = gen_mask(&seq, 0.5, &mut rng::stream(seed, &[])).unwrap();
            assert_eq!(plan.positions(), [1]);
        }
    }

    #[test]
    fn plans_reject_context_and_markers() {
        let seq = linearize(&sent("EU B-ORG\nrejects O\n"), false);
        assert!(MaskPlan::new(seq.clone(), vec![]).is_err());
        assert!(MaskPlan::new(seq.clone(), vec![0]).is_err());
        assert!(MaskPlan::new(seq.clone(), vec![3]).is_err());
        assert!(MaskPlan::new(seq, vec![1]).is_ok());
    }

    #[test]
    fn mask_count_rounding() {
        assert_eq!(span_mask_count(0.5, 1), 1);
        assert_eq!(span_mask_count(-3.0, 4), 1);
        assert_eq!(span_mask_count(0.375, 4), 2); // 1.5 rounds away from zero
        assert_eq!(span_mask_count(0.625, 4), 3); // 2.5 likewise
        assert_eq!(span_mask_count(7.0, 4), 4);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let seq = linearize(&sent("A B-ORG\nB I-ORG\nC I-ORG\nx O\nD B-PER\nE I-PER\n"), false);
        let a = gen_mask(&seq, 0.5, &mut rng::stream(9, &[1, 2])).unwrap();
        let b = gen_mask(&seq, 0.5, &mut rng::stream(9, &[1, 2])).unwrap();
        assert_eq!(a, b);
        let a = finetune_mask(&seq, 0.7, &mut rng::stream(9, &[3])).unwrap();
        let b = finetune_mask(&seq, 0.7, &mut rng::stream(9, &[3])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = MaskingConfig::default();
        assert_eq!((c.eta, c.mu, c.rounds, c.top_k), (0.7, 0.5, 3, 5));
        assert!(c.validate().is_ok());
        assert!(MaskingConfig { eta: 0.0, ..c }.validate().is_err());
        assert!(MaskingConfig { top_k: 0, ..c }.validate().is_err());
    }
}
