use std::collections::HashMap;

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::linearize::{Item, Marker};
use crate::masking::MaskPlan;
use crate::mlm::vocab::{Vocabulary, MASK};
use crate::mlm::MlmBackend;

/// Context key of a masked position: the nearest non-marker items to the left
/// and right in the masked input (masked neighbours appear as the mask token),
/// and the label marker enclosing the position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StubKey {
    pub left: Option<String>,
    pub right: Option<String>,
    pub label: Tag,
}

impl StubKey {
    pub fn new(left: Option<&str>, right: Option<&str>, label: Tag) -> Self {
        StubKey {
            left: left.map(str::to_string),
            right: right.map(str::to_string),
            label,
        }
    }

    pub fn of(plan: &MaskPlan, pos: usize, vocab: &Vocabulary) -> Self {
        let items = plan.base().items();
        let surface = |i: usize| -> Option<String> {
            match &items[i] {
                Item::Word(_) if plan.is_masked(i) => Some(vocab.token(MASK).to_string()),
                Item::Word(w) => Some(w.clone()),
                Item::Marker(_) => None,
            }
        };
        let left = (0..pos).rev().find_map(surface);
        let right = (pos + 1..items.len()).find_map(surface);
        let label = (0..pos)
            .rev()
            .find_map(|i| match &items[i] {
                Item::Marker(Marker::Label(t)) => Some(t.clone()),
                _ => None,
            })
            .unwrap_or(Tag::O);
        StubKey { left, right, label }
    }
}

/// Deterministic backend returning fixed distributions per [`StubKey`], and a
/// uniform distribution for unknown keys.
#[derive(Debug, Clone)]
pub struct StubBackend {
    vocab: Vocabulary,
    table: HashMap<StubKey, Vec<f64>>,
}

impl StubBackend {
    pub fn new(vocab: Vocabulary) -> Self {
        StubBackend {
            vocab,
            table: HashMap::new(),
        }
    }

    /// Registers a distribution from `(token, weight)` pairs; weights are normalized
    /// and unlisted tokens get probability zero.
    pub fn insert(&mut self, key: StubKey, weights: &[(&str, f64)]) -> Result<()> {
        let mut dist = vec![0.0; self.vocab.len()];
        for (tok, w) in weights {
            let id = self
                .vocab
                .get(tok)
                .ok_or_else(|| Error::Generation(format!("stub token `{tok}` not in vocabulary")))?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Generation(format!("bad stub weight {w} for `{tok}`")));
            }
            dist[id] += w;
        }
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            return Err(Error::Generation("stub distribution has zero mass".into()));
        }
        dist.iter_mut().for_each(|p| *p /= total);
        self.table.insert(key, dist);
        Ok(())
    }
}

impl MlmBackend for StubBackend {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, plan: &MaskPlan) -> Result<Vec<Vec<f64>>> {
        let uniform = 1.0 / self.vocab.len() as f64;
        Ok(plan
            .positions()
            .iter()
            .map(|&pos| {
                let key = StubKey::of(plan, pos, &self.vocab);
                self.table
                    .get(&key)
                    .cloned()
                    .unwrap_or_else(|| vec![uniform; self.vocab.len()])
            })
            .collect())
    }
}
