//! Masked language model backends.
//!
//! [`MlmBackend`] is the contract the generator relies on: given a mask plan,
//! return one probability distribution over the vocabulary per masked position.
//! [`TinyMlm`] is a trainable transformer; [`StubBackend`] is a lookup table.

mod checkpoint;
mod model;
mod stub;
mod train;
mod vocab;

use std::collections::BTreeMap;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use model::{ModelConfig, Params, TinyMlm};
pub use stub::{StubBackend, StubKey};
pub use train::{finetune, Optimizer, TrainConfig};
pub use vocab::{Vocabulary, MASK, PAD, UNK};

use crate::corpus::{EntityClass, Tag};
use crate::error::Result;
use crate::linearize::Marker;
use crate::masking::MaskPlan;

pub trait MlmBackend: Sync {
    fn vocab(&self) -> &Vocabulary;

    /// One distribution per masked position, in ascending position order.
    /// All positions are predicted from a single encoding of the masked input.
    fn predict(&self, plan: &MaskPlan) -> Result<Vec<Vec<f64>>>;
}

pub fn predict<B: MlmBackend + ?Sized>(backend: &B, plan: &MaskPlan) -> Result<Vec<Vec<f64>>> {
    backend.predict(plan)
}

/// Natural words used to seed label-marker embeddings.
pub fn default_label_words() -> BTreeMap<EntityClass, String> {
    [
        ("PER", "person"),
        ("ORG", "organization"),
        ("LOC", "location"),
        ("MISC", "miscellaneous"),
    ]
    .into_iter()
    .map(|(c, w)| (EntityClass::new(c).expect("valid class"), w.to_string()))
    .collect()
}

/// Copies the embedding of each class's natural word onto its `B-`/`I-` markers.
///
/// Markers whose word is not in the vocabulary keep their current embedding.
/// Returns how many marker rows were set.
pub fn init_label_embeddings(
    model: &mut TinyMlm,
    label_words: &BTreeMap<EntityClass, String>,
) -> usize {
    let mut updated = 0;
    for (class, word) in label_words {
        let Some(word_id) = model.vocab.get(word) else {
            continue;
        };
        let row = model.embedding(word_id);
        for tag in [Tag::B(class.clone()), Tag::I(class.clone())] {
            if let Some(marker_id) = model.vocab.get(&Marker::Label(tag).render()) {
                model.set_embedding(marker_id, &row);
                updated += 1;
            }
        }
    }
    updated
}
