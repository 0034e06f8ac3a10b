//! Masked entity language modeling (MELM) for augmenting token-labeled NER corpora.
//!
//! The crate covers the whole augmentation loop:
//!
//! - [`corpus`]: CoNLL reading/writing, BIO spans, entity indices, low-resource splits.
//! - [`linearize`]: label-marker (and language-marker) injection and its inverse.
//! - [`masking`]: entity-only masking for fine-tuning and Gaussian dynamic masking for generation.
//! - [`mlm`]: the masked-LM backend contract, a tiny trainable transformer and a stub backend.
//! - [`generate`]: top-k random sampling over several rounds.
//! - [`filter`]: an averaged structured perceptron tagger and the consistency filter.
//! - [`codemix`]: code-mixing by entity similarity search over bilingual embeddings.
//! - [`eval`]: span micro-F1, unique valid entity counts and the gold vs. augmented harness.
//! - [`pipeline`], [`config`], [`cli`]: the batch driver.
//! - [`synth`]: a templated two-language corpus generator used for benchmarking.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod codemix;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod filter;
pub mod generate;
pub mod linearize;
pub mod masking;
pub mod mlm;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
