//! Code-mix English sentences with Spanish entities chosen by embedding similarity.

use melm::codemix::{codemix_corpus, CodeMixConfig, EmbeddingTables};
use melm::corpus::build_entity_index;
use melm::synth::{self, SynthConfig};

fn main() -> melm::Result<()> {
    let data = synth::generate(&SynthConfig { train_per_language: 50, ..SynthConfig::default() });
    let langs = synth::languages();
    let mut tables = EmbeddingTables::default();
    tables.insert(langs[0].clone(), langs[1].clone(), data.embeddings.clone());

    let index = build_entity_index(&data.train);
    let mixed = codemix_corpus(&data.train, &CodeMixConfig::default(), &index, &tables, 3)?;
    println!("{} of {} sentences code-mixed", mixed.len(), data.train.iter().map(|c| c.len()).sum::<usize>());
    for (orig, mix) in data.train[0].sentences().iter().zip(mixed.sentences()).take(5) {
        println!("{}\n  -> {}", orig.tokens().join(" "), mix.tokens().join(" "));
    }
    Ok(())
}
