//! Count unique valid entities before and after labelwise substitution.

use melm::codemix::labelwise_substitute;
use melm::corpus::{build_entity_index, sample_split, Corpus};
use melm::eval::unique_valid_entities;
use melm::filter::train_tagger;
use melm::synth::{self, SynthConfig};

fn main() -> melm::Result<()> {
    let data = synth::generate(&SynthConfig::default());
    let full = &data.train[0];
    let oracle = train_tagger(full, 10, 0)?;

    let gold = sample_split(full, 50, 1)?;
    // Substitution draws from the full training lexicon.
    let index = build_entity_index(std::slice::from_ref(full));
    let swapped: Vec<Corpus> = (0..3).map(|s| labelwise_substitute(&gold, &index, s)).collect::<melm::Result<_>>()?;
    let swapped = Corpus::concat(&swapped);

    let counts = unique_valid_entities(&[("gold", gold.sentences()), ("labelwise x3", swapped.sentences())], &oracle);
    for (name, n) in counts {
        println!("{name:<14} {n}");
    }
    Ok(())
}
