//! Train the perceptron tagger and keep generated samples it labels identically.

use melm::filter::{filter_consistent, train_tagger};
use melm::generate::{augment, GenerateConfig};
use melm::mlm::{StubBackend, Vocabulary};
use melm::synth::{self, SynthConfig};

fn main() -> melm::Result<()> {
    let data = synth::generate(&SynthConfig { train_per_language: 200, ..SynthConfig::default() });
    let gold = &data.train[0];
    let tagger = train_tagger(gold, 10, 0)?;
    println!("tagger epoch accuracy: {:.3?}", tagger.epoch_accuracy());

    // A uniform stub swaps entity tokens for arbitrary words, so many samples fail.
    let stub = StubBackend::new(Vocabulary::build(gold, 1, &[], &[]));
    let generated = augment(gold, &stub, &GenerateConfig::default(), 0);
    let (kept, report) = filter_consistent(&generated.samples, &tagger, gold.sentences(), true);
    print!("{}", report.render());
    for s in kept.iter().take(5) {
        println!("kept: {}", s.sentence.tokens().join(" "));
    }
    Ok(())
}
