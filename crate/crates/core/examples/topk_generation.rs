//! Top-k sampling of entity replacements from a fixed stub distribution.

use std::collections::BTreeMap;
use std::sync::Arc;

use melm::corpus::{parse_conll, Lang};
use melm::generate::{augment_one, GenerateConfig};
use melm::mlm::{StubBackend, StubKey, Vocabulary};

fn main() -> melm::Result<()> {
    let en = Lang::new("en")?;
    let text = "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\nto O\nboycott O\nBritish B-MISC\nlamb O\n";
    let corpus = parse_conll(text, &en)?;
    let extra = parse_conll("Greenpeace B-ORG\n\nAmnesty B-ORG\n\nUN B-ORG\n\nReuters B-ORG\n\nNATO B-ORG\n", &en)?;
    let vocab = Vocabulary::build(&melm::corpus::Corpus::concat([&corpus, &extra]), 1, &[], &[]);

    let mut stub = StubBackend::new(vocab);
    stub.insert(
        StubKey::new(None, Some("rejects"), "B-ORG".parse()?),
        &[("EU", 0.3), ("Greenpeace", 0.2), ("Amnesty", 0.15), ("UN", 0.12), ("Reuters", 0.1), ("NATO", 0.05)],
    )?;

    let sentence = Arc::new(corpus.sentences()[0].clone());
    let cfg = GenerateConfig::default();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seed in 0..10_000 {
        let sample = augment_one(&sentence, 0, 0, &stub, &cfg, seed)?.expect("has entities");
        if seed < 3 {
            println!("{}", sample.sentence.tokens().join(" "));
        }
        *counts.entry(sample.sentence.tokens()[0].clone()).or_default() += 1;
    }
    for (w, n) in counts {
        println!("{w:<12} {:.3}", n as f64 / 10_000.0);
    }
    Ok(())
}
