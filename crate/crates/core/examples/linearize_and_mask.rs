//! Linearize a labeled sentence and draw fine-tuning and generation masks.

use melm::corpus::{parse_conll, Lang};
use melm::linearize::{delinearize, linearize};
use melm::masking::{finetune_mask, gen_mask};
use melm::rng;

fn main() -> melm::Result<()> {
    let text = "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\nto O\nboycott O\nBritish B-MISC\nlamb O\n";
    let corpus = parse_conll(text, &Lang::new("en")?)?;
    let sentence = &corpus.sentences()[0];

    let seq = linearize(sentence, false);
    println!("linearized:   {}", seq.render());
    println!("with markers: {}", linearize(sentence, true).render());
    assert_eq!(&delinearize(&seq)?, sentence);

    let mut r = rng::stream(7, &[]);
    for round in 0..3 {
        let ft = finetune_mask(&seq, 0.7, &mut r).expect("sentence has entities");
        let gm = gen_mask(&seq, 0.5, &mut r).expect("sentence has entities");
        println!("round {round}: fine-tune masks {:?}, generation masks {:?}", ft.targets(), gm.targets());
    }
    Ok(())
}
