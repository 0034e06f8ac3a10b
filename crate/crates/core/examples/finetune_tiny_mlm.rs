//! Fine-tune the small transformer MLM with entity masking and print the loss curve.

use melm::corpus::{parse_conll, Lang};
use melm::linearize::linearize;
use melm::masking::MaskPlan;
use melm::mlm::{finetune, MlmBackend, ModelConfig, TinyMlm, TrainConfig, Vocabulary};
use melm::rng;

fn main() -> melm::Result<()> {
    let mut text = String::new();
    for (i, (p, o)) in [("Alice", "Acme"), ("Bruno", "Globex"), ("Chen", "Initech"), ("Dana", "Hooli")]
        .iter()
        .enumerate()
    {
        text.push_str(&format!("day{i} O\n{p} B-PER\njoined O\n{o} B-ORG\nCorp I-ORG\n. O\n\n"));
    }
    let corpus = parse_conll(&text, &Lang::new("en")?)?;
    let vocab = Vocabulary::build(&corpus, 1, &[], &[]);
    let cfg = ModelConfig { dim: 32, ff_dim: 64, ..ModelConfig::default() };
    let mut model = TinyMlm::new(vocab, cfg, &mut rng::stream(0, &[]))?;
    let train = TrainConfig { epochs: 100, ..TrainConfig::default() };
    finetune(&mut model, &corpus, &train, 0)?;
    for (epoch, loss) in model.loss_history().iter().enumerate().step_by(10) {
        println!("epoch {epoch:>3}  loss {loss:.4}");
    }

    let seq = linearize(&corpus.sentences()[2], false);
    let plan = MaskPlan::new(seq.clone(), vec![seq.item_of_token(1)])?;
    let dist = &model.predict(&plan)?[0];
    let best = (0..dist.len()).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
    println!("{} -> predicted `{}` (p = {:.3})", plan.base().render(), model.vocab().token(best), dist[best]);
    Ok(())
}
