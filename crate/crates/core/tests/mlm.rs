mod common;

use std::time::Instant;

use melm::corpus::{parse_conll, Corpus, Lang};
use melm::linearize::linearize;
use melm::masking::{finetune_mask, MaskPlan};
use melm::mlm::{
    finetune, read_checkpoint, write_checkpoint, MlmBackend, ModelConfig, Params, TinyMlm,
    TrainConfig, Vocabulary,
};
use melm::rng;

use common::tiny_corpus;

fn en() -> Lang {
    Lang::new("en").unwrap()
}

fn small_model(corpus: &Corpus, layers: usize) -> TinyMlm {
    let vocab = Vocabulary::build(corpus, 1, &[], &[]);
    let cfg = ModelConfig {
        dim: 8,
        layers,
        heads: 2,
        ff_dim: 12,
        max_len: 32,
        init_std: 0.5,
    };
    TinyMlm::new(vocab, cfg, &mut rng::stream(17, &[])).unwrap()
}

type Example = (Vec<usize>, Vec<usize>, Vec<usize>);

fn batch_of(model: &TinyMlm, corpus: &Corpus, n: usize) -> Vec<Example> {
    corpus.sentences()[..n]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let plan = finetune_mask(&linearize(s, false), 0.7, &mut rng::stream(3, &[i as u64])).unwrap();
            let ids = model.encode(&plan).unwrap();
            let targets = plan.targets().iter().map(|t| model.vocab().id(t)).collect();
            (ids, plan.positions().to_vec(), targets)
        })
        .collect()
}

fn batch_loss(model: &TinyMlm, batch: &[Example]) -> f64 {
    let masked: usize = batch.iter().map(|b| b.1.len()).sum();
    batch.iter().map(|(i, p, t)| model.loss(i, p, t)).sum::<f64>() / masked as f64
}

#[test]
fn analytic_gradients_match_central_differences() {
    let corpus = tiny_corpus();
    let mut model = small_model(&corpus, 2);
    let batch = batch_of(&model, &corpus, 2);
    let masked: usize = batch.iter().map(|b| b.1.len()).sum();

    let mut grads = Params::zeros_like(model.params());
    for (ids, pos, tgt) in &batch {
        model.loss_and_grad(ids, pos, tgt, 1.0 / masked as f64, &mut grads);
    }
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for t in 0..analytic.len() {
        for i in 0..analytic[t].len() {
            let orig = model.params().slices()[t][i];
            model.params_mut().slices_mut()[t][i] = orig + h;
            let up = batch_loss(&model, &batch);
            model.params_mut().slices_mut()[t][i] = orig - h;
            let down = batch_loss(&model, &batch);
            model.params_mut().slices_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t][i];
            // Gradients below 1e-6 are compared absolutely.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-3, "tensor {t} index {i}: analytic {a} numeric {numeric}");
            worst = worst.max(rel);
            checked += 1;
        }
    }
    println!("checked {checked} parameters, worst relative error {worst:.2e}");
}

#[test]
fn loss_ignores_unmasked_positions() {
    let corpus = tiny_corpus();
    let model = small_model(&corpus, 1);
    let s = &corpus.sentences()[0];
    let seq = linearize(s, false);
    let entity = seq.entity_items();
    let one = MaskPlan::new(seq.clone(), vec![entity[0]]).unwrap();
    let ids = model.encode(&one).unwrap();
    let target = vec![model.vocab().id(&one.targets()[0])];
    let mut g1 = Params::zeros_like(model.params());
    let l1 = model.loss_and_grad(&ids, one.positions(), &target, 1.0, &mut g1);
    // Same input; the loss only reads the masked position.
    assert_eq!(l1, model.loss(&ids, one.positions(), &target));
    let dists = model.predict(&one).unwrap();
    assert_eq!(dists.len(), 1);
    assert!((l1 + dists[0][target[0]].ln()).abs() < 1e-12);
}

#[test]
fn distributions_are_normalized() {
    let corpus = tiny_corpus();
    let model = small_model(&corpus, 2);
    for (i, s) in corpus.sentences().iter().cycle().take(100).enumerate() {
        let plan = finetune_mask(&linearize(s, false), 0.5, &mut rng::stream(8, &[i as u64])).unwrap();
        let dists = model.predict(&plan).unwrap();
        assert_eq!(dists.len(), plan.positions().len());
        for d in dists {
            assert!(d.iter().all(|p| *p >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn overlong_sequences_are_rejected() {
    let corpus = tiny_corpus();
    let vocab = Vocabulary::build(&corpus, 1, &[], &[]);
    let cfg = ModelConfig { max_len: 8, dim: 8, heads: 2, ff_dim: 8, layers: 1, ..Default::default() };
    let model = TinyMlm::new(vocab, cfg, &mut rng::stream(1, &[])).unwrap();
    let plan = finetune_mask(&linearize(&corpus.sentences()[0], false), 1.0, &mut rng::stream(0, &[])).unwrap();
    assert!(matches!(model.predict(&plan), Err(melm::Error::Length { .. })));
}

#[test]
fn training_overfits_small_corpus() {
    let corpus = tiny_corpus();
    assert_eq!(corpus.len(), 20);
    let vocab = Vocabulary::build(&corpus, 1, &[], &[]);
    let mut model = TinyMlm::new(vocab, ModelConfig::default(), &mut rng::stream(2, &[])).unwrap();
    let start = Instant::now();
    finetune(&mut model, &corpus, &TrainConfig::default(), 11).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let h = model.loss_history();
    println!("epochs {} first {:.4} last {:.4} in {secs:.1}s", h.len(), h[0], h[h.len() - 1]);
    assert_eq!(h.len(), 200);
    assert!(h[h.len() - 1] < 0.2 * h[0]);
    assert!(model.params().all_finite());
    assert!(secs < 60.0);
}

#[test]
fn checkpoint_reproduces_predictions() {
    let corpus = tiny_corpus();
    let mut model = small_model(&corpus, 2);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    finetune(&mut model, &corpus, &cfg, 1).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&model, &mut buf).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    let plan = finetune_mask(&linearize(&corpus.sentences()[3], false), 1.0, &mut rng::stream(0, &[])).unwrap();
    assert_eq!(back.predict(&plan).unwrap(), model.predict(&plan).unwrap());
}

#[test]
fn entity_free_corpus_cannot_be_trained() {
    let corpus = parse_conll("a O\nb O\n", &en()).unwrap();
    let mut model = small_model(&tiny_corpus(), 1);
    assert!(matches!(
        finetune(&mut model, &corpus, &TrainConfig::default(), 0),
        Err(melm::Error::Training(_))
    ));
}
