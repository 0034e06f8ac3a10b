mod common;

use common::{conll, ess_instance_agrees, headline_stub, lang, HEADLINE_TOP5};
use melm::codemix::{ess_lookup, EmbeddingTable};
use melm::corpus::{build_entity_index, parse_conll, EntityClass};
use melm::eval::{compare_runs, unique_valid_entities, valid_entities};
use melm::filter::train_tagger;
use melm::generate::{augment, is_forbidden, top_k_candidates, GenerateConfig};
use melm::linearize::linearize;
use melm::masking::MaskPlan;
use melm::mlm::{
    default_label_words, init_label_embeddings, MlmBackend, ModelConfig, StubBackend, TinyMlm, Vocabulary,
};
use melm::rng;
use melm::synth::{self, SynthConfig};

#[test]
fn ess_matches_brute_force_scan() {
    let instances = 200u64;
    let (mut mismatches, mut tied) = (0, 0);
    for seed in 0..instances {
        let (mismatch, tie) = ess_instance_agrees(seed);
        mismatches += usize::from(mismatch);
        tied += usize::from(tie);
    }
    println!("{instances} instances, {tied} with ties, {mismatches} mismatches");
    assert!(tied >= 10, "tie cases must be exercised");
    assert_eq!(mismatches, 0);
}

#[test]
fn ess_without_vectors_falls_back_to_a_candidate() {
    let index = build_entity_index(&[parse_conll("Ana B-PER\n\nLuis B-PER\n", &lang("es")).unwrap()]);
    let class = EntityClass::new("PER").unwrap();
    let table = EmbeddingTable::new(3);
    let q = vec!["Ann".to_string()];
    for seed in 0..20 {
        let got = ess_lookup(&q, &lang("es"), &class, &index, Some(&table), &mut rng::stream(seed, &[])).unwrap();
        assert!(index.mentions(&lang("es"), &class).iter().any(|m| m.as_slice() == got));
    }
}

#[test]
fn tagger_fits_separable_corpus() {
    let data = synth::generate(&SynthConfig { train_per_language: 50, ..SynthConfig::default() });
    let train = &data.train[0];
    assert_eq!(train.len(), 50);
    let tagger = train_tagger(train, 10, 0).unwrap();
    let (mut right, mut total) = (0, 0);
    for s in train.sentences() {
        let pred = tagger.predict(s.tokens());
        right += pred.iter().zip(s.tags()).filter(|(a, b)| a == b).count();
        total += s.len();
    }
    let acc = right as f64 / total as f64;
    println!("training token accuracy {acc:.4}");
    assert!(acc >= 0.95);
}

#[test]
fn memorized_entities_are_all_valid() {
    let c = conll("Peter B-PER\nBlackburn I-PER\nsaid O\n\nEU B-ORG\nrejects O\nit O\n\nPeter B-PER\nBlackburn I-PER\nsaid O\n");
    let oracle = train_tagger(&c, 10, 0).unwrap();
    let counts = unique_valid_entities(&[("gold", c.sentences())], &oracle);
    assert_eq!(counts["gold"], 2);
}

#[test]
fn entities_the_oracle_disagrees_with_are_not_valid() {
    let c = conll("EU B-ORG\nrejects O\nit O\n\nBonn B-LOC\nsaid O\nso O\n");
    let oracle = train_tagger(&c, 10, 0).unwrap();
    // Same surface form, different class in the same context.
    let wrong = conll("EU B-LOC\nrejects O\nit O\n");
    assert!(valid_entities(wrong.sentences(), &oracle).is_empty());
    assert_eq!(valid_entities(c.sentences(), &oracle).len(), 2);
}

#[test]
fn compare_runs_with_no_augmentation_is_a_tie() {
    let data = synth::generate(&SynthConfig { train_per_language: 40, test_per_language: 20, ..SynthConfig::default() });
    let table = compare_runs(&data.train[0], &[], &data.test[0], &[1, 2, 3], 3).unwrap();
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        assert_eq!(row.gold_only, row.augmented);
    }
    assert_eq!(table.gold_only(), table.augmented());
    assert_eq!(table.to_tsv().lines().count(), 4);
}

#[test]
fn three_rounds_triple_the_corpus() {
    let data = synth::generate(&SynthConfig { train_per_language: 100, ..SynthConfig::default() });
    let train = &data.train[0];
    let stub = StubBackend::new(Vocabulary::build(train, 1, &[], &[]));
    let out = augment(train, &stub, &GenerateConfig::default(), 4);
    assert_eq!(out.samples.len(), 300);
    for (i, s) in out.samples.iter().enumerate() {
        assert_eq!((s.provenance.source_id, s.provenance.round), (i / 3, i % 3));
    }
}

#[test]
fn headline_stub_top_five() {
    let (corpus, stub) = headline_stub();
    let seq = linearize(&corpus.sentences()[0], false);
    let plan = MaskPlan::new(seq.clone(), vec![seq.item_of_token(0)]).unwrap();
    let dist = &stub.predict(&plan).unwrap()[0];
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let vocab = stub.vocab();
    let top: Vec<&str> = top_k_candidates(dist, 5, |id| is_forbidden(vocab, id))
        .into_iter()
        .map(|id| vocab.token(id))
        .collect();
    assert_eq!(top, HEADLINE_TOP5);
}

#[test]
fn stub_normalizes_weights_and_defaults_to_uniform() {
    let (corpus, _) = headline_stub();
    let vocab = Vocabulary::build(&corpus, 1, &[], &[]);
    let n = vocab.len();
    let mut stub = StubBackend::new(vocab);
    let key = melm::mlm::StubKey::new(None, Some("rejects"), "B-ORG".parse().unwrap());
    stub.insert(key, &[("EU", 3.0), ("lamb", 1.0)]).unwrap();
    let seq = linearize(&corpus.sentences()[0], false);
    let plan = MaskPlan::new(seq.clone(), vec![seq.item_of_token(0), seq.item_of_token(2)]).unwrap();
    let dists = stub.predict(&plan).unwrap();
    assert_eq!(dists[0][stub.vocab().id("EU")], 0.75);
    assert_eq!(dists[0][stub.vocab().id("lamb")], 0.25);
    assert!(dists[1].iter().all(|p| (p - 1.0 / n as f64).abs() < 1e-15));
}

fn label_model(text: &str) -> TinyMlm {
    let vocab = Vocabulary::build(&conll(text), 1, &[], &[]);
    let cfg = ModelConfig { dim: 8, heads: 2, ff_dim: 8, layers: 1, ..ModelConfig::default() };
    TinyMlm::new(vocab, cfg, &mut rng::stream(0, &[])).unwrap()
}

#[test]
fn label_init_copies_word_rows_and_is_idempotent() {
    let mut model = label_model("the O\norganization O\nEU B-ORG\nBonn B-LOC\n");
    let words = default_label_words();
    // ORG markers get the word row; LOC has no "location" in the vocabulary.
    assert_eq!(init_label_embeddings(&mut model, &words), 2);
    let v = model.vocab();
    let word = model.embedding(v.id("organization"));
    assert_eq!(model.embedding(v.id("⟨B-ORG⟩")), word);
    assert_eq!(model.embedding(v.id("⟨I-ORG⟩")), word);
    assert_ne!(model.embedding(v.id("⟨B-LOC⟩")), model.embedding(v.id("⟨I-LOC⟩")));
    let before = model.clone();
    assert_eq!(init_label_embeddings(&mut model, &words), 2);
    assert_eq!(model, before);
}

#[test]
fn label_init_without_words_changes_nothing() {
    let mut model = label_model("EU B-ORG\nBonn B-LOC\n");
    let before = model.clone();
    assert_eq!(init_label_embeddings(&mut model, &default_label_words()), 0);
    assert_eq!(model, before);
}
