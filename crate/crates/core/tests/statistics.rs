mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use common::{conll, headline_stub, sentence, HEADLINE_TOP5};
use melm::corpus::build_entity_index;
use melm::codemix::labelwise_substitute;
use melm::generate::{augment_one, GenerateConfig};
use melm::linearize::linearize;
use melm::masking::{finetune_mask, gen_mask};
use melm::rng;

const DRAWS: u64 = 10_000;

#[test]
fn finetune_mask_rate_matches_eta() {
    let s = &sentence(
        "The O\nNew B-ORG\nYork I-ORG\nTimes I-ORG\nand O\nLe B-ORG\nMonde I-ORG\n\
         met O\nJean B-PER\nPaul I-PER\nSartre I-PER\nin O\nLa B-LOC\nRochelle I-LOC\n",
    );
    let seq = linearize(s, false);
    let entity = seq.entity_items();
    assert_eq!(entity.len(), 10);
    let mut counts = vec![0u64; entity.len()];
    for i in 0..DRAWS {
        let plan = finetune_mask(&seq, 0.7, &mut rng::stream(42, &[i])).unwrap();
        for (c, p) in counts.iter_mut().zip(&entity) {
            *c += u64::from(plan.is_masked(*p));
        }
    }
    let total = counts.iter().sum::<u64>() as f64 / (DRAWS as f64 * 10.0);
    println!("overall mask rate {total:.4}");
    assert!((total - 0.7).abs() < 0.02);
    for c in counts {
        let f = c as f64 / DRAWS as f64;
        assert!((f - 0.7).abs() < 0.02, "per-position rate {f}");
    }
}

/// Probabilities of masking m = 1..=n tokens of an n-token span: eps is
/// N(mu, 1/n^2), m is round(eps * n) clamped to [1, n].
fn analytic_counts(mu: f64, n: usize) -> Vec<f64> {
    let eps = Normal::new(mu, 1.0 / n as f64).unwrap();
    // m = k exactly when eps * n lies in [k - 0.5, k + 0.5).
    let cut = |k: f64| eps.cdf(k / n as f64);
    (1..=n)
        .map(|m| {
            let lo = if m == 1 { 0.0 } else { cut(m as f64 - 0.5) };
            let hi = if m == n { 1.0 } else { cut(m as f64 + 0.5) };
            hi - lo
        })
        .collect()
}

#[test]
fn gen_mask_count_distribution_matches_analytic() {
    let s = &sentence("met O\nA B-ORG\nB I-ORG\nC I-ORG\nD I-ORG\ntoday O\n");
    let seq = linearize(s, false);
    let mut hist = [0u64; 5];
    for i in 0..DRAWS {
        let plan = gen_mask(&seq, 0.5, &mut rng::stream(9, &[i])).unwrap();
        let m = plan.positions().len();
        assert!((1..=4).contains(&m));
        hist[m] += 1;
    }
    let p = analytic_counts(0.5, 4);
    let analytic_mean: f64 = p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
    let mean = hist.iter().enumerate().map(|(m, c)| (m as u64 * c) as f64).sum::<f64>() / DRAWS as f64;
    println!("mean masked {mean:.4}, analytic {analytic_mean:.4}, hist {:?}", &hist[1..]);
    assert!((mean - 2.0).abs() < 0.1);
    assert!((mean - analytic_mean).abs() < 0.05);
    for (m, q) in p.iter().enumerate() {
        let f = hist[m + 1] as f64 / DRAWS as f64;
        assert!((f - q).abs() < 0.02, "m={}: {f} vs {q}", m + 1);
    }
}

#[test]
fn span_rates_are_independent() {
    let s = &sentence("A B-ORG\nB I-ORG\nC I-ORG\nD I-ORG\nmet O\nE B-PER\nF I-PER\nG I-PER\nH I-PER\n");
    let seq = linearize(s, false);
    let spans = s.spans();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..DRAWS {
        let plan = gen_mask(&seq, 0.5, &mut rng::stream(5, &[i])).unwrap();
        let count = |sp: &melm::corpus::EntitySpan| {
            (sp.start..sp.end).filter(|&t| plan.is_masked(seq.item_of_token(t))).count() as f64
        };
        xs.push(count(&spans[0]));
        ys.push(count(&spans[1]));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    println!("correlation of per-span mask counts {r:.4}");
    assert!(r.abs() < 0.05);
}

#[test]
fn top_k_frequencies_are_uniform() {
    let (corpus, stub) = headline_stub();
    let sentence = Arc::new(corpus.sentences()[0].clone());
    let cfg = GenerateConfig::default();
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    let draws = 100_000u64;
    for seed in 0..draws {
        let sample = augment_one(&sentence, 0, 0, &stub, &cfg, seed).unwrap().unwrap();
        *freq.entry(sample.sentence.tokens()[0].clone()).or_default() += 1;
    }
    println!("{freq:?}");
    assert_eq!(freq.len(), 5);
    for w in HEADLINE_TOP5 {
        let f = freq[w] as f64 / draws as f64;
        assert!((f - 0.2).abs() < 0.01, "{w}: {f}");
    }
}

#[test]
fn labelwise_choices_are_uniform() {
    let pool = conll(
        "Ann B-PER\n\nBob B-PER\n\nCid B-PER\n\nDee B-PER\n\nEve B-PER\nStone I-PER\n",
    );
    let index = build_entity_index(&[pool]);
    let target = conll("Bob B-PER\nsaid O\nno O\n");
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for seed in 0..DRAWS {
        let out = labelwise_substitute(&target, &index, seed).unwrap();
        let s = &out.sentences()[0];
        let sp = &s.spans()[0];
        *counts.entry(sp.mention(s).to_vec()).or_default() += 1;
    }
    assert_eq!(counts.len(), 5);
    let expected = DRAWS as f64 / 5.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(4.0).unwrap().inverse_cdf(0.99);
    println!("chi2 {chi2:.3}, critical {critical:.3}");
    assert!(chi2 < critical);
}
