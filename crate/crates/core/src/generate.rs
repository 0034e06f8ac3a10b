//! Augmented sentence generation by top-k random sampling.

use std::fmt::Write as _;
use std::sync::Arc;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::linearize::{delinearize, linearize_shared};
use crate::masking::{gen_mask, MaskingConfig};
use crate::mlm::{MlmBackend, Vocabulary};
use crate::rng::{self, stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Uniform choice among the top-k candidates.
    #[default]
    Uniform,
    /// Choice proportional to the model probabilities, renormalized over the top-k.
    Renormalized,
}

/// Top-k candidate ids of `dist`, skipping forbidden ids. Ties at equal
/// probability are broken by ascending id.
pub fn top_k_candidates(dist: &[f64], k: usize, forbidden: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut admissible: Vec<usize> = (0..dist.len()).filter(|&id| !forbidden(id)).collect();
    let by_prob = |a: &usize, b: &usize| dist[*b].total_cmp(&dist[*a]).then(a.cmp(b));
    if admissible.len() > k {
        admissible.select_nth_unstable_by(k - 1, by_prob);
        admissible.truncate(k);
    }
    admissible.sort_by(by_prob);
    admissible
}

/// Draws a replacement id from the top-`k` admissible candidates of `dist`.
pub fn top_k_sample<R: Rng + ?Sized>(
    dist: &[f64],
    k: usize,
    forbidden: impl Fn(usize) -> bool,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<usize> {
    if k == 0 {
        return Err(Error::Generation("k must be at least 1".into()));
    }
    let candidates = top_k_candidates(dist, k, forbidden);
    if candidates.is_empty() {
        return Err(Error::Generation("no admissible candidate".into()));
    }
    let pick = match mode {
        SamplingMode::Uniform => rng.random_range(0..candidates.len()),
        SamplingMode::Renormalized => {
            let total: f64 = candidates.iter().map(|&id| dist[id]).sum();
            if total > 0.0 {
                let mut x = rng.random::<f64>() * total;
                let mut chosen = candidates.len() - 1;
                for (i, &id) in candidates.iter().enumerate() {
                    if x < dist[id] {
                        chosen = i;
                        break;
                    }
                    x -= dist[id];
                }
                chosen
            } else {
                rng.random_range(0..candidates.len())
            }
        }
    };
    Ok(candidates[pick])
}

/// Ids never offered as replacements: special tokens and markers.
pub fn is_forbidden(vocab: &Vocabulary, id: usize) -> bool {
    vocab.is_reserved(id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source_id: usize,
    pub round: usize,
    /// Sentence token positions that were resampled, ascending.
    pub positions: Vec<usize>,
    /// Tokens written at `positions`.
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSample {
    pub sentence: Sentence,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub source_id: usize,
    pub round: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentOutput {
    pub samples: Vec<AugmentedSample>,
    pub skipped: Vec<Skip>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateConfig {
    pub masking: MaskingConfig,
    pub sampling: SamplingMode,
    pub language_markers: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            masking: MaskingConfig::default(),
            sampling: SamplingMode::Uniform,
            language_markers: false,
        }
    }
}

/// Generates one augmented variant of sentence `source_id` for `round`.
pub fn augment_one<B: MlmBackend + ?Sized>(
    sentence: &Arc<Sentence>,
    source_id: usize,
    round: usize,
    backend: &B,
    cfg: &GenerateConfig,
    seed: u64,
) -> Result<Option<AugmentedSample>> {
    let mut r = rng::stream(seed, &[stage::GENERATE, source_id as u64, round as u64]);
    let seq = linearize_shared(Arc::clone(sentence), cfg.language_markers);
    let Some(plan) = gen_mask(&seq, cfg.masking.mu, &mut r) else {
        return Ok(None);
    };
    let dists = backend.predict(&plan)?;
    if dists.len() != plan.positions().len() {
        return Err(Error::Generation(format!(
            "backend returned {} distributions for {} masked positions",
            dists.len(),
            plan.positions().len()
        )));
    }
    let vocab = backend.vocab();
    let mut replacements = Vec::with_capacity(dists.len());
    for (&pos, dist) in plan.positions().iter().zip(&dists) {
        let id = top_k_sample(
            dist,
            cfg.masking.top_k,
            |id| is_forbidden(vocab, id),
            cfg.sampling,
            &mut r,
        )?;
        replacements.push((pos, vocab.token(id).to_string()));
    }
    let generated = delinearize(&seq.with_words(&replacements)?)?;
    let positions = plan
        .positions()
        .iter()
        .map(|&p| seq.token_of_item(p).expect("masked items are words"))
        .collect();
    Ok(Some(AugmentedSample {
        sentence: generated,
        provenance: Provenance {
            source_id,
            round,
            positions,
            tokens: replacements.into_iter().map(|(_, t)| t).collect(),
        },
    }))
}

/// Runs `rounds` generation rounds over every sentence with entities.
///
/// Failures on individual sentences are logged and reported as skips. Output
/// is ordered by (sentence, round) and does not depend on the thread count.
pub fn augment<B: MlmBackend + ?Sized>(
    corpus: &Corpus,
    backend: &B,
    cfg: &GenerateConfig,
    seed: u64,
) -> AugmentOutput {
    let sentences: Vec<Arc<Sentence>> = corpus.sentences().iter().cloned().map(Arc::new).collect();
    let tasks: Vec<(usize, usize)> = sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| s.has_entities())
        .flat_map(|(i, _)| (0..cfg.masking.rounds).map(move |r| (i, r)))
        .collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(i, round)| (i, round, augment_one(&sentences[i], i, round, backend, cfg, seed)))
        .collect();

    let mut out = AugmentOutput::default();
    for (source_id, round, res) in results {
        match res {
            Ok(Some(sample)) => out.samples.push(sample),
            Ok(None) => {}
            Err(e) => {
                warn!("sentence {source_id} round {round}: {e}");
                out.skipped.push(Skip {
                    source_id,
                    round,
                    reason: e.to_string(),
                });
            }
        }
    }
    out
}

/// Sidecar lines `source<TAB>round<TAB>p1,p2<TAB>tok1 tok2`, one per sample.
pub fn write_provenance(samples: &[AugmentedSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let p = &s.provenance;
        let positions: Vec<String> = p.positions.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.source_id,
            p.round,
            positions.join(","),
            p.tokens.join(" ")
        );
    }
    out
}

pub fn parse_provenance(text: &str) -> Result<Vec<Provenance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            let [src, round, pos, toks] = cols.as_slice() else {
                return Err(err("expected 4 tab-separated columns"));
            };
            let positions = pos
                .split(',')
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|_| err("bad position")))
                .collect::<Result<Vec<usize>>>()?;
            let tokens: Vec<String> = toks.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
            if tokens.len() != positions.len() {
                return Err(err("positions and tokens differ in length"));
            }
            Ok(Provenance {
                source_id: src.parse().map_err(|_| err("bad source id"))?,
                round: round.parse().map_err(|_| err("bad round"))?,
                positions,
                tokens,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, Lang};
    use crate::mlm::{StubBackend, StubKey};

    #[test]
    fn k_one_is_argmax() {
        let dist = [0.1, 0.5, 0.3, 0.1];
        for seed in 0..20 {
            let id = top_k_sample(&dist, 1, |_| false, SamplingMode::Uniform, &mut rng::stream(seed, &[])).unwrap();
            assert_eq!(id, 1);
        }
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let dist = [0.2, 0.3, 0.2, 0.2, 0.1];
        assert_eq!(top_k_candidates(&dist, 2, |_| false), vec![1, 0]);
        assert_eq!(top_k_candidates(&dist, 3, |_| false), vec![1, 0, 2]);
    }

    #[test]
    fn forbidden_ids_fall_through() {
        let dist = [0.4, 0.3, 0.2, 0.1];
        // k = |V| with the top three forbidden leaves only id 3.
        let id = top_k_sample(&dist, 4, |id| id < 3, SamplingMode::Uniform, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(id, 3);
        assert!(top_k_sample(&dist, 4, |_| true, SamplingMode::Uniform, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn renormalized_mode_follows_probabilities() {
        let dist = [0.0, 0.75, 0.25];
        let mut r = rng::stream(3, &[]);
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| top_k_sample(&dist, 2, |_| false, SamplingMode::Renormalized, &mut r).unwrap() == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.02);
    }

    #[test]
    fn entity_free_corpus_yields_nothing() {
        let c = parse_conll("a O\nb O\n", &Lang::new("en").unwrap()).unwrap();
        let vocab = Vocabulary::build(&c, 1, &[], &[]);
        let stub = StubBackend::new(vocab);
        let out = augment(&c, &stub, &GenerateConfig::default(), 1);
        assert!(out.samples.is_empty() && out.skipped.is_empty());
    }

    #[test]
    fn stub_generation_preserves_labels_and_context() {
        let c = parse_conll(
            "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\n",
            &Lang::new("en").unwrap(),
        )
        .unwrap();
        let mut vocab_src = c.clone().into_sentences();
        vocab_src.extend(
            parse_conll("UN B-ORG\nReuters B-ORG\n", &Lang::new("en").unwrap())
                .unwrap()
                .into_sentences(),
        );
        let vocab = Vocabulary::build(&Corpus::new(vocab_src), 1, &[], &[]);
        let mut stub = StubBackend::new(vocab);
        stub.insert(
            StubKey::new(None, Some("rejects"), "B-ORG".parse().unwrap()),
            &[("UN", 0.6), ("Reuters", 0.4)],
        )
        .unwrap();
        let cfg = GenerateConfig {
            masking: MaskingConfig { top_k: 2, ..Default::default() },
            ..Default::default()
        };
        let out = augment(&c, &stub, &cfg, 4);
        assert_eq!(out.samples.len(), 3);
        for s in &out.samples {
            assert_eq!(s.sentence.tags(), c.sentences()[0].tags());
            assert_eq!(s.sentence.tokens()[1], "rejects");
            assert_eq!(s.sentence.tokens()[3], "call");
            assert_eq!(s.provenance.positions, vec![0, 2]);
            assert!(["UN", "Reuters"].contains(&s.sentence.tokens()[0].as_str()));
        }
        let text = write_provenance(&out.samples);
        let back = parse_provenance(&text).unwrap();
        assert_eq!(back, out.samples.iter().map(|s| s.provenance.clone()).collect::<Vec<_>>());
    }
}
