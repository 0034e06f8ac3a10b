//! Consistency filtering with an averaged structured perceptron.
//!
//! The tagger is trained on gold data only. An augmented sample survives when
//! the tagger reproduces its whole tag sequence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::corpus::{extract_spans, Corpus, EntityClass, Sentence, Tag};
use crate::error::{Error, Result};
use crate::generate::AugmentedSample;
use crate::rng::{self, stage};

const START: usize = usize::MAX;

fn shape(token: &str) -> String {
    let mut out = String::new();
    for c in token.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
    }
    out
}

fn affixes(token: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = token.chars().collect();
    for n in 1..=3.min(chars.len()) {
        out.push(format!("p{n}={}", chars[..n].iter().collect::<String>()));
        out.push(format!("s{n}={}", chars[chars.len() - n..].iter().collect::<String>()));
    }
}

/// Observation features of token `i`. The previous-tag feature lives in the
/// transition table.
fn token_features(tokens: &[String], i: usize) -> Vec<String> {
    let tok = &tokens[i];
    let mut f = vec![
        "bias".to_string(),
        format!("w={tok}"),
        format!("lw={}", tok.to_lowercase()),
        format!("shape={}", shape(tok)),
    ];
    affixes(tok, &mut f);
    f.push(match i.checked_sub(1) {
        Some(j) => format!("pw={}", tokens[j]),
        None => "pw=<s>".into(),
    });
    f.push(match tokens.get(i + 1) {
        Some(t) => format!("nw={t}"),
        None => "nw=</s>".into(),
    });
    f
}

/// Averaged structured perceptron with BIO-constrained Viterbi decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronTagger {
    tags: Vec<Tag>,
    features: HashMap<String, usize>,
    /// `features.len() x tags.len()`, row-major.
    emission: Vec<f64>,
    /// `(tags.len() + 1) x tags.len()`; the last row scores the sentence start.
    transition: Vec<f64>,
    /// `allowed[prev][cur]`, with the start row last.
    allowed: Vec<Vec<bool>>,
    epoch_accuracy: Vec<f64>,
}

/// Running sums for weight averaging: `avg = w - u / c`.
struct Averaged {
    w: Vec<f64>,
    u: Vec<f64>,
}

impl Averaged {
    fn new(n: usize) -> Self {
        Averaged {
            w: vec![0.0; n],
            u: vec![0.0; n],
        }
    }

    fn add(&mut self, i: usize, delta: f64, c: f64) {
        self.w[i] += delta;
        self.u[i] += c * delta;
    }

    fn finish(self, c: f64) -> Vec<f64> {
        self.w.iter().zip(&self.u).map(|(w, u)| w - u / c).collect()
    }
}

impl PerceptronTagger {
    fn new(classes: &BTreeSet<EntityClass>, features: HashMap<String, usize>) -> Self {
        let mut tags = vec![Tag::O];
        for c in classes {
            tags.push(Tag::B(c.clone()));
            tags.push(Tag::I(c.clone()));
        }
        let n = tags.len();
        let mut allowed = vec![vec![false; n]; n + 1];
        for (p, row) in allowed.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                let prev = tags.get(p);
                *cell = tags[t].can_follow(prev);
            }
        }
        PerceptronTagger {
            emission: vec![0.0; features.len() * n],
            transition: vec![0.0; (n + 1) * n],
            tags,
            features,
            allowed,
            epoch_accuracy: Vec::new(),
        }
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// Token accuracy on the training data during each epoch.
    pub fn epoch_accuracy(&self) -> &[f64] {
        &self.epoch_accuracy
    }

    fn feature_ids(&self, tokens: &[String]) -> Vec<Vec<usize>> {
        (0..tokens.len())
            .map(|i| {
                token_features(tokens, i)
                    .iter()
                    .filter_map(|f| self.features.get(f).copied())
                    .collect()
            })
            .collect()
    }

    fn tag_index(&self, tag: &Tag) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    fn trans_row(&self, prev: usize) -> usize {
        if prev == START {
            self.tags.len()
        } else {
            prev
        }
    }

    fn viterbi(&self, feats: &[Vec<usize>], emission: &[f64], transition: &[f64]) -> Vec<usize> {
        let n = self.tags.len();
        let len = feats.len();
        if len == 0 {
            return Vec::new();
        }
        let emit = |i: usize, t: usize| -> f64 { feats[i].iter().map(|&f| emission[f * n + t]).sum() };
        let mut score = vec![f64::NEG_INFINITY; len * n];
        let mut back = vec![0usize; len * n];
        for t in 0..n {
            if self.allowed[n][t] {
                score[t] = transition[n * n + t] + emit(0, t);
            }
        }
        for i in 1..len {
            for t in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..n {
                    if !self.allowed[p][t] {
                        continue;
                    }
                    let s = score[(i - 1) * n + p] + transition[p * n + t];
                    if s > best {
                        best = s;
                        arg = p;
                    }
                }
                if best > f64::NEG_INFINITY {
                    score[i * n + t] = best + emit(i, t);
                    back[i * n + t] = arg;
                }
            }
        }
        let last = &score[(len - 1) * n..];
        let mut t = (0..n)
            .fold(0, |a, b| if last[b] > last[a] { b } else { a });
        let mut path = vec![0; len];
        for i in (0..len).rev() {
            path[i] = t;
            t = back[i * n + t];
        }
        path
    }

    /// Predicted BIO tags for `tokens`. Always BIO-valid.
    pub fn predict(&self, tokens: &[String]) -> Vec<Tag> {
        let feats = self.feature_ids(tokens);
        self.viterbi(&feats, &self.emission, &self.transition)
            .into_iter()
            .map(|t| self.tags[t].clone())
            .collect()
    }

    /// `sentence` with its tags replaced by the tagger's prediction.
    pub fn tag_sentence(&self, sentence: &Sentence) -> Sentence {
        Sentence::with_token_languages(
            sentence.tokens().to_vec(),
            self.predict(sentence.tokens()),
            sentence.language().clone(),
            sentence.token_languages().map(<[_]>::to_vec),
        )
        .expect("viterbi output is BIO-valid")
    }

    pub fn tag_corpus(&self, corpus: &Corpus) -> Corpus {
        corpus
            .sentences()
            .par_iter()
            .map(|s| self.tag_sentence(s))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// Trains an averaged structured perceptron on `gold` for `epochs` shuffled passes.
pub fn train_tagger(gold: &Corpus, epochs: usize, seed: u64) -> Result<PerceptronTagger> {
    let sentences: Vec<&Sentence> = gold.sentences().iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::Training("tagger needs a non-empty gold corpus".into()));
    }
    if epochs == 0 {
        return Err(Error::Training("tagger needs at least one epoch".into()));
    }
    let mut features: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<(Vec<Vec<usize>>, Vec<usize>)> = Vec::with_capacity(sentences.len());
    let mut raw = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let per_token: Vec<Vec<usize>> = (0..s.len())
            .map(|i| {
                token_features(s.tokens(), i)
                    .into_iter()
                    .map(|f| {
                        let next = features.len();
                        *features.entry(f).or_insert(next)
                    })
                    .collect()
            })
            .collect();
        raw.push(per_token);
    }
    let mut tagger = PerceptronTagger::new(&gold.classes(), features);
    for (s, feats) in sentences.iter().zip(raw) {
        let gold_tags = s
            .tags()
            .iter()
            .map(|t| tagger.tag_index(t).expect("tag set covers gold classes"))
            .collect();
        data.push((feats, gold_tags));
    }

    let n = tagger.tags.len();
    let mut em = Averaged::new(tagger.emission.len());
    let mut tr = Averaged::new(tagger.transition.len());
    let mut c = 1.0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng::stream(seed, &[stage::TAGGER, epoch as u64]));
        let (mut correct, mut total) = (0usize, 0usize);
        for &idx in &order {
            let (feats, gold_tags) = &data[idx];
            let pred = tagger.viterbi(feats, &em.w, &tr.w);
            total += gold_tags.len();
            correct += pred.iter().zip(gold_tags).filter(|(p, g)| p == g).count();
            if pred != *gold_tags {
                let mut prev_g = START;
                let mut prev_p = START;
                for i in 0..feats.len() {
                    let (g, p) = (gold_tags[i], pred[i]);
                    if g != p {
                        for &f in &feats[i] {
                            em.add(f * n + g, 1.0, c);
                            em.add(f * n + p, -1.0, c);
                        }
                    }
                    if (prev_g, g) != (prev_p, p) {
                        tr.add(tagger.trans_row(prev_g) * n + g, 1.0, c);
                        tr.add(tagger.trans_row(prev_p) * n + p, -1.0, c);
                    }
                    prev_g = g;
                    prev_p = p;
                }
            }
            c += 1.0;
        }
        tagger.epoch_accuracy.push(correct as f64 / total as f64);
    }
    tagger.emission = em.finish(c);
    tagger.transition = tr.finish(c);
    Ok(tagger)
}

/// Counts from one filtering pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub inconsistent: usize,
    pub duplicates: usize,
    /// Gold spans of dropped samples the tagger missed or mislabeled, per class.
    pub missed: BTreeMap<EntityClass, usize>,
    /// Predicted spans of dropped samples absent from their tags, per predicted class.
    pub spurious: BTreeMap<EntityClass, usize>,
}

impl FilterReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "input\t{}", self.input);
        let _ = writeln!(out, "kept\t{}", self.kept);
        let _ = writeln!(out, "dropped_inconsistent\t{}", self.inconsistent);
        let _ = writeln!(out, "dropped_duplicate\t{}", self.duplicates);
        for (class, n) in &self.missed {
            let _ = writeln!(out, "missed\t{class}\t{n}");
        }
        for (class, n) in &self.spurious {
            let _ = writeln!(out, "spurious\t{class}\t{n}");
        }
        out
    }
}

/// Keeps samples whose predicted tag sequence equals their own, in input
/// order. With `dedup`, samples token-identical to a `gold` sentence or to an
/// earlier kept sample are dropped as well.
pub fn filter_consistent(
    samples: &[AugmentedSample],
    tagger: &PerceptronTagger,
    gold: &[Sentence],
    dedup: bool,
) -> (Vec<AugmentedSample>, FilterReport) {
    let predictions: Vec<Vec<Tag>> = samples
        .par_iter()
        .map(|s| tagger.predict(s.sentence.tokens()))
        .collect();
    let mut seen: HashSet<&[String]> = if dedup {
        gold.iter().map(|s| s.tokens()).collect()
    } else {
        HashSet::new()
    };
    let mut report = FilterReport {
        input: samples.len(),
        ..FilterReport::default()
    };
    let mut kept = Vec::new();
    for (sample, pred) in samples.iter().zip(predictions) {
        let s = &sample.sentence;
        if pred.as_slice() != s.tags() {
            report.inconsistent += 1;
            let predicted = tagger.tag_sentence(s);
            let pred_spans: BTreeSet<_> = extract_spans(&predicted).into_iter().collect();
            let own_spans: BTreeSet<_> = extract_spans(s).into_iter().collect();
            for span in own_spans.difference(&pred_spans) {
                *report.missed.entry(span.class.clone()).or_default() += 1;
            }
            for span in pred_spans.difference(&own_spans) {
                *report.spurious.entry(span.class.clone()).or_default() += 1;
            }
            continue;
        }
        if dedup && !seen.insert(s.tokens()) {
            report.duplicates += 1;
            continue;
        }
        kept.push(sample.clone());
    }
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, Lang};

    fn corpus(text: &str) -> Corpus {
        parse_conll(text, &Lang::new("en").unwrap()).unwrap()
    }

    #[test]
    fn shapes_collapse_runs() {
        assert_eq!(shape("EU"), "X");
        assert_eq!(shape("Greenpeace"), "Xx");
        assert_eq!(shape("B-52s"), "X-dx");
    }

    #[test]
    fn memorizes_single_sentence() {
        let c = corpus("Peter B-PER\nBlackburn I-PER\nsaid O\nEU B-ORG\nrejects O\n");
        let t = train_tagger(&c, 5, 0).unwrap();
        let s = &c.sentences()[0];
        assert_eq!(t.predict(s.tokens()), s.tags());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(train_tagger(&Corpus::default(), 3, 0), Err(Error::Training(_))));
    }

    #[test]
    fn untrained_tagger_never_starts_with_inside() {
        let c = corpus("EU B-ORG\nrejects O\n");
        let t = PerceptronTagger::new(&c.classes(), HashMap::new());
        let toks: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let tags = t.predict(&toks);
        assert!(crate::corpus::bio_violation(&tags).is_none());
    }

    #[test]
    fn same_seed_same_weights() {
        let c = corpus("EU B-ORG\nrejects O\n\nPeter B-PER\nsaid O\n\nUN B-ORG\nagrees O\n");
        assert_eq!(train_tagger(&c, 4, 9).unwrap(), train_tagger(&c, 4, 9).unwrap());
    }
}
