//! Span-level scoring, entity diversity counts and the gold-only versus
//! augmented comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::{extract_spans, Corpus, EntityClass, Sentence};
use crate::error::{Error, Result};
use crate::filter::{train_tagger, PerceptronTagger};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Scores {
    /// Scores from counts. An empty gold and prediction scores 1.0; any other
    /// zero denominator scores 0.0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                if tp + fp + fn_ == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    /// Gold spans of this class.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub per_class: BTreeMap<EntityClass, Scores>,
    pub micro: Scores,
}

impl EvalReport {
    /// Aligned-column text table.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>8}\n",
            "class", "precision", "recall", "f1", "support"
        );
        let rows = self
            .per_class
            .iter()
            .map(|(c, s)| (c.as_str(), s))
            .chain(std::iter::once(("micro", &self.micro)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name,
                s.precision,
                s.recall,
                s.f1,
                s.support()
            );
        }
        out
    }

    /// Tab-separated rows with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tprecision\trecall\tf1\ttp\tfp\tfn\n");
        let rows = self
            .per_class
            .iter()
            .map(|(c, s)| (c.as_str(), s))
            .chain(std::iter::once(("micro", &self.micro)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
            );
        }
        out
    }
}

/// Exact-match span precision, recall and F1 of `predicted` against `gold`.
pub fn micro_f1(gold: &Corpus, predicted: &Corpus) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::Evaluation(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts: BTreeMap<EntityClass, (usize, usize, usize)> = BTreeMap::new();
    for (i, (g, p)) in gold.sentences().iter().zip(predicted.sentences()).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Evaluation(format!(
                "sentence {i}: {} gold tokens but {} predicted",
                g.len(),
                p.len()
            )));
        }
        let gs: BTreeSet<_> = extract_spans(g).into_iter().collect();
        let ps: BTreeSet<_> = extract_spans(p).into_iter().collect();
        for s in gs.intersection(&ps) {
            counts.entry(s.class.clone()).or_default().0 += 1;
        }
        for s in ps.difference(&gs) {
            counts.entry(s.class.clone()).or_default().1 += 1;
        }
        for s in gs.difference(&ps) {
            counts.entry(s.class.clone()).or_default().2 += 1;
        }
    }
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(EvalReport {
        per_class: counts
            .into_iter()
            .map(|(c, (tp, fp, fn_))| (c, Scores::from_counts(tp, fp, fn_)))
            .collect(),
        micro: Scores::from_counts(tp, fp, fn_),
    })
}

/// Distinct `(mention, class)` pairs of `sentences` whose class the oracle
/// assigns to the same span in context.
pub fn valid_entities(sentences: &[Sentence], oracle: &PerceptronTagger) -> BTreeSet<(Vec<String>, EntityClass)> {
    sentences
        .par_iter()
        .map(|s| {
            let spans = extract_spans(s);
            if spans.is_empty() {
                return Vec::new();
            }
            let predicted: BTreeSet<_> = extract_spans(&oracle.tag_sentence(s)).into_iter().collect();
            spans
                .into_iter()
                .filter(|sp| predicted.contains(sp))
                .map(|sp| (sp.mention(s).to_vec(), sp.class))
                .collect()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Unique valid entity count for each named dataset.
pub fn unique_valid_entities(
    datasets: &[(&str, &[Sentence])],
    oracle: &PerceptronTagger,
) -> BTreeMap<String, usize> {
    datasets
        .iter()
        .map(|(name, sentences)| (name.to_string(), valid_entities(sentences, oracle).len()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub seed: u64,
    pub gold_only: f64,
    pub augmented: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CompareTable {
    /// Mean and population standard deviation of gold-only F1.
    pub fn gold_only(&self) -> (f64, f64) {
        mean_std(self.rows.iter().map(|r| r.gold_only))
    }

    pub fn augmented(&self) -> (f64, f64) {
        mean_std(self.rows.iter().map(|r| r.augmented))
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<8} {:>10} {:>10}\n", "seed", "gold-only", "augmented");
        for r in &self.rows {
            let _ = writeln!(out, "{:<8} {:>10.4} {:>10.4}", r.seed, r.gold_only, r.augmented);
        }
        let (gm, gs) = self.gold_only();
        let (am, as_) = self.augmented();
        let _ = writeln!(out, "{:<8} {:>10.4} {:>10.4}", "mean", gm, am);
        let _ = writeln!(out, "{:<8} {:>10.4} {:>10.4}", "std", gs, as_);
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seed\tgold_only\taugmented\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.seed, r.gold_only, r.augmented);
        }
        out
    }
}

/// Trains taggers on `gold` and on `gold` plus `augmented` for each seed and
/// scores both on `test`.
pub fn compare_runs(
    gold: &Corpus,
    augmented: &[Sentence],
    test: &Corpus,
    seeds: &[u64],
    epochs: usize,
) -> Result<CompareTable> {
    let mut combined = gold.sentences().to_vec();
    combined.extend_from_slice(augmented);
    let combined = Corpus::new(combined);
    let score = |train: &Corpus, seed: u64| -> Result<f64> {
        let tagger = train_tagger(train, epochs, seed)?;
        Ok(micro_f1(test, &tagger.tag_corpus(test))?.micro.f1)
    };
    let rows = seeds
        .iter()
        .map(|&seed| {
            Ok(CompareRow {
                seed,
                gold_only: score(gold, seed)?,
                augmented: score(&combined, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareTable { rows })
}
