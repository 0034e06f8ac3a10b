//! Cross-lingual entity substitution.
//!
//! Entities are swapped for same-class mentions from another language, picked
//! either by entity similarity search over aligned embeddings or uniformly.
//! [`labelwise_substitute`] is the monolingual same-class swap baseline.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Corpus, EntityClass, EntityIndex, EntitySpan, Lang, Sentence, Tag};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Word vectors of a bilingual aligned space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Adds `word` unless present. Returns false for duplicates.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::EmbeddingFormat {
                line: 0,
                message: format!("expected dimension {}, got {}", self.dim, vector.len()),
            });
        }
        let word = word.into();
        if self.vectors.contains_key(&word) {
            return Ok(false);
        }
        self.vectors.insert(word, vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Case-sensitive lookup with a lowercase fallback.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    /// Writes the table in text format with a `count dim` header, words sorted.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for w in words {
            out.push_str(w);
            for x in &self.vectors[w] {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Reads `word v1 ... vd` lines with an optional `count dim` header line.
/// Duplicate words keep their first vector.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::EmbeddingFormat {
            line: line_no,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if line_no == 1 && fields.len() == 2 {
            if let (Ok(_), Ok(dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                table = Some(EmbeddingTable::new(dim));
                continue;
            }
        }
        let err = |message: String| Error::EmbeddingFormat {
            line: line_no,
            message,
        };
        let vector = fields[1..]
            .iter()
            .map(|x| {
                x.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("non-numeric component `{x}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != t.dim || vector.is_empty() {
            return Err(err(format!(
                "expected {} components, found {}",
                t.dim,
                vector.len()
            )));
        }
        t.insert(fields[0], vector)?;
    }
    table.ok_or(Error::EmbeddingFormat {
        line: 0,
        message: "no vectors".into(),
    })
}

pub fn load_embeddings_file(path: &Path) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    load_embeddings(std::io::BufReader::new(file))
}

/// Tables keyed by language pair. A pair also serves the reverse direction.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTables {
    tables: BTreeMap<(Lang, Lang), EmbeddingTable>,
}

impl EmbeddingTables {
    pub fn insert(&mut self, src: Lang, tgt: Lang, table: EmbeddingTable) {
        self.tables.insert((src, tgt), table);
    }

    pub fn get(&self, src: &Lang, tgt: &Lang) -> Option<&EmbeddingTable> {
        self.tables
            .get(&(src.clone(), tgt.clone()))
            .or_else(|| self.tables.get(&(tgt.clone(), src.clone())))
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Mean of the vectors of the tokens present in `table`, or `None` if none are.
pub fn entity_embedding(entity: &[String], table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut found = 0;
    for v in entity.iter().filter_map(|t| table.get(t)) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        found += 1;
    }
    if found == 0 {
        return None;
    }
    for s in &mut sum {
        *s /= found as f64;
    }
    Some(sum)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Most similar `(tgt, class)` mention to `query` by cosine similarity.
///
/// Ties go to the lexicographically smallest mention. Falls back to a uniform
/// choice when the query or every candidate lacks an embedding.
pub fn ess_lookup<'a, R: Rng + ?Sized>(
    query: &[String],
    tgt: &Lang,
    class: &EntityClass,
    index: &'a EntityIndex,
    table: Option<&EmbeddingTable>,
    rng: &mut R,
) -> Result<&'a [String]> {
    let candidates = index.mentions(tgt, class);
    if candidates.is_empty() {
        return Err(Error::Substitution(format!("no {class} mentions for language {tgt}")));
    }
    let q = table.and_then(|t| entity_embedding(query, t));
    if let (Some(q), Some(table)) = (q, table) {
        let mut best: Option<(f64, &Vec<String>)> = None;
        // Candidates are sorted, so keeping the first maximum breaks ties lexicographically.
        for cand in candidates {
            let Some(e) = entity_embedding(cand, table) else {
                continue;
            };
            let sim = cosine(&q, &e);
            if best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, cand));
            }
        }
        if let Some((_, cand)) = best {
            return Ok(cand);
        }
    }
    Ok(candidates.choose(rng).expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Ess,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeMixConfig {
    pub strategy: Strategy,
    /// Probability that a given entity is substituted.
    pub substitution_prob: f64,
}

impl Default for CodeMixConfig {
    fn default() -> Self {
        CodeMixConfig {
            strategy: Strategy::Ess,
            substitution_prob: 1.0,
        }
    }
}

/// Rebuilds `sentence` with each listed span replaced by `(mention, language)`.
fn replace_spans(
    sentence: &Sentence,
    replacements: &[(EntitySpan, Vec<String>, Lang)],
) -> Result<Sentence> {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut langs = Vec::new();
    let mut cursor = 0;
    let mut push = |tok: &str, tag: Tag, lang: &Lang| {
        tokens.push(tok.to_string());
        tags.push(tag);
        langs.push(lang.clone());
    };
    for (span, mention, lang) in replacements {
        for i in cursor..span.start {
            push(&sentence.tokens()[i], sentence.tags()[i].clone(), sentence.token_language(i));
        }
        for (j, tok) in mention.iter().enumerate() {
            let tag = if j == 0 {
                Tag::B(span.class.clone())
            } else {
                Tag::I(span.class.clone())
            };
            push(tok, tag, lang);
        }
        cursor = span.end;
    }
    for i in cursor..sentence.len() {
        push(&sentence.tokens()[i], sentence.tags()[i].clone(), sentence.token_language(i));
    }
    Sentence::with_token_languages(tokens, tags, sentence.language().clone(), Some(langs))
}

/// Code-mixes every sentence of `corpora`, returning only sentences where at
/// least one entity was replaced. Sentence `i` (in concatenation order) uses
/// its own random stream.
pub fn codemix_corpus(
    corpora: &[Corpus],
    cfg: &CodeMixConfig,
    index: &EntityIndex,
    tables: &EmbeddingTables,
    seed: u64,
) -> Result<Corpus> {
    let languages: Vec<Lang> = Corpus::concat(corpora).languages().iter().cloned().collect();
    if languages.len() < 2 {
        return Err(Error::Config(format!(
            "code-mixing needs at least two languages, found {}",
            languages.len()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.substitution_prob) {
        return Err(Error::Config("substitution_prob must be in [0, 1]".into()));
    }
    let mut out = Vec::new();
    let sentences = corpora.iter().flat_map(|c| c.sentences());
    for (idx, sentence) in sentences.enumerate() {
        let mut rng = rng::stream(seed, &[stage::CODEMIX, idx as u64]);
        let mut replacements = Vec::new();
        for span in sentence.spans() {
            if rng.random::<f64>() >= cfg.substitution_prob {
                continue;
            }
            let src = sentence.token_language(span.start);
            let others: Vec<&Lang> = languages.iter().filter(|l| *l != src).collect();
            let tgt = (*others.choose(&mut rng).expect("two languages")).clone();
            let picked = match cfg.strategy {
                Strategy::Ess => ess_lookup(
                    span.mention(sentence),
                    &tgt,
                    &span.class,
                    index,
                    tables.get(src, &tgt),
                    &mut rng,
                ),
                Strategy::Random => index
                    .mentions(&tgt, &span.class)
                    .choose(&mut rng)
                    .map(Vec::as_slice)
                    .ok_or_else(|| {
                        Error::Substitution(format!("no {} mentions for language {tgt}", span.class))
                    }),
            };
            match picked {
                Ok(m) => replacements.push((span, m.to_vec(), tgt)),
                Err(e) => warn!("sentence {idx}: {e}; entity left unchanged"),
            }
        }
        if !replacements.is_empty() {
            out.push(replace_spans(sentence, &replacements)?);
        }
    }
    Ok(Corpus::new(out))
}

/// Replaces every entity with a uniformly drawn mention of the same language
/// and class (possibly itself). Entities of unindexed classes stay as they are.
pub fn labelwise_substitute(corpus: &Corpus, index: &EntityIndex, seed: u64) -> Result<Corpus> {
    let mut out = Vec::with_capacity(corpus.len());
    for (idx, sentence) in corpus.sentences().iter().enumerate() {
        let mut rng = rng::stream(seed, &[stage::LABELWISE, idx as u64]);
        let mut replacements = Vec::new();
        for span in sentence.spans() {
            let lang = sentence.token_language(span.start).clone();
            if let Some(m) = index.mentions(&lang, &span.class).choose(&mut rng) {
                replacements.push((span, m.clone(), lang));
            }
        }
        let mut s = replace_spans(sentence, &replacements)?;
        if !sentence.is_code_mixed() {
            s = Sentence::new(s.tokens().to_vec(), s.tags().to_vec(), s.language().clone())?;
        }
        out.push(s);
    }
    Ok(Corpus::new(out))
}
