//! Templated two-language NER corpus with aligned toy embeddings.
//!
//! English and Spanish sentences are built from 60 context templates per
//! language. Each language has 60 PER, ORG and LOC mentions; even-numbered
//! mentions fill training sentences and odd-numbered ones test sentences, so
//! test entities are unseen at training time. Some templates give no hint of
//! the entity class, which then has to be read off the mention itself.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codemix::EmbeddingTable;
use crate::corpus::{write_conll, Corpus, EntityClass, Lang, Sentence, Tag};
use crate::error::{Error, Result};
use crate::rng;

pub const MENTIONS_PER_CLASS: usize = 60;
pub const CLASSES: [&str; 3] = ["PER", "ORG", "LOC"];

const SYNTH_STAGE: u64 = 100;

struct LangSpec {
    id: &'static str,
    syllables: [&'static str; 15],
    first_names: [&'static str; 20],
    surname_suffixes: [&'static str; 4],
    org_types: [&'static str; 5],
    org_type_first: bool,
    loc_suffixes: [&'static str; 3],
    loc_prefix: &'static str,
    prefixes: [&'static str; 4],
    cores: [&'static str; 15],
}

const EN: LangSpec = LangSpec {
    id: "en",
    syllables: [
        "bar", "cel", "dor", "fen", "gal", "har", "kin", "lam", "mor", "nes", "pel", "ros", "tam",
        "vel", "wes",
    ],
    first_names: [
        "John", "Mary", "David", "Sarah", "Michael", "Emma", "James", "Laura", "Robert", "Anna",
        "Thomas", "Lucy", "Daniel", "Grace", "Peter", "Helen", "Mark", "Alice", "Paul", "Julia",
    ],
    surname_suffixes: ["son", "ton", "ley", "man"],
    org_types: ["Bank", "Group", "Labs", "Media", "Corp"],
    org_type_first: false,
    loc_suffixes: ["ville", "burg", "ford"],
    loc_prefix: "Port",
    prefixes: ["", "on Tuesday ,", "according to reports ,", "meanwhile ,"],
    cores: [
        "{PER} visited {LOC} last week .",
        "{ORG} opened a new office in {LOC} .",
        "{PER} works for {ORG} .",
        "the mayor of {LOC} met {PER} .",
        "{ORG} hired {PER} as director .",
        "{PER} said {ORG} will expand .",
        "shares of {ORG} fell sharply .",
        "{PER} was born in {LOC} .",
        "officials in {LOC} praised {ORG} .",
        "{PER} and {PER} arrived in {LOC} .",
        "{ORG} signed a deal with {ORG} .",
        "heavy rain hit {LOC} on Monday .",
        "{ANY} was mentioned in the report .",
        "reporters asked about {ANY} .",
        "{ANY} appeared in the news again .",
    ],
};

const ES: LangSpec = LangSpec {
    id: "es",
    syllables: [
        "al", "ber", "cas", "do", "es", "fra", "gor", "lu", "mar", "na", "qui", "ro", "san", "te",
        "va",
    ],
    first_names: [
        "Juan", "María", "Carlos", "Lucía", "José", "Ana", "Luis", "Elena", "Miguel", "Sofía",
        "Pedro", "Carmen", "Jorge", "Isabel", "Pablo", "Rosa", "Diego", "Marta", "Andrés", "Clara",
    ],
    surname_suffixes: ["ez", "ero", "ada", "illo"],
    org_types: ["Banco", "Grupo", "Laboratorios", "Editorial", "Club"],
    org_type_first: true,
    loc_suffixes: ["illa", "eda", "ona"],
    loc_prefix: "San",
    prefixes: ["", "el martes ,", "según fuentes ,", "mientras tanto ,"],
    cores: [
        "{PER} visitó {LOC} la semana pasada .",
        "{ORG} abrió una nueva oficina en {LOC} .",
        "{PER} trabaja para {ORG} .",
        "el alcalde de {LOC} se reunió con {PER} .",
        "{ORG} contrató a {PER} como director .",
        "{PER} dijo que {ORG} crecerá .",
        "las acciones de {ORG} cayeron con fuerza .",
        "{PER} nació en {LOC} .",
        "los funcionarios de {LOC} elogiaron a {ORG} .",
        "{PER} y {PER} llegaron a {LOC} .",
        "{ORG} firmó un acuerdo con {ORG} .",
        "fuertes lluvias azotaron {LOC} el lunes .",
        "{ANY} apareció en el informe .",
        "los periodistas preguntaron por {ANY} .",
        "{ANY} volvió a salir en las noticias .",
    ],
};

fn spec(lang: &str) -> Option<&'static LangSpec> {
    [&EN, &ES].into_iter().find(|s| s.id == lang)
}

pub fn languages() -> Vec<Lang> {
    [EN.id, ES.id].iter().map(|l| Lang::new(*l).expect("valid id")).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|h| h.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// The `k`-th pseudo-word stem; distinct for `k < 210`.
fn stem(spec: &LangSpec, k: usize) -> String {
    let pairs: Vec<(usize, usize)> = (0..15)
        .flat_map(|a| (0..15).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let (a, b) = pairs[(k * 11) % pairs.len()];
    capitalize(&format!("{}{}", spec.syllables[a], spec.syllables[b]))
}

/// Mention `k` of `class`. Surface forms cycle with `k / 2`, so training
/// (even `k`) and test (odd `k`) mentions draw on the same forms.
fn mention(spec: &LangSpec, class: &str, k: usize) -> Vec<String> {
    let j = k / 2;
    match class {
        "PER" => vec![
            spec.first_names[j % 20].to_string(),
            format!("{}{}", stem(spec, k), spec.surname_suffixes[j % 4]),
        ],
        "ORG" => {
            let (t, st) = (spec.org_types[j % 5].to_string(), stem(spec, 60 + k));
            if spec.org_type_first {
                vec![t, st]
            } else {
                vec![st, t]
            }
        }
        "LOC" => match j % 4 {
            3 => vec![spec.loc_prefix.to_string(), stem(spec, 120 + k)],
            r => vec![format!("{}{}", stem(spec, 120 + k), spec.loc_suffixes[r])],
        },
        _ => unreachable!("unknown synthetic class"),
    }
}

/// All 60 mentions of `class` in `lang`, in index order.
pub fn lexicon(lang: &str, class: &str) -> Vec<Vec<String>> {
    let spec = spec(lang).expect("synthetic language");
    (0..MENTIONS_PER_CLASS).map(|k| mention(spec, class, k)).collect()
}

/// The 60 templates of `lang`, slots written `{PER}`, `{ORG}`, `{LOC}` or `{ANY}`.
pub fn templates(lang: &str) -> Vec<String> {
    let spec = spec(lang).expect("synthetic language");
    spec.prefixes
        .iter()
        .flat_map(|p| {
            spec.cores.iter().map(move |c| {
                if p.is_empty() {
                    c.to_string()
                } else {
                    format!("{p} {c}")
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub train_per_language: usize,
    pub test_per_language: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_per_language: 400,
            test_per_language: 200,
            embedding_dim: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// One corpus per language, in [`languages`] order.
    pub train: Vec<Corpus>,
    pub test: Vec<Corpus>,
    /// Aligned English-Spanish vectors for all entity tokens.
    pub embeddings: EmbeddingTable,
}

fn sentence<R: Rng + ?Sized>(spec: &LangSpec, template: &str, held_out: bool, rng: &mut R) -> Sentence {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for word in template.split_whitespace() {
        let class = match word {
            "{PER}" => "PER",
            "{ORG}" => "ORG",
            "{LOC}" => "LOC",
            "{ANY}" => *CLASSES.choose(rng).expect("non-empty"),
            _ => {
                tokens.push(word.to_string());
                tags.push(Tag::O);
                continue;
            }
        };
        let k = 2 * rng.random_range(0..MENTIONS_PER_CLASS / 2) + usize::from(held_out);
        let class_id = EntityClass::new(class).expect("valid class");
        for (j, tok) in mention(spec, class, k).into_iter().enumerate() {
            tokens.push(tok);
            tags.push(if j == 0 {
                Tag::B(class_id.clone())
            } else {
                Tag::I(class_id.clone())
            });
        }
    }
    Sentence::new(tokens, tags, Lang::new(spec.id).expect("valid id")).expect("well-formed template")
}

fn corpus(spec: &LangSpec, n: usize, held_out: bool, seed: u64, split: u64) -> Corpus {
    let templates = templates(spec.id);
    let lang_no = u64::from(spec.id == ES.id);
    (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, &[SYNTH_STAGE, lang_no, split, i as u64]);
            let t = templates.choose(&mut rng).expect("non-empty");
            sentence(spec, t, held_out, &mut rng)
        })
        .collect()
}

/// Vectors share a class direction; ORG type words, location affixes and
/// first names are aligned across the two languages by index.
fn embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = rng::stream(seed, &[SYNTH_STAGE, 9]);
    let mut gauss = |scale: f64| -> Vec<f64> {
        (0..dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>()
    };
    let class_dir: Vec<Vec<f64>> = (0..3).map(|_| gauss(1.0)).collect();
    let org_type: Vec<Vec<f64>> = (0..5).map(|_| gauss(1.0)).collect();
    let loc_kind: Vec<Vec<f64>> = (0..4).map(|_| gauss(1.0)).collect();
    let first: Vec<Vec<f64>> = (0..20).map(|_| gauss(1.0)).collect();
    let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();

    let mut table = EmbeddingTable::new(dim);
    let add = |table: &mut EmbeddingTable, word: String, v: Vec<f64>| {
        table.insert(word, v).expect("fixed dimension");
    };
    for spec in [&EN, &ES] {
        for (i, name) in spec.first_names.iter().enumerate() {
            add(&mut table, name.to_string(), sum(&class_dir[0], &first[i]));
        }
        for (i, t) in spec.org_types.iter().enumerate() {
            add(&mut table, t.to_string(), sum(&class_dir[1], &org_type[i]));
        }
        add(&mut table, spec.loc_prefix.to_string(), sum(&class_dir[2], &loc_kind[3]));
    }
    for spec in [&EN, &ES] {
        for k in 0..MENTIONS_PER_CLASS {
            let per = mention(spec, "PER", k);
            add(&mut table, per[1].clone(), sum(&class_dir[0], &gauss(0.7)));
            let org = mention(spec, "ORG", k);
            let st = if spec.org_type_first { &org[1] } else { &org[0] };
            add(&mut table, st.clone(), sum(&class_dir[1], &gauss(0.7)));
            let loc = mention(spec, "LOC", k);
            let base = sum(&class_dir[2], &loc_kind[(k / 2) % 4]);
            add(&mut table, loc.last().expect("non-empty").clone(), sum(&base, &gauss(0.7)));
        }
    }
    table
}

pub fn generate(cfg: &SynthConfig) -> SynthData {
    let specs = [&EN, &ES];
    SynthData {
        train: specs
            .iter()
            .map(|s| corpus(s, cfg.train_per_language, false, cfg.seed, 0))
            .collect(),
        test: specs
            .iter()
            .map(|s| corpus(s, cfg.test_per_language, true, cfg.seed, 1))
            .collect(),
        embeddings: embeddings(cfg.embedding_dim, cfg.seed),
    }
}

/// Writes `train.<lang>.conll`, `test.<lang>.conll` and `embeddings.en-es.txt` into `dir`.
pub fn write_dataset(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    for (lang, (train, test)) in languages().iter().zip(data.train.iter().zip(&data.test)) {
        write(format!("train.{lang}.conll"), write_conll(train))?;
        write(format!("test.{lang}.conll"), write_conll(test))?;
    }
    write("embeddings.en-es.txt".into(), data.embeddings.to_text())
}

/// Pipeline config for a dataset written by [`write_dataset`], with model
/// settings sized for a quick CPU run.
pub fn config_text(seed: u64) -> String {
    format!(
        "# Synthetic English/Spanish benchmark.\n\
         mode = multilingual\n\
         seed = {seed}\n\
         train.en = train.en.conll\n\
         train.es = train.es.conll\n\
         test.en = test.en.conll\n\
         test.es = test.es.conll\n\
         embeddings.en-es = embeddings.en-es.txt\n\
         split.n = 100\n\
         output_dir = out\n\
         mlm.dim = 32\n\
         mlm.heads = 2\n\
         mlm.ff_dim = 64\n\
         mlm.epochs = 30\n\
         mlm.lr = 0.03\n\
         tagger.epochs = 10\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn sixty_templates_per_language() {
        for lang in ["en", "es"] {
            let t: BTreeSet<String> = templates(lang).into_iter().collect();
            assert_eq!(t.len(), 60);
        }
    }

    #[test]
    fn lexicons_are_distinct_and_disjoint_from_context() {
        for lang in ["en", "es"] {
            let mut all = BTreeSet::new();
            for class in CLASSES {
                let lex = lexicon(lang, class);
                assert_eq!(lex.len(), 60);
                all.extend(lex);
            }
            assert_eq!(all.len(), 180);
        }
    }

    #[test]
    fn test_mentions_are_held_out() {
        let data = generate(&SynthConfig::default());
        let train_ents: BTreeSet<Vec<String>> = data.train.iter()
            .flat_map(|c| c.sentences())
            .flat_map(|s| s.spans().into_iter().map(|sp| sp.mention(s).to_vec()).collect::<Vec<_>>())
            .collect();
        for s in data.test.iter().flat_map(|c| c.sentences()) {
            for sp in s.spans() {
                assert!(!train_ents.contains(sp.mention(s)));
            }
        }
    }

    #[test]
    fn every_entity_token_has_a_vector() {
        let data = generate(&SynthConfig::default());
        for c in data.train.iter().chain(&data.test) {
            for s in c.sentences() {
                for (tok, tag) in s.tokens().iter().zip(s.tags()) {
                    if !tag.is_outside() {
                        assert!(data.embeddings.get(tok).is_some(), "{tok}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a.train, b.train);
        assert_eq!(a.embeddings, b.embeddings);
    }
}
