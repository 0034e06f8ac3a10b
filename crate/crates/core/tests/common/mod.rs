#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use melm::codemix::{ess_lookup, EmbeddingTable};
use melm::corpus::{build_entity_index, parse_conll, Corpus, EntityClass, Lang, Sentence, Tag};
use melm::mlm::{StubBackend, StubKey, Vocabulary};

pub fn lang(id: &str) -> Lang {
    Lang::new(id).unwrap()
}

pub fn conll(text: &str) -> Corpus {
    parse_conll(text, &lang("en")).unwrap()
}

pub const HEADLINE: &str = "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\nto O\nboycott O\nBritish B-MISC\nlamb O\n";

pub const HEADLINE_TOP5: [&str; 5] = ["EU", "Greenpeace", "Amnesty", "UN", "Reuters"];

/// Stub whose distribution for the masked headline subject puts the five
/// candidates above every other token.
pub fn headline_stub() -> (Corpus, StubBackend) {
    let corpus = conll(HEADLINE);
    let mut vocab_text = String::from(HEADLINE);
    for w in ["Greenpeace", "Amnesty", "UN", "Reuters", "NATO", "Germany"] {
        vocab_text.push_str(&format!("\n{w} B-ORG\n"));
    }
    let vocab = Vocabulary::build(&conll(&vocab_text), 1, &[], &[]);
    let mut stub = StubBackend::new(vocab);
    stub.insert(
        StubKey::new(None, Some("rejects"), Tag::B(EntityClass::new("ORG").unwrap())),
        &[
            ("EU", 0.30),
            ("Greenpeace", 0.20),
            ("Amnesty", 0.15),
            ("UN", 0.12),
            ("Reuters", 0.10),
            ("NATO", 0.05),
            ("Germany", 0.04),
            ("lamb", 0.04),
        ],
    )
    .unwrap();
    (corpus, stub)
}

const WORDS: [&str; 12] = [
    "the", "EU", "said", "Peter", "Blackburn", "Bonn", "on", "Monday", "UN", "talks", "de", "Madrid",
];
const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];

/// Valid BIO sentences built from a small word pool, so mentions repeat.
pub fn sentence_strategy(max_len: usize) -> impl Strategy<Value = Sentence> {
    prop::collection::vec((0..WORDS.len(), 0..3u8, 0..CLASSES.len()), 1..=max_len).prop_map(|raw| {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        let mut prev: Option<Tag> = None;
        for (w, kind, c) in raw {
            let class = EntityClass::new(CLASSES[c]).unwrap();
            let tag = match kind {
                0 => Tag::O,
                1 => Tag::B(class),
                _ => match &prev {
                    Some(Tag::B(pc)) | Some(Tag::I(pc)) => Tag::I(pc.clone()),
                    _ => Tag::B(class),
                },
            };
            tokens.push(WORDS[w].to_string());
            prev = Some(tag.clone());
            tags.push(tag);
        }
        Sentence::new(tokens, tags, lang("en")).unwrap()
    })
}

pub fn corpus_strategy(max_sentences: usize) -> impl Strategy<Value = Corpus> {
    prop::collection::vec(sentence_strategy(10), 1..=max_sentences).prop_map(Corpus::new)
}

pub fn sentence(text: &str) -> Sentence {
    conll(text).into_sentences().remove(0)
}

/// 20 sentences; a unique leading word identifies each one, so masked
/// entity tokens are recoverable from context.
pub fn tiny_corpus() -> Corpus {
    let people = ["Alice", "Bruno", "Chen", "Dana", "Emil"];
    let orgs = ["Acme", "Globex", "Initech", "Umbrella", "Hooli"];
    let verbs = ["joined", "left", "sued", "visited"];
    let mut text = String::new();
    for (i, p) in people.iter().enumerate() {
        for (j, v) in verbs.iter().enumerate() {
            let org = orgs[(i + j) % orgs.len()];
            let day = i * verbs.len() + j;
            text.push_str(&format!(
                "day{day} O\n{p} B-PER\nSmith{j} I-PER\n{v} O\n{org} B-ORG\nCorp I-ORG\n. O\n\n"
            ));
        }
    }
    conll(&text)
}

/// Brute-force nearest mention: mean vector of known tokens, plain cosine,
/// smallest mention among equals. Also returns how many mentions share the
/// best similarity.
pub fn brute_force_nearest<'a>(
    query: &[String],
    cands: &'a [Vec<String>],
    table: &EmbeddingTable,
) -> Option<(&'a Vec<String>, usize)> {
    let mean = |toks: &[String]| -> Option<Vec<f64>> {
        let vs: Vec<&[f64]> = toks.iter().filter_map(|t| table.get(t)).collect();
        if vs.is_empty() {
            return None;
        }
        let mut m = vec![0.0; table.dim()];
        for v in &vs {
            for (a, b) in m.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
        Some(m.into_iter().map(|x| x / vs.len() as f64).collect())
    };
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let q = mean(query)?;
    let mut scored: Vec<(f64, &Vec<String>)> =
        cands.iter().filter_map(|c| mean(c).map(|e| (cos(&q, &e), c))).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let (best, winner) = *scored.first()?;
    Some((winner, scored.iter().filter(|s| s.0 == best).count()))
}

/// One randomized lookup: 50 candidate mentions over 8-dimensional vectors
/// drawn from a small pool, so exact ties are frequent. Returns
/// `(mismatch, tie)` between the library lookup and the brute-force scan.
pub fn ess_instance_agrees(seed: u64) -> (bool, bool) {
    let dim = 8;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<Vec<f64>> = (0..15)
        .map(|_| (0..dim).map(|_| f64::from(r.random_range(-2i32..=2))).collect())
        .collect();
    let mut table = EmbeddingTable::new(dim);
    let mut text = String::new();
    for j in 0..50 {
        let word = format!("w{j:02}");
        if r.random_bool(0.9) {
            table.insert(word.clone(), base[r.random_range(0..base.len())].clone()).unwrap();
        }
        if r.random_bool(0.3) {
            text.push_str(&format!("{word} B-PER\nx{j} I-PER\n\n"));
            table.insert(format!("x{j}"), base[r.random_range(0..base.len())].clone()).unwrap();
        } else {
            text.push_str(&format!("{word} B-PER\n\n"));
        }
    }
    table.insert("q", base[r.random_range(0..base.len())].clone()).unwrap();
    let query = vec!["q".to_string(), "unknown".to_string()];
    let es = lang("es");
    let index = build_entity_index(&[parse_conll(&text, &es).unwrap()]);
    let class = EntityClass::new("PER").unwrap();
    let cands = index.mentions(&es, &class);
    assert_eq!(cands.len(), 50);
    let got = ess_lookup(&query, &es, &class, &index, Some(&table), &mut r).unwrap();
    let (want, n_best) = brute_force_nearest(&query, cands, &table).unwrap();
    (got != want.as_slice(), n_best > 1)
}
