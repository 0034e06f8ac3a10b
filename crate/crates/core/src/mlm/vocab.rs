use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::{Corpus, EntityClass, Lang, Tag};
use crate::linearize::{Item, Marker};

pub const UNK: usize = 0;
pub const MASK: usize = 1;
pub const PAD: usize = 2;

const SPECIALS: [&str; 3] = ["⟨unk⟩", "⟨mask⟩", "⟨pad⟩"];

/// Whole-word vocabulary.
///
/// Special tokens and markers occupy the low ids `0..reserved`; surface tokens
/// follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    reserved: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from `corpus`. Markers are created for every class
    /// and language in the corpus plus the declared extras.
    pub fn build(
        corpus: &Corpus,
        min_freq: usize,
        extra_classes: &[EntityClass],
        extra_languages: &[Lang],
    ) -> Self {
        let min_freq = min_freq.max(1);
        let mut classes: BTreeSet<EntityClass> = corpus.classes();
        classes.extend(extra_classes.iter().cloned());
        let mut langs: BTreeSet<Lang> = corpus.languages().clone();
        langs.extend(extra_languages.iter().cloned());

        let mut markers: Vec<String> = Vec::new();
        for class in &classes {
            markers.push(Marker::Label(Tag::B(class.clone())).render());
            markers.push(Marker::Label(Tag::I(class.clone())).render());
        }
        for lang in &langs {
            markers.push(Marker::Language(lang.clone()).render());
        }

        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for s in corpus.sentences() {
            for tok in s.tokens() {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(markers);
        let reserved = tokens.len();
        tokens.extend(
            freq.into_iter()
                .filter(|&(_, n)| n >= min_freq)
                .map(|(t, _)| t.to_string()),
        );
        Self::from_parts(tokens, reserved)
    }

    pub(crate) fn from_parts(tokens: Vec<String>, reserved: usize) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            ids,
            reserved,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of special and marker ids at the bottom of the id space.
    pub fn reserved(&self) -> usize {
        self.reserved
    }

    /// True for ids that are special or marker tokens.
    pub fn is_reserved(&self, id: usize) -> bool {
        id < self.reserved
    }

    pub fn item_id(&self, item: &Item) -> usize {
        match item {
            Item::Word(w) => self.id(w),
            Item::Marker(m) => self.id(&m.render()),
        }
    }
}
