//! Labeled sequence linearization.
//!
//! Every entity token is wrapped in the marker of its own tag, e.g.
//! `⟨B-ORG⟩ EU ⟨B-ORG⟩ rejects`. In multilingual mode a language marker sits
//! between the opening label marker and the token: `⟨B-ORG⟩ ⟨Es⟩ UE ⟨B-ORG⟩`.

use std::fmt;
use std::sync::Arc;

use crate::corpus::{Lang, Sentence, Tag, MARKER_CLOSE, MARKER_OPEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Marker {
    Label(Tag),
    Language(Lang),
}

impl Marker {
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marker::Label(tag) => write!(f, "{MARKER_OPEN}{tag}{MARKER_CLOSE}"),
            Marker::Language(lang) => {
                let mut chars = lang.as_str().chars();
                let head: String = chars.next().into_iter().flat_map(char::to_uppercase).collect();
                write!(f, "{MARKER_OPEN}{head}{}{MARKER_CLOSE}", chars.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Word(String),
    Marker(Marker),
}

impl Item {
    pub fn as_word(&self) -> Option<&str> {
        match self {
            Item::Word(w) => Some(w),
            Item::Marker(_) => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Item::Word(w) => w.clone(),
            Item::Marker(m) => m.render(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearizedSequence {
    items: Vec<Item>,
    origin: Arc<Sentence>,
    /// Item index of each surface token, in sentence order.
    word_items: Vec<usize>,
}

impl LinearizedSequence {
    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn origin(&self) -> &Sentence {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn word_items(&self) -> &[usize] {
        &self.word_items
    }

    /// Item index of the `token`-th surface token.
    pub fn item_of_token(&self, token: usize) -> usize {
        self.word_items[token]
    }

    /// Sentence token index of the surface item at `item`, if it is one.
    pub fn token_of_item(&self, item: usize) -> Option<usize> {
        self.word_items.binary_search(&item).ok()
    }

    /// Item indices of entity surface tokens, ascending.
    pub fn entity_items(&self) -> Vec<usize> {
        self.origin
            .tags()
            .iter()
            .zip(&self.word_items)
            .filter(|(tag, _)| !tag.is_outside())
            .map(|(_, &item)| item)
            .collect()
    }

    pub fn is_entity_item(&self, item: usize) -> bool {
        self.token_of_item(item)
            .is_some_and(|t| !self.origin.tags()[t].is_outside())
    }

    /// Returns a copy with the surface words at the given item positions replaced.
    pub fn with_words(&self, replacements: &[(usize, String)]) -> Result<Self> {
        let mut items = self.items.clone();
        for (pos, word) in replacements {
            match items.get_mut(*pos) {
                Some(slot @ Item::Word(_)) => *slot = Item::Word(word.clone()),
                _ => {
                    return Err(Error::Structure(format!(
                        "item {pos} is not a surface token"
                    )))
                }
            }
        }
        Ok(LinearizedSequence {
            items,
            origin: Arc::clone(&self.origin),
            word_items: self.word_items.clone(),
        })
    }

    pub fn render(&self) -> String {
        self.items
            .iter()
            .map(Item::render)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Builds a sequence from raw items, e.g. decoded model output. `origin`
    /// supplies the language attribution used by [`delinearize`].
    pub fn from_items(items: Vec<Item>, origin: Arc<Sentence>) -> Self {
        let word_items = items
            .iter()
            .enumerate()
            .filter(|(_, it)| matches!(it, Item::Word(_)))
            .map(|(i, _)| i)
            .collect();
        LinearizedSequence {
            items,
            origin,
            word_items,
        }
    }
}

pub fn linearize(sentence: &Sentence, language_markers: bool) -> LinearizedSequence {
    linearize_shared(Arc::new(sentence.clone()), language_markers)
}

pub fn linearize_shared(sentence: Arc<Sentence>, language_markers: bool) -> LinearizedSequence {
    let n_entity = sentence.tags().iter().filter(|t| !t.is_outside()).count();
    let extra = if language_markers { 3 } else { 2 };
    let mut items = Vec::with_capacity(sentence.len() + extra * n_entity);
    let mut word_items = Vec::with_capacity(sentence.len());
    for (i, (tok, tag)) in sentence.tokens().iter().zip(sentence.tags()).enumerate() {
        if tag.is_outside() {
            word_items.push(items.len());
            items.push(Item::Word(tok.clone()));
            continue;
        }
        items.push(Item::Marker(Marker::Label(tag.clone())));
        if language_markers {
            items.push(Item::Marker(Marker::Language(sentence.token_language(i).clone())));
        }
        word_items.push(items.len());
        items.push(Item::Word(tok.clone()));
        items.push(Item::Marker(Marker::Label(tag.clone())));
    }
    LinearizedSequence {
        items,
        origin: sentence,
        word_items,
    }
}

/// Strips markers and rebuilds the tagged sentence.
pub fn delinearize(seq: &LinearizedSequence) -> Result<Sentence> {
    let items = seq.items();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut i = 0;
    while i < items.len() {
        match &items[i] {
            Item::Word(w) => {
                tokens.push(w.clone());
                tags.push(Tag::O);
                i += 1;
            }
            Item::Marker(Marker::Language(l)) => {
                return Err(Error::Structure(format!(
                    "language marker {l} outside an entity at item {i}"
                )))
            }
            Item::Marker(Marker::Label(open)) => {
                let mut j = i + 1;
                if let Some(Item::Marker(Marker::Language(_))) = items.get(j) {
                    j += 1;
                }
                let word = match items.get(j) {
                    Some(Item::Word(w)) => w,
                    _ => {
                        return Err(Error::Structure(format!(
                            "label marker {open} at item {i} does not enclose a token"
                        )))
                    }
                };
                match items.get(j + 1) {
                    Some(Item::Marker(Marker::Label(close))) if close == open => {}
                    _ => {
                        return Err(Error::Structure(format!(
                            "label marker {open} at item {i} is not closed"
                        )))
                    }
                }
                if matches!(open, Tag::O) {
                    return Err(Error::Structure("O used as a label marker".into()));
                }
                tokens.push(word.clone());
                tags.push(open.clone());
                i = j + 2;
            }
        }
    }
    let origin = seq.origin();
    if tokens.len() != origin.len() {
        return Err(Error::Structure(format!(
            "{} tokens recovered but origin has {}",
            tokens.len(),
            origin.len()
        )));
    }
    Sentence::with_token_languages(
        tokens,
        tags,
        origin.language().clone(),
        origin.token_languages().map(<[Lang]>::to_vec),
    )
    .map_err(|e| Error::Structure(e.to_string()))
}
