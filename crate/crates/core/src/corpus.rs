//! Token-labeled corpora in CoNLL column format.
//!
//! Sentences carry BIO tags and a language id. Code-mixed sentences also carry a
//! per-token language attribution, written to CoNLL as a `#melm` comment line
//! ahead of the sentence:
//!
//! ```text
//! #melm lang=en mix=0-2:es
//! Banco B-ORG
//! Norte I-ORG
//! rejects O
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// Characters reserved for rendered marker tokens.
pub const MARKER_OPEN: char = '⟨';
pub const MARKER_CLOSE: char = '⟩';

const COMMENT_PREFIX: &str = "#melm";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityClass(String);

impl EntityClass {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty()
            || name.chars().any(|c| c.is_whitespace() || c == MARKER_OPEN || c == MARKER_CLOSE)
        {
            return Err(Error::InvalidTag(name));
        }
        Ok(EntityClass(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    O,
    B(EntityClass),
    I(EntityClass),
}

impl Tag {
    pub fn class(&self) -> Option<&EntityClass> {
        match self {
            Tag::O => None,
            Tag::B(c) | Tag::I(c) => Some(c),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::O)
    }

    /// Whether `self` may directly follow `prev` (`None` = sentence start).
    pub fn can_follow(&self, prev: Option<&Tag>) -> bool {
        match self {
            Tag::O | Tag::B(_) => true,
            Tag::I(c) => matches!(prev, Some(Tag::B(p)) | Some(Tag::I(p)) if p == c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(c) => write!(f, "B-{c}"),
            Tag::I(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let bad = || Error::InvalidTag(s.to_string());
        let (prefix, class) = s.split_once('-').ok_or_else(bad)?;
        let class = EntityClass::new(class).map_err(|_| bad())?;
        match prefix {
            "B" => Ok(Tag::B(class)),
            "I" => Ok(Tag::I(class)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lang(String);

impl Lang {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty()
            || id
                .chars()
                .any(|c| c.is_whitespace() || matches!(c, '=' | ',' | ':' | MARKER_OPEN | MARKER_CLOSE))
        {
            return Err(Error::InvalidSentence(format!("invalid language id `{id}`")));
        }
        Ok(Lang(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lang::new(s)
    }
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() {
        return Err(Error::InvalidSentence("empty token".into()));
    }
    if token
        .chars()
        .any(|c| c.is_whitespace() || c == MARKER_OPEN || c == MARKER_CLOSE)
    {
        return Err(Error::InvalidSentence(format!(
            "token `{token}` contains whitespace or a reserved marker character"
        )));
    }
    Ok(())
}

/// Checks that `tags` is a valid BIO sequence, returning the first offending index.
pub fn bio_violation(tags: &[Tag]) -> Option<usize> {
    let mut prev = None;
    for (i, tag) in tags.iter().enumerate() {
        if !tag.can_follow(prev) {
            return Some(i);
        }
        prev = Some(tag);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
    tags: Vec<Tag>,
    language: Lang,
    /// Per-token languages; `None` when every token is in `language`.
    token_languages: Option<Vec<Lang>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>, language: Lang) -> Result<Self> {
        Self::with_token_languages(tokens, tags, language, None)
    }

    pub fn with_token_languages(
        tokens: Vec<String>,
        tags: Vec<Tag>,
        language: Lang,
        token_languages: Option<Vec<Lang>>,
    ) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::InvalidSentence(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        for token in &tokens {
            check_token(token)?;
        }
        if let Some(i) = bio_violation(&tags) {
            return Err(Error::InvalidSentence(format!(
                "tag {} at position {i} breaks BIO",
                tags[i]
            )));
        }
        let token_languages = match token_languages {
            Some(langs) if langs.len() != tokens.len() => {
                return Err(Error::InvalidSentence(format!(
                    "{} tokens but {} token languages",
                    tokens.len(),
                    langs.len()
                )))
            }
            Some(langs) if langs.iter().all(|l| *l == language) => None,
            other => other,
        };
        Ok(Sentence {
            tokens,
            tags,
            language,
            token_languages,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn language(&self) -> &Lang {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_code_mixed(&self) -> bool {
        self.token_languages.is_some()
    }

    pub fn token_languages(&self) -> Option<&[Lang]> {
        self.token_languages.as_deref()
    }

    pub fn token_language(&self, i: usize) -> &Lang {
        match &self.token_languages {
            Some(langs) => &langs[i],
            None => &self.language,
        }
    }

    pub fn has_entities(&self) -> bool {
        self.tags.iter().any(|t| !t.is_outside())
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        extract_spans(self)
    }

    /// Same sentence with the tokens at the given positions replaced.
    pub fn with_tokens_replaced(&self, replacements: &[(usize, String)]) -> Result<Self> {
        let mut tokens = self.tokens.clone();
        for (pos, tok) in replacements {
            let slot = tokens
                .get_mut(*pos)
                .ok_or_else(|| Error::InvalidSentence(format!("position {pos} out of range")))?;
            *slot = tok.clone();
        }
        Sentence::with_token_languages(
            tokens,
            self.tags.clone(),
            self.language.clone(),
            self.token_languages.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub class: EntityClass,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn mention<'a>(&self, sentence: &'a Sentence) -> &'a [String] {
        &sentence.tokens()[self.start..self.end]
    }
}

pub fn extract_spans(sentence: &Sentence) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &EntityClass)> = None;
    for (i, tag) in sentence.tags().iter().enumerate() {
        match tag {
            Tag::I(_) => {}
            _ => {
                if let Some((start, class)) = open.take() {
                    spans.push(EntitySpan {
                        start,
                        end: i,
                        class: class.clone(),
                    });
                }
                if let Tag::B(c) = tag {
                    open = Some((i, c));
                }
            }
        }
    }
    if let Some((start, class)) = open {
        spans.push(EntitySpan {
            start,
            end: sentence.len(),
            class: class.clone(),
        });
    }
    spans
}

/// Re-expands spans into a BIO tag sequence of length `len`.
pub fn tags_from_spans(len: usize, spans: &[EntitySpan]) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for span in spans {
        tags[span.start] = Tag::B(span.class.clone());
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = Tag::I(span.class.clone());
        }
    }
    tags
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    languages: BTreeSet<Lang>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let mut languages = BTreeSet::new();
        for s in &sentences {
            languages.insert(s.language().clone());
            if let Some(langs) = s.token_languages() {
                languages.extend(langs.iter().cloned());
            }
        }
        Corpus {
            sentences,
            languages,
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }

    pub fn languages(&self) -> &BTreeSet<Lang> {
        &self.languages
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<EntityClass> {
        self.sentences
            .iter()
            .flat_map(|s| s.tags().iter().filter_map(|t| t.class().cloned()))
            .collect()
    }

    pub fn concat<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> Corpus {
        Corpus::new(
            corpora
                .into_iter()
                .flat_map(|c| c.sentences.iter().cloned())
                .collect(),
        )
    }
}

impl FromIterator<Sentence> for Corpus {
    fn from_iter<I: IntoIterator<Item = Sentence>>(iter: I) -> Self {
        Corpus::new(iter.into_iter().collect())
    }
}

struct RawSentence {
    first_line: usize,
    tokens: Vec<String>,
    tags: Vec<Tag>,
    tag_lines: Vec<usize>,
    language: Option<Lang>,
    mix: Vec<(usize, usize, Lang)>,
}

/// Sentence language and per-span language overrides from a `#melm` comment.
type MixComment = (Option<Lang>, Vec<(usize, usize, Lang)>);

fn parse_comment(line: &str, line_no: usize) -> Result<MixComment> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let mut language = None;
    let mut mix = Vec::new();
    for field in line[COMMENT_PREFIX.len()..].split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(format!("malformed comment field `{field}`")))?;
        match key {
            "lang" => language = Some(Lang::new(value).map_err(|e| err(e.to_string()))?),
            "mix" => {
                for run in value.split(',').filter(|r| !r.is_empty()) {
                    let parsed = run.split_once(':').and_then(|(range, lang)| {
                        let (a, b) = range.split_once('-')?;
                        Some((a.parse().ok()?, b.parse().ok()?, Lang::new(lang).ok()?))
                    });
                    mix.push(parsed.ok_or_else(|| err(format!("malformed mix run `{run}`")))?);
                }
            }
            _ => return Err(err(format!("unknown comment field `{key}`"))),
        }
    }
    Ok((language, mix))
}

/// Parses CoNLL column text.
///
/// Lines hold `token tag` (or the four-column CoNLL-2003 layout, where the NER
/// tag is last); blank lines end sentences and `-DOCSTART-` lines are skipped.
/// IOB1-tagged input is detected and rewritten to BIO.
pub fn parse_conll(text: &str, language: &Lang) -> Result<Corpus> {
    let mut raw: Vec<RawSentence> = Vec::new();
    let mut cur: Option<RawSentence> = None;
    let mut pending: Option<MixComment> = None;

    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            raw.extend(cur.take());
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            raw.extend(cur.take());
            continue;
        }
        if cur.is_none()
            && (trimmed == COMMENT_PREFIX || trimmed.starts_with(&format!("{COMMENT_PREFIX} ")))
        {
            pending = Some(parse_comment(trimmed, line_no)?);
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        let (token, tag) = match cols.as_slice() {
            [token, tag] | [token, _, _, tag] => (*token, *tag),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 2 or 4 columns, found {}", cols.len()),
                })
            }
        };
        check_token(token).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let tag: Tag = tag.parse().map_err(|e: Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sentence = cur.get_or_insert_with(|| {
            let (language, mix) = pending.take().unwrap_or_default();
            RawSentence {
                first_line: line_no,
                tokens: Vec::new(),
                tags: Vec::new(),
                tag_lines: Vec::new(),
                language,
                mix,
            }
        });
        sentence.tokens.push(token.to_string());
        sentence.tags.push(tag);
        sentence.tag_lines.push(line_no);
    }
    raw.extend(cur.take());

    normalize_scheme(&mut raw)?;

    let sentences = raw
        .into_iter()
        .map(|r| {
            let lang = r.language.unwrap_or_else(|| language.clone());
            let token_languages = if r.mix.is_empty() {
                None
            } else {
                let mut langs = vec![lang.clone(); r.tokens.len()];
                for (a, b, l) in r.mix {
                    if a >= b || b > langs.len() {
                        return Err(Error::Parse {
                            line: r.first_line,
                            message: format!("mix run {a}-{b} out of range"),
                        });
                    }
                    for slot in &mut langs[a..b] {
                        *slot = l.clone();
                    }
                }
                Some(langs)
            };
            Sentence::with_token_languages(r.tokens, r.tags, lang, token_languages).map_err(|e| {
                Error::Parse {
                    line: r.first_line,
                    message: e.to_string(),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(sentences))
}

/// Detects IOB1 input and converts it to BIO; rejects files that mix evidence of both.
fn normalize_scheme(raw: &mut [RawSentence]) -> Result<()> {
    let same_class = |prev: Option<&Tag>, class: &EntityClass| {
        matches!(prev, Some(Tag::B(c)) | Some(Tag::I(c)) if c == class)
    };
    let mut bio_evidence = false;
    let mut first_iob1: Option<usize> = None;
    for s in raw.iter() {
        for (i, tag) in s.tags.iter().enumerate() {
            let prev = i.checked_sub(1).map(|p| &s.tags[p]);
            match tag {
                Tag::B(c) if !same_class(prev, c) => bio_evidence = true,
                Tag::I(c) if !same_class(prev, c) => {
                    first_iob1.get_or_insert(s.tag_lines[i]);
                }
                _ => {}
            }
        }
    }
    match (first_iob1, bio_evidence) {
        (None, _) => Ok(()),
        (Some(line), true) => Err(Error::Parse {
            line,
            message: "I- tag does not continue an entity (BIO violation)".into(),
        }),
        (Some(_), false) => {
            for s in raw.iter_mut() {
                for i in 0..s.tags.len() {
                    let starts = match &s.tags[i] {
                        Tag::I(c) => {
                            let prev = i.checked_sub(1).map(|p| &s.tags[p]);
                            !same_class(prev, c)
                        }
                        _ => false,
                    };
                    if starts {
                        if let Tag::I(c) = &s.tags[i] {
                            s.tags[i] = Tag::B(c.clone());
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

fn mix_runs(sentence: &Sentence) -> Vec<(usize, usize, &Lang)> {
    let Some(langs) = sentence.token_languages() else {
        return Vec::new();
    };
    let mut runs: Vec<(usize, usize, &Lang)> = Vec::new();
    for (i, lang) in langs.iter().enumerate() {
        if lang == sentence.language() {
            continue;
        }
        let starts_entity = matches!(sentence.tags()[i], Tag::B(_));
        match runs.last_mut() {
            Some((_, end, l)) if *end == i && *l == lang && !starts_entity => *end = i + 1,
            _ => runs.push((i, i + 1, lang)),
        }
    }
    runs
}

fn write_sentence(out: &mut String, sentence: &Sentence, annotate: bool) {
    if annotate || sentence.is_code_mixed() {
        out.push_str(COMMENT_PREFIX);
        out.push_str(" lang=");
        out.push_str(sentence.language().as_str());
        let runs = mix_runs(sentence);
        if !runs.is_empty() {
            let rendered: Vec<String> = runs
                .iter()
                .map(|(a, b, l)| format!("{a}-{b}:{l}"))
                .collect();
            out.push_str(" mix=");
            out.push_str(&rendered.join(","));
        }
        out.push('\n');
    }
    for (tok, tag) in sentence.tokens().iter().zip(sentence.tags()) {
        out.push_str(tok);
        out.push(' ');
        out.push_str(&tag.to_string());
        out.push('\n');
    }
    out.push('\n');
}

/// Writes `token tag` lines with a blank line after every sentence.
///
/// Code-mixed sentences get a `#melm` comment line carrying their languages.
pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in corpus.sentences() {
        write_sentence(&mut out, s, false);
    }
    out
}

/// Like [`write_conll`] but records every sentence's language, so corpora
/// spanning several languages survive a round trip through one file.
pub fn write_conll_annotated(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in corpus.sentences() {
        write_sentence(&mut out, s, true);
    }
    out
}

pub fn read_conll_file(path: &Path, language: &Lang) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, language)
}

/// Label-wise entity sets keyed by (language, class); mentions are sorted and distinct.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityIndex {
    entries: BTreeMap<(Lang, EntityClass), Vec<Vec<String>>>,
}

impl EntityIndex {
    pub fn mentions(&self, lang: &Lang, class: &EntityClass) -> &[Vec<String>] {
        self.entries
            .get(&(lang.clone(), class.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn keys(&self) -> impl Iterator<Item = &(Lang, EntityClass)> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Lang, EntityClass), &Vec<Vec<String>>)> {
        self.entries.iter()
    }

    pub fn total_mentions(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

pub fn build_entity_index(corpora: &[Corpus]) -> EntityIndex {
    let mut sets: BTreeMap<(Lang, EntityClass), BTreeSet<Vec<String>>> = BTreeMap::new();
    for sentence in corpora.iter().flat_map(|c| c.sentences()) {
        for span in sentence.spans() {
            let lang = sentence.token_language(span.start).clone();
            sets.entry((lang, span.class.clone()))
                .or_default()
                .insert(span.mention(sentence).to_vec());
        }
    }
    EntityIndex {
        entries: sets
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
    }
}

/// Uniform sample of `n` sentences without replacement, keeping corpus order.
pub fn sample_split(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n > corpus.len() {
        return Err(Error::Size {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut rng = rng::stream(seed, &[rng::stage::SPLIT]);
    let mut picked = index::sample(&mut rng, corpus.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| corpus.sentences()[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> Lang {
        Lang::new("en").unwrap()
    }

    fn tag(s: &str) -> Tag {
        s.parse().unwrap()
    }

    const EU: &str = "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\nto O\nboycott O\nBritish B-MISC\nlamb O\n";

    #[test]
    fn parses_headline_sentence() {
        let corpus = parse_conll(EU, &en()).unwrap();
        assert_eq!(corpus.len(), 1);
        let s = &corpus.sentences()[0];
        assert_eq!(s.len(), 8);
        let spans: Vec<_> = s
            .spans()
            .into_iter()
            .map(|sp| (sp.start, sp.end, sp.class.to_string()))
            .collect();
        assert_eq!(
            spans,
            vec![
                (0, 1, "ORG".to_string()),
                (2, 3, "MISC".to_string()),
                (6, 7, "MISC".to_string())
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(parse_conll("", &en()).unwrap().is_empty());
        assert_eq!(write_conll(&Corpus::default()), "");
    }

    #[test]
    fn writes_one_line_per_token() {
        let text = "Clinton B-PER\naide O\nresigns O\n, O\nNBC B-ORG\nsays O\n";
        let corpus = parse_conll(text, &en()).unwrap();
        let out = write_conll(&corpus);
        assert_eq!(out, format!("{text}\n"));
        assert_eq!(out.lines().count(), 7);
    }

    #[test]
    fn three_sentences_round_trip_modulo_separator() {
        let text = "-DOCSTART- -X- O O\n\nEU\tB-ORG\nrejects   O\n\nPeter B-PER\nBlackburn I-PER\r\n\nBRUSSELS B-LOC\n1996-08-22 O\n";
        let corpus = parse_conll(text, &en()).unwrap();
        assert_eq!(corpus.len(), 3);
        let expected = "EU B-ORG\nrejects O\n\nPeter B-PER\nBlackburn I-PER\n\nBRUSSELS B-LOC\n1996-08-22 O\n\n";
        assert_eq!(write_conll(&corpus), expected);
        assert_eq!(parse_conll(expected, &en()).unwrap(), corpus);
    }

    #[test]
    fn four_column_layout() {
        let corpus = parse_conll("EU NNP B-NP I-ORG\nrejects VBZ B-VP O\n", &en()).unwrap();
        // IOB1 input: a lone I-ORG starts an entity.
        assert_eq!(corpus.sentences()[0].tags()[0], tag("B-ORG"));
    }

    #[test]
    fn iob1_is_normalized() {
        let text = "Peter I-PER\nBlackburn I-PER\nand O\nJohn I-PER\nJohn B-PER\n";
        let corpus = parse_conll(text, &en()).unwrap();
        let tags: Vec<String> = corpus.sentences()[0].tags().iter().map(|t| t.to_string()).collect();
        assert_eq!(tags, ["B-PER", "I-PER", "O", "B-PER", "B-PER"]);
    }

    #[test]
    fn mixed_schemes_are_rejected() {
        let text = "EU B-ORG\nrejects O\n\nfoo O\nGerman I-MISC\n";
        match parse_conll(text, &en()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, want) in [
            ("EU B-ORG\nrejects\n", 2),
            ("EU B-ORG\nrejects O extra\n", 2),
            ("EU X-ORG\n", 1),
            ("EU B-\n", 1),
            ("⟨B-ORG⟩ O\n", 1),
        ] {
            match parse_conll(text, &en()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn code_mixed_sentences_round_trip() {
        let es = Lang::new("es").unwrap();
        let s = Sentence::with_token_languages(
            vec!["Banco".into(), "Norte".into(), "rejects".into(), "Madrid".into()],
            vec![tag("B-ORG"), tag("I-ORG"), tag("O"), tag("B-LOC")],
            en(),
            Some(vec![es.clone(), es.clone(), en(), es.clone()]),
        )
        .unwrap();
        let corpus = Corpus::new(vec![s]);
        let text = write_conll(&corpus);
        assert!(text.starts_with("#melm lang=en mix=0-2:es,3-4:es\n"));
        assert_eq!(parse_conll(&text, &en()).unwrap(), corpus);
        assert!(corpus.languages().contains(&es));
    }

    #[test]
    fn annotated_writer_keeps_languages() {
        let es = Lang::new("es").unwrap();
        let a = parse_conll("EU B-ORG\n", &en()).unwrap();
        let b = parse_conll("UE B-ORG\n", &es).unwrap();
        let both = Corpus::concat([&a, &b]);
        let back = parse_conll(&write_conll_annotated(&both), &en()).unwrap();
        assert_eq!(back, both);
    }

    #[test]
    fn all_o_sentence_has_no_spans() {
        let c = parse_conll("a O\nb O\n", &en()).unwrap();
        assert!(c.sentences()[0].spans().is_empty());
    }

    #[test]
    fn entity_index_dedups() {
        let c = parse_conll(
            "Clinton B-PER\naide O\nNBC B-ORG\n\nNBC B-ORG\nsays O\n\nEU B-ORG\n",
            &en(),
        )
        .unwrap();
        let idx = build_entity_index(&[c]);
        let org = EntityClass::new("ORG").unwrap();
        assert_eq!(
            idx.mentions(&en(), &org),
            &[vec!["EU".to_string()], vec!["NBC".to_string()]]
        );
        assert_eq!(idx.total_mentions(), 3);
    }

    #[test]
    fn single_mention_index() {
        let c = parse_conll(EU.lines().take(2).collect::<Vec<_>>().join("\n").as_str(), &en()).unwrap();
        let idx = build_entity_index(&[c]);
        assert_eq!(idx.keys().count(), 1);
        assert_eq!(
            idx.mentions(&en(), &EntityClass::new("ORG").unwrap()),
            &[vec!["EU".to_string()]]
        );
    }

    #[test]
    fn sample_split_contract() {
        let text: String = (0..1000).map(|i| format!("w{i} O\n\n")).collect();
        let corpus = parse_conll(&text, &en()).unwrap();
        assert_eq!(sample_split(&corpus, 1000, 3).unwrap(), corpus);
        for n in [100, 200, 400, 800] {
            let a = sample_split(&corpus, n, 11).unwrap();
            assert_eq!(a.len(), n);
            assert_eq!(a, sample_split(&corpus, n, 11).unwrap());
            let ids: Vec<usize> = a
                .sentences()
                .iter()
                .map(|s| s.tokens()[0][1..].parse().unwrap())
                .collect();
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
        assert_ne!(
            sample_split(&corpus, 100, 1).unwrap(),
            sample_split(&corpus, 100, 2).unwrap()
        );
        assert!(matches!(
            sample_split(&corpus, 1001, 1),
            Err(Error::Size { requested: 1001, available: 1000 })
        ));
    }
}
