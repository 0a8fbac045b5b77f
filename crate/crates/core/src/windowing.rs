//! Query-term context windows and the per-query character training sequence.
//!
//! Every occurrence of a (non-stopword) query term in a relevant document
//! contributes the terms within `radius` positions of it. Overlapping and
//! adjacent windows are merged, the surviving spans are rendered back to
//! lowercased tokens joined by single spaces, and each contributing document
//! is terminated by [`EOF_CHAR`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Document, StopwordList, Topic};

/// Reserved document separator. Scrubbed from corpus text at ingestion.
pub const EOF_CHAR: char = '\u{3}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub radius: usize,
    pub min_training_chars: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            radius: 30,
            min_training_chars: 2000,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("no training data for query {query_id}")]
    NoTrainingData { query_id: u32 },
    #[error("invalid window config: {0}")]
    InvalidConfig(&'static str),
    #[error("character {0:?} is not in the vocabulary")]
    UnknownChar(char),
    #[error("index {0} is outside the vocabulary")]
    UnknownIndex(usize),
    #[error("training sequence is empty")]
    EmptySequence,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), WindowError> {
        if self.radius == 0 {
            return Err(WindowError::InvalidConfig("radius must be at least 1"));
        }
        if self.min_training_chars == 0 {
            return Err(WindowError::InvalidConfig("min_training_chars must be at least 1"));
        }
        Ok(())
    }
}

/// Title terms with stopwords removed.
pub fn query_terms(topic: &Topic, stopwords: &StopwordList) -> BTreeSet<String> {
    tokenize(&topic.title)
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Term-index spans (half-open) around every query-term occurrence, merged
/// where they overlap or touch. Sorted and pairwise disjoint.
pub fn extract_windows<S: AsRef<str>>(
    doc_terms: &[S],
    query_terms: &BTreeSet<String>,
    radius: usize,
) -> Vec<Range<usize>> {
    let n = doc_terms.len();
    let mut spans: Vec<Range<usize>> = Vec::new();
    for (i, term) in doc_terms.iter().enumerate() {
        if !query_terms.contains(term.as_ref()) {
            continue;
        }
        let window = i.saturating_sub(radius)..(i + radius + 1).min(n);
        match spans.last_mut() {
            Some(last) if window.start <= last.end => last.end = last.end.max(window.end),
            _ => spans.push(window),
        }
    }
    spans
}

/// One query's EOF-separated training text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSequence {
    pub query_id: u32,
    pub chars: Vec<char>,
    /// Character range of each contributing document's body, EOF excluded.
    pub doc_spans: Vec<Range<usize>>,
}

impl TrainingSequence {
    /// Rebuilds a sequence from its text form; document spans are recovered
    /// from the EOF separators. Trailing text without an EOF is terminated.
    pub fn from_text(query_id: u32, text: &str) -> Self {
        let mut chars: Vec<char> = text.chars().collect();
        if chars.last().is_some_and(|&c| c != EOF_CHAR) {
            chars.push(EOF_CHAR);
        }
        let mut doc_spans = Vec::new();
        let mut start = 0;
        for (i, &c) in chars.iter().enumerate() {
            if c == EOF_CHAR {
                doc_spans.push(start..i);
                start = i + 1;
            }
        }
        Self {
            query_id,
            chars,
            doc_spans,
        }
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    /// Characters excluding EOF separators.
    pub fn content_len(&self) -> usize {
        self.chars.len() - self.doc_spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// Windows of one document rendered as lowercased tokens joined by spaces.
pub fn render_windows(text: &str, query_terms: &BTreeSet<String>, radius: usize) -> String {
    let terms = tokenize(text);
    extract_windows(&terms, query_terms, radius)
        .into_iter()
        .map(|span| terms[span].join(" "))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Concatenates the rendered windows of `rel_docs` (in the given order), each
/// contributing document followed by one EOF symbol.
pub fn build_training_sequence(
    query: &Topic,
    rel_docs: &[&Document],
    stopwords: &StopwordList,
    cfg: &WindowConfig,
) -> Result<TrainingSequence, WindowError> {
    cfg.validate()?;
    let terms = query_terms(query, stopwords);
    let mut chars = Vec::new();
    let mut doc_spans = Vec::new();
    for doc in rel_docs {
        let rendered = render_windows(&doc.text, &terms, cfg.radius);
        if rendered.is_empty() {
            continue;
        }
        let start = chars.len();
        chars.extend(rendered.chars());
        doc_spans.push(start..chars.len());
        chars.push(EOF_CHAR);
    }
    if doc_spans.is_empty() {
        return Err(WindowError::NoTrainingData { query_id: query.id });
    }
    Ok(TrainingSequence {
        query_id: query.id,
        chars,
        doc_spans,
    })
}

/// Inclusive threshold on non-EOF characters.
pub fn check_sufficiency(seq: &TrainingSequence, cfg: &WindowConfig) -> bool {
    seq.content_len() >= cfg.min_training_chars
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyRow {
    pub query_id: u32,
    pub chars: usize,
    pub passed: bool,
}

/// Character table of a training sequence: distinct characters by code point,
/// then the EOF symbol as the last index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl CharVocab {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let distinct: BTreeSet<char> = chars.into_iter().filter(|&c| c != EOF_CHAR).collect();
        let mut chars: Vec<char> = distinct.into_iter().collect();
        chars.push(EOF_CHAR);
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    /// Always false: the EOF symbol is present even for empty input.
    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn eof(&self) -> usize {
        self.chars.len() - 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn encode(&self, chars: &[char]) -> Result<Vec<usize>, WindowError> {
        chars
            .iter()
            .map(|&c| self.index_of(c).ok_or(WindowError::UnknownChar(c)))
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Result<Vec<char>, WindowError> {
        indices
            .iter()
            .map(|&i| self.char_at(i).ok_or(WindowError::UnknownIndex(i)))
            .collect()
    }
}

impl TryFrom<Vec<char>> for CharVocab {
    type Error = WindowError;

    fn try_from(chars: Vec<char>) -> Result<Self, Self::Error> {
        let vocab = CharVocab::from_chars(chars.iter().copied());
        // only accept tables that are already in canonical order
        if vocab.chars != chars {
            return Err(WindowError::InvalidConfig("char table is not canonical"));
        }
        Ok(vocab)
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(vocab: CharVocab) -> Self {
        vocab.chars
    }
}

pub fn build_char_vocab(seq: &TrainingSequence) -> Result<CharVocab, WindowError> {
    if seq.is_empty() {
        return Err(WindowError::EmptySequence);
    }
    Ok(CharVocab::from_chars(seq.chars.iter().copied()))
}

/// Documents whose docno is in `relevant`, in store order.
pub fn relevant_documents<'a>(
    docs: &'a [Document],
    relevant: &HashSet<&str>,
) -> Vec<&'a Document> {
    docs.iter()
        .filter(|d| relevant.contains(d.docno.as_str()))
        .collect()
}
