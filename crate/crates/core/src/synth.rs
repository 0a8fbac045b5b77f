//! Turning sampled text into a synthetic document, and documents into
//! top-k term-frequency wordclouds.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, StopwordList, Vocabulary};

/// Number of terms shown per wordcloud.
pub const CLOUD_SIZE: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint: String,
    pub sample_seed: u64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDocument {
    pub query_id: u32,
    pub raw_text: String,
    pub filtered_terms: Vec<String>,
    pub provenance: Provenance,
}

impl SyntheticDocument {
    pub fn new(
        query_id: u32,
        raw_text: String,
        vocab: &Vocabulary,
        stop: &StopwordList,
        provenance: Provenance,
    ) -> Self {
        let filtered_terms = filter_terms(&raw_text, vocab, stop);
        if filtered_terms.is_empty() {
            log::warn!("synthetic document for query {query_id} has no in-vocabulary terms");
        }
        Self {
            query_id,
            raw_text,
            filtered_terms,
            provenance,
        }
    }

    pub fn doc_ref(&self) -> String {
        synthetic_ref(self.query_id)
    }
}

pub fn synthetic_ref(query_id: u32) -> String {
    format!("synthetic-{query_id}")
}

/// Tokenizes, then drops stopwords and terms unknown to the collection.
/// Order is preserved.
pub fn filter_terms(text: &str, vocab: &Vocabulary, stop: &StopwordList) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !stop.contains(t) && vocab.contains(t))
        .collect()
}

/// Tokenized body with stopwords removed, as used for relevant-document clouds.
pub fn content_terms(text: &str, stop: &StopwordList) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !stop.contains(t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub term: String,
    pub freq: u64,
    /// `freq / max freq`, in (0, 1].
    pub weight: f64,
}

/// The JSON interchange object consumed by the assessment UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloud {
    pub doc_ref: String,
    pub entries: Vec<CloudEntry>,
}

impl WordCloud {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.entries.iter().any(|e| e.term == term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    /// Expands the cloud back into a term list (each term repeated `freq` times).
    pub fn to_terms(&self) -> Vec<String> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.term.clone(), e.freq as usize))
            .collect()
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// The `k` most frequent terms, ties broken by term. Weights are normalized by
/// the top frequency.
pub fn top_k_frequencies<S: AsRef<str>>(doc_ref: &str, terms: &[S], k: usize) -> WordCloud {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in terms {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    if ranked.is_empty() {
        log::warn!("wordcloud for {doc_ref} is empty");
    }
    let max = ranked.first().map_or(1, |e| e.1) as f64;
    WordCloud {
        doc_ref: doc_ref.to_string(),
        entries: ranked
            .into_iter()
            .map(|(term, freq)| CloudEntry {
                term: term.to_string(),
                freq,
                weight: freq as f64 / max,
            })
            .collect(),
    }
}

/// Top frequency over the median entry frequency. High values flag clouds
/// where one or two terms dwarf the rest. `None` for an empty cloud.
pub fn dominance_ratio(cloud: &WordCloud) -> Option<f64> {
    let mut freqs: Vec<u64> = cloud.entries.iter().map(|e| e.freq).collect();
    if freqs.is_empty() {
        return None;
    }
    freqs.sort_unstable();
    let n = freqs.len();
    let median = if n % 2 == 1 {
        freqs[n / 2] as f64
    } else {
        (freqs[n / 2 - 1] + freqs[n / 2]) as f64 / 2.0
    };
    Some(freqs[n - 1] as f64 / median)
}
