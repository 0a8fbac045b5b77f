//! Test-collection ingestion: TREC SGML documents, title-only topics, qrels,
//! plus the tokenizer, collection vocabulary and stopword list used everywhere
//! downstream.

mod qrels;
mod store;
mod text;
mod topics;
mod trec;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use qrels::{parse_qrels, relevant_docnos};
pub use store::{CorpusDir, DOCUMENTS_FILE, QRELS_FILE, STOPWORDS_FILE, TOPICS_FILE, VOCABULARY_FILE};
pub use text::{tokenize, SourceFilter, StopwordList, Vocabulary};
pub use topics::parse_topics;
pub use trec::{open_maybe_gzip, parse_trec_documents, TrecDocuments, DEFAULT_CONTENT_TAGS};

/// One `<DOC>` element of a TREC collection file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub docno: String,
    /// Collection-file tag, e.g. `FT` or `CR`.
    pub source: String,
    pub text: String,
}

/// A title-only TREC topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: u32,
    pub title: String,
}

/// One line of a qrels file. `relevance > 0` means relevant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelEntry {
    pub topic_id: u32,
    pub docno: String,
    pub relevance: u32,
}

impl QrelEntry {
    pub fn is_relevant(&self) -> bool {
        self.relevance > 0
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("unclosed DOC at offset {offset}")]
    UnclosedDoc { offset: u64 },
    #[error("nested DOC at offset {offset}")]
    NestedDoc { offset: u64 },
    #[error("unexpected </DOC> at offset {offset}")]
    UnexpectedDocClose { offset: u64 },
    #[error("missing DOCNO in DOC starting at offset {offset}")]
    MissingDocno { offset: u64 },
    #[error("topic missing num (topic #{index})")]
    TopicMissingNum { index: usize },
    #[error("topic missing title (topic #{index})")]
    TopicMissingTitle { index: usize },
    #[error("topic #{index}: {message}")]
    Topic { index: usize, message: String },
    #[error("qrels line {line}: {message}")]
    Qrels { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}
