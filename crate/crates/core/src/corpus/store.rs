use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Document, QrelEntry, StopwordList, Topic, Vocabulary};
use crate::jsonl;

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const VOCABULARY_FILE: &str = "vocabulary.tsv";
pub const TOPICS_FILE: &str = "topics.jsonl";
pub const QRELS_FILE: &str = "qrels.jsonl";
pub const STOPWORDS_FILE: &str = "stopwords.txt";

/// An ingested collection on disk: line-delimited JSON documents, topics and
/// qrels, a TSV vocabulary and the stopword list used at ingestion time.
#[derive(Debug, Clone)]
pub struct CorpusDir {
    root: PathBuf,
}

impl CorpusDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn write(
        &self,
        documents: &[Document],
        vocabulary: &Vocabulary,
        topics: &[Topic],
        qrels: &[QrelEntry],
        stopwords: &StopwordList,
    ) -> io::Result<()> {
        fs::create_dir_all(&self.root)?;
        jsonl::write_all(&self.path(DOCUMENTS_FILE), documents)?;
        let mut out = BufWriter::new(File::create(self.path(VOCABULARY_FILE))?);
        vocabulary.write_tsv(&mut out)?;
        out.flush()?;
        jsonl::write_all(&self.path(TOPICS_FILE), topics)?;
        jsonl::write_all(&self.path(QRELS_FILE), qrels)?;
        fs::write(self.path(STOPWORDS_FILE), stopwords.to_list())
    }

    pub fn documents(&self) -> io::Result<Vec<Document>> {
        jsonl::read_all(&self.path(DOCUMENTS_FILE))
    }

    /// Documents keyed by docno, plus their ingestion order.
    pub fn document_index(&self) -> io::Result<(HashMap<String, usize>, Vec<Document>)> {
        let docs = self.documents()?;
        let index = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.docno.clone(), i))
            .collect();
        Ok((index, docs))
    }

    pub fn vocabulary(&self) -> io::Result<Vocabulary> {
        Vocabulary::read_tsv(BufReader::new(File::open(self.path(VOCABULARY_FILE))?))
    }

    pub fn topics(&self) -> io::Result<Vec<Topic>> {
        jsonl::read_all(&self.path(TOPICS_FILE))
    }

    pub fn qrels(&self) -> io::Result<Vec<QrelEntry>> {
        jsonl::read_all(&self.path(QRELS_FILE))
    }

    pub fn stopwords(&self) -> io::Result<StopwordList> {
        StopwordList::parse(&fs::read_to_string(self.path(STOPWORDS_FILE))?)
    }
}
