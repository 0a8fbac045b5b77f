//! File-level pipeline stages shared by the command-line driver and the
//! end-to-end tests. Each stage reads the previous stage's output files.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aggregate::{summarize_log, AggregateError, FindingsReport};
use crate::corpus::{
    open_maybe_gzip, parse_qrels, parse_topics, parse_trec_documents, relevant_docnos, CorpusDir,
    Document, ParseError, SourceFilter, StopwordList, Vocabulary,
};
use crate::experiment::{assemble_tasks, load_tasks, read_responses, save_tasks, AssessmentTask, Exclusion};
use crate::lstm::{sample, Checkpoint, LstmError, Sample, SampleConfig, TrainConfig, TrainReport, Trainer};
use crate::synth::{content_terms, filter_terms, top_k_frequencies, WordCloud};
use crate::windowing::{
    build_char_vocab, build_training_sequence, check_sufficiency, relevant_documents, SufficiencyRow,
    TrainingSequence, WindowConfig, WindowError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{0}")]
    Invalid(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn parse_at(path: &Path) -> impl FnOnce(ParseError) -> PipelineError + '_ {
    move |source| PipelineError::Parse { path: path.to_path_buf(), source }
}

/// Collection tag of a document file: the leading letters of its file name,
/// uppercased (`cr93e1` gives `CR`, `fr940104.gz` gives `FR`). Falls back to
/// the parent directory name when the file name starts with a digit.
pub fn source_tag(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default();
    let prefix: String = name.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    if !prefix.is_empty() {
        return prefix.to_uppercase();
    }
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().to_uppercase())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub documents: usize,
    pub excluded: usize,
    pub duplicates: usize,
    pub topics: usize,
    pub qrels: usize,
    pub vocabulary: usize,
}

/// Parses document files, topics and qrels into a corpus directory. Documents
/// from excluded sources are dropped; repeated docnos keep the first copy.
pub fn ingest(
    doc_files: &[PathBuf],
    topics_file: &Path,
    qrels_file: &Path,
    exclude_sources: &[String],
    stopwords: &StopwordList,
    out: &Path,
) -> Result<IngestSummary, PipelineError> {
    let filter = SourceFilter::excluding(exclude_sources);
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    let (mut excluded, mut duplicates) = (0, 0);
    for path in doc_files {
        let reader = open_maybe_gzip(path).map_err(io_at(path))?;
        for doc in parse_trec_documents(reader, &source_tag(path)) {
            let doc = doc.map_err(parse_at(path))?;
            if !filter.accepts(&doc) {
                excluded += 1;
            } else if !seen.insert(doc.docno.clone()) {
                log::warn!("{}: duplicate docno {} skipped", path.display(), doc.docno);
                duplicates += 1;
            } else {
                docs.push(doc);
            }
        }
    }
    let topics = parse_topics(fs::File::open(topics_file).map_err(io_at(topics_file))?)
        .map_err(parse_at(topics_file))?;
    let qrels = parse_qrels(BufReader::new(fs::File::open(qrels_file).map_err(io_at(qrels_file))?))
        .map_err(parse_at(qrels_file))?;
    let vocab = Vocabulary::from_documents(&docs);
    CorpusDir::new(out)
        .write(&docs, &vocab, &topics, &qrels, stopwords)
        .map_err(io_at(out))?;
    Ok(IngestSummary {
        documents: docs.len(),
        excluded,
        duplicates,
        topics: topics.len(),
        qrels: qrels.len(),
        vocabulary: vocab.len(),
    })
}

pub const SUFFICIENCY_FILE: &str = "sufficiency.tsv";

pub fn training_file(dir: &Path, query_id: u32) -> PathBuf {
    dir.join(format!("{query_id}.txt"))
}

/// Builds training sequences for one query (or all) and writes one
/// `<query>.txt` per sufficient query plus `sufficiency.tsv`.
pub fn extract(
    corpus: &CorpusDir,
    query: Option<u32>,
    cfg: &WindowConfig,
    out: &Path,
) -> Result<Vec<SufficiencyRow>, PipelineError> {
    cfg.validate()?;
    let docs = corpus.documents().map_err(io_at(corpus.root()))?;
    let topics = corpus.topics().map_err(io_at(corpus.root()))?;
    let qrels = corpus.qrels().map_err(io_at(corpus.root()))?;
    let stop = corpus.stopwords().map_err(io_at(corpus.root()))?;
    let selected: Vec<_> = match query {
        Some(id) => {
            let t = topics
                .iter()
                .find(|t| t.id == id)
                .ok_or_else(|| PipelineError::Invalid(format!("unknown query {id}")))?;
            vec![t]
        }
        None => topics.iter().collect(),
    };
    fs::create_dir_all(out).map_err(io_at(out))?;
    let mut rows = Vec::new();
    for topic in selected {
        let relevant: HashSet<&str> = relevant_docnos(&qrels, topic.id).into_iter().collect();
        let rel_docs = relevant_documents(&docs, &relevant);
        let row = match build_training_sequence(topic, &rel_docs, &stop, cfg) {
            Ok(seq) => {
                let passed = check_sufficiency(&seq, cfg);
                if passed {
                    let path = training_file(out, topic.id);
                    fs::write(&path, seq.text()).map_err(io_at(&path))?;
                }
                SufficiencyRow { query_id: topic.id, chars: seq.content_len(), passed }
            }
            Err(WindowError::NoTrainingData { .. }) => SufficiencyRow { query_id: topic.id, chars: 0, passed: false },
            Err(e) => return Err(e.into()),
        };
        if !row.passed {
            log::warn!("query {} has {} training characters, below {}", row.query_id, row.chars, cfg.min_training_chars);
        }
        rows.push(row);
    }
    let mut tsv = String::from("query_id\tchars\tpassed\n");
    for r in &rows {
        tsv.push_str(&format!("{}\t{}\t{}\n", r.query_id, r.chars, if r.passed { "pass" } else { "fail" }));
    }
    let path = out.join(SUFFICIENCY_FILE);
    fs::write(&path, tsv).map_err(io_at(&path))?;
    Ok(rows)
}

/// Reads a `<query>.txt` training file written by [`extract`].
pub fn read_training_sequence(path: &Path) -> Result<TrainingSequence, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let query_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    Ok(TrainingSequence::from_text(query_id, &text))
}

/// Trains on a training file, writing a checkpoint to `out` every
/// `checkpoint_every` steps and at the end. Resumes from `out` when `resume`
/// is set and the file exists.
pub fn train_file(
    seq_path: &Path,
    cfg: &TrainConfig,
    out: &Path,
    checkpoint_every: Option<u64>,
    resume: bool,
) -> Result<TrainReport, PipelineError> {
    let seq = read_training_sequence(seq_path)?;
    let vocab = build_char_vocab(&seq)?;
    let data = vocab.encode(&seq.chars)?;
    let mut trainer = if resume && out.exists() {
        let ckpt = Checkpoint::<f32>::load(out)?;
        if ckpt.vocab != vocab {
            return Err(PipelineError::Invalid(format!(
                "{} was trained on a different character set",
                out.display()
            )));
        }
        log::info!("resuming from step {}", ckpt.step);
        Trainer::resume(ckpt, &data)?
    } else {
        Trainer::<f32>::new(vocab, &data, cfg.clone())?
    };
    trainer.run(checkpoint_every, |t| t.checkpoint().save(out))?;
    Ok(trainer.report())
}

pub fn sample_checkpoint(ckpt: &Path, cfg: &SampleConfig) -> Result<Sample, PipelineError> {
    let ckpt = Checkpoint::<f32>::load(ckpt)?;
    Ok(sample(&ckpt.params, &ckpt.vocab, cfg)?)
}

/// Cloud of generated text: tokens kept only if in the collection vocabulary
/// and not stopwords.
pub fn synthetic_cloud(doc_ref: &str, text: &str, vocab: &Vocabulary, stop: &StopwordList, k: usize) -> WordCloud {
    top_k_frequencies(doc_ref, &filter_terms(text, vocab, stop), k)
}

/// Cloud of a collection document, stopwords removed.
pub fn document_cloud(doc: &Document, stop: &StopwordList, k: usize) -> WordCloud {
    top_k_frequencies(&doc.docno, &content_terms(&doc.text, stop), k)
}

pub fn cloud_file(dir: &Path, doc_ref: &str) -> PathBuf {
    dir.join(format!("{doc_ref}.json"))
}

/// Writes `<docno>.json` clouds for the relevant documents of one query (or
/// all queries) that are present in the corpus. Returns the number written.
pub fn relevant_clouds(corpus: &CorpusDir, query: Option<u32>, k: usize, out: &Path) -> Result<usize, PipelineError> {
    let (index, docs) = corpus.document_index().map_err(io_at(corpus.root()))?;
    let qrels = corpus.qrels().map_err(io_at(corpus.root()))?;
    let stop = corpus.stopwords().map_err(io_at(corpus.root()))?;
    fs::create_dir_all(out).map_err(io_at(out))?;
    let wanted: HashSet<&str> = qrels
        .iter()
        .filter(|q| q.is_relevant() && query.is_none_or(|id| q.topic_id == id))
        .map(|q| q.docno.as_str())
        .collect();
    let mut written = 0;
    for docno in wanted {
        let Some(&i) = index.get(docno) else { continue };
        let path = cloud_file(out, docno);
        document_cloud(&docs[i], &stop, k).save(&path).map_err(io_at(&path))?;
        written += 1;
    }
    Ok(written)
}

/// All `*.json` clouds in `dir`, keyed by their `doc_ref`.
pub fn load_clouds(dir: &Path) -> Result<HashMap<String, WordCloud>, PipelineError> {
    let mut clouds = HashMap::new();
    for entry in fs::read_dir(dir).map_err(io_at(dir))? {
        let path = entry.map_err(io_at(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let cloud = WordCloud::load(&path).map_err(io_at(&path))?;
            clouds.insert(cloud.doc_ref.clone(), cloud);
        }
    }
    Ok(clouds)
}

/// Assembles tasks from a cloud directory and writes them as JSONL.
pub fn assemble(
    clouds_dir: &Path,
    topics_file: &Path,
    qrels_file: &Path,
    seed: u64,
    out: &Path,
) -> Result<(Vec<AssessmentTask>, Vec<Exclusion>), PipelineError> {
    let clouds = load_clouds(clouds_dir)?;
    let topics = parse_topics(fs::File::open(topics_file).map_err(io_at(topics_file))?)
        .map_err(parse_at(topics_file))?;
    let qrels = parse_qrels(BufReader::new(fs::File::open(qrels_file).map_err(io_at(qrels_file))?))
        .map_err(parse_at(qrels_file))?;
    let (tasks, excluded) = assemble_tasks(&topics, &qrels, &clouds, seed);
    for e in &excluded {
        log::warn!("query {} excluded: {}", e.query_id, e.reason);
    }
    save_tasks(out, &tasks).map_err(io_at(out))?;
    Ok((tasks, excluded))
}

/// Replays a response log against its tasks and writes the findings report.
pub fn aggregate(
    responses: &Path,
    tasks: &Path,
    min_seconds: f64,
    out: &Path,
) -> Result<FindingsReport, PipelineError> {
    let tasks = load_tasks(tasks).map_err(io_at(tasks))?;
    let records = read_responses(responses).map_err(io_at(responses))?;
    let report = summarize_log(&tasks, &records, min_seconds)?;
    report.write(out).map_err(io_at(out))?;
    Ok(report)
}
