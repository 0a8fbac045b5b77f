//! Synthetic relevant documents for ad-hoc retrieval topics.
//!
//! For every topic a small character-level LSTM is trained on context windows
//! cut out of the topic's known relevant documents. Sampling that model until it
//! emits an end-of-document symbol yields one synthetic document, which is then
//! compared against real relevant documents in a wordcloud ranking experiment.
//!
//! The crate is laid out along the pipeline:
//!
//! * [`corpus`]: TREC document, topic and qrels parsing; tokenizer, vocabulary, stopwords.
//! * [`windowing`]: query-term context windows and the EOF-separated training sequence.
//! * [`lstm`]: the language model, truncated BPTT training, sampling and gradient checking.
//! * [`synth`]: filtering sampled text and building top-k wordclouds.
//! * [`experiment`]: assessment task assembly, response validation and the task service.
//! * [`aggregate`]: average ranks, binning and the findings report.

pub mod aggregate;
pub mod corpus;
pub mod experiment;
pub mod lstm;
pub mod pipeline;
pub mod synth;
pub mod windowing;

mod jsonl;

pub use aggregate::{average_rank, bin_rank, report, FindingsReport, QueryRankSummary, RankHistogram};
pub use corpus::{
    parse_qrels, parse_topics, parse_trec_documents, tokenize, Document, QrelEntry, StopwordList,
    Topic, Vocabulary,
};
pub use experiment::{AssessmentTask, RotationSchedule, Slot, UserResponse, ValidationResult};
pub use lstm::{LstmParams, LstmState, SampleConfig, TrainConfig};
pub use synth::{SyntheticDocument, WordCloud};
pub use windowing::{CharVocab, TrainingSequence, WindowConfig, EOF_CHAR};
