//! The ranking experiment: per-query tasks showing three relevant wordclouds
//! and the synthetic one in a 2×2 grid, response validation, and the task
//! service that hands tasks to assessors.

mod service;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{relevant_docnos, tokenize, QrelEntry, Topic};
use crate::synth::{synthetic_ref, WordCloud};

pub use service::{router, serve, Progress, ServiceConfig, SubmitError, TaskProgress, TaskService};
pub use store::{load_tasks, read_responses, save_tasks, ResponseRecord};

/// Number of relevant documents shown next to the synthetic one.
pub const RELEVANT_PER_TASK: usize = 3;

/// Grid labels: A top-left, B top-right, C bottom-left, D bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
    C,
    D,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::A, Slot::B, Slot::C, Slot::D];

    /// `(row, col)` in the grid.
    pub fn cell(self) -> (u8, u8) {
        match self {
            Slot::A => (0, 0),
            Slot::B => (0, 1),
            Slot::C => (1, 0),
            Slot::D => (1, 1),
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("query {query_id} has {found} eligible relevant documents, need {needed}")]
    NotEnoughRelevant {
        query_id: u32,
        found: usize,
        needed: usize,
    },
    #[error("wordcloud {0} is empty")]
    EmptyCloud(String),
    #[error("query {0} is not in the rotation schedule")]
    Unscheduled(u32),
    #[error("a task needs {RELEVANT_PER_TASK} distinct relevant documents, got {0}")]
    WrongRelevantCount(usize),
    #[error("unknown task {0}")]
    UnknownTask(String),
}

/// Draws `n` of the query's relevant documents uniformly without replacement.
/// Only docnos accepted by `eligible` (e.g. those with a non-empty cloud) count.
pub fn select_relevant_docs(
    qrels: &[QrelEntry],
    query_id: u32,
    n: usize,
    rng_seed: u64,
    eligible: impl Fn(&str) -> bool,
) -> Result<Vec<String>, ExperimentError> {
    let pool: Vec<&str> = relevant_docnos(qrels, query_id)
        .into_iter()
        .filter(|d| eligible(d))
        .collect();
    if pool.len() < n {
        return Err(ExperimentError::NotEnoughRelevant {
            query_id,
            found: pool.len(),
            needed: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(rng_seed, query_id));
    Ok(rand::seq::index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect())
}

fn mix(seed: u64, query_id: u32) -> u64 {
    seed ^ (u64::from(query_id)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Synthetic-cloud position per query.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub positions: BTreeMap<u32, Slot>,
}

impl RotationSchedule {
    pub fn position(&self, query_id: u32) -> Option<Slot> {
        self.positions.get(&query_id).copied()
    }

    pub fn counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for slot in self.positions.values() {
            counts[*slot as usize] += 1;
        }
        counts
    }
}

/// Cycles A, B, C, D over a seed-shuffled query order, so position counts
/// differ by at most one.
pub fn assign_positions(query_ids: &[u32], rng_seed: u64) -> RotationSchedule {
    let mut order: Vec<u32> = query_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    order.shuffle(&mut rng);
    RotationSchedule {
        positions: order
            .into_iter()
            .enumerate()
            .map(|(i, q)| (q, Slot::ALL[i % 4]))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentTask {
    pub task_id: String,
    pub query_id: u32,
    pub query_text: String,
    pub slots: BTreeMap<Slot, WordCloud>,
    /// Never sent to assessors.
    pub synthetic_slot: Slot,
}

impl AssessmentTask {
    pub fn cloud(&self, slot: Slot) -> &WordCloud {
        &self.slots[&slot]
    }

    pub fn relevant_docnos(&self) -> Vec<&str> {
        self.slots
            .iter()
            .filter(|(s, _)| **s != self.synthetic_slot)
            .map(|(_, c)| c.doc_ref.as_str())
            .collect()
    }

    /// What assessors see: query text and the four clouds by grid cell,
    /// without document references or the synthetic label.
    pub fn payload(&self) -> TaskPayload {
        TaskPayload {
            task_id: self.task_id.clone(),
            query_text: self.query_text.clone(),
            clouds: self
                .slots
                .iter()
                .map(|(slot, cloud)| {
                    let (row, col) = slot.cell();
                    (
                        *slot,
                        PayloadCloud {
                            row,
                            col,
                            entries: cloud
                                .entries
                                .iter()
                                .map(|e| PayloadEntry {
                                    term: e.term.clone(),
                                    freq: e.freq,
                                    weight: e.weight,
                                })
                                .collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    pub query_text: String,
    pub clouds: BTreeMap<Slot, PayloadCloud>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadCloud {
    pub row: u8,
    pub col: u8,
    pub entries: Vec<PayloadEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub term: String,
    pub freq: u64,
    pub weight: f64,
}

pub fn task_id(query_id: u32) -> String {
    format!("task-{query_id}")
}

/// Places the synthetic cloud at the scheduled slot and the relevant clouds,
/// shuffled with `rng_seed`, in the remaining slots.
pub fn build_task(
    query: &Topic,
    relevant: Vec<WordCloud>,
    synthetic: WordCloud,
    schedule: &RotationSchedule,
    rng_seed: u64,
) -> Result<AssessmentTask, ExperimentError> {
    let distinct: BTreeSet<&str> = relevant.iter().map(|c| c.doc_ref.as_str()).collect();
    if relevant.len() != RELEVANT_PER_TASK || distinct.len() != RELEVANT_PER_TASK {
        return Err(ExperimentError::WrongRelevantCount(distinct.len()));
    }
    if let Some(empty) = relevant.iter().chain([&synthetic]).find(|c| c.is_empty()) {
        return Err(ExperimentError::EmptyCloud(empty.doc_ref.clone()));
    }
    let synthetic_slot = schedule
        .position(query.id)
        .ok_or(ExperimentError::Unscheduled(query.id))?;

    let mut rest = relevant;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(rng_seed, query.id));
    rest.shuffle(&mut rng);
    let mut slots = BTreeMap::new();
    slots.insert(synthetic_slot, synthetic);
    let free = Slot::ALL.into_iter().filter(|s| *s != synthetic_slot);
    for (slot, cloud) in free.zip(rest) {
        slots.insert(slot, cloud);
    }
    Ok(AssessmentTask {
        task_id: task_id(query.id),
        query_id: query.id,
        query_text: query.title.clone(),
        slots,
        synthetic_slot,
    })
}

/// Why a query produced no task.
#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub query_id: u32,
    pub reason: String,
}

/// Builds one task per topic that has a synthetic cloud (`synthetic-<id>`)
/// and at least three relevant documents with non-empty clouds.
pub fn assemble_tasks(
    topics: &[Topic],
    qrels: &[QrelEntry],
    clouds: &HashMap<String, WordCloud>,
    rng_seed: u64,
) -> (Vec<AssessmentTask>, Vec<Exclusion>) {
    let mut excluded = Vec::new();
    let mut chosen = Vec::new();
    for topic in topics {
        let synth_ref = synthetic_ref(topic.id);
        let Some(synthetic) = clouds.get(&synth_ref).filter(|c| !c.is_empty()) else {
            excluded.push(Exclusion {
                query_id: topic.id,
                reason: "no non-empty synthetic wordcloud".into(),
            });
            continue;
        };
        let eligible = |d: &str| clouds.get(d).is_some_and(|c| !c.is_empty());
        match select_relevant_docs(qrels, topic.id, RELEVANT_PER_TASK, rng_seed, eligible) {
            Ok(docnos) => chosen.push((topic, synthetic, docnos)),
            Err(e) => excluded.push(Exclusion {
                query_id: topic.id,
                reason: e.to_string(),
            }),
        }
    }
    let ids: Vec<u32> = chosen.iter().map(|(t, _, _)| t.id).collect();
    let schedule = assign_positions(&ids, rng_seed);
    let mut tasks = Vec::new();
    for (topic, synthetic, docnos) in chosen {
        let relevant = docnos.iter().map(|d| clouds[d].clone()).collect();
        match build_task(topic, relevant, synthetic.clone(), &schedule, rng_seed) {
            Ok(task) => tasks.push(task),
            Err(e) => excluded.push(Exclusion {
                query_id: topic.id,
                reason: e.to_string(),
            }),
        }
    }
    (tasks, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResponse {
    pub task_id: String,
    pub user_id: String,
    /// Most relevant first.
    pub ranking: Vec<Slot>,
    pub understood: bool,
    #[serde(default)]
    pub comment: Option<String>,
    pub salient_terms: [String; 2],
    pub duration_seconds: f64,
}

impl UserResponse {
    pub fn is_permutation(&self) -> bool {
        let distinct: BTreeSet<Slot> = self.ranking.iter().copied().collect();
        self.ranking.len() == 4 && distinct.len() == 4
    }

    /// 1-based rank given to `slot`.
    pub fn rank_of(&self, slot: Slot) -> Option<usize> {
        self.ranking.iter().position(|s| *s == slot).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvalidReason {
    MalformedRanking,
    /// A typed salient term is blank or does not appear in the top-ranked cloud.
    SalientTerm { term: String },
    UnderTime { seconds: f64, min_seconds: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub reasons: Vec<InvalidReason>,
}

impl ValidationResult {
    fn from_reasons(reasons: Vec<InvalidReason>) -> Self {
        Self {
            valid: reasons.is_empty(),
            reasons,
        }
    }
}

/// Checks the ranking is a permutation, that both salient terms (lowercased
/// and tokenized) appear in the top-ranked cloud, and that the assessor spent
/// at least `min_seconds`. `understood == false` is recorded, not rejected.
pub fn validate_response(
    task: &AssessmentTask,
    response: &UserResponse,
    min_seconds: f64,
) -> Result<ValidationResult, ExperimentError> {
    if response.task_id != task.task_id {
        return Err(ExperimentError::UnknownTask(response.task_id.clone()));
    }
    let mut reasons = Vec::new();
    if !response.is_permutation() {
        reasons.push(InvalidReason::MalformedRanking);
    }
    let top = response.ranking.first().map(|s| task.cloud(*s));
    for typed in &response.salient_terms {
        let tokens = tokenize(typed);
        let present = top.is_some_and(|cloud| !tokens.is_empty() && tokens.iter().all(|t| cloud.contains(t)));
        if !present {
            reasons.push(InvalidReason::SalientTerm { term: typed.clone() });
        }
    }
    // NaN durations fail too.
    if response.duration_seconds.partial_cmp(&min_seconds).is_none_or(|o| o.is_lt()) {
        reasons.push(InvalidReason::UnderTime {
            seconds: response.duration_seconds,
            min_seconds,
        });
    }
    Ok(ValidationResult::from_reasons(reasons))
}
