//! Per-query average rank of the synthetic cloud, binning, and the findings
//! report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{validate_response, AssessmentTask, ResponseRecord, UserResponse};
use crate::synth::dominance_ratio;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("task {0} has no valid responses")]
    NoValidResponses(String),
    #[error("response to {response} passed for task {task}")]
    TaskMismatch { task: String, response: String },
    #[error("response from {0} does not rank every slot exactly once")]
    MalformedRanking(String),
    #[error("average rank {0} outside [1, 4]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRankSummary {
    pub query_id: u32,
    pub n_valid: usize,
    pub avg_rank: f64,
    /// rank (1..=4) -> number of assessors who gave it
    pub rank_counts: BTreeMap<usize, usize>,
}

/// Mean 1-based rank of the synthetic slot over `responses`, which must all
/// be valid answers to `task`.
pub fn average_rank(task: &AssessmentTask, responses: &[&UserResponse]) -> Result<QueryRankSummary, AggregateError> {
    if responses.is_empty() {
        return Err(AggregateError::NoValidResponses(task.task_id.clone()));
    }
    let mut rank_counts = BTreeMap::new();
    for r in responses {
        if r.task_id != task.task_id {
            return Err(AggregateError::TaskMismatch {
                task: task.task_id.clone(),
                response: r.task_id.clone(),
            });
        }
        if !r.is_permutation() {
            return Err(AggregateError::MalformedRanking(r.user_id.clone()));
        }
        let rank = r.rank_of(task.synthetic_slot).expect("permutation holds every slot");
        *rank_counts.entry(rank).or_insert(0) += 1;
    }
    let total: usize = rank_counts.iter().map(|(rank, n)| rank * n).sum();
    Ok(QueryRankSummary {
        query_id: task.query_id,
        n_valid: responses.len(),
        avg_rank: total as f64 / responses.len() as f64,
        rank_counts,
    })
}

/// Closed-upper bins: (.., 1.5] -> 1, (1.5, 2.5] -> 2, (2.5, 3.5] -> 3, else 4.
pub fn bin_rank(avg_rank: f64) -> Result<u8, AggregateError> {
    if !(1.0..=4.0).contains(&avg_rank) {
        return Err(AggregateError::OutOfRange(avg_rank));
    }
    Ok(if avg_rank <= 1.5 {
        1
    } else if avg_rank <= 2.5 {
        2
    } else if avg_rank <= 3.5 {
        3
    } else {
        4
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankHistogram {
    /// `bins[i]` counts queries in bin `i + 1`.
    pub bins: [usize; 4],
}

impl RankHistogram {
    pub fn from_averages(averages: impl IntoIterator<Item = f64>) -> Result<Self, AggregateError> {
        let mut bins = [0; 4];
        for avg in averages {
            bins[usize::from(bin_rank(avg)?) - 1] += 1;
        }
        Ok(Self { bins })
    }

    pub fn total(&self) -> usize {
        self.bins.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedQuery {
    pub query_id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsReport {
    pub summaries: Vec<QueryRankSummary>,
    pub histogram: RankHistogram,
    /// Unweighted mean of per-query averages; `None` without summaries.
    pub mean_avg_rank: Option<f64>,
    /// Synthetic-cloud dominance ratio for queries in the bottom bin.
    pub bottom_bin_dominance: Vec<(u32, Option<f64>)>,
    pub excluded: Vec<ExcludedQuery>,
}

/// Builds the findings from per-query summaries. `tasks` supplies the
/// synthetic clouds for the bottom-bin dominance diagnostic.
pub fn report(
    mut summaries: Vec<QueryRankSummary>,
    tasks: &[AssessmentTask],
    excluded: Vec<ExcludedQuery>,
) -> Result<FindingsReport, AggregateError> {
    if summaries.is_empty() {
        log::warn!("no queries to report on");
    }
    summaries.sort_by_key(|s| s.query_id);
    let histogram = RankHistogram::from_averages(summaries.iter().map(|s| s.avg_rank))?;
    let mean_avg_rank = (!summaries.is_empty())
        .then(|| summaries.iter().map(|s| s.avg_rank).sum::<f64>() / summaries.len() as f64);
    let by_query: HashMap<u32, &AssessmentTask> = tasks.iter().map(|t| (t.query_id, t)).collect();
    let mut bottom_bin_dominance = Vec::new();
    for s in &summaries {
        if bin_rank(s.avg_rank)? == 4 {
            let ratio = by_query
                .get(&s.query_id)
                .and_then(|t| dominance_ratio(t.cloud(t.synthetic_slot)));
            bottom_bin_dominance.push((s.query_id, ratio));
        }
    }
    Ok(FindingsReport {
        summaries,
        histogram,
        mean_avg_rank,
        bottom_bin_dominance,
        excluded,
    })
}

/// Re-validates every logged response against its task and summarizes each
/// task's valid ones. Tasks without valid responses are excluded.
pub fn summarize_log(
    tasks: &[AssessmentTask],
    records: &[ResponseRecord],
    min_seconds: f64,
) -> Result<FindingsReport, AggregateError> {
    let mut per_task: HashMap<&str, Vec<&UserResponse>> = HashMap::new();
    let by_id: HashMap<&str, &AssessmentTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    for record in records {
        let r = &record.response;
        let Some(task) = by_id.get(r.task_id.as_str()) else {
            log::warn!("response for unknown task {} ignored", r.task_id);
            continue;
        };
        let valid = validate_response(task, r, min_seconds).is_ok_and(|v| v.valid);
        if valid {
            per_task.entry(task.task_id.as_str()).or_default().push(r);
        }
    }
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    for task in tasks {
        match per_task.get(task.task_id.as_str()) {
            Some(valid) => summaries.push(average_rank(task, valid)?),
            None => excluded.push(ExcludedQuery {
                query_id: task.query_id,
                reason: "no valid responses".into(),
            }),
        }
    }
    report(summaries, tasks, excluded)
}

impl FindingsReport {
    pub fn per_query_csv(&self) -> String {
        let mut out = String::from("query_id,n_valid,avg_rank,bin,rank1,rank2,rank3,rank4\n");
        for s in &self.summaries {
            let count = |r| s.rank_counts.get(&r).copied().unwrap_or(0);
            let bin = bin_rank(s.avg_rank).expect("summaries are in range");
            writeln!(
                out,
                "{},{},{:.4},{},{},{},{},{}",
                s.query_id,
                s.n_valid,
                s.avg_rank,
                bin,
                count(1),
                count(2),
                count(3),
                count(4)
            )
            .expect("write to string");
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin,queries\n");
        for (i, n) in self.histogram.bins.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, n).expect("write to string");
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "queries summarized: {}", self.summaries.len()).unwrap();
        match self.mean_avg_rank {
            Some(mean) => writeln!(w, "mean average rank of the synthetic cloud: {mean:.2}").unwrap(),
            None => writeln!(w, "mean average rank of the synthetic cloud: n/a").unwrap(),
        }
        let [b1, b2, b3, b4] = self.histogram.bins;
        writeln!(w, "binned averages: 1:{b1} 2:{b2} 3:{b3} 4:{b4}").unwrap();
        if !self.bottom_bin_dominance.is_empty() {
            writeln!(w, "bottom-bin dominance (top/median term frequency):").unwrap();
            for (q, ratio) in &self.bottom_bin_dominance {
                match ratio {
                    Some(r) => writeln!(w, "  query {q}: {r:.2}").unwrap(),
                    None => writeln!(w, "  query {q}: empty cloud").unwrap(),
                }
            }
        }
        if !self.excluded.is_empty() {
            writeln!(w, "excluded queries:").unwrap();
            for e in &self.excluded {
                writeln!(w, "  query {}: {}", e.query_id, e.reason).unwrap();
            }
        }
        out
    }

    /// Writes `per_query.csv`, `histogram.csv`, `summary.txt` and `report.json`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("per_query.csv"), self.per_query_csv())?;
        fs::write(dir.join("histogram.csv"), self.histogram_csv())?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
