//! In-memory task service with an append-only JSONL response log, and the
//! HTTP routes the assessment UI talks to.

use std::collections::{HashMap, HashSet};
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{append_response, read_responses, ResponseRecord};
use super::{validate_response, AssessmentTask, TaskPayload, UserResponse, ValidationResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub min_seconds: f64,
    /// Valid responses wanted per task; full tasks accept no more.
    pub target_responses: usize,
    /// Response log. `None` keeps responses in memory only.
    pub log_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            min_seconds: 20.0,
            target_responses: 10,
            log_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("user {user_id} already answered {task_id}")]
    Duplicate { task_id: String, user_id: String },
    #[error("task {0} already has its target number of valid responses")]
    TaskComplete(String),
    #[error("could not persist response: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub task_id: String,
    pub query_id: u32,
    pub valid: usize,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub target_responses: usize,
    pub complete_tasks: usize,
    pub total_valid: usize,
    pub total_invalid: usize,
    pub tasks: Vec<TaskProgress>,
}

#[derive(Default)]
struct Counts {
    valid: Vec<usize>,
    invalid: Vec<usize>,
    /// (task, user) pairs handed out or answered.
    seen: HashSet<(usize, String)>,
    answered: HashSet<(usize, String)>,
    records: Vec<ResponseRecord>,
}

pub struct TaskService {
    tasks: Vec<AssessmentTask>,
    by_id: HashMap<String, usize>,
    cfg: ServiceConfig,
    state: Mutex<Counts>,
}

impl TaskService {
    /// Creates the service, replaying the response log if one exists.
    /// Replayed responses are validated again under the current config.
    pub fn open(tasks: Vec<AssessmentTask>, cfg: ServiceConfig) -> io::Result<Self> {
        let by_id = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.task_id.clone(), i))
            .collect();
        let state = Counts {
            valid: vec![0; tasks.len()],
            invalid: vec![0; tasks.len()],
            ..Counts::default()
        };
        let service = Self {
            tasks,
            by_id,
            cfg,
            state: Mutex::new(state),
        };
        if let Some(path) = &service.cfg.log_path {
            let records = read_responses(path)?;
            let mut state = service.lock();
            for record in records {
                match service.apply(&mut state, record.response) {
                    Ok(_) => {}
                    Err(e) => log::warn!("skipping logged response: {e}"),
                }
            }
        }
        Ok(service)
    }

    pub fn tasks(&self) -> &[AssessmentTask] {
        &self.tasks
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Counts> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The open task with the fewest valid responses that `user_id` has not
    /// seen, or `None` when nothing is left for them.
    pub fn next_task(&self, user_id: &str) -> Option<TaskPayload> {
        let mut state = self.lock();
        let pick = (0..self.tasks.len())
            .filter(|&i| state.valid[i] < self.cfg.target_responses)
            .filter(|&i| !state.seen.contains(&(i, user_id.to_string())))
            .min_by_key(|&i| (state.valid[i], state.invalid[i], i))?;
        state.seen.insert((pick, user_id.to_string()));
        Some(self.tasks[pick].payload())
    }

    /// Validates and records a response. Duplicates and responses to full
    /// tasks are refused; invalid responses are recorded but do not count.
    pub fn submit(&self, response: UserResponse) -> Result<ValidationResult, SubmitError> {
        let mut state = self.lock();
        self.apply(&mut state, response)
    }

    fn apply(&self, state: &mut Counts, response: UserResponse) -> Result<ValidationResult, SubmitError> {
        let &idx = self
            .by_id
            .get(&response.task_id)
            .ok_or_else(|| SubmitError::UnknownTask(response.task_id.clone()))?;
        let key = (idx, response.user_id.clone());
        if state.answered.contains(&key) {
            return Err(SubmitError::Duplicate {
                task_id: response.task_id,
                user_id: response.user_id,
            });
        }
        if state.valid[idx] >= self.cfg.target_responses {
            return Err(SubmitError::TaskComplete(response.task_id));
        }
        let validation = validate_response(&self.tasks[idx], &response, self.cfg.min_seconds)
            .expect("task looked up by id");
        let record = ResponseRecord {
            seq: state.records.len() as u64,
            response,
            validation: validation.clone(),
        };
        state.answered.insert(key.clone());
        state.seen.insert(key);
        if validation.valid {
            state.valid[idx] += 1;
        } else {
            state.invalid[idx] += 1;
        }
        state.records.push(record);
        Ok(validation)
    }

    /// Like [`submit`](Self::submit) but writes the record to the log before
    /// the in-memory state changes are visible to other requests.
    pub fn submit_logged(&self, response: UserResponse) -> Result<ValidationResult, SubmitError> {
        let mut state = self.lock();
        let before = state.records.len();
        let result = self.apply(&mut state, response)?;
        if let Some(path) = &self.cfg.log_path {
            let record = state.records[before].clone();
            if let Err(e) = append_response(path, &record) {
                // roll back so memory and log agree
                let idx = self.by_id[&record.response.task_id];
                let key = (idx, record.response.user_id.clone());
                state.answered.remove(&key);
                if record.validation.valid {
                    state.valid[idx] -= 1;
                } else {
                    state.invalid[idx] -= 1;
                }
                state.records.pop();
                return Err(e.into());
            }
        }
        Ok(result)
    }

    pub fn records(&self) -> Vec<ResponseRecord> {
        self.lock().records.clone()
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let tasks: Vec<TaskProgress> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| TaskProgress {
                task_id: t.task_id.clone(),
                query_id: t.query_id,
                valid: state.valid[i],
                invalid: state.invalid[i],
            })
            .collect();
        Progress {
            target_responses: self.cfg.target_responses,
            complete_tasks: tasks.iter().filter(|t| t.valid >= self.cfg.target_responses).count(),
            total_valid: state.valid.iter().sum(),
            total_invalid: state.invalid.iter().sum(),
            tasks,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

fn error(status: StatusCode, message: impl ToString, field: Option<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.to_string(),
            field,
        }),
    )
        .into_response()
}

/// `GET /api/task?user=ID`, `POST /api/response`, `GET /api/progress`.
pub fn router(service: Arc<TaskService>) -> Router {
    Router::new()
        .route("/api/task", get(get_task))
        .route("/api/response", post(post_response))
        .route("/api/progress", get(get_progress))
        .with_state(service)
}

#[derive(Deserialize)]
struct TaskQuery {
    user: Option<String>,
}

async fn get_task(State(service): State<Arc<TaskService>>, Query(q): Query<TaskQuery>) -> Response {
    let Some(user) = q.user.filter(|u| !u.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing user parameter", Some("user".into()));
    };
    match service.next_task(&user) {
        Some(payload) => Json(payload).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_response(State(service): State<Arc<TaskService>>, body: Bytes) -> Response {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let response: UserResponse = match serde_path_to_error::deserialize(de) {
        Ok(r) => r,
        Err(e) => {
            let field = e.path().to_string();
            return error(StatusCode::BAD_REQUEST, e.inner(), Some(field));
        }
    };
    match service.submit_logged(response) {
        Ok(v) => Json(v).into_response(),
        Err(e @ SubmitError::UnknownTask(_)) => error(StatusCode::NOT_FOUND, e, None),
        Err(e @ (SubmitError::Duplicate { .. } | SubmitError::TaskComplete(_))) => {
            error(StatusCode::CONFLICT, e, None)
        }
        Err(e @ SubmitError::Io(_)) => error(StatusCode::INTERNAL_SERVER_ERROR, e, None),
    }
}

async fn get_progress(State(service): State<Arc<TaskService>>) -> Json<Progress> {
    Json(service.progress())
}

/// Serves the API on an already bound listener until the process stops.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<TaskService>) -> io::Result<()> {
    log::info!("task service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
