use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AssessmentTask, UserResponse, ValidationResult};
use crate::jsonl;

/// One line of the append-only response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub seq: u64,
    pub response: UserResponse,
    pub validation: ValidationResult,
}

pub fn save_tasks(path: &Path, tasks: &[AssessmentTask]) -> io::Result<()> {
    jsonl::write_all(path, tasks)
}

pub fn load_tasks(path: &Path) -> io::Result<Vec<AssessmentTask>> {
    jsonl::read_all(path)
}

/// Reads a response log; a missing file is an empty log.
pub fn read_responses(path: &Path) -> io::Result<Vec<ResponseRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    jsonl::read_all(path)
}

pub(super) fn append_response(path: &Path, record: &ResponseRecord) -> io::Result<()> {
    jsonl::append(path, record)
}
