use thiserror::Error;

use crate::model::Tick;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid task set: {0}")]
    InvalidTaskSet(String),

    #[error("generation infeasible after {attempts} draws: {reason}")]
    GenerationInfeasible { attempts: usize, reason: String },

    #[error("task {task_id}: tolerance exceeds execution time (effective execution {effective})")]
    ToleranceExceedsExecution { task_id: u32, effective: i64 },

    #[error("task {task_id}: degenerate segment [{begin}, {end}] in interval starting at {start}")]
    DegenerateSegment {
        task_id: u32,
        start: Tick,
        begin: i64,
        end: i64,
    },

    #[error("task {task_id}: no arrival evidence")]
    NoArrivalEvidence { task_id: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
