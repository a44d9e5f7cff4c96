use std::io;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("fisher estimation failed: {0}")]
    Estimation(String),

    #[error("singular curvature at parameter {index}: fisher + damping = {value}")]
    SingularCurvature { index: usize, value: f64 },

    #[error("training diverged in task {task_index}, epoch {epoch}: parameters are no longer finite (lower eta or raise damping)")]
    Diverged { task_index: usize, epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("task order violation: expected task {expected}, got task {actual}")]
    Protocol { expected: usize, actual: usize },

    #[error("malformed IDX file: {0}")]
    Format(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("cannot compare runs: {0}")]
    Comparison(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
