use thiserror::Error;

/// Everything that can go wrong in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("MRP domain error: |q| = {norm} (must be < 1; shadow-switch first)")]
    MrpDomain { norm: f64 },

    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("sweep failed in {} cell(s): {}", cells.len(), format_cells(cells))]
    SweepFailure { cells: Vec<(usize, usize)> },

    #[error("FRF matrix '{label}' has {count} failed cell(s); pass a failure policy")]
    FailedCells { label: String, count: usize },

    #[error("scenario not convergent at the gain floor: terminal distance {distance:.3e}")]
    NotConvergent { distance: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(usize, usize)]) -> String {
    cells
        .iter()
        .map(|(i, j)| format!("(a#{i}, w#{j})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
