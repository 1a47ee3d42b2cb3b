use thiserror::Error;

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("sonic singularity: {0}")]
    Sonic(String),

    #[error("denominator guard: |{which}| = {value:.3e} < {threshold:.3e}")]
    DenominatorGuard {
        which: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("degenerate state at (r={r:.6}, theta={theta:.6}): {msg}")]
    Degenerate { r: f64, theta: f64, msg: String },

    #[error("mesh fold-over at node ({i},{j}): signed area {area:.3e}")]
    FoldOver { i: usize, j: usize, area: f64 },

    #[error("corrector did not converge at node ({i},{j}) after {iters} iterations (last update {delta:.3e})")]
    NoConvergence {
        i: usize,
        j: usize,
        iters: usize,
        delta: f64,
    },

    #[error("CFL violation: dt*max|Lambda| = {lhs:.3e} exceeds {rhs:.3e}")]
    Cfl { lhs: f64, rhs: f64 },

    #[error("level set not covered by mesh: {0}")]
    LevelSetCoverage(String),

    #[error("root not bracketed: {0}")]
    RootBracket(String),

    #[error("insufficient t-range: {0}")]
    InsufficientRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step budget exhausted after {0} steps")]
    StepBudget(usize),

    #[error("config error at line {line}, key '{key}': {msg}")]
    Config { line: usize, key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl SolverError {
    /// Process exit code for the CLI: 2 config, 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SolverError::Config { .. } => 2,
            _ => 3,
        }
    }
}
