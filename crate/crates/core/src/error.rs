use std::fmt;

/// Errors produced by the analysis and training routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("dichotomy {dichotomy} is not linearly separable")]
    Separability { dichotomy: DichotomyLabel },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Human-readable rendering of a dichotomy (`+` / `-` / `0` per class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DichotomyLabel(pub Vec<i8>);

impl fmt::Display for DichotomyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plus: Vec<usize> = (0..self.0.len()).filter(|&c| self.0[c] > 0).collect();
        let minus: Vec<usize> = (0..self.0.len()).filter(|&c| self.0[c] < 0).collect();
        write!(f, "{{+{plus:?} vs -{minus:?}}}")
    }
}
