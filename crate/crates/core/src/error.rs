use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("unit error in `{text}`: {msg}")]
    Unit { text: String, msg: String },

    #[error("invalid parameter `{name}`: {msg}")]
    Param { name: String, msg: String },

    #[error("state is {found:?} but the model expects {expected:?}")]
    ModeMismatch {
        expected: crate::state::Mode,
        found: crate::state::Mode,
    },

    #[error("state has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },

    #[error("non-finite value at index {index} ({context})")]
    NonFinite { index: usize, context: &'static str },

    #[error("singular linear system in {context} (condition number {condition:.3e})")]
    Singular { context: &'static str, condition: f64 },

    #[error("newton did not converge after {iterations} iterations (scaled residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("point is not an equilibrium (scaled residual {residual:.3e} > {tol:.1e})")]
    NotEquilibrium { residual: f64, tol: f64 },

    #[error("eigensolver did not converge for matrix {rows}x{rows}:\n{dump}")]
    Eigen { rows: usize, dump: String },

    #[error("no sign change in bracket: abscissa({lo:.6e}) = {lo_abscissa:.6e}, abscissa({hi:.6e}) = {hi_abscissa:.6e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        lo_abscissa: f64,
        hi_abscissa: f64,
    },

    #[error("invalid event list: {0}")]
    Events(String),

    #[error("settling analysis: {0}")]
    Settling(String),

    #[error("simulation diverged at t = {t:.6} s (state index {index})")]
    Diverged { t: f64, index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Param {
            name: name.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
