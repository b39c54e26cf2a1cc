//! Equilibria, small-signal spectra and transition simulation for a
//! microgrid of two droop-controlled grid-forming inverters that share a
//! load bus with a stiff grid.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod components;
pub mod config;
pub mod dq;
pub mod error;
pub mod output;
pub mod params;
pub mod scenario;
pub mod scalar;
pub mod smallsignal;
pub mod solver;
pub mod state;
pub mod system;
pub mod units;

pub use dq::{DqPair, ReferenceFrame};
pub use error::{Error, Result};
pub use params::{ControlParams, FilterParams, GridParams, GridStatus, LoadParams, Nominals, VsiParams};
pub use state::{Field, Mode, SystemState};
pub use system::{Outputs, SystemModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/equilibria.md")]
    mod equilibria {}
    #[doc = include_str!("../../../book/src/small-signal.md")]
    mod small_signal {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
