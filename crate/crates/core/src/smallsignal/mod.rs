//! Linearization, two-timescale reduction, spectra and parameter studies.

mod eigen;
mod sweep;

pub use eigen::{eigen_spectrum, Eigenvalue, ModeKind, Spectrum, ZERO_THRESHOLD};
pub use sweep::{
    analyze, apply_param, find_critical, find_crossing, linspace, parameter_sweep, Analysis,
    CriticalPoint, Crossing, EigenSweep, ModelOrder, SweepParam, SweepPoint,
};

use crate::error::{Error, Result};
use crate::state::{Mode, SystemState};
use crate::system::SystemModel;
use nalgebra::DMatrix;

/// State matrix at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub labels: Vec<String>,
    pub x_eq: SystemState,
    pub mode: Mode,
    /// Row that is zero by construction of an anchored frame; its zero
    /// eigenvalue is not counted as structural.
    pub reference_row: Option<usize>,
}

impl LinearModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_reduced(&self) -> bool {
        self.order() < self.mode.dim()
    }
}

/// Exact Jacobian of the model's field at `x_eq`, which must satisfy the
/// scaled residual bound `tol`.
pub fn linearize(model: &SystemModel, x_eq: &SystemState, tol: f64) -> Result<LinearModel> {
    let residual = model.scaled_residual(x_eq)?;
    if !(residual <= tol) {
        return Err(Error::NotEquilibrium { residual, tol });
    }
    Ok(LinearModel {
        a: model.exact_jacobian(&x_eq.values)?,
        labels: x_eq.mode.labels(),
        x_eq: x_eq.clone(),
        mode: x_eq.mode,
        reference_row: model.reference_row(),
    })
}

/// Disjoint cover of the state indices into slow and fast sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlowFastPartition {
    pub slow: Vec<usize>,
    pub fast: Vec<usize>,
}

impl SlowFastPartition {
    pub fn new(n: usize, fast: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &j in &fast {
            if j >= n || seen[j] {
                return Err(Error::param("partition", "fast indices must be distinct and in range"));
            }
            seen[j] = true;
        }
        let slow = (0..n).filter(|&j| !seen[j]).collect();
        Ok(SlowFastPartition { slow, fast })
    }

    /// Line currents are fast, everything else slow.
    pub fn for_mode(mode: Mode) -> Self {
        SlowFastPartition::new(mode.dim(), mode.current_indices()).expect("static layout")
    }
}

/// Condition number above which the fast block counts as singular.
pub const MAX_FAST_CONDITION: f64 = 1e12;

/// Schur complement `A_xx − A_xz A_zz⁻¹ A_zx` on the slow states.
///
/// ```
/// use droopgrid::smallsignal::reduce_matrix;
/// use nalgebra::DMatrix;
/// let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -10.0]);
/// let r = reduce_matrix(&a, &[0], &[1]).unwrap();
/// assert!((r[(0, 0)] + 0.9).abs() < 1e-15);
/// ```
pub fn reduce_matrix(a: &DMatrix<f64>, slow: &[usize], fast: &[usize]) -> Result<DMatrix<f64>> {
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
    };
    let a_xx = pick(slow, slow);
    if fast.is_empty() {
        return Ok(a_xx);
    }
    let a_xz = pick(slow, fast);
    let a_zx = pick(fast, slow);
    let a_zz = pick(fast, fast);
    let sv = a_zz.singular_values();
    let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(condition < MAX_FAST_CONDITION) {
        return Err(Error::Singular {
            context: "fast block A_zz",
            condition,
        });
    }
    let x = a_zz.lu().solve(&a_zx).ok_or(Error::Singular {
        context: "fast block A_zz",
        condition,
    })?;
    Ok(a_xx - a_xz * x)
}

/// Quasi-steady-state reduction of `lin` onto the slow states of `part`.
pub fn reduce(lin: &LinearModel, part: &SlowFastPartition) -> Result<LinearModel> {
    if part.slow.len() + part.fast.len() != lin.order() {
        return Err(Error::param("partition", "does not cover the model's states"));
    }
    let a = reduce_matrix(&lin.a, &part.slow, &part.fast)?;
    Ok(LinearModel {
        a,
        labels: part.slow.iter().map(|&j| lin.labels[j].clone()).collect(),
        x_eq: lin.x_eq.clone(),
        mode: lin.mode,
        reference_row: lin
            .reference_row
            .and_then(|r| part.slow.iter().position(|&j| j == r)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_blocks_reduce_to_slow_block() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.5, -3.0, 0.0, 7.0, 1.0, -50.0]);
        let r = reduce_matrix(&a, &[0, 1], &[2]).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]));
    }

    #[test]
    fn singular_fast_block_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]);
        let e = reduce_matrix(&a, &[0], &[1]).unwrap_err();
        assert!(matches!(e, Error::Singular { .. }));
        assert!(e.to_string().contains("condition"));
    }

    #[test]
    fn partitions() {
        let p = SlowFastPartition::for_mode(Mode::OnGrid);
        assert_eq!(p.slow, (0..9).collect::<Vec<_>>());
        assert_eq!(p.fast, (9..15).collect::<Vec<_>>());
        let p = SlowFastPartition::for_mode(Mode::OffGrid);
        assert_eq!(p.slow, (0..6).collect::<Vec<_>>());
        assert!(SlowFastPartition::new(3, vec![1, 1]).is_err());
    }
}
