//! Equilibria, Jacobians and fixed-step integration.

mod integrate;
mod newton;

pub use integrate::{integrate, EventHook, IntegratorSettings, Method, Trajectory, TrajectoryStatus};
pub use newton::{find_equilibrium, solve_state, ConvergenceReport, NewtonSettings};

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// An autonomous field `ẋ = f(x)` on a flat vector.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Per-row weights applied to residuals before norms are taken.
    fn residual_weights(&self) -> Option<Vec<f64>> {
        None
    }

    /// Column held fixed by Newton (a free angle).
    fn pinned_index(&self) -> Option<usize> {
        None
    }

    /// Defaults to central differences; models with an exact derivative override it.
    fn jacobian(&self, x: &[f64], fd_step: f64) -> Result<DMatrix<f64>>
    where
        Self: Sized,
    {
        jacobian(self, x, fd_step)
    }
}

impl<F: VectorField> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (**self).eval(x, dx)
    }
    fn residual_weights(&self) -> Option<Vec<f64>> {
        (**self).residual_weights()
    }
    fn pinned_index(&self) -> Option<usize> {
        (**self).pinned_index()
    }
    fn jacobian(&self, x: &[f64], fd_step: f64) -> Result<DMatrix<f64>> {
        (**self).jacobian(x, fd_step)
    }
}

/// Wraps a closure as a [`VectorField`].
///
/// ```
/// use droopgrid::solver::{FnField, VectorField};
/// let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
/// let mut dx = [0.0];
/// f.eval(&[2.0], &mut dx).unwrap();
/// assert_eq!(dx[0], -2.0);
/// ```
pub struct FnField<G> {
    dim: usize,
    f: G,
}

impl<G: Fn(&[f64], &mut [f64])> FnField<G> {
    pub fn new(dim: usize, f: G) -> Self {
        FnField { dim, f }
    }
}

impl<G: Fn(&[f64], &mut [f64])> VectorField for FnField<G> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.f)(x, dx);
        Ok(())
    }
}

pub(crate) fn eval_checked<F: VectorField>(field: &F, x: &[f64], dx: &mut [f64]) -> Result<()> {
    field.eval(x, dx)?;
    if let Some(index) = dx.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            context: "vector field",
        });
    }
    Ok(())
}

/// Central-difference Jacobian with column step `fd_step·max(1, |x_j|)`.
///
/// ```
/// use droopgrid::solver::{jacobian, FnField};
/// let f = FnField::new(2, |x: &[f64], dx: &mut [f64]| {
///     dx[0] = x[0] * x[0];
///     dx[1] = x[1];
/// });
/// let a = jacobian(&f, &[3.0, 5.0], 1e-6).unwrap();
/// assert!((a[(0, 0)] - 6.0).abs() < 1e-6 && (a[(1, 1)] - 1.0).abs() < 1e-6);
/// assert!(a[(0, 1)].abs() < 1e-6 && a[(1, 0)].abs() < 1e-6);
/// ```
pub fn jacobian<F: VectorField + ?Sized>(field: &F, x: &[f64], fd_step: f64) -> Result<DMatrix<f64>> {
    let n = field.dim();
    if x.len() != n {
        return Err(Error::Length {
            expected: n,
            found: x.len(),
        });
    }
    if !(fd_step > 0.0 && fd_step <= 1e-3) {
        return Err(Error::param("fd_step", "must lie in (0, 1e-3]"));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let eps = fd_step * x[j].abs().max(1.0);
        xp[j] = x[j] + eps;
        field.eval(&xp, &mut fp)?;
        xp[j] = x[j] - eps;
        field.eval(&xp, &mut fm)?;
        xp[j] = x[j];
        for i in 0..n {
            let d = (fp[i] - fm[i]) / (2.0 * eps);
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    context: "jacobian column",
                });
            }
            a[(i, j)] = d;
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_field_is_recovered() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 4.0, 2.0, -7.0]);
        let mm = m.clone();
        let f = FnField::new(3, move |x: &[f64], dx: &mut [f64]| {
            for i in 0..3 {
                dx[i] = (0..3).map(|j| mm[(i, j)] * x[j]).sum();
            }
        });
        let a = jacobian(&f, &[0.3, -20.0, 7.0], 1e-6).unwrap();
        assert!((a - m).amax() < 1e-8);
    }

    #[test]
    fn constant_field_has_zero_jacobian() {
        let f = FnField::new(2, |_: &[f64], dx: &mut [f64]| {
            dx[0] = 4.0;
            dx[1] = -1.0;
        });
        assert_eq!(jacobian(&f, &[1.0, 2.0], 1e-6).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn non_finite_column_names_index() {
        let f = FnField::new(2, |x: &[f64], dx: &mut [f64]| {
            dx[0] = 0.0;
            dx[1] = if x[0] > 0.0 { f64::INFINITY } else { 0.0 };
        });
        assert!(matches!(
            jacobian(&f, &[0.0, 0.0], 1e-6),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }
}
