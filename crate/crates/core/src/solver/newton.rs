use super::{eval_checked, VectorField};
use crate::error::{Error, Result};
use crate::state::SystemState;
use crate::system::SystemModel;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonSettings {
    /// Threshold on the weighted ∞-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative perturbation for finite-difference Jacobians.
    pub fd_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-9,
            max_iter: 50,
            fd_step: 1e-6,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("newton.tol", "must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::param("newton.max_iter", "must be at least 1"));
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 1e-3) {
            return Err(Error::param("newton.fd_step", "must lie in (0, 1e-3]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Correction steps taken.
    pub iterations: usize,
    /// Final weighted residual.
    pub residual: f64,
    /// Condition number of the last (column-reduced) Jacobian, 1 if no step was taken.
    pub condition: f64,
    pub pinned: Option<usize>,
}

const MAX_CONDITION: f64 = 1e14;
const MAX_HALVINGS: usize = 30;

fn weighted_norm(r: &[f64], w: &[f64]) -> f64 {
    r.iter()
        .zip(w)
        .map(|(r, w)| (r * w).abs())
        .fold(0.0, f64::max)
}

/// Damped Newton iteration on `field(x) = 0`.
///
/// The pinned column (if any) is left out of the step, and each step is the
/// least-squares solution of the weighted linear system, so the free angle of
/// a rotation-invariant field does not make the update singular.
///
/// ```
/// use droopgrid::solver::{find_equilibrium, FnField, NewtonSettings};
/// let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0] - 4.0);
/// let (x, report) = find_equilibrium(&f, &[3.0], &NewtonSettings::default()).unwrap();
/// assert!((x[0] - 2.0).abs() < 1e-9 && report.iterations <= 6);
/// ```
pub fn find_equilibrium<F: VectorField>(
    field: &F,
    x0: &[f64],
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    settings.validate()?;
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::Length {
            expected: n,
            found: x0.len(),
        });
    }
    let w = field.residual_weights().unwrap_or_else(|| vec![1.0; n]);
    let pinned = field.pinned_index();
    let free: Vec<usize> = (0..n).filter(|&j| Some(j) != pinned).collect();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    eval_checked(field, &x, &mut r)?;
    let mut norm = weighted_norm(&r, &w);
    let mut condition = 1.0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];

    for it in 0..settings.max_iter {
        if norm <= settings.tol {
            return Ok((
                x,
                ConvergenceReport {
                    iterations: it,
                    residual: norm,
                    condition,
                    pinned,
                },
            ));
        }
        let jac = field.jacobian(&x, settings.fd_step)?;
        let a = DMatrix::from_fn(n, free.len(), |i, k| w[i] * jac[(i, free[k])]);
        let b = DVector::from_fn(n, |i, _| -w[i] * r[i]);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(Error::Singular {
                context: "newton step",
                condition,
            });
        }
        let step = svd
            .solve(&b, 0.0)
            .map_err(|_| Error::Singular {
                context: "newton step",
                condition,
            })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            trial.copy_from_slice(&x);
            for (k, &j) in free.iter().enumerate() {
                trial[j] += lambda * step[k];
            }
            if eval_checked(field, &trial, &mut r_trial).is_ok() {
                let tn = weighted_norm(&r_trial, &w);
                if tn < norm {
                    x.copy_from_slice(&trial);
                    r.copy_from_slice(&r_trial);
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations: it + 1,
                residual: norm,
            });
        }
    }
    if norm <= settings.tol {
        return Ok((
            x,
            ConvergenceReport {
                iterations: settings.max_iter,
                residual: norm,
                condition,
                pinned,
            },
        ));
    }
    Err(Error::NotConverged {
        iterations: settings.max_iter,
        residual: norm,
    })
}

/// [`find_equilibrium`] on a [`SystemModel`] with typed states.
pub fn solve_state(
    model: &SystemModel,
    x0: &SystemState,
    settings: &NewtonSettings,
) -> Result<(SystemState, ConvergenceReport)> {
    x0.expect_mode(model.mode())?;
    let (x, report) = find_equilibrium(model, &x0.values, settings)?;
    Ok((SystemState::new(model.mode(), x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FnField;

    #[test]
    fn scalar_newton() {
        let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0] - 4.0);
        let (x, rep) = find_equilibrium(&f, &[3.0], &NewtonSettings::default()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert!(rep.iterations <= 6);
    }

    #[test]
    fn converged_point_takes_no_step() {
        let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0] - 4.0);
        let (x, rep) = find_equilibrium(&f, &[2.0], &NewtonSettings::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(x, vec![2.0]);
    }

    #[test]
    fn no_root_is_reported() {
        let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0] + 1.0);
        let err = find_equilibrium(&f, &[3.0], &NewtonSettings::default()).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. } | Error::Singular { .. }), "{err}");
    }

    #[test]
    fn bad_settings_are_rejected() {
        let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = x[0]);
        let s = NewtonSettings {
            fd_step: 1e-2,
            ..Default::default()
        };
        assert!(find_equilibrium(&f, &[1.0], &s).is_err());
    }
}
