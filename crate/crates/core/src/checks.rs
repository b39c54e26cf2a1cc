//! Pass/fail checks behind the `verify` subcommand.

use crate::config::RunConfig;
use crate::error::Result;
use crate::params::GridStatus;
use crate::smallsignal::{analyze, ModeKind, ModelOrder, Spectrum};
use crate::solver::{solve_state, NewtonSettings};
use crate::system::{Outputs, SystemModel};
use num_complex::Complex64;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            pass,
            detail,
        }
    }

    fn failed(name: &str, e: crate::Error) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{}: {} ({})", self.name, verdict, self.detail)
    }
}

fn equilibrium_outputs(model: &SystemModel, newton: &NewtonSettings) -> Result<Outputs> {
    let (x, _) = solve_state(model, &model.flat_start(), newton)?;
    model.outputs(&x)
}

/// On-grid, both inverters inject nothing and the grid carries the load.
pub fn zero_injection(model: &SystemModel, newton: &NewtonSettings) -> CheckResult {
    const NAME: &str = "Theorem 1";
    let run = || -> Result<CheckResult> {
        let o = equilibrium_outputs(&model.with_status(GridStatus::OnGrid), newton)?;
        let s_rated = model.vsis[0].control.rated_apparent();
        let max_p = o.p.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let max_q = o.q.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let rel_p = (o.p_grid - o.p_load).abs() / o.p_load.abs();
        let rel_q = (o.q_grid - o.q_load).abs() / o.q_load.abs().max(1.0);
        let lim = 1e-6 * s_rated;
        let pass = max_p <= lim && max_q <= lim && rel_p <= 1e-6 && rel_q <= 1e-6;
        Ok(CheckResult::new(
            NAME,
            pass,
            format!(
                "max |P_i| = {max_p:.3e} W, max |Q_i| = {max_q:.3e} var, limit {lim:.3e}; grid/load mismatch P {rel_p:.1e}, Q {rel_q:.1e}"
            ),
        ))
    };
    run().unwrap_or_else(|e| CheckResult::failed(NAME, e))
}

/// Off-grid active sharing: `n_1 P_1 = n_2 P_2` when `n_1 P_ref,1 = n_2 P_ref,2`.
/// `asymmetric` doubles `n_2` and halves `P_ref,2`.
pub fn active_sharing(model: &SystemModel, newton: &NewtonSettings, asymmetric: bool) -> CheckResult {
    let name = if asymmetric {
        "Active sharing (n_2 = 2 n_1)"
    } else {
        "Active sharing (symmetric)"
    };
    let tol = if asymmetric { 5e-3 } else { 1e-3 };
    let run = || -> Result<CheckResult> {
        let mut m = model.with_status(GridStatus::OffGrid);
        if asymmetric {
            m.vsis[1].control.n = 2.0 * m.vsis[0].control.n;
            m.vsis[1].control.p_ref = 0.5 * m.vsis[0].control.p_ref;
        }
        m.validate()?;
        let o = equilibrium_outputs(&m, newton)?;
        let a = m.vsis[0].control.n * o.p[0];
        let b = m.vsis[1].control.n * o.p[1];
        let rel = (a - b).abs() / a.abs().max(b.abs());
        Ok(CheckResult::new(
            name,
            rel <= tol,
            format!("P = [{:.1}, {:.1}] W, n·P mismatch {rel:.2e} (limit {tol:.0e})", o.p[0], o.p[1]),
        ))
    };
    run().unwrap_or_else(|e| CheckResult::failed(name, e))
}

/// Off-grid reactive sharing with coupling impedances at 1 %: `m_1 Q_1 = m_2 Q_2`
/// when `m_2 = 2 m_1` and `Q_ref,2 = Q_ref,1 / 2`.
pub fn reactive_sharing(model: &SystemModel, newton: &NewtonSettings) -> CheckResult {
    const NAME: &str = "Reactive sharing (1 % impedance)";
    let run = || -> Result<CheckResult> {
        let mut m = model.with_status(GridStatus::OffGrid);
        for v in m.vsis.iter_mut() {
            v.l_l *= 0.01;
            v.r_l *= 0.01;
        }
        m.vsis[1].control.m = 2.0 * m.vsis[0].control.m;
        m.vsis[1].control.q_ref = 0.5 * m.vsis[0].control.q_ref;
        m.validate()?;
        let o = equilibrium_outputs(&m, newton)?;
        let a = m.vsis[0].control.m * o.q[0];
        let b = m.vsis[1].control.m * o.q[1];
        let rel = (a - b).abs() / a.abs().max(b.abs());
        Ok(CheckResult::new(
            NAME,
            rel <= 1e-2,
            format!("Q = [{:.1}, {:.1}] var, m·Q mismatch {rel:.2e} (limit 1e-2)", o.q[0], o.q[1]),
        ))
    };
    run().unwrap_or_else(|e| CheckResult::failed(NAME, e))
}

/// Largest relative distance from each regular eigenvalue of `reduced` to the
/// nearest eigenvalue of `full`.
pub fn nearest_match_error(reduced: &Spectrum, full: &[Complex64]) -> f64 {
    reduced
        .of_kind(ModeKind::Regular)
        .iter()
        .map(|r| {
            full.iter()
                .map(|f| (r - f).norm() / r.norm().max(f64::MIN_POSITIVE))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// The reduced spectra approximate the slow part of the full spectra.
pub fn reduction_consistency(cfg: &RunConfig) -> CheckResult {
    const NAME: &str = "Reduction consistency";
    let run = || -> Result<CheckResult> {
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for status in [GridStatus::OnGrid, GridStatus::OffGrid] {
            let m = cfg.model(status)?;
            let full = analyze(&m, ModelOrder::Full, &cfg.newton)?;
            let red = analyze(&m, ModelOrder::Reduced, &cfg.newton)?;
            let e = nearest_match_error(&red.spectrum, &full.spectrum.values());
            worst = worst.max(e);
            parts.push(format!(
                "{} {}→{}: {e:.2e}",
                status_name(status),
                full.linear.order(),
                red.linear.order()
            ));
        }
        Ok(CheckResult::new(
            NAME,
            worst <= 0.1,
            format!("{} (limit 1e-1)", parts.join(", ")),
        ))
    };
    run().unwrap_or_else(|e| CheckResult::failed(NAME, e))
}

fn status_name(s: GridStatus) -> &'static str {
    match s {
        GridStatus::OnGrid => "on-grid",
        GridStatus::OffGrid => "off-grid",
    }
}

/// Regular modes of both reduced models are in the open left half-plane and
/// the zero modes are the ones the frame predicts.
pub fn stability(cfg: &RunConfig) -> CheckResult {
    const NAME: &str = "Stability";
    let run = || -> Result<CheckResult> {
        let mut pass = true;
        let mut parts = Vec::new();
        for status in [GridStatus::OnGrid, GridStatus::OffGrid] {
            let m = cfg.model(status)?;
            let a = analyze(&m, ModelOrder::Reduced, &cfg.newton)?;
            let s = &a.spectrum;
            let zeros = s.of_kind(ModeKind::Structural).len();
            let expected = expected_structural_zeros(&m);
            pass &= s.is_stable() && zeros == expected;
            parts.push(format!(
                "{} abscissa {:.3e}, {zeros} structural zero(s) (expected {expected})",
                status_name(status),
                s.abscissa
            ));
        }
        Ok(CheckResult::new(NAME, pass, parts.join("; ")))
    };
    run().unwrap_or_else(|e| CheckResult::failed(NAME, e))
}

/// Angle translation leaves one zero mode unless the frame is anchored to an
/// inverter, whose frozen angle then shows up as a `Reference` zero instead.
pub fn expected_structural_zeros(model: &SystemModel) -> usize {
    if model.reference_row().is_some() {
        0
    } else {
        1
    }
}

/// Everything `verify` runs, in print order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let on = cfg.model(GridStatus::OnGrid)?;
    let off = cfg.model(GridStatus::OffGrid)?;
    Ok(vec![
        zero_injection(&on, &cfg.newton),
        active_sharing(&off, &cfg.newton, false),
        active_sharing(&off, &cfg.newton, true),
        reactive_sharing(&off, &cfg.newton),
        reduction_consistency(cfg),
        stability(cfg),
    ])
}
