use super::{eigen_spectrum, linearize, reduce, LinearModel, SlowFastPartition, Spectrum};
use crate::error::{Error, Result};
use crate::solver::{solve_state, NewtonSettings};
use crate::state::SystemState;
use crate::system::SystemModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Control or network parameter varied homogeneously on both inverters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    M,
    MInt,
    TauS,
    /// Coupling-line X/R at fixed |Z| (evaluated at ω_nom).
    XOverR,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::M => "m",
            SweepParam::MInt => "m_int",
            SweepParam::TauS => "tau_s",
            SweepParam::XOverR => "x_over_r",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "n" => SweepParam::N,
            "m" => SweepParam::M,
            "m_int" => SweepParam::MInt,
            "tau_s" => SweepParam::TauS,
            "x_over_r" => SweepParam::XOverR,
            _ => return Err(Error::param("param", format!("unknown sweep parameter `{s}`"))),
        })
    }

    /// Canonical unit of the value in SI and its customary display unit.
    pub fn units(self) -> (&'static str, &'static str) {
        match self {
            SweepParam::N => ("rad/s/W", "rad/s/kW"),
            SweepParam::M => ("V/VAr", "V/kVAr"),
            SweepParam::MInt => ("V/s/VAr", "V/s/kVAr"),
            SweepParam::TauS => ("s", "ms"),
            SweepParam::XOverR => ("", ""),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    /// Line currents eliminated by their quasi-steady state.
    Reduced,
    Full,
}

/// Copy of `template` with `param` set to `value` on both inverters.
pub fn apply_param(template: &SystemModel, param: SweepParam, value: f64) -> Result<SystemModel> {
    let mut m = template.clone();
    let omega = m.nominals.omega_nom;
    for v in m.vsis.iter_mut() {
        match param {
            SweepParam::N => v.control.n = value,
            SweepParam::M => v.control.m = value,
            SweepParam::MInt => v.control.m_int = value,
            SweepParam::TauS => v.control.tau_s = value,
            SweepParam::XOverR => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::param("x_over_r", "must be positive"));
                }
                let z = v.r_l.hypot(omega * v.l_l);
                let r = z / (1.0 + value * value).sqrt();
                v.r_l = r;
                v.l_l = r * value / omega;
            }
        }
    }
    m.validate()?;
    Ok(m)
}

/// Equilibrium, linear model and spectrum of one configuration.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub x_eq: SystemState,
    pub linear: LinearModel,
    pub spectrum: Spectrum,
}

/// Solves from the flat start, linearizes and (optionally) reduces.
pub fn analyze(model: &SystemModel, order: ModelOrder, newton: &NewtonSettings) -> Result<Analysis> {
    let (x_eq, _) = solve_state(model, &model.flat_start(), newton)?;
    let full = linearize(model, &x_eq, newton.tol)?;
    let linear = match order {
        ModelOrder::Full => full,
        ModelOrder::Reduced => reduce(&full, &SlowFastPartition::for_mode(model.mode()))?,
    };
    let spectrum = eigen_spectrum(&linear)?;
    Ok(Analysis {
        x_eq,
        linear,
        spectrum,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub spectrum: Option<Spectrum>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSweep {
    pub parameter: SweepParam,
    pub order: ModelOrder,
    pub points: Vec<SweepPoint>,
}

impl EigenSweep {
    pub fn abscissae(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.spectrum.as_ref().map(|s| s.abscissa))
            .collect()
    }

    pub fn model_order(&self) -> usize {
        self.points
            .iter()
            .find_map(|p| p.spectrum.as_ref().map(|s| s.eigenvalues.len()))
            .unwrap_or(0)
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Re-solves, linearizes and takes the spectrum at every grid value. Points
/// run in parallel; results keep grid order. A failed point is recorded and
/// the sweep continues.
pub fn parameter_sweep(
    template: &SystemModel,
    param: SweepParam,
    values: &[f64],
    order: ModelOrder,
    newton: &NewtonSettings,
) -> Result<EigenSweep> {
    if values.is_empty() || values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("sweep", "grid must be non-empty and strictly increasing"));
    }
    let points = values
        .par_iter()
        .map(|&value| {
            match apply_param(template, param, value).and_then(|m| analyze(&m, order, newton)) {
                Ok(a) => SweepPoint {
                    value,
                    spectrum: Some(a.spectrum),
                    error: None,
                },
                Err(e) => SweepPoint {
                    value,
                    spectrum: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(EigenSweep {
        parameter: param,
        order,
        points,
    })
}

/// Bracket of a zero crossing of the spectral abscissa.
#[derive(Debug, Clone, Serialize)]
pub struct Crossing {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub below: Spectrum,
    pub above: Spectrum,
    pub evaluations: usize,
}

/// Bisection on `spectrum_at` until the bracket is narrower than
/// `rtol·|midpoint|`. Requires a stable `lo` and an unstable `hi`.
///
/// ```
/// use droopgrid::smallsignal::{find_crossing, Spectrum};
/// use nalgebra::DMatrix;
/// // ẋ = (k − 2.5) x
/// let c = find_crossing(|k| Spectrum::of_matrix(&DMatrix::from_element(1, 1, k - 2.5)), 0.0, 10.0, 1e-3).unwrap();
/// assert!((c.value - 2.5).abs() <= 1e-3 * 2.5);
/// ```
pub fn find_crossing(
    spectrum_at: impl Fn(f64) -> Result<Spectrum>,
    lo: f64,
    hi: f64,
    rtol: f64,
) -> Result<Crossing> {
    if !(lo < hi) {
        return Err(Error::param("bracket", "lo must be below hi"));
    }
    let mut below = spectrum_at(lo)?;
    let mut above = spectrum_at(hi)?;
    if !(below.abscissa < 0.0 && above.abscissa > 0.0) {
        return Err(Error::NoSignChange {
            lo,
            hi,
            lo_abscissa: below.abscissa,
            hi_abscissa: above.abscissa,
        });
    }
    let (mut a, mut b) = (lo, hi);
    let mut evaluations = 2;
    while (b - a) > rtol * (0.5 * (a + b)).abs() {
        let mid = 0.5 * (a + b);
        let s = spectrum_at(mid)?;
        evaluations += 1;
        if s.abscissa < 0.0 {
            a = mid;
            below = s;
        } else {
            b = mid;
            above = s;
        }
    }
    Ok(Crossing {
        value: 0.5 * (a + b),
        lo: a,
        hi: b,
        below,
        above,
        evaluations,
    })
}

/// Critical value of `param` in `[lo, hi]` to relative tolerance 1e-3.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub parameter: SweepParam,
    pub order: ModelOrder,
    pub crossing: Crossing,
}

pub fn find_critical(
    template: &SystemModel,
    param: SweepParam,
    lo: f64,
    hi: f64,
    order: ModelOrder,
    newton: &NewtonSettings,
) -> Result<CriticalPoint> {
    let crossing = find_crossing(
        |v| Ok(analyze(&apply_param(template, param, v)?, order, newton)?.spectrum),
        lo,
        hi,
        1e-3,
    )?;
    Ok(CriticalPoint {
        parameter: param,
        order,
        crossing,
    })
}
