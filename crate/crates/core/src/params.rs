//! Parameter blocks for the inverters, the grid path and the load.

use crate::error::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

/// Nominal operating point. `v_nom` is the peak phase voltage that multiplies
/// cos/sin in the dq source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nominals {
    pub v_nom: f64,
    pub omega_nom: f64,
    pub f_nom: f64,
}

impl Nominals {
    /// From an RMS line-to-line voltage and a frequency in Hz.
    ///
    /// ```
    /// let nom = droopgrid::Nominals::from_line_rms(480.0, 60.0).unwrap();
    /// assert!((nom.v_nom - 391.918).abs() < 1e-3);
    /// ```
    pub fn from_line_rms(v_ll_rms: f64, f_nom: f64) -> Result<Self> {
        if !(v_ll_rms > 0.0 && v_ll_rms.is_finite()) {
            return Err(Error::param("v_ll_rms", "must be positive"));
        }
        if !(f_nom > 0.0 && f_nom.is_finite()) {
            return Err(Error::param("f_nom", "must be positive"));
        }
        Ok(Nominals {
            v_nom: v_ll_rms * 2f64.sqrt() / 3f64.sqrt(),
            omega_nom: 2.0 * PI * f_nom,
            f_nom,
        })
    }

    /// RMS line-to-line voltage of a dq vector with peak-phase magnitude `v`.
    pub fn line_rms(v: f64) -> f64 {
        v * 3f64.sqrt() / 2f64.sqrt()
    }

    pub fn v_ll_rms(&self) -> f64 {
        Self::line_rms(self.v_nom)
    }
}

/// Droop and filter settings of one inverter, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlParams {
    /// P–f droop, rad/s per W.
    pub n: f64,
    /// Q–V proportional droop, V per VAr.
    pub m: f64,
    /// Q–V integral droop, V per VAr·s.
    pub m_int: f64,
    /// Power filter time constant, s.
    pub tau_s: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub p_rated: f64,
    pub q_rated: f64,
}

impl ControlParams {
    /// Selected values of the tuned design: n = 2.08e-2 rad/s/kW,
    /// m = 208.3e-3 V/kVAr, m_int = 0.67 V/s/kVAr, τ_S = 33 ms; references at
    /// the 120 kVA, 0.85 pf rating.
    pub fn selected() -> Self {
        let s = 120e3;
        let pf: f64 = 0.85;
        let p = s * pf;
        let q = s * (1.0 - pf * pf).sqrt();
        ControlParams {
            n: 2.08e-5,
            m: 208.3e-6,
            m_int: 0.67e-3,
            tau_s: 0.033,
            p_ref: p,
            q_ref: q,
            p_rated: p,
            q_rated: q,
        }
    }

    /// `1 − τ_S·m_int/m`.
    pub fn k_m(&self) -> f64 {
        1.0 - self.tau_s * self.m_int / self.m
    }

    pub fn rated_apparent(&self) -> f64 {
        self.p_rated.hypot(self.q_rated)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let pos = [
            ("n", self.n),
            ("m", self.m),
            ("m_int", self.m_int),
            ("tau_s", self.tau_s),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                let why = if name == "m" {
                    "must be positive (the on-grid integral state divides by m)"
                } else {
                    "must be positive"
                };
                return Err(Error::param(format!("{prefix}{name}"), why));
            }
        }
        if !(self.p_rated >= 0.0 && self.q_rated >= 0.0) {
            return Err(Error::param(format!("{prefix}p_rated"), "ratings must be non-negative"));
        }
        if !(0.0..=self.p_rated).contains(&self.p_ref) {
            return Err(Error::param(
                format!("{prefix}p_ref"),
                format!("must lie in [0, p_rated = {}]", self.p_rated),
            ));
        }
        if !(self.q_ref.abs() <= self.q_rated) {
            return Err(Error::param(
                format!("{prefix}q_ref"),
                format!("|q_ref| must not exceed q_rated = {}", self.q_rated),
            ));
        }
        Ok(())
    }
}

/// LCL filter data; only the current-loop gain helper reads it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterParams {
    pub l_f: f64,
    pub r_f: f64,
    pub c_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VsiParams {
    pub control: ControlParams,
    /// Coupling inductance L_g + L_line.
    pub l_l: f64,
    /// Coupling resistance R_g + R_line.
    pub r_l: f64,
    pub filter: FilterParams,
}

impl VsiParams {
    /// The bundled `fairview.json` inverter: selected controls, L_g = 15 µH,
    /// L_line = 0.2 mH, R_line = 0.55 mΩ and the calibrated R_g = 42.45 mΩ
    /// (coupling L/R of 5 ms).
    pub fn fairview() -> Self {
        VsiParams {
            control: ControlParams::selected(),
            l_l: 15e-6 + 0.2e-3,
            r_l: 0.55e-3 + 42.45e-3,
            filter: FilterParams {
                l_f: 150e-6,
                r_f: 0.0,
                c_f: 110e-6,
            },
        }
    }

    #[cfg(test)]
    pub(crate) fn fairview_with_q_ref(q: f64) -> Self {
        let mut v = Self::fairview();
        v.control.q_ref = q;
        v.control.q_rated = q;
        v
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        self.control.validate(&format!("{prefix}control."))?;
        if !(self.l_l > 0.0 && self.l_l.is_finite()) {
            return Err(Error::param(format!("{prefix}l_l"), "must be positive"));
        }
        if !(self.r_l >= 0.0 && self.r_l.is_finite()) {
            return Err(Error::param(format!("{prefix}r_l"), "must be non-negative"));
        }
        Ok(())
    }
}

/// Lumped grid and transformer path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridParams {
    pub l_lg: f64,
    pub r_lg: f64,
}

impl GridParams {
    pub fn fairview() -> Self {
        GridParams {
            l_lg: 30e-6,
            r_lg: 5e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_lg > 0.0 && self.l_lg.is_finite()) {
            return Err(Error::param("grid.l_lg", "must be positive"));
        }
        if !(self.r_lg >= 0.0 && self.r_lg.is_finite()) {
            return Err(Error::param("grid.r_lg", "must be non-negative"));
        }
        Ok(())
    }
}

/// Series R-L constant-impedance load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadParams {
    pub r_load: f64,
    pub l_load: f64,
}

impl LoadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_load > 0.0 && self.r_load.is_finite()) {
            return Err(Error::param("load.r_load", "must be positive"));
        }
        if !(self.l_load > 0.0 && self.l_load.is_finite()) {
            return Err(Error::param("load.l_load", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridStatus {
    OffGrid,
    OnGrid,
}

impl GridStatus {
    /// The binary indicator I_gs.
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            GridStatus::OffGrid => 0.0,
            GridStatus::OnGrid => 1.0,
        }
    }

    pub fn from_indicator(i_gs: u8) -> Result<Self> {
        match i_gs {
            0 => Ok(GridStatus::OffGrid),
            1 => Ok(GridStatus::OnGrid),
            _ => Err(Error::param("i_gs", "must be exactly 0 or 1")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selected_controls_validate() {
        ControlParams::selected().validate("").unwrap();
        let mut c = ControlParams::selected();
        c.m = 0.0;
        let e = c.validate("vsi[0].control.").unwrap_err().to_string();
        assert!(e.contains("vsi[0].control.m"), "{e}");
        c = ControlParams::selected();
        c.p_ref = c.p_rated * 1.01;
        assert!(c.validate("").is_err());
    }

    #[test]
    fn k_m_sign_flips_when_integral_dominates() {
        let mut c = ControlParams::selected();
        assert!(c.k_m() > 0.0);
        c.m_int = 2.0 * c.m / c.tau_s;
        assert!(c.k_m() < 0.0);
    }

    #[test]
    fn grid_status_is_binary() {
        assert_eq!(GridStatus::from_indicator(1).unwrap().indicator(), 1.0);
        assert!(GridStatus::from_indicator(2).is_err());
    }
}
