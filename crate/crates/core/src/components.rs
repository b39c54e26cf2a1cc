//! Algebraic relations and state derivatives of each component.
//!
//! Everything here is generic over [`Scalar`] so the same code yields values
//! (`f64`) and exact Jacobian columns ([`Dual`](crate::scalar::Dual)).

use crate::dq::{DqPair, ReferenceFrame};
use crate::error::{Error, Result};
use crate::params::{ControlParams, GridParams, GridStatus, LoadParams, Nominals, VsiParams};
use crate::scalar::Scalar;
use serde::Serialize;

/// Smallest load inductance accepted by [`load_from_power`].
pub const MIN_LOAD_INDUCTANCE: f64 = 1e-6;

/// `p = 3/2 (v_d i_d + v_q i_q)`, `q = 3/2 (v_q i_d − v_d i_q)`.
///
/// ```
/// use droopgrid::{components::instantaneous_power, DqPair};
/// let (p, q) = instantaneous_power(DqPair::new(100.0, 50.0), DqPair::new(4.0, -2.0));
/// assert_eq!((p, q), (450.0, 600.0));
/// ```
#[inline]
pub fn instantaneous_power<T: Scalar>(v: DqPair<T>, i: DqPair<T>) -> (T, T) {
    (
        (v.d * i.d + v.q * i.q) * 1.5,
        (v.q * i.d - v.d * i.q) * 1.5,
    )
}

/// Powers of a source of amplitude `v_r` at angle `theta` carrying `i`.
#[inline]
pub fn source_power<T: Scalar>(v_r: T, theta: T, i: DqPair<T>) -> (T, T) {
    instantaneous_power(DqPair::polar(v_r, theta), i)
}

/// Droop law: returns `(ω_r, V_r)` for filtered powers `P`, `Q` and the
/// integral state `ψ`.
pub fn droop_setpoints(
    ctrl: &ControlParams,
    nominals: &Nominals,
    p: f64,
    q: f64,
    psi: f64,
    status: GridStatus,
) -> (f64, f64) {
    let ig = status.indicator();
    let omega = nominals.omega_nom - ctrl.n * (p - (1.0 - ig) * ctrl.p_ref);
    let v = nominals.v_nom - ctrl.m * (q - (1.0 - ig) * ctrl.q_ref) - ig * ctrl.m_int * psi;
    (omega, v)
}

/// Weights of the algebraic PCC voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PccCoefficients {
    pub k_v_g: f64,
    pub k_v_i: [f64; 2],
    pub k_c_g: f64,
    pub k_c_i: [f64; 2],
    pub k_t: f64,
}

/// `k_T = 1/L_L + I_gs/L_lg + Σ 1/L_l,i`, `k_V = (1/L)/k_T`,
/// `k_C = (R_L/L_L − R/L)/k_T` for every path feeding the PCC.
pub fn pcc_coefficients(
    vsis: &[VsiParams; 2],
    grid: &GridParams,
    load: &LoadParams,
    status: GridStatus,
) -> PccCoefficients {
    let ig = status.indicator();
    let k_t = 1.0 / load.l_load + ig / grid.l_lg + vsis.iter().map(|v| 1.0 / v.l_l).sum::<f64>();
    let rl = load.r_load / load.l_load;
    let (k_v_g, k_c_g) = if ig > 0.0 {
        (
            (1.0 / grid.l_lg) / k_t,
            (rl - grid.r_lg / grid.l_lg) / k_t,
        )
    } else {
        (0.0, 0.0)
    };
    PccCoefficients {
        k_v_g,
        k_v_i: [0, 1].map(|i| (1.0 / vsis[i].l_l) / k_t),
        k_c_g,
        k_c_i: [0, 1].map(|i| (rl - vsis[i].r_l / vsis[i].l_l) / k_t),
        k_t,
    }
}

/// One voltage source feeding the PCC through its coupling line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source<T = f64> {
    pub v: T,
    pub theta: T,
    pub i: DqPair<T>,
}

/// PCC voltage from the gated grid path and the two inverter paths. Linear in
/// `(V cos θ, V sin θ, i)` of every source.
pub fn pcc_voltage_from_sources<T: Scalar>(
    k: &PccCoefficients,
    grid: Option<Source<T>>,
    vsis: [Source<T>; 2],
) -> DqPair<T> {
    let mut v = DqPair::new(T::cst(0.0), T::cst(0.0));
    if let Some(g) = grid {
        v = v + DqPair::polar(g.v, g.theta).scale(k.k_v_g) + g.i.scale(k.k_c_g);
    }
    for (i, s) in vsis.iter().enumerate() {
        v = v + DqPair::polar(s.v, s.theta).scale(k.k_v_i[i]) + s.i.scale(k.k_c_i[i]);
    }
    v
}

/// Per-inverter off-grid state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsiStateOff<T = f64> {
    pub theta: T,
    pub omega_r: T,
    pub v_r: T,
    pub i_o: DqPair<T>,
}

/// Per-inverter on-grid state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsiStateOn<T = f64> {
    pub theta: T,
    pub omega_r: T,
    pub v_r: T,
    pub psi: T,
    pub i_o: DqPair<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsiDerivOff<T = f64> {
    pub d_theta: T,
    pub d_omega: T,
    pub d_v: T,
    pub d_i: DqPair<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsiDerivOn<T = f64> {
    pub d_theta: T,
    pub d_omega: T,
    pub d_v: T,
    pub d_psi: T,
    pub d_i: DqPair<T>,
}

/// `L di/dt = V(cos θ, sin θ) − R i − v_pcc ± ω_ref L i⊥`.
///
/// The cross-coupling speed is ω_ref on both axes, grid path included.
#[inline]
pub fn line_derivative<T: Scalar>(
    v: T,
    theta: T,
    i: DqPair<T>,
    l: f64,
    r: f64,
    v_pcc: DqPair<T>,
    omega_ref: T,
) -> DqPair<T> {
    let e = DqPair::polar(v, theta);
    DqPair::new(
        (e.d - i.d * r - v_pcc.d + omega_ref * i.q * l) / l,
        (e.q - i.q * r - v_pcc.q - omega_ref * i.d * l) / l,
    )
}

/// Off-grid inverter dynamics: filtered P–f and Q–V droop around the
/// references plus the coupling line.
pub fn vsi_derivatives_offgrid<T: Scalar>(
    x: &VsiStateOff<T>,
    ctrl: &ControlParams,
    vsi: &VsiParams,
    nominals: &Nominals,
    v_pcc: DqPair<T>,
    omega_ref: T,
) -> VsiDerivOff<T> {
    let (p, q) = source_power(x.v_r, x.theta, x.i_o);
    let tau = ctrl.tau_s;
    VsiDerivOff {
        d_theta: x.omega_r - omega_ref,
        d_omega: (T::cst(nominals.omega_nom) - x.omega_r - (p - ctrl.p_ref) * ctrl.n) / tau,
        d_v: (T::cst(nominals.v_nom) - x.v_r - (q - ctrl.q_ref) * ctrl.m) / tau,
        d_i: line_derivative(x.v_r, x.theta, x.i_o, vsi.l_l, vsi.r_l, v_pcc, omega_ref),
    }
}

/// On-grid inverter dynamics with the integral Q–V state ψ.
///
/// `m dψ = V_nom − V_r − m_int ψ`, `τ dV_r = k_m (V_nom − V_r − m_int ψ) − m q`.
pub fn vsi_derivatives_ongrid<T: Scalar>(
    x: &VsiStateOn<T>,
    ctrl: &ControlParams,
    vsi: &VsiParams,
    nominals: &Nominals,
    v_pcc: DqPair<T>,
    omega_ref: T,
) -> Result<VsiDerivOn<T>> {
    if !(ctrl.m > 0.0) {
        return Err(Error::param("m", "must be positive (dψ divides by m)"));
    }
    let (p, q) = source_power(x.v_r, x.theta, x.i_o);
    let tau = ctrl.tau_s;
    let err = T::cst(nominals.v_nom) - x.v_r - x.psi * ctrl.m_int;
    Ok(VsiDerivOn {
        d_theta: x.omega_r - omega_ref,
        d_omega: (T::cst(nominals.omega_nom) - x.omega_r - p * ctrl.n) / tau,
        d_v: (err * ctrl.k_m() - q * ctrl.m) / tau,
        d_psi: err / ctrl.m,
        d_i: line_derivative(x.v_r, x.theta, x.i_o, vsi.l_l, vsi.r_l, v_pcc, omega_ref),
    })
}

/// Stiff grid at `V_nom`, `ω_nom`: returns `(dθ_g, di_g)`.
pub fn grid_derivatives<T: Scalar>(
    theta_g: T,
    i_g: DqPair<T>,
    grid: &GridParams,
    nominals: &Nominals,
    v_pcc: DqPair<T>,
    omega_ref: T,
) -> (T, DqPair<T>) {
    (
        T::cst(nominals.omega_nom) - omega_ref,
        line_derivative(
            T::cst(nominals.v_nom),
            theta_g,
            i_g,
            grid.l_lg,
            grid.r_lg,
            v_pcc,
            omega_ref,
        ),
    )
}

/// Convenience: frame speed for a given inverter-1 droop frequency.
pub fn frame_speed<T: Scalar>(frame: ReferenceFrame, nominals: &Nominals, omega_r1: T) -> T {
    frame.omega_ref(nominals.omega_nom, omega_r1)
}

/// Series R-L load drawing `p + jq` at RMS line voltage `v_ll_rms`.
///
/// Inductance is floored at [`MIN_LOAD_INDUCTANCE`] so a unity-power-factor
/// load keeps the PCC algebra well posed.
///
/// ```
/// let z = droopgrid::components::load_from_power(500e3, 220e3, 480.0, 2.0 * std::f64::consts::PI * 60.0).unwrap();
/// assert!((z.r_load - 0.386).abs() < 1e-3);
/// assert!((z.l_load - 4.51e-4).abs() < 1e-6);
/// ```
pub fn load_from_power(p: f64, q: f64, v_ll_rms: f64, omega: f64) -> Result<LoadParams> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::param("load.p", "must be positive"));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::param("load.q", "must be non-negative"));
    }
    if !(v_ll_rms > 0.0 && omega > 0.0) {
        return Err(Error::param("load", "voltage and frequency must be positive"));
    }
    let s = p.hypot(q);
    let z = v_ll_rms * v_ll_rms / s;
    Ok(LoadParams {
        r_load: z * p / s,
        l_load: (z * q / s / omega).max(MIN_LOAD_INDUCTANCE),
    })
}

/// Current-loop PI gains `k_pc = L_f/τ_c`, `k_ic = R_f/τ_c`.
///
/// Logs a warning when `τ_c` falls outside the usual 0.5–2 ms band.
pub fn inner_loop_current_gains(l_f: f64, r_f: f64, tau_c: f64) -> Result<(f64, f64)> {
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::param("tau_c", "must be positive"));
    }
    if !(0.5e-3..=2e-3).contains(&tau_c) {
        log::warn!("current-loop time constant {tau_c:e} s is outside 0.5–2 ms");
    }
    Ok((l_f / tau_c, r_f / tau_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn nominals() -> Nominals {
        Nominals::from_line_rms(480.0, 60.0).unwrap()
    }

    #[test]
    fn power_examples() {
        let p = instantaneous_power(DqPair::new(100.0, 0.0), DqPair::new(10.0, 0.0));
        assert_eq!(p, (1500.0, 0.0));
        let p = instantaneous_power(DqPair::new(0.0, 100.0), DqPair::new(10.0, 0.0));
        assert_eq!(p, (0.0, 1500.0));
        let p = instantaneous_power(DqPair::new(100.0, 50.0), DqPair::new(4.0, -2.0));
        assert_eq!(p, (450.0, 600.0));
    }

    #[test]
    fn droop_examples() {
        let nom = nominals();
        let c = ControlParams::selected();
        let (w, v) = droop_setpoints(&c, &nom, c.p_ref, c.q_ref, 123.0, GridStatus::OffGrid);
        assert_eq!((w, v), (nom.omega_nom, nom.v_nom));
        let (w, v) = droop_setpoints(&c, &nom, 0.0, 0.0, 0.0, GridStatus::OnGrid);
        assert_eq!((w, v), (nom.omega_nom, nom.v_nom));
        let (w, _) = droop_setpoints(&c, &nom, 10e3, 0.0, 0.0, GridStatus::OnGrid);
        assert!((nom.omega_nom - w - 0.208).abs() < 1e-12);
    }

    #[test]
    fn pcc_coefficient_examples() {
        let nom = nominals();
        let vsis = [VsiParams::fairview(); 2];
        let load = load_from_power(500e3, 220e3, 480.0, nom.omega_nom).unwrap();
        let on = pcc_coefficients(&vsis, &GridParams::fairview(), &load, GridStatus::OnGrid);
        let off = pcc_coefficients(&vsis, &GridParams::fairview(), &load, GridStatus::OffGrid);
        let expected = 1.0 / load.l_load + 1.0 / 30e-6 + 2.0 / 215e-6;
        assert!((on.k_t - expected).abs() < 1e-9 * expected);
        assert!((on.k_t - 4.49e4).abs() < 0.01e4, "k_t = {}", on.k_t);
        assert!((on.k_t - off.k_t - 1.0 / 30e-6).abs() < 1e-9 * on.k_t);
        assert_eq!(off.k_v_i[0], off.k_v_i[1]);
        assert_eq!((off.k_v_g, off.k_c_g), (0.0, 0.0));
    }

    #[test]
    fn load_mapping_reproduces_complex_power() {
        let w = 2.0 * PI * 60.0;
        let z = load_from_power(500e3, 220e3, 480.0, w).unwrap();
        // S = V² / Z*
        let zc = num_complex::Complex64::new(z.r_load, z.l_load * w);
        let s = num_complex::Complex64::new(480.0 * 480.0, 0.0) / zc.conj();
        assert!((s.re - 500e3).abs() < 1e-4 * 500e3);
        assert!((s.im - 220e3).abs() < 1e-4 * 220e3);

        let half = load_from_power(250e3, 110e3, 480.0, w).unwrap();
        assert!((half.r_load / z.r_load - 2.0).abs() < 1e-12);
        assert!((half.l_load / z.l_load - 2.0).abs() < 1e-12);

        let r = load_from_power(100e3, 0.0, 480.0, w).unwrap();
        assert_eq!(r.l_load, MIN_LOAD_INDUCTANCE);
        assert!(load_from_power(0.0, 1.0, 480.0, w).is_err());
    }

    #[test]
    fn current_gain_examples() {
        let (kp, ki) = inner_loop_current_gains(150e-6, 0.0, 1e-3).unwrap();
        assert!((kp - 0.15).abs() < 1e-15);
        assert_eq!(ki, 0.0);
        let (kp2, ki2) = inner_loop_current_gains(150e-6, 0.02, 2e-3).unwrap();
        let (_, ki1) = inner_loop_current_gains(150e-6, 0.02, 1e-3).unwrap();
        assert!((kp2 - kp / 2.0).abs() < 1e-15 && (ki2 - ki1 / 2.0).abs() < 1e-15);
        assert!(inner_loop_current_gains(150e-6, 0.0, 0.0).is_err());
    }

    #[test]
    fn unloaded_vsi_is_at_rest() {
        let nom = nominals();
        let mut c = ControlParams::selected();
        c.p_ref = 0.0;
        c.q_ref = 0.0;
        let vsi = VsiParams::fairview();
        let x = VsiStateOff {
            theta: 0.0,
            omega_r: nom.omega_nom,
            v_r: nom.v_nom,
            i_o: DqPair::new(0.0, 0.0),
        };
        let d = vsi_derivatives_offgrid(&x, &c, &vsi, &nom, DqPair::new(nom.v_nom, 0.0), nom.omega_nom);
        assert_eq!(d.d_theta, 0.0);
        assert_eq!(d.d_omega, 0.0);
        assert_eq!(d.d_v, 0.0);
        assert_eq!(d.d_i, DqPair::new(0.0, 0.0));

        let y = VsiStateOff { i_o: DqPair::new(100.0, 0.0), omega_r: nom.omega_nom + 1.5, ..x };
        let d = vsi_derivatives_offgrid(&y, &c, &vsi, &nom, DqPair::new(nom.v_nom, 0.0), nom.omega_nom);
        let p = 1.5 * nom.v_nom * 100.0;
        assert!((d.d_omega - (-1.5 - c.n * p) / c.tau_s).abs() < 1e-12);
        assert_eq!(d.d_theta, 1.5);
    }

    #[test]
    fn ongrid_fixed_points() {
        let nom = nominals();
        let c = ControlParams::selected();
        let vsi = VsiParams::fairview();
        let base = VsiStateOn {
            theta: 0.0,
            omega_r: nom.omega_nom,
            v_r: nom.v_nom,
            psi: 0.0,
            i_o: DqPair::new(0.0, 0.0),
        };
        let v_pcc = DqPair::new(nom.v_nom, 0.0);
        let d = vsi_derivatives_ongrid(&base, &c, &vsi, &nom, v_pcc, nom.omega_nom).unwrap();
        assert_eq!((d.d_psi, d.d_v), (0.0, 0.0));
        for v_r in [300.0, 380.0, 420.0] {
            let x = VsiStateOn { v_r, psi: (nom.v_nom - v_r) / c.m_int, ..base };
            let d = vsi_derivatives_ongrid(&x, &c, &vsi, &nom, v_pcc, nom.omega_nom).unwrap();
            assert!(d.d_psi.abs() < 1e-9 && d.d_v.abs() < 1e-9, "{d:?}");
        }
        let mut bad = c;
        bad.m = 0.0;
        assert!(vsi_derivatives_ongrid(&base, &bad, &vsi, &nom, v_pcc, nom.omega_nom).is_err());
    }

    #[test]
    fn grid_path_examples() {
        let nom = nominals();
        let g = GridParams::fairview();
        let z = DqPair::new(0.0, 0.0);
        let (dth, di) = grid_derivatives(0.0, z, &g, &nom, DqPair::new(nom.v_nom, 0.0), nom.omega_nom);
        assert_eq!(dth, 0.0);
        assert_eq!(di, z);
        let (_, di) = grid_derivatives(0.0, z, &g, &nom, DqPair::new(nom.v_nom - 5.0, 0.0), nom.omega_nom);
        assert!(di.d > 0.0);
    }
}
