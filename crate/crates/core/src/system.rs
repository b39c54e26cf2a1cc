//! The assembled two-inverter system: vector fields for both modes and the
//! output map.

use crate::components::{
    grid_derivatives, load_from_power, pcc_coefficients, pcc_voltage_from_sources,
    source_power, instantaneous_power, vsi_derivatives_offgrid, vsi_derivatives_ongrid,
    PccCoefficients, Source, VsiStateOff, VsiStateOn,
};
use crate::dq::{DqPair, ReferenceFrame};
use crate::error::{Error, Result};
use crate::params::{GridParams, GridStatus, LoadParams, Nominals, VsiParams};
use crate::scalar::{Dual, Scalar};
use crate::solver::VectorField;
use crate::state::{Field, Mode, SystemState};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemModel {
    pub vsis: [VsiParams; 2],
    pub grid: GridParams,
    pub load: LoadParams,
    pub nominals: Nominals,
    pub frame: ReferenceFrame,
    pub status: GridStatus,
}

/// Everything a caller may want to read off a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outputs {
    /// Source-side inverter powers, the quantities the droop law filters.
    pub p: [f64; 2],
    pub q: [f64; 2],
    /// Inverter powers metered at the PCC (`v_pcc · i_o`).
    pub p_pcc: [f64; 2],
    pub q_pcc: [f64; 2],
    /// Grid power metered at the PCC; zero off-grid.
    pub p_grid: f64,
    pub q_grid: f64,
    pub p_load: f64,
    pub q_load: f64,
    /// Filtered powers implied by the droop outputs ω_r, V_r (and ψ).
    pub p_filtered: [f64; 2],
    pub q_filtered: [f64; 2],
    pub v_pcc: DqPair,
    pub v_pcc_rms_ll: f64,
    pub frequency_hz: f64,
    pub i_g: Option<DqPair>,
}

impl SystemModel {
    pub fn new(
        vsis: [VsiParams; 2],
        grid: GridParams,
        load: LoadParams,
        nominals: Nominals,
        frame: ReferenceFrame,
        status: GridStatus,
    ) -> Result<Self> {
        let model = SystemModel {
            vsis,
            grid,
            load,
            nominals,
            frame,
            status,
        };
        model.validate()?;
        Ok(model)
    }

    /// The bundled network at 480 V / 60 Hz with a series R-L load drawing
    /// `p_load + j q_load`. On-grid models use the nominal frame, off-grid
    /// models the inverter-1 anchored frame.
    pub fn fairview(status: GridStatus, p_load: f64, q_load: f64) -> Result<Self> {
        let nominals = Nominals::from_line_rms(480.0, 60.0)?;
        let load = load_from_power(p_load, q_load, 480.0, nominals.omega_nom)?;
        let frame = match status {
            GridStatus::OnGrid => ReferenceFrame::FixedNominal,
            GridStatus::OffGrid => ReferenceFrame::Vsi1Anchored,
        };
        SystemModel::new(
            [VsiParams::fairview(); 2],
            GridParams::fairview(),
            load,
            nominals,
            frame,
            status,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vsis.iter().enumerate() {
            v.validate(&format!("vsi[{i}]."))?;
        }
        self.grid.validate()?;
        self.load.validate()?;
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        Mode::of(self.status)
    }

    pub fn with_status(&self, status: GridStatus) -> Self {
        SystemModel {
            status,
            ..self.clone()
        }
    }

    pub fn with_frame(&self, frame: ReferenceFrame) -> Self {
        SystemModel {
            frame,
            ..self.clone()
        }
    }

    /// Replaces the load by the series R-L equivalent of `p + jq` at nominal voltage.
    pub fn with_load_power(&self, p: f64, q: f64) -> Result<Self> {
        Ok(SystemModel {
            load: load_from_power(p, q, self.nominals.v_ll_rms(), self.nominals.omega_nom)?,
            ..self.clone()
        })
    }

    pub fn pcc_coefficients(&self) -> PccCoefficients {
        pcc_coefficients(&self.vsis, &self.grid, &self.load, self.status)
    }

    pub fn flat_start(&self) -> SystemState {
        SystemState::flat_start(self.mode(), self.nominals.omega_nom, self.nominals.v_nom)
    }

    /// Rate vector in the state layout of the model's mode.
    pub fn vector_field(&self, x: &SystemState) -> Result<SystemState> {
        x.expect_mode(self.mode())?;
        let mut dx = vec![0.0; x.values.len()];
        self.eval_generic(&x.values, &mut dx)?;
        Ok(SystemState {
            mode: x.mode,
            values: dx,
        })
    }

    /// PCC voltage for a state of the model's mode.
    pub fn pcc_voltage(&self, x: &SystemState) -> Result<DqPair> {
        x.expect_mode(self.mode())?;
        Ok(self.pcc_generic(&self.pcc_coefficients(), &x.values))
    }

    fn pcc_generic<T: Scalar>(&self, k: &PccCoefficients, x: &[T]) -> DqPair<T> {
        let mode = self.mode();
        let at = |f: Field| x[mode.index(f).expect("field in layout")];
        let src = |i: usize| Source {
            v: at(Field::Vr(i)),
            theta: at(Field::Theta(i)),
            i: DqPair::new(at(Field::IoD(i)), at(Field::IoQ(i))),
        };
        let grid = (mode == Mode::OnGrid).then(|| Source {
            v: T::cst(self.nominals.v_nom),
            theta: at(Field::ThetaG),
            i: DqPair::new(at(Field::IgD), at(Field::IgQ)),
        });
        pcc_voltage_from_sources(k, grid, [src(0), src(1)])
    }

    /// The vector field on any scalar type; `x` and `dx` follow the mode layout.
    pub fn eval_generic<T: Scalar>(&self, x: &[T], dx: &mut [T]) -> Result<()> {
        let mode = self.mode();
        if x.len() != mode.dim() || dx.len() != mode.dim() {
            return Err(Error::Length {
                expected: mode.dim(),
                found: x.len(),
            });
        }
        let idx = |f: Field| mode.index(f).expect("field in layout");
        let k = self.pcc_coefficients();
        let v_pcc = self.pcc_generic(&k, x);
        let omega_ref = self.frame.omega_ref(self.nominals.omega_nom, x[idx(Field::OmegaR(0))]);
        let nom = &self.nominals;
        for i in 0..2 {
            let vsi = &self.vsis[i];
            let i_o = DqPair::new(x[idx(Field::IoD(i))], x[idx(Field::IoQ(i))]);
            match mode {
                Mode::OffGrid => {
                    let s = VsiStateOff {
                        theta: x[idx(Field::Theta(i))],
                        omega_r: x[idx(Field::OmegaR(i))],
                        v_r: x[idx(Field::Vr(i))],
                        i_o,
                    };
                    let d = vsi_derivatives_offgrid(&s, &vsi.control, vsi, nom, v_pcc, omega_ref);
                    dx[idx(Field::Theta(i))] = d.d_theta;
                    dx[idx(Field::OmegaR(i))] = d.d_omega;
                    dx[idx(Field::Vr(i))] = d.d_v;
                    dx[idx(Field::IoD(i))] = d.d_i.d;
                    dx[idx(Field::IoQ(i))] = d.d_i.q;
                }
                Mode::OnGrid => {
                    let s = VsiStateOn {
                        theta: x[idx(Field::Theta(i))],
                        omega_r: x[idx(Field::OmegaR(i))],
                        v_r: x[idx(Field::Vr(i))],
                        psi: x[idx(Field::Psi(i))],
                        i_o,
                    };
                    let d = vsi_derivatives_ongrid(&s, &vsi.control, vsi, nom, v_pcc, omega_ref)?;
                    dx[idx(Field::Theta(i))] = d.d_theta;
                    dx[idx(Field::OmegaR(i))] = d.d_omega;
                    dx[idx(Field::Vr(i))] = d.d_v;
                    dx[idx(Field::Psi(i))] = d.d_psi;
                    dx[idx(Field::IoD(i))] = d.d_i.d;
                    dx[idx(Field::IoQ(i))] = d.d_i.q;
                }
            }
        }
        if mode == Mode::OnGrid {
            let i_g = DqPair::new(x[idx(Field::IgD)], x[idx(Field::IgQ)]);
            let (dth, di) =
                grid_derivatives(x[idx(Field::ThetaG)], i_g, &self.grid, nom, v_pcc, omega_ref);
            dx[idx(Field::ThetaG)] = dth;
            dx[idx(Field::IgD)] = di.d;
            dx[idx(Field::IgQ)] = di.q;
        }
        Ok(())
    }

    /// Jacobian by forward-mode dual numbers, exact to rounding.
    pub fn exact_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.mode().dim();
        if x.len() != n {
            return Err(Error::Length {
                expected: n,
                found: x.len(),
            });
        }
        let mut a = DMatrix::zeros(n, n);
        let mut xd: Vec<Dual> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let mut dx = vec![Dual::default(); n];
        for j in 0..n {
            xd[j].du = 1.0;
            self.eval_generic(&xd, &mut dx)?;
            xd[j].du = 0.0;
            for (i, d) in dx.iter().enumerate() {
                if !d.du.is_finite() {
                    return Err(Error::NonFinite {
                        index: i,
                        context: "jacobian column",
                    });
                }
                a[(i, j)] = d.du;
            }
        }
        Ok(a)
    }

    /// Row weights that bring every residual to a per-unit voltage or
    /// frequency scale: θ rows by 1/ω_nom, ω rows by τ/ω_nom, V rows by
    /// τ/V_nom, ψ rows by m/V_nom and current rows by L/V_nom.
    pub fn residual_weights(&self) -> Vec<f64> {
        let mode = self.mode();
        let nom = &self.nominals;
        mode.fields()
            .into_iter()
            .map(|f| match f {
                Field::Theta(_) | Field::ThetaG => 1.0 / nom.omega_nom,
                Field::OmegaR(i) => self.vsis[i].control.tau_s / nom.omega_nom,
                Field::Vr(i) => self.vsis[i].control.tau_s / nom.v_nom,
                Field::Psi(i) => self.vsis[i].control.m / nom.v_nom,
                Field::IoD(i) | Field::IoQ(i) => self.vsis[i].l_l / nom.v_nom,
                Field::IgD | Field::IgQ => self.grid.l_lg / nom.v_nom,
            })
            .collect()
    }

    /// Angle whose column is fixed during Newton solves: θ_g on-grid, θ_1 off-grid.
    pub fn pinned_angle(&self) -> usize {
        match self.mode() {
            Mode::OnGrid => 2,
            Mode::OffGrid => 0,
        }
    }

    /// Row that vanishes identically because the frame follows that angle's
    /// own source (θ_1 in the anchored frame).
    pub fn reference_row(&self) -> Option<usize> {
        match self.frame {
            ReferenceFrame::Vsi1Anchored => Some(0),
            ReferenceFrame::FixedNominal => None,
        }
    }

    /// Scaled ∞-norm of the field at `x`.
    pub fn scaled_residual(&self, x: &SystemState) -> Result<f64> {
        let dx = self.vector_field(x)?;
        Ok(dx
            .values
            .iter()
            .zip(self.residual_weights())
            .map(|(r, w)| (r * w).abs())
            .fold(0.0, f64::max))
    }

    pub fn outputs(&self, x: &SystemState) -> Result<Outputs> {
        x.expect_mode(self.mode())?;
        let v_pcc = self.pcc_voltage(x)?;
        let on = self.mode() == Mode::OnGrid;
        let nom = &self.nominals;
        let mut out = Outputs {
            p: [0.0; 2],
            q: [0.0; 2],
            p_pcc: [0.0; 2],
            q_pcc: [0.0; 2],
            p_grid: 0.0,
            q_grid: 0.0,
            p_load: 0.0,
            q_load: 0.0,
            p_filtered: [0.0; 2],
            q_filtered: [0.0; 2],
            v_pcc,
            v_pcc_rms_ll: Nominals::line_rms(v_pcc.magnitude()),
            frequency_hz: if on {
                nom.f_nom
            } else {
                x.omega_r(0) / (2.0 * std::f64::consts::PI)
            },
            i_g: None,
        };
        let mut i_load = DqPair::new(0.0, 0.0);
        for i in 0..2 {
            let c = &self.vsis[i].control;
            let i_o = x.i_o(i);
            (out.p[i], out.q[i]) = source_power(x.v_r(i), x.theta(i), i_o);
            (out.p_pcc[i], out.q_pcc[i]) = instantaneous_power(v_pcc, i_o);
            i_load = i_load + i_o;
            let ig = self.status.indicator();
            out.p_filtered[i] = (nom.omega_nom - x.omega_r(i)) / c.n + (1.0 - ig) * c.p_ref;
            let psi = x.try_get(Field::Psi(i)).unwrap_or(0.0);
            out.q_filtered[i] =
                (nom.v_nom - x.v_r(i) - ig * c.m_int * psi) / c.m + (1.0 - ig) * c.q_ref;
        }
        if on {
            let i_g = x.i_g();
            (out.p_grid, out.q_grid) = instantaneous_power(v_pcc, i_g);
            out.i_g = Some(i_g);
            i_load = i_load + i_g;
        }
        (out.p_load, out.q_load) = instantaneous_power(v_pcc, i_load);
        Ok(out)
    }

    /// ψ values on the integral manifold for the given droop voltages.
    pub fn psi_manifold(&self, v_r: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|i| (self.nominals.v_nom - v_r[i]) / self.vsis[i].control.m_int)
    }
}

impl VectorField for SystemModel {
    fn dim(&self) -> usize {
        self.mode().dim()
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.eval_generic(x, dx)
    }

    fn residual_weights(&self) -> Option<Vec<f64>> {
        Some(SystemModel::residual_weights(self))
    }

    fn pinned_index(&self) -> Option<usize> {
        Some(self.pinned_angle())
    }

    fn jacobian(&self, x: &[f64], _fd_step: f64) -> Result<DMatrix<f64>> {
        self.exact_jacobian(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::jacobian;

    fn on_model() -> SystemModel {
        SystemModel::fairview(GridStatus::OnGrid, 500e3, 220e3).unwrap()
    }

    fn sample_state(mode: Mode) -> SystemState {
        let mut x = SystemState::flat_start(mode, 377.0, 390.0);
        for (k, v) in x.values.iter_mut().enumerate() {
            *v += 0.01 * (k as f64 + 1.0).sin();
        }
        for i in 0..2 {
            x.set_i_o(i, DqPair::new(120.0 + 5.0 * i as f64, -40.0));
        }
        x
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let x = SystemState::zeros(Mode::OffGrid);
        assert!(matches!(on_model().vector_field(&x), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn exact_jacobian_matches_finite_differences() {
        for model in [
            on_model(),
            SystemModel::fairview(GridStatus::OffGrid, 250e3, 100e3).unwrap(),
        ] {
            let x = sample_state(model.mode());
            let a = model.exact_jacobian(&x.values).unwrap();
            let fd = jacobian(&model, &x.values, 1e-6).unwrap();
            let scale = a.amax();
            assert!((&a - &fd).amax() < 1e-6 * scale, "{}", (&a - &fd).amax());
        }
    }

    #[test]
    fn symmetric_state_gives_symmetric_rates() {
        let model = on_model();
        let mut x = model.flat_start();
        for i in 0..2 {
            x.set_i_o(i, DqPair::new(50.0, 10.0));
        }
        let dx = model.vector_field(&x).unwrap();
        for pair in [(0, 1), (3, 4), (5, 6), (7, 8), (9, 10), (12, 13)] {
            assert_eq!(dx.values[pair.0], dx.values[pair.1]);
        }
    }

    #[test]
    fn open_circuit_offgrid_is_at_rest() {
        let mut model = SystemModel::fairview(GridStatus::OffGrid, 250e3, 100e3).unwrap();
        for v in model.vsis.iter_mut() {
            v.control.p_ref = 0.0;
            v.control.q_ref = 0.0;
        }
        model.load.r_load *= 1e12;
        model.load.l_load *= 1e12;
        let x = model.flat_start();
        let dx = model.vector_field(&x).unwrap();
        assert!(dx.values.iter().all(|v| v.abs() < 1e-6), "{:?}", dx.values);
    }

    #[test]
    fn zero_current_state_has_no_power() {
        let model = on_model();
        let out = model.outputs(&model.flat_start()).unwrap();
        assert_eq!(out.p, [0.0, 0.0]);
        assert_eq!(out.q, [0.0, 0.0]);
        assert_eq!(out.frequency_hz, 60.0);
    }

    #[test]
    fn collinear_zero_current_pcc() {
        let model = on_model();
        let k = model.pcc_coefficients();
        let x = model.flat_start();
        let v = model.pcc_voltage(&x).unwrap();
        let expect = model.nominals.v_nom * (k.k_v_g + k.k_v_i[0] + k.k_v_i[1]);
        assert!((v.d - expect).abs() < 1e-12 * expect);
        assert_eq!(v.q, 0.0);
    }
}
