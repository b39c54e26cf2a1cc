//! Flat state vectors with named accessors.
//!
//! On-grid layout (15):
//! `[θ1, θ2, θg, ω_r1, ω_r2, V_r1, V_r2, ψ1, ψ2, i1d, i2d, igd, i1q, i2q, igq]`
//!
//! Off-grid layout (10):
//! `[θ1, θ2, ω_r1, ω_r2, V_r1, V_r2, i1d, i2d, i1q, i2q]`

use crate::dq::DqPair;
use crate::error::{Error, Result};
use crate::params::GridStatus;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    OnGrid,
    OffGrid,
}

impl Mode {
    pub fn dim(self) -> usize {
        match self {
            Mode::OnGrid => 15,
            Mode::OffGrid => 10,
        }
    }

    pub fn status(self) -> GridStatus {
        match self {
            Mode::OnGrid => GridStatus::OnGrid,
            Mode::OffGrid => GridStatus::OffGrid,
        }
    }

    pub fn of(status: GridStatus) -> Self {
        match status {
            GridStatus::OnGrid => Mode::OnGrid,
            GridStatus::OffGrid => Mode::OffGrid,
        }
    }

    /// Flat index of `field`, or `None` if the field does not exist in this mode.
    pub fn index(self, field: Field) -> Option<usize> {
        use Field::*;
        match self {
            Mode::OnGrid => Some(match field {
                Theta(i) if i < 2 => i,
                ThetaG => 2,
                OmegaR(i) if i < 2 => 3 + i,
                Vr(i) if i < 2 => 5 + i,
                Psi(i) if i < 2 => 7 + i,
                IoD(i) if i < 2 => 9 + i,
                IgD => 11,
                IoQ(i) if i < 2 => 12 + i,
                IgQ => 14,
                _ => return None,
            }),
            Mode::OffGrid => Some(match field {
                Theta(i) if i < 2 => i,
                OmegaR(i) if i < 2 => 2 + i,
                Vr(i) if i < 2 => 4 + i,
                IoD(i) if i < 2 => 6 + i,
                IoQ(i) if i < 2 => 8 + i,
                _ => return None,
            }),
        }
    }

    /// Fields in flat order.
    pub fn fields(self) -> Vec<Field> {
        use Field::*;
        match self {
            Mode::OnGrid => vec![
                Theta(0),
                Theta(1),
                ThetaG,
                OmegaR(0),
                OmegaR(1),
                Vr(0),
                Vr(1),
                Psi(0),
                Psi(1),
                IoD(0),
                IoD(1),
                IgD,
                IoQ(0),
                IoQ(1),
                IgQ,
            ],
            Mode::OffGrid => vec![
                Theta(0),
                Theta(1),
                OmegaR(0),
                OmegaR(1),
                Vr(0),
                Vr(1),
                IoD(0),
                IoD(1),
                IoQ(0),
                IoQ(1),
            ],
        }
    }

    pub fn labels(self) -> Vec<String> {
        self.fields().into_iter().map(|f| f.label()).collect()
    }

    /// Indices of the line-current states (the fast subsystem).
    pub fn current_indices(self) -> Vec<usize> {
        match self {
            Mode::OnGrid => (9..15).collect(),
            Mode::OffGrid => (6..10).collect(),
        }
    }

    /// Indices of the angle states.
    pub fn angle_indices(self) -> Vec<usize> {
        match self {
            Mode::OnGrid => vec![0, 1, 2],
            Mode::OffGrid => vec![0, 1],
        }
    }
}

/// Named state entries; VSI indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Theta(usize),
    ThetaG,
    OmegaR(usize),
    Vr(usize),
    Psi(usize),
    IoD(usize),
    IoQ(usize),
    IgD,
    IgQ,
}

impl Field {
    pub fn label(self) -> String {
        match self {
            Field::Theta(i) => format!("theta_{}", i + 1),
            Field::ThetaG => "theta_g".into(),
            Field::OmegaR(i) => format!("omega_r{}", i + 1),
            Field::Vr(i) => format!("v_r{}", i + 1),
            Field::Psi(i) => format!("psi_{}", i + 1),
            Field::IoD(i) => format!("i_o{}_d", i + 1),
            Field::IoQ(i) => format!("i_o{}_q", i + 1),
            Field::IgD => "i_g_d".into(),
            Field::IgQ => "i_g_q".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    pub mode: Mode,
    pub values: Vec<f64>,
}

impl SystemState {
    pub fn new(mode: Mode, values: Vec<f64>) -> Result<Self> {
        if values.len() != mode.dim() {
            return Err(Error::Length {
                expected: mode.dim(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "state vector",
            });
        }
        Ok(SystemState { mode, values })
    }

    pub fn zeros(mode: Mode) -> Self {
        SystemState {
            mode,
            values: vec![0.0; mode.dim()],
        }
    }

    /// Angles zero, droop outputs at nominal, no current, ψ = 0.
    pub fn flat_start(mode: Mode, omega_nom: f64, v_nom: f64) -> Self {
        let mut x = Self::zeros(mode);
        for i in 0..2 {
            x.set(Field::OmegaR(i), omega_nom);
            x.set(Field::Vr(i), v_nom);
        }
        x
    }

    /// Panics if `field` does not exist in this mode.
    pub fn get(&self, field: Field) -> f64 {
        self.values[self.idx(field)]
    }

    /// Panics if `field` does not exist in this mode.
    pub fn set(&mut self, field: Field, v: f64) {
        let k = self.idx(field);
        self.values[k] = v;
    }

    pub fn try_get(&self, field: Field) -> Option<f64> {
        self.mode.index(field).map(|k| self.values[k])
    }

    fn idx(&self, field: Field) -> usize {
        self.mode
            .index(field)
            .unwrap_or_else(|| panic!("{field:?} does not exist in {:?}", self.mode))
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.get(Field::Theta(i))
    }
    pub fn omega_r(&self, i: usize) -> f64 {
        self.get(Field::OmegaR(i))
    }
    pub fn v_r(&self, i: usize) -> f64 {
        self.get(Field::Vr(i))
    }
    pub fn i_o(&self, i: usize) -> DqPair {
        DqPair::new(self.get(Field::IoD(i)), self.get(Field::IoQ(i)))
    }
    pub fn set_i_o(&mut self, i: usize, v: DqPair) {
        self.set(Field::IoD(i), v.d);
        self.set(Field::IoQ(i), v.q);
    }
    /// On-grid only.
    pub fn i_g(&self) -> DqPair {
        DqPair::new(self.get(Field::IgD), self.get(Field::IgQ))
    }

    /// Islanding remap: keeps the shared states and drops θ_g, ψ and i_g.
    pub fn islanded(&self) -> Result<SystemState> {
        self.expect_mode(Mode::OnGrid)?;
        let mut out = SystemState::zeros(Mode::OffGrid);
        for f in Mode::OffGrid.fields() {
            out.set(f, self.get(f));
        }
        Ok(out)
    }

    /// Grid-return remap: θ_g = 0, i_g = 0 and `ψ_i` from the caller (the
    /// integral-manifold value `(V_nom − V_r,i)/m_int,i`).
    pub fn reconnected(&self, psi: [f64; 2]) -> Result<SystemState> {
        self.expect_mode(Mode::OffGrid)?;
        let mut out = SystemState::zeros(Mode::OnGrid);
        for f in Mode::OffGrid.fields() {
            out.set(f, self.get(f));
        }
        out.set(Field::Psi(0), psi[0]);
        out.set(Field::Psi(1), psi[1]);
        Ok(out)
    }

    pub fn expect_mode(&self, mode: Mode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::ModeMismatch {
                expected: mode,
                found: self.mode,
            });
        }
        Ok(())
    }

    /// Frame-invariant coordinates: `[θ2 − θ1, ω, V, (ψ), currents rotated by −θ1]`
    /// with θ_g (on-grid) also expressed relative to θ1.
    pub fn frame_invariant(&self) -> Vec<f64> {
        let th1 = self.theta(0);
        let mut out = vec![self.theta(1) - th1];
        if self.mode == Mode::OnGrid {
            out.push(self.get(Field::ThetaG) - th1);
        }
        for i in 0..2 {
            out.push(self.omega_r(i));
        }
        for i in 0..2 {
            out.push(self.v_r(i));
        }
        if self.mode == Mode::OnGrid {
            out.push(self.get(Field::Psi(0)));
            out.push(self.get(Field::Psi(1)));
        }
        for i in 0..2 {
            let c = self.i_o(i).rotate(-th1);
            out.push(c.d);
            out.push(c.q);
        }
        if self.mode == Mode::OnGrid {
            let c = self.i_g().rotate(-th1);
            out.push(c.d);
            out.push(c.q);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_dense_and_ordered() {
        for mode in [Mode::OnGrid, Mode::OffGrid] {
            let idx: Vec<usize> = mode
                .fields()
                .into_iter()
                .map(|f| mode.index(f).unwrap())
                .collect();
            assert_eq!(idx, (0..mode.dim()).collect::<Vec<_>>());
        }
        assert_eq!(Mode::OffGrid.index(Field::ThetaG), None);
        assert_eq!(Mode::OffGrid.index(Field::Psi(0)), None);
        assert_eq!(Mode::OnGrid.index(Field::Theta(2)), None);
    }

    #[test]
    fn remaps_keep_shared_states() {
        let mut on = SystemState::zeros(Mode::OnGrid);
        for (k, v) in on.values.iter_mut().enumerate() {
            *v = k as f64 + 1.0;
        }
        let off = on.islanded().unwrap();
        assert_eq!(off.values, vec![1., 2., 4., 5., 6., 7., 10., 11., 13., 14.]);
        let back = off.reconnected([-1.0, -2.0]).unwrap();
        assert_eq!(back.get(Field::ThetaG), 0.0);
        assert_eq!(back.i_g(), DqPair::new(0.0, 0.0));
        assert_eq!(back.get(Field::Psi(1)), -2.0);
        assert_eq!(back.i_o(1), on.i_o(1));
        assert!(off.islanded().is_err());
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(SystemState::new(Mode::OnGrid, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 10];
        v[3] = f64::NAN;
        assert!(matches!(
            SystemState::new(Mode::OffGrid, v),
            Err(Error::NonFinite { index: 3, .. })
        ));
    }
}
