//! dq-frame pairs and the common reference frame.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Direct/quadrature components of a voltage or current.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DqPair<T = f64> {
    pub d: T,
    pub q: T,
}

impl<T: Scalar> DqPair<T> {
    pub fn new(d: T, q: T) -> Self {
        DqPair { d, q }
    }

    /// `magnitude·(cos θ, sin θ)`.
    pub fn polar(magnitude: T, theta: T) -> Self {
        DqPair::new(magnitude * theta.cos(), magnitude * theta.sin())
    }

    pub fn scale(self, k: f64) -> Self {
        DqPair::new(self.d * k, self.q * k)
    }

    pub fn magnitude(self) -> T {
        (self.d * self.d + self.q * self.q).sqrt()
    }

    /// Rotates by `angle` (counter-clockwise in the d-q plane).
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        DqPair::new(self.d * c - self.q * s, self.d * s + self.q * c)
    }
}

impl<T: Scalar> std::ops::Add for DqPair<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        DqPair::new(self.d + o.d, self.q + o.q)
    }
}

/// Which rotating frame the dq quantities are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceFrame {
    /// Rotates at the nominal grid frequency.
    FixedNominal,
    /// Rotates with the droop frequency of inverter 1, so θ_1 stays constant.
    Vsi1Anchored,
}

impl ReferenceFrame {
    /// Frame speed given the nominal frequency and inverter 1's droop frequency.
    #[inline]
    pub fn omega_ref<T: Scalar>(self, omega_nom: f64, omega_r1: T) -> T {
        match self {
            ReferenceFrame::FixedNominal => T::cst(omega_nom),
            ReferenceFrame::Vsi1Anchored => omega_r1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReferenceFrame::FixedNominal => "fixed_nominal",
            ReferenceFrame::Vsi1Anchored => "vsi1_anchored",
        }
    }
}
