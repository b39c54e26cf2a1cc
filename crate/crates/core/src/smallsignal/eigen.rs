use super::LinearModel;
use crate::error::{Error, Result};
use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

/// Eigenvalues with |λ| below this are zero modes.
pub const ZERO_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    Regular,
    /// Angle-translation invariance of a frame that does not follow any source.
    Structural,
    /// The pinned angle of an anchored frame (its row is identically zero).
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub value: Complex64,
    pub kind: ModeKind,
}

/// All eigenvalues sorted by decreasing real part, then decreasing imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    /// Largest real part over the regular modes (−∞ if there are none).
    pub abscissa: f64,
}

impl Spectrum {
    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|e| e.value).collect()
    }

    pub fn regular(&self) -> Vec<Complex64> {
        self.of_kind(ModeKind::Regular)
    }

    pub fn of_kind(&self, kind: ModeKind) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.value)
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.abscissa < 0.0
    }

    /// Spectrum of an arbitrary matrix with no reference row.
    pub fn of_matrix(a: &DMatrix<f64>) -> Result<Spectrum> {
        spectrum(a, None)
    }
}

/// Eigenvalues of the state matrix with zero modes classified.
///
/// Rows that are exactly zero are deflated first, so their eigenvalue is an
/// exact 0 regardless of the norm of the rest of the matrix.
///
/// ```
/// use droopgrid::smallsignal::Spectrum;
/// use nalgebra::DMatrix;
/// let s = Spectrum::of_matrix(&DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0])).unwrap();
/// assert_eq!(s.values().iter().map(|l| l.im).collect::<Vec<_>>(), vec![3.0, -3.0]);
/// ```
pub fn eigen_spectrum(lin: &LinearModel) -> Result<Spectrum> {
    spectrum(&lin.a, lin.reference_row)
}

fn spectrum(a: &DMatrix<f64>, reference_row: Option<usize>) -> Result<Spectrum> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::param("matrix", "must be square"));
    }
    if let Some(index) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            context: "state matrix",
        });
    }
    // deflate identically zero rows
    let mut keep: Vec<usize> = (0..n).collect();
    let mut deflated = Vec::new();
    loop {
        let zero = keep
            .iter()
            .position(|&i| keep.iter().all(|&j| a[(i, j)] == 0.0));
        match zero {
            Some(pos) => deflated.push(keep.remove(pos)),
            None => break,
        }
    }
    let mut values: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); deflated.len()];
    if !keep.is_empty() {
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
        let schur = Schur::try_new(sub, f64::EPSILON, 100_000).ok_or_else(|| Error::Eigen {
            rows: n,
            dump: format!("{a:.6e}"),
        })?;
        values.extend(schur.complex_eigenvalues().iter().copied());
    }
    // Schur returns exact conjugate pairs; clean signed zeros for stable output
    for v in values.iter_mut() {
        if v.im == 0.0 {
            v.im = 0.0;
        }
        if v.re == 0.0 {
            v.re = 0.0;
        }
    }

    let mut zero_idx: Vec<usize> = (0..values.len())
        .filter(|&k| values[k].norm() < ZERO_THRESHOLD)
        .collect();
    zero_idx.sort_by(|&a, &b| values[a].norm().total_cmp(&values[b].norm()));
    let mut kinds = vec![ModeKind::Regular; values.len()];
    for (rank, &k) in zero_idx.iter().enumerate() {
        kinds[k] = if rank == 0 && reference_row.is_some() {
            ModeKind::Reference
        } else {
            ModeKind::Structural
        };
    }
    let mut eigenvalues: Vec<Eigenvalue> = values
        .into_iter()
        .zip(kinds)
        .map(|(value, kind)| Eigenvalue { value, kind })
        .collect();
    eigenvalues.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(b.value.im.total_cmp(&a.value.im))
    });
    let abscissa = eigenvalues
        .iter()
        .filter(|e| e.kind == ModeKind::Regular)
        .map(|e| e.value.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum {
        eigenvalues,
        abscissa,
    })
}
