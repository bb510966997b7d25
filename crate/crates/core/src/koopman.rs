//! Finite-dimensional Koopman operators fitted by extended dynamic mode decomposition.
//!
//! Lifted samples are row vectors that evolve as `ψ(x_{k+1})ᵀ ≈ ψ(x_k)ᵀ K`, so the
//! closed-form least-squares operator is `K = G⁺ A` with
//! `G = (1/M) Σ ψ_k ψ_kᵀ` and `A = (1/M) Σ ψ_k ψ_{k+1}ᵀ`.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{LiftedPoint, LiftedTrajectory};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Where an operator's training window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub trial_id: u32,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanOperator {
    #[serde(with = "row_major")]
    matrix: DMatrix<f64>,
    pub basis_id: String,
    /// Training window; `None` for synthesized exemplars.
    pub window: Option<WindowMeta>,
    pub residual: f64,
}

impl KoopmanOperator {
    pub fn from_matrix(matrix: DMatrix<f64>, basis_id: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid(
                "a Koopman operator must be a non-empty square matrix",
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        Ok(Self {
            matrix,
            basis_id: basis_id.into(),
            window: None,
            residual: 0.0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row-major flattening into `ℝ^{N²}`.
    pub fn flatten(&self) -> Vec<f64> {
        let n = self.dimension();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    /// One-step lifted prediction `pᵀ K`.
    pub fn predict(&self, p: &LiftedPoint) -> Result<LiftedPoint> {
        let n = self.dimension();
        if p.len() != n {
            return Err(Error::invalid(alloc::format!(
                "point has dimension {} but operator is {n}x{n}",
                p.len()
            )));
        }
        Ok(LiftedPoint::new(predict_slice(&self.matrix, p.as_slice())))
    }

    /// `½ Σ_k ‖ψ(x_{k+1}) − ψ(x_k)ᵀK‖²` over consecutive pairs of `points`.
    pub fn residual_on(&self, points: &[LiftedPoint]) -> Result<f64> {
        let n = self.dimension();
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::invalid(alloc::format!(
                "point has dimension {} but operator is {n}x{n}",
                p.len()
            )));
        }
        Ok(residual_unchecked(&self.matrix, points))
    }

    pub fn residual(&self, lifted: &LiftedTrajectory) -> Result<f64> {
        self.residual_on(&lifted.points)
    }
}

fn predict_slice(k: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    let n = k.nrows();
    (0..n)
        .map(|j| (0..n).map(|i| p[i] * k[(i, j)]).sum())
        .collect()
}

fn residual_unchecked(k: &DMatrix<f64>, points: &[LiftedPoint]) -> f64 {
    let mut total = 0.0;
    for pair in points.windows(2) {
        let pred = predict_slice(k, pair[0].as_slice());
        total += pair[1]
            .as_slice()
            .iter()
            .zip(&pred)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    0.5 * total
}

/// The averaged Gram and cross-covariance matrices of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub samples: usize,
}

pub fn gram_matrices(points: &[LiftedPoint]) -> Result<GramPair> {
    if points.len() < 2 {
        return Err(Error::invalid(alloc::format!(
            "need at least 2 lifted points, got {}",
            points.len()
        )));
    }
    let n = points[0].len();
    if n == 0 || points.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("lifted points have inconsistent dimension"));
    }
    let m = points.len() - 1;
    let x = DMatrix::from_fn(m, n, |k, i| points[k][i]);
    let y = DMatrix::from_fn(m, n, |k, i| points[k + 1][i]);
    let scale = 1.0 / m as f64;
    let xt = x.transpose();
    let mut g = &xt * &x * scale;
    let a = &xt * &y * scale;
    // symmetrize away rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(GramPair { g, a, samples: m })
}

/// Moore–Penrose pseudoinverse by SVD, truncating singular values below
/// `PINV_RELATIVE_TOLERANCE · σ_max`.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(cols, rows);
    if sigma_max == 0.0 {
        return out;
    }
    let cutoff = PINV_RELATIVE_TOLERANCE * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    for (r, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let v_col: DVector<f64> = vt.row(r).transpose();
            let u_col = u.column(r);
            out += (v_col * u_col.transpose()) / s;
        }
    }
    out
}

/// Fits `K = G⁺A` on a window of lifted points.
pub fn fit_window(
    points: &[LiftedPoint],
    basis_id: &str,
    window: Option<WindowMeta>,
) -> Result<KoopmanOperator> {
    let gram = gram_matrices(points)?;
    let matrix = pseudo_inverse(&gram.g) * &gram.a;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(
            "fitted operator has non-finite entries".into(),
        ));
    }
    let residual = residual_unchecked(&matrix, points);
    Ok(KoopmanOperator {
        matrix,
        basis_id: basis_id.into(),
        window,
        residual,
    })
}

/// Fits a single operator to a whole lifted trajectory.
pub fn fit_koopman(lifted: &LiftedTrajectory, basis_id: &str) -> Result<KoopmanOperator> {
    let meta = WindowMeta {
        trial_id: lifted.trial_id,
        start: 0,
        len: lifted.len(),
    };
    fit_window(&lifted.points, basis_id, Some(meta))
}

pub(crate) mod row_major {
    use alloc::vec::Vec;

    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}
