//! Thin SVD layer over nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero
/// when reporting rank.
pub const RANK_REL_TOL: f64 = 1e-12;

const SVD_MAX_SWEEPS: usize = 100_000;
/// Convergence thresholds tried in order, each on the matrix and on its
/// transpose. Any single setting occasionally returns inaccurate vectors.
const SVD_EPS: [f64; 4] = [5.0 * f64::EPSILON, f64::EPSILON, 1e-13, 1e-12];
const SVD_RESIDUAL_TOL: f64 = 1e-10;

/// Thin SVD `A = U diag(s) V^T` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let scale = a.norm().max(f64::MIN_POSITIVE);
        let at = a.transpose();
        let accurate = |svd: &Self| (svd.recompose_with(|s| s) - a).norm() <= SVD_RESIDUAL_TOL * scale;
        for eps in SVD_EPS {
            if let Some(svd) = Self::attempt(a, eps).filter(accurate) {
                return Ok(svd);
            }
            if let Some(svd) = Self::attempt(&at, eps).map(Self::transposed).filter(accurate) {
                return Ok(svd);
            }
        }
        Err(Error::SvdFailure)
    }

    fn transposed(self) -> Self {
        Self {
            u: self.v_t.transpose(),
            s: self.s,
            v_t: self.u.transpose(),
        }
    }

    fn attempt(a: &DMatrix<f64>, eps: f64) -> Option<Self> {
        let svd = a.clone().try_svd_unordered(true, true, eps, SVD_MAX_SWEEPS)?;
        let (u, v_t) = (svd.u?, svd.v_t?);
        let s = svd.singular_values;
        if s.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        Some(Self {
            u: u.select_columns(&order),
            s: DVector::from_iterator(order.len(), order.iter().map(|&k| s[k])),
            v_t: v_t.select_rows(&order),
        })
    }

    /// Rebuilds `U diag(f(s)) V^T`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut u = self.u.clone();
        for (k, mut col) in u.column_iter_mut().enumerate() {
            col *= f(self.s[k]);
        }
        u * &self.v_t
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn rank(&self) -> usize {
        let top = self.s.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&s| s > RANK_REL_TOL * top).count()
    }
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = a
        .clone()
        .try_svd_unordered(false, false, SVD_EPS[0], SVD_MAX_SWEEPS)
        .ok_or(Error::SvdFailure)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure);
    }
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Numerical rank with the relative cutoff [`RANK_REL_TOL`].
pub fn numerical_rank(a: &DMatrix<f64>) -> Result<usize> {
    let s = singular_values(a)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_REL_TOL * top).count())
}
