//! Projections onto the box and the nuclear-norm ball, their alternating
//! composition, and singular value thresholding.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Svd;
use crate::matrix::IntensityMatrix;
use crate::region::FeasibleRegion;

/// Stopping threshold on `||V_j - U_j||_F` for alternating projection.
pub const DEFAULT_PROJ_TOL: f64 = 1e-6;
pub const DEFAULT_PROJ_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    #[serde(skip)]
    pub result: IntensityMatrix,
    pub iterations: usize,
    /// Frobenius distance between the last two half-steps.
    pub final_gap: f64,
    /// `||V_j - U_j||_F` for every sweep.
    pub gaps: Vec<f64>,
}

/// Elementwise clamp into `[beta, alpha]`; the Frobenius-nearest point of
/// the box.
pub fn project_box(x: &IntensityMatrix, region: &FeasibleRegion) -> Result<IntensityMatrix> {
    x.ensure_shape(region.shape())?;
    Ok(IntensityMatrix::from_matrix_unchecked(clamp_to_box(
        x.as_matrix(),
        region,
    )))
}

pub(crate) fn clamp_to_box(x: &DMatrix<f64>, region: &FeasibleRegion) -> DMatrix<f64> {
    x.map(|v| region.clamp(v))
}

/// Shift `theta >= 0` such that `sum_i max(s_i - theta, 0) = radius`, for
/// singular values `s` sorted in descending order whose sum exceeds
/// `radius`. Scans the breakpoints of the piecewise-linear sum.
pub fn l1_ball_shift(s_desc: &[f64], radius: f64) -> f64 {
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in s_desc.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Euclidean projection onto `{X : ||X||_* <= radius}`.
///
/// Points already inside are returned unchanged; otherwise the singular
/// values are soft-thresholded by the shift that lands exactly on the
/// sphere.
pub fn project_nuclear_ball(x: &IntensityMatrix, radius: f64) -> Result<IntensityMatrix> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::BadRadius(radius));
    }
    Ok(IntensityMatrix::from_matrix_unchecked(nuclear_ball_raw(
        x.as_matrix(),
        radius,
    )?))
}

pub(crate) fn nuclear_ball_raw(x: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    let svd = Svd::new(x)?;
    if svd.nuclear_norm() <= radius {
        return Ok(x.clone());
    }
    let theta = l1_ball_shift(svd.s.as_slice(), radius);
    Ok(svd.recompose_with(|s| (s - theta).max(0.0)))
}

/// Singular value thresholding `D_tau(X) = U diag((s_i - tau)_+) V^T`, the
/// minimizer of `0.5 ||Y - X||_F^2 + tau ||Y||_*`.
pub fn svt(x: &IntensityMatrix, tau: f64) -> Result<IntensityMatrix> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::BadTau(tau));
    }
    Ok(IntensityMatrix::from_matrix_unchecked(svt_raw(
        x.as_matrix(),
        tau,
    )?))
}

pub(crate) fn svt_raw(x: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(Svd::new(x)?.recompose_with(|s| (s - tau).max(0.0)))
}

/// Alternates `V_j = P_ball(U_{j-1})`, `U_j = P_box(V_j)` until
/// `||V_j - U_j||_F <= tol`.
///
/// The result always lies in the box. It is a point near the
/// intersection, not the metric projection onto it. Hitting `max_iter`
/// yields [`Error::NoConvergence`] carrying the last report.
pub fn alternating_projection(
    u0: &IntensityMatrix,
    region: &FeasibleRegion,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionReport> {
    u0.ensure_shape(region.shape())?;
    let (u, gaps, converged) = alternate_raw(u0.as_matrix().clone(), region, tol, max_iter)?;
    let report = ProjectionReport {
        result: IntensityMatrix::from_matrix_unchecked(u),
        iterations: gaps.len(),
        final_gap: *gaps.last().unwrap(),
        gaps,
    };
    if converged {
        Ok(report)
    } else {
        Err(Error::NoConvergence(Box::new(report)))
    }
}

pub(crate) fn alternate_raw(
    mut u: DMatrix<f64>,
    region: &FeasibleRegion,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    check_projection_params(tol, max_iter)?;
    let radius = region.nuclear_radius();
    let mut gaps = Vec::new();
    for _ in 0..max_iter {
        let v = nuclear_ball_raw(&u, radius)?;
        u = clamp_to_box(&v, region);
        let gap = (&v - &u).norm();
        gaps.push(gap);
        if gap <= tol {
            return Ok((u, gaps, true));
        }
    }
    Ok((u, gaps, false))
}

/// Dykstra's variant of the alternation, which converges to the Frobenius
/// projection onto the intersection rather than to an arbitrary point of
/// it.
///
/// Stops once both the feasibility gap `||Y_j - X_j||_F` and the step
/// `||X_j - X_{j-1}||_F` fall to `tol`; `gaps` records the larger of the
/// two. The result lies in the box.
pub fn dykstra_projection(
    u0: &IntensityMatrix,
    region: &FeasibleRegion,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionReport> {
    u0.ensure_shape(region.shape())?;
    let (x, gaps, converged) = dykstra_raw(u0.as_matrix().clone(), region, tol, max_iter)?;
    let report = ProjectionReport {
        result: IntensityMatrix::from_matrix_unchecked(x),
        iterations: gaps.len(),
        final_gap: *gaps.last().unwrap(),
        gaps,
    };
    if converged {
        Ok(report)
    } else {
        Err(Error::NoConvergence(Box::new(report)))
    }
}

pub(crate) fn dykstra_raw(
    u: DMatrix<f64>,
    region: &FeasibleRegion,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    check_projection_params(tol, max_iter)?;
    let radius = region.nuclear_radius();
    let mut x = u;
    let mut p = DMatrix::zeros(x.nrows(), x.ncols());
    let mut q = p.clone();
    let mut gaps = Vec::new();
    for _ in 0..max_iter {
        let y = nuclear_ball_raw(&(&x + &p), radius)?;
        p += &x - &y;
        let x_next = clamp_to_box(&(&y + &q), region);
        q += &y - &x_next;
        let gap = (&y - &x_next).norm().max((&x_next - &x).norm());
        x = x_next;
        gaps.push(gap);
        if gap <= tol {
            return Ok((x, gaps, true));
        }
    }
    Ok((x, gaps, false))
}

fn check_projection_params(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::BadConfig(format!("projection tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::BadConfig("projection max_iter must be at least 1".into()));
    }
    Ok(())
}
