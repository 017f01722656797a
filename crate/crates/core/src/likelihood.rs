//! Poisson negative log-likelihood, its gradient, and the per-entry
//! divergences between Poisson laws.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::IntensityMatrix;
use crate::observations::ObservationSet;
use crate::region::FeasibleRegion;

fn check_observed_positive(x: &IntensityMatrix, obs: &ObservationSet) -> Result<()> {
    x.ensure_shape(obs.shape())?;
    for o in obs.samples() {
        let v = x.get(o.i, o.j);
        if !(v > 0.0) {
            return Err(Error::NonPositiveEntryAtObservation { i: o.i, j: o.j, value: v });
        }
    }
    Ok(())
}

/// `f(X) = -sum_{(i,j) in Omega} (Y_ij log X_ij - X_ij)`.
///
/// Only entries of `x` on the index set are read. Summation follows the
/// row-major order of the samples, so the result is bit-reproducible.
pub fn neg_log_likelihood(x: &IntensityMatrix, obs: &ObservationSet) -> Result<f64> {
    check_observed_positive(x, obs)?;
    Ok(nll_unchecked(x.as_matrix(), obs))
}

pub(crate) fn nll_unchecked(x: &DMatrix<f64>, obs: &ObservationSet) -> f64 {
    let mut acc = 0.0;
    for o in obs.samples() {
        let v = x[(o.i, o.j)];
        let y = o.y as f64;
        // y = 0 contributes just +x, and avoids 0 * log.
        acc += if o.y == 0 { v } else { v - y * v.ln() };
    }
    acc
}

/// Gradient of [`neg_log_likelihood`]: `1 - Y_ij / X_ij` on the index set,
/// zero elsewhere.
pub fn gradient(x: &IntensityMatrix, obs: &ObservationSet) -> Result<IntensityMatrix> {
    check_observed_positive(x, obs)?;
    Ok(IntensityMatrix::from_matrix_unchecked(gradient_unchecked(
        x.as_matrix(),
        obs,
    )))
}

pub(crate) fn gradient_unchecked(x: &DMatrix<f64>, obs: &ObservationSet) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for o in obs.samples() {
        g[(o.i, o.j)] = 1.0 - o.y as f64 / x[(o.i, o.j)];
    }
    g
}

/// Lipschitz constant of the gradient over the box, `alpha / beta^2`.
pub fn lipschitz_constant(region: &FeasibleRegion) -> Result<f64> {
    region.validate()?;
    Ok(region.alpha / (region.beta * region.beta))
}

/// Lipschitz constant of the gradient over the box for this particular
/// data, `max(alpha, max_Omega Y) / beta^2`.
///
/// The Hessian of `f` is diagonal with entries `Y_ij / X_ij^2`, so
/// [`lipschitz_constant`] only bounds it while every count is at most
/// `alpha`. Poisson counts routinely exceed their rate; this version stays
/// valid for any sample and agrees with the region constant otherwise.
pub fn data_lipschitz_constant(obs: &ObservationSet, region: &FeasibleRegion) -> Result<f64> {
    let base = lipschitz_constant(region)?;
    let y_max = obs.samples().iter().map(|o| o.y).max().unwrap_or(0) as f64;
    Ok(base.max(y_max / (region.beta * region.beta)))
}

fn check_positive(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter(p))
    }
}

/// KL divergence between Poisson(p) and Poisson(q): `p log(p/q) - (p - q)`.
pub fn kl(p: f64, q: f64) -> Result<f64> {
    check_positive(p)?;
    check_positive(q)?;
    Ok(p * (p / q).ln() - (p - q))
}

/// Squared Hellinger distance between Poisson(p) and Poisson(q):
/// `2 - 2 exp(-(sqrt p - sqrt q)^2 / 2)`.
pub fn hellinger_sq(p: f64, q: f64) -> Result<f64> {
    check_positive(p)?;
    check_positive(q)?;
    let d = p.sqrt() - q.sqrt();
    // -2 expm1(-z) == 2 - 2 e^{-z}, without cancellation for small z.
    Ok(-2.0 * (-0.5 * d * d).exp_m1())
}

fn averaged(
    p: &IntensityMatrix,
    q: &IntensityMatrix,
    f: impl Fn(f64, f64) -> Result<f64>,
) -> Result<f64> {
    q.ensure_shape(p.shape())?;
    let mut acc = 0.0;
    for (a, b) in p.as_matrix().iter().zip(q.as_matrix().iter()) {
        acc += f(*a, *b)?;
    }
    Ok(acc / (p.d1() * p.d2()) as f64)
}

/// Entry-averaged KL divergence.
pub fn kl_matrix(p: &IntensityMatrix, q: &IntensityMatrix) -> Result<f64> {
    averaged(p, q, kl)
}

/// Entry-averaged squared Hellinger distance.
pub fn hellinger_sq_matrix(p: &IntensityMatrix, q: &IntensityMatrix) -> Result<f64> {
    averaged(p, q, hellinger_sq)
}

/// `T = (alpha - beta)^2 / (8 beta)`.
pub fn hellinger_t(region: &FeasibleRegion) -> f64 {
    let gap = region.alpha - region.beta;
    gap * gap / (8.0 * region.beta)
}

/// `(1 - e^{-t}) / t`, continuous at `t = 0` where it equals 1.
pub fn one_minus_exp_ratio(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        -(-t).exp_m1() / t
    }
}

/// Constant `c` with `d_H^2(M, N) >= c * mse(M, N)` for any `M`, `N` in the
/// box: `c = (1 - e^{-T}) / (4 alpha T)`, and `1 / (4 alpha)` when
/// `alpha == beta`.
pub fn hellinger_mse_floor(region: &FeasibleRegion) -> f64 {
    one_minus_exp_ratio(hellinger_t(region)) / (4.0 * region.alpha)
}
