//! Completion solvers: projected gradient, its accelerated variant, and
//! PMLSV (gradient step, singular value shrinkage, box clamp, backtracking).

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{data_lipschitz_constant, gradient_unchecked, nll_unchecked};
use crate::linalg::Svd;
use crate::matrix::IntensityMatrix;
use crate::observations::ObservationSet;
use crate::projections::{alternate_raw, clamp_to_box, dykstra_raw, DEFAULT_PROJ_MAX_ITER, DEFAULT_PROJ_TOL};
use crate::region::FeasibleRegion;

/// Backtracking gives up once `L` passes this value.
pub const MAX_BACKTRACK_L: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "PG")]
    Pg,
    #[serde(rename = "APG")]
    Apg,
    #[serde(rename = "PMLSV")]
    Pmlsv,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pg => "PG",
            Algorithm::Apg => "APG",
            Algorithm::Pmlsv => "PMLSV",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" => Ok(Algorithm::Pg),
            "apg" => Ok(Algorithm::Apg),
            "pmlsv" => Ok(Algorithm::Pmlsv),
            _ => Err(Error::BadConfig(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxIter,
    QGapSmall,
    ProjectionFailure,
}

/// How PG and APG realize the projection onto the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    /// Plain alternation between ball and box; lands in the intersection
    /// but not necessarily at its nearest point.
    Alternating,
    /// Dykstra's corrected alternation; converges to the nearest point.
    Dykstra,
}

impl std::str::FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alternating" => Ok(ProjectionMethod::Alternating),
            "dykstra" => Ok(ProjectionMethod::Dykstra),
            _ => Err(Error::BadConfig(format!("unknown projection method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iter: usize,
    /// Nuclear-norm weight; PMLSV only.
    pub lambda: f64,
    /// Initial `L` for PMLSV backtracking.
    pub l0: f64,
    pub eta: f64,
    pub proj_tol: f64,
    pub proj_max_iter: usize,
    pub projection: ProjectionMethod,
    /// Carried into run metadata; the solvers themselves draw no randomness.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Pmlsv,
            max_iter: 2000,
            lambda: 0.1,
            l0: 1e-4,
            eta: 1.1,
            proj_tol: DEFAULT_PROJ_TOL,
            proj_max_iter: DEFAULT_PROJ_MAX_ITER,
            projection: ProjectionMethod::Dykstra,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn with_max_iter(mut self, k: usize) -> Self {
        self.max_iter = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return bad(format!("eta must exceed 1, got {}", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.l0 > 0.0 && self.l0.is_finite()) {
            return bad(format!("l0 must be positive, got {}", self.l0));
        }
        if !(self.proj_tol > 0.0 && self.proj_tol.is_finite()) {
            return bad(format!("proj_tol must be positive, got {}", self.proj_tol));
        }
        if self.proj_max_iter < 1 {
            return bad("proj_max_iter must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub algorithm: Algorithm,
    pub iterations_run: usize,
    pub termination: Termination,
    pub wall_time_sec: f64,
    /// `f(M_k)` after each iteration.
    pub objective_trace: Vec<f64>,
    /// Step constant in force at the end; fixed for PG and APG.
    pub final_l: f64,
    /// `Q_L(M_k, M_{k-1})` at each accepted PMLSV step; empty otherwise.
    pub q_trace: Vec<f64>,
    /// Share of estimate entries sitting on `beta` or `alpha`.
    pub box_active_fraction: f64,
    #[serde(skip)]
    pub estimate: IntensityMatrix,
}

impl SolverReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }
}

/// One accepted iteration, as handed to an observer.
#[derive(Debug)]
pub struct Step<'a> {
    pub k: usize,
    pub prev: &'a DMatrix<f64>,
    pub current: &'a DMatrix<f64>,
    /// Point the gradient step started from: `prev` except in APG.
    pub anchor: &'a DMatrix<f64>,
    pub l: f64,
    pub objective: f64,
}

/// `Y_ij` on the index set and `(alpha + beta) / 2` elsewhere, clamped
/// into the box.
pub fn init_matrix(obs: &ObservationSet, region: &FeasibleRegion) -> Result<IntensityMatrix> {
    region.validate()?;
    check_shape(obs, region)?;
    Ok(IntensityMatrix::from_matrix_unchecked(init_raw(obs, region)))
}

fn init_raw(obs: &ObservationSet, region: &FeasibleRegion) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(region.d1, region.d2, region.midpoint());
    for o in obs.samples() {
        m[(o.i, o.j)] = region.clamp(o.y as f64);
    }
    m
}

fn check_shape(obs: &ObservationSet, region: &FeasibleRegion) -> Result<()> {
    if obs.shape() != region.shape() {
        return Err(Error::ShapeMismatch {
            expected: region.shape(),
            got: obs.shape(),
        });
    }
    Ok(())
}

/// Quadratic model `f(P) + <M - P, grad f(P)> + (t/2) ||M - P||_F^2` with
/// `P = m_prev`.
pub fn q_model(m: &IntensityMatrix, m_prev: &IntensityMatrix, t: f64, obs: &ObservationSet) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::NonPositiveParameter(t));
    }
    m.ensure_shape(obs.shape())?;
    m_prev.ensure_shape(obs.shape())?;
    // Validates positivity on the index set.
    crate::likelihood::neg_log_likelihood(m_prev, obs)?;
    Ok(q_raw(m.as_matrix(), m_prev.as_matrix(), t, obs))
}

fn q_raw(m: &DMatrix<f64>, p: &DMatrix<f64>, t: f64, obs: &ObservationSet) -> f64 {
    let f_p = nll_unchecked(p, obs);
    let mut inner = 0.0;
    for o in obs.samples() {
        let g = 1.0 - o.y as f64 / p[(o.i, o.j)];
        inner += (m[(o.i, o.j)] - p[(o.i, o.j)]) * g;
    }
    f_p + inner + 0.5 * t * (m - p).norm_squared()
}

fn box_active_fraction(x: &DMatrix<f64>, region: &FeasibleRegion) -> f64 {
    let active = x.iter().filter(|&&v| v == region.alpha || v == region.beta).count();
    active as f64 / x.len() as f64
}

fn check_inputs(obs: &ObservationSet, region: &FeasibleRegion, cfg: &SolverConfig) -> Result<()> {
    region.validate()?;
    cfg.validate()?;
    check_shape(obs, region)?;
    if obs.is_empty() {
        return Err(Error::NoObservations);
    }
    Ok(())
}

pub fn solve_pg(obs: &ObservationSet, region: &FeasibleRegion, cfg: &SolverConfig) -> Result<SolverReport> {
    solve_pg_observed(obs, region, cfg, |_| {})
}

pub fn solve_apg(obs: &ObservationSet, region: &FeasibleRegion, cfg: &SolverConfig) -> Result<SolverReport> {
    solve_apg_observed(obs, region, cfg, |_| {})
}

pub fn solve_pmlsv(obs: &ObservationSet, region: &FeasibleRegion, cfg: &SolverConfig) -> Result<SolverReport> {
    solve_pmlsv_observed(obs, region, cfg, |_| {})
}

/// Runs the algorithm named in `cfg`.
pub fn solve(obs: &ObservationSet, region: &FeasibleRegion, cfg: &SolverConfig) -> Result<SolverReport> {
    solve_observed(obs, region, cfg, |_| {})
}

pub fn solve_observed(
    obs: &ObservationSet,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    observer: impl FnMut(&Step),
) -> Result<SolverReport> {
    match cfg.algorithm {
        Algorithm::Pg => solve_pg_observed(obs, region, cfg, observer),
        Algorithm::Apg => solve_apg_observed(obs, region, cfg, observer),
        Algorithm::Pmlsv => solve_pmlsv_observed(obs, region, cfg, observer),
    }
}

pub fn solve_pg_observed(
    obs: &ObservationSet,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    observer: impl FnMut(&Step),
) -> Result<SolverReport> {
    projected_gradient(obs, region, cfg, false, observer)
}

pub fn solve_apg_observed(
    obs: &ObservationSet,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    observer: impl FnMut(&Step),
) -> Result<SolverReport> {
    projected_gradient(obs, region, cfg, true, observer)
}

fn projected_gradient(
    obs: &ObservationSet,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    accelerated: bool,
    mut observer: impl FnMut(&Step),
) -> Result<SolverReport> {
    check_inputs(obs, region, cfg)?;
    let start = Instant::now();
    let l = data_lipschitz_constant(obs, region)?;
    let mut prev = init_raw(obs, region);
    let mut z = prev.clone();
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut termination = Termination::MaxIter;

    for k in 1..=cfg.max_iter {
        let step = &z - gradient_unchecked(&z, obs) / l;
        let (current, _, converged) = match cfg.projection {
            ProjectionMethod::Alternating => alternate_raw(step, region, cfg.proj_tol, cfg.proj_max_iter)?,
            ProjectionMethod::Dykstra => dykstra_raw(step, region, cfg.proj_tol, cfg.proj_max_iter)?,
        };
        let objective = nll_unchecked(&current, obs);
        trace.push(objective);
        observer(&Step {
            k,
            prev: &prev,
            current: &current,
            anchor: &z,
            l,
            objective,
        });
        if accelerated {
            let mu = (k as f64 - 1.0) / (k as f64 + 2.0);
            // The extrapolated point can leave the box, where f may be
            // undefined.
            z = clamp_to_box(&(&current + (&current - &prev) * mu), region);
        } else {
            z = current.clone();
        }
        prev = current;
        if !converged {
            termination = Termination::ProjectionFailure;
            break;
        }
    }

    Ok(SolverReport {
        algorithm: if accelerated { Algorithm::Apg } else { Algorithm::Pg },
        iterations_run: trace.len(),
        termination,
        wall_time_sec: start.elapsed().as_secs_f64(),
        objective_trace: trace,
        final_l: l,
        q_trace: Vec::new(),
        box_active_fraction: box_active_fraction(&prev, region),
        estimate: IntensityMatrix::from_matrix_unchecked(prev),
    })
}

pub fn solve_pmlsv_observed(
    obs: &ObservationSet,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&Step),
) -> Result<SolverReport> {
    check_inputs(obs, region, cfg)?;
    let start = Instant::now();
    let mut l = cfg.l0;
    let mut prev = init_raw(obs, region);
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut q_trace = Vec::with_capacity(cfg.max_iter);
    let mut termination = Termination::MaxIter;
    let gap_tol = 0.5 / cfg.max_iter as f64;

    for k in 1..=cfg.max_iter {
        let grad = gradient_unchecked(&prev, obs);
        let (current, objective, q) = loop {
            let c = &prev - &grad / l;
            let shrink = cfg.lambda / l;
            let candidate = clamp_to_box(&Svd::new(&c)?.recompose_with(|s| (s - shrink).max(0.0)), region);
            let objective = nll_unchecked(&candidate, obs);
            let q = q_raw(&candidate, &prev, l, obs);
            if objective <= q {
                break (candidate, objective, q);
            }
            l *= cfg.eta;
            if l > MAX_BACKTRACK_L {
                return Err(Error::BacktrackOverflow(l));
            }
        };
        trace.push(objective);
        q_trace.push(q);
        observer(&Step {
            k,
            prev: &prev,
            current: &current,
            anchor: &prev,
            l,
            objective,
        });
        prev = current;
        if (objective - q).abs() < gap_tol {
            termination = Termination::QGapSmall;
            break;
        }
    }

    Ok(SolverReport {
        algorithm: Algorithm::Pmlsv,
        iterations_run: trace.len(),
        termination,
        wall_time_sec: start.elapsed().as_secs_f64(),
        objective_trace: trace,
        final_l: l,
        q_trace,
        box_active_fraction: box_active_fraction(&prev, region),
        estimate: IntensityMatrix::from_matrix_unchecked(prev),
    })
}
