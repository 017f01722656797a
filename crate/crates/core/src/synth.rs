//! Ground-truth generation, Bernoulli sampling, Poisson observations, and
//! the Monte-Carlo harness built on them.
//!
//! Every random stream is keyed by `(seed, index, label)`, so the truth,
//! the mask and the counts of one trial never share draws, and adding
//! trials leaves earlier ones untouched.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{hellinger_mse_floor, hellinger_sq_matrix, kl};
use crate::matrix::{membership, mse_per_entry, IntensityMatrix};
use crate::observations::{Mask, Observation, ObservationSet};
use crate::region::{FeasibleRegion, DEFAULT_MEMBERSHIP_TOL};
use crate::solvers::{solve, SolverConfig, SolverReport};

pub const SWEEP_CSV_HEADER: &str = "m,trials,mean_mse,std_mse,mean_iters,mean_wall_time";

/// Independent generator for one labeled stream.
pub fn substream(seed: u64, index: u64, label: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    for (k, b) in label.bytes().take(16).enumerate() {
        key[16 + k] = b;
    }
    ChaCha8Rng::from_seed(key)
}

/// Seed of trial `t` under a base seed.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    substream(seed, t, "trial").random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub region: FeasibleRegion,
    /// Target rank of the truth; at most `region.r`.
    pub rank: usize,
    /// Expected number of observed cells.
    pub mask_m: f64,
    pub seed: u64,
}

impl SynthesisSpec {
    /// Rank taken from the region.
    pub fn new(region: FeasibleRegion, mask_m: f64, seed: u64) -> Self {
        let rank = region.r;
        Self {
            region,
            rank,
            mask_m,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        let (d1, d2) = self.region.shape();
        if self.rank < 1 || self.rank > self.region.r {
            return Err(Error::BadRank {
                r: self.rank,
                max: self.region.r,
            });
        }
        check_m(self.mask_m, d1 * d2)
    }
}

fn check_m(m: f64, cells: usize) -> Result<()> {
    if m > 0.0 && m <= cells as f64 {
        Ok(())
    } else {
        Err(Error::BadM { m, cells })
    }
}

/// Rank-`rank` truth in `[beta, alpha]`: a uniform rank-`(rank - 1)`
/// product rescaled affinely onto the box, the shift adding one rank.
pub fn make_low_rank(spec: &SynthesisSpec) -> Result<IntensityMatrix> {
    spec.validate()?;
    let region = &spec.region;
    let (d1, d2) = region.shape();
    if region.alpha == region.beta {
        return IntensityMatrix::constant(d1, d2, region.alpha);
    }
    if spec.rank < 2 {
        return Err(Error::RankInfeasible(spec.rank));
    }
    let k = spec.rank - 1;
    let mut rng = substream(spec.seed, 0, "truth");
    let a = DMatrix::from_fn(d1, k, |_, _| rng.random::<f64>());
    let b = DMatrix::from_fn(d2, k, |_, _| rng.random::<f64>());
    let p = a * b.transpose();
    let (lo, hi) = (p.min(), p.max());
    if !(hi > lo) {
        return Err(Error::DegenerateRange);
    }
    let mut width = region.alpha - region.beta;
    loop {
        let m = p.map(|v| (region.beta + width * (v - lo) / (hi - lo)).clamp(region.beta, region.alpha));
        let m = IntensityMatrix::new(m)?;
        if membership(&m, region, DEFAULT_MEMBERSHIP_TOL)?.feasible() {
            return Ok(m);
        }
        // Unreachable for box members, kept as a guard on the radius.
        width *= 0.9;
    }
}

/// Each cell independently with probability `m / (d1 d2)`.
pub fn sample_mask(d1: usize, d2: usize, m: f64, seed: u64) -> Result<Mask> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::BadShape(format!("{d1}x{d2}")));
    }
    check_m(m, d1 * d2)?;
    let p = m / (d1 * d2) as f64;
    let mut rng = substream(seed, 0, "mask");
    let mut cells = Vec::new();
    for i in 0..d1 {
        for j in 0..d2 {
            if p >= 1.0 || rng.random::<f64>() < p {
                cells.push((i, j));
            }
        }
    }
    Mask::new(d1, d2, cells)
}

/// Independent `Poisson(truth_ij)` counts on the mask.
pub fn sample_poisson(truth: &IntensityMatrix, mask: &Mask, seed: u64) -> Result<ObservationSet> {
    truth.ensure_shape(mask.shape())?;
    let mut rng = substream(seed, 0, "counts");
    let mut samples = Vec::with_capacity(mask.len());
    for &(i, j) in mask.cells() {
        let rate = truth.get(i, j);
        if !(rate > 0.0) {
            return Err(Error::NonPositiveIntensity { i, j, value: rate });
        }
        let y: f64 = Poisson::new(rate)
            .map_err(|_| Error::NonPositiveIntensity { i, j, value: rate })?
            .sample(&mut rng);
        samples.push(Observation { i, j, y: y as u64 });
    }
    let (d1, d2) = mask.shape();
    ObservationSet::from_samples(d1, d2, samples)
}

/// Truth, mask and counts of one synthetic instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: IntensityMatrix,
    pub observations: ObservationSet,
}

pub fn make_instance(spec: &SynthesisSpec) -> Result<Instance> {
    let truth = make_low_rank(spec)?;
    let (d1, d2) = spec.region.shape();
    let mask = sample_mask(d1, d2, spec.mask_m, spec.seed)?;
    let obs = sample_poisson(&truth, &mask, spec.seed)?;
    let observations = ObservationSet::new(d1, d2, obs.samples().to_vec(), spec.mask_m)?;
    Ok(Instance { truth, observations })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub mse: f64,
    /// MSE of the constant `(alpha + beta) / 2` matrix.
    pub baseline_mse: f64,
    pub m_realized: usize,
    pub solver_report: SolverReport,
    pub seed: u64,
}

pub fn run_trial(spec: &SynthesisSpec, cfg: &SolverConfig) -> Result<TrialResult> {
    let inst = make_instance(spec)?;
    let report = solve(&inst.observations, &spec.region, cfg)?;
    let (d1, d2) = spec.region.shape();
    let baseline = IntensityMatrix::constant(d1, d2, spec.region.midpoint())?;
    Ok(TrialResult {
        mse: mse_per_entry(&inst.truth, &report.estimate)?,
        baseline_mse: mse_per_entry(&inst.truth, &baseline)?,
        m_realized: inst.observations.len(),
        solver_report: report,
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub trials: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_iters: f64,
    pub mean_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.m, r.trials, r.mean_mse, r.std_mse, r.mean_iters, r.mean_wall_time
            ));
        }
        out
    }

    /// Least-squares slope of `ln(mean_mse)` against `ln(m)`.
    pub fn loglog_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.mean_mse > 0.0)
            .map(|r| (r.m.ln(), r.mean_mse.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `trials` instances at each `m`.
///
/// Trial `t` uses the same derived seed at every `m`, so the truth is
/// shared across the row and only the mask density changes. Trials run in
/// parallel and are aggregated in index order.
pub fn sweep_m(template: &SynthesisSpec, m_list: &[f64], trials: usize, cfg: &SolverConfig) -> Result<SweepTable> {
    if trials == 0 {
        return Err(Error::BadConfig("trials must be at least 1".into()));
    }
    if m_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadConfig("m_list must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let results: Vec<TrialResult> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let spec = SynthesisSpec {
                    mask_m: m,
                    seed: trial_seed(template.seed, t),
                    ..template.clone()
                };
                run_trial(&spec, cfg)
            })
            .collect::<Result<_>>()?;
        let mses: Vec<f64> = results.iter().map(|r| r.mse).collect();
        let (mean_mse, std_mse) = mean_std(&mses);
        let n = trials as f64;
        rows.push(SweepRow {
            m,
            trials,
            mean_mse,
            std_mse,
            mean_iters: results.iter().map(|r| r.solver_report.iterations_run as f64).sum::<f64>() / n,
            mean_wall_time: results.iter().map(|r| r.solver_report.wall_time_sec).sum::<f64>() / n,
        });
    }
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub samples: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub lambda: f64,
    pub t: f64,
    pub draws: usize,
    pub empirical: f64,
    pub bound: f64,
    pub standard_error: f64,
    /// `empirical <= bound + 3 * standard_error`.
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// `D(x || y) <= (y - x)^2 / y` on scalar pairs from the box.
    pub kl_chi_square: InequalityCheck,
    /// Average Hellinger distance against the MSE floor on matrix pairs.
    pub hellinger_mse: InequalityCheck,
    pub hellinger_floor: f64,
    pub t0: f64,
    pub tail: Vec<TailCheck>,
}

impl LemmaReport {
    pub fn all_hold(&self) -> bool {
        self.kl_chi_square.violations == 0 && self.hellinger_mse.violations == 0 && self.tail.iter().all(|c| c.within)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }
}

/// Rates probed by the tail check: a fixed ladder plus `alpha` itself, kept
/// to those the bound covers (`lambda <= alpha`).
pub fn tail_rates(alpha: f64) -> Vec<f64> {
    let mut rates: Vec<f64> = [0.5, 1.0, 3.0].into_iter().filter(|&l| l <= alpha).collect();
    if !rates.contains(&alpha) {
        rates.push(alpha);
    }
    rates
}

/// Monte-Carlo check of the divergence inequalities and the Poisson tail
/// bound.
///
/// `samples` scalar pairs, `max(1, samples / 10)` matrix pairs of the
/// region's shape, and `100 * samples` Poisson draws per rate.
pub fn verify_lemmas(region: &FeasibleRegion, samples: usize, seed: u64) -> Result<LemmaReport> {
    region.validate()?;
    if samples == 0 {
        return Err(Error::BadConfig("samples must be at least 1".into()));
    }
    let (lo, hi) = (region.beta, region.alpha);
    let draw = |rng: &mut ChaCha8Rng| if hi > lo { rng.random_range(lo..=hi) } else { lo };

    let mut rng = substream(seed, 0, "lemma-kl");
    let mut kl_viol = 0;
    for _ in 0..samples {
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        if kl(x, y)? > (y - x) * (y - x) / y {
            kl_viol += 1;
        }
    }

    let floor = hellinger_mse_floor(region);
    let pairs = (samples / 10).max(1);
    let mut rng = substream(seed, 0, "lemma-hellinger");
    let (d1, d2) = region.shape();
    let mut h_viol = 0;
    for _ in 0..pairs {
        let a = IntensityMatrix::from_fn(d1, d2, |_, _| draw(&mut rng))?;
        let b = IntensityMatrix::from_fn(d1, d2, |_, _| draw(&mut rng))?;
        // Relative slack for rounding in the two averages.
        if hellinger_sq_matrix(&a, &b)? < floor * mse_per_entry(&a, &b)? * (1.0 - 1e-12) {
            h_viol += 1;
        }
    }

    let t0 = region.alpha * (std::f64::consts::E.powi(2) - 3.0);
    let draws = samples * 100;
    let mut tail = Vec::new();
    for (k, lambda) in tail_rates(region.alpha).into_iter().enumerate() {
        let mut rng = substream(seed, k as u64, "lemma-tail");
        let dist = Poisson::new(lambda).map_err(|_| Error::NonPositiveParameter(lambda))?;
        let ts = [t0, 1.5 * t0, 2.0 * t0];
        let mut hits = [0usize; 3];
        for _ in 0..draws {
            let y: f64 = dist.sample(&mut rng);
            for (h, t) in hits.iter_mut().zip(ts) {
                if y - lambda >= t {
                    *h += 1;
                }
            }
        }
        for (h, t) in hits.into_iter().zip(ts) {
            let p = h as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let bound = (-t).exp();
            tail.push(TailCheck {
                lambda,
                t,
                draws,
                empirical: p,
                bound,
                standard_error: se,
                within: p <= bound + 3.0 * se,
            });
        }
    }

    Ok(LemmaReport {
        kl_chi_square: InequalityCheck {
            samples,
            violations: kl_viol,
        },
        hellinger_mse: InequalityCheck {
            samples: pairs,
            violations: h_viol,
        },
        hellinger_floor: floor,
        t0,
        tail,
    })
}
