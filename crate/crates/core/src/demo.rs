//! Image recovery pipeline: patchify, subsample, draw counts, complete,
//! reassemble.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{lift_intensities, mask_overlay, patchify, unpatchify, Image, PatchLayout};
use crate::matrix::{mse_per_entry, IntensityMatrix};
use crate::region::FeasibleRegion;
use crate::solvers::{solve, SolverConfig, SolverReport};
use crate::synth::{sample_mask, sample_poisson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    /// Expected observed fraction of patch-matrix cells.
    pub p: f64,
    /// Pixel to intensity multiplier.
    pub scale: f64,
    pub beta: f64,
    /// Upper intensity bound; the largest lifted pixel when absent.
    pub alpha: Option<f64>,
    /// Rank carried by the feasible region.
    pub rank: usize,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            patch_h: 8,
            patch_w: 8,
            p: 0.8,
            scale: 1.0,
            beta: 1.0,
            alpha: None,
            rank: 10,
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub region: FeasibleRegion,
    pub layout: PatchLayout,
    /// Intensities the counts were drawn from.
    pub truth: Image,
    /// Counts at observed pixels, zero elsewhere.
    pub observed: Image,
    pub recovered: Image,
    pub mse: f64,
    pub baseline_mse: f64,
    pub m_realized: usize,
    pub report: SolverReport,
}

pub fn run_demo(image: &Image, cfg: &DemoConfig) -> Result<DemoOutcome> {
    if !(cfg.p > 0.0 && cfg.p <= 1.0) {
        return Err(Error::BadConfig(format!("p must lie in (0, 1], got {}", cfg.p)));
    }
    if !(cfg.scale > 0.0 && cfg.scale.is_finite()) {
        return Err(Error::NonPositiveParameter(cfg.scale));
    }
    let layout = PatchLayout::new(image.height(), image.width(), cfg.patch_h, cfg.patch_w)?;
    let lifted = lift_intensities(image, cfg.beta, cfg.scale)?;
    let alpha = cfg.alpha.unwrap_or_else(|| lifted.max());
    let (d1, d2) = layout.matrix_shape();
    let region = FeasibleRegion::new(d1, d2, alpha, cfg.beta, cfg.rank)?;
    let truth = lifted.map(|v| region.clamp(v))?;
    let truth_m = patchify(&truth, &layout)?;

    let mask = sample_mask(d1, d2, cfg.p * (d1 * d2) as f64, cfg.seed)?;
    let obs = sample_poisson(&truth_m, &mask, cfg.seed)?;
    let solver = SolverConfig {
        seed: cfg.seed,
        ..cfg.solver.clone()
    };
    let report = solve(&obs, &region, &solver)?;

    let mut counts = nalgebra::DMatrix::zeros(d1, d2);
    for o in obs.samples() {
        counts[(o.i, o.j)] = o.y as f64;
    }
    let counts = unpatchify(&IntensityMatrix::from_matrix_unchecked(counts), &layout)?;
    let observed = mask_overlay(&counts, &mask, &layout)?;
    let baseline = IntensityMatrix::constant(d1, d2, region.midpoint())?;
    Ok(DemoOutcome {
        mse: mse_per_entry(&truth_m, &report.estimate)?,
        baseline_mse: mse_per_entry(&truth_m, &baseline)?,
        m_realized: obs.len(),
        recovered: unpatchify(&report.estimate, &layout)?,
        region,
        layout,
        truth,
        observed,
        report,
    })
}
