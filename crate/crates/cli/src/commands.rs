use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pmc_core::bounds::{bound_gap, lower_bound, upper_bound, BoundConstants, BoundReport};
use pmc_core::demo::{run_demo, DemoConfig};
use pmc_core::error::Error;
use pmc_core::imaging::{read_image, read_pgm, to_display, write_pgm, Image, PgmEncoding};
use pmc_core::matrix::{mse_per_entry, IntensityMatrix};
use pmc_core::observations::ObservationSet;
use pmc_core::region::FeasibleRegion;
use pmc_core::solvers::{solve_observed, SolverConfig, SolverReport, Step, Termination};
use pmc_core::synth::{make_instance, verify_lemmas, SynthesisSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BoundsArgs, CompleteArgs, DemoArgs, ReplayArgs, SimulateArgs, SolverArgs, VerifyArgs};

pub const SCHEMA_VERSION: u32 = 1;
const BUNDLED_IMAGE: &[u8] = include_bytes!("../../../fixtures/solar48.pgm");

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// A file that could not be read or parsed, with its path.
    Input(PathBuf, Error),
    Core(Error),
    Solver(String),
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_, e) | CliError::Core(e) if e.is_io() => 1,
            CliError::Input(..) => 2,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Usage(_) | CliError::Core(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Violation(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Violation(m) => f.write_str(m),
            CliError::Input(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn reading<T>(path: &Path, r: pmc_core::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Input(path.to_path_buf(), e))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Writes manifest.json; `artifacts` are file names inside `dir`.
fn write_manifest(dir: &Path, command: &str, flags: &impl Serialize, seed: Option<u64>, artifacts: &[&str]) -> CliResult<()> {
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "flags": flags,
        "seed": seed,
        "artifacts": artifacts,
        "excluded_from_replay_check": ["timing.json"],
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_text(dir, "manifest.json", &pretty(&manifest))
}

fn write_timing(dir: &Path, started: Instant, solver: Option<&SolverReport>) -> CliResult<()> {
    let timing = json!({
        "wall_time_sec": started.elapsed().as_secs_f64(),
        "solver_wall_time_sec": solver.map(|r| r.wall_time_sec),
    });
    write_text(dir, "timing.json", &pretty(&timing))
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Solver report without its wall time, which lives in timing.json.
fn report_value(report: &SolverReport) -> Value {
    let mut v = serde_json::to_value(report).expect("serializable");
    if let Value::Object(map) = &mut v {
        map.remove("wall_time_sec");
    }
    v
}

fn solver_config(a: &SolverArgs, seed: u64) -> SolverConfig {
    SolverConfig {
        algorithm: a.algo,
        max_iter: a.iters,
        lambda: a.lambda,
        l0: a.l0,
        eta: a.eta,
        proj_tol: a.proj_tol,
        proj_max_iter: a.proj_max_iter,
        projection: a.projection,
        seed,
    }
}

fn log_step(step: &Step) {
    eprintln!("iter {:>5}  f = {:.12e}  L = {:.6e}", step.k, step.objective, step.l);
}

fn check_termination(report: &SolverReport) -> CliResult<()> {
    if report.termination == Termination::ProjectionFailure {
        return Err(CliError::Solver(format!(
            "projection did not converge at iteration {}; partial results written",
            report.iterations_run
        )));
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let cells = a.d1.saturating_mul(a.d2);
    if !(a.m > 0.0 && a.m <= cells as f64) {
        return Err(CliError::Usage(format!("--m must lie in (0, d1*d2 = {cells}], got {}", a.m)));
    }
    let region = FeasibleRegion::new(a.d1, a.d2, a.alpha, a.beta, a.rank)?;
    let inst = make_instance(&SynthesisSpec::new(region, a.m, a.seed))?;
    create_out(&a.out)?;
    inst.truth.write_csv(a.out.join("truth.csv"))?;
    inst.observations.write_csv(a.out.join("observations.csv"))?;
    write_manifest(&a.out, "simulate", a, Some(a.seed), &["truth.csv", "observations.csv"])?;
    write_timing(&a.out, started, None)
}

pub fn complete(a: &CompleteArgs) -> CliResult<()> {
    let started = Instant::now();
    let shape = match (a.d1, a.d2) {
        (Some(d1), Some(d2)) => Some((d1, d2)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--d1 and --d2 must be given together".into())),
    };
    let truth = a.truth.as_ref().map(|p| reading(p, IntensityMatrix::read_csv(p))).transpose()?;
    let shape = shape.or_else(|| truth.as_ref().map(IntensityMatrix::shape));
    let obs = reading(&a.obs, ObservationSet::read_csv(&a.obs, shape))?;
    let (d1, d2) = obs.shape();
    let region = FeasibleRegion::new(d1, d2, a.alpha, a.beta, a.rank)?;
    let cfg = solver_config(&a.solver, a.seed);
    cfg.validate()?;
    let report = solve_observed(&obs, &region, &cfg, |s| {
        if a.solver.verbose {
            log_step(s)
        }
    })?;

    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "complete",
        "shape": [d1, d2],
        "m_realized": obs.len(),
        "solver": report_value(&report),
    });
    if let Some(t) = &truth {
        out["mse"] = json!(mse_per_entry(t, &report.estimate)?);
        if a.baseline {
            let base = IntensityMatrix::constant(d1, d2, region.midpoint())?;
            out["baseline_mse"] = json!(mse_per_entry(t, &base)?);
        }
    }
    create_out(&a.out)?;
    report.estimate.write_csv(a.out.join("estimate.csv"))?;
    write_text(&a.out, "report.json", &pretty(&out))?;
    write_manifest(&a.out, "complete", a, Some(a.seed), &["estimate.csv", "report.json"])?;
    write_timing(&a.out, started, Some(&report))?;
    check_termination(&report)
}

#[derive(Serialize)]
struct BoundsOutput {
    schema_version: u32,
    upper: BoundReport,
    lower: BoundReport,
    /// Upper over lower; null unless both are valid.
    gap: Option<f64>,
    gap_reason: Option<String>,
}

fn bounds_output(a: &BoundsArgs) -> CliResult<BoundsOutput> {
    let region = FeasibleRegion::new(a.d1, a.d2, a.alpha, a.beta, a.rank)?;
    if !(a.m > 0.0 && a.m.is_finite()) {
        return Err(CliError::Usage(format!("--m must be positive, got {}", a.m)));
    }
    let d = BoundConstants::default();
    let k = BoundConstants {
        c_prime: a.c_prime.unwrap_or(d.c_prime),
        c0: a.c0.unwrap_or(d.c0),
        c1: a.c1.unwrap_or(d.c1),
        c2: a.c2.unwrap_or(d.c2),
    };
    for (flag, v) in [("--c-prime", k.c_prime), ("--c0", k.c0), ("--c1", k.c1), ("--c2", k.c2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!("{flag} must be positive and finite, got {v}")));
        }
    }
    let (gap, gap_reason) = match bound_gap(&region, a.m, &k) {
        Ok(g) => (Some(g), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(BoundsOutput {
        schema_version: SCHEMA_VERSION,
        upper: upper_bound(&region, a.m, &k),
        lower: lower_bound(&region, a.m, &k),
        gap,
        gap_reason,
    })
}

fn bounds_table(b: &BoundsOutput) -> String {
    let row = |name: &str, r: &BoundReport| {
        format!(
            "{name:<6} {:>14.6e}  {:<16} {:<5}  {}\n",
            r.value,
            serde_json::to_value(r.regime).expect("serializable").as_str().unwrap_or(""),
            r.valid,
            if r.valid { "-" } else { r.reason.as_str() }
        )
    };
    let mut s = format!("{:<6} {:>14}  {:<16} {:<5}  {}\n", "bound", "value", "regime", "valid", "reason");
    s += &row("upper", &b.upper);
    s += &row("lower", &b.lower);
    match (b.gap, &b.gap_reason) {
        (Some(g), _) => s += &format!("gap    {g:>14.6e}\n"),
        (None, Some(r)) => s += &format!("gap    {:>14}  {r}\n", "n/a"),
        (None, None) => {}
    }
    s
}

pub fn bounds(a: &BoundsArgs) -> CliResult<()> {
    let b = bounds_output(a)?;
    let json = pretty(&b);
    if a.json {
        print!("{json}");
    } else {
        print!("{}", bounds_table(&b));
    }
    if let Some(dir) = &a.out {
        create_out(dir)?;
        write_text(dir, "bounds.json", &json)?;
        write_manifest(dir, "bounds", a, None, &["bounds.json"])?;
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> CliResult<()> {
    let started = Instant::now();
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let region = FeasibleRegion::new(a.d1, a.d2, a.alpha, a.beta, a.rank)?;
    let report = verify_lemmas(&region, a.samples, a.seed)?;
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "all_hold": report.all_hold(),
        "lemmas": report,
    });
    create_out(&a.out)?;
    write_text(&a.out, "lemmas.json", &pretty(&out))?;
    write_manifest(&a.out, "verify", a, Some(a.seed), &["lemmas.json"])?;
    write_timing(&a.out, started, None)?;
    let violations = report.kl_chi_square.violations + report.hellinger_mse.violations;
    if violations > 0 {
        return Err(CliError::Violation(format!("{violations} deterministic inequality violations")));
    }
    if !report.all_hold() {
        eprintln!("warning: a tail probability exceeded its bound by more than 3 standard errors");
    }
    Ok(())
}

fn load_demo_image(path: Option<&PathBuf>) -> CliResult<Image> {
    match path {
        Some(p) => reading(p, read_image(p)),
        None => Ok(read_pgm(BUNDLED_IMAGE)?),
    }
}

fn write_display(dir: &Path, name: &str, img: &Image, beta: f64, alpha: f64) -> CliResult<()> {
    let shown = to_display(img, beta, alpha, 255)?;
    let mut buf = Vec::new();
    write_pgm(&shown, &mut buf, 255, PgmEncoding::Binary)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

pub fn demo(a: &DemoArgs) -> CliResult<()> {
    let started = Instant::now();
    if !(a.p > 0.0 && a.p <= 1.0) {
        return Err(CliError::Usage(format!("--p must lie in (0, 1], got {}", a.p)));
    }
    let image = load_demo_image(a.image.as_ref())?;
    let cfg = DemoConfig {
        patch_h: a.patch_h,
        patch_w: a.patch_w,
        p: a.p,
        scale: a.scale,
        beta: a.beta,
        alpha: a.alpha,
        rank: a.rank,
        solver: solver_config(&a.solver, a.seed),
        seed: a.seed,
    };
    cfg.solver.validate()?;
    let out = run_demo(&image, &cfg)?;
    let (alpha, beta) = (out.region.alpha, out.region.beta);
    let (d1, d2) = out.layout.matrix_shape();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "demo",
        "image": a.image.as_ref().map(|p| p.display().to_string()),
        "matrix_shape": [d1, d2],
        "alpha": alpha,
        "beta": beta,
        "p": a.p,
        "m_realized": out.m_realized,
        "mse": out.mse,
        "baseline_mse": out.baseline_mse,
        "solver": report_value(&out.report),
    });
    create_out(&a.out)?;
    write_display(&a.out, "observed.pgm", &out.observed, beta, alpha)?;
    write_display(&a.out, "recovered.pgm", &out.recovered, beta, alpha)?;
    write_display(&a.out, "truth.pgm", &out.truth, beta, alpha)?;
    write_text(&a.out, "report.json", &pretty(&report))?;
    write_manifest(
        &a.out,
        "demo",
        a,
        Some(a.seed),
        &["observed.pgm", "recovered.pgm", "truth.pgm", "report.json"],
    )?;
    write_timing(&a.out, started, Some(&out.report))?;
    check_termination(&out.report)
}

fn flags<T: serde::de::DeserializeOwned>(manifest: &Value) -> CliResult<T> {
    serde_json::from_value(manifest["flags"].clone())
        .map_err(|e| CliError::Core(Error::CorruptFile(format!("manifest flags: {e}"))))
}

pub fn replay(a: &ReplayArgs) -> CliResult<()> {
    let text = reading(&a.manifest, fs::read_to_string(&a.manifest).map_err(Error::Io))?;
    let manifest: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(a.manifest.clone(), Error::CorruptFile(e.to_string())))?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    match manifest["command"].as_str() {
        Some("simulate") => simulate(&SimulateArgs { out, ..flags(&manifest)? }),
        Some("complete") => complete(&CompleteArgs { out, ..flags(&manifest)? }),
        Some("bounds") => bounds(&BoundsArgs {
            out: Some(out),
            ..flags(&manifest)?
        }),
        Some("verify") => verify(&VerifyArgs { out, ..flags(&manifest)? }),
        Some("demo") => demo(&DemoArgs { out, ..flags(&manifest)? }),
        other => Err(CliError::Core(Error::CorruptFile(format!(
            "manifest names unknown command {other:?}"
        )))),
    }
}
