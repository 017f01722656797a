//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use pmc_core::bounds::{lower_bound, upper_bound, BoundConstants};
use pmc_core::demo::{run_demo, DemoConfig};
use pmc_core::imaging::read_image;
use pmc_core::likelihood::{gradient, neg_log_likelihood};
use pmc_core::linalg::nuclear_norm;
use pmc_core::matrix::{membership, IntensityMatrix};
use pmc_core::observations::{Observation, ObservationSet};
use pmc_core::projections::{project_box, project_nuclear_ball, svt};
use pmc_core::region::{FeasibleRegion, DEFAULT_MEMBERSHIP_TOL};
use pmc_core::solvers::{init_matrix, q_model, solve, solve_pmlsv_observed, Algorithm, SolverConfig};
use pmc_core::synth::{make_instance, trial_seed, verify_lemmas, Instance, SynthesisSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let t = started.elapsed();
    (t <= limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn random_matrix(rng: &mut ChaCha8Rng, d1: usize, d2: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d1, d2, |_, _| rng.random_range(lo..hi))
}

/// Nearest point of the nuclear ball via the eigensystem of `X^T X` and a
/// bisection on the singular-value shift.
fn nuclear_ball_oracle(x: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let eig = (x.transpose() * x).symmetric_eigen();
    let s: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    if s.iter().sum::<f64>() <= radius {
        return x.clone();
    }
    let excess = |theta: f64| s.iter().map(|&v| (v - theta).max(0.0)).sum::<f64>() - radius;
    let (mut lo, mut hi) = (0.0, s.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let gains = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        s.len(),
        s.iter().map(|&v| if v > theta { (v - theta) / v } else { 0.0 }),
    ));
    x * &eig.eigenvectors * gains * eig.eigenvectors.transpose()
}

fn svt_objective(z: &DMatrix<f64>, x: &DMatrix<f64>, tau: f64) -> f64 {
    0.5 * (z - x).norm_squared() + tau * nuclear_norm(z).unwrap()
}

fn criterion_projections() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut box_fail, mut ball_worst, mut svt_fail) = (0, 0.0f64, 0);
    for _ in 0..500 {
        let (d1, d2) = (rng.random_range(2..=5), rng.random_range(2..=4));
        let beta = rng.random_range(0.1..2.0);
        let alpha = beta + rng.random_range(0.0..10.0);
        let region = FeasibleRegion::new(d1, d2, alpha, beta, 1).unwrap();
        let x = random_matrix(&mut rng, d1, d2, -3.0, 15.0);
        let xm = IntensityMatrix::new(x.clone()).unwrap();

        let boxed = project_box(&xm, &region).unwrap();
        let oracle = x.map(|v| if v < beta { beta } else if v > alpha { alpha } else { v });
        if boxed.as_matrix() != &oracle {
            box_fail += 1;
        }

        let radius = rng.random_range(0.05..1.5) * nuclear_norm(&x).unwrap();
        let ball = project_nuclear_ball(&xm, radius).unwrap();
        ball_worst = ball_worst.max((ball.as_matrix() - nuclear_ball_oracle(&x, radius)).norm());

        let tau = rng.random_range(0.0..1.2) * x.norm();
        let z = svt(&xm, tau).unwrap().into_matrix();
        let best = svt_objective(&z, &x, tau);
        for k in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-6.0..0.0)) * (1.0 + x.norm());
            let probe = if k % 4 == 0 {
                &z * (1.0 + rng.random_range(-1.0..1.0) * scale / (1.0 + z.norm()))
            } else {
                &z + random_matrix(&mut rng, d1, d2, -scale, scale)
            };
            if svt_objective(&probe, &x, tau) < best - 1e-12 * (1.0 + best) {
                svt_fail += 1;
            }
        }
    }
    let (fast, t) = within(Duration::from_secs(60), started);
    outcome(
        box_fail == 0 && ball_worst <= 1e-8 && svt_fail == 0 && fast,
        format!("box mismatches {box_fail}, ball max dist {ball_worst:.2e}, svt better probes {svt_fail}, {t}"),
    )
}

fn criterion_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (d1, d2) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let beta = rng.random_range(0.5..2.0);
        let alpha = beta + rng.random_range(0.5..10.0);
        let x = random_matrix(&mut rng, d1, d2, beta, alpha);
        let mut samples = Vec::new();
        for i in 0..d1 {
            for j in 0..d2 {
                if rng.random_bool(0.6) {
                    samples.push(Observation {
                        i,
                        j,
                        y: rng.random_range(0..=(2.0 * alpha) as u64),
                    });
                }
            }
        }
        if samples.is_empty() {
            samples.push(Observation { i: 0, j: 0, y: 1 });
        }
        let obs = ObservationSet::from_samples(d1, d2, samples).unwrap();
        let g = gradient(&IntensityMatrix::new(x.clone()).unwrap(), &obs).unwrap();
        let h = 1e-5;
        for i in 0..d1 {
            for j in 0..d2 {
                let mut plus = x.clone();
                plus[(i, j)] += h;
                let mut minus = x.clone();
                minus[(i, j)] -= h;
                let fp = neg_log_likelihood(&IntensityMatrix::new(plus).unwrap(), &obs).unwrap();
                let fm = neg_log_likelihood(&IntensityMatrix::new(minus).unwrap(), &obs).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                worst = worst.max((fd - g.get(i, j)).abs() / g.get(i, j).abs().max(1.0));
            }
        }
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

/// Ten seeded fully observed 15x12 rank-2 problems on which the box and
/// nuclear constraints both bind.
fn rate_problems() -> Vec<(FeasibleRegion, Instance)> {
    (0..10)
        .map(|t| {
            let region = FeasibleRegion::new(15, 12, 1.0, 0.1, 2).unwrap();
            let spec = SynthesisSpec::new(region, 180.0, trial_seed(2024, t));
            (region, make_instance(&spec).unwrap())
        })
        .collect()
}

/// Largest ratio of `f(M_k) - f*` to the PG and APG rate bounds on one problem.
fn rate_ratios(region: &FeasibleRegion, inst: &Instance) -> (f64, f64) {
    let obs = &inst.observations;
    let long_pg = solve(obs, region, &SolverConfig::new(Algorithm::Pg).with_max_iter(10_000)).unwrap();
    let long_apg = solve(obs, region, &SolverConfig::new(Algorithm::Apg).with_max_iter(10_000)).unwrap();
    let f_star = long_pg
        .objective_trace
        .iter()
        .chain(&long_apg.objective_trace)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let m_hat = if long_apg.objective_trace.last() < long_pg.objective_trace.last() {
        &long_apg.estimate
    } else {
        &long_pg.estimate
    };
    let dist2 = init_matrix(obs, region).unwrap().distance(m_hat).unwrap().powi(2);

    let pg = solve(obs, region, &SolverConfig::new(Algorithm::Pg).with_max_iter(200)).unwrap();
    let apg = solve(obs, region, &SolverConfig::new(Algorithm::Apg).with_max_iter(200)).unwrap();
    let pg_worst = pg
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, f)| (f - f_star) / (pg.final_l * dist2 / (2.0 * (k + 1) as f64)))
        .fold(0.0, f64::max);
    let apg_worst = apg
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, f)| (f - f_star) / (2.0 * apg.final_l * dist2 / ((k + 2) as f64).powi(2)))
        .fold(0.0, f64::max);
    (pg_worst, apg_worst)
}

fn criterion_rates(problems: &[(FeasibleRegion, Instance)]) -> Outcome {
    let started = Instant::now();
    let ratios: Vec<(f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = problems.iter().map(|(r, i)| s.spawn(move || rate_ratios(r, i))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let worst = ratios
        .iter()
        .fold((0.0f64, 0.0f64), |acc, r| (acc.0.max(r.0), acc.1.max(r.1)));
    let (fast, t) = within(Duration::from_secs(300), started);
    outcome(
        worst.0 <= 1.05 && worst.1 <= 1.05 && fast,
        format!("worst gap/bound PG {:.3}, APG {:.3} (limit 1.05), {t}", worst.0, worst.1),
    )
}

fn criterion_descent(problems: &[(FeasibleRegion, Instance)]) -> Outcome {
    let mut cases: Vec<(FeasibleRegion, ObservationSet)> =
        problems.iter().map(|(r, i)| (*r, i.observations.clone())).collect();
    for t in 0..10 {
        let region = FeasibleRegion::new(10, 8, 9.0, 1.0, 2).unwrap();
        let inst = make_instance(&SynthesisSpec::new(region, 40.0, trial_seed(7, t))).unwrap();
        cases.push((region, inst.observations));
    }
    let (mut rises, mut majorization_fails, mut steps) = (0, 0, 0);
    for (region, obs) in &cases {
        let pg = solve(obs, region, &SolverConfig::new(Algorithm::Pg).with_max_iter(200)).unwrap();
        // The starting point clamps the data into the box but may sit
        // outside the nuclear ball, so it joins the trace only when feasible.
        let m0 = init_matrix(obs, region).unwrap();
        let start = membership(&m0, region, DEFAULT_MEMBERSHIP_TOL)
            .unwrap()
            .feasible()
            .then(|| neg_log_likelihood(&m0, obs).unwrap());
        let trace: Vec<f64> = start.into_iter().chain(pg.objective_trace.iter().cloned()).collect();
        rises += trace.windows(2).filter(|w| w[1] > w[0] + 1e-10).count();

        solve_pmlsv_observed(obs, region, &SolverConfig::default(), |s| {
            let cur = IntensityMatrix::new(s.current.clone()).unwrap();
            let prev = IntensityMatrix::new(s.prev.clone()).unwrap();
            let q = q_model(&cur, &prev, s.l, obs).unwrap();
            steps += 1;
            if s.objective > q + 1e-10 * q.abs().max(1.0) {
                majorization_fails += 1;
            }
        })
        .unwrap();
    }
    outcome(
        rises == 0 && majorization_fails == 0,
        format!(
            "{} problems: PG increases {rises}, PMLSV steps above model {majorization_fails} of {steps}",
            cases.len()
        ),
    )
}

fn criterion_lemmas() -> Outcome {
    let started = Instant::now();
    let region = FeasibleRegion::new(10, 8, 9.0, 1.0, 2).unwrap();
    let r = verify_lemmas(&region, 10_000, 5).unwrap();
    let lambdas: Vec<f64> = r.tail.iter().map(|c| c.lambda).collect();
    let covered = [0.5, 1.0, 3.0].iter().all(|l| lambdas.contains(l));
    let draws_ok = r.tail.iter().all(|c| c.draws >= 1_000_000);
    let (fast, t) = within(Duration::from_secs(120), started);
    outcome(
        r.all_hold() && covered && draws_ok && r.kl_chi_square.samples >= 10_000 && r.hellinger_mse.samples >= 1000 && fast,
        format!(
            "scalar violations {}/{}, matrix violations {}/{}, tail checks within {}/{}, {t}",
            r.kl_chi_square.violations,
            r.kl_chi_square.samples,
            r.hellinger_mse.violations,
            r.hellinger_mse.samples,
            r.tail.iter().filter(|c| c.within).count(),
            r.tail.len()
        ),
    )
}

fn fixture_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/solar48.pgm")
}

fn criterion_monotone() -> Outcome {
    let image = read_image(fixture_path()).unwrap();
    let ps = [0.3, 0.5, 0.8];
    let seeds = 10u64;
    let runs: Vec<Vec<(f64, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = ps
            .iter()
            .map(|&p| {
                let image = &image;
                s.spawn(move || {
                    (0..seeds)
                        .map(|seed| {
                            let out = run_demo(image, &DemoConfig { p, seed, ..DemoConfig::default() }).unwrap();
                            (out.mse, out.baseline_mse)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let means: Vec<f64> = runs
        .iter()
        .map(|r| r.iter().map(|x| x.0).sum::<f64>() / seeds as f64)
        .collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let worst_ratio = runs[2].iter().map(|(m, b)| b / m).fold(f64::INFINITY, f64::min);
    outcome(
        decreasing && worst_ratio >= 2.0,
        format!(
            "mean mse p=0.3 {:.1}, p=0.5 {:.1}, p=0.8 {:.1}; min baseline/mse at p=0.8 {worst_ratio:.1}",
            means[0], means[1], means[2]
        ),
    )
}

fn pmc(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pmc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn criterion_runtime() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let image = fixture_path();
    let started = Instant::now();
    let o = pmc(
        &[
            "demo", "--image", image.to_str().unwrap(), "--p", "0.8", "--lambda", "0.1", "--iters", "2000", "--l0",
            "1e-4", "--eta", "1.1", "--out", "run",
        ],
        dir.path(),
    );
    let (fast, t) = within(Duration::from_secs(30), started);
    let iters = fs::read_to_string(dir.path().join("run/report.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v["solver"]["iterations_run"].as_u64());
    outcome(
        o.status.success() && fast && iters.is_some_and(|k| k <= 2000),
        format!("demo at p=0.8 finished in {t}, {} iterations", iters.unwrap_or(0)),
    )
}

fn upper_oracle(d1: f64, d2: f64, r: f64, alpha: f64, beta: f64, m: f64, c_prime: f64) -> f64 {
    let t = (alpha - beta).powi(2) / (8.0 * beta);
    let factor = if t == 0.0 { 8.0 * alpha } else { 8.0 * alpha * t / (1.0 - (-t).exp()) };
    let log_d = (d1 * d2).ln();
    let base = c_prime
        * factor
        * (alpha * r.sqrt() / beta)
        * (alpha * (std::f64::consts::E.powi(2) - 2.0) + 3.0 * log_d)
        * ((d1 + d2) / m).sqrt();
    if m >= (d1 + d2) * log_d {
        base * 2f64.sqrt()
    } else {
        base * (1.0 + (d1 + d2) * log_d / m).sqrt()
    }
}

fn lower_oracle(d1: f64, d2: f64, r: f64, alpha: f64, m: f64, c1: f64, c2: f64) -> f64 {
    c1.min(c2 * alpha * alpha.sqrt() * (r * d1.max(d2) / m).sqrt())
}

fn criterion_bounds() -> Outcome {
    let k = BoundConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut worst, mut gate_errors, mut mono_errors) = (0.0f64, 0, 0);
    for _ in 0..50 {
        let d1 = rng.random_range(4..3000usize);
        let d2 = rng.random_range(4..3000usize);
        let r = rng.random_range(1..=d1.min(d2).min(20));
        let beta = rng.random_range(0.2..3.0);
        let alpha = beta * rng.random_range(1.0..6.0);
        let m = rng.random_range(1.0..(d1 * d2) as f64);
        let region = FeasibleRegion::new(d1, d2, alpha, beta, r).unwrap();
        let (fd1, fd2, fr) = (d1 as f64, d2 as f64, r as f64);

        let up = upper_bound(&region, m, &k);
        let lo = lower_bound(&region, m, &k);
        let up_ref = upper_oracle(fd1, fd2, fr, alpha, beta, m, k.c_prime);
        let lo_ref = lower_oracle(fd1, fd2, fr, alpha, m, k.c1, k.c2);
        worst = worst.max(((up.value - up_ref) / up_ref).abs());
        worst = worst.max(((lo.value - lo_ref) / lo_ref).abs());

        let expect_valid = alpha >= 1.0
            && r >= 4
            && alpha >= 2.0 * beta
            && alpha * alpha * fr * fd1.max(fd2) >= k.c0
            && lo_ref > fr * alpha * alpha / fd1.min(fd2);
        if lo.valid != expect_valid {
            gate_errors += 1;
        }

        let more_m = upper_bound(&region, (2.0 * m).min((d1 * d2) as f64), &k).value;
        if 2.0 * m <= (d1 * d2) as f64 && more_m >= up.value {
            mono_errors += 1;
        }
        if r < d1.min(d2) {
            let bigger = FeasibleRegion::new(d1, d2, alpha, beta, r + 1).unwrap();
            if upper_bound(&bigger, m, &k).value <= up.value {
                mono_errors += 1;
            }
            if lower_bound(&bigger, m, &k).value < lo.value {
                mono_errors += 1;
            }
        }
        if lower_bound(&region, 2.0 * m, &k).value > lo.value {
            mono_errors += 1;
        }
    }

    // Each hypothesis failing on its own from a valid configuration.
    let valid = FeasibleRegion::new(5000, 5000, 2.0, 1.0, 4).unwrap();
    let gate = |region: FeasibleRegion, m: f64, needle: &str| {
        let lo = lower_bound(&region, m, &k);
        !lo.valid && lo.reason.contains(needle)
    };
    let single_gates = lower_bound(&valid, 500.0, &k).valid
        && gate(FeasibleRegion { r: 3, ..valid }, 500.0, "r >= 4")
        && gate(FeasibleRegion { beta: 1.5, ..valid }, 500.0, "alpha >= 2 beta")
        && gate(valid, 500.0 * 1e6, "does not exceed")
        && gate(FeasibleRegion { d1: 1, d2: 1, r: 1, ..valid }, 500.0, "c0");
    outcome(
        worst <= 1e-9 && gate_errors == 0 && mono_errors == 0 && single_gates,
        format!(
            "max relative error {worst:.1e}, gate mismatches {gate_errors}, monotonicity breaks {mono_errors}, single gates {}",
            if single_gates { "ok" } else { "wrong" }
        ),
    )
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: [(&str, Vec<&str>); 5] = [
        (
            "sim",
            vec!["simulate", "--d1", "10", "--d2", "8", "--rank", "2", "--alpha", "9", "--beta", "1", "--m", "40", "--seed", "7"],
        ),
        (
            "fit",
            vec!["complete", "--obs", "sim/observations.csv", "--truth", "sim/truth.csv", "--baseline", "--alpha", "9", "--beta", "1", "--rank", "2"],
        ),
        (
            "bnd",
            vec!["bounds", "--d1", "5000", "--d2", "5000", "--rank", "4", "--alpha", "2", "--beta", "1", "--m", "500", "--json"],
        ),
        ("ver", vec!["verify", "--samples", "1000", "--seed", "3"]),
        ("dem", vec!["demo", "--p", "0.5", "--seed", "4"]),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, args) in &runs {
        let mut args = args.clone();
        args.extend(["--out", name]);
        let o = pmc(&args, d);
        if !o.status.success() {
            mismatches.push(format!("{name} failed"));
            continue;
        }
        let manifest = d.join(name).join("manifest.json");
        let replay = format!("{name}-replay");
        if !pmc(&["replay", manifest.to_str().unwrap(), "--out", &replay], d).status.success() {
            mismatches.push(format!("{name} replay failed"));
            continue;
        }
        for entry in fs::read_dir(d.join(name)).unwrap() {
            let file = entry.unwrap().file_name();
            if file == "timing.json" {
                continue;
            }
            compared += 1;
            if fs::read(d.join(name).join(&file)).ok() != fs::read(d.join(&replay).join(&file)).ok() {
                mismatches.push(format!("{name}/{}", file.to_string_lossy()));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{compared} files compared, mismatches: {mismatches:?}"),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let problems = rate_problems();
    let criteria: Vec<(&str, Check)> = vec![
        ("projection oracles", Box::new(criterion_projections)),
        ("gradient vs finite differences", Box::new(criterion_gradient)),
        ("PG and APG convergence rates", Box::new(|| criterion_rates(&problems))),
        ("descent and majorization", Box::new(|| criterion_descent(&problems))),
        ("inequality suite", Box::new(criterion_lemmas)),
        ("observation-count monotonicity", Box::new(criterion_monotone)),
        ("demo runtime", Box::new(criterion_runtime)),
        ("bound evaluators", Box::new(criterion_bounds)),
        ("replay determinism", Box::new(criterion_determinism)),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            n + 1,
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
