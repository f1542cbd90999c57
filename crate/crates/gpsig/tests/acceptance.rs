//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p gpsig --test acceptance [-- NAME...]`; names select a subset.
//! Every tolerance and run setting is pinned below.

use std::process::ExitCode;
use std::time::Instant;

use gpsig::compare::{compare_inducing, mean_elbo, CompareSpec};
use gpsig::io::load_dataset;
use gpsig::verify::{self, random_sequence, random_tensor, SuiteResult};
use gpsig_core::dataset::{make_synthetic, Dataset, SyntheticKind};
use gpsig_core::model::Metrics;
use gpsig_core::rng::{stream, Purpose};
use gpsig_core::signature::{cov_cross, SigKernelParams};
use gpsig_core::static_kernel::StaticKernelParams;
use gpsig_core::trainer::{initial_model, train, InducingKind, Silent, TrainConfig};

const SEED: u64 = 0;

const ORACLE_MAX_SECS: f64 = 60.0;

const DRIFT2_N: usize = 200;
const DRIFT2_MIN_ACC: f64 = 0.95;
const DRIFT2_MAX_NLPP: f64 = 0.25;
const DRIFT2_MAX_SECS: f64 = 300.0;
const ORDER3_N: usize = 150;
const ORDER3_MIN_ACC: f64 = 0.90;
const BASELINE_MAX_ACC: f64 = 0.60;

const COMPARE_N: usize = 60;
const COMPARE_GRID: [usize; 4] = [2, 4, 8, 16];
const COMPARE_SEEDS: u64 = 5;
const COMPARE_EPOCHS: usize = 300;

const SCALING_MAX_RATIO: f64 = 2.6;
const SCALING_REPEATS: usize = 5;

const PENDIGITS_ENV: &str = "GPSIG_PENDIGITS";
const PENDIGITS_MIN_ACC: f64 = 0.93;
const PENDIGITS_MAX_SECS: f64 = 7200.0;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn judge(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn suite_line(r: &SuiteResult) -> String {
    format!("{}: worst {:.3e} <= {:.0e} over {} cases", r.name, r.worst, r.tolerance, r.cases)
}

fn suites(results: Vec<SuiteResult>) -> Outcome {
    let ok = results.iter().all(|r| r.passed);
    let mut detail: Vec<String> = results.iter().map(suite_line).collect();
    if let Some(bad) = results.iter().find(|r| !r.passed) {
        detail.push(format!("first failure: {}", bad.detail));
    }
    judge(ok, detail.join("; "))
}

fn oracle_equivalence() -> Outcome {
    let r = verify::oracle_equivalence(200, SEED);
    judge(
        r.passed && r.secs < ORACLE_MAX_SECS,
        format!("{}; {:.2}s < {ORACLE_MAX_SECS}s {}", suite_line(&r), r.secs, r.detail),
    )
}

/// Phased training with the desk-scale schedule used for the synthetic
/// tasks: linear state-space kernel, `n_Z = 20`.
fn desk_config() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        n_z: 20,
        phase_epochs: 30,
        patience_epochs: 10,
        max_epochs: 60,
        seed: 1,
        n_mc_predict: 64,
        ..TrainConfig::default()
    }
}

fn fit_and_score(ds: &Dataset, depth: usize, tau: f64) -> gpsig_core::Result<(Metrics, f64)> {
    let start = Instant::now();
    let cfg = desk_config();
    let mut kernel = SigKernelParams::new(depth);
    kernel.tau = tau;
    let model = initial_model(&ds.train, ds.num_classes, kernel, &cfg)?;
    let (model, _) = train(&ds.train, model, &cfg, &mut Silent)?;
    let m = model.evaluate(&ds.test, 256, SEED)?;
    Ok((m, start.elapsed().as_secs_f64()))
}

fn synthetic_classification() -> Outcome {
    let run = || -> gpsig_core::Result<Outcome> {
        let drift = make_synthetic(SyntheticKind::Drift2, DRIFT2_N, 1)?.normalize()?;
        let (d, d_secs) = fit_and_score(&drift, 3, 1.0)?;
        let order = make_synthetic(SyntheticKind::Order3, ORDER3_N, 1)?.normalize()?;
        let (o, o_secs) = fit_and_score(&order, 3, 0.0)?;
        let (b, _) = fit_and_score(&order.sorted_values()?, 1, 1.0)?;
        let ok = d.accuracy >= DRIFT2_MIN_ACC
            && d.mean_nlpp <= DRIFT2_MAX_NLPP
            && d_secs <= DRIFT2_MAX_SECS
            && o.accuracy >= ORDER3_MIN_ACC
            && b.accuracy <= BASELINE_MAX_ACC;
        Ok(judge(
            ok,
            format!(
                "drift2 acc {:.3} >= {DRIFT2_MIN_ACC}, nlpp {:.4} <= {DRIFT2_MAX_NLPP}, {d_secs:.1}s <= {DRIFT2_MAX_SECS}s; \
                 order3 (tau=0) acc {:.3} >= {ORDER3_MIN_ACC} ({o_secs:.1}s); sorted-values M=1 acc {:.3} <= {BASELINE_MAX_ACC}",
                d.accuracy, d.mean_nlpp, o.accuracy, b.accuracy
            ),
        ))
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("error: {e}")))
}

fn inducing_comparison() -> Outcome {
    let run = || -> gpsig_core::Result<Outcome> {
        let ds = make_synthetic(SyntheticKind::Order3, COMPARE_N, 2)?.normalize()?;
        // pre-learn the kernel hyperparameters, then hold them fixed
        let cfg = TrainConfig {
            n_z: 8,
            ..desk_config()
        };
        let mut kernel = SigKernelParams::new(3);
        kernel.tau = 0.0;
        let model = initial_model(&ds.train, ds.num_classes, kernel, &cfg)?;
        let (model, _) = train(&ds.train, model, &cfg, &mut Silent)?;
        let spec = CompareSpec {
            n_z: COMPARE_GRID.to_vec(),
            variants: vec![InducingKind::Tensors, InducingKind::Sequences],
            seeds: (0..COMPARE_SEEDS).collect(),
            epochs: COMPARE_EPOCHS,
        };
        let rows = compare_inducing(&ds.train, &ds.test, ds.num_classes, &model.kernel, &spec, &cfg)?;
        let mut curve = Vec::new();
        for n_z in COMPARE_GRID {
            let t = mean_elbo(&rows, n_z, "tensors").unwrap_or(f64::NAN);
            let s = mean_elbo(&rows, n_z, "sequences").unwrap_or(f64::NAN);
            curve.push(format!("n_Z={n_z}: {t:.3} vs {s:.3}"));
        }
        let top = *COMPARE_GRID.last().expect("non-empty grid");
        let t = mean_elbo(&rows, top, "tensors").unwrap_or(f64::NAN);
        let s = mean_elbo(&rows, top, "sequences").unwrap_or(f64::NAN);
        Ok(judge(
            t >= s,
            format!(
                "mean ELBO tensors vs sequences ({COMPARE_SEEDS} seeds, {COMPARE_EPOCHS} epochs): {}; required at n_Z={top}",
                curve.join(", ")
            ),
        ))
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("error: {e}")))
}

fn complexity_scaling() -> Outcome {
    let mut rng = stream(SEED, Purpose::Verify, 100);
    let (d, depth, n) = (2, 4, 50);
    let mut params = SigKernelParams::new(depth);
    params.static_kernel = StaticKernelParams::Rbf {
        lengthscales: vec![1.0; d],
    };
    let zs: Vec<_> = (0..n)
        .map(|_| random_tensor(&mut rng, depth, params.augmented_dim(d)))
        .collect();
    let mut time = |l: usize| {
        let xs: Vec<_> = (0..n).map(|_| random_sequence(&mut rng, l, d)).collect();
        (0..SCALING_REPEATS)
            .map(|_| {
                let start = Instant::now();
                let g = cov_cross(&zs, &xs, &params).expect("cov_cross");
                std::hint::black_box(g);
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let t250 = time(250);
    let t500 = time(500);
    let t1000 = time(1000);
    let ratio = t1000 / t500;
    judge(
        ratio <= SCALING_MAX_RATIO,
        format!(
            "cov_cross n_Z=n_X={n}, M={depth}: l=250 {t250:.3}s, l=500 {t500:.3}s, l=1000 {t1000:.3}s; \
             ratio {ratio:.2} <= {SCALING_MAX_RATIO} (best of {SCALING_REPEATS})"
        ),
    )
}

fn pendigits() -> Outcome {
    let Some(path) = std::env::var_os(PENDIGITS_ENV) else {
        return Outcome::Skip(format!("set {PENDIGITS_ENV} to a split-tagged jsonl file to run"));
    };
    let run = || -> Result<Outcome, Box<dyn std::error::Error>> {
        let start = Instant::now();
        let ds = load_dataset(std::path::Path::new(&path), None)?.normalize()?;
        let cfg = TrainConfig {
            n_z: 500.min(ds.train.len()),
            ..TrainConfig::default()
        };
        let mut kernel = SigKernelParams::new(4);
        kernel.lags = vec![1.0];
        kernel.normalize_levels = true;
        kernel.static_kernel = StaticKernelParams::Rbf {
            lengthscales: Vec::new(),
        };
        let model = initial_model(&ds.train, ds.num_classes, kernel, &cfg)?;
        let (model, _) = train(&ds.train, model, &cfg, &mut Silent)?;
        let m = model.evaluate(&ds.test, cfg.n_mc_predict, SEED)?;
        let secs = start.elapsed().as_secs_f64();
        Ok(judge(
            m.accuracy >= PENDIGITS_MIN_ACC && secs <= PENDIGITS_MAX_SECS,
            format!("acc {:.4} >= {PENDIGITS_MIN_ACC}, {secs:.0}s <= {PENDIGITS_MAX_SECS}s", m.accuracy),
        ))
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("error: {e}")))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle_equivalence", oracle_equivalence),
        ("closed_form_refinement", || suites(vec![verify::refinement(SEED)])),
        ("invariance", || suites(verify::invariance(SEED))),
        ("psd", || suites(vec![verify::psd(SEED)])),
        ("gradient_check", || suites(vec![verify::gradient_check(20, SEED)])),
        ("kl_correctness", || suites(vec![verify::kl_check(SEED)])),
        ("synthetic_classification", synthetic_classification),
        ("inducing_comparison", inducing_comparison),
        ("complexity_scaling", complexity_scaling),
        ("pendigits_optional", pendigits),
    ];
    // `cargo test` passes harness flags such as `--nocapture`; only bare
    // words select criteria.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("acceptance {name}: {tag} [{secs:.1}s] {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
