//! Self-check suites: fast Gram algorithms against the brute-force oracle,
//! closed-form straight-line values, invariances, positive semi-definiteness,
//! autodiff gradients against finite differences, and the whitened KL.

use std::time::Instant;

use gpsig_core::dataset::{make_synthetic, SyntheticKind};
use gpsig_core::model::{Groups, ParamGroup};
use gpsig_core::oracle;
use gpsig_core::rng::{stream, Purpose, StreamRng};
use gpsig_core::sequence::Sequence;
use gpsig_core::signature::{self, GramBlock, InducingTensor, Kernel, SigKernelParams};
use gpsig_core::static_kernel::StaticKernelParams;
use gpsig_core::svgp::{self, VariationalState};
use gpsig_core::trainer::{initial_model, InducingKind, TrainConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

pub const ORACLE_TOL: f64 = 1e-10;
pub const REFINEMENT_TOL: f64 = 1e-12;
pub const INVARIANCE_TOL: f64 = 1e-12;
pub const SCALING_TOL: f64 = 1e-10;
pub const PSD_JITTER: f64 = 1e-8;
pub const PSD_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const KL_TOL: f64 = 1e-10;

/// Outcome of one suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed error measure (suite-specific; compared to `tolerance`).
    pub worst: f64,
    pub tolerance: f64,
    pub secs: f64,
    pub detail: String,
}

impl SuiteResult {
    fn finish(name: &'static str, start: Instant, cases: usize, worst: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            passed: worst <= tolerance && worst.is_finite(),
            cases,
            worst,
            tolerance,
            secs: start.elapsed().as_secs_f64(),
            detail,
        }
    }
}

/// Largest entrywise difference relative to the largest magnitude in `b`.
pub fn block_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn random_sequence(rng: &mut StreamRng, len: usize, d: usize) -> Sequence {
    let mut t = rng.gen_range(-1.0..1.0);
    let times: Vec<f64> = (0..len)
        .map(|_| {
            t += rng.gen_range(0.1..1.0);
            t
        })
        .collect();
    let values = (0..len)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    Sequence::new(times, values, None).expect("valid random sequence")
}

pub fn random_tensor(rng: &mut StreamRng, depth: usize, dim: usize) -> InducingTensor {
    InducingTensor {
        z0: rng.gen_range(-1.0..1.0),
        levels: (1..=depth)
            .map(|m| {
                (0..m)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect(),
    }
}

/// Random kernel parameters. Lags are only added when `lags` is set and the
/// augmented dimension stays within the dense oracle's limit for the linear
/// kernel.
pub fn random_params(rng: &mut StreamRng, d: usize, depth: usize, rbf: bool, normalize: bool, lags: bool) -> SigKernelParams {
    let mut p = SigKernelParams::new(depth);
    p.sigma_prime = (0..=depth).map(|_| rng.gen_range(0.3..2.0)).collect();
    p.beta = rng.gen_range(0.5..1.5);
    p.tau = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) };
    p.normalize_levels = normalize;
    if lags && rng.gen_bool(0.5) && (rbf || 2 * d < oracle::MAX_DIM) {
        p.lags = vec![rng.gen_range(0.05..1.0)];
    }
    if rbf {
        p.static_kernel = StaticKernelParams::Rbf {
            lengthscales: (0..d).map(|_| rng.gen_range(0.5..2.5)).collect(),
        };
    }
    p
}

type Block = Result<Vec<f64>, gpsig_core::Error>;

/// The four fast Gram computations against the oracle on random small
/// instances (`n_X ≤ 4`, `n_Z ≤ 3`, `l ≤ 6`, `d ≤ 3`, `M ≤ 4`), alternating
/// linear/RBF and with/without normalization.
pub fn oracle_equivalence(instances: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = stream(seed, Purpose::Verify, 1);
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for instance in 0..instances {
        let d = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let rbf = instance % 2 == 1;
        let params = random_params(&mut rng, d, depth, rbf, (instance / 2) % 2 == 1, true);
        let dim = params.augmented_dim(d);
        let nx = rng.gen_range(1..=4);
        let nz = rng.gen_range(1..=3);
        let xs: Vec<Sequence> = (0..nx)
            .map(|_| {
                let l = rng.gen_range(1..=6);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let ys: Vec<Sequence> = (0..2)
            .map(|_| {
                let l = rng.gen_range(1..=6);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let zs: Vec<InducingTensor> = (0..nz).map(|_| random_tensor(&mut rng, depth, dim)).collect();
        let blocks: [(&str, Block, Block); 4] = [
            (
                "xx",
                signature::cov_sequences(&xs, &ys, &params).map(|g| g.values),
                oracle::oracle_cov_sequences(&xs, &ys, &params),
            ),
            (
                "zx",
                signature::cov_cross(&zs, &xs, &params).map(|g| g.values),
                oracle::oracle_cov_cross(&zs, &xs, &params),
            ),
            (
                "zz",
                signature::cov_inducing(&zs, d, &params).map(|g| g.values),
                oracle::oracle_cov_inducing(&zs, d, &params),
            ),
            (
                "diag",
                signature::var_sequences(&xs, &params),
                oracle::oracle_var_sequences(&xs, &params),
            ),
        ];
        for (name, fast, slow) in blocks {
            let e = match (fast, slow) {
                (Ok(f), Ok(s)) => block_rel_err(&f, &s),
                (f, s) => {
                    detail = format!("instance {instance} {name}: {:?} / {:?}", f.err(), s.err());
                    f64::INFINITY
                }
            };
            if e > worst {
                worst = e;
                if e > ORACLE_TOL && detail.is_empty() {
                    detail = format!("instance {instance} block {name}: {e:e}");
                }
            }
        }
    }
    SuiteResult::finish("oracle_equivalence", start, instances, worst, ORACLE_TOL, detail)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn straight_line(v: &[f64], segments: usize) -> Sequence {
    let values = (0..=segments)
        .map(|i| v.iter().map(|x| x * i as f64 / segments as f64).collect())
        .collect();
    Sequence::on_grid(values, None).expect("valid line")
}

/// Straight lines split into `N ∈ {2, 4, 8, 16}` segments: level-`m` entries
/// equal `C(N, m)² ⟨v, w⟩^m / N^{2m}` and approach `⟨v, w⟩^m / (m!)²` as `N`
/// grows.
pub fn refinement(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = stream(seed, Purpose::Verify, 2);
    let depth = 4;
    let mut params = SigKernelParams::new(depth);
    params.tau = 0.0;
    let kernel = Kernel::new(params).expect("valid params");
    let mut worst = 0.0f64;
    let mut detail = String::new();
    let mut cases = 0;
    for trial in 0..10 {
        let d = 1 + trial % 3;
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let mut last_gap = vec![f64::INFINITY; depth + 1];
        for n in [2usize, 4, 8, 16] {
            cases += 1;
            let x = kernel.prepare(&[straight_line(&v, n)]).expect("prepare");
            let y = kernel.prepare(&[straight_line(&w, n)]).expect("prepare");
            let levels = kernel.sequence_levels(&x, &y).expect("levels");
            for m in 1..=depth {
                let got = levels.levels[m - 1][(0, 0)];
                let expect = binomial(n, m).powi(2) * vw.powi(m as i32) / (n as f64).powi(2 * m as i32);
                let scale = vw.abs().powi(m as i32).max(f64::MIN_POSITIVE);
                let e = (got - expect).abs() / scale;
                if e > worst {
                    worst = e;
                    detail = format!("N={n} m={m}: {got:e} vs {expect:e}");
                }
                let fact = (1..=m).product::<usize>() as f64;
                let gap = (got - vw.powi(m as i32) / (fact * fact)).abs();
                if n >= m && gap > last_gap[m] + REFINEMENT_TOL * scale {
                    worst = f64::INFINITY;
                    detail = format!("level {m} does not approach its limit at N={n}");
                }
                if n >= m {
                    last_gap[m] = gap;
                }
            }
        }
    }
    SuiteResult::finish("refinement", start, cases, worst, REFINEMENT_TOL, detail)
}

fn gram(xs: &[Sequence], ys: &[Sequence], p: &SigKernelParams) -> Vec<f64> {
    signature::cov_sequences(xs, ys, p).expect("gram").values
}

fn cross(zs: &[InducingTensor], xs: &[Sequence], p: &SigKernelParams) -> Vec<f64> {
    signature::cov_cross(zs, xs, p).expect("cross").values
}

fn with_duplicate(s: &Sequence, rng: &mut StreamRng) -> Sequence {
    let i = rng.gen_range(0..s.len());
    let mut times = s.times().to_vec();
    let new_t = if i + 1 < s.len() {
        0.5 * (times[i] + times[i + 1])
    } else {
        times[i] + 1.0
    };
    times.insert(i + 1, new_t);
    let mut values: Vec<Vec<f64>> = (0..s.len()).map(|k| s.point(k).to_vec()).collect();
    values.insert(i + 1, s.point(i).to_vec());
    Sequence::new(times, values, None).expect("valid duplicate")
}

fn relabeled(s: &Sequence, rng: &mut StreamRng) -> Sequence {
    let mut t = rng.gen_range(-5.0..5.0);
    let times = (0..s.len())
        .map(|_| {
            t += rng.gen_range(0.01..3.0);
            t
        })
        .collect();
    Sequence::new(times, (0..s.len()).map(|k| s.point(k).to_vec()).collect(), None).expect("valid relabel")
}

/// Tabulation padding, duplicate observations and (at `τ = 0` without lags)
/// timestamp relabeling leave every Gram entry unchanged; with normalization
/// and the linear kernel, scaling all sequences by `c ∈ {0.1, 10}` leaves the
/// normalized entries unchanged.
pub fn invariance(seed: u64) -> Vec<SuiteResult> {
    let mut rng = stream(seed, Purpose::Verify, 3);
    let cases = 25;

    let start = Instant::now();
    let mut worst = 0.0f64;
    for c in 0..cases {
        let d = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let p = random_params(&mut rng, d, depth, c % 2 == 1, (c / 2) % 2 == 1, true);
        let xs: Vec<Sequence> = (0..4)
            .map(|_| {
                let l = rng.gen_range(1..=10);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let zs: Vec<InducingTensor> = (0..2)
            .map(|_| random_tensor(&mut rng, depth, p.augmented_dim(d)))
            .collect();
        let batched = gram(&xs, &xs, &p);
        let batched_cross = cross(&zs, &xs, &p);
        let batched_var = signature::var_sequences(&xs, &p).expect("var");
        for i in 0..xs.len() {
            let single_var = signature::var_sequences(&xs[i..=i], &p).expect("var");
            worst = worst.max(block_rel_err(&batched_var[i..=i], &single_var));
            let single_cross = cross(&zs, &xs[i..=i], &p);
            let col: Vec<f64> = (0..zs.len()).map(|z| batched_cross[z * xs.len() + i]).collect();
            worst = worst.max(block_rel_err(&col, &single_cross));
            for j in 0..xs.len() {
                let single = gram(&xs[i..=i], &xs[j..=j], &p);
                worst = worst.max(block_rel_err(&batched[i * xs.len() + j..=i * xs.len() + j], &single));
            }
        }
    }
    let padding = SuiteResult::finish("invariance_padding", start, cases, worst, INVARIANCE_TOL, String::new());

    let mut run = |name: &'static str, transform: &dyn Fn(&Sequence, &mut StreamRng) -> Sequence| {
        let start = Instant::now();
        let mut worst = 0.0f64;
        for c in 0..cases {
            let d = rng.gen_range(1..=3);
            let depth = rng.gen_range(1..=4);
            let mut p = random_params(&mut rng, d, depth, c % 2 == 1, (c / 2) % 2 == 1, false);
            p.tau = 0.0;
            let xs: Vec<Sequence> = (0..4)
                .map(|_| {
                    let l = rng.gen_range(1..=8);
                    random_sequence(&mut rng, l, d)
                })
                .collect();
            let zs: Vec<InducingTensor> = (0..2)
                .map(|_| random_tensor(&mut rng, depth, p.augmented_dim(d)))
                .collect();
            let moved: Vec<Sequence> = xs.iter().map(|s| transform(s, &mut rng)).collect();
            worst = worst.max(block_rel_err(&gram(&moved, &moved, &p), &gram(&xs, &xs, &p)));
            worst = worst.max(block_rel_err(&cross(&zs, &moved, &p), &cross(&zs, &xs, &p)));
        }
        SuiteResult::finish(name, start, cases, worst, INVARIANCE_TOL, String::new())
    };
    let duplicates = run("invariance_duplicates", &with_duplicate);
    let relabel = run("invariance_relabel", &relabeled);

    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let mut p = random_params(&mut rng, d, depth, false, true, false);
        p.tau = 0.0;
        let xs: Vec<Sequence> = (0..4)
            .map(|_| {
                let l = rng.gen_range(2..=8);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let zs: Vec<InducingTensor> = (0..2)
            .map(|_| random_tensor(&mut rng, depth, p.augmented_dim(d)))
            .collect();
        let base = gram(&xs, &xs, &p);
        let base_cross = cross(&zs, &xs, &p);
        for c in [0.1, 10.0] {
            let scaled: Vec<Sequence> = xs
                .iter()
                .map(|s| s.with_values(s.values().iter().map(|v| v * c).collect()).expect("scaled"))
                .collect();
            worst = worst.max(block_rel_err(&gram(&scaled, &scaled, &p), &base));
            worst = worst.max(block_rel_err(&cross(&zs, &scaled, &p), &base_cross));
        }
    }
    let scaling = SuiteResult::finish("invariance_scaling", start, cases, worst, SCALING_TOL, String::new());
    vec![padding, duplicates, relabel, scaling]
}

/// `−λ_min / λ_max` of `a + jitter·I` (non-positive when PSD).
pub fn negativity(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let shifted = a + DMatrix::identity(n, n) * PSD_JITTER;
    let eig = shifted.symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if max <= 0.0 {
        return f64::INFINITY;
    }
    -min / max
}

fn to_dmatrix(g: &GramBlock) -> DMatrix<f64> {
    DMatrix::from_row_slice(g.rows, g.cols, &g.values)
}

/// 50 random `K_XX` Grams with `n = 8` and 50 joint
/// `[[K_ZZ, K_ZX], [K_XZ, K_XX]]` blocks: smallest eigenvalue at least
/// `−1e-8·λ_max` after `1e-8` jitter.
pub fn psd(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = stream(seed, Purpose::Verify, 4);
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    let instances = 50;
    for c in 0..instances {
        let d = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let p = random_params(&mut rng, d, depth, c % 2 == 1, (c / 2) % 2 == 1, true);
        let xs: Vec<Sequence> = (0..8)
            .map(|_| {
                let l = rng.gen_range(2..=12);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let kxx = signature::cov_sequences(&xs, &xs, &p).expect("gram");
        let neg = negativity(&to_dmatrix(&kxx));
        if neg > worst {
            worst = neg;
            detail = format!("K_XX instance {c}");
        }

        let zs: Vec<InducingTensor> = (0..4)
            .map(|_| random_tensor(&mut rng, depth, p.augmented_dim(d)))
            .collect();
        let kzz = to_dmatrix(&signature::cov_inducing(&zs, d, &p).expect("kzz"));
        let kzx = to_dmatrix(&signature::cov_cross(&zs, &xs, &p).expect("kzx"));
        let (nz, nx) = (zs.len(), xs.len());
        let mut joint = DMatrix::zeros(nz + nx, nz + nx);
        joint.view_mut((0, 0), (nz, nz)).copy_from(&kzz);
        joint.view_mut((0, nz), (nz, nx)).copy_from(&kzx);
        joint.view_mut((nz, 0), (nx, nz)).copy_from(&kzx.transpose());
        joint.view_mut((nz, nz), (nx, nx)).copy_from(&to_dmatrix(&kxx));
        let neg = negativity(&joint);
        if neg > worst {
            worst = neg;
            detail = format!("joint instance {c}");
        }
    }
    SuiteResult::finish("psd", start, 2 * instances, worst, PSD_TOL, detail)
}

/// Relative error per parameter group between the autodiff ELBO gradient and
/// central finite differences, at `points` random parameter settings with a
/// fixed Monte-Carlo draw.
pub fn gradient_check(points: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = stream(seed, Purpose::Verify, 5);
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for point in 0..points {
        let kind = if point % 2 == 0 { SyntheticKind::Drift2 } else { SyntheticKind::Order3 };
        let ds = make_synthetic(kind, 6, seed + point as u64).expect("synthetic");
        let train: Vec<Sequence> = ds.train.iter().map(|s| s.window(0, 8)).collect();
        let d = ds.dim;
        let mut kernel = SigKernelParams::new(rng.gen_range(1..=3));
        kernel.tau = rng.gen_range(0.2..1.5);
        kernel.normalize_levels = point % 4 < 2;
        if rng.gen_bool(0.5) {
            kernel.lags = vec![rng.gen_range(0.2..0.8)];
        }
        kernel.static_kernel = if point % 3 == 0 {
            StaticKernelParams::Linear
        } else {
            StaticKernelParams::Rbf {
                lengthscales: (0..d).map(|_| rng.gen_range(0.5..2.0)).collect(),
            }
        };
        let cfg = TrainConfig {
            n_z: 3,
            seed: seed + point as u64,
            inducing: if point % 2 == 0 { InducingKind::Tensors } else { InducingKind::Sequences },
            ..TrainConfig::default()
        };
        let model = initial_model(&train, ds.num_classes, kernel, &cfg).expect("model");
        let mut u = model.encode();
        for x in &mut u {
            *x += rng.gen_range(-0.3..0.3);
        }
        let xs: Vec<&Sequence> = train.iter().collect();
        let ys: Vec<usize> = train.iter().map(|s| s.label().expect("labeled")).collect();
        let eps = svgp::draw_normals(&mut rng, xs.len(), 4, ds.num_classes);
        let n_total = 20;
        let (_, grad) = model
            .elbo_gradient(&u, Groups::all(), &xs, &ys, &eps, n_total)
            .expect("gradient");
        let objective = |v: &[f64]| -> f64 {
            let p = model.decode::<f64>(v, Groups::all()).expect("decode");
            model.elbo_with(&p, &xs, &ys, &eps, n_total).expect("elbo")
        };
        let layout = model.layout();
        for g in ParamGroup::ALL {
            let r = layout.range(g);
            if r.is_empty() {
                continue;
            }
            let mut diff = 0.0;
            let mut norm = 0.0;
            for i in r.clone() {
                let h = 1e-5 * (1.0 + u[i].abs());
                let mut up = u.clone();
                up[i] += h;
                let mut down = u.clone();
                down[i] -= h;
                let fd = (objective(&up) - objective(&down)) / (2.0 * h);
                diff += (grad[i] - fd).powi(2);
                norm += fd * fd;
            }
            let rel = diff.sqrt() / norm.sqrt().max(1e-8);
            if rel > worst {
                worst = rel;
                detail = format!("point {point} group {}: {rel:e}", g.name());
            }
        }
    }
    SuiteResult::finish("gradient_check", start, points, worst, GRADIENT_TOL, detail)
}

/// Closed-form `KL(N(μ, LLᵀ) ‖ N(0, I))` per class, summed.
pub fn dense_kl(state: &VariationalState) -> f64 {
    let n = state.num_inducing();
    state
        .mean
        .iter()
        .zip(&state.chol)
        .map(|(mu, l)| {
            let l = DMatrix::from_row_slice(n, n, l);
            let sigma = &l * l.transpose();
            let mu = DVector::from_column_slice(mu);
            0.5 * (sigma.trace() + mu.dot(&mu) - n as f64 - sigma.determinant().ln())
        })
        .sum()
}

/// `kl_whitened` against [`dense_kl`] on 50 random states, and exactly zero at
/// the prior.
pub fn kl_check(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = stream(seed, Purpose::Verify, 6);
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for c in 0..50 {
        let n = rng.gen_range(1..=6);
        let classes = rng.gen_range(1..=3);
        let mut s = VariationalState::<f64>::prior(n, classes);
        for (mu, l) in s.mean.iter_mut().zip(&mut s.chol) {
            for m in mu.iter_mut() {
                *m = rng.gen_range(-1.5..1.5);
            }
            for i in 0..n {
                for j in 0..i {
                    l[i * n + j] = rng.gen_range(-0.7..0.7);
                }
                l[i * n + i] = rng.gen_range(0.3..2.0);
            }
        }
        let got = svgp::kl_whitened(&s).expect("kl");
        let expect = dense_kl(&s);
        let e = (got - expect).abs() / expect.abs().max(1.0);
        if e > worst {
            worst = e;
            detail = format!("state {c}: {got} vs {expect}");
        }
    }
    for (n, classes) in [(1, 1), (5, 3), (20, 2)] {
        let kl = svgp::kl_whitened(&VariationalState::<f64>::prior(n, classes)).expect("kl");
        if kl != 0.0 {
            worst = f64::INFINITY;
            detail = format!("prior KL is {kl}");
        }
    }
    SuiteResult::finish("kl", start, 53, worst, KL_TOL, detail)
}

/// Every suite with its default size.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    let mut out = vec![oracle_equivalence(200, seed), refinement(seed)];
    out.extend(invariance(seed));
    out.push(psd(seed));
    out.push(gradient_check(20, seed));
    out.push(kl_check(seed));
    out
}
