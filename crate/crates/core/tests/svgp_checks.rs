use gpsig_core::dataset::{make_synthetic, SyntheticKind};
use gpsig_core::linalg::Matrix;
use gpsig_core::model::{Groups, InducingSet, Model};
use gpsig_core::rng::{stream, Purpose};
use gpsig_core::sequence::Sequence;
use gpsig_core::signature::{cov_sequences, var_sequences, SigKernelParams};
use gpsig_core::svgp::{self, VariationalState};
use gpsig_core::trainer::{fit_variational, full_elbo, initial_model, InducingKind, Silent, TrainConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_state(rng: &mut impl Rng, n: usize, c: usize) -> VariationalState {
    let mut s = VariationalState::prior(n, c);
    for (mu, l) in s.mean.iter_mut().zip(&mut s.chol) {
        for m in mu.iter_mut() {
            *m = rng.gen_range(-1.0..1.0);
        }
        for i in 0..n {
            for j in 0..i {
                l[i * n + j] = rng.gen_range(-0.5..0.5);
            }
            l[i * n + i] = rng.gen_range(0.2..1.5);
        }
    }
    s
}

/// Gram of `zs ++ xs`, so that the inducing and data blocks are jointly
/// consistent.
fn joint_gram(zs: &[Sequence], xs: &[Sequence], p: &SigKernelParams) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let nz = zs.len();
    let all: Vec<Sequence> = zs.iter().chain(xs).cloned().collect();
    let g = cov_sequences(&all, &all, p).unwrap();
    let full = DMatrix::from_row_slice(all.len(), all.len(), &g.values);
    let kzz = full.view((0, 0), (nz, nz)).into_owned();
    let kzx = full.view((0, nz), (nz, xs.len())).into_owned();
    (kzz, kzx, var_sequences(xs, p).unwrap())
}

fn to_matrix(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

#[test]
fn marginals_match_dense_conditional() {
    let mut rng = stream(5, Purpose::Verify, 0);
    for trial in 0..10 {
        let ds = make_synthetic(SyntheticKind::Phase2, 6, trial).unwrap();
        let mut p = SigKernelParams::new(3);
        p.normalize_levels = trial % 2 == 0;
        let (zs, xs) = ds.train.split_at(4);
        let (kzz, kzx, kxx) = joint_gram(zs, xs, &p);
        let state = random_state(&mut rng, zs.len(), 2);
        let marg = svgp::marginals(&to_matrix(&kzz), &to_matrix(&kzx), &kxx, &state).unwrap();

        // f_Z = chol(K_ZZ + jI) u with u ~ N(μ, LLᵀ)
        let n = zs.len();
        let kzz_j = &kzz + DMatrix::identity(n, n) * marg.jitter;
        let lzz = kzz_j.clone().cholesky().unwrap().l();
        let kinv = kzz_j.try_inverse().unwrap();
        for (c, (mu, l)) in state.mean.iter().zip(&state.chol).enumerate() {
            let mu = DVector::from_column_slice(mu);
            let l = DMatrix::from_row_slice(n, n, l);
            let m_z = &lzz * mu;
            let s_z = &lzz * &l * l.transpose() * lzz.transpose();
            for x in 0..xs.len() {
                let k = kzx.column(x).into_owned();
                let a = &kinv * &k;
                let mean = a.dot(&m_z);
                let var = kxx[x] - k.dot(&a) + a.dot(&(&s_z * &a));
                assert!((marg.mean[x][c] - mean).abs() <= 1e-8 * mean.abs().max(1.0), "mean {trial}");
                assert!((marg.var[x][c] - var.max(svgp::MIN_VARIANCE)).abs() <= 1e-8 * var.abs().max(1.0), "var {trial}");
            }
        }
    }
}

#[test]
fn point_in_the_inducing_set_has_only_variational_variance() {
    let ds = make_synthetic(SyntheticKind::Drift2, 4, 1).unwrap();
    let p = SigKernelParams::new(2);
    let zs = &ds.train[..3];
    let xs = &ds.train[1..2];
    let (kzz, kzx, kxx) = joint_gram(zs, xs, &p);
    let mut rng = stream(1, Purpose::Verify, 1);
    let state = random_state(&mut rng, 3, 2);
    let marg = svgp::marginals(&to_matrix(&kzz), &to_matrix(&kzx), &kxx, &state).unwrap();
    let lzz = (&kzz + DMatrix::identity(3, 3) * marg.jitter).cholesky().unwrap().l();
    let a = lzz.solve_lower_triangular(&kzx.column(0).into_owned()).unwrap();
    for (c, l) in state.chol.iter().enumerate() {
        let l = DMatrix::from_row_slice(3, 3, l);
        let posterior = (l.transpose() * &a).norm_squared();
        // the conditional term k_xx − ‖A‖² vanishes up to the jitter
        assert!((marg.var[0][c] - posterior).abs() < 1e-5 * kxx[0], "{} vs {posterior}", marg.var[0][c]);
    }
}

#[test]
fn prior_state_recovers_prior_marginals() {
    let ds = make_synthetic(SyntheticKind::Drift2, 4, 2).unwrap();
    let p = SigKernelParams::new(2);
    let (kzz, kzx, kxx) = joint_gram(&ds.train[..3], &ds.test, &p);
    let marg = svgp::marginals(&to_matrix(&kzz), &to_matrix(&kzx), &kxx, &VariationalState::prior(3, 2)).unwrap();
    for (i, k) in kxx.iter().enumerate() {
        assert_eq!(marg.mean[i], vec![0.0, 0.0]);
        for v in &marg.var[i] {
            assert!((v - k).abs() < 1e-10 * k);
        }
    }
}

#[test]
fn expected_log_lik_is_monte_carlo_consistent() {
    let (mean, var) = ([1.0, 0.0], [1.0, 1.0]);
    let n_small = 1_000_000;
    let n_large = 10_000_000;
    let eps = svgp::draw_normals(&mut stream(3, Purpose::Verify, 0), 1, n_small, 2);
    let small = svgp::expected_log_lik_with(&mean, &var, 0, &eps);
    // standard error of the small estimate from its own samples
    let samples: Vec<f64> = eps
        .chunks(2)
        .map(|e| {
            let f = [mean[0] + e[0], mean[1] + e[1]];
            let m = f[0].max(f[1]);
            f[0] - (m + ((f[0] - m).exp() + (f[1] - m).exp()).ln())
        })
        .collect();
    let sd = (samples.iter().map(|s| (s - small).powi(2)).sum::<f64>() / (n_small - 1) as f64).sqrt();
    let se = sd / (n_small as f64).sqrt();
    let eps = svgp::draw_normals(&mut stream(4, Purpose::Verify, 0), 1, n_large, 2);
    let large = svgp::expected_log_lik_with(&mean, &var, 0, &eps);
    assert!((small - large).abs() <= 3.0 * se * (1.0 + 0.1f64.sqrt()), "{small} vs {large} (se {se})");

    let certain = svgp::expected_log_lik(&[20.0, -20.0], &[1e-12, 1e-12], 0, 8, &mut stream(0, Purpose::Verify, 1)).unwrap();
    assert!(certain.abs() < 1e-15);
    let even = svgp::expected_log_lik(&[0.0, 0.0], &[1e-12, 1e-12], 1, 8, &mut stream(0, Purpose::Verify, 1)).unwrap();
    assert!((even - 0.5f64.ln()).abs() < 1e-5);
}

fn small_model(kind: InducingKind, n_z: usize, data: &[Sequence], seed: u64) -> Model {
    let cfg = TrainConfig {
        n_z,
        seed,
        inducing: kind,
        ..TrainConfig::default()
    };
    initial_model(data, 2, SigKernelParams::new(2), &cfg).unwrap()
}

#[test]
fn elbo_minibatch_scaling_identity() {
    let ds = make_synthetic(SyntheticKind::Drift2, 8, 3).unwrap();
    let model = small_model(InducingKind::Tensors, 4, &ds.train, 0);
    let xs: Vec<&Sequence> = ds.train.iter().collect();
    let ys: Vec<usize> = ds.train.iter().map(|s| s.label().unwrap()).collect();
    let n = xs.len();
    let eps = svgp::draw_normals(&mut stream(0, Purpose::Verify, 2), n, 16, 2);
    let per = eps.len() / n;
    let full = model.elbo(&xs, &ys, &eps, n).unwrap();
    let h = n / 2;
    let first = model.elbo(&xs[..h], &ys[..h], &eps[..h * per], n).unwrap();
    let second = model.elbo(&xs[h..], &ys[h..], &eps[h * per..], n).unwrap();
    // at the prior the KL term is zero, so the halves average to the whole
    assert!(((first + second) / 2.0 - full).abs() < 1e-10 * full.abs());
}

#[test]
fn more_inducing_capacity_does_not_lower_the_elbo() {
    let ds = make_synthetic(SyntheticKind::Drift2, 6, 4).unwrap();
    let data = &ds.train;
    let cfg = TrainConfig {
        lr: 0.05,
        minibatch: data.len(),
        n_mc_train: 64,
        ..TrainConfig::default()
    };
    let fit = |mut model: Model| {
        if let InducingSet::Sequences(z) = &mut model.inducing {
            if z.len() == data.len() {
                *z = data.iter().map(|s| s.clone().with_label(None)).collect();
            }
        }
        let (model, _) = fit_variational(data, model, 200, &cfg, &mut Silent).unwrap();
        full_elbo(&model, data, 512, 9).unwrap()
    };
    let one = fit(small_model(InducingKind::Sequences, 1, data, 0));
    let all = fit(small_model(InducingKind::Sequences, data.len(), data, 0));
    assert!(all >= one - 1e-3, "n_Z = n_X gives {all}, n_Z = 1 gives {one}");
}

#[test]
fn prediction_is_symmetric_at_the_prior_and_deterministic() {
    let ds = make_synthetic(SyntheticKind::Phase2, 6, 5).unwrap();
    let model = small_model(InducingKind::Tensors, 3, &ds.train, 0);
    let probs = model.predict(&ds.test, 4096, 1).unwrap();
    for p in &probs {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // var ≈ k_xx ≤ Σσ² here, so the MC error of each probability is small
        assert!((p[0] - 0.5).abs() < 0.03, "{p:?}");
    }
    assert_eq!(probs, model.predict(&ds.test, 4096, 1).unwrap());
    assert_ne!(probs, model.predict(&ds.test, 4096, 2).unwrap());
}

#[test]
fn frozen_decode_round_trips_a_perturbed_model() {
    let ds = make_synthetic(SyntheticKind::Order3, 3, 0).unwrap();
    let model = small_model(InducingKind::Sequences, 2, &ds.train, 0);
    let mut u = model.encode();
    for (i, x) in u.iter_mut().enumerate() {
        *x += 0.01 * (i % 7) as f64;
    }
    let moved = model.with_encoded(&u, Groups::all()).unwrap();
    // positive groups pass through softplus and its inverse
    for (a, b) in moved.encode().iter().zip(&u) {
        assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{a} vs {b}");
    }
}
