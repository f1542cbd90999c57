use gpsig_core::oracle;
use gpsig_core::sequence::Sequence;
use gpsig_core::signature::{self, InducingTensor, SigKernelParams};
use gpsig_core::static_kernel::StaticKernelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

fn random_sequence(rng: &mut ChaCha8Rng, len: usize, d: usize) -> Sequence {
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
    Sequence::new(times, values, None).unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, depth: usize, dim: usize) -> InducingTensor {
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

#[test]
fn fast_recursions_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for instance in 0..200 {
        let d = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=4);
        let rbf = instance % 2 == 1;
        let mut params = SigKernelParams::new(depth);
        params.sigma_prime = (0..=depth).map(|_| rng.gen_range(0.3..2.0)).collect();
        params.beta = rng.gen_range(0.5..1.5);
        params.tau = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) };
        params.normalize_levels = (instance / 2) % 2 == 1;
        if rng.gen_bool(0.5) && (rbf || 2 * d < oracle::MAX_DIM) {
            params.lags = vec![rng.gen_range(0.05..1.0)];
        }
        if rbf {
            params.static_kernel = StaticKernelParams::Rbf {
                lengthscales: (0..d).map(|_| rng.gen_range(0.5..2.5)).collect(),
            };
        }
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
                let l = rng.gen_range(2..=6);
                random_sequence(&mut rng, l, d)
            })
            .collect();
        let zs: Vec<InducingTensor> = (0..nz).map(|_| random_tensor(&mut rng, depth, dim)).collect();

        let checks = [
            (
                signature::cov_sequences(&xs, &ys, &params).unwrap().values,
                oracle::oracle_cov_sequences(&xs, &ys, &params).unwrap(),
            ),
            (
                signature::cov_cross(&zs, &xs, &params).unwrap().values,
                oracle::oracle_cov_cross(&zs, &xs, &params).unwrap(),
            ),
            (
                signature::cov_inducing(&zs, d, &params).unwrap().values,
                oracle::oracle_cov_inducing(&zs, d, &params).unwrap(),
            ),
            (
                signature::var_sequences(&xs, &params).unwrap(),
                oracle::oracle_var_sequences(&xs, &params).unwrap(),
            ),
        ];
        for (k, (fast, slow)) in checks.iter().enumerate() {
            let e = rel_err(fast, slow);
            assert!(e <= 1e-10, "instance {instance} block {k}: rel err {e:e}\n{fast:?}\n{slow:?}");
            worst = worst.max(e);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
    eprintln!("worst relative error {worst:e}");
}
