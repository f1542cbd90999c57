use gpsig_core::dataset::{make_synthetic, SyntheticKind};
use gpsig_core::model::{Groups, ParamGroup};
use gpsig_core::rng::{stream, Purpose};
use gpsig_core::sequence::Sequence;
use gpsig_core::signature::SigKernelParams;
use gpsig_core::static_kernel::StaticKernelParams;
use gpsig_core::svgp::draw_normals;
use gpsig_core::trainer::{initial_model, InducingKind, TrainConfig};
use rand::Rng;

#[test]
fn autodiff_matches_central_differences() {
    let ds = make_synthetic(SyntheticKind::Drift2, 8, 2).unwrap();
    for (point, inducing) in [(0u64, InducingKind::Tensors), (1, InducingKind::Sequences)] {
        let mut kernel = SigKernelParams::new(3);
        kernel.tau = 0.7;
        kernel.lags = vec![0.5];
        kernel.normalize_levels = point == 0;
        kernel.static_kernel = StaticKernelParams::Rbf { lengthscales: vec![] };
        let cfg = TrainConfig { n_z: 4, inducing, seed: point, ..TrainConfig::default() };
        let model = initial_model(&ds.train, 2, kernel, &cfg).unwrap();
        let mut u = model.encode();
        let mut rng = stream(point, Purpose::Verify, 1);
        for x in &mut u {
            *x += rng.gen_range(-0.3..0.3);
        }
        let xs: Vec<&Sequence> = ds.train.iter().collect();
        let ys: Vec<usize> = ds.train.iter().map(|s| s.label().unwrap()).collect();
        let eps = draw_normals(&mut rng, xs.len(), 8, 2);
        let (_, grad) = model.elbo_gradient(&u, Groups::all(), &xs, &ys, &eps, 8).unwrap();
        let layout = model.layout();
        for g in ParamGroup::ALL {
            let r = layout.range(g);
            if r.is_empty() { continue; }
            let mut num = Vec::new();
            for i in r.clone() {
                let h = 1e-5 * (1.0 + u[i].abs());
                let f = |d: f64| {
                    let mut v = u.clone();
                    v[i] += d;
                    let p = model.decode::<f64>(&v, Groups::all()).unwrap();
                    model.elbo_with(&p, &xs, &ys, &eps, 8).unwrap()
                };
                num.push((f(h) - f(-h)) / (2.0 * h));
            }
            let ana = &grad[r];
            let diff: f64 = ana.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = num.iter().map(|b| b * b).sum::<f64>().sqrt();
            let rel = diff / norm.max(1e-12);
            eprintln!("{inducing:?} {:>16}: rel {rel:.2e} norm {norm:.3e}", g.name());
            assert!(rel <= 1e-4);
        }
    }
}
