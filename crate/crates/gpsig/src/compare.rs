//! Inducing tensors vs inducing sequences at fixed kernel hyperparameters.

use gpsig_core::sequence::Sequence;
use gpsig_core::signature::SigKernelParams;
use gpsig_core::trainer::{fit_variational, full_elbo, initial_model, InducingKind, Silent, TrainConfig};
use rayon::prelude::*;

use crate::report::CompareRow;

pub fn variant_name(kind: InducingKind) -> &'static str {
    match kind {
        InducingKind::Tensors => "tensors",
        InducingKind::Sequences => "sequences",
    }
}

/// Grid of runs to compare.
#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub n_z: Vec<usize>,
    pub variants: Vec<InducingKind>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
}

/// For every `(n_z, variant, seed)`: fresh inducing variables, variational
/// parameters fitted for `spec.epochs` epochs with `kernel` frozen, then the
/// full-data ELBO on `train` and predictive metrics on `test`. Runs are
/// independent and executed in parallel; rows come back in grid order.
pub fn compare_inducing(
    train: &[Sequence],
    test: &[Sequence],
    num_classes: usize,
    kernel: &SigKernelParams,
    spec: &CompareSpec,
    cfg: &TrainConfig,
) -> gpsig_core::Result<Vec<CompareRow>> {
    let mut grid = Vec::new();
    for &n_z in &spec.n_z {
        for &variant in &spec.variants {
            for &seed in &spec.seeds {
                grid.push((n_z, variant, seed));
            }
        }
    }
    grid.into_par_iter()
        .map(|(n_z, variant, seed)| {
            let cfg = TrainConfig {
                n_z,
                seed,
                inducing: variant,
                ..cfg.clone()
            };
            let model = initial_model(train, num_classes, kernel.clone(), &cfg)?;
            let (model, _) = fit_variational(train, model, spec.epochs, &cfg, &mut Silent)?;
            let elbo = full_elbo(&model, train, cfg.n_mc_predict, seed)?;
            let m = model.evaluate(test, cfg.n_mc_predict, seed)?;
            log::info!("compare n_z={n_z} {} seed={seed}: elbo {elbo:.3}", variant_name(variant));
            Ok(CompareRow {
                n_z,
                variant: variant_name(variant).to_string(),
                seed,
                elbo,
                accuracy: m.accuracy,
                nlpp: m.mean_nlpp,
            })
        })
        .collect()
}

/// Mean ELBO of `variant` at `n_z` over seeds.
pub fn mean_elbo(rows: &[CompareRow], n_z: usize, variant: &str) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.n_z == n_z && r.variant == variant)
        .map(|r| r.elbo)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
