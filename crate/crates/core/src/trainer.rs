//! Phased ELBO optimization.
//!
//! [`train`] runs the schedule:
//!
//! 1. stratified split of the training data into optimization and validation
//!    parts;
//! 2. variational parameters only, hyperparameters fixed, for a fixed number
//!    of epochs;
//! 3. (a) everything except the per-level scalings `σ'` (so `β` calibrates the
//!    overall variance with all levels tied), then (b) everything; both with
//!    early stopping on validation nlpp, restoring the best model;
//! 4. validation data merged back, hyperparameters fixed, variational
//!    parameters only for a fixed number of epochs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::model::{labels_of, metrics, Groups, InducingSet, Metrics, Model, ParamGroup};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{self, Purpose};
use crate::sequence::{augment, Sequence};
use crate::signature::{InducingTensor, SigKernelParams};
use crate::static_kernel::{init_lengthscales, StaticKernelParams, LENGTHSCALE_FLOOR};
use crate::svgp::{self, PREDICT_MC_SAMPLES, TRAIN_MC_SAMPLES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InducingKind {
    #[default]
    Tensors,
    Sequences,
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub minibatch: usize,
    /// Epochs without validation improvement before an early-stopped phase
    /// ends.
    pub patience_epochs: usize,
    pub n_z: usize,
    pub optimizer: OptimizerKind,
    /// Length of the fixed-length phases 2 and 4.
    pub phase_epochs: usize,
    /// Upper bound on each early-stopped phase.
    pub max_epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub inducing: InducingKind,
    /// Length of inducing sequences; `None` means `depth + 1`.
    pub inducing_len: Option<usize>,
    pub n_mc_train: usize,
    pub n_mc_predict: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            minibatch: 50,
            patience_epochs: 500,
            n_z: 500,
            optimizer: OptimizerKind::Nadam,
            phase_epochs: 500,
            max_epochs: 10_000,
            seed: 0,
            val_fraction: 0.2,
            inducing: InducingKind::Tensors,
            inducing_len: None,
            n_mc_train: TRAIN_MC_SAMPLES,
            n_mc_predict: PREDICT_MC_SAMPLES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if self.minibatch == 0 || self.n_z == 0 || self.n_mc_train == 0 || self.n_mc_predict == 0 {
            return Err(invalid("minibatch, n_z and Monte-Carlo sample counts must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(invalid("validation fraction must lie in (0, 1)"));
        }
        if self.inducing_len == Some(0) {
            return Err(invalid("inducing sequences need at least one observation"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "variational")]
    Variational,
    #[serde(rename = "tied_levels")]
    TiedLevels,
    #[serde(rename = "all")]
    All,
    #[serde(rename = "merged")]
    Merged,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Variational => "variational",
            Phase::TiedLevels => "tied_levels",
            Phase::All => "all",
            Phase::Merged => "merged",
        }
    }

    fn free(self) -> Groups {
        match self {
            Phase::Variational | Phase::Merged => Groups::variational(),
            Phase::TiedLevels => Groups::all().without(ParamGroup::SigmaPrime),
            Phase::All => Groups::all(),
        }
    }
}

/// One epoch of optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch counter across phases, starting at 1.
    pub epoch: usize,
    pub phase: Phase,
    /// Mean minibatch ELBO over the epoch.
    pub elbo: f64,
    pub val_nlpp: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Seconds since training started, as reported by the [`Monitor`].
    pub elapsed_secs: f64,
}

/// Per-epoch history plus the early-stopping decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// `(phase, epoch, val_nlpp)` of the model restored after each
    /// early-stopped phase.
    pub restored: Vec<(Phase, usize, f64)>,
}

impl TrainLog {
    pub fn last_elbo(&self) -> Option<f64> {
        self.records.last().map(|r| r.elbo)
    }
}

/// Observer of training progress; also supplies wall-clock time, which the
/// core crate cannot read itself.
pub trait Monitor {
    fn elapsed_secs(&self) -> f64 {
        0.0
    }

    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

/// A [`Monitor`] that does nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl Monitor for Silent {}

/// `n_z` inducing tensors: each picks a random training sequence and, per
/// level `m`, `m` time-increasing augmented observations as factors; `z0 = 1`.
/// Sequences shorter than `m` are sampled with replacement.
pub fn init_inducing_tensors(
    train: &[Sequence],
    n_z: usize,
    params: &SigKernelParams,
    seed: u64,
) -> Result<Vec<InducingTensor>> {
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut rng = rng::stream(seed, Purpose::Init, 0);
    (0..n_z)
        .map(|_| {
            let seq = &train[rng.gen_range(0..train.len())];
            let aug = augment(seq, params.tau, &params.lags)?;
            let l = aug.len();
            let levels = (1..=params.depth)
                .map(|m| {
                    let mut idx: Vec<usize> = if l >= m {
                        index::sample(&mut rng, l, m).into_vec()
                    } else {
                        (0..m).map(|_| rng.gen_range(0..l)).collect()
                    };
                    idx.sort_unstable();
                    idx.iter().map(|&i| aug.point(i).to_vec()).collect()
                })
                .collect();
            Ok(InducingTensor { z0: 1.0, levels })
        })
        .collect()
}

/// `n_z` contiguous windows of length `len` (clamped to the sequence length)
/// from random training sequences.
pub fn init_inducing_sequences(
    train: &[Sequence],
    n_z: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<Sequence>> {
    if train.is_empty() || len == 0 {
        return Err(invalid("need training data and a positive window length"));
    }
    let mut rng = rng::stream(seed, Purpose::Init, 1);
    Ok((0..n_z)
        .map(|_| {
            let seq = &train[rng.gen_range(0..train.len())];
            let w = len.min(seq.len());
            let start = rng.gen_range(0..=seq.len() - w);
            seq.window(start, w).with_label(None)
        })
        .collect())
}

/// Fills in RBF lengthscales from the pooled observations of `train` when
/// none are given.
pub fn init_kernel(train: &[Sequence], mut kernel: SigKernelParams, seed: u64) -> Result<SigKernelParams> {
    let d = train.first().ok_or_else(|| invalid("training set is empty"))?.dim();
    if let StaticKernelParams::Rbf { lengthscales } = &mut kernel.static_kernel {
        if lengthscales.is_empty() {
            let pooled: Vec<f64> = train.iter().flat_map(|s| s.values().iter().copied()).collect();
            let seed = rng::stream(seed, Purpose::Lengthscale, 0).gen();
            *lengthscales = init_lengthscales(&pooled, d, seed, LENGTHSCALE_FLOOR)?;
        }
    }
    Ok(kernel)
}

/// Builds the initial model: inducing variables from `train`, variational
/// distribution at the prior. An RBF kernel given with no lengthscales gets
/// them initialized from the training observations.
pub fn initial_model(
    train: &[Sequence],
    num_classes: usize,
    kernel: SigKernelParams,
    cfg: &TrainConfig,
) -> Result<Model> {
    let d = train.first().ok_or_else(|| invalid("training set is empty"))?.dim();
    let kernel = init_kernel(train, kernel, cfg.seed)?;
    let inducing = match cfg.inducing {
        InducingKind::Tensors => InducingSet::Tensors(init_inducing_tensors(train, cfg.n_z, &kernel, cfg.seed)?),
        InducingKind::Sequences => {
            let len = cfg.inducing_len.unwrap_or(kernel.depth + 1);
            InducingSet::Sequences(init_inducing_sequences(train, cfg.n_z, len, cfg.seed)?)
        }
    };
    Model::new(kernel, inducing, num_classes, d)
}

/// Stratified split: per class, `round(fraction·n_c)` sequences (at least one
/// when the class has two or more) go to validation. Returns
/// `(optimization, validation)` indices.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::stream(seed, Purpose::Split, 0);
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = libm::round(fraction * n as f64) as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        val.extend_from_slice(&idx[..k]);
        fit.extend_from_slice(&idx[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Optimization state shared by consecutive epochs of one phase.
struct Run<'a> {
    cfg: &'a TrainConfig,
    /// Model at the start of the phase; frozen groups are read from here.
    base: Model,
    u: Vec<f64>,
    free: Groups,
    opt: Optimizer,
    epoch: usize,
    step: u64,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a TrainConfig, model: Model, free: Groups, epoch: usize, step: u64) -> Self {
        let u = model.encode();
        let opt = Optimizer::new(cfg.optimizer, cfg.lr, u.len());
        Self {
            cfg,
            base: model,
            u,
            free,
            opt,
            epoch,
            step,
        }
    }

    fn model(&self) -> Result<Model> {
        self.base.with_encoded(&self.u, self.free)
    }

    /// One shuffled pass of minibatches; returns the mean minibatch ELBO.
    fn epoch(&mut self, data: &[Sequence], labels: &[usize], phase: Phase) -> Result<f64> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(self.cfg.seed, Purpose::Minibatch, self.epoch as u64));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.cfg.minibatch) {
            let xs: Vec<&Sequence> = chunk.iter().map(|&i| &data[i]).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut r = rng::stream(self.cfg.seed, Purpose::MonteCarlo, self.step);
            self.step += 1;
            let eps = svgp::draw_normals(&mut r, xs.len(), self.cfg.n_mc_train, self.base.num_classes);
            let diverged = |detail: String| Error::Diverged {
                epoch: self.epoch,
                phase: phase.name(),
                detail,
            };
            let (elbo, grad) = self
                .base
                .elbo_gradient(&self.u, self.free, &xs, &ys, &eps, data.len())
                .map_err(|e| diverged(format!("{e}")))?;
            if !elbo.is_finite() {
                return Err(diverged(format!("ELBO is {elbo}")));
            }
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            self.opt
                .step(&mut self.u, &neg)
                .map_err(|e| diverged(format!("{e}")))?;
            total += elbo;
            batches += 1;
        }
        Ok(total / batches as f64)
    }
}

fn validation_metrics(model: &Model, val: &[Sequence], val_labels: &[usize], cfg: &TrainConfig) -> Result<Metrics> {
    let probs = model.predict(val, cfg.n_mc_predict, cfg.seed)?;
    Ok(metrics(&probs, val_labels))
}

/// Full phased training. `model` supplies the initial hyperparameters and
/// inducing variables (see [`initial_model`]).
pub fn train(
    data: &[Sequence],
    model: Model,
    cfg: &TrainConfig,
    monitor: &mut dyn Monitor,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    model.validate()?;
    let labels = labels_of(data)?;
    let distinct = {
        let mut seen = alloc::vec![false; model.num_classes];
        for &y in &labels {
            if y >= model.num_classes {
                return Err(invalid(format!("label {y} out of range")));
            }
            seen[y] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(invalid("training data must contain at least two classes"));
    }
    let (fit_idx, val_idx) = stratified_split(&labels, cfg.val_fraction, cfg.seed);
    let fit: Vec<Sequence> = fit_idx.iter().map(|&i| data[i].clone()).collect();
    let fit_labels: Vec<usize> = fit_idx.iter().map(|&i| labels[i]).collect();
    let val: Vec<Sequence> = val_idx.iter().map(|&i| data[i].clone()).collect();
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut log = TrainLog::default();
    let (mut epoch, mut step) = (0usize, 0u64);

    // phase 2
    let mut model = model;
    {
        let mut run = Run::new(cfg, model, Phase::Variational.free(), epoch, step);
        for _ in 0..cfg.phase_epochs {
            let elbo = run.epoch(&fit, &fit_labels, Phase::Variational)?;
            record(&mut log, monitor, run.epoch, Phase::Variational, elbo, None);
        }
        model = run.model()?;
        epoch = run.epoch;
        step = run.step;
    }

    // phase 3a / 3b
    for phase in [Phase::TiedLevels, Phase::All] {
        let mut run = Run::new(cfg, model, phase.free(), epoch, step);
        let mut best = (run.model()?, validation_metrics(&run.base, &val, &val_labels, cfg)?.mean_nlpp, epoch);
        let mut since_best = 0;
        for _ in 0..cfg.max_epochs {
            let elbo = run.epoch(&fit, &fit_labels, phase)?;
            let current = run.model()?;
            let m = validation_metrics(&current, &val, &val_labels, cfg)?;
            record(&mut log, monitor, run.epoch, phase, elbo, Some(m));
            if m.mean_nlpp < best.1 {
                best = (current, m.mean_nlpp, run.epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience_epochs {
                    break;
                }
            }
        }
        log::info!(
            "phase {}: restoring epoch {} (validation nlpp {:.4})",
            phase.name(),
            best.2,
            best.1
        );
        log.restored.push((phase, best.2, best.1));
        model = best.0;
        epoch = run.epoch;
        step = run.step;
    }

    // phase 4
    let mut merged = fit;
    merged.extend(val);
    let mut merged_labels = fit_labels;
    merged_labels.extend(val_labels);
    let mut run = Run::new(cfg, model, Phase::Merged.free(), epoch, step);
    for _ in 0..cfg.phase_epochs {
        let elbo = run.epoch(&merged, &merged_labels, Phase::Merged)?;
        record(&mut log, monitor, run.epoch, Phase::Merged, elbo, None);
    }
    Ok((run.model()?, log))
}

fn record(log: &mut TrainLog, monitor: &mut dyn Monitor, epoch: usize, phase: Phase, elbo: f64, val: Option<Metrics>) {
    let rec = EpochRecord {
        epoch,
        phase,
        elbo,
        val_nlpp: val.map(|m| m.mean_nlpp),
        val_accuracy: val.map(|m| m.accuracy),
        elapsed_secs: monitor.elapsed_secs(),
    };
    monitor.on_epoch(&rec);
    log.records.push(rec);
}

/// Optimizes only the variational parameters (inducing variables, mean and
/// covariance factor) on all of `data` for `epochs` epochs.
pub fn fit_variational(
    data: &[Sequence],
    model: Model,
    epochs: usize,
    cfg: &TrainConfig,
    monitor: &mut dyn Monitor,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    let labels = labels_of(data)?;
    let mut log = TrainLog::default();
    let mut run = Run::new(cfg, model, Groups::variational(), 0, 0);
    for _ in 0..epochs {
        let elbo = run.epoch(data, &labels, Phase::Variational)?;
        record(&mut log, monitor, run.epoch, Phase::Variational, elbo, None);
    }
    Ok((run.model()?, log))
}

/// Full-data ELBO estimate with `n_mc` draws per point from a fixed stream.
pub fn full_elbo(model: &Model, data: &[Sequence], n_mc: usize, seed: u64) -> Result<f64> {
    let labels = labels_of(data)?;
    let xs: Vec<&Sequence> = data.iter().collect();
    let eps = svgp::draw_normals(&mut rng::stream(seed, Purpose::Verify, 0), xs.len(), n_mc, model.num_classes);
    model.elbo(&xs, &labels, &eps, data.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_synthetic, SyntheticKind};

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let (fit, val) = stratified_split(&labels, 0.2, 3);
        assert_eq!(fit.len() + val.len(), 50);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 5);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 5);
    }

    #[test]
    fn tensor_init_factors_are_observations() {
        let ds = make_synthetic(SyntheticKind::Drift2, 10, 1).unwrap();
        let mut params = SigKernelParams::new(3);
        params.tau = 0.5;
        let z = init_inducing_tensors(&ds.train, 4, &params, 9).unwrap();
        assert_eq!(z, init_inducing_tensors(&ds.train, 4, &params, 9).unwrap());
        let points: Vec<Vec<f64>> = ds
            .train
            .iter()
            .flat_map(|s| {
                let a = augment(s, 0.5, &[]).unwrap();
                (0..a.len()).map(move |i| a.point(i).to_vec()).collect::<Vec<_>>()
            })
            .collect();
        for t in &z {
            assert_eq!(t.z0, 1.0);
            for (m, level) in t.levels.iter().enumerate() {
                assert_eq!(level.len(), m + 1);
                for f in level {
                    assert!(points.contains(f));
                }
                // time coordinate is non-decreasing across factors
                assert!(level.windows(2).all(|w| w[0][0] < w[1][0]));
            }
        }
    }

    #[test]
    fn short_sequences_sample_with_replacement() {
        let s = Sequence::on_grid(alloc::vec![alloc::vec![0.0], alloc::vec![1.0]], Some(0)).unwrap();
        let z = init_inducing_tensors(&[s], 2, &SigKernelParams::new(4), 0).unwrap();
        assert_eq!(z[0].levels[3].len(), 4);
    }

    #[test]
    fn sequence_windows_are_contiguous() {
        let ds = make_synthetic(SyntheticKind::Phase2, 6, 2).unwrap();
        for w in init_inducing_sequences(&ds.train, 5, 3, 4).unwrap() {
            assert_eq!(w.len(), 3);
            assert!(ds.train.iter().any(|s| {
                (0..=s.len() - 3).any(|k| s.window(k, 3).values() == w.values() && s.window(k, 3).times() == w.times())
            }));
        }
        let one = Sequence::on_grid(alloc::vec![alloc::vec![0.0]; 3], Some(0)).unwrap();
        assert_eq!(init_inducing_sequences(core::slice::from_ref(&one), 1, 3, 0).unwrap()[0].values(), one.values());
    }
}
