//! The full classifier: kernel hyperparameters, inducing variables and the
//! variational state, plus the mapping to and from a flat unconstrained
//! parameter vector for optimization.
//!
//! Positive quantities (level scalings, `β`, `τ`, lags, lengthscales and the
//! diagonal of every variational Cholesky factor) are optimized through
//! `softplus`. A quantity that starts at exactly zero (`τ = 0`, a zero lag)
//! has no unconstrained coordinate and stays at zero.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{check_dim, invalid};
use crate::linalg::{cholesky_jittered, Matrix};
use crate::rng::{self, Purpose};
use crate::sequence::Sequence;
use crate::signature::{InducingTensor, Kernel, PreparedSequences, SigKernelParams};
use crate::static_kernel::StaticKernelParams;
use crate::svgp::{self, Marginals, VariationalState};
use crate::{softplus_inv, Error, Result, Scalar};

/// Inducing variables: all tensors or all sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "lowercase")]
pub enum InducingSet {
    Tensors(Vec<InducingTensor>),
    Sequences(Vec<Sequence>),
}

impl InducingSet {
    pub fn len(&self) -> usize {
        match self {
            InducingSet::Tensors(z) => z.len(),
            InducingSet::Sequences(z) => z.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InducingSet::Tensors(_) => "tensors",
            InducingSet::Sequences(_) => "sequences",
        }
    }
}

/// Named slices of the unconstrained parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    SigmaPrime,
    Beta,
    Tau,
    Lags,
    Lengthscales,
    Inducing,
    VariationalMean,
    VariationalChol,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::SigmaPrime,
        ParamGroup::Beta,
        ParamGroup::Tau,
        ParamGroup::Lags,
        ParamGroup::Lengthscales,
        ParamGroup::Inducing,
        ParamGroup::VariationalMean,
        ParamGroup::VariationalChol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::SigmaPrime => "sigma_prime",
            ParamGroup::Beta => "beta",
            ParamGroup::Tau => "tau",
            ParamGroup::Lags => "lags",
            ParamGroup::Lengthscales => "lengthscales",
            ParamGroup::Inducing => "inducing",
            ParamGroup::VariationalMean => "variational_mean",
            ParamGroup::VariationalChol => "variational_chol",
        }
    }

    /// Kernel hyperparameters, as opposed to the variational approximation
    /// (inducing variables, mean and covariance factor).
    pub fn is_hyperparameter(self) -> bool {
        !matches!(
            self,
            ParamGroup::Inducing | ParamGroup::VariationalMean | ParamGroup::VariationalChol
        )
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

/// A set of parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Groups(u16);

impl Groups {
    pub const NONE: Groups = Groups(0);

    pub fn all() -> Self {
        Self::of(&ParamGroup::ALL)
    }

    /// Inducing variables and the variational distribution.
    pub fn variational() -> Self {
        Self::of(&[
            ParamGroup::Inducing,
            ParamGroup::VariationalMean,
            ParamGroup::VariationalChol,
        ])
    }

    pub fn of(groups: &[ParamGroup]) -> Self {
        Groups(groups.iter().fold(0, |acc, g| acc | g.bit()))
    }

    pub fn contains(self, g: ParamGroup) -> bool {
        self.0 & g.bit() != 0
    }

    pub fn without(self, g: ParamGroup) -> Self {
        Groups(self.0 & !g.bit())
    }

    pub fn iter(self) -> impl Iterator<Item = ParamGroup> {
        ParamGroup::ALL.into_iter().filter(move |&g| self.contains(g))
    }
}

/// Position of every group in the unconstrained vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    ranges: Vec<(ParamGroup, Range<usize>)>,
    len: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, g: ParamGroup) -> Range<usize> {
        self.ranges
            .iter()
            .find(|(h, _)| *h == g)
            .map_or(0..0, |(_, r)| r.clone())
    }

    /// Per-coordinate membership of `groups`.
    pub fn mask(&self, groups: Groups) -> Vec<bool> {
        let mut mask = alloc::vec![false; self.len];
        for g in groups.iter() {
            for i in self.range(g) {
                mask[i] = true;
            }
        }
        mask
    }
}

/// Model parameters in constrained form over a [`Scalar`].
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub kernel: SigKernelParams<T>,
    pub inducing: InducingParams<T>,
    pub variational: VariationalState<T>,
}

#[derive(Debug, Clone)]
pub enum InducingParams<T> {
    Tensors(Vec<InducingTensor<T>>),
    /// Observation values of each inducing sequence; times are fixed.
    Sequences(Vec<Vec<T>>),
}

/// Test-set summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_nlpp: f64,
    pub count: usize,
}

/// Sequences per chunk when evaluating large sets.
const PREDICT_CHUNK: usize = 256;

/// GP classifier over sequences with a signature covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kernel: SigKernelParams,
    pub inducing: InducingSet,
    pub variational: VariationalState,
    pub num_classes: usize,
    pub source_dim: usize,
}

fn push_positive(out: &mut Vec<f64>, x: f64) {
    out.push(softplus_inv(x));
}

impl Model {
    /// A model with the variational distribution at the prior.
    pub fn new(
        kernel: SigKernelParams,
        inducing: InducingSet,
        num_classes: usize,
        source_dim: usize,
    ) -> Result<Self> {
        let variational = VariationalState::prior(inducing.len(), num_classes);
        let model = Self {
            kernel,
            inducing,
            variational,
            num_classes,
            source_dim,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.num_classes < 2 {
            return Err(invalid("at least two classes are required"));
        }
        if self.inducing.is_empty() {
            return Err(invalid("at least one inducing variable is required"));
        }
        if let StaticKernelParams::Rbf { lengthscales } = &self.kernel.static_kernel {
            check_dim(self.source_dim, lengthscales.len())?;
        }
        let dim = self.kernel.augmented_dim(self.source_dim);
        match &self.inducing {
            InducingSet::Tensors(z) => {
                for t in z {
                    t.validate(self.kernel.depth, dim)?;
                }
            }
            InducingSet::Sequences(z) => {
                for s in z {
                    check_dim(self.source_dim, s.dim())?;
                }
            }
        }
        self.variational.validate()?;
        check_dim(self.num_classes, self.variational.num_classes())?;
        check_dim(self.num_inducing(), self.variational.num_inducing())
    }

    /// Fingerprint of the kernel hyperparameters.
    pub fn hyper_fingerprint(&self) -> u64 {
        self.kernel.fingerprint()
    }

    fn group_len(&self, g: ParamGroup) -> usize {
        let k = &self.kernel;
        let n = self.num_inducing();
        match g {
            ParamGroup::SigmaPrime => k.sigma_prime.len(),
            ParamGroup::Beta => 1,
            ParamGroup::Tau => usize::from(k.tau > 0.0),
            ParamGroup::Lags => {
                if k.lags.iter().all(|&l| l > 0.0) {
                    k.lags.len()
                } else {
                    0
                }
            }
            ParamGroup::Lengthscales => match &k.static_kernel {
                StaticKernelParams::Linear => 0,
                StaticKernelParams::Rbf { lengthscales } => lengthscales.len(),
            },
            ParamGroup::Inducing => match &self.inducing {
                InducingSet::Tensors(z) => z
                    .iter()
                    .map(|t| 1 + t.levels.iter().flatten().map(Vec::len).sum::<usize>())
                    .sum(),
                InducingSet::Sequences(z) => z.iter().map(|s| s.values().len()).sum(),
            },
            ParamGroup::VariationalMean => self.num_classes * n,
            ParamGroup::VariationalChol => self.num_classes * n * (n + 1) / 2,
        }
    }

    pub fn layout(&self) -> Layout {
        let mut start = 0;
        let ranges = ParamGroup::ALL
            .iter()
            .map(|&g| {
                let r = start..start + self.group_len(g);
                start = r.end;
                (g, r)
            })
            .collect();
        Layout { ranges, len: start }
    }

    /// The unconstrained parameter vector, laid out as [`Self::layout`].
    pub fn encode(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.layout().len());
        let k = &self.kernel;
        for &s in &k.sigma_prime {
            push_positive(&mut u, s);
        }
        push_positive(&mut u, k.beta);
        if self.group_len(ParamGroup::Tau) > 0 {
            push_positive(&mut u, k.tau);
        }
        if self.group_len(ParamGroup::Lags) > 0 {
            for &l in &k.lags {
                push_positive(&mut u, l);
            }
        }
        if let StaticKernelParams::Rbf { lengthscales } = &k.static_kernel {
            for &l in lengthscales {
                push_positive(&mut u, l);
            }
        }
        match &self.inducing {
            InducingSet::Tensors(z) => {
                for t in z {
                    u.push(t.z0);
                    for f in t.levels.iter().flatten() {
                        u.extend_from_slice(f);
                    }
                }
            }
            InducingSet::Sequences(z) => {
                for s in z {
                    u.extend_from_slice(s.values());
                }
            }
        }
        for mu in &self.variational.mean {
            u.extend_from_slice(mu);
        }
        let n = self.num_inducing();
        for l in &self.variational.chol {
            for i in 0..n {
                for j in 0..i {
                    u.push(l[i * n + j]);
                }
                push_positive(&mut u, l[i * n + i]);
            }
        }
        u
    }

    /// Constrained parameters from the unconstrained vector `u`. Groups outside
    /// `free` ignore `u` and take the model's stored values, so frozen
    /// parameters are reproduced bit for bit.
    pub fn decode<T: Scalar>(&self, u: &[T], free: Groups) -> Result<ModelParams<T>> {
        let layout = self.layout();
        check_dim(layout.len(), u.len())?;
        let take = |g: ParamGroup| -> Option<&[T]> {
            (free.contains(g) && !layout.range(g).is_empty()).then(|| &u[layout.range(g)])
        };
        let lift = |x: f64| T::constant(x);
        let positive = |g: ParamGroup, stored: &[f64]| -> Vec<T> {
            match take(g) {
                Some(v) => v.iter().map(|x| x.softplus()).collect(),
                None => stored.iter().map(|&x| lift(x)).collect(),
            }
        };
        let k = &self.kernel;
        let static_kernel = match &k.static_kernel {
            StaticKernelParams::Linear => StaticKernelParams::Linear,
            StaticKernelParams::Rbf { lengthscales } => StaticKernelParams::Rbf {
                lengthscales: positive(ParamGroup::Lengthscales, lengthscales),
            },
        };
        let kernel = SigKernelParams {
            depth: k.depth,
            sigma_prime: positive(ParamGroup::SigmaPrime, &k.sigma_prime),
            beta: positive(ParamGroup::Beta, &[k.beta])[0],
            tau: positive(ParamGroup::Tau, &[k.tau])[0],
            lags: positive(ParamGroup::Lags, &k.lags),
            static_kernel,
            normalize_levels: k.normalize_levels,
        };

        let inducing = match (&self.inducing, take(ParamGroup::Inducing)) {
            (InducingSet::Tensors(z), None) => {
                InducingParams::Tensors(z.iter().map(InducingTensor::lift).collect())
            }
            (InducingSet::Tensors(z), Some(v)) => {
                let mut it = v.iter().copied();
                let mut next = || it.next().expect("layout covers inducing tensors");
                InducingParams::Tensors(
                    z.iter()
                        .map(|t| InducingTensor {
                            z0: next(),
                            levels: t
                                .levels
                                .iter()
                                .map(|l| l.iter().map(|f| f.iter().map(|_| next()).collect()).collect())
                                .collect(),
                        })
                        .collect(),
                )
            }
            (InducingSet::Sequences(z), v) => {
                let mut offset = 0;
                InducingParams::Sequences(
                    z.iter()
                        .map(|s| {
                            let len = s.values().len();
                            let vals = match v {
                                Some(v) => v[offset..offset + len].to_vec(),
                                None => s.values().iter().map(|&x| lift(x)).collect(),
                            };
                            offset += len;
                            vals
                        })
                        .collect(),
                )
            }
        };

        let n = self.num_inducing();
        let mean = match take(ParamGroup::VariationalMean) {
            Some(v) => v.chunks(n).map(<[T]>::to_vec).collect(),
            None => self
                .variational
                .mean
                .iter()
                .map(|m| m.iter().map(|&x| lift(x)).collect())
                .collect(),
        };
        let chol = match take(ParamGroup::VariationalChol) {
            Some(v) => v
                .chunks(n * (n + 1) / 2)
                .map(|tri| {
                    let mut l = alloc::vec![T::zero(); n * n];
                    let mut p = 0;
                    for i in 0..n {
                        for j in 0..i {
                            l[i * n + j] = tri[p];
                            p += 1;
                        }
                        l[i * n + i] = tri[p].softplus();
                        p += 1;
                    }
                    l
                })
                .collect(),
            None => self
                .variational
                .chol
                .iter()
                .map(|l| l.iter().map(|&x| lift(x)).collect())
                .collect(),
        };
        Ok(ModelParams {
            kernel,
            inducing,
            variational: VariationalState { mean, chol },
        })
    }

    /// A copy with the groups in `free` replaced by their values in `u`.
    pub fn with_encoded(&self, u: &[f64], free: Groups) -> Result<Model> {
        let p = self.decode::<f64>(u, free)?;
        let inducing = match (&self.inducing, p.inducing) {
            (InducingSet::Sequences(z), InducingParams::Sequences(vals)) => InducingSet::Sequences(
                z.iter()
                    .zip(vals)
                    .map(|(s, v)| s.with_values(v))
                    .collect::<Result<_>>()?,
            ),
            (_, InducingParams::Tensors(t)) => InducingSet::Tensors(t),
            _ => unreachable!("decode preserves the inducing kind"),
        };
        let model = Model {
            kernel: p.kernel,
            inducing,
            variational: p.variational,
            num_classes: self.num_classes,
            source_dim: self.source_dim,
        };
        model.validate()?;
        Ok(model)
    }

    /// `K_ZZ` under `p`, with the inducing side prepared once for reuse.
    fn inducing_side<T: Scalar>(&self, kernel: &Kernel<T>, p: &ModelParams<T>) -> Result<InducingSide<T>> {
        match (&p.inducing, &self.inducing) {
            (InducingParams::Tensors(z), _) => {
                let pz = kernel.prepare_tensors(z, self.source_dim)?;
                let k_zz = kernel.k_zz(&pz)?;
                Ok(InducingSide::Tensors(pz, k_zz))
            }
            (InducingParams::Sequences(vals), InducingSet::Sequences(z)) => {
                let raw: Vec<(&[f64], &[T])> = z
                    .iter()
                    .zip(vals)
                    .map(|(s, v)| (s.times(), v.as_slice()))
                    .collect();
                let pz = kernel.prepare_raw(&raw, self.source_dim)?;
                let diag = self
                    .kernel
                    .normalize_levels
                    .then(|| kernel.diag_levels(&pz))
                    .transpose()?;
                let k_zz = kernel.k_xy(&pz, diag.as_ref(), &pz, diag.as_ref())?;
                Ok(InducingSide::Sequences(pz, diag, k_zz))
            }
            _ => Err(invalid("inducing parameters do not match the inducing set")),
        }
    }

    /// `K_ZX` and `diag K_X` for a batch of data sequences.
    fn data_side<T: Scalar>(
        &self,
        kernel: &Kernel<T>,
        z: &InducingSide<T>,
        xs: &[&Sequence],
    ) -> Result<(Matrix<T>, Vec<T>)> {
        for s in xs {
            check_dim(self.source_dim, s.dim())?;
        }
        let owned: Vec<Sequence> = xs.iter().map(|&s| s.clone()).collect();
        let px = kernel.prepare(&owned)?;
        let x_diag = kernel.diag_levels(&px)?;
        let k_x = kernel.k_x(&x_diag);
        let x_norm = self.kernel.normalize_levels.then_some(&x_diag);
        let k_zx = match z {
            InducingSide::Tensors(pz, _) => kernel.k_zx(pz, &px, x_norm)?,
            InducingSide::Sequences(pz, z_diag, _) => kernel.k_xy(pz, z_diag.as_ref(), &px, x_norm)?,
        };
        Ok((k_zx, k_x))
    }

    /// Posterior marginals of `xs` under parameters `p`.
    pub fn marginals_with<T: Scalar>(&self, p: &ModelParams<T>, xs: &[&Sequence]) -> Result<Marginals<T>> {
        let kernel = Kernel::new(p.kernel.clone())?;
        let z = self.inducing_side(&kernel, p)?;
        let (l_zz, jitter) = cholesky_jittered(z.k_zz())?;
        let (k_zx, k_x) = self.data_side(&kernel, &z, xs)?;
        svgp::marginals_factored(&l_zz, jitter, &k_zx, &k_x, &p.variational)
    }

    /// Minibatch ELBO under parameters `p`; `eps` holds
    /// `|batch| × n_mc × C` standard normal draws.
    pub fn elbo_with<T: Scalar>(
        &self,
        p: &ModelParams<T>,
        xs: &[&Sequence],
        labels: &[usize],
        eps: &[f64],
        n_total: usize,
    ) -> Result<T> {
        let marg = self.marginals_with(p, xs)?;
        let kl = svgp::kl_whitened(&p.variational)?;
        svgp::elbo(&marg, labels, eps, n_total, kl)
    }

    /// ELBO value at the stored parameters.
    pub fn elbo(&self, xs: &[&Sequence], labels: &[usize], eps: &[f64], n_total: usize) -> Result<f64> {
        let p = self.decode::<f64>(&self.encode(), Groups::NONE)?;
        self.elbo_with(&p, xs, labels, eps, n_total)
    }

    /// ELBO and its gradient with respect to the unconstrained coordinates of
    /// the `free` groups (other coordinates get zero gradient).
    pub fn elbo_gradient(
        &self,
        u: &[f64],
        free: Groups,
        xs: &[&Sequence],
        labels: &[usize],
        eps: &[f64],
        n_total: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let layout = self.layout();
        let mask = layout.mask(free);
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = u
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| if m { tape.var(x) } else { <Var<'_> as Scalar>::constant(x) })
            .collect();
        let p = self.decode(&vars, free)?;
        let out = self.elbo_with(&p, xs, labels, eps, n_total)?;
        let adj = tape.gradient(out);
        let grad = vars
            .iter()
            .zip(&mask)
            .map(|(v, &m)| if m { adj.wrt(v) } else { 0.0 })
            .collect();
        Ok((out.value(), grad))
    }

    /// Class probabilities for every sequence, averaged over `n_mc` softmax
    /// samples per point. Deterministic given `seed`.
    pub fn predict(&self, xs: &[Sequence], n_mc: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n_mc == 0 {
            return Err(invalid("n_mc must be at least 1"));
        }
        let p = self.decode::<f64>(&self.encode(), Groups::NONE)?;
        let kernel = Kernel::new(p.kernel.clone())?;
        let z = self.inducing_side(&kernel, &p)?;
        let (l_zz, jitter) = cholesky_jittered(z.k_zz())?;
        let mut probs = Vec::with_capacity(xs.len());
        for (chunk, batch) in xs.chunks(PREDICT_CHUNK).enumerate() {
            let refs: Vec<&Sequence> = batch.iter().collect();
            let (k_zx, k_x) = self.data_side(&kernel, &z, &refs)?;
            let marg = svgp::marginals_factored(&l_zz, jitter, &k_zx, &k_x, &p.variational)?;
            let mut r = rng::stream(seed, Purpose::Predict, chunk as u64);
            let eps = svgp::draw_normals(&mut r, batch.len(), n_mc, self.num_classes);
            probs.extend(svgp::predict_probs(&marg, &eps));
        }
        Ok(probs)
    }

    /// Accuracy and mean nlpp on labeled sequences.
    pub fn evaluate(&self, xs: &[Sequence], n_mc: usize, seed: u64) -> Result<Metrics> {
        let labels = labels_of(xs)?;
        let probs = self.predict(xs, n_mc, seed)?;
        Ok(metrics(&probs, &labels))
    }
}

/// Accuracy and mean nlpp of predicted probabilities.
pub fn metrics(probs: &[Vec<f64>], labels: &[usize]) -> Metrics {
    let n = labels.len();
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| svgp::argmax(p) == y)
        .count();
    let nlpp: f64 = probs.iter().zip(labels).map(|(p, &y)| svgp::nlpp(p, y)).sum();
    Metrics {
        accuracy: correct as f64 / n.max(1) as f64,
        mean_nlpp: nlpp / n.max(1) as f64,
        count: n,
    }
}

pub(crate) fn labels_of(xs: &[Sequence]) -> Result<Vec<usize>> {
    xs.iter()
        .enumerate()
        .map(|(i, s)| {
            s.label()
                .ok_or_else(|| Error::InvalidInput(format!("sequence {i} has no label")))
        })
        .collect()
}

enum InducingSide<T> {
    Tensors(crate::signature::PreparedTensors<T>, Matrix<T>),
    Sequences(PreparedSequences<T>, Option<crate::signature::LevelDiag<T>>, Matrix<T>),
}

impl<T> InducingSide<T> {
    fn k_zz(&self) -> &Matrix<T> {
        match self {
            InducingSide::Tensors(_, k) | InducingSide::Sequences(_, _, k) => k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(inducing_sequences: bool) -> Model {
        let mut kernel = SigKernelParams::new(2);
        kernel.static_kernel = StaticKernelParams::Rbf {
            lengthscales: alloc::vec![1.0, 2.0],
        };
        kernel.lags = alloc::vec![0.5];
        let dim = kernel.augmented_dim(2);
        let inducing = if inducing_sequences {
            InducingSet::Sequences(alloc::vec![
                Sequence::on_grid(alloc::vec![alloc::vec![0.0, 1.0], alloc::vec![1.0, 0.5]], None)
                    .unwrap();
                3
            ])
        } else {
            let t = InducingTensor {
                z0: 1.0,
                levels: (1..=2)
                    .map(|m| (0..m).map(|k| alloc::vec![0.1 * k as f64 + 0.2; dim]).collect())
                    .collect(),
            };
            InducingSet::Tensors(alloc::vec![t; 3])
        };
        Model::new(kernel, inducing, 3, 2).unwrap()
    }

    #[test]
    fn layout_covers_encoding() {
        for seqs in [false, true] {
            let m = toy_model(seqs);
            let layout = m.layout();
            assert_eq!(layout.len(), m.encode().len());
            assert_eq!(layout.range(ParamGroup::VariationalChol).len(), 3 * 6);
            assert_eq!(layout.range(ParamGroup::Tau).len(), 1);
        }
    }

    #[test]
    fn frozen_groups_are_bit_exact() {
        let m = toy_model(false);
        let mut u = m.encode();
        for x in &mut u {
            *x += 0.25;
        }
        let out = m.with_encoded(&u, Groups::variational()).unwrap();
        assert_eq!(out.kernel, m.kernel);
        assert_ne!(out.inducing, m.inducing);
        let all = m.with_encoded(&m.encode(), Groups::all()).unwrap();
        assert!((all.kernel.beta - m.kernel.beta).abs() < 1e-12);
    }

    #[test]
    fn zero_tau_has_no_coordinate() {
        let mut m = toy_model(false);
        m.kernel.tau = 0.0;
        assert!(m.layout().range(ParamGroup::Tau).is_empty());
        let p = m.decode::<f64>(&m.encode(), Groups::all()).unwrap();
        assert_eq!(p.kernel.tau, 0.0);
    }

    #[test]
    fn round_trip_through_encoding() {
        let m = toy_model(true);
        let back = m.with_encoded(&m.encode(), Groups::all()).unwrap();
        let (a, b) = (m.encode(), back.encode());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
