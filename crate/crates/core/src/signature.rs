//! Truncated signature covariances between sequences and inducing tensors.
//!
//! A sequence is embedded as the piecewise-linear path through its augmented
//! (and, for RBF, kernel-lifted) observations. Its level-`m` signature is the
//! sum of `Δx_{i_1} ⊗ … ⊗ Δx_{i_m}` over strictly increasing multi-indices, so
//! every covariance is a sum over such index tuples of products of increment
//! inner products. Those sums are evaluated with exclusive cumulative sums:
//!
//! - [`Kernel::inducing_levels`]: inducing tensor vs inducing tensor, a product
//!   of factor inner products per level.
//! - [`Kernel::cross_levels`]: inducing tensor vs sequence, one exclusive
//!   cumulative sum per factor, linear in the sequence length.
//! - [`Kernel::sequence_levels`]: sequence vs sequence, a double exclusive
//!   cumulative sum per level, quadratic in the length.
//! - [`Kernel::diag_levels`]: the same restricted to `k(x, x)`.
//!
//! Each returns *unscaled* per-level blocks; [`LevelBlocks::normalize`] and
//! [`LevelBlocks::combine`] then apply the optional per-level normalization and
//! the level weights `σ_m² = (β·σ'_m)²`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::array::NdArray;
use crate::error::{check_dim, invalid};
use crate::linalg::Matrix;
use crate::sequence::{self, augmented_dim, increments, Sequence, SequenceBatch};
use crate::static_kernel::StaticKernelParams;
use crate::{Error, Result, Scalar};

/// Hyperparameters of the signature covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigKernelParams<T = f64> {
    /// Truncation depth `M >= 1`.
    pub depth: usize,
    /// Per-level scalings `σ'_0..σ'_M`.
    pub sigma_prime: Vec<T>,
    /// Global scale; the effective level scaling is `σ_m = β·σ'_m`.
    pub beta: T,
    /// Coefficient of the added time coordinate.
    pub tau: T,
    /// Lags, in the same time units as the sequences.
    pub lags: Vec<T>,
    pub static_kernel: StaticKernelParams<T>,
    /// Normalize each signature level of a sequence to unit norm.
    pub normalize_levels: bool,
}

impl SigKernelParams<f64> {
    /// Unit level scalings, `τ = 1`, no lags, linear static kernel.
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            sigma_prime: alloc::vec![1.0; depth + 1],
            beta: 1.0,
            tau: 1.0,
            lags: Vec::new(),
            static_kernel: StaticKernelParams::Linear,
            normalize_levels: false,
        }
    }

    /// Lifts every parameter to a constant of type `T`.
    pub fn lift<T: Scalar>(&self) -> SigKernelParams<T> {
        let c = |v: &[f64]| v.iter().map(|&x| T::constant(x)).collect::<Vec<T>>();
        SigKernelParams {
            depth: self.depth,
            sigma_prime: c(&self.sigma_prime),
            beta: T::constant(self.beta),
            tau: T::constant(self.tau),
            lags: c(&self.lags),
            static_kernel: match &self.static_kernel {
                StaticKernelParams::Linear => StaticKernelParams::Linear,
                StaticKernelParams::Rbf { lengthscales } => StaticKernelParams::Rbf {
                    lengthscales: c(lengthscales),
                },
            },
            normalize_levels: self.normalize_levels,
        }
    }

    /// FNV-1a hash over every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.write(self.depth as u64);
        self.sigma_prime.iter().for_each(|x| h.write(x.to_bits()));
        h.write(self.beta.to_bits());
        h.write(self.tau.to_bits());
        h.write(self.lags.len() as u64);
        self.lags.iter().for_each(|x| h.write(x.to_bits()));
        match &self.static_kernel {
            StaticKernelParams::Linear => h.write(1),
            StaticKernelParams::Rbf { lengthscales } => {
                h.write(2);
                lengthscales.iter().for_each(|x| h.write(x.to_bits()));
            }
        }
        h.write(self.normalize_levels as u64);
        h.0
    }
}

#[derive(Debug)]
struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

impl<T: Scalar> SigKernelParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(invalid("truncation depth must be at least 1"));
        }
        check_dim(self.depth + 1, self.sigma_prime.len())?;
        let positive = |x: T| x.value() > 0.0 && x.value().is_finite();
        if !self.sigma_prime.iter().all(|&s| positive(s)) || !positive(self.beta) {
            return Err(invalid("level scalings and beta must be positive and finite"));
        }
        if !(self.tau.value() >= 0.0) || !self.tau.value().is_finite() {
            return Err(invalid("tau must be finite and non-negative"));
        }
        if self.lags.iter().any(|s| !(s.value() >= 0.0) || !s.value().is_finite()) {
            return Err(invalid("lags must be finite and non-negative"));
        }
        self.static_kernel.validate()
    }

    /// Effective squared level scalings `(β·σ'_m)²`, `m = 0..=M`.
    pub fn sigma_sq(&self) -> Vec<T> {
        self.sigma_prime
            .iter()
            .map(|&s| (self.beta * s).square())
            .collect()
    }

    pub fn augmented_dim(&self, source_dim: usize) -> usize {
        augmented_dim(source_dim, self.lags.len())
    }
}

/// Inter-domain inducing point: `z = (z_0, z_1, …, z_M)` with
/// `z_m = v_{m,1} ⊗ … ⊗ v_{m,m}`.
///
/// With the linear static kernel the factors are vectors in the augmented
/// state space. With RBF each factor `a` stands for the reproducing kernel
/// `κ(a, ·)`, i.e. the factors are anchor points in the augmented state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducingTensor<T = f64> {
    pub z0: T,
    /// `levels[m - 1]` holds the `m` factors of level `m`.
    pub levels: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> InducingTensor<T> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels
            .first()
            .and_then(|l| l.first())
            .map_or(0, Vec::len)
    }

    pub fn validate(&self, depth: usize, dim: usize) -> Result<()> {
        check_dim(depth, self.depth())?;
        for (m, level) in self.levels.iter().enumerate() {
            if level.len() != m + 1 {
                return Err(invalid(format!(
                    "level {} has {} factors, expected {}",
                    m + 1,
                    level.len(),
                    m + 1
                )));
            }
            for f in level {
                check_dim(dim, f.len())?;
            }
        }
        Ok(())
    }
}

impl InducingTensor<f64> {
    pub fn lift<T: Scalar>(&self) -> InducingTensor<T> {
        InducingTensor {
            z0: T::constant(self.z0),
            levels: self
                .levels
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|f| f.iter().map(|&x| T::constant(x)).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

/// Sequences after augmentation, tabulation and the static-kernel embedding.
#[derive(Debug, Clone)]
pub struct PreparedSequences<T> {
    batch: SequenceBatch<T>,
    // row-major increments per sequence (linear static kernel only)
    increments: Vec<Vec<T>>,
}

impl<T: Scalar> PreparedSequences<T> {
    pub fn batch(&self) -> &SequenceBatch<T> {
        &self.batch
    }

    pub fn len(&self) -> usize {
        self.batch.num_sequences()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    fn num_increments(&self) -> usize {
        self.batch.len() - 1
    }
}

/// Inducing tensors with their factors passed through the static-kernel
/// embedding.
#[derive(Debug, Clone)]
pub struct PreparedTensors<T> {
    z0: Vec<T>,
    // factors[m - 1][k][i]: factor k of level m of tensor i
    factors: Vec<Vec<Vec<Vec<T>>>>,
}

impl<T: Scalar> PreparedTensors<T> {
    pub fn len(&self) -> usize {
        self.z0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.is_empty()
    }

    pub fn z0(&self) -> &[T] {
        &self.z0
    }
}

/// Unscaled per-level blocks of a covariance computation.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBlocks<T> {
    /// Level-0 entries: `z0_i·z0_j`, `z0_i` or `1` depending on the pair kind.
    pub level0: Matrix<T>,
    /// `levels[m - 1]`: level-`m` inner products.
    pub levels: Vec<Matrix<T>>,
}

/// Per-level self inner products `k_m(x, x)` of a set of sequences:
/// `diag[m - 1][i]`.
pub type LevelDiag<T> = Vec<Vec<T>>;

impl<T: Scalar> LevelBlocks<T> {
    /// Divides every level-`m` entry by the level-`m` norms of the row and/or
    /// column sequences. Rows or columns given as `None` (inducing tensors) are
    /// left unnormalized.
    pub fn normalize(
        mut self,
        rows: Option<&LevelDiag<T>>,
        cols: Option<&LevelDiag<T>>,
    ) -> Self {
        let row_norms = rows.map(|d| level_norms(d));
        let col_norms = cols.map(|d| level_norms(d));
        for (m, block) in self.levels.iter_mut().enumerate() {
            let (nr, nc) = (block.rows(), block.cols());
            for i in 0..nr {
                for j in 0..nc {
                    let mut v = block[(i, j)];
                    if let Some(r) = &row_norms {
                        v = v / r[m][i];
                    }
                    if let Some(c) = &col_norms {
                        v = v / c[m][j];
                    }
                    block[(i, j)] = v;
                }
            }
        }
        self
    }

    /// `σ_0²·level0 + Σ_m σ_m²·level_m`.
    pub fn combine(&self, sigma_sq: &[T]) -> Matrix<T> {
        let (nr, nc) = (self.level0.rows(), self.level0.cols());
        let mut terms = Vec::with_capacity(self.levels.len() + 1);
        Matrix::from_fn(nr, nc, |i, j| {
            terms.clear();
            terms.push(self.level0[(i, j)] * sigma_sq[0]);
            for (m, block) in self.levels.iter().enumerate() {
                terms.push(block[(i, j)] * sigma_sq[m + 1]);
            }
            T::sum(&terms)
        })
    }
}

/// `sqrt(k_m(x, x))`, or 1 where the level has zero norm (unnormalized
/// fallback).
fn level_norms<T: Scalar>(diag: &LevelDiag<T>) -> Vec<Vec<T>> {
    let mut fallbacks = 0usize;
    let out = diag
        .iter()
        .map(|level| {
            level
                .iter()
                .map(|&v| {
                    if v.value() > 0.0 && v.value().is_finite() {
                        v.sqrt()
                    } else {
                        fallbacks += 1;
                        T::one()
                    }
                })
                .collect()
        })
        .collect();
    if fallbacks > 0 {
        log::warn!("{fallbacks} signature level(s) with zero norm left unnormalized");
    }
    out
}

/// Normalized (if requested) and σ-combined diagonal `k(x, x)`.
fn combine_diag<T: Scalar>(diag: &LevelDiag<T>, sigma_sq: &[T], normalize: bool) -> Vec<T> {
    let n = diag.first().map_or(0, Vec::len);
    let norms = normalize.then(|| level_norms(diag));
    let mut terms = Vec::with_capacity(diag.len() + 1);
    (0..n)
        .map(|i| {
            terms.clear();
            terms.push(sigma_sq[0]);
            for (m, level) in diag.iter().enumerate() {
                let mut v = level[i];
                if let Some(norms) = &norms {
                    v = v / norms[m][i] / norms[m][i];
                }
                terms.push(v * sigma_sq[m + 1]);
            }
            T::sum(&terms)
        })
        .collect()
}

/// Signature covariance evaluator for one parameter setting.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    params: SigKernelParams<T>,
    sigma_sq: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(params: SigKernelParams<T>) -> Result<Self> {
        params.validate()?;
        let sigma_sq = params.sigma_sq();
        Ok(Self { params, sigma_sq })
    }

    pub fn params(&self) -> &SigKernelParams<T> {
        &self.params
    }

    pub fn sigma_sq(&self) -> &[T] {
        &self.sigma_sq
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    /// Augments, tabulates and embeds data sequences.
    pub fn prepare(&self, seqs: &[Sequence]) -> Result<PreparedSequences<T>> {
        let lifted: Vec<Vec<T>> = seqs
            .iter()
            .map(|s| s.values().iter().map(|&v| T::constant(v)).collect())
            .collect();
        let raw: Vec<(&[f64], &[T])> = seqs
            .iter()
            .zip(&lifted)
            .map(|(s, v)| (s.times(), v.as_slice()))
            .collect();
        let dim = seqs.first().map_or(0, Sequence::dim);
        self.prepare_raw(&raw, dim)
    }

    /// Like [`Self::prepare`] for sequences with `T`-valued observations,
    /// given as `(times, row-major values)`.
    pub fn prepare_raw(
        &self,
        seqs: &[(&[f64], &[T])],
        source_dim: usize,
    ) -> Result<PreparedSequences<T>> {
        if seqs.is_empty() {
            return Err(invalid("no sequences to prepare"));
        }
        let aug = seqs
            .iter()
            .map(|(t, v)| sequence::augment_values(t, v, source_dim, self.params.tau, &self.params.lags))
            .collect::<Result<Vec<_>>>()?;
        let batch = sequence::tabulate(&aug)?;
        let aug_dim = batch.dim();
        let n = batch.num_sequences();
        let len = batch.len();
        let mut points = Vec::with_capacity(n * len * aug_dim);
        for s in 0..n {
            points.extend(self.params.static_kernel.embed(batch.sequence(s), aug_dim, source_dim)?);
        }
        let lengths: Vec<usize> = (0..n).map(|s| batch.effective_len(s)).collect();
        let batch = SequenceBatch::from_parts(points, lengths, len, aug_dim);
        let increments = if self.params.static_kernel.is_linear() {
            (0..n).map(|s| increments(batch.sequence(s), aug_dim)).collect()
        } else {
            Vec::new()
        };
        Ok(PreparedSequences { batch, increments })
    }

    /// Embeds inducing-tensor factors.
    pub fn prepare_tensors(
        &self,
        tensors: &[InducingTensor<T>],
        source_dim: usize,
    ) -> Result<PreparedTensors<T>> {
        if tensors.is_empty() {
            return Err(invalid("no inducing tensors"));
        }
        let depth = self.params.depth;
        let dim = self.params.augmented_dim(source_dim);
        let mut factors: Vec<Vec<Vec<Vec<T>>>> = (1..=depth)
            .map(|m| (0..m).map(|_| Vec::with_capacity(tensors.len())).collect())
            .collect();
        for z in tensors {
            z.validate(depth, dim)?;
            for (m, level) in z.levels.iter().enumerate() {
                for (k, f) in level.iter().enumerate() {
                    factors[m][k].push(self.params.static_kernel.embed(f, dim, source_dim)?);
                }
            }
        }
        Ok(PreparedTensors {
            z0: tensors.iter().map(|z| z.z0).collect(),
            factors,
        })
    }

    fn kappa(&self, x: &[T], y: &[T]) -> T {
        self.params.static_kernel.eval_embedded(x, y)
    }

    /// `⟨v, Δx_i⟩` for every increment of sequence `s` (for RBF:
    /// `κ(v, x_{i+1}) - κ(v, x_i)`).
    fn factor_increment_products(&self, v: &[T], x: &PreparedSequences<T>, s: usize) -> Vec<T> {
        let d = x.batch.dim();
        let n_inc = x.num_increments();
        if self.params.static_kernel.is_linear() {
            let inc = &x.increments[s];
            (0..n_inc).map(|i| T::dot(v, &inc[i * d..(i + 1) * d])).collect()
        } else {
            let pts = x.batch.sequence(s);
            let k: Vec<T> = (0..=n_inc)
                .map(|i| self.kappa(v, &pts[i * d..(i + 1) * d]))
                .collect();
            (0..n_inc).map(|i| k[i + 1] - k[i]).collect()
        }
    }

    /// `⟨Δx_a, Δy_b⟩` for all increment pairs of `x[s]` and `y[r]`, row-major
    /// `(l_x - 1) × (l_y - 1)`.
    fn increment_gram(
        &self,
        x: &PreparedSequences<T>,
        s: usize,
        y: &PreparedSequences<T>,
        r: usize,
    ) -> Vec<T> {
        let d = x.batch.dim();
        let (nx, ny) = (x.num_increments(), y.num_increments());
        let mut out = Vec::with_capacity(nx * ny);
        if self.params.static_kernel.is_linear() {
            let (ix, iy) = (&x.increments[s], &y.increments[r]);
            for a in 0..nx {
                for b in 0..ny {
                    out.push(T::dot(&ix[a * d..(a + 1) * d], &iy[b * d..(b + 1) * d]));
                }
            }
        } else {
            let (px, py) = (x.batch.sequence(s), y.batch.sequence(r));
            let g: Vec<T> = (0..=nx)
                .flat_map(|a| {
                    (0..=ny).map(move |b| (a, b))
                })
                .map(|(a, b)| self.kappa(&px[a * d..(a + 1) * d], &py[b * d..(b + 1) * d]))
                .collect();
            let w = ny + 1;
            for a in 0..nx {
                for b in 0..ny {
                    out.push(
                        g[(a + 1) * w + b + 1] - g[a * w + b + 1] - g[(a + 1) * w + b]
                            + g[a * w + b],
                    );
                }
            }
        }
        out
    }

    /// Inducing tensors vs inducing tensors: `Π_k ⟨v^i_{m,k}, v^j_{m,k}⟩` per level.
    pub fn inducing_levels(&self, z: &PreparedTensors<T>) -> Result<LevelBlocks<T>> {
        let n = z.len();
        let level0 = Matrix::from_fn(n, n, |i, j| z.z0[i] * z.z0[j]);
        let mut levels = Vec::with_capacity(self.depth());
        for level in &z.factors {
            let products: Vec<NdArray<T>> = level
                .iter()
                .map(|fk| NdArray::from_fn(alloc::vec![n, n], |p| self.kappa(&fk[p / n], &fk[p % n])))
                .collect();
            let mut a = products[0].clone();
            for k in products.iter().skip(1) {
                a = k.hadamard(&a)?;
            }
            levels.push(Matrix::from_vec(n, n, a.into_data())?);
        }
        Ok(LevelBlocks { level0, levels })
    }

    /// Inducing tensors vs sequences: per level,
    /// `Σ_{i_1 < … < i_m} Π_k ⟨v_{m,k}, Δx_{i_k}⟩`.
    pub fn cross_levels(
        &self,
        z: &PreparedTensors<T>,
        x: &PreparedSequences<T>,
    ) -> Result<LevelBlocks<T>> {
        let (nz, nx, ni) = (z.len(), x.len(), x.num_increments());
        let level0 = Matrix::from_fn(nz, nx, |i, _| z.z0[i]);
        let mut levels = Vec::with_capacity(self.depth());
        for level in &z.factors {
            let mut a: Option<NdArray<T>> = None;
            for fk in level {
                let mut data = Vec::with_capacity(nz * nx * ni);
                for v in fk {
                    for s in 0..nx {
                        data.extend(self.factor_increment_products(v, x, s));
                    }
                }
                let k = NdArray::new(alloc::vec![nz, nx, ni], data)?;
                a = Some(match a {
                    None => k,
                    Some(prev) => k.hadamard(&prev.exclusive_cumsum(2)?)?,
                });
            }
            let a = a.ok_or_else(|| invalid("empty signature level"))?;
            levels.push(Matrix::from_vec(nz, nx, a.slicesum(2)?.into_data())?);
        }
        Ok(LevelBlocks { level0, levels })
    }

    /// Sequences vs sequences: per level,
    /// `Σ_{i_1<…<i_m} Σ_{j_1<…<j_m} Π_l ⟨Δx_{i_l}, Δy_{j_l}⟩`.
    pub fn sequence_levels(
        &self,
        x: &PreparedSequences<T>,
        y: &PreparedSequences<T>,
    ) -> Result<LevelBlocks<T>> {
        check_dim(x.batch.dim(), y.batch.dim())?;
        let (nx, ny) = (x.len(), y.len());
        let (lx, ly) = (x.num_increments(), y.num_increments());
        let mut data = Vec::with_capacity(nx * ny * lx * ly);
        for s in 0..nx {
            for r in 0..ny {
                data.extend(self.increment_gram(x, s, y, r));
            }
        }
        let k = NdArray::new(alloc::vec![nx, ny, lx, ly], data)?;
        let level0 = Matrix::from_fn(nx, ny, |_, _| T::one());
        let collapse = |a: &NdArray<T>| -> Result<Matrix<T>> {
            Matrix::from_vec(nx, ny, a.slicesum(3)?.slicesum(2)?.into_data())
        };
        let mut levels = Vec::with_capacity(self.depth());
        levels.push(collapse(&k)?);
        let mut a = k.clone();
        for _ in 2..=self.depth() {
            a = k.hadamard(&a.exclusive_cumsum(2)?.exclusive_cumsum(3)?)?;
            levels.push(collapse(&a)?);
        }
        Ok(LevelBlocks { level0, levels })
    }

    /// Per-level `k_m(x, x)`, linear in the number of sequences.
    pub fn diag_levels(&self, x: &PreparedSequences<T>) -> Result<LevelDiag<T>> {
        let (n, l) = (x.len(), x.num_increments());
        let mut data = Vec::with_capacity(n * l * l);
        for s in 0..n {
            data.extend(self.increment_gram(x, s, x, s));
        }
        let k = NdArray::new(alloc::vec![n, l, l], data)?;
        let collapse = |a: &NdArray<T>| -> Result<Vec<T>> {
            Ok(a.slicesum(2)?.slicesum(1)?.into_data())
        };
        let mut levels = Vec::with_capacity(self.depth());
        levels.push(collapse(&k)?);
        let mut a = k.clone();
        for _ in 2..=self.depth() {
            a = k.hadamard(&a.exclusive_cumsum(1)?.exclusive_cumsum(2)?)?;
            levels.push(collapse(&a)?);
        }
        Ok(levels)
    }

    /// `K_ZZ`.
    pub fn k_zz(&self, z: &PreparedTensors<T>) -> Result<Matrix<T>> {
        Ok(self.inducing_levels(z)?.combine(&self.sigma_sq))
    }

    /// `K_ZX`. `x_diag` must be `diag_levels(x)` when levels are normalized.
    pub fn k_zx(
        &self,
        z: &PreparedTensors<T>,
        x: &PreparedSequences<T>,
        x_diag: Option<&LevelDiag<T>>,
    ) -> Result<Matrix<T>> {
        let blocks = self.cross_levels(z, x)?;
        let blocks = if self.params.normalize_levels {
            let diag = x_diag.ok_or_else(|| invalid("normalization needs sequence level norms"))?;
            blocks.normalize(None, Some(diag))
        } else {
            blocks
        };
        Ok(blocks.combine(&self.sigma_sq))
    }

    /// `K_XY` between two prepared batches.
    pub fn k_xy(
        &self,
        x: &PreparedSequences<T>,
        x_diag: Option<&LevelDiag<T>>,
        y: &PreparedSequences<T>,
        y_diag: Option<&LevelDiag<T>>,
    ) -> Result<Matrix<T>> {
        let blocks = self.sequence_levels(x, y)?;
        let blocks = if self.params.normalize_levels {
            let missing = || invalid("normalization needs sequence level norms");
            blocks.normalize(Some(x_diag.ok_or_else(missing)?), Some(y_diag.ok_or_else(missing)?))
        } else {
            blocks
        };
        Ok(blocks.combine(&self.sigma_sq))
    }

    /// `diag K_X` from precomputed level diagonals.
    pub fn k_x(&self, x_diag: &LevelDiag<T>) -> Vec<T> {
        combine_diag(x_diag, &self.sigma_sq, self.params.normalize_levels)
    }
}

/// Dense covariance block with row/column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub values: Vec<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    /// [`SigKernelParams::fingerprint`] of the parameters used.
    pub params_hash: u64,
}

impl GramBlock {
    fn from_matrix(m: Matrix<f64>, row_ids: Vec<String>, col_ids: Vec<String>, hash: u64) -> Self {
        GramBlock {
            rows: m.rows(),
            cols: m.cols(),
            values: m.into_data(),
            row_ids,
            col_ids,
            params_hash: hash,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..i).all(|j| {
                    let (a, b) = (self.get(i, j), self.get(j, i));
                    (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
                })
            })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_matrix(&self) -> Matrix<f64> {
        Matrix::from_vec(self.rows, self.cols, self.values.clone()).expect("consistent block")
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn source_dim_of(seqs: &[Sequence]) -> Result<usize> {
    let d = seqs
        .first()
        .ok_or_else(|| invalid("no sequences given"))?
        .dim();
    for s in seqs {
        check_dim(d, s.dim())?;
    }
    Ok(d)
}

/// `K_ZZ` for inducing tensors over a `source_dim`-dimensional state space.
pub fn cov_inducing(
    z: &[InducingTensor],
    source_dim: usize,
    params: &SigKernelParams,
) -> Result<GramBlock> {
    let kernel = Kernel::new(params.clone())?;
    let pz = kernel.prepare_tensors(z, source_dim)?;
    Ok(GramBlock::from_matrix(
        kernel.k_zz(&pz)?,
        ids("z", z.len()),
        ids("z", z.len()),
        params.fingerprint(),
    ))
}

/// `K_ZX` between inducing tensors and sequences.
pub fn cov_cross(
    z: &[InducingTensor],
    x: &[Sequence],
    params: &SigKernelParams,
) -> Result<GramBlock> {
    let d = source_dim_of(x)?;
    let kernel = Kernel::new(params.clone())?;
    let pz = kernel.prepare_tensors(z, d)?;
    let px = kernel.prepare(x)?;
    let diag = if params.normalize_levels {
        Some(kernel.diag_levels(&px)?)
    } else {
        None
    };
    Ok(GramBlock::from_matrix(
        kernel.k_zx(&pz, &px, diag.as_ref())?,
        ids("z", z.len()),
        ids("x", x.len()),
        params.fingerprint(),
    ))
}

/// `K_XY` between two lists of sequences.
pub fn cov_sequences(x: &[Sequence], y: &[Sequence], params: &SigKernelParams) -> Result<GramBlock> {
    let d = source_dim_of(x)?;
    if source_dim_of(y)? != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: y[0].dim(),
        });
    }
    let kernel = Kernel::new(params.clone())?;
    let px = kernel.prepare(x)?;
    let py = kernel.prepare(y)?;
    let (dx, dy) = if params.normalize_levels {
        (Some(kernel.diag_levels(&px)?), Some(kernel.diag_levels(&py)?))
    } else {
        (None, None)
    };
    Ok(GramBlock::from_matrix(
        kernel.k_xy(&px, dx.as_ref(), &py, dy.as_ref())?,
        ids("x", x.len()),
        ids("y", y.len()),
        params.fingerprint(),
    ))
}

/// `diag K_X`, `k(x, x)` for every sequence.
pub fn var_sequences(x: &[Sequence], params: &SigKernelParams) -> Result<Vec<f64>> {
    source_dim_of(x)?;
    let kernel = Kernel::new(params.clone())?;
    let px = kernel.prepare(x)?;
    Ok(kernel.k_x(&kernel.diag_levels(&px)?))
}
