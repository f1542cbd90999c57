//! Brute-force reference for the signature covariances.
//!
//! With the linear static kernel, signatures are materialized as dense
//! `D^m`-entry tensors by enumerating strictly increasing multi-indices, and
//! inducing tensors are expanded into their full outer products; covariances
//! are then plain element-wise inner products. With a kernelized static kernel
//! the feature space cannot be materialized, so the iterated sums are
//! enumerated directly with kernel double differences.
//!
//! Everything here is exponential in the depth and is guarded accordingly.
//! It exists to check the fast recursions in [`crate::signature`].

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid};
use crate::sequence::{augment, source_coordinate, AugmentedSequence, Sequence};
use crate::signature::{InducingTensor, SigKernelParams};
use crate::static_kernel::{kappa, StaticKernelParams};
use crate::{Error, Result};

pub const MAX_DEPTH: usize = 5;
pub const MAX_DIM: usize = 5;
pub const MAX_LEN: usize = 12;

fn guard(depth: usize, dim: Option<usize>, len: usize) -> Result<()> {
    if depth > MAX_DEPTH || dim.is_some_and(|d| d > MAX_DIM) || len > MAX_LEN {
        return Err(Error::OracleScaleExceeded(format!(
            "depth {depth}, dim {dim:?}, length {len} exceed ({MAX_DEPTH}, {MAX_DIM}, {MAX_LEN})"
        )));
    }
    Ok(())
}

/// Truncated signature levels `0..=M` as dense row-major tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSignature {
    pub dim: usize,
    /// `levels[m]` has `dim^m` entries; `levels[0]` is the scalar level.
    pub levels: Vec<Vec<f64>>,
}

impl DenseSignature {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

fn outer(a: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * v.len());
    for &x in a {
        for &y in v {
            out.push(x * y);
        }
    }
    out
}

/// `level m = Σ_{i_1<…<i_m} Δx_{i_1} ⊗ … ⊗ Δx_{i_m}` for `m <= depth`.
pub fn brute_signature(aug: &AugmentedSequence<f64>, depth: usize) -> Result<DenseSignature> {
    let dim = aug.dim();
    guard(depth, Some(dim), aug.len())?;
    let inc = aug.increments();
    let n = inc.len() / dim;
    let mut levels: Vec<Vec<f64>> = (0..=depth)
        .map(|m| alloc::vec![0.0; dim.pow(m as u32)])
        .collect();
    levels[0][0] = 1.0;

    // extend every increasing prefix ending before `start`
    fn walk(
        start: usize,
        prefix: &[f64],
        m: usize,
        depth: usize,
        inc: &[f64],
        dim: usize,
        n: usize,
        levels: &mut [Vec<f64>],
    ) {
        for i in start..n {
            let t = outer(prefix, &inc[i * dim..(i + 1) * dim]);
            for (acc, x) in levels[m].iter_mut().zip(&t) {
                *acc += x;
            }
            if m < depth {
                walk(i + 1, &t, m + 1, depth, inc, dim, n, levels);
            }
        }
    }
    if depth > 0 {
        walk(0, &[1.0], 1, depth, &inc, dim, n, &mut levels);
    }
    Ok(DenseSignature { dim, levels })
}

/// Expands an inducing tensor (linear static kernel) into dense levels with
/// `levels[0] = z0`.
pub fn materialize(z: &InducingTensor) -> Result<DenseSignature> {
    let dim = z.dim();
    guard(z.depth(), Some(dim), 0)?;
    let mut levels = alloc::vec![alloc::vec![z.z0]];
    for level in &z.levels {
        let mut t = alloc::vec![1.0];
        for f in level {
            t = outer(&t, f);
        }
        levels.push(t);
    }
    Ok(DenseSignature { dim, levels })
}

/// Unscaled per-level inner products `⟨a_m, b_m⟩`, `m = 0..=M`.
pub fn level_products(a: &DenseSignature, b: &DenseSignature) -> Result<Vec<f64>> {
    check_dim(a.dim, b.dim)?;
    check_dim(a.depth(), b.depth())?;
    Ok(a.levels
        .iter()
        .zip(&b.levels)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect())
}

/// `Σ_m σ_m² ⟨a_m, b_m⟩`.
pub fn brute_cov(a: &DenseSignature, b: &DenseSignature, sigma_sq: &[f64]) -> Result<f64> {
    let lp = level_products(a, b)?;
    check_dim(lp.len(), sigma_sq.len())?;
    Ok(lp.iter().zip(sigma_sq).map(|(p, s)| p * s).sum())
}

/// Calls `f` on every strictly increasing `m`-tuple drawn from `0..n`.
pub fn for_each_increasing(n: usize, m: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, m: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if buf.len() == m {
            f(buf);
            return;
        }
        for i in start..n {
            buf.push(i);
            rec(i + 1, n, m, buf, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(m);
    rec(0, n, m, &mut buf, f);
}

/// The point-level kernel the oracle uses: `static_kernel::kappa` with the
/// lengthscales expanded over augmented coordinates.
struct PointKernel {
    params: StaticKernelParams,
}

impl PointKernel {
    fn new(params: &StaticKernelParams, aug_dim: usize, source_dim: usize) -> Self {
        let params = match params {
            StaticKernelParams::Linear => StaticKernelParams::Linear,
            StaticKernelParams::Rbf { lengthscales } => StaticKernelParams::Rbf {
                lengthscales: (0..aug_dim)
                    .map(|c| source_coordinate(c, source_dim).map_or(1.0, |j| lengthscales[j]))
                    .collect(),
            },
        };
        Self { params }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        kappa(x, y, &self.params).expect("oracle dimensions checked")
    }
}

/// Kernelized level values of sequence `x` against sequence `y` by explicit
/// enumeration of index-tuple pairs.
fn enumerate_sequence_levels(
    x: &AugmentedSequence<f64>,
    y: &AugmentedSequence<f64>,
    depth: usize,
    k: &PointKernel,
) -> Vec<f64> {
    let (nx, ny) = (x.len() - 1, y.len() - 1);
    let mut dd = alloc::vec![0.0; nx * ny];
    for a in 0..nx {
        for b in 0..ny {
            dd[a * ny + b] = k.eval(x.point(a + 1), y.point(b + 1))
                - k.eval(x.point(a), y.point(b + 1))
                - k.eval(x.point(a + 1), y.point(b))
                + k.eval(x.point(a), y.point(b));
        }
    }
    let mut out = alloc::vec![1.0];
    for m in 1..=depth {
        let mut xs: Vec<Vec<usize>> = Vec::new();
        for_each_increasing(nx, m, &mut |t| xs.push(t.to_vec()));
        let mut total = 0.0;
        for_each_increasing(ny, m, &mut |js| {
            for is in &xs {
                total += is
                    .iter()
                    .zip(js)
                    .map(|(&a, &b)| dd[a * ny + b])
                    .product::<f64>();
            }
        });
        out.push(total);
    }
    out
}

fn enumerate_cross_levels(z: &InducingTensor, x: &AugmentedSequence<f64>, k: &PointKernel) -> Vec<f64> {
    let n = x.len() - 1;
    let mut out = alloc::vec![z.z0];
    for level in &z.levels {
        let m = level.len();
        // ⟨κ(a_k, ·), Δx_i⟩ for every factor k and increment i
        let inc: Vec<Vec<f64>> = level
            .iter()
            .map(|a| {
                (0..n)
                    .map(|i| k.eval(a, x.point(i + 1)) - k.eval(a, x.point(i)))
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        for_each_increasing(n, m, &mut |is| {
            total += is
                .iter()
                .enumerate()
                .map(|(kk, &i)| inc[kk][i])
                .product::<f64>();
        });
        out.push(total);
    }
    out
}

fn enumerate_inducing_levels(a: &InducingTensor, b: &InducingTensor, k: &PointKernel) -> Vec<f64> {
    let mut out = alloc::vec![a.z0 * b.z0];
    for (la, lb) in a.levels.iter().zip(&b.levels) {
        out.push(la.iter().zip(lb).map(|(u, v)| k.eval(u, v)).product());
    }
    out
}

/// Unscaled level values for one pair of sequences, routed through dense
/// signatures (linear kernel) or enumeration (kernelized).
fn sequence_pair_levels(
    x: &AugmentedSequence<f64>,
    y: &AugmentedSequence<f64>,
    params: &SigKernelParams,
    k: &PointKernel,
) -> Result<Vec<f64>> {
    if params.static_kernel.is_linear() {
        let sx = brute_signature(x, params.depth)?;
        let sy = brute_signature(y, params.depth)?;
        level_products(&sx, &sy)
    } else {
        guard(params.depth, None, x.len().max(y.len()))?;
        Ok(enumerate_sequence_levels(x, y, params.depth, k))
    }
}

fn augment_all(seqs: &[Sequence], params: &SigKernelParams) -> Result<Vec<AugmentedSequence<f64>>> {
    seqs.iter()
        .map(|s| augment(s, params.tau, &params.lags))
        .collect()
}

fn sigma_sq(params: &SigKernelParams) -> Vec<f64> {
    params
        .sigma_prime
        .iter()
        .map(|s| (params.beta * s) * (params.beta * s))
        .collect()
}

fn norms(levels: &[f64], normalize: bool) -> Vec<f64> {
    levels
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            if !normalize || m == 0 || !(v > 0.0) {
                1.0
            } else {
                libm::sqrt(v)
            }
        })
        .collect()
}

fn source_dim(seqs: &[Sequence]) -> Result<usize> {
    let d = seqs.first().ok_or_else(|| invalid("no sequences"))?.dim();
    for s in seqs {
        check_dim(d, s.dim())?;
    }
    Ok(d)
}

/// Reference `K_XY`, row-major.
pub fn oracle_cov_sequences(x: &[Sequence], y: &[Sequence], params: &SigKernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let d = source_dim(x)?;
    check_dim(d, source_dim(y)?)?;
    let (ax, ay) = (augment_all(x, params)?, augment_all(y, params)?);
    let k = PointKernel::new(&params.static_kernel, params.augmented_dim(d), d);
    let s2 = sigma_sq(params);
    let self_levels = |a: &AugmentedSequence<f64>| sequence_pair_levels(a, a, params, &k);
    let nx: Vec<Vec<f64>> = ax
        .iter()
        .map(|a| Ok(norms(&self_levels(a)?, params.normalize_levels)))
        .collect::<Result<_>>()?;
    let ny: Vec<Vec<f64>> = ay
        .iter()
        .map(|a| Ok(norms(&self_levels(a)?, params.normalize_levels)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(x.len() * y.len());
    for (i, a) in ax.iter().enumerate() {
        for (j, b) in ay.iter().enumerate() {
            let lv = sequence_pair_levels(a, b, params, &k)?;
            out.push(
                lv.iter()
                    .enumerate()
                    .map(|(m, v)| s2[m] * v / (nx[i][m] * ny[j][m]))
                    .sum(),
            );
        }
    }
    Ok(out)
}

/// Reference `k(x, x)` for every sequence.
pub fn oracle_var_sequences(x: &[Sequence], params: &SigKernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let d = source_dim(x)?;
    let k = PointKernel::new(&params.static_kernel, params.augmented_dim(d), d);
    let s2 = sigma_sq(params);
    augment_all(x, params)?
        .iter()
        .map(|a| {
            let lv = sequence_pair_levels(a, a, params, &k)?;
            let n = norms(&lv, params.normalize_levels);
            Ok(lv.iter().enumerate().map(|(m, v)| s2[m] * v / (n[m] * n[m])).sum())
        })
        .collect()
}

/// Reference `K_ZX`, row-major `n_Z × n_X`.
pub fn oracle_cov_cross(z: &[InducingTensor], x: &[Sequence], params: &SigKernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let d = source_dim(x)?;
    let dim = params.augmented_dim(d);
    let k = PointKernel::new(&params.static_kernel, dim, d);
    let s2 = sigma_sq(params);
    let ax = augment_all(x, params)?;
    let mut nx = Vec::with_capacity(ax.len());
    let mut sigs = Vec::new();
    for a in &ax {
        let lv = sequence_pair_levels(a, a, params, &k)?;
        nx.push(norms(&lv, params.normalize_levels));
        if params.static_kernel.is_linear() {
            sigs.push(brute_signature(a, params.depth)?);
        } else {
            guard(params.depth, None, a.len())?;
        }
    }
    let mut out = Vec::with_capacity(z.len() * x.len());
    for zi in z {
        zi.validate(params.depth, dim)?;
        let dense = if params.static_kernel.is_linear() {
            Some(materialize(zi)?)
        } else {
            None
        };
        for (j, a) in ax.iter().enumerate() {
            let lv = match &dense {
                Some(t) => level_products(t, &sigs[j])?,
                None => enumerate_cross_levels(zi, a, &k),
            };
            out.push(
                lv.iter()
                    .enumerate()
                    .map(|(m, v)| s2[m] * v / nx[j][m])
                    .sum(),
            );
        }
    }
    Ok(out)
}

/// Reference `K_ZZ`, row-major.
pub fn oracle_cov_inducing(z: &[InducingTensor], source_dim: usize, params: &SigKernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let dim = params.augmented_dim(source_dim);
    let k = PointKernel::new(&params.static_kernel, dim, source_dim);
    let s2 = sigma_sq(params);
    let mut out = Vec::with_capacity(z.len() * z.len());
    for a in z {
        a.validate(params.depth, dim)?;
        for b in z {
            let lv = if params.static_kernel.is_linear() {
                level_products(&materialize(a)?, &materialize(b)?)?
            } else {
                enumerate_inducing_levels(a, b, &k)
            };
            out.push(lv.iter().zip(&s2).map(|(v, s)| v * s).sum());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn aug(points: &[f64], dim: usize) -> AugmentedSequence<f64> {
        AugmentedSequence::from_points(points.to_vec(), dim).unwrap()
    }

    #[test]
    fn single_increment() {
        let s = brute_signature(&aug(&[0.0, 0.0, 1.0, 0.0], 2), 2).unwrap();
        assert_eq!(s.levels[1], vec![1.0, 0.0]);
        assert!(s.levels[2].iter().all(|&x| x == 0.0));
        let c = brute_cov(&s, &s, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c, 2.0);
    }

    #[test]
    fn two_orthogonal_increments() {
        let s = brute_signature(&aug(&[0.0, 0.0, 1.0, 0.0, 1.0, 1.0], 2), 2).unwrap();
        // e1 ⊗ e2 only
        assert_eq!(s.levels[2], vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_line_levels_are_binomial() {
        let (v, n) = ([0.6, -1.2], 4usize);
        let pts: Vec<f64> = (0..=n)
            .flat_map(|i| [v[0] * i as f64 / n as f64, v[1] * i as f64 / n as f64])
            .collect();
        let s = brute_signature(&aug(&pts, 2), 4).unwrap();
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for m in 1..=4 {
            let mut expect = vec![1.0];
            for _ in 0..m {
                expect = outer(&expect, &[v[0] / n as f64, v[1] / n as f64]);
            }
            for (g, e) in s.levels[m].iter().zip(&expect) {
                assert!((g - binom[m] * e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_levels_give_level_zero_only() {
        let s = brute_signature(&aug(&[1.0, 1.0], 1), 3).unwrap();
        assert_eq!(brute_cov(&s, &s, &[2.0, 5.0, 5.0, 5.0]).unwrap(), 2.0);
    }

    #[test]
    fn appending_zero_increment_changes_nothing() {
        let a = brute_signature(&aug(&[0.0, 1.0, 3.0, -2.0], 1), 3).unwrap();
        let b = brute_signature(&aug(&[0.0, 1.0, 3.0, -2.0, -2.0], 1), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn guards() {
        let long: Vec<f64> = (0..13).map(|i| i as f64).collect();
        assert!(matches!(
            brute_signature(&aug(&long, 1), 2),
            Err(Error::OracleScaleExceeded(_))
        ));
        assert!(brute_signature(&aug(&[0.0; 12], 6), 2).is_err());
        assert!(brute_signature(&aug(&[0.0, 1.0], 1), 6).is_err());
    }

    #[test]
    fn increasing_tuples_count() {
        let mut c = 0;
        for_each_increasing(6, 3, &mut |t| {
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            c += 1;
        });
        assert_eq!(c, 20);
        let mut empty = 0;
        for_each_increasing(2, 3, &mut |_| empty += 1);
        assert_eq!(empty, 0);
    }
}
