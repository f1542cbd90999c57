//! Whitened sparse variational multiclass classification.
//!
//! Each class `c` has an independent latent GP sharing one covariance. The
//! variational distribution at the inducing variables is `u_c ~ N(μ_c, L_c L_cᵀ)`
//! in whitened coordinates `f_Z = chol(K_ZZ) u`, so the prior is `N(0, I)`.
//! The likelihood is a softmax over classes and its expectation under the
//! Gaussian marginals is estimated by Monte Carlo with reparametrized samples.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid};
use crate::linalg::{cholesky_jittered, solve_lower, Matrix};
use crate::rng::standard_normals;
use crate::{Error, Result, Scalar};

/// Monte-Carlo samples per point when optimizing the ELBO.
pub const TRAIN_MC_SAMPLES: usize = 32;
/// Monte-Carlo samples per point when predicting.
pub const PREDICT_MC_SAMPLES: usize = 256;
/// Marginal variances are floored here to keep `sqrt` differentiable.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Whitened variational parameters, one Gaussian per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState<T = f64> {
    /// `mean[c]`: whitened mean `μ_c` (length `n_Z`).
    pub mean: Vec<Vec<T>>,
    /// `chol[c]`: row-major `n_Z × n_Z` lower-triangular `L_c` with positive
    /// diagonal.
    pub chol: Vec<Vec<T>>,
}

impl<T: Scalar> VariationalState<T> {
    /// The prior: `μ = 0`, `L = I`.
    pub fn prior(num_inducing: usize, num_classes: usize) -> Self {
        let n = num_inducing;
        let eye: Vec<T> = (0..n * n)
            .map(|p| if p / n == p % n { T::one() } else { T::zero() })
            .collect();
        Self {
            mean: alloc::vec![alloc::vec![T::zero(); n]; num_classes],
            chol: alloc::vec![eye; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.mean.len()
    }

    pub fn num_inducing(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_inducing();
        if n == 0 || self.mean.is_empty() {
            return Err(invalid("empty variational state"));
        }
        check_dim(self.mean.len(), self.chol.len())?;
        for (mu, l) in self.mean.iter().zip(&self.chol) {
            check_dim(n, mu.len())?;
            check_dim(n * n, l.len())?;
            for i in 0..n {
                if !(l[i * n + i].value() > 0.0) {
                    return Err(invalid(format!("non-positive Cholesky diagonal at {i}")));
                }
                if (i + 1..n).any(|j| l[i * n + j].value() != 0.0) {
                    return Err(invalid("variational factor is not lower-triangular"));
                }
            }
        }
        Ok(())
    }
}

/// `KL(q(u) ‖ N(0, I))` summed over classes:
/// `Σ_c ½(‖μ_c‖² + ‖L_c‖_F² − n_Z − 2 Σ_i log L_c[i, i])`.
pub fn kl_whitened<T: Scalar>(state: &VariationalState<T>) -> Result<T> {
    let n = state.num_inducing();
    let mut terms = Vec::with_capacity(state.num_classes() * 3);
    for (mu, l) in state.mean.iter().zip(&state.chol) {
        let logdet: Vec<T> = (0..n).map(|i| l[i * n + i].ln()).collect();
        terms.push(T::dot(mu, mu) * 0.5);
        terms.push(T::dot(l, l) * 0.5);
        terms.push(-T::sum(&logdet));
    }
    let kl = T::sum(&terms) - 0.5 * (n * state.num_classes()) as f64;
    if !kl.value().is_finite() {
        return Err(Error::Numerical(format!("KL is {}", kl.value())));
    }
    Ok(kl)
}

/// Per-point, per-class Gaussian marginals of `q(f_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<T> {
    /// `mean[i][c]`.
    pub mean: Vec<Vec<T>>,
    /// `var[i][c]`.
    pub var: Vec<Vec<T>>,
    /// Diagonal jitter that was needed to factor `K_ZZ`.
    pub jitter: f64,
}

impl<T: Scalar> Marginals<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Marginals from `K_ZZ`, `K_ZX` and `diag K_X`. With `A = chol(K_ZZ)⁻¹ K_ZX`:
/// `mean_c = Aᵀ μ_c` and `var_c = k_xx − ‖A‖² + ‖L_cᵀ A‖²` column-wise.
pub fn marginals<T: Scalar>(
    k_zz: &Matrix<T>,
    k_zx: &Matrix<T>,
    k_xx: &[T],
    state: &VariationalState<T>,
) -> Result<Marginals<T>> {
    let (l_zz, jitter) = cholesky_jittered(k_zz)?;
    marginals_factored(&l_zz, jitter, k_zx, k_xx, state)
}

/// Like [`marginals`] with `chol(K_ZZ)` already computed.
pub fn marginals_factored<T: Scalar>(
    l_zz: &Matrix<T>,
    jitter: f64,
    k_zx: &Matrix<T>,
    k_xx: &[T],
    state: &VariationalState<T>,
) -> Result<Marginals<T>> {
    let n = state.num_inducing();
    check_dim(n, l_zz.rows())?;
    check_dim(k_xx.len(), k_zx.cols())?;
    let a = solve_lower(l_zz, k_zx)?;
    // column-major copy of A so each point's column is contiguous
    let at = a.transpose();
    let npts = k_zx.cols();
    let mut mean = Vec::with_capacity(npts);
    let mut var = Vec::with_capacity(npts);
    let mut lta = alloc::vec![T::zero(); n];
    for p in 0..npts {
        let col = at.row(p);
        let prior = k_xx[p] - T::dot(col, col);
        let mut mp = Vec::with_capacity(state.num_classes());
        let mut vp = Vec::with_capacity(state.num_classes());
        for (mu, l) in state.mean.iter().zip(&state.chol) {
            mp.push(T::dot(mu, col));
            // (L_cᵀ A)_j = Σ_{i >= j} L_c[i, j] A_i
            for (j, out) in lta.iter_mut().enumerate() {
                let lcol: Vec<T> = (j..n).map(|i| l[i * n + j]).collect();
                *out = T::dot(&lcol, &col[j..]);
            }
            let v = prior + T::dot(&lta, &lta);
            vp.push(if v.value() < MIN_VARIANCE {
                T::constant(MIN_VARIANCE)
            } else {
                v
            });
        }
        mean.push(mp);
        var.push(vp);
    }
    Ok(Marginals { mean, var, jitter })
}

fn log_sum_exp<T: Scalar>(f: &[T]) -> T {
    let max = f.iter().map(|x| x.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<T> = f.iter().map(|&x| (x - max).exp()).collect();
    T::sum(&e).ln() + max
}

/// Standard normal draws for `n` points: `n × n_mc × C`, row-major.
pub fn draw_normals<R: Rng>(rng: &mut R, n: usize, n_mc: usize, num_classes: usize) -> Vec<f64> {
    standard_normals(rng, n * n_mc * num_classes)
}

/// Monte-Carlo `E[log softmax(f)_label]` with `f_c = mean_c + sqrt(var_c) ε_c`,
/// given the `n_mc × C` draws `eps`.
pub fn expected_log_lik_with<T: Scalar>(mean: &[T], var: &[T], label: usize, eps: &[f64]) -> T {
    let c = mean.len();
    let n_mc = eps.len() / c;
    let sd: Vec<T> = var.iter().map(|v| v.sqrt()).collect();
    let mut f = Vec::with_capacity(c);
    let mut samples = Vec::with_capacity(n_mc);
    for s in 0..n_mc {
        f.clear();
        for k in 0..c {
            f.push(mean[k] + sd[k] * eps[s * c + k]);
        }
        samples.push(f[label] - log_sum_exp(&f));
    }
    T::sum(&samples) / n_mc as f64
}

/// [`expected_log_lik_with`] drawing `n_mc` samples from `rng`.
pub fn expected_log_lik<T: Scalar, R: Rng>(
    mean: &[T],
    var: &[T],
    label: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<T> {
    if n_mc == 0 {
        return Err(invalid("n_mc must be at least 1"));
    }
    if label >= mean.len() {
        return Err(invalid(format!("label {label} out of range")));
    }
    let eps = draw_normals(rng, 1, n_mc, mean.len());
    Ok(expected_log_lik_with(mean, var, label, &eps))
}

/// `(n_total / |batch|)·Σ_batch E[log p(y | f)] − KL` given the batch
/// marginals, labels and `|batch| × n_mc × C` standard normal draws.
pub fn elbo<T: Scalar>(
    marg: &Marginals<T>,
    labels: &[usize],
    eps: &[f64],
    n_total: usize,
    kl: T,
) -> Result<T> {
    let n = marg.len();
    check_dim(n, labels.len())?;
    if n == 0 {
        return Err(invalid("empty batch"));
    }
    let per_point = eps.len() / n;
    let ell: Vec<T> = (0..n)
        .map(|i| {
            expected_log_lik_with(
                &marg.mean[i],
                &marg.var[i],
                labels[i],
                &eps[i * per_point..(i + 1) * per_point],
            )
        })
        .collect();
    let out = T::sum(&ell) * (n_total as f64 / n as f64) - kl;
    if !out.value().is_finite() {
        return Err(Error::Numerical(format!("ELBO is {}", out.value())));
    }
    Ok(out)
}

/// Class probabilities: Monte-Carlo average of the softmax, renormalized.
pub fn predict_probs(marg: &Marginals<f64>, eps: &[f64]) -> Vec<Vec<f64>> {
    let n = marg.len();
    let per_point = eps.len().checked_div(n).unwrap_or(0);
    (0..n)
        .map(|i| {
            let (mean, var) = (&marg.mean[i], &marg.var[i]);
            let c = mean.len();
            let e = &eps[i * per_point..(i + 1) * per_point];
            let n_mc = e.len() / c;
            let mut probs = alloc::vec![0.0; c];
            let mut f = alloc::vec![0.0; c];
            for s in 0..n_mc {
                for k in 0..c {
                    f[k] = mean[k] + libm::sqrt(var[k]) * e[s * c + k];
                }
                let lse = log_sum_exp(&f);
                for k in 0..c {
                    probs[k] += libm::exp(f[k] - lse);
                }
            }
            let total: f64 = probs.iter().sum();
            probs.iter().map(|p| p / total).collect()
        })
        .collect()
}

/// `−log p(label)`, clamped away from `log 0`.
pub fn nlpp(probs: &[f64], label: usize) -> f64 {
    -libm::log(probs[label].max(f64::MIN_POSITIVE))
}

/// Index of the most probable class (first on ties).
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}
