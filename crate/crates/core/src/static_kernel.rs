//! State-space kernels `κ: R^d × R^d → R` that lift each observation into an
//! RKHS before signatures are taken.
//!
//! Signature computations only need inner products of increments, so a
//! kernelized path `x_i ↦ κ(x_i, ·)` is handled by replacing `⟨Δx_i, Δy_j⟩`
//! with the double difference of `κ`.

use alloc::vec::Vec;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid};
use crate::rng::{self, Purpose};
use crate::sequence::source_coordinate;
use crate::{Result, Scalar};

/// Kernel family and its parameters. Lengthscales are per original state
/// dimension; lagged copies of a coordinate reuse its lengthscale and the
/// time coordinate is never rescaled (its scale is `τ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StaticKernelParams<T = f64> {
    Linear,
    Rbf { lengthscales: Vec<T> },
}

impl<T: Scalar> StaticKernelParams<T> {
    pub fn is_linear(&self) -> bool {
        matches!(self, StaticKernelParams::Linear)
    }

    pub fn validate(&self) -> Result<()> {
        if let StaticKernelParams::Rbf { lengthscales } = self {
            if lengthscales.is_empty() {
                return Err(invalid("rbf kernel needs at least one lengthscale"));
            }
            if lengthscales
                .iter()
                .any(|l| !(l.value() > 0.0) || !l.value().is_finite())
            {
                return Err(invalid("lengthscales must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Rescales augmented points so that the kernel acts on them without
    /// further parameters: identity for the linear kernel, division by the
    /// source coordinate's lengthscale for RBF.
    pub fn embed(&self, points: &[T], aug_dim: usize, source_dim: usize) -> Result<Vec<T>> {
        match self {
            StaticKernelParams::Linear => Ok(points.to_vec()),
            StaticKernelParams::Rbf { lengthscales } => {
                check_dim(source_dim, lengthscales.len())?;
                let inv: Vec<T> = (0..aug_dim)
                    .map(|c| match source_coordinate(c, source_dim) {
                        None => T::one(),
                        Some(j) => T::one() / lengthscales[j],
                    })
                    .collect();
                Ok(points
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| p * inv[i % aug_dim])
                    .collect())
            }
        }
    }

    /// Kernel between two points already passed through [`Self::embed`].
    #[inline]
    pub fn eval_embedded(&self, x: &[T], y: &[T]) -> T {
        match self {
            StaticKernelParams::Linear => T::dot(x, y),
            StaticKernelParams::Rbf { .. } => (T::sq_dist(x, y) * -0.5).exp(),
        }
    }
}

/// `κ(x, y)`: `⟨x, y⟩` for the linear kernel and
/// `exp(-½ Σ_i (x_i - y_i)² / l_i²)` for RBF.
pub fn kappa<T: Scalar>(x: &[T], y: &[T], params: &StaticKernelParams<T>) -> Result<T> {
    check_dim(x.len(), y.len())?;
    match params {
        StaticKernelParams::Linear => Ok(T::dot(x, y)),
        StaticKernelParams::Rbf { lengthscales } => {
            check_dim(lengthscales.len(), x.len())?;
            let mut acc = T::zero();
            for i in 0..x.len() {
                let d = (x[i] - y[i]) / lengthscales[i];
                acc += d * d;
            }
            Ok((acc * -0.5).exp())
        }
    }
}

/// `κ(x_{i+1}, y_{j+1}) - κ(x_i, y_{j+1}) - κ(x_{i+1}, y_j) + κ(x_i, y_j)`.
pub fn kappa_double_diff<T: Scalar>(
    x_i: &[T],
    x_next: &[T],
    y_j: &[T],
    y_next: &[T],
    params: &StaticKernelParams<T>,
) -> Result<T> {
    Ok(kappa(x_next, y_next, params)? - kappa(x_i, y_next, params)?
        - kappa(x_next, y_j, params)?
        + kappa(x_i, y_j, params)?)
}

/// Default floor applied to degenerate lengthscales.
pub const LENGTHSCALE_FLOOR: f64 = 1e-6;

/// Maximum number of observations used by [`init_lengthscales`].
pub const LENGTHSCALE_SAMPLE: usize = 1000;

/// Initial lengthscales `l_i = sqrt(E[(x_i - x_i')²] · d)` for independent
/// copies `x, x'` of an observation.
///
/// `points` is row-major `n × d`. Up to [`LENGTHSCALE_SAMPLE`] observations are
/// drawn without replacement (seeded) and the expectation is taken over all
/// ordered pairs of the sample, `E[(x - x')²] = 2·Var`. Dimensions with zero
/// spread are floored at `floor`.
pub fn init_lengthscales(points: &[f64], d: usize, seed: u64, floor: f64) -> Result<Vec<f64>> {
    if d == 0 || points.len() % d != 0 {
        return Err(invalid("points must be a row-major n x d array"));
    }
    let n = points.len() / d;
    if n < 2 {
        return Err(invalid("lengthscale initialization needs at least two observations"));
    }
    let rows: Vec<usize> = if n > LENGTHSCALE_SAMPLE {
        let mut rng = rng::stream(seed, Purpose::Lengthscale, 0);
        let mut picked = index::sample(&mut rng, n, LENGTHSCALE_SAMPLE).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let m = rows.len() as f64;
    let mut out = Vec::with_capacity(d);
    for c in 0..d {
        let mean = rows.iter().map(|&r| points[r * d + c]).sum::<f64>() / m;
        let var = rows
            .iter()
            .map(|&r| {
                let z = points[r * d + c] - mean;
                z * z
            })
            .sum::<f64>()
            / m;
        let l = libm::sqrt(2.0 * var * d as f64);
        if l < floor {
            log::warn!("dimension {c} has no spread; lengthscale floored at {floor:e}");
            out.push(floor);
        } else {
            out.push(l);
        }
    }
    Ok(out)
}
