//! Sequences, their piecewise-linear embedding and batch preparation.
//!
//! A [`Sequence`] is a list of timestamped state vectors. Before any kernel is
//! evaluated it is *augmented*: the state at time `t` becomes
//! `(τ·t, x(t), x(t - s_1), …, x(t - s_p))`, where lagged values are read off the
//! linear interpolant of the observations with flat extrapolation before the
//! first observation.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid};
use crate::{Result, Scalar};

/// Timestamped multivariate sequence with an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct Sequence {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
    label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

impl TryFrom<RawSequence> for Sequence {
    type Error = crate::Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        Sequence::new(raw.times, raw.values, raw.label)
    }
}

impl From<Sequence> for RawSequence {
    fn from(seq: Sequence) -> Self {
        RawSequence {
            values: (0..seq.len()).map(|i| seq.point(i).to_vec()).collect(),
            times: seq.times,
            label: seq.label,
        }
    }
}

impl Sequence {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, label: Option<usize>) -> Result<Self> {
        let dim = values.first().map_or(0, Vec::len);
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(invalid(format!(
                "observation {i} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        let flat = values.into_iter().flatten().collect();
        Self::from_flat(times, flat, dim, label)
    }

    /// Builds a sequence from row-major `values` of shape `len × dim`.
    pub fn from_flat(
        times: Vec<f64>,
        values: Vec<f64>,
        dim: usize,
        label: Option<usize>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("a sequence needs at least one observation"));
        }
        if dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if values.len() != times.len() * dim {
            return Err(invalid(format!(
                "{} timestamps but {} values for dimension {dim}",
                times.len(),
                values.len()
            )));
        }
        if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!(
                "timestamps must be strictly increasing (index {})",
                w + 1
            )));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(invalid("non-finite time or value"));
        }
        Ok(Sequence {
            times,
            values,
            dim,
            label,
        })
    }

    /// Sequence on the integer grid `0, 1, 2, …`.
    pub fn on_grid(values: Vec<Vec<f64>>, label: Option<usize>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(times, values, label)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Row-major values, `len × dim`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Replaces the values, keeping times and label. Used by affine
    /// normalization and by learnable inducing sequences.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.times.clone(), values, self.dim, self.label)
    }

    /// Contiguous window `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.len());
        Sequence {
            times: self.times[start..end].to_vec(),
            values: self.values[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            label: self.label,
        }
    }

    /// Keeps the observations at `indices` (ascending).
    pub fn select(&self, indices: &[usize]) -> Self {
        Sequence {
            times: indices.iter().map(|&i| self.times[i]).collect(),
            values: indices
                .iter()
                .flat_map(|&i| self.point(i).iter().copied())
                .collect(),
            dim: self.dim,
            label: self.label,
        }
    }
}

/// Augmented state vectors `(τ·t, x, lagged x…)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSequence<T> {
    points: Vec<T>,
    dim: usize,
    source_dim: usize,
}

impl<T: Scalar> AugmentedSequence<T> {
    /// Wraps already-augmented points (used for tests and oracles).
    pub fn from_points(points: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid("augmented points must be a non-empty multiple of dim"));
        }
        Ok(Self {
            points,
            dim,
            source_dim: dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the original observations.
    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// `Δx_i = x_{i+1} - x_i` for `i < len - 1`, row-major.
    pub fn increments(&self) -> Vec<T> {
        increments(&self.points, self.dim)
    }
}

/// Differences of consecutive rows of a row-major point list.
pub fn increments<T: Scalar>(points: &[T], dim: usize) -> Vec<T> {
    let n = points.len() / dim;
    let mut out = Vec::with_capacity(n.saturating_sub(1) * dim);
    for i in 1..n {
        for c in 0..dim {
            out.push(points[i * dim + c] - points[(i - 1) * dim + c]);
        }
    }
    out
}

/// Dimension of an augmented state: `1 + d·(1 + p)`.
pub fn augmented_dim(source_dim: usize, num_lags: usize) -> usize {
    1 + source_dim * (1 + num_lags)
}

/// Index of the original coordinate an augmented coordinate derives from,
/// or `None` for the time coordinate.
pub fn source_coordinate(aug_coord: usize, source_dim: usize) -> Option<usize> {
    aug_coord.checked_sub(1).map(|c| c % source_dim)
}

pub fn augment<T: Scalar>(seq: &Sequence, tau: T, lags: &[T]) -> Result<AugmentedSequence<T>> {
    let values: Vec<T> = seq.values.iter().map(|&v| T::constant(v)).collect();
    augment_values(&seq.times, &values, seq.dim, tau, lags)
}

/// Augmentation for sequences whose values are themselves scalars of type `T`
/// (learnable inducing sequences).
pub fn augment_values<T: Scalar>(
    times: &[f64],
    values: &[T],
    dim: usize,
    tau: T,
    lags: &[T],
) -> Result<AugmentedSequence<T>> {
    check_dim(times.len() * dim, values.len())?;
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("timestamps must be strictly increasing"));
    }
    if !(tau.value() >= 0.0) || !tau.value().is_finite() {
        return Err(invalid("tau must be finite and non-negative"));
    }
    if lags.iter().any(|s| !(s.value() >= 0.0) || !s.value().is_finite()) {
        return Err(invalid("lags must be finite and non-negative"));
    }
    let len = times.len();
    let out_dim = augmented_dim(dim, lags.len());
    let mut points = Vec::with_capacity(len * out_dim);
    for (i, &t) in times.iter().enumerate() {
        points.push(tau * t);
        points.extend_from_slice(&values[i * dim..(i + 1) * dim]);
        for &lag in lags {
            push_interpolated(&mut points, times, values, dim, i, lag);
        }
    }
    Ok(AugmentedSequence {
        points,
        dim: out_dim,
        source_dim: dim,
    })
}

// Value of the linear interpolant at `times[i] - lag`, flat before times[0].
fn push_interpolated<T: Scalar>(
    out: &mut Vec<T>,
    times: &[f64],
    values: &[T],
    dim: usize,
    i: usize,
    lag: T,
) {
    let q = times[i] - lag.value();
    if q <= times[0] {
        out.extend_from_slice(&values[..dim]);
        return;
    }
    // times[k] <= q <= times[i]
    let k = times[..=i].iter().rposition(|&t| t <= q).unwrap_or(0);
    if k == i {
        out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
        return;
    }
    let span = times[k + 1] - times[k];
    // written in terms of the lag so that its derivative is kept
    let w = (-lag + (times[i] - times[k])) / span;
    for c in 0..dim {
        let a = values[k * dim + c];
        let b = values[(k + 1) * dim + c];
        out.push(a + w * (b - a));
    }
}

/// Augmented sequences padded to a common length by repeating their final
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch<T> {
    points: Vec<T>,
    lengths: Vec<usize>,
    len: usize,
    dim: usize,
}

impl<T: Scalar> SequenceBatch<T> {
    /// Assembles a batch from row-major points `n × len × dim`.
    pub(crate) fn from_parts(points: Vec<T>, lengths: Vec<usize>, len: usize, dim: usize) -> Self {
        debug_assert_eq!(points.len(), lengths.len() * len * dim);
        Self {
            points,
            lengths,
            len,
            dim,
        }
    }

    pub fn num_sequences(&self) -> usize {
        self.lengths.len()
    }

    /// Common stored length `l_X`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length before padding.
    pub fn effective_len(&self, s: usize) -> usize {
        self.lengths[s]
    }

    /// Row-major points of sequence `s`, `len × dim`.
    pub fn sequence(&self, s: usize) -> &[T] {
        let stride = self.len * self.dim;
        &self.points[s * stride..(s + 1) * stride]
    }

    /// Row-major increments of sequence `s`, `(len - 1) × dim`.
    pub fn increments(&self, s: usize) -> Vec<T> {
        increments(self.sequence(s), self.dim)
    }
}

/// Pads every sequence to the longest length by repeating its final point.
pub fn tabulate<T: Scalar>(seqs: &[AugmentedSequence<T>]) -> Result<SequenceBatch<T>> {
    let first = seqs
        .first()
        .ok_or_else(|| invalid("cannot tabulate an empty list of sequences"))?;
    let dim = first.dim;
    let len = seqs.iter().map(AugmentedSequence::len).max().unwrap_or(0);
    let mut points = Vec::with_capacity(seqs.len() * len * dim);
    let mut lengths = Vec::with_capacity(seqs.len());
    for s in seqs {
        check_dim(dim, s.dim)?;
        points.extend_from_slice(&s.points);
        let last = s.point(s.len() - 1);
        for _ in s.len()..len {
            points.extend_from_slice(last);
        }
        lengths.push(s.len());
    }
    Ok(SequenceBatch {
        points,
        lengths,
        len,
        dim,
    })
}

/// Indices kept by [`subsample`]: endpoints plus evenly spaced interior points
/// (`round_half_even(k·(len-1)/(max_len-1))`).
pub fn subsample_indices(len: usize, max_len: usize) -> Vec<usize> {
    if len <= max_len {
        return (0..len).collect();
    }
    let step = (len - 1) as f64 / (max_len - 1) as f64;
    (0..max_len)
        .map(|k| libm::rint(k as f64 * step) as usize)
        .collect()
}

/// Shortens sequences longer than `max_len`, keeping both endpoints.
pub fn subsample(seq: &Sequence, max_len: usize) -> Result<Sequence> {
    if max_len < 2 {
        return Err(invalid("subsample needs max_len >= 2"));
    }
    if seq.len() <= max_len {
        return Ok(seq.clone());
    }
    Ok(seq.select(&subsample_indices(seq.len(), max_len)))
}
