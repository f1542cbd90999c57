//! Dense row-major arrays with the four operations the signature recursions
//! are written in: cumulative sum, slice-wise sum, zero-filling shift and the
//! element-wise product. Axes are 0-based here; the semantics match the usual
//! 1-based definitions (`shift` by `m` moves entry `i` to `i + m` and fills the
//! first `m` entries with zero).

use alloc::format;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::{Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct NdArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> NdArray<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(invalid(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: alloc::vec![T::zero(); n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    // (outer, n, inner) split around `axis`
    fn split(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.shape.len() {
            return Err(invalid(format!(
                "axis {axis} out of range for a {}-way array",
                self.shape.len()
            )));
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }

    /// Inclusive cumulative sum along `axis`.
    pub fn cumsum(&self, axis: usize) -> Result<Self> {
        let (outer, n, inner) = self.split(axis)?;
        let mut data = self.data.clone();
        for o in 0..outer {
            let base = o * n * inner;
            for k in 1..n {
                for i in 0..inner {
                    let prev = data[base + (k - 1) * inner + i];
                    data[base + k * inner + i] += prev;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Sum over `axis`, removing it from the shape.
    pub fn slicesum(&self, axis: usize) -> Result<Self> {
        let (outer, n, inner) = self.split(axis)?;
        let mut data = Vec::with_capacity(outer * inner);
        let mut column = Vec::with_capacity(n);
        for o in 0..outer {
            for i in 0..inner {
                column.clear();
                column.extend((0..n).map(|k| self.data[(o * n + k) * inner + i]));
                data.push(T::sum(&column));
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self { shape, data })
    }

    /// Shift by `m` along `axis`; the first `m` entries become zero.
    pub fn shift(&self, axis: usize, m: usize) -> Result<Self> {
        let (outer, n, inner) = self.split(axis)?;
        let mut data = alloc::vec![T::zero(); self.data.len()];
        for o in 0..outer {
            for k in m..n {
                let dst = (o * n + k) * inner;
                let src = (o * n + k - m) * inner;
                data[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// `cumsum(shift(A, axis, 1), axis)`: entry `i` holds the sum of entries
    /// strictly before `i`.
    pub fn exclusive_cumsum(&self, axis: usize) -> Result<Self> {
        self.shift(axis, 1)?.cumsum(axis)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(invalid(format!(
                "shape mismatch in element-wise product: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }
}
