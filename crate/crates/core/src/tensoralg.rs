//! Truncated tensor algebra and exact signatures of piecewise-linear paths.
//!
//! Level `n` of a [`TruncatedTensor`] over an alphabet of size `d` is a flat
//! block of `d^n` coefficients indexed lexicographically: the word
//! `(i_1, ..., i_n)` sits at `((i_1 * d + i_2) * d + ...) + i_n`.
//!
//! The signature of a linear segment with increment `v` is the truncated
//! tensor exponential `sum_n v^{⊗n} / n!`; a piecewise-linear path is the
//! ordered product (Chen's identity) of its segment exponentials. Each
//! product costs `O(sum_{j<=N} (j+1) d^j)` multiply-adds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::PathSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("coefficient count overflows for d = {dim}, N = {degree}")]
    CountOverflow { dim: usize, degree: usize },
    #[error("alphabet size must be positive")]
    ZeroDimension,
    #[error("tensor shapes differ: (d = {0}, N = {1}) vs (d = {2}, N = {3})")]
    Mismatch(usize, usize, usize, usize),
    #[error("path needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("increment has {got} entries, expected {expected}")]
    IncrementLength { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Number of coefficients `sum_{j=0}^{N} d^j` of a degree-`N` tensor.
pub fn coeff_count(dim: usize, degree: usize) -> Result<usize> {
    if dim == 0 {
        return Err(TensorError::ZeroDimension);
    }
    let overflow = TensorError::CountOverflow { dim, degree };
    let mut total: usize = 0;
    let mut block: usize = 1;
    for j in 0..=degree {
        total = total.checked_add(block).ok_or(overflow.clone())?;
        if j < degree {
            block = block.checked_mul(dim).ok_or(overflow.clone())?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedTensor {
    dim: usize,
    degree: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, degree: usize) -> Result<Self> {
        coeff_count(dim, degree)?;
        let levels = (0..=degree).map(|n| vec![0.0; dim.pow(n as u32)]).collect();
        Ok(Self {
            dim,
            degree,
            levels,
        })
    }

    /// The multiplicative identity `(1, 0, 0, ...)`.
    pub fn unit(dim: usize, degree: usize) -> Result<Self> {
        let mut t = Self::zero(dim, degree)?;
        t.levels[0][0] = 1.0;
        Ok(t)
    }

    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(TensorError::ZeroDimension);
        }
        let degree = levels.len().saturating_sub(1);
        coeff_count(dim, degree)?;
        for (n, block) in levels.iter().enumerate() {
            let expected = dim.pow(n as u32);
            if block.len() != expected {
                return Err(TensorError::IncrementLength {
                    expected,
                    got: block.len(),
                });
            }
        }
        Ok(Self {
            dim,
            degree,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Coefficient of the word `word` (empty slice for level 0).
    pub fn coeff(&self, word: &[usize]) -> f64 {
        let idx = word.iter().fold(0, |acc, &i| acc * self.dim + i);
        self.levels[word.len()][idx]
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.degree != other.degree {
            return Err(TensorError::Mismatch(
                self.dim,
                self.degree,
                other.dim,
                other.degree,
            ));
        }
        Ok(())
    }

    /// Right-multiplies in place by `other`, truncating at the common degree.
    fn mul_assign_truncated(&mut self, other: &Self) {
        // Highest level first so lower levels still hold their old values.
        for n in (0..=self.degree).rev() {
            let mut acc = vec![0.0; self.levels[n].len()];
            for k in 0..=n {
                outer_accumulate(&mut acc, &self.levels[n - k], &other.levels[k]);
            }
            self.levels[n] = acc;
        }
    }
}

/// `acc[i * |b| + j] += a[i] * b[j]`.
#[inline]
fn outer_accumulate(acc: &mut [f64], a: &[f64], b: &[f64]) {
    let width = b.len();
    for (chunk, &x) in acc.chunks_exact_mut(width).zip(a) {
        if x == 0.0 {
            continue;
        }
        for (out, &y) in chunk.iter_mut().zip(b) {
            *out += x * y;
        }
    }
}

/// Truncated tensor exponential of a single increment.
pub fn segment_signature(increment: &[f64], degree: usize) -> Result<TruncatedTensor> {
    let dim = increment.len();
    coeff_count(dim, degree)?;
    let mut levels = Vec::with_capacity(degree + 1);
    levels.push(vec![1.0]);
    for n in 1..=degree {
        let prev: &Vec<f64> = &levels[n - 1];
        let scale = 1.0 / n as f64;
        let mut next = Vec::with_capacity(prev.len() * dim);
        for &p in prev {
            next.extend(increment.iter().map(|&v| p * v * scale));
        }
        levels.push(next);
    }
    Ok(TruncatedTensor {
        dim,
        degree,
        levels,
    })
}

/// Truncated tensor product: level `j` is `sum_k a_k ⊗ b_{j-k}`.
pub fn chen_product(a: &TruncatedTensor, b: &TruncatedTensor) -> Result<TruncatedTensor> {
    a.check_same_shape(b)?;
    let mut out = a.clone();
    out.mul_assign_truncated(b);
    Ok(out)
}

/// Exact truncated signature of the piecewise-linear interpolation of `series`.
pub fn path_signature(series: &PathSeries, degree: usize) -> Result<TruncatedTensor> {
    if series.len() < 2 {
        return Err(TensorError::TooShort(series.len()));
    }
    let dim = series.channels();
    let mut sig = TruncatedTensor::unit(dim, degree)?;
    for inc in series.increments() {
        if inc.iter().all(|&v| v == 0.0) {
            continue;
        }
        let seg = segment_signature(&inc, degree)?;
        sig.mul_assign_truncated(&seg);
    }
    Ok(sig)
}

/// Explicit Euler integration of `dY = π_N(Y) ⊗ dX`, `Y_0 = 1`, with
/// `steps_per_segment` equal sub-steps on each linear piece. Slow and only
/// first-order accurate; used to cross-check [`path_signature`].
pub fn signature_via_ode(
    series: &PathSeries,
    degree: usize,
    steps_per_segment: usize,
) -> Result<TruncatedTensor> {
    if series.len() < 2 {
        return Err(TensorError::TooShort(series.len()));
    }
    let dim = series.channels();
    let mut y = TruncatedTensor::unit(dim, degree)?;
    let steps = steps_per_segment.max(1);
    for inc in series.increments() {
        let dx: Vec<f64> = inc.iter().map(|v| v / steps as f64).collect();
        for _ in 0..steps {
            for n in (1..=degree).rev() {
                let (lower, upper) = y.levels.split_at_mut(n);
                outer_accumulate(&mut upper[0], &lower[n - 1], &dx);
            }
        }
    }
    Ok(y)
}

/// Concatenates levels `1..=N` (and level 0 when asked) into one vector.
pub fn flatten_features(t: &TruncatedTensor, include_constant: bool) -> Vec<f64> {
    let skip = usize::from(!include_constant);
    t.levels.iter().skip(skip).flatten().copied().collect()
}

/// Sum of the Euclidean lengths of the segments.
pub fn total_variation(series: &PathSeries) -> f64 {
    series
        .increments()
        .map(|inc| inc.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}
