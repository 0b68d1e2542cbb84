//! Randomized signatures.
//!
//! Each driving channel `i` gets a random affine vector field
//! `x -> σ(A_i x + b_i)` on `R^k`. The feature of a path is the terminal
//! state of the controlled system `dRS = Σ_i σ(A_i RS + b_i) dX^i`,
//! integrated with one forward Euler step per observed sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::PathSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservoirError {
    #[error("reservoir dimension must be positive")]
    ZeroReservoir,
    #[error("input dimension must be positive")]
    ZeroInput,
    #[error("invalid variance {0}")]
    InvalidVariance(f64),
    #[error("series has {got} channels, reservoir expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state has {got} entries, reservoir dimension is {expected}")]
    StateMismatch { expected: usize, got: usize },
    #[error("series needs at least 2 samples, got {0}")]
    TooShort(usize),
}

pub type Result<T> = std::result::Result<T, ReservoirError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// Hyperparameters that determine a reservoir. `var_a` and `var_b` are
/// variances; entries are drawn with standard deviation `sqrt(var)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirParams {
    pub input_dim: usize,
    pub reservoir_dim: usize,
    pub mean_a: f64,
    pub var_a: f64,
    pub mean_b: f64,
    pub var_b: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl ReservoirParams {
    /// Hyperparameters used for the simulated price paths.
    pub fn simulated_preset(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            reservoir_dim: 200,
            mean_a: 0.15,
            var_a: 0.6,
            mean_b: 0.0,
            var_b: 1.0,
            activation: Activation::Tanh,
            seed,
        }
    }

    /// Hyperparameters used for trade data.
    pub fn crypto_preset(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            reservoir_dim: 50,
            mean_a: 0.05,
            var_a: 0.1,
            mean_b: 0.0,
            var_b: 1.0,
            activation: Activation::Tanh,
            seed,
        }
    }
}

/// A sampled reservoir. Serializes as its [`ReservoirParams`] only; the
/// matrices are regenerated from the seed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReservoirParams", into = "ReservoirParams")]
pub struct ReservoirSpec {
    params: ReservoirParams,
    /// `input_dim` row-major `k x k` matrices, concatenated.
    a: Vec<f64>,
    /// `input_dim` shift vectors of length `k`, concatenated.
    b: Vec<f64>,
    initial_state: Vec<f64>,
}

impl TryFrom<ReservoirParams> for ReservoirSpec {
    type Error = ReservoirError;
    fn try_from(p: ReservoirParams) -> Result<Self> {
        sample_reservoir(&p)
    }
}

impl From<ReservoirSpec> for ReservoirParams {
    fn from(s: ReservoirSpec) -> Self {
        s.params
    }
}

fn normal(mean: f64, var: f64) -> Result<Normal<f64>> {
    if !(var >= 0.0 && var.is_finite()) {
        return Err(ReservoirError::InvalidVariance(var));
    }
    Normal::new(mean, var.sqrt()).map_err(|_| ReservoirError::InvalidVariance(var))
}

/// Draws `A` entries, then `b`, then the initial state from one seeded stream.
pub fn sample_reservoir(params: &ReservoirParams) -> Result<ReservoirSpec> {
    let (d, k) = (params.input_dim, params.reservoir_dim);
    if k == 0 {
        return Err(ReservoirError::ZeroReservoir);
    }
    if d == 0 {
        return Err(ReservoirError::ZeroInput);
    }
    let dist_a = normal(params.mean_a, params.var_a)?;
    let dist_b = normal(params.mean_b, params.var_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let a = (0..d * k * k).map(|_| dist_a.sample(&mut rng)).collect();
    let b = (0..d * k).map(|_| dist_b.sample(&mut rng)).collect();
    let initial_state = (0..k)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(ReservoirSpec {
        params: params.clone(),
        a,
        b,
        initial_state,
    })
}

impl ReservoirSpec {
    /// Builds a reservoir from explicit fields. `a[i]` is the row-major
    /// `k x k` matrix of channel `i`.
    pub fn from_parts(
        activation: Activation,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        initial_state: Vec<f64>,
    ) -> Result<Self> {
        let k = initial_state.len();
        let d = a.len();
        if k == 0 {
            return Err(ReservoirError::ZeroReservoir);
        }
        if d == 0 {
            return Err(ReservoirError::ZeroInput);
        }
        if b.len() != d
            || a.iter().any(|m| m.len() != k * k)
            || b.iter().any(|v| v.len() != k)
        {
            return Err(ReservoirError::StateMismatch {
                expected: k,
                got: a.first().map_or(0, Vec::len),
            });
        }
        Ok(Self {
            params: ReservoirParams {
                input_dim: d,
                reservoir_dim: k,
                mean_a: 0.0,
                var_a: 0.0,
                mean_b: 0.0,
                var_b: 0.0,
                activation,
                seed: 0,
            },
            a: a.concat(),
            b: b.concat(),
            initial_state,
        })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    pub fn reservoir_dim(&self) -> usize {
        self.params.reservoir_dim
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn matrix(&self, channel: usize) -> &[f64] {
        let kk = self.reservoir_dim() * self.reservoir_dim();
        &self.a[channel * kk..(channel + 1) * kk]
    }

    pub fn shift(&self, channel: usize) -> &[f64] {
        let k = self.reservoir_dim();
        &self.b[channel * k..(channel + 1) * k]
    }

    /// Runs the Euler recursion along `series` starting from `state`.
    pub fn evolve(&self, state: &[f64], series: &PathSeries) -> Result<Vec<f64>> {
        let (d, k) = (self.input_dim(), self.reservoir_dim());
        if series.channels() != d {
            return Err(ReservoirError::DimensionMismatch {
                expected: d,
                got: series.channels(),
            });
        }
        if state.len() != k {
            return Err(ReservoirError::StateMismatch {
                expected: k,
                got: state.len(),
            });
        }
        let act = self.params.activation;
        let mut rs = state.to_vec();
        let mut update = vec![0.0; k];
        for inc in series.increments() {
            update.iter_mut().for_each(|u| *u = 0.0);
            for (i, &dx) in inc.iter().enumerate() {
                if dx == 0.0 {
                    continue;
                }
                let m = self.matrix(i);
                let shift = self.shift(i);
                for (r, u) in update.iter_mut().enumerate() {
                    let row = &m[r * k..(r + 1) * k];
                    let z: f64 = row.iter().zip(&rs).map(|(w, x)| w * x).sum::<f64>() + shift[r];
                    *u += act.apply(z) * dx;
                }
            }
            rs.iter_mut().zip(&update).for_each(|(x, u)| *x += u);
        }
        Ok(rs)
    }
}

/// Terminal reservoir state after driving it with `series` from the
/// spec's initial state.
pub fn randomized_signature(spec: &ReservoirSpec, series: &PathSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(ReservoirError::TooShort(series.len()));
    }
    spec.evolve(spec.initial_state(), series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_values() {
        let s = ReservoirParams::simulated_preset(3, 0);
        assert_eq!(
            (s.reservoir_dim, s.mean_a, s.var_a, s.mean_b, s.var_b),
            (200, 0.15, 0.6, 0.0, 1.0)
        );
        let c = ReservoirParams::crypto_preset(4, 0);
        assert_eq!(
            (c.reservoir_dim, c.mean_a, c.var_a, c.mean_b, c.var_b),
            (50, 0.05, 0.1, 0.0, 1.0)
        );
        assert_eq!(c.activation, Activation::Tanh);
    }

    #[test]
    fn zero_fields_freeze_the_state() {
        let p = ReservoirParams {
            input_dim: 2,
            reservoir_dim: 5,
            mean_a: 0.0,
            var_a: 0.0,
            mean_b: 0.0,
            var_b: 0.0,
            activation: Activation::Tanh,
            seed: 9,
        };
        let spec = sample_reservoir(&p).unwrap();
        let path = PathSeries::new(vec![0.0, 0.0, 1.0, -2.0, 3.0, 0.5], 2).unwrap();
        assert_eq!(
            randomized_signature(&spec, &path).unwrap(),
            spec.initial_state()
        );
    }

    #[test]
    fn constant_path_returns_initial_state() {
        let spec = sample_reservoir(&ReservoirParams::crypto_preset(2, 3)).unwrap();
        let path = PathSeries::new(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(
            randomized_signature(&spec, &path).unwrap(),
            spec.initial_state()
        );
    }

    #[test]
    fn single_step_by_hand() {
        let spec =
            ReservoirSpec::from_parts(Activation::Tanh, vec![vec![0.0]], vec![vec![1.0]], vec![0.0])
                .unwrap();
        let path = PathSeries::new(vec![0.0, 1.0], 1).unwrap();
        let out = randomized_signature(&spec, &path).unwrap();
        assert!((out[0] - 0.761_594_155_955_764_9).abs() < 1e-12);
    }

    #[test]
    fn identity_fields_telescope() {
        let k = 3;
        let a = vec![vec![0.0; k * k]; 3];
        let b = (0..3)
            .map(|i| (0..k).map(|r| f64::from(u8::from(r == i))).collect())
            .collect();
        let rs0 = vec![0.5, -1.0, 2.0];
        let spec = ReservoirSpec::from_parts(Activation::Identity, a, b, rs0.clone()).unwrap();
        let path = PathSeries::new(
            vec![0.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.5, 3.0, 4.0, 2.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        let out = randomized_signature(&spec, &path).unwrap();
        let expected = [0.5 + 2.0, -1.0 + 1.0, 2.0 + 1.0];
        for (o, e) in out.iter().zip(expected) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let spec = sample_reservoir(&ReservoirParams::crypto_preset(2, 0)).unwrap();
        let path = PathSeries::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        assert_eq!(
            randomized_signature(&spec, &path),
            Err(ReservoirError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
        let mut p = ReservoirParams::crypto_preset(2, 0);
        p.var_a = -1.0;
        assert_eq!(
            sample_reservoir(&p),
            Err(ReservoirError::InvalidVariance(-1.0))
        );
    }

    #[test]
    fn json_round_trip_regenerates_fields() {
        let spec = sample_reservoir(&ReservoirParams::crypto_preset(4, 17)).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(!json.contains('['));
        let back: ReservoirSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
