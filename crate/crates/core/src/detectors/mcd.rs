use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ceil_fraction, check_rows, DetectorError, Result};
use crate::linalg::{mean_and_covariance, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McdParams {
    /// Fraction γ of points kept in the support, in `(0, 1]`.
    pub support_fraction: f64,
    pub n_starts: usize,
    pub max_csteps: usize,
    pub seed: u64,
}

impl Default for McdParams {
    fn default() -> Self {
        Self {
            support_fraction: 0.75,
            n_starts: 50,
            max_csteps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McdModel {
    pub support_fraction: f64,
    pub location: Vec<f64>,
    /// Row-major `m x m` scatter of the support.
    pub scatter: Vec<f64>,
    pub support: Vec<usize>,
    pub log_det: f64,
    pub seed: u64,
    #[serde(skip)]
    factor: Option<Cholesky>,
}

impl PartialEq for McdModel {
    fn eq(&self, other: &Self) -> bool {
        self.support_fraction == other.support_fraction
            && self.location == other.location
            && self.scatter == other.scatter
            && self.support == other.support
            && self.seed == other.seed
    }
}

impl McdModel {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    fn factor(&self) -> Result<Cholesky> {
        match &self.factor {
            Some(f) => Ok(f.clone()),
            None => Cholesky::new(&self.scatter, self.dim()).ok_or(DetectorError::SingularCovariance),
        }
    }
}

struct Candidate {
    support: Vec<usize>,
    location: Vec<f64>,
    scatter: Vec<f64>,
    factor: Cholesky,
    log_det: f64,
}

fn estimate(rows: &[Vec<f64>], support: Vec<usize>) -> Option<Candidate> {
    let (location, scatter) = mean_and_covariance(rows, &support);
    let factor = Cholesky::new(&scatter, location.len())?;
    let log_det = factor.log_det();
    Some(Candidate {
        support,
        location,
        scatter,
        factor,
        log_det,
    })
}

/// The `h` rows closest to the candidate in Mahalanobis distance, ties by index.
fn closest(rows: &[Vec<f64>], c: &Candidate, h: usize) -> Vec<usize> {
    let mut centred = vec![0.0; c.location.len()];
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            centred
                .iter_mut()
                .zip(x)
                .zip(&c.location)
                .for_each(|((z, v), mu)| *z = v - mu);
            (c.factor.mahalanobis_sq(&centred), i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if h < d.len() {
        d.select_nth_unstable_by(h - 1, cmp);
        d.truncate(h);
    }
    let mut s: Vec<usize> = d.into_iter().map(|(_, i)| i).collect();
    s.sort_unstable();
    s
}

/// Runs C-steps from one start; returns the converged candidate and the
/// log-determinant after every step (first entry is the start).
fn concentrate(rows: &[Vec<f64>], start: Vec<usize>, h: usize, max_steps: usize) -> Option<(Candidate, Vec<f64>)> {
    let mut current = estimate(rows, start)?;
    let mut trace = vec![current.log_det];
    for _ in 0..max_steps {
        let next_support = closest(rows, &current, h);
        if next_support == current.support {
            break;
        }
        let Some(next) = estimate(rows, next_support) else {
            break;
        };
        trace.push(next.log_det);
        let improved = next.log_det < current.log_det;
        if next.log_det <= current.log_det {
            current = next;
        }
        if !improved {
            break;
        }
    }
    Some((current, trace))
}

/// Like [`fit_mcd`], also returning the per-start log-determinant traces
/// (empty for starts whose initial scatter was singular).
pub fn fit_mcd_traced(rows: &[Vec<f64>], params: McdParams) -> Result<(McdModel, Vec<Vec<f64>>)> {
    let n = rows.len();
    let m = check_rows(rows, None)?;
    if m == 0 {
        return Err(DetectorError::NoFeatures);
    }
    if !(params.support_fraction > 0.0 && params.support_fraction <= 1.0) || params.n_starts == 0 {
        return Err(DetectorError::InvalidParameter(format!(
            "support_fraction {} / n_starts {}",
            params.support_fraction, params.n_starts
        )));
    }
    if n <= m * m {
        return Err(DetectorError::InsufficientSamples { n, m });
    }
    let h = ceil_fraction(n, params.support_fraction);
    if h <= m {
        return Err(DetectorError::SupportTooSmall { h, m });
    }
    // With no trimming every start is the full sample.
    let starts = if h == n { 1 } else { params.n_starts };
    let results: Vec<Option<(Candidate, Vec<f64>)>> = (0..starts as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(s);
            let mut start = index::sample(&mut rng, n, h).into_vec();
            start.sort_unstable();
            concentrate(rows, start, h, params.max_csteps)
        })
        .collect();
    let mut traces = Vec::with_capacity(results.len());
    let mut best: Option<Candidate> = None;
    for r in results {
        match r {
            Some((c, trace)) => {
                traces.push(trace);
                if best.as_ref().is_none_or(|b| c.log_det < b.log_det) {
                    best = Some(c);
                }
            }
            None => traces.push(Vec::new()),
        }
    }
    let best = best.ok_or(DetectorError::SingularCovariance)?;
    Ok((
        McdModel {
            support_fraction: params.support_fraction,
            location: best.location,
            scatter: best.scatter,
            support: best.support,
            log_det: best.log_det,
            seed: params.seed,
            factor: Some(best.factor),
        },
        traces,
    ))
}

/// Random `ceil(nγ)`-subsets concentrated by C-steps; keeps the support
/// whose scatter has the smallest determinant.
pub fn fit_mcd(rows: &[Vec<f64>], params: McdParams) -> Result<McdModel> {
    fit_mcd_traced(rows, params).map(|(m, _)| m)
}

/// Squared Mahalanobis distances to the robust location.
pub fn mahalanobis_scores(model: &McdModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = check_rows(rows, Some(model.dim()))?;
    let factor = model.factor()?;
    Ok(rows
        .par_iter()
        .map(|x| {
            let centred: Vec<f64> = x.iter().zip(&model.location).map(|(v, mu)| v - mu).collect();
            debug_assert_eq!(centred.len(), m);
            factor.mahalanobis_sq(&centred)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(location: Vec<f64>, scatter: Vec<f64>) -> McdModel {
        McdModel {
            support_fraction: 1.0,
            location,
            scatter,
            support: vec![],
            log_det: 0.0,
            seed: 0,
            factor: None,
        }
    }

    #[test]
    fn identity_scatter_gives_squared_norm() {
        let m = model(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]);
        let s = mahalanobis_scores(&m, &[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(s, vec![25.0, 0.0]);
        let singular = model(vec![0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            mahalanobis_scores(&singular, &[vec![1.0, 0.0]]),
            Err(DetectorError::SingularCovariance)
        );
    }

    #[test]
    fn sample_size_checks() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i); 4]).collect();
        assert_eq!(
            fit_mcd(&rows, McdParams::default()).unwrap_err(),
            DetectorError::InsufficientSamples { n: 10, m: 4 }
        );
        let collinear: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i), 2.0 * f64::from(i)]).collect();
        assert_eq!(
            fit_mcd(&collinear, McdParams::default()).unwrap_err(),
            DetectorError::SingularCovariance
        );
    }
}
