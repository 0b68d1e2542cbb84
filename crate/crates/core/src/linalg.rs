//! Dense symmetric positive-definite helpers for the covariance estimator.

/// Lower-triangular Cholesky factor of a row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` unless the matrix is numerically positive definite.
    pub fn new(a: &[f64], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                let v = a[i * n + j] - dot;
                if i == j {
                    // A pivot that keeps almost none of the coordinate's own
                    // variance means the columns are numerically dependent.
                    if !(v > 1e-12 * a[i * n + i]) || !v.is_finite() {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// `v^T A^{-1} v`, via one forward substitution.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        let n = self.n;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
            z[i] = (v[i] - s) / self.l[i * n + i];
        }
        z.iter().map(|x| x * x).sum()
    }
}

/// Mean and biased (`1/|I|`) covariance of the selected rows.
pub fn mean_and_covariance(rows: &[Vec<f64>], subset: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let m = rows[subset[0]].len();
    let h = subset.len() as f64;
    let mut mean = vec![0.0; m];
    for &i in subset {
        mean.iter_mut().zip(&rows[i]).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= h);
    let mut cov = vec![0.0; m * m];
    let mut centred = vec![0.0; m];
    for &i in subset {
        centred
            .iter_mut()
            .zip(&rows[i])
            .zip(&mean)
            .for_each(|((c, v), mu)| *c = v - mu);
        for a in 0..m {
            let ca = centred[a];
            let row = &mut cov[a * m..a * m + a + 1];
            for (b, out) in row.iter_mut().enumerate() {
                *out += ca * centred[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..=a {
            let v = cov[a * m + b] / h;
            cov[a * m + b] = v;
            cov[b * m + a] = v;
        }
    }
    (mean, cov)
}
