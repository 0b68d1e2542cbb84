use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_rows, DetectorError, Result};

/// Average unsuccessful-search path length of a binary search tree on `n`
/// points, `2 H(n-1) - 2 (n-1) / n`; zero for `n <= 1`.
pub fn avg_path_length_c(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
    let n = n as f64;
    2.0 * harmonic - 2.0 * (n - 1.0) / n
}

/// `2^(-E(h) / c(ψ))`.
pub fn score_from_mean_depth(mean_depth: f64, subsample_size: usize) -> f64 {
    let c = avg_path_length_c(subsample_size);
    if c == 0.0 {
        return 0.5;
    }
    (-mean_depth / c).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
            seed: 0,
        }
    }
}

/// Tree node stored in a per-tree arena; children are arena indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub n_trees: usize,
    /// Effective subsample size `min(ψ, n)`.
    pub subsample_size: usize,
    pub height_limit: usize,
    pub n_features: usize,
    pub seed: u64,
    pub trees: Vec<Vec<Node>>,
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    height_limit: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if idx.len() <= 1 || depth >= self.height_limit {
            return slot;
        }
        let m = self.rows[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..m)
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.rows[i][f];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        // Every candidate feature is constant: the node holds duplicates.
        if ranges.is_empty() {
            return slot;
        }
        let (feature, lo, hi) = ranges[self.rng.random_range(0..ranges.len())];
        let value = self.rng.random_range(lo..hi);
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.rows[i][feature] <= value);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        slot
    }
}

/// Fits `n_trees` isolation trees, each on its own subsample of
/// `min(ψ, n)` rows drawn without replacement.
pub fn fit_isolation_forest(
    rows: &[Vec<f64>],
    params: IsolationForestParams,
) -> Result<IsolationForestModel> {
    let n = rows.len();
    if n < 2 {
        return Err(DetectorError::TooFewSamples { needed: 2, got: n });
    }
    let m = check_rows(rows, None)?;
    if m == 0 {
        return Err(DetectorError::NoFeatures);
    }
    if params.n_trees == 0 || params.subsample_size < 2 {
        return Err(DetectorError::InvalidParameter(
            "need n_trees >= 1 and subsample_size >= 2".into(),
        ));
    }
    let psi = params.subsample_size.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t);
            let sample = index::sample(&mut rng, n, psi).into_vec();
            let mut b = TreeBuilder {
                rows,
                height_limit,
                rng,
                nodes: Vec::new(),
            };
            b.build(sample, 0);
            b.nodes
        })
        .collect();
    Ok(IsolationForestModel {
        n_trees: params.n_trees,
        subsample_size: psi,
        height_limit,
        n_features: m,
        seed: params.seed,
        trees,
    })
}

impl IsolationForestModel {
    /// Depth at which `x` leaves `tree`, plus `c(size)` for unresolved leaves.
    pub fn path_length(&self, tree: usize, x: &[f64]) -> f64 {
        let nodes = &self.trees[tree];
        let (mut at, mut depth) = (0, 0usize);
        loop {
            match nodes[at] {
                Node::Leaf { size } => return depth as f64 + avg_path_length_c(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    at = if x[feature] <= value { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let total: f64 = (0..self.trees.len()).map(|t| self.path_length(t, x)).sum();
        total / self.trees.len() as f64
    }

    /// Anomaly score in `(0, 1)`; higher is more anomalous.
    pub fn score(&self, x: &[f64]) -> f64 {
        score_from_mean_depth(self.mean_path_length(x), self.subsample_size)
    }

    pub fn scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_rows(rows, Some(self.n_features))?;
        Ok(rows.par_iter().map(|x| self.score(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_values() {
        assert_eq!(avg_path_length_c(2), 1.0);
        assert_eq!(avg_path_length_c(1), 0.0);
        assert_eq!(avg_path_length_c(0), 0.0);
        assert!((avg_path_length_c(3) - 5.0 / 3.0).abs() < 1e-15);
        for n in 2..500 {
            assert!(avg_path_length_c(n + 1) > avg_path_length_c(n));
        }
    }

    #[test]
    fn score_symmetry_point() {
        assert!((score_from_mean_depth(avg_path_length_c(256), 256) - 0.5).abs() < 1e-15);
        assert!(score_from_mean_depth(3.0, 256) > score_from_mean_depth(4.0, 256));
    }

    #[test]
    fn two_points_split_at_depth_one() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 5.0]];
        let f = fit_isolation_forest(&rows, IsolationForestParams::default()).unwrap();
        assert_eq!(f.height_limit, 1);
        for t in 0..f.n_trees {
            assert_eq!(f.path_length(t, &rows[0]), 1.0);
            assert_eq!(f.path_length(t, &rows[1]), 1.0);
        }
        assert!(matches!(
            fit_isolation_forest(&rows[..1], IsolationForestParams::default()),
            Err(DetectorError::TooFewSamples { .. })
        ));
        assert_eq!(
            fit_isolation_forest(&[vec![], vec![]], IsolationForestParams::default()),
            Err(DetectorError::NoFeatures)
        );
    }

    #[test]
    fn duplicates_stay_unsplit() {
        let rows = vec![vec![3.0, 3.0]; 10];
        let f = fit_isolation_forest(&rows, IsolationForestParams::default()).unwrap();
        for tree in &f.trees {
            assert_eq!(tree, &vec![Node::Leaf { size: 10 }]);
        }
    }

    #[test]
    fn proper_binary_trees_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![(i * 37 % 101) as f64, (i % 7) as f64]).collect();
        let p = IsolationForestParams { seed: 4, ..Default::default() };
        let a = fit_isolation_forest(&rows, p).unwrap();
        let b = fit_isolation_forest(&rows, p).unwrap();
        assert_eq!(a, b);
        for tree in &a.trees {
            let mut referenced = vec![0usize; tree.len()];
            for node in tree {
                if let Node::Split { left, right, .. } = *node {
                    referenced[left] += 1;
                    referenced[right] += 1;
                }
            }
            assert_eq!(referenced[0], 0);
            assert!(referenced[1..].iter().all(|&r| r == 1));
        }
        let s = a.scores(&rows).unwrap();
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
