//! Distances between probability vectors and contraction coefficients of
//! stochastic kernels.
//!
//! Total variation uses the `sup_{|f| <= 1}` normalization, so
//! `tv_distance` is the plain L1 distance and takes values in `[0, 2]`.

mod kernel;
mod transport;

pub use kernel::{
    birkhoff_tau, dobrushin, hilbert_diameter, mixing_constant, partition_overlap, KernelView,
    MixingCertificate,
};
pub use transport::{wasserstein1, wasserstein1_line};

use crate::error::{Error, Result};

/// Validated distance matrix on a finite state set.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMetric {
    n: usize,
    dist: Vec<f64>,
}

impl StateMetric {
    /// `d(x, x') = 1` for `x != x'`.
    pub fn discrete(n: usize) -> Self {
        let mut dist = vec![1.0; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        Self { n, dist }
    }

    /// Metric induced by real coordinates, `d(x, x') = |c_x - c_x'|`.
    /// Coordinates must be distinct, otherwise the result is only a pseudometric.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            if !coords[i].is_finite() {
                return Err(Error::NotAMetric(format!("coordinate {i} is not finite")));
            }
            for j in 0..n {
                dist[i * n + j] = (coords[i] - coords[j]).abs();
                if i != j && dist[i * n + j] == 0.0 {
                    return Err(Error::NotAMetric(format!(
                        "states {i} and {j} share a coordinate"
                    )));
                }
            }
        }
        Ok(Self { n, dist })
    }

    /// Explicit matrix; checked for symmetry, zero diagonal, positivity and the
    /// triangle inequality.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut dist = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NotAMetric(format!("entry ({i},{j}) = {v}")));
                }
            }
            dist.extend_from_slice(row);
        }
        let m = Self { n, dist };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::NotAMetric(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                if self.get(i, j) != self.get(j, i) {
                    return Err(Error::NotAMetric(format!("asymmetric at ({i},{j})")));
                }
                if i != j && self.get(i, j) == 0.0 {
                    return Err(Error::NotAMetric(format!("zero distance between {i} and {j}")));
                }
                for k in 0..n {
                    let direct = self.get(i, k);
                    let via = self.get(i, j) + self.get(j, k);
                    if direct > via * (1.0 + 1e-12) {
                        return Err(Error::NotAMetric(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Largest pairwise distance `D`.
    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(())
}

/// `sum_z |mu(z) - nu(z)|`.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    same_len(mu, nu)?;
    Ok(l1(mu, nu))
}

#[inline]
pub(crate) fn l1(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum()
}

/// Hilbert projective metric between non-negative vectors.
///
/// Returns 0 when both vectors vanish and `+inf` when the supports differ
/// (the vectors are not comparable).
pub fn hilbert_metric(mu: &[f64], nu: &[f64]) -> f64 {
    debug_assert_eq!(mu.len(), nu.len());
    let mut max_ratio = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    let mut support = 0usize;
    for (&a, &b) in mu.iter().zip(nu) {
        match (a > 0.0, b > 0.0) {
            (true, true) => {
                let r = a / b;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
                support += 1;
            }
            (false, false) => {}
            _ => return f64::INFINITY,
        }
    }
    if support == 0 {
        return 0.0;
    }
    (max_ratio / min_ratio).ln().max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((tv_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hilbert_examples() {
        let h = hilbert_metric(&[0.5, 0.5], &[0.25, 0.75]);
        assert!((h - 3f64.ln()).abs() < 1e-12);
        assert_eq!(hilbert_metric(&[0.2, 0.8], &[0.4, 1.6]), 0.0);
        assert_eq!(hilbert_metric(&[1.0, 0.0], &[0.5, 0.5]), f64::INFINITY);
        assert_eq!(hilbert_metric(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(hilbert_metric(&[0.0, 0.0], &[0.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn hilbert_scale_invariant() {
        let mu = [0.1, 0.2, 0.7];
        let nu = [0.3, 0.3, 0.4];
        let scaled: Vec<f64> = mu.iter().map(|v| 7.5 * v).collect();
        let nscaled: Vec<f64> = nu.iter().map(|v| 0.01 * v).collect();
        assert!((hilbert_metric(&mu, &nu) - hilbert_metric(&scaled, &nscaled)).abs() < 1e-12);
    }

    #[test]
    fn metric_validation() {
        let m = StateMetric::from_coords(&[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.diameter(), 3.0);
        assert_eq!(StateMetric::discrete(2).diameter(), 1.0);
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(matches!(StateMetric::from_matrix(&bad), Err(Error::NotAMetric(_))));
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(StateMetric::from_matrix(&asym), Err(Error::NotAMetric(_))));
        assert!(StateMetric::from_coords(&[1.0, 1.0]).is_err());
    }
}
