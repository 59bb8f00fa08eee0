//! Contraction coefficients of finite stochastic kernels.

use super::hilbert_metric;
use crate::error::{Error, Result};

/// One stochastic matrix: `rows[x]` is the law `K(. | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelView {
    rows: Vec<Vec<f64>>,
}

impl KernelView {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || width == 0 {
            return Err(Error::InvalidModel("kernel must be non-empty".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, actual: row.len() });
            }
            if let Some(&v) = row.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::NegativeEntry { location: format!("kernel row {x}"), value: v });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::RowSum { row: format!("kernel row {x}"), sum });
            }
        }
        Ok(Self { rows })
    }

    pub fn n_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn n_targets(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Left action on a measure: `(mu K)(z) = sum_x mu(x) K(z | x)`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_targets()];
        for (row, &w) in self.rows.iter().zip(mu) {
            if w != 0.0 {
                for (o, &k) in out.iter_mut().zip(row) {
                    *o += w * k;
                }
            }
        }
        out
    }
}

/// Dobrushin coefficient `min_{x,y} sum_z min(K(z|x), K(z|y))`.
///
/// On a finite target set the singleton partition attains the infimum over
/// partitions: merging cells can only increase `sum_i min(K(x,A_i), K(y,A_i))`.
pub fn dobrushin(kernel: &KernelView) -> f64 {
    let n = kernel.n_sources();
    let mut best = 1.0f64;
    for x in 0..n {
        for y in x + 1..n {
            best = best.min(partition_overlap_singletons(kernel.row(x), kernel.row(y)));
        }
    }
    best
}

fn partition_overlap_singletons(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.min(*q)).sum()
}

/// `sum_i min(K(x, A_i), K(y, A_i))` for the partition given by `cell[z]`.
pub fn partition_overlap(kernel: &KernelView, x: usize, y: usize, cell: &[usize]) -> f64 {
    let cells = cell.iter().copied().max().map_or(0, |m| m + 1);
    let mut ax = vec![0.0; cells];
    let mut ay = vec![0.0; cells];
    for (z, &c) in cell.iter().enumerate() {
        ax[c] += kernel.row(x)[z];
        ay[c] += kernel.row(y)[z];
    }
    partition_overlap_singletons(&ax, &ay)
}

/// Certificate `eps * lambda(z) <= K(z|x) <= lambda(z) / eps` for all `x, z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCertificate {
    pub eps: f64,
    pub lambda: Vec<f64>,
}

impl MixingCertificate {
    pub fn holds_for(&self, kernel: &KernelView) -> bool {
        kernel.rows().iter().all(|row| {
            row.iter().zip(&self.lambda).all(|(&k, &l)| {
                let slack = 1e-12 * l.max(k);
                self.eps * l <= k + slack && k <= l / self.eps + slack
            })
        })
    }
}

/// Best product-form mixing certificate.
///
/// The singleton constraints are separable per column, so
/// `lambda(z) = sqrt(min_x K(z|x) max_x K(z|x))` and
/// `eps = min_z sqrt(min_x K(z|x) / max_x K(z|x))` (a zero column counts as 1).
pub fn mixing_constant(kernel: &KernelView) -> Result<MixingCertificate> {
    let mut eps = 1.0f64;
    let mut lambda = Vec::with_capacity(kernel.n_targets());
    for z in 0..kernel.n_targets() {
        let (lo, hi) = kernel
            .rows()
            .iter()
            .map(|r| r[z])
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi == 0.0 {
            lambda.push(0.0);
            continue;
        }
        if lo == 0.0 {
            return Err(Error::NonMixing { column: z, max: hi });
        }
        eps = eps.min((lo / hi).sqrt());
        lambda.push((lo * hi).sqrt());
    }
    let cert = MixingCertificate { eps, lambda };
    if !cert.holds_for(kernel) {
        return Err(Error::AssumptionViolated("mixing certificate failed verification".into()));
    }
    Ok(cert)
}

/// `H(K)`: the Hilbert diameter of the image of the cone, attained on pairs of
/// rows (images of the extreme points).
pub fn hilbert_diameter(kernel: &KernelView) -> f64 {
    let n = kernel.n_sources();
    let mut best = 0.0f64;
    for x in 0..n {
        for y in x + 1..n {
            best = best.max(hilbert_metric(kernel.row(x), kernel.row(y)));
        }
    }
    best
}

/// Birkhoff contraction coefficient `tanh(H(K) / 4)`; 1 when `H(K)` is infinite.
pub fn birkhoff_tau(kernel: &KernelView) -> f64 {
    let h = hilbert_diameter(kernel);
    if h.is_infinite() {
        1.0
    } else {
        (h / 4.0).tanh()
    }
}
