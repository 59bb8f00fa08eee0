//! Finite MDP solvers shared by the quantized, finite-window and learning
//! modules. Costs are minimized.

use crate::error::{Error, Result};

/// Sparse finite MDP; row `s * m + u` holds `(next, prob)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
}

impl FiniteMdp {
    /// `rows[s * m + u]` must be stochastic over `0..n_states` within 1e-10.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        let cells = n_states * n_actions;
        if rows.len() != cells {
            return Err(Error::DimensionMismatch { expected: cells, actual: rows.len() });
        }
        if cost.len() != cells {
            return Err(Error::DimensionMismatch { expected: cells, actual: cost.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n_states || !(p >= 0.0) {
                    return Err(Error::InvalidModel(format!("bad entry ({j}, {p}) in row {i}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::RowSum { row: format!("({}, {})", i / n_actions, i % n_actions), sum });
            }
        }
        Ok(Self { n_states, n_actions, rows, cost })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, u: usize) -> &[(usize, f64)] {
        &self.rows[s * self.n_actions + u]
    }

    #[inline]
    pub fn cost(&self, s: usize, u: usize) -> f64 {
        self.cost[s * self.n_actions + u]
    }

    /// `c(s,u) + beta * sum_j p(j|s,u) v(j)` for every cell.
    pub fn q_values(&self, v: &[f64], beta: f64) -> Vec<f64> {
        (0..self.n_states * self.n_actions)
            .map(|i| self.cost[i] + beta * self.rows[i].iter().map(|&(j, p)| p * v[j]).sum::<f64>())
            .collect()
    }

    fn backup(&self, v: &[f64], beta: f64, out: &mut [f64]) {
        let m = self.n_actions;
        for (s, o) in out.iter_mut().enumerate() {
            let mut best = f64::INFINITY;
            for u in 0..m {
                let i = s * m + u;
                let q = self.cost[i] + beta * self.rows[i].iter().map(|&(j, p)| p * v[j]).sum::<f64>();
                best = best.min(q);
            }
            *o = best;
        }
    }

    /// Greedy policy with smallest-index tie-break (ties within 1e-12 relative).
    pub fn greedy(&self, v: &[f64], beta: f64) -> Vec<usize> {
        let q = self.q_values(v, beta);
        q.chunks(self.n_actions).map(argmin).collect()
    }
}

pub(crate) fn argmin(q: &[f64]) -> usize {
    let mut best = 0;
    for (u, &v) in q.iter().enumerate().skip(1) {
        if v < q[best] - 1e-12 * (1.0 + q[best].abs()) {
            best = u;
        }
    }
    best
}

/// Discounted solution of a finite MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedModel {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    /// Guaranteed sup-norm distance to the exact value function.
    pub residual: f64,
    pub iterations: usize,
}

pub const DEFAULT_ITERATION_CAP: usize = 1_000_000;

/// Bellman iteration until `||V_{k+1} - V_k|| <= tol (1 - beta) / (2 beta)`,
/// which guarantees `||V_{k+1} - V*|| <= tol / 2`.
pub fn value_iterate(mdp: &FiniteMdp, beta: f64, tol: f64, cap: usize) -> Result<SolvedModel> {
    check_discount(beta)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be positive".into() });
    }
    let threshold = tol * (1.0 - beta) / (2.0 * beta);
    let mut v = vec![0.0; mdp.n_states()];
    let mut next = v.clone();
    let mut diff = f64::INFINITY;
    for it in 1..=cap {
        mdp.backup(&v, beta, &mut next);
        diff = sup_diff(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if diff <= threshold {
            let policy = mdp.greedy(&v, beta);
            return Ok(SolvedModel {
                residual: beta * diff / (1.0 - beta),
                values: v,
                policy,
                iterations: it,
            });
        }
    }
    Err(Error::IterationCap { iterations: cap, last_change: diff })
}

/// Value of a stationary deterministic policy, to sup-norm accuracy `tol / 2`.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &[usize], beta: f64, tol: f64) -> Result<Vec<f64>> {
    check_discount(beta)?;
    if policy.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch { expected: mdp.n_states(), actual: policy.len() });
    }
    let threshold = tol * (1.0 - beta) / (2.0 * beta);
    let mut v = vec![0.0; mdp.n_states()];
    let mut next = v.clone();
    let mut diff = f64::INFINITY;
    for _ in 0..DEFAULT_ITERATION_CAP {
        for (s, o) in next.iter_mut().enumerate() {
            let u = policy[s];
            *o = mdp.cost(s, u) + beta * mdp.row(s, u).iter().map(|&(j, p)| p * v[j]).sum::<f64>();
        }
        diff = sup_diff(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if diff <= threshold {
            return Ok(v);
        }
    }
    Err(Error::IterationCap { iterations: DEFAULT_ITERATION_CAP, last_change: diff })
}

/// Average-cost solution `(rho, h, policy)` of the ACOE.
#[derive(Debug, Clone, PartialEq)]
pub struct AcoeSolution {
    pub rho: f64,
    /// Relative values with `min h = 0`.
    pub h: Vec<f64>,
    pub policy: Vec<usize>,
    /// `span(T h - h)` at the returned `h`.
    pub span_residual: f64,
    pub iterations: usize,
}

/// Relative value iteration anchored at `reference`; stops when
/// `span(T h - h) <= tol`.
pub fn relative_value_iterate(
    mdp: &FiniteMdp,
    tol: f64,
    reference: usize,
    cap: usize,
) -> Result<AcoeSolution> {
    if reference >= mdp.n_states() {
        return Err(Error::InvalidParameter {
            name: "reference",
            reason: format!("{reference} is not a state index"),
        });
    }
    let mut h = vec![0.0; mdp.n_states()];
    let mut th = h.clone();
    let mut span = f64::INFINITY;
    for it in 1..=cap {
        mdp.backup(&h, 1.0, &mut th);
        let (lo, hi) = min_max(th.iter().zip(&h).map(|(a, b)| a - b));
        span = hi - lo;
        if span <= tol {
            let floor = th.iter().copied().fold(f64::INFINITY, f64::min);
            let h_final: Vec<f64> = th.iter().map(|v| v - floor).collect();
            mdp.backup(&h_final, 1.0, &mut th);
            let (lo2, hi2) = min_max(th.iter().zip(&h_final).map(|(a, b)| a - b));
            return Ok(AcoeSolution {
                rho: 0.5 * (lo2 + hi2),
                policy: mdp.greedy(&h_final, 1.0),
                h: h_final,
                span_residual: hi2 - lo2,
                iterations: it,
            });
        }
        let anchor = th[reference];
        for (dst, src) in h.iter_mut().zip(&th) {
            *dst = src - anchor;
        }
    }
    Err(Error::IterationCap { iterations: cap, last_change: span })
}

/// `max_s |h(s) + rho - min_u (c(s,u) + sum p h)|`.
pub fn acoe_residual(mdp: &FiniteMdp, sol: &AcoeSolution) -> f64 {
    let mut th = vec![0.0; mdp.n_states()];
    mdp.backup(&sol.h, 1.0, &mut th);
    th.iter().zip(&sol.h).map(|(t, h)| (h + sol.rho - t).abs()).fold(0.0, f64::max)
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_discount(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter { name: "beta", reason: format!("{beta} outside (0,1)") });
    }
    Ok(())
}
