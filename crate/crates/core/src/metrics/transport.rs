//! Exact first-order Wasserstein distance on a finite metric space.
//!
//! The transportation problem is solved as a min-cost flow with successive
//! shortest paths (Dijkstra on reduced costs). Only the signed difference
//! `mu - nu` matters for a metric cost, so shared mass is cancelled first.

use super::{same_len, StateMetric};
use crate::error::{Error, Result};

const CAP_EPS: f64 = 1e-15;

/// Exact `W1(mu, nu)` for the given metric.
pub fn wasserstein1(mu: &[f64], nu: &[f64], metric: &StateMetric) -> Result<f64> {
    same_len(mu, nu)?;
    if mu.len() != metric.len() {
        return Err(Error::DimensionMismatch { expected: metric.len(), actual: mu.len() });
    }
    let n = mu.len();
    let supply: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| (a - b).max(0.0)).collect();
    let demand: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| (b - a).max(0.0)).collect();
    let mut flow = TransportFlow::new(n, supply, demand);
    flow.solve(metric);
    Ok(flow.cost(metric))
}

/// `W1` for measures on the real line at `coords`, via the CDF formula
/// `sum_k |F_mu(x_k) - F_nu(x_k)| (x_{k+1} - x_k)` over sorted coordinates.
pub fn wasserstein1_line(mu: &[f64], nu: &[f64], coords: &[f64]) -> Result<f64> {
    same_len(mu, nu)?;
    same_len(mu, coords)?;
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for w in order.windows(2) {
        cdf_gap += mu[w[0]] - nu[w[0]];
        total += cdf_gap.abs() * (coords[w[1]] - coords[w[0]]);
    }
    Ok(total)
}

struct TransportFlow {
    n: usize,
    // Residual supply / demand on the super-source and super-sink arcs.
    supply_left: Vec<f64>,
    demand_left: Vec<f64>,
    flow: Vec<f64>,
    potential: Vec<f64>,
}

// Node layout: states 0..n, super source n, super sink n + 1.
impl TransportFlow {
    fn new(n: usize, supply: Vec<f64>, demand: Vec<f64>) -> Self {
        Self {
            n,
            supply_left: supply,
            demand_left: demand,
            flow: vec![0.0; n * n],
            potential: vec![0.0; n + 2],
        }
    }

    fn solve(&mut self, metric: &StateMetric) {
        let n = self.n;
        let (src, sink) = (n, n + 1);
        let mut dist = vec![f64::INFINITY; n + 2];
        let mut prev = vec![(usize::MAX, false); n + 2];
        let mut done = vec![false; n + 2];
        loop {
            if self.supply_left.iter().all(|&s| s <= CAP_EPS) {
                break;
            }
            dist.fill(f64::INFINITY);
            prev.fill((usize::MAX, false));
            done.fill(false);
            dist[src] = 0.0;
            loop {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for v in 0..n + 2 {
                    if !done[v] && dist[v] < best {
                        best = dist[v];
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                if u == sink {
                    continue;
                }
                if u == src {
                    for i in 0..n {
                        if self.supply_left[i] > CAP_EPS {
                            self.relax(&mut dist, &mut prev, src, i, 0.0, false);
                        }
                    }
                    continue;
                }
                for j in 0..n {
                    if j != u {
                        self.relax(&mut dist, &mut prev, u, j, metric.get(u, j), false);
                        if self.flow[j * n + u] > CAP_EPS {
                            self.relax(&mut dist, &mut prev, u, j, -metric.get(j, u), true);
                        }
                    }
                }
                if self.demand_left[u] > CAP_EPS {
                    self.relax(&mut dist, &mut prev, u, sink, 0.0, false);
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n + 2 {
                self.potential[v] += dist[v].min(dist[sink]);
            }
            self.augment(&prev);
        }
    }

    fn relax(
        &self,
        dist: &mut [f64],
        prev: &mut [(usize, bool)],
        u: usize,
        v: usize,
        cost: f64,
        reverse: bool,
    ) {
        let reduced = (cost + self.potential[u] - self.potential[v]).max(0.0);
        let cand = dist[u] + reduced;
        if cand < dist[v] {
            dist[v] = cand;
            prev[v] = (u, reverse);
        }
    }

    fn augment(&mut self, prev: &[(usize, bool)]) {
        let n = self.n;
        let (src, sink) = (n, n + 1);
        // hops as (from, to, reverse), collected sink -> src
        let mut hops = Vec::new();
        let mut v = sink;
        while v != src {
            let (u, reverse) = prev[v];
            hops.push((u, v, reverse));
            v = u;
        }
        hops.reverse();
        let first = hops[0].1;
        let last = hops[hops.len() - 1].0;
        let inner = &hops[1..hops.len() - 1];
        let mut amount = self.supply_left[first].min(self.demand_left[last]);
        for &(u, v, reverse) in inner {
            if reverse {
                amount = amount.min(self.flow[v * n + u]);
            }
        }
        self.supply_left[first] -= amount;
        self.demand_left[last] -= amount;
        for &(u, v, reverse) in inner {
            if reverse {
                self.flow[v * n + u] -= amount;
            } else {
                self.flow[u * n + v] += amount;
            }
        }
    }

    fn cost(&self, metric: &StateMetric) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += self.flow[i * n + j] * metric.get(i, j);
            }
        }
        total
    }
}
