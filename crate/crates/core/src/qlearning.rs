//! Tabular Q-learning on finite-alphabet state processes that need not be
//! Markov, with finite-window and quantized-belief instantiations and the
//! limit-model oracle whose fixed point the iterates approach.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::belief::{correct_in_place, update_in_place, Belief};
use crate::error::{Error, Result};
use crate::markov::stationary_distribution;
use crate::mdp::{argmin, value_iterate, FiniteMdp};
use crate::model::FinitePomdp;
use crate::quantized::{BeliefGrid, GridPolicy};
use crate::simulate::{rng_for, sample_index};
use crate::window::{WindowCodec, WindowPolicy};

/// A controlled process observed through a finite state alphabet.
pub trait StateProcess {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn state(&self) -> usize;
    /// Applies `u`; returns the incurred cost and the next observed state.
    fn step(&mut self, u: usize, rng: &mut ChaCha8Rng) -> (f64, usize);
}

/// `S_t` = last `N + 1` observations and `N` actions; `C_t = c(X_t, U_t)`.
#[derive(Debug, Clone)]
pub struct WindowEnv<'a> {
    model: &'a FinitePomdp,
    codec: WindowCodec,
    x: usize,
    s: usize,
}

impl<'a> WindowEnv<'a> {
    /// Draws `X_0` from `prior` and fills the first window under uniform actions.
    pub fn new(model: &'a FinitePomdp, window: usize, prior: &Belief, rng: &mut ChaCha8Rng) -> Self {
        let codec = WindowCodec::new(model, window);
        let mut x = sample_index(rng, prior.probs());
        let mut obs = vec![sample_index(rng, model.channel_row(x))];
        let mut acts = Vec::with_capacity(window);
        for _ in 0..window {
            let u = rng.random_range(0..model.n_actions());
            x = sample_index(rng, model.transition_row(u, x));
            obs.push(sample_index(rng, model.channel_row(x)));
            acts.push(u);
        }
        Self { model, codec, x, s: codec.encode(&obs, &acts) }
    }

    pub fn codec(&self) -> WindowCodec {
        self.codec
    }

    pub fn hidden_state(&self) -> usize {
        self.x
    }
}

impl StateProcess for WindowEnv<'_> {
    fn n_states(&self) -> usize {
        self.codec.count()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn state(&self) -> usize {
        self.s
    }

    fn step(&mut self, u: usize, rng: &mut ChaCha8Rng) -> (f64, usize) {
        let c = self.model.cost(self.x, u);
        self.x = sample_index(rng, self.model.transition_row(u, self.x));
        let y = sample_index(rng, self.model.channel_row(self.x));
        self.s = self.codec.shift(self.s, u, y);
        (c, self.s)
    }
}

/// `S_t` = grid bin of the exact filter `pi_t`; the filter runs inside the
/// adapter and the learner sees only the bin and the cost.
#[derive(Debug, Clone)]
pub struct BeliefEnv<'a> {
    model: &'a FinitePomdp,
    grid: Arc<BeliefGrid>,
    x: usize,
    pi: Vec<f64>,
    scratch: Vec<f64>,
    s: usize,
}

impl<'a> BeliefEnv<'a> {
    /// `X_0 ~ prior`, `pi_0 = correct(prior, y_0)`.
    pub fn new(model: &'a FinitePomdp, grid: Arc<BeliefGrid>, prior: &Belief, rng: &mut ChaCha8Rng) -> Self {
        let x = sample_index(rng, prior.probs());
        let y = sample_index(rng, model.channel_row(x));
        let mut pi = prior.probs().to_vec();
        correct_in_place(model, &mut pi, y).expect("observation drawn from a state in the prior support");
        let s = grid.quantize(&pi);
        Self { model, grid, x, scratch: vec![0.0; pi.len()], pi, s }
    }

    pub fn belief(&self) -> &[f64] {
        &self.pi
    }
}

impl StateProcess for BeliefEnv<'_> {
    fn n_states(&self) -> usize {
        self.grid.len()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn state(&self) -> usize {
        self.s
    }

    fn step(&mut self, u: usize, rng: &mut ChaCha8Rng) -> (f64, usize) {
        let c = self.model.cost(self.x, u);
        self.x = sample_index(rng, self.model.transition_row(u, self.x));
        let y = sample_index(rng, self.model.channel_row(self.x));
        update_in_place(self.model, &mut self.pi, &mut self.scratch, u, y)
            .expect("true filter never sees a zero-likelihood observation");
        self.s = self.grid.quantize(&self.pi);
        (c, self.s)
    }
}

/// Q-values and visit counts, indexed `s * m + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    pub q: Vec<f64>,
    pub visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, q: vec![0.0; n_states * n_actions], visits: vec![0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, u: usize) -> f64 {
        self.q[s * self.n_actions + u]
    }

    pub fn value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn state_visits(&self, s: usize) -> u64 {
        self.visits[s * self.n_actions..(s + 1) * self.n_actions].iter().sum()
    }

    /// `alpha = 1 / (1 + n)` where `n` counts visits including this one.
    /// Returns the rate used.
    pub fn update(&mut self, s: usize, u: usize, cost: f64, next: usize, beta: f64) -> f64 {
        let target = cost + beta * self.value(next);
        let i = s * self.n_actions + u;
        self.visits[i] += 1;
        let alpha = 1.0 / (1.0 + self.visits[i] as f64);
        self.q[i] = (1.0 - alpha) * self.q[i] + alpha * target;
        alpha
    }

    /// Greedy action per state, smallest index among near-ties. Unvisited
    /// states get action 0.
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| if self.state_visits(s) == 0 { 0 } else { argmin(self.row(s)) })
            .collect()
    }

    pub fn unvisited(&self) -> Vec<(usize, usize)> {
        (0..self.visits.len())
            .filter(|&i| self.visits[i] == 0)
            .map(|i| (i / self.n_actions, i % self.n_actions))
            .collect()
    }

    /// `max |Q(s,u) - other(s,u)|` over cells where `mask` holds.
    pub fn sup_distance(&self, other: &[f64], mask: impl Fn(usize) -> bool) -> f64 {
        self.q
            .iter()
            .zip(other)
            .enumerate()
            .filter(|(i, _)| mask(i / self.n_actions))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// `||Q_end - Q_start||_inf` over the epoch.
    pub sup_change: f64,
    /// `||Q - Q*||_inf` on reachable states, when an oracle is supplied.
    pub oracle_error: Option<f64>,
    pub visit_min: u64,
    pub visit_median: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QRun {
    pub table: QTable,
    pub log: Vec<EpochLog>,
    /// Cells never updated.
    pub unvisited: Vec<(usize, usize)>,
}

impl QRun {
    /// Columns `epoch,sup_change,oracle_error,visit_min,visit_median`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,sup_change,oracle_error,visit_min,visit_median\n");
        for e in &self.log {
            let o = e.oracle_error.map_or(String::from("NA"), |v| format!("{v:.12e}"));
            let _ = writeln!(out, "{},{:.12e},{o},{},{}", e.epoch, e.sup_change, e.visit_min, e.visit_median);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParams {
    pub beta: f64,
    pub steps: u64,
    pub epochs: usize,
    pub seed: u64,
}

/// One sequential run under uniform exploration. The environment is built
/// from the run's random stream so the whole run is a function of `seed`.
pub fn run_q_learning<E: StateProcess>(
    make_env: impl FnOnce(&mut ChaCha8Rng) -> E,
    params: QParams,
    oracle: Option<&LimitModel>,
) -> Result<QRun> {
    if !(params.beta > 0.0 && params.beta < 1.0) {
        return Err(Error::InvalidParameter { name: "beta", reason: format!("{} not in (0, 1)", params.beta) });
    }
    let mut rng = rng_for(params.seed, 0);
    let mut env = make_env(&mut rng);
    let (ns, m) = (env.n_states(), env.n_actions());
    let mut table = QTable::new(ns, m);
    let epochs = params.epochs.max(1) as u64;
    let mut log = Vec::with_capacity(epochs as usize);
    let mut start = table.q.clone();
    let mut s = env.state();
    for t in 0..params.steps {
        let u = rng.random_range(0..m);
        let (c, next) = env.step(u, &mut rng);
        table.update(s, u, c, next, params.beta);
        s = next;
        let done = t + 1;
        if done % (params.steps / epochs).max(1) == 0 || done == params.steps {
            let mut v = table.visits.clone();
            v.sort_unstable();
            log.push(EpochLog {
                epoch: log.len(),
                sup_change: table.sup_distance(&start, |_| true),
                oracle_error: oracle.map(|o| table.sup_distance(&o.q_star, |s| o.reachable[s])),
                visit_min: v[0],
                visit_median: v[v.len() / 2],
            });
            start.clone_from(&table.q);
        }
    }
    let unvisited = table.unvisited();
    if !unvisited.is_empty() {
        log::info!("{} state-action cells never visited", unvisited.len());
    }
    Ok(QRun { table, log, unvisited })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSource {
    Analytic,
    Empirical,
}

/// `C*`, `P*` and the fixed point `Q*` of the averaged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitModel {
    pub n_actions: usize,
    pub c_star: Vec<f64>,
    /// Rows `s * m + u`.
    pub p_star: Vec<Vec<f64>>,
    pub q_star: Vec<f64>,
    /// States carrying stationary (or empirical) mass. Others hold a
    /// self-loop with zero cost.
    pub reachable: Vec<bool>,
    /// `max |Q* - (C* + beta P* min Q*)|`
    pub residual: f64,
    pub source: LimitSource,
}

fn finish_limit(
    n_actions: usize,
    c_star: Vec<f64>,
    p_star: Vec<Vec<f64>>,
    reachable: Vec<bool>,
    beta: f64,
    source: LimitSource,
) -> Result<LimitModel> {
    let ns = reachable.len();
    let rows = p_star
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (j, *p)).collect())
        .collect();
    let mdp = FiniteMdp::new(ns, n_actions, rows, c_star.clone())?;
    let solved = value_iterate(&mdp, beta, 1e-13, crate::mdp::DEFAULT_ITERATION_CAP)?;
    let q_star = mdp.q_values(&solved.values, beta);
    let v: Vec<f64> = (0..ns)
        .map(|s| q_star[s * n_actions..(s + 1) * n_actions].iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let residual = mdp
        .q_values(&v, beta)
        .iter()
        .zip(&q_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(LimitModel { n_actions, c_star, p_star, q_star, reachable, residual, source })
}

/// Exact limit model of the window process: stationary law of the joint
/// chain `(X_t, S_t)` under uniform exploration, then `C*(s,u) = E[c(X,u)|S=s]`
/// and `P*(s'|s,u)` from that law.
pub fn compute_limit_model(model: &FinitePomdp, window: usize, beta: f64) -> Result<LimitModel> {
    let codec = WindowCodec::new(model, window);
    let (n, m, k) = (model.n_states(), model.n_actions(), model.n_observations());
    let ns = codec.count();
    let size = n * ns;
    if size > 20_000 {
        return Err(Error::GridTooLarge { size: size as u128, cap: 20_000 });
    }
    let succ: Vec<usize> = (0..ns * m * k).map(|i| codec.shift(i / (m * k), (i / k) % m, i % k)).collect();
    let mut p = vec![vec![0.0; size]; size];
    for x in 0..n {
        for s in 0..ns {
            let row = &mut p[x * ns + s];
            for u in 0..m {
                for x2 in 0..n {
                    let t = model.transition(u, x, x2) / m as f64;
                    if t == 0.0 {
                        continue;
                    }
                    for y in 0..k {
                        row[x2 * ns + succ[(s * m + u) * k + y]] += t * model.channel(x2, y);
                    }
                }
            }
        }
    }
    let nu = stationary_distribution(&p)?;
    let mass: Vec<f64> = (0..ns).map(|s| (0..n).map(|x| nu[x * ns + s]).sum()).collect();
    let reachable: Vec<bool> = mass.iter().map(|w| *w > 1e-14).collect();
    let mut c_star = vec![0.0; ns * m];
    let mut p_star = vec![vec![0.0; ns]; ns * m];
    for s in 0..ns {
        for u in 0..m {
            let i = s * m + u;
            if !reachable[s] {
                p_star[i][s] = 1.0;
                continue;
            }
            for x in 0..n {
                let w = nu[x * ns + s] / mass[s];
                if w == 0.0 {
                    continue;
                }
                c_star[i] += w * model.cost(x, u);
                for x2 in 0..n {
                    let t = w * model.transition(u, x, x2);
                    for y in 0..k {
                        p_star[i][succ[i * k + y]] += t * model.channel(x2, y);
                    }
                }
            }
            let sum: f64 = p_star[i].iter().sum();
            p_star[i].iter_mut().for_each(|v| *v /= sum);
        }
    }
    finish_limit(m, c_star, p_star, reachable, beta, LimitSource::Analytic)
}

/// Empirical frequencies of a process under uniform exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessStatistics {
    pub n_states: usize,
    pub n_actions: usize,
    /// Visits per cell `s * m + u`.
    pub counts: Vec<u64>,
    pub cost_sums: Vec<f64>,
    /// Transition counts per cell.
    pub transitions: Vec<Vec<u64>>,
}

pub fn collect_statistics<E: StateProcess>(
    make_env: impl FnOnce(&mut ChaCha8Rng) -> E,
    steps: u64,
    seed: u64,
) -> ProcessStatistics {
    let mut rng = rng_for(seed, 0);
    let mut env = make_env(&mut rng);
    let (ns, m) = (env.n_states(), env.n_actions());
    let mut stats = ProcessStatistics {
        n_states: ns,
        n_actions: m,
        counts: vec![0; ns * m],
        cost_sums: vec![0.0; ns * m],
        transitions: vec![vec![0; ns]; ns * m],
    };
    let mut s = env.state();
    for _ in 0..steps {
        let u = rng.random_range(0..m);
        let (c, next) = env.step(u, &mut rng);
        let i = s * m + u;
        stats.counts[i] += 1;
        stats.cost_sums[i] += c;
        stats.transitions[i][next] += 1;
        s = next;
    }
    stats
}

/// Limit model from empirical frequencies. States never visited are marked
/// unreachable; a visited state with a cell below `floor` is an error.
pub fn empirical_limit_model(stats: &ProcessStatistics, floor: u64, beta: f64) -> Result<LimitModel> {
    let (ns, m) = (stats.n_states, stats.n_actions);
    let mut reachable = vec![false; ns];
    let mut c_star = vec![0.0; ns * m];
    let mut p_star = vec![vec![0.0; ns]; ns * m];
    for s in 0..ns {
        let cells = &stats.counts[s * m..(s + 1) * m];
        if cells.iter().all(|c| *c == 0) {
            for u in 0..m {
                p_star[s * m + u][s] = 1.0;
            }
            continue;
        }
        if let Some(u) = cells.iter().position(|c| *c < floor) {
            return Err(Error::ErgodicityViolation(format!(
                "state {s} action {u} visited {} times, below the floor {floor}",
                cells[u]
            )));
        }
        reachable[s] = true;
        for u in 0..m {
            let i = s * m + u;
            let cnt = stats.counts[i] as f64;
            c_star[i] = stats.cost_sums[i] / cnt;
            for (j, t) in stats.transitions[i].iter().enumerate() {
                p_star[i][j] = *t as f64 / cnt;
            }
        }
    }
    finish_limit(m, c_star, p_star, reachable, beta, LimitSource::Empirical)
}

/// Greedy window policy from a learned table.
pub fn window_policy_from_q(table: &QTable, codec: WindowCodec) -> WindowPolicy {
    let index_of: Vec<Option<usize>> =
        (0..table.n_states()).map(|s| (table.state_visits(s) > 0).then_some(s)).collect();
    let unvisited = index_of.iter().filter(|s| s.is_none()).count();
    if unvisited > 0 {
        log::info!("{unvisited} windows never visited; the policy falls back to action 0 there");
    }
    WindowPolicy::new(codec, Arc::new(index_of), table.greedy())
}

/// Greedy grid policy from a learned table.
pub fn grid_policy_from_q(table: &QTable, grid: Arc<BeliefGrid>) -> GridPolicy {
    GridPolicy::new(grid, table.greedy())
}
