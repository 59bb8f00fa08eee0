//! Finite-window reduction: the state is the last `N + 1` observations and
//! `N` actions, with the pre-window history frozen to a reference prior.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::belief::{
    expected_cost, observation_law, predict, window_posterior_with_likelihood, Belief,
};
use crate::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::mdp::{self, FiniteMdp, SolvedModel};
use crate::metrics::l1;
use crate::model::FinitePomdp;
use crate::quantized::{lattice, ReferenceSolution};
use crate::simulate::{
    discounted_horizon, rng_for, ActionDist, Estimate, History, Policy, Runner, DISCOUNT_TAIL,
};

/// Mixed-radix enumeration of windows `(y_0..=y_N, u_0..u_N)`; `y_0` is the
/// most significant digit and actions follow the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowCodec {
    pub n_observations: usize,
    pub n_actions: usize,
    pub len: usize,
}

/// A decoded window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowState {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
}

impl WindowCodec {
    pub fn new(model: &FinitePomdp, len: usize) -> Self {
        Self { n_observations: model.n_observations(), n_actions: model.n_actions(), len }
    }

    /// `k^(N+1) m^N`
    pub fn count(&self) -> usize {
        self.n_observations.pow(self.len as u32 + 1) * self.n_actions.pow(self.len as u32)
    }

    pub fn encode(&self, observations: &[usize], actions: &[usize]) -> usize {
        debug_assert_eq!(observations.len(), self.len + 1);
        debug_assert_eq!(actions.len(), self.len);
        let mut idx = 0;
        for &y in observations {
            idx = idx * self.n_observations + y;
        }
        for &u in actions {
            idx = idx * self.n_actions + u;
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> WindowState {
        let mut actions = vec![0; self.len];
        for a in actions.iter_mut().rev() {
            *a = idx % self.n_actions;
            idx /= self.n_actions;
        }
        let mut observations = vec![0; self.len + 1];
        for y in observations.iter_mut().rev() {
            *y = idx % self.n_observations;
            idx /= self.n_observations;
        }
        WindowState { observations, actions }
    }

    /// Drops the oldest observation and action, appends `(u, y)`.
    pub fn shift(&self, idx: usize, u: usize, y: usize) -> usize {
        let w = self.decode(idx);
        let mut obs = w.observations[1..].to_vec();
        obs.push(y);
        let mut acts = if self.len > 0 { w.actions[1..].to_vec() } else { Vec::new() };
        if self.len > 0 {
            acts.push(u);
        }
        self.encode(&obs, &acts)
    }

    /// Index of the window ending at the latest entries of a history.
    pub fn from_history(&self, observations: &[usize], actions: &[usize]) -> Option<usize> {
        if observations.len() < self.len + 1 || actions.len() < self.len {
            return None;
        }
        Some(self.encode(
            &observations[observations.len() - self.len - 1..],
            &actions[actions.len() - self.len..],
        ))
    }
}

/// Approximate finite MDP over reachable windows.
#[derive(Debug, Clone)]
pub struct WindowModel {
    pub window: usize,
    pub ref_prior: Belief,
    pub codec: WindowCodec,
    /// Full window index of each model state.
    pub states: Vec<usize>,
    /// Model state of each full window index, `None` when excluded.
    pub index_of: Arc<Vec<Option<usize>>>,
    pub mdp: FiniteMdp,
    /// `P^{ref}(X_t in . | window)` per model state.
    pub induced: Vec<Vec<f64>>,
    /// Window likelihood under the reference prior.
    pub reach_probs: Vec<f64>,
    /// Rows that lost mass to excluded successors and were renormalized.
    pub renormalized_rows: usize,
}

pub fn build_window_model(model: &FinitePomdp, window: usize, ref_prior: &Belief) -> Result<WindowModel> {
    if window == 0 {
        return Err(Error::InvalidParameter { name: "window", reason: "must be at least 1".into() });
    }
    let codec = WindowCodec::new(model, window);
    let all: Vec<Option<(Vec<f64>, f64)>> = (0..codec.count())
        .into_par_iter()
        .map(|idx| {
            let w = codec.decode(idx);
            window_posterior_with_likelihood(model, ref_prior.probs(), &w.observations, &w.actions)
                .filter(|(_, lik)| *lik > 0.0)
        })
        .collect();
    let mut index_of = vec![None; codec.count()];
    let mut states = Vec::new();
    let mut induced = Vec::new();
    let mut reach_probs = Vec::new();
    for (idx, entry) in all.into_iter().enumerate() {
        if let Some((post, lik)) = entry {
            index_of[idx] = Some(states.len());
            states.push(idx);
            induced.push(post);
            reach_probs.push(lik);
        }
    }
    let m = model.n_actions();
    let mut rows = Vec::with_capacity(states.len() * m);
    let mut cost = Vec::with_capacity(states.len() * m);
    let mut renormalized_rows = 0;
    for (s, &idx) in states.iter().enumerate() {
        for u in 0..m {
            let p_next = observation_law(model, &predict(model, &induced[s], u));
            let mut row = Vec::new();
            let mut kept = 0.0;
            let mut total = 0.0;
            for (y, &p) in p_next.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                total += p;
                if let Some(j) = index_of[codec.shift(idx, u, y)] {
                    row.push((j, p));
                    kept += p;
                }
            }
            if kept <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "window {idx} under action {u} has no reachable successor"
                )));
            }
            if kept < total {
                renormalized_rows += 1;
                log::debug!("window {idx}, action {u}: renormalized after dropping excluded successors");
            }
            for e in &mut row {
                e.1 /= kept;
            }
            rows.push(row);
            cost.push(expected_cost(model, &induced[s], u));
        }
    }
    let mdp = FiniteMdp::new(states.len(), m, rows, cost)?;
    Ok(WindowModel {
        window,
        ref_prior: ref_prior.clone(),
        codec,
        states,
        index_of: Arc::new(index_of),
        mdp,
        induced,
        reach_probs,
        renormalized_rows,
    })
}

pub fn solve_window_model(wmodel: &WindowModel, beta: f64, tol: f64) -> Result<SolvedModel> {
    mdp::value_iterate(&wmodel.mdp, beta, tol, mdp::DEFAULT_ITERATION_CAP)
}

/// Window policy on the true system: uniform until `N + 1` observations are
/// available, then the solved action of the current window. Windows outside
/// the model get action 0; such lookups are counted.
#[derive(Debug)]
pub struct WindowPolicy {
    codec: WindowCodec,
    index_of: Arc<Vec<Option<usize>>>,
    actions: Vec<usize>,
    unseen: AtomicUsize,
}

impl WindowPolicy {
    pub fn new(codec: WindowCodec, index_of: Arc<Vec<Option<usize>>>, actions: Vec<usize>) -> Self {
        Self { codec, index_of, actions, unseen: AtomicUsize::new(0) }
    }

    pub fn from_solution(wmodel: &WindowModel, solved: &SolvedModel) -> Self {
        Self::new(wmodel.codec, Arc::clone(&wmodel.index_of), solved.policy.clone())
    }

    pub fn unseen_lookups(&self) -> usize {
        self.unseen.load(Ordering::Relaxed)
    }

    pub fn action_for_window(&self, idx: usize) -> usize {
        match self.index_of[idx] {
            Some(s) => self.actions[s],
            None => {
                self.unseen.fetch_add(1, Ordering::Relaxed);
                log::debug!("window {idx} not in the model; default action 0");
                0
            }
        }
    }
}

impl Policy for WindowPolicy {
    fn decide(&self, history: &History<'_>) -> ActionDist {
        match self.codec.from_history(history.observations, history.actions) {
            Some(idx) => ActionDist::Deterministic(self.action_for_window(idx)),
            None => ActionDist::Uniform,
        }
    }
}

/// `L^N_t` estimates for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct LntSeries {
    pub window: usize,
    pub estimates: Vec<Estimate>,
}

/// Monte-Carlo estimate of `E || P^{pi_t^-}(X_{t+N} | window) - P^{ref}(X_{t+N} | window) ||_TV`
/// under `policy`, with `X_0 ~ true_prior`. The first term is the true filter
/// at `t + N`. A zero-likelihood window under the reference scores 2.
#[allow(clippy::too_many_arguments)]
pub fn estimate_lnt(
    model: &FinitePomdp,
    window: usize,
    ref_prior: &Belief,
    true_prior: &Belief,
    policy: &dyn Policy,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<LntSeries> {
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1".into() });
    }
    let steps = horizon + window + 1;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut runner = Runner::new(model, true_prior.probs(), true_prior.probs(), &mut rng)?;
            let mut filters = Vec::with_capacity(steps);
            for tau in 0..steps {
                filters.push(runner.belief.clone());
                runner.step(policy, &mut rng)?;
                if tau + 1 < steps {
                    runner.advance(&mut rng);
                }
            }
            let mut out = Vec::with_capacity(horizon + 1);
            for t in 0..=horizon {
                let obs = &runner.observations[t..=t + window];
                let acts = &runner.actions[t..t + window];
                let tv = match window_posterior_with_likelihood(model, ref_prior.probs(), obs, acts) {
                    Some((post, _)) => l1(&filters[t + window], &post),
                    None => 2.0,
                };
                out.push(tv);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let estimates = (0..=horizon)
        .map(|t| Estimate::from_samples(&per_trial.iter().map(|r| r[t]).collect::<Vec<_>>()))
        .collect();
    Ok(LntSeries { window, estimates })
}

/// Lattice estimate of `sup_z sup_window || P^z(. | window) - P^{ref}(. | window) ||_TV`
/// over windows with positive likelihood under `z`.
pub fn estimate_lbar_tv(
    model: &FinitePomdp,
    window: usize,
    ref_prior: &Belief,
    resolution: usize,
) -> Result<f64> {
    let priors = lattice(model.n_states(), resolution)?;
    let codec = WindowCodec::new(model, window);
    let best = (0..codec.count())
        .into_par_iter()
        .map(|idx| {
            let w = codec.decode(idx);
            let reference =
                window_posterior_with_likelihood(model, ref_prior.probs(), &w.observations, &w.actions);
            let mut best = 0.0f64;
            for z in &priors {
                if let Some((post, _)) =
                    window_posterior_with_likelihood(model, z, &w.observations, &w.actions)
                {
                    let tv = reference.as_ref().map_or(2.0, |(r, _)| l1(&post, r));
                    best = best.max(tv);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Bound set for the finite-window policy.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBounds {
    /// `(2||c||/(1-beta)) sum_t beta^t L^N_t` with estimated `L^N_t` and the
    /// tail past the horizon bounded by `min(2, 2 alpha^N)`.
    pub expected_loss: f64,
    /// Same with `L^N_t <= min(2, 2 alpha^N)` for every `t` (rigorous).
    pub expected_envelope: f64,
    /// `2||c|| r^(N-1) K / (1-beta)^2` when the mixing assumption holds.
    pub hilbert: Option<f64>,
    /// Uniform bound, only when `alpha_z` is supplied.
    pub uniform: Option<f64>,
}

pub fn tv_envelope(alpha: f64, window: usize) -> f64 {
    (2.0 * alpha.powi(window as i32)).min(2.0)
}

/// `2 ||c|| r^(N-1) K / (1-beta)^2`.
pub fn hilbert_window_bound(cost_sup: f64, r: f64, k: f64, window: usize, beta: f64) -> f64 {
    2.0 * cost_sup * r.powi(window as i32 - 1) * k / (1.0 - beta).powi(2)
}

/// `2 (1 + (alpha_z - 1) beta) ||c|| Lbar / ((1-beta)^3 (1 - alpha_z beta))`.
pub fn uniform_window_bound(cost_sup: f64, lbar_tv: f64, beta: f64, alpha_z: Option<f64>) -> Result<f64> {
    let az = alpha_z.ok_or(Error::MissingAlphaZ)?;
    let factor = az * beta;
    if factor >= 1.0 {
        return Err(Error::ContractivityViolated { what: "alpha_z * beta", factor });
    }
    Ok(2.0 * (1.0 + (az - 1.0) * beta) * cost_sup * lbar_tv / ((1.0 - beta).powi(3) * (1.0 - factor)))
}

pub fn window_bounds(
    constants: &ModelConstants,
    lnt: &LntSeries,
    hilbert_k: Option<f64>,
    lbar_tv: f64,
    beta: f64,
    alpha_z: Option<f64>,
) -> Result<WindowBounds> {
    let c = constants.cost_sup;
    let n = lnt.window;
    let env = tv_envelope(constants.alpha_tv, n);
    let horizon = lnt.estimates.len();
    let head: f64 = lnt
        .estimates
        .iter()
        .enumerate()
        .map(|(t, e)| beta.powi(t as i32) * e.mean)
        .sum();
    let tail = env * beta.powi(horizon as i32) / (1.0 - beta);
    let scale = 2.0 * c / (1.0 - beta);
    let hilbert = match (constants.hilbert_r, hilbert_k) {
        (Some(r), Some(k)) => Some(hilbert_window_bound(c, r, k, n, beta)),
        _ => None,
    };
    let uniform = match alpha_z {
        Some(_) => Some(uniform_window_bound(c, lbar_tv, beta, alpha_z)?),
        None => None,
    };
    Ok(WindowBounds {
        expected_loss: scale * (head + tail),
        expected_envelope: scale * env / (1.0 - beta),
        hilbert,
        uniform,
    })
}

/// `min_u [c~(pi,u) + beta sum_y H(y|pi,u) V(q(F(pi,u,y)))]` on a reference
/// quantized solution.
pub fn reference_value(model: &FinitePomdp, reference: &ReferenceSolution, pi: &[f64], beta: f64) -> f64 {
    let grid = &reference.qmodel.grid;
    let v = &reference.solved.values;
    let b = Belief::from_normalized(pi.to_vec());
    (0..model.n_actions())
        .map(|u| {
            let future: f64 = crate::belief::belief_mdp_step(model, &b, u)
                .atoms
                .iter()
                .map(|a| a.weight * v[grid.quantize(a.next.probs())])
                .sum();
            expected_cost(model, pi, u) + beta * future
        })
        .fold(f64::INFINITY, f64::min)
}

/// Monte-Carlo estimate of `E[J(z_N, policy) - J*(z_N)]` where the first `N`
/// steps are driven by `policy` (uniform exploration for a window policy), and
/// the cost is accumulated from time `N`.
#[allow(clippy::too_many_arguments)]
pub fn measure_window_suboptimality(
    model: &FinitePomdp,
    window: usize,
    policy: &dyn Policy,
    true_prior: &Belief,
    reference: &ReferenceSolution,
    beta: f64,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1".into() });
    }
    let horizon = discounted_horizon(model.cost_sup(), beta, DISCOUNT_TAIL);
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut runner = Runner::new(model, true_prior.probs(), true_prior.probs(), &mut rng)?;
            let mut optimum = 0.0;
            let mut total = 0.0;
            for t in 0..window + horizon {
                if t == window {
                    optimum = reference_value(model, reference, &runner.belief, beta);
                }
                let step = runner.step(policy, &mut rng)?;
                if t >= window {
                    total += beta.powi((t - window) as i32) * step.c;
                }
                runner.advance(&mut rng);
            }
            Ok(total - optimum)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}
