//! Trajectory simulation under history-dependent policies and Monte-Carlo
//! cost evaluation.
//!
//! Step order: `x_0 ~ prior`, then for each `t`: `y_t ~ Q(.|x_t)`, filter
//! update, `u_t ~ policy(I_t)`, `c_t = c(x_t, u_t)`, `x_{t+1} ~ T(.|x_t, u_t)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::belief::{correct_in_place, update_in_place, Belief};
use crate::error::{Error, Result};
use crate::model::FinitePomdp;

/// Deterministic 64-bit mixer (splitmix64 finalizer).
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of task `i` under root seed `root`: `splitmix64(root ^ splitmix64(i))`.
pub fn split_seed(root: u64, i: u64) -> u64 {
    splitmix64(root ^ splitmix64(i))
}

pub fn rng_for(root: u64, i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(root, i))
}

/// Information available to the controller at time `t`.
pub struct History<'a> {
    /// `y_0 ..= y_t`
    pub observations: &'a [usize],
    /// `u_0 .. u_{t-1}`
    pub actions: &'a [usize],
    /// Filter `pi_t` maintained alongside.
    pub belief: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Deterministic(usize),
    Uniform,
    Weights(Vec<f64>),
}

/// Admissible policy: a map from the information history to action laws.
pub trait Policy: Sync {
    fn decide(&self, history: &History<'_>) -> ActionDist;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, history: &History<'_>) -> ActionDist {
        (**self).decide(history)
    }
}

impl<P: Policy + ?Sized + Send> Policy for Box<P> {
    fn decide(&self, history: &History<'_>) -> ActionDist {
        (**self).decide(history)
    }
}

/// Actions drawn uniformly, independently over time.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn decide(&self, _: &History<'_>) -> ActionDist {
        ActionDist::Uniform
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn decide(&self, _: &History<'_>) -> ActionDist {
        ActionDist::Deterministic(self.0)
    }
}

/// Stationary policy acting on the filter through a closure.
pub struct BeliefFeedback<F>(pub F);

impl<F: Fn(&[f64]) -> usize + Sync> Policy for BeliefFeedback<F> {
    fn decide(&self, history: &History<'_>) -> ActionDist {
        ActionDist::Deterministic((self.0)(history.belief))
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if r < acc {
                return i;
            }
        }
    }
    last
}

pub(crate) fn sample_action<R: Rng + ?Sized>(rng: &mut R, dist: ActionDist, m: usize) -> Result<usize> {
    match dist {
        ActionDist::Deterministic(u) if u < m => Ok(u),
        ActionDist::Deterministic(u) => Err(Error::InvalidPolicy(format!("action {u} out of range"))),
        ActionDist::Uniform => Ok(rng.random_range(0..m)),
        ActionDist::Weights(w) => {
            if w.len() != m || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidPolicy(format!("weights {w:?}")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidPolicy(format!("weights sum to {s}")));
            }
            Ok(sample_index(rng, &w))
        }
    }
}

/// Per-step record of a simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub states: Vec<usize>,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub costs: Vec<f64>,
    /// `beliefs[t]` is the filter `pi_t` (possibly from a mismatched prior).
    pub beliefs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Columns `t,x,y,u,c,b0..b{n-1}`.
    pub fn to_csv(&self) -> String {
        let n = self.beliefs.first().map_or(0, Vec::len);
        let mut out = String::from("t,x,y,u,c");
        for i in 0..n {
            let _ = write!(out, ",b{i}");
        }
        out.push('\n');
        for t in 0..self.len() {
            let _ = write!(
                out,
                "{t},{},{},{},{}",
                self.states[t], self.observations[t], self.actions[t], self.costs[t]
            );
            for p in &self.beliefs[t] {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

/// Simulates `horizon` steps with the filter started from the true prior.
pub fn simulate(
    model: &FinitePomdp,
    policy: &dyn Policy,
    prior: &Belief,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    simulate_mismatched(model, policy, prior, prior, horizon, seed)
}

/// Hidden state drawn from `true_prior`; the controller's filter starts at
/// `filter_prior`.
pub fn simulate_mismatched(
    model: &FinitePomdp,
    policy: &dyn Policy,
    true_prior: &Belief,
    filter_prior: &Belief,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidParameter { name: "horizon", reason: "must be at least 1".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory {
        seed,
        states: Vec::with_capacity(horizon),
        observations: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon),
        beliefs: Vec::with_capacity(horizon),
    };
    let mut runner = Runner::new(model, true_prior.probs(), filter_prior.probs(), &mut rng)?;
    for _ in 0..horizon {
        let step = runner.step(policy, &mut rng)?;
        traj.states.push(step.x);
        traj.observations.push(step.y);
        traj.actions.push(step.u);
        traj.costs.push(step.c);
        traj.beliefs.push(runner.belief.clone());
        runner.advance(&mut rng);
    }
    Ok(traj)
}

/// Incremental simulator used by the Monte-Carlo loops.
pub(crate) struct Runner<'m> {
    model: &'m FinitePomdp,
    pub x: usize,
    pub belief: Vec<f64>,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    scratch: Vec<f64>,
    pending_action: Option<usize>,
}

pub(crate) struct Step {
    pub x: usize,
    pub y: usize,
    pub u: usize,
    pub c: f64,
}

impl<'m> Runner<'m> {
    /// Draws `x_0`, `y_0` and forms `pi_0`.
    pub fn new<R: Rng + ?Sized>(
        model: &'m FinitePomdp,
        true_prior: &[f64],
        filter_prior: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let x = sample_index(rng, true_prior);
        let y = sample_index(rng, model.channel_row(x));
        let mut belief = filter_prior.to_vec();
        correct_in_place(model, &mut belief, y)?;
        Ok(Self {
            model,
            x,
            belief,
            observations: vec![y],
            actions: Vec::new(),
            scratch: vec![0.0; model.n_states()],
            pending_action: None,
        })
    }

    /// Chooses `u_t` and returns the record of time `t`.
    pub fn step<R: Rng + ?Sized>(&mut self, policy: &dyn Policy, rng: &mut R) -> Result<Step> {
        let dist = policy.decide(&History {
            observations: &self.observations,
            actions: &self.actions,
            belief: &self.belief,
        });
        let u = sample_action(rng, dist, self.model.n_actions())?;
        self.pending_action = Some(u);
        Ok(Step {
            x: self.x,
            y: *self.observations.last().expect("y_0 drawn at construction"),
            u,
            c: self.model.cost(self.x, u),
        })
    }

    /// Moves to `t + 1` without updating the filter (caller decides).
    pub fn advance_raw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, usize) {
        let u = self.pending_action.take().expect("step before advance");
        self.x = sample_index(rng, self.model.transition_row(u, self.x));
        let y = sample_index(rng, self.model.channel_row(self.x));
        self.actions.push(u);
        self.observations.push(y);
        (u, y)
    }

    /// Moves to `t + 1` and updates the filter; a zero-likelihood observation
    /// (mismatched prior) leaves the previous filter in place and is reported.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let (u, y) = self.advance_raw(rng);
        let mut b = self.belief.clone();
        match update_in_place(self.model, &mut b, &mut self.scratch, u, y) {
            Ok(_) => {
                self.belief = b;
                true
            }
            Err(_) => false,
        }
    }
}

/// Monte-Carlo estimate with a `3 sigma / sqrt(trials)` half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub std_dev: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        Self { mean, half_width: 3.0 * std_dev / (n as f64).sqrt(), std_dev, trials: n }
    }

    /// Standard error of the mean.
    pub fn sigma(&self) -> f64 {
        self.std_dev / (self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMode {
    /// `E sum_t beta^t c_t`, truncated where the tail is below 1e-6.
    Discounted { beta: f64 },
    /// Mean of `c_t` over `window` steps after `burn_in` steps.
    Average { burn_in: usize, window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub trials: usize,
    pub seed: u64,
    pub mode: CostMode,
}

/// Smallest `H` with `||c|| beta^H / (1 - beta) <= tail`.
pub fn discounted_horizon(cost_sup: f64, beta: f64, tail: f64) -> usize {
    if cost_sup <= 0.0 {
        return 1;
    }
    let h = ((tail * (1.0 - beta) / cost_sup).ln() / beta.ln()).ceil();
    (h.max(1.0)) as usize
}

pub const DISCOUNT_TAIL: f64 = 1e-6;

/// Per-trial cost of `policy`; trials run in parallel and are reduced in
/// index order.
pub fn evaluate_policy_cost(
    model: &FinitePomdp,
    policy: &dyn Policy,
    prior: &Belief,
    params: McParams,
) -> Result<Estimate> {
    evaluate_mismatched_cost(model, policy, prior, prior, params)
}

/// As [`evaluate_policy_cost`] with the controller's filter started at
/// `filter_prior`. Trial `i` uses seed `split_seed(seed, i)` so two calls
/// with the same seed share random numbers.
pub fn evaluate_mismatched_cost(
    model: &FinitePomdp,
    policy: &dyn Policy,
    true_prior: &Belief,
    filter_prior: &Belief,
    params: McParams,
) -> Result<Estimate> {
    let samples = mismatched_cost_samples(model, policy, true_prior, filter_prior, params)?;
    Ok(Estimate::from_samples(&samples))
}

pub fn mismatched_cost_samples(
    model: &FinitePomdp,
    policy: &dyn Policy,
    true_prior: &Belief,
    filter_prior: &Belief,
    params: McParams,
) -> Result<Vec<f64>> {
    if params.trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1".into() });
    }
    let (horizon, skip, weight): (usize, usize, Box<dyn Fn(usize) -> f64 + Sync>) = match params.mode {
        CostMode::Discounted { beta } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParameter { name: "beta", reason: format!("{beta} outside (0,1)") });
            }
            let h = discounted_horizon(model.cost_sup(), beta, DISCOUNT_TAIL);
            (h, 0, Box::new(move |t| beta.powi(t as i32)))
        }
        CostMode::Average { burn_in, window } => {
            if window == 0 {
                return Err(Error::InvalidParameter { name: "window", reason: "must be at least 1".into() });
            }
            let w = 1.0 / window as f64;
            (burn_in + window, burn_in, Box::new(move |_| w))
        }
    };
    (0..params.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(params.seed, i as u64);
            let mut runner = Runner::new(model, true_prior.probs(), filter_prior.probs(), &mut rng)?;
            let mut total = 0.0;
            for t in 0..horizon {
                let step = runner.step(policy, &mut rng)?;
                if t >= skip {
                    total += weight(t - skip) * step.c;
                }
                if t + 1 < horizon && !runner.advance(&mut rng) {
                    return Err(Error::ZeroLikelihood { observation: *runner.observations.last().unwrap() });
                }
            }
            Ok(total)
        })
        .collect()
}
