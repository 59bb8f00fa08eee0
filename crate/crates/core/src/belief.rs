//! Exact Bayes filter and the belief-MDP kernel.
//!
//! Time convention: `pi_0 = correct(prior, y_0)` and
//! `pi_{t+1} = correct(predict(pi_t, u_t), y_{t+1})`.

use crate::error::{Error, Result};
use crate::model::FinitePomdp;

const SUM_TOL: f64 = 1e-12;

/// Probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty vector".into()));
        }
        if let Some(v) = probs.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidBelief(format!("entry {v} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Wraps a vector produced by normalization inside this crate.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut p = vec![0.0; n];
        p[x] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i)
    }

    /// `supp(self)` contained in `supp(other)`.
    pub fn abs_continuous_wrt(&self, other: &Belief) -> std::result::Result<(), usize> {
        match self.0.iter().zip(&other.0).position(|(a, b)| *a > 0.0 && *b == 0.0) {
            Some(x) => Err(x),
            None => Ok(()),
        }
    }
}

impl AsRef<[f64]> for Belief {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Predicted law of the next state, `sum_x pi(x) T(. | x, u)`.
pub fn predict(model: &FinitePomdp, pi: &[f64], u: usize) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states()];
    predict_into(model, pi, u, &mut out);
    out
}

pub fn predict_into(model: &FinitePomdp, pi: &[f64], u: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (x, &w) in pi.iter().enumerate() {
        if w != 0.0 {
            for (o, &t) in out.iter_mut().zip(model.transition_row(u, x)) {
                *o += w * t;
            }
        }
    }
}

/// Multiplies by `Q(y | .)` and normalizes in place; returns the likelihood
/// `sum_x Q(y|x) p(x)`. On zero likelihood `p` holds the unnormalized zeros.
pub fn correct_in_place(model: &FinitePomdp, p: &mut [f64], y: usize) -> Result<f64> {
    let mut norm = 0.0;
    for (x, v) in p.iter_mut().enumerate() {
        *v *= model.channel(x, y);
        norm += *v;
    }
    if !(norm > 0.0) {
        return Err(Error::ZeroLikelihood { observation: y });
    }
    for v in p.iter_mut() {
        *v /= norm;
    }
    Ok(norm)
}

/// Conditions a prior on the observation emitted by the current state.
pub fn correct(model: &FinitePomdp, prior: &[f64], y: usize) -> Result<Belief> {
    let mut p = prior.to_vec();
    correct_in_place(model, &mut p, y)?;
    Ok(Belief::from_normalized(p))
}

/// `F(pi, u, y)`.
pub fn belief_update(model: &FinitePomdp, pi: &Belief, u: usize, y: usize) -> Result<Belief> {
    let mut p = predict(model, pi.probs(), u);
    correct_in_place(model, &mut p, y)?;
    Ok(Belief::from_normalized(p))
}

/// Same as [`belief_update`] on raw buffers; `scratch` has length `n`.
pub fn update_in_place(
    model: &FinitePomdp,
    pi: &mut [f64],
    scratch: &mut [f64],
    u: usize,
    y: usize,
) -> Result<f64> {
    predict_into(model, pi, u, scratch);
    let lik = correct_in_place(model, scratch, y)?;
    pi.copy_from_slice(scratch);
    Ok(lik)
}

/// `H(y | pi, u) = sum_{x'} Q(y|x') (pi T_u)(x')`.
pub fn observation_law(model: &FinitePomdp, predicted: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_observations()];
    for (x, &w) in predicted.iter().enumerate() {
        if w != 0.0 {
            for (o, &q) in out.iter_mut().zip(model.channel_row(x)) {
                *o += w * q;
            }
        }
    }
    out
}

/// One atom of the belief-MDP kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefAtom {
    pub observation: usize,
    pub weight: f64,
    pub next: Belief,
}

/// `eta(. | pi, u)` as a finitely supported measure.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTransition {
    pub atoms: Vec<BeliefAtom>,
}

pub fn belief_mdp_step(model: &FinitePomdp, pi: &Belief, u: usize) -> BeliefTransition {
    let pred = predict(model, pi.probs(), u);
    let atoms = (0..model.n_observations())
        .filter_map(|y| {
            let mut p = pred.clone();
            let weight = correct_in_place(model, &mut p, y).ok()?;
            Some(BeliefAtom { observation: y, weight, next: Belief::from_normalized(p) })
        })
        .collect();
    BeliefTransition { atoms }
}

/// `c~(pi, u) = sum_x c(x, u) pi(x)`.
pub fn expected_cost(model: &FinitePomdp, pi: &[f64], u: usize) -> f64 {
    pi.iter().enumerate().map(|(x, p)| p * model.cost(x, u)).sum()
}

/// Posterior of the last state given a full information window:
/// `prior` is the law of the state emitting `observations[0]`, and
/// `actions.len() + 1 == observations.len()`.
pub fn window_posterior(
    model: &FinitePomdp,
    prior: &[f64],
    observations: &[usize],
    actions: &[usize],
) -> Result<Belief> {
    assert_eq!(observations.len(), actions.len() + 1, "window shape");
    let mut pi = prior.to_vec();
    correct_in_place(model, &mut pi, observations[0])?;
    let mut scratch = vec![0.0; pi.len()];
    for (&u, &y) in actions.iter().zip(&observations[1..]) {
        update_in_place(model, &mut pi, &mut scratch, u, y)?;
    }
    Ok(Belief::from_normalized(pi))
}

/// Like [`window_posterior`] but also returns `P(y_{0..N} | u_{0..N-1})` under `prior`.
pub fn window_posterior_with_likelihood(
    model: &FinitePomdp,
    prior: &[f64],
    observations: &[usize],
    actions: &[usize],
) -> Option<(Vec<f64>, f64)> {
    let mut pi = prior.to_vec();
    let mut lik = correct_in_place(model, &mut pi, observations[0]).ok()?;
    let mut scratch = vec![0.0; pi.len()];
    for (&u, &y) in actions.iter().zip(&observations[1..]) {
        lik *= update_in_place(model, &mut pi, &mut scratch, u, y).ok()?;
    }
    Some((pi, lik))
}
