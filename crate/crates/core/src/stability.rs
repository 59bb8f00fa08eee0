//! Filter-stability experiments: two filters on one data stream, the
//! theoretical TV and Hilbert envelopes, the observability rank test, and
//! robustness of a belief-feedback controller to its prior.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::belief::{correct_in_place, update_in_place, Belief};
use crate::constants::{hilbert_k, hilbert_r};
use crate::error::{Error, Result};
use crate::metrics::{hilbert_diameter, hilbert_metric, l1};
use crate::model::FinitePomdp;
use crate::simulate::{mismatched_cost_samples, rng_for, CostMode, Estimate, McParams, Policy, Runner};

const TWO_OVER_LN3: f64 = 1.820_478_453_253_674_9;

/// One row of a stability curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub t: usize,
    pub tv: Estimate,
    pub weak: Estimate,
    /// `min(2, 2 alpha^t)`
    pub tv_envelope: f64,
    /// Hilbert-metric envelope, when the mixing assumption holds.
    pub hilbert_envelope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub rows: Vec<CurveRow>,
    /// Trials in which the wrong-prior filter met a zero-likelihood observation.
    pub broken_trials: usize,
}

impl StabilityCurve {
    /// Columns `t,tv_mean,tv_half_width,weak_mean,weak_half_width,tv_envelope,hilbert_envelope`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("t,tv_mean,tv_half_width,weak_mean,weak_half_width,tv_envelope,hilbert_envelope\n");
        for r in &self.rows {
            let h = r.hilbert_envelope.map_or(String::from("NA"), |v| format!("{v:.12e}"));
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{h}",
                r.t, r.tv.mean, r.tv.half_width, r.weak.mean, r.weak.half_width, r.tv_envelope
            );
        }
        out
    }
}

/// Rigorous Hilbert envelope on `||pi_t^mu - pi_t^nu||_TV`: at `t >= 1` the
/// filters lie within `H = max_u H(T_u)` and then contract by `r` per step;
/// comparable priors also give `r^t h(mu, nu)`.
pub fn hilbert_stability_envelope(model: &FinitePomdp, mu: &Belief, nu: &Belief, t: usize) -> Option<f64> {
    let r = hilbert_r(model).ok()?;
    let h0 = hilbert_metric(mu.probs(), nu.probs());
    let mut h = if h0.is_finite() { r.powi(t as i32) * h0 } else { f64::INFINITY };
    if t >= 1 {
        let diam = (0..model.n_actions())
            .map(|u| hilbert_diameter(&model.transition_kernel(u)))
            .fold(0.0, f64::max);
        h = h.min(r.powi(t as i32 - 1) * diam);
    }
    Some((TWO_OVER_LN3 * h).min(2.0))
}

/// Two filters, started at `mu` (truth) and `nu`, driven by the same data.
///
/// The policy reads the `mu`-filter. A zero-likelihood event in the
/// `nu`-filter scores TV 2 (and the largest weak gap) from then on.
#[allow(clippy::too_many_arguments)]
pub fn run_two_filter(
    model: &FinitePomdp,
    mu: &Belief,
    nu: &Belief,
    policy: &dyn Policy,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<StabilityCurve> {
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1".into() });
    }
    mu.abs_continuous_wrt(nu).map_err(|state| Error::AbsoluteContinuityViolation { state })?;
    let n = model.n_states();
    let coords: Vec<f64> = match model.coords() {
        Some(c) => c.to_vec(),
        None => (0..n).map(|x| x as f64).collect(),
    };
    let coord_span = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - coords.iter().copied().fold(f64::INFINITY, f64::min);
    let weak_max = coord_span.max(1.0);
    let weak_gap = |a: &[f64], b: &[f64]| -> f64 {
        let ind = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let id: f64 = a.iter().zip(b).zip(&coords).map(|((p, q), c)| c * (p - q)).sum();
        ind.max(id.abs())
    };
    let per_trial: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut runner = Runner::new(model, mu.probs(), mu.probs(), &mut rng)?;
            let mut wrong = nu.probs().to_vec();
            let mut alive = correct_in_place(model, &mut wrong, runner.observations[0]).is_ok();
            let broken_any = !alive;
            let mut scratch = vec![0.0; n];
            let mut tv = Vec::with_capacity(horizon + 1);
            let mut weak = Vec::with_capacity(horizon + 1);
            let mut broken = broken_any;
            for t in 0..=horizon {
                if alive {
                    tv.push(l1(&runner.belief, &wrong));
                    weak.push(weak_gap(&runner.belief, &wrong));
                } else {
                    tv.push(2.0);
                    weak.push(weak_max);
                }
                if t == horizon {
                    break;
                }
                runner.step(policy, &mut rng)?;
                runner.advance(&mut rng);
                if alive {
                    let (u, y) = (*runner.actions.last().unwrap(), *runner.observations.last().unwrap());
                    if update_in_place(model, &mut wrong, &mut scratch, u, y).is_err() {
                        alive = false;
                        broken = true;
                    }
                }
            }
            Ok((tv, weak, broken))
        })
        .collect::<Result<_>>()?;
    let alpha = compute_constants_alpha(model);
    let rows = (0..=horizon)
        .map(|t| CurveRow {
            t,
            tv: Estimate::from_samples(&per_trial.iter().map(|r| r.0[t]).collect::<Vec<_>>()),
            weak: Estimate::from_samples(&per_trial.iter().map(|r| r.1[t]).collect::<Vec<_>>()),
            tv_envelope: (2.0 * alpha.powi(t as i32)).min(2.0),
            hilbert_envelope: hilbert_stability_envelope(model, mu, nu, t),
        })
        .collect();
    Ok(StabilityCurve { rows, broken_trials: per_trial.iter().filter(|r| r.2).count() })
}

fn compute_constants_alpha(model: &FinitePomdp) -> f64 {
    use crate::metrics::dobrushin;
    let dq = dobrushin(&model.channel_kernel());
    let dt = (0..model.n_actions())
        .map(|u| dobrushin(&model.transition_kernel(u)))
        .fold(f64::INFINITY, f64::min);
    (1.0 - dt) * (2.0 - dq)
}

/// `r^(N-1) K` with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HilbertEnvelope {
    pub r: f64,
    pub k: f64,
    pub value: f64,
}

pub fn hilbert_envelope(
    model: &FinitePomdp,
    window: usize,
    ref_prior: &Belief,
    resolution: usize,
) -> Result<HilbertEnvelope> {
    if window == 0 {
        return Err(Error::InvalidParameter { name: "window", reason: "must be at least 1".into() });
    }
    let r = hilbert_r(model)?;
    let k = hilbert_k(model, ref_prior, resolution)?;
    Ok(HilbertEnvelope { r, k, value: r.powi(window as i32 - 1) * k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observability {
    pub observable: bool,
    pub rank: usize,
    /// Rows `Q(. | x)`.
    pub matrix: Vec<Vec<f64>>,
}

/// Rank of the channel matrix with singular values above 1e-9.
pub fn one_step_observability(model: &FinitePomdp) -> Observability {
    let (n, k) = (model.n_states(), model.n_observations());
    let a = DMatrix::from_fn(n, k, |x, y| model.channel(x, y));
    let rank = a.singular_values().iter().filter(|s| **s > 1e-9).count();
    Observability {
        observable: rank == n,
        rank,
        matrix: (0..n).map(|x| model.channel_row(x).to_vec()).collect(),
    }
}

/// Supplies a near-optimal controller for a given prior.
pub trait PriorPolicySolver: Sync {
    fn policy_for(&self, prior: &Belief) -> Result<Box<dyn Policy + Send>>;
}

impl PriorPolicySolver for crate::quantized::GridPolicy {
    fn policy_for(&self, _prior: &Belief) -> Result<Box<dyn Policy + Send>> {
        Ok(Box::new(self.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorRobustness {
    /// `J*(mu)`: the `mu`-optimal controller with the correct prior.
    pub optimal: Estimate,
    /// `J(mu, gamma*_nu)`: the `nu`-optimal controller, filter started at `nu`.
    pub mismatched: Estimate,
    /// Paired per-trial difference (common random numbers).
    pub gap: Estimate,
}

pub fn prior_robustness(
    model: &FinitePomdp,
    mu: &Belief,
    nu: &Belief,
    beta: f64,
    solver: &dyn PriorPolicySolver,
    trials: usize,
    seed: u64,
) -> Result<PriorRobustness> {
    let params = McParams { trials, seed, mode: CostMode::Discounted { beta } };
    let own = solver.policy_for(mu)?;
    let other = solver.policy_for(nu)?;
    let a = mismatched_cost_samples(model, own.as_ref(), mu, mu, params)?;
    let b = mismatched_cost_samples(model, other.as_ref(), mu, nu, params)?;
    let diff: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
    Ok(PriorRobustness {
        optimal: Estimate::from_samples(&a),
        mismatched: Estimate::from_samples(&b),
        gap: Estimate::from_samples(&diff),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::simulate::UniformPolicy;

    #[test]
    fn equal_priors_give_zero_curve() {
        let m = fixtures::twostate();
        let p = Belief::new(vec![0.3, 0.7]).unwrap();
        let c = run_two_filter(&m, &p, &p, &UniformPolicy, 10, 20, 3).unwrap();
        assert!(c.rows.iter().all(|r| r.tv.mean == 0.0 && r.weak.mean == 0.0));
    }

    #[test]
    fn revealing_channel_merges_immediately() {
        let m = fixtures::with_revealing_channel(&fixtures::twostate());
        let c = run_two_filter(&m, &Belief::dirac(2, 0), &Belief::uniform(2), &UniformPolicy, 5, 50, 9).unwrap();
        assert!(c.rows.iter().all(|r| r.tv.mean < 1e-15));
    }

    #[test]
    fn support_check() {
        let m = fixtures::twostate();
        assert_eq!(
            run_two_filter(&m, &Belief::uniform(2), &Belief::dirac(2, 0), &UniformPolicy, 3, 5, 0).unwrap_err(),
            Error::AbsoluteContinuityViolation { state: 1 }
        );
        assert!(run_two_filter(&m, &Belief::uniform(2), &Belief::uniform(2), &UniformPolicy, 3, 0, 0).is_err());
    }

    #[test]
    fn observability_examples() {
        let o = one_step_observability(&fixtures::twostate());
        assert!(o.observable);
        assert_eq!(o.rank, 2);
        assert_eq!(o.matrix, vec![vec![0.8, 0.2], vec![0.3, 0.7]]);
        let mut parts = fixtures::twostate().to_parts();
        parts.channel = vec![vec![0.4, 0.6]; 2];
        let blind = FinitePomdp::from_parts(parts).unwrap();
        assert_eq!(one_step_observability(&blind).rank, 1);
        let rev = fixtures::with_revealing_channel(&fixtures::twostate());
        assert!(one_step_observability(&rev).observable);
    }

    #[test]
    fn hilbert_envelope_examples() {
        let m = fixtures::twostate();
        let p = crate::markov::invariant_prior(&m);
        let e2 = hilbert_envelope(&m, 2, &p, 32).unwrap();
        let e3 = hilbert_envelope(&m, 3, &p, 32).unwrap();
        assert!((e2.r - 0.818182).abs() < 1e-6);
        assert!((e3.value / e2.value - e2.r).abs() < 1e-12);
        let mut parts = m.to_parts();
        parts.transition[0] = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let bad = FinitePomdp::from_parts(parts).unwrap();
        assert!(matches!(hilbert_envelope(&bad, 2, &p, 8), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn two_over_ln3() {
        assert!((TWO_OVER_LN3 - 2.0 / 3f64.ln()).abs() < 1e-15);
    }
}
