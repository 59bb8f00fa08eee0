//! Average-cost control on the quantized belief model: the ACOE by relative
//! value iteration, the vanishing-discount check, and simulation of
//! discounted-optimal policies under the long-run average criterion.

use std::fmt::Write as _;

use crate::belief::Belief;
use crate::error::Result;
use crate::mdp::{self, AcoeSolution, SolvedModel, DEFAULT_ITERATION_CAP};
use crate::model::FinitePomdp;
use crate::quantized::{extend_policy, value_iterate, GridPolicy, QuantizedBeliefModel};
use crate::simulate::{evaluate_policy_cost, CostMode, Estimate, McParams, Policy};

/// Relative value iteration on the grid model. `k2 >= 1` only warns: the
/// ACOE may still have a solution.
pub fn solve_acoe(qmodel: &QuantizedBeliefModel, k2: f64, tol: f64, reference: usize) -> Result<AcoeSolution> {
    if k2 >= 1.0 {
        log::warn!("K2 = {k2} >= 1: the ACOE solution is not guaranteed");
    }
    mdp::relative_value_iterate(&qmodel.mdp, tol, reference, DEFAULT_ITERATION_CAP)
}

pub fn acoe_residual(qmodel: &QuantizedBeliefModel, sol: &AcoeSolution) -> f64 {
    mdp::acoe_residual(&qmodel.mdp, sol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingRow {
    pub beta: f64,
    /// `(1 - beta) J_beta(z)` per representative.
    pub scaled: Vec<f64>,
    /// `max_z |(1 - beta) J_beta(z) - rho|`
    pub max_deviation: f64,
    /// `max_z - min_z` of `scaled`.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingReport {
    pub rho: f64,
    pub rows: Vec<VanishingRow>,
}

impl VanishingReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("rho* = {:.12}\n", self.rho);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "beta = {}: max |(1-beta)J - rho*| = {:.3e}, spread = {:.3e}",
                r.beta, r.max_deviation, r.spread
            );
        }
        out
    }
}

/// Discounted solves on the same grid for each `beta`.
pub fn vanishing_discount_check(
    qmodel: &QuantizedBeliefModel,
    rho: f64,
    betas: &[f64],
    tol: f64,
) -> Result<VanishingReport> {
    let rows = betas
        .iter()
        .map(|&beta| {
            let solved = value_iterate(qmodel, beta, tol)?;
            let scaled: Vec<f64> = solved.values.iter().map(|v| (1.0 - beta) * v).collect();
            let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let max_deviation = scaled.iter().map(|v| (v - rho).abs()).fold(0.0, f64::max);
            Ok(VanishingRow { beta, scaled, max_deviation, spread: hi - lo })
        })
        .collect::<Result<_>>()?;
    Ok(VanishingReport { rho, rows })
}

#[derive(Debug, Clone)]
pub struct AveragePolicyReport {
    pub beta: f64,
    pub policy: GridPolicy,
    pub average: Estimate,
    /// `average - rho*`
    pub gap: f64,
}

/// Extends the `beta`-discounted grid policy and simulates its long-run
/// average cost from `prior`.
#[allow(clippy::too_many_arguments)]
pub fn discounted_policy_for_average(
    model: &FinitePomdp,
    qmodel: &QuantizedBeliefModel,
    beta: f64,
    rho: f64,
    prior: &Belief,
    burn_in: usize,
    window: usize,
    trials: usize,
    seed: u64,
) -> Result<AveragePolicyReport> {
    let solved: SolvedModel = value_iterate(qmodel, beta, 1e-9)?;
    let policy = extend_policy(&solved, qmodel);
    let params = McParams { trials, seed, mode: CostMode::Average { burn_in, window } };
    let average = evaluate_policy_cost(model, &policy, prior, params)?;
    Ok(AveragePolicyReport { beta, policy, gap: average.mean - rho, average })
}

/// Simulated average cost of one policy from several initial beliefs.
pub fn average_cost_from_priors(
    model: &FinitePomdp,
    policy: &dyn Policy,
    priors: &[Belief],
    burn_in: usize,
    window: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let params = McParams { trials, seed, mode: CostMode::Average { burn_in, window } };
    priors.iter().map(|p| evaluate_policy_cost(model, policy, p, params)).collect()
}
