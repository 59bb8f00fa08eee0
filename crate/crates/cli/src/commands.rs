//! One function per subcommand. Each returns the CSV body and a plain-text
//! summary; floats in CSV use a fixed exponent format so reruns compare
//! byte for byte.

use std::fmt::Write as _;
use std::sync::Arc;

use pomdp_core::average::{
    average_cost_from_priors, discounted_policy_for_average, solve_acoe, vanishing_discount_check,
};
use pomdp_core::constants::{hilbert_k, DEFAULT_K_RESOLUTION};
use pomdp_core::markov::invariant_prior;
use pomdp_core::qlearning::{
    collect_statistics, compute_limit_model, empirical_limit_model, run_q_learning, window_policy_from_q,
    BeliefEnv, LimitModel, QParams, QRun, WindowEnv,
};
use pomdp_core::quantized::{
    build_grid, build_quantized_model, extend_policy, measure_quantization_loss, solve_reference,
    value_iterate, LbarParams, QuantizedBeliefModel,
};
use pomdp_core::stability::{one_step_observability, prior_robustness, run_two_filter};
use pomdp_core::simulate::UniformPolicy;
use pomdp_core::window::{
    build_window_model, estimate_lbar_tv, estimate_lnt, measure_window_suboptimality, solve_window_model,
    window_bounds, WindowCodec, WindowPolicy,
};
use pomdp_core::{compute_constants, Belief, FinitePomdp};

use crate::config::Config;
use crate::CliError;

pub struct Output {
    pub results: String,
    pub summary: String,
}

fn f(v: f64) -> String {
    format!("{v:.12e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), f)
}

pub fn constants(model: &FinitePomdp, _cfg: &Config) -> Result<Output, CliError> {
    let c = compute_constants(model);
    let obs = one_step_observability(model);
    let mut rows: Vec<(String, String, &str)> = vec![
        ("dobrushin_q".into(), f(c.dobrushin_q), ""),
        ("dobrushin_t_min".into(), f(c.dobrushin_t_min), ""),
        ("alpha_tv".into(), f(c.alpha_tv), ""),
        ("tv_lipschitz".into(), f(c.tv_lipschitz), ""),
        ("cost_lipschitz".into(), f(c.cost_lipschitz), ""),
        ("k2".into(), f(c.k2), ""),
        ("diameter".into(), f(c.diameter), ""),
        ("cost_sup".into(), f(c.cost_sup), ""),
        ("eps_q".into(), f(c.eps_q), ""),
    ];
    for (u, e) in c.eps_mix.iter().enumerate() {
        rows.push((format!("eps_mix[{}]", model.action_names()[u]), f(*e), ""));
    }
    rows.push(("hilbert_r".into(), opt(c.hilbert_r), ""));
    rows.push(("hilbert_k".into(), opt(c.hilbert_k), "lattice maximum over priors; reference = invariant prior"));
    rows.push(("observability_rank".into(), obs.rank.to_string(), ""));
    let mut results = String::from("quantity,value,caveat\n");
    for (q, v, cav) in &rows {
        let _ = writeln!(results, "{q},{v},{cav}");
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "alpha = {:.6} (TV filter stability {})", c.alpha_tv, verdict(c.alpha_tv < 1.0));
    let _ = writeln!(summary, "K2 = {:.6} (Wasserstein contraction {})", c.k2, verdict(c.k2 < 1.0));
    let _ = writeln!(
        summary,
        "one-step observability: rank {} of {} ({})",
        obs.rank,
        model.n_states(),
        if obs.observable { "observable" } else { "not observable" }
    );
    match c.hilbert_r {
        Some(r) => {
            let _ = writeln!(summary, "Hilbert rate r = {r:.6}");
        }
        None => {
            let _ = writeln!(summary, "Hilbert mixing assumption fails; r and K unavailable");
        }
    }
    Ok(Output { results, summary })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "not certified"
    }
}

pub fn stability(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let trials = cfg.positive("trials", 10_000)?;
    let horizon = cfg.get("horizon", 25usize)?;
    let mu = cfg.belief("mu", "invariant", model)?;
    let nu = cfg.belief("nu", "uniform", model)?;
    let curve = run_two_filter(model, &mu, &nu, &UniformPolicy, horizon, trials, seed)?;
    let above = curve.rows.iter().filter(|r| r.tv.mean > r.tv_envelope + r.tv.half_width).count();
    let mut summary = String::new();
    let _ = writeln!(summary, "two-filter experiment: {trials} trials, horizon {horizon}, uniform exploration");
    let _ = writeln!(summary, "rows above 2 alpha^t + 3 sigma: {above}");
    let _ = writeln!(summary, "trials where the nu-filter met a zero-likelihood observation: {}", curve.broken_trials);
    let obs = one_step_observability(model);
    let _ = writeln!(summary, "one-step observability rank {} of {}", obs.rank, model.n_states());
    Ok(Output { results: curve.to_csv(), summary })
}

pub fn quantize(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let beta = cfg.beta(model.discount())?;
    let tol = cfg.get("tol", 1e-9)?;
    let resolutions: Vec<usize> = cfg.list("resolutions", "2,4,8")?;
    let reference_m = cfg.positive("reference_resolution", 64)?;
    let samples_per_bin = cfg.get("samples_per_bin", 50usize)?;
    let constants = compute_constants(model);
    let reference = solve_reference(model, reference_m, beta, tol)?;
    let mut results = String::from("resolution,loss,min_gap,lbar,lbar_upper,bound,bound_upper,caveat\n");
    let mut summary = format!("quantization loss against M = {reference_m}, beta = {beta}\n");
    for m in resolutions {
        let rep = measure_quantization_loss(
            model,
            &constants,
            m,
            &reference,
            beta,
            tol,
            LbarParams { samples_per_bin, seed },
        )?;
        let (bound, caveat) = match rep.bound {
            Ok(b) => (f(b), "lbar is a sampled estimate of a supremum".to_string()),
            Err(factor) => ("NA".into(), format!("beta*K2 = {factor} >= 1: bound does not apply")),
        };
        let upper = rep.bound_upper.map_or_else(|_| "NA".into(), f);
        let _ = writeln!(
            results,
            "{m},{},{},{},{},{bound},{upper},{caveat}",
            f(rep.loss),
            f(rep.min_gap),
            f(rep.lbar),
            f(rep.lbar_upper)
        );
        let _ = writeln!(summary, "M = {m}: loss {:.6e}, bound {bound}", rep.loss);
    }
    Ok(Output { results, summary })
}

pub fn window(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let beta = cfg.beta(model.discount())?;
    let tol = cfg.get("tol", 1e-9)?;
    let windows: Vec<usize> = cfg.list("windows", "1,2,3")?;
    let trials = cfg.positive("trials", 10_000)?;
    let lnt_horizon = cfg.get("lnt_horizon", 40usize)?;
    let reference_m = cfg.positive("reference_resolution", 64)?;
    let lbar_resolution = cfg.positive("lbar_resolution", 16)?;
    let alpha_z: Option<f64> = cfg.optional("alpha_z")?;
    let ref_prior = cfg.belief("ref_prior", "invariant", model)?;
    let prior = cfg.belief("prior", "invariant", model)?;
    let constants = compute_constants(model);
    let hk = constants.hilbert_r.and_then(|_| hilbert_k(model, &ref_prior, DEFAULT_K_RESOLUTION).ok());
    let reference = solve_reference(model, reference_m, beta, tol)?;
    let mut results = String::from(
        "window,suboptimality,half_width,bound_expected,bound_envelope,bound_hilbert,bound_uniform,lbar_tv,unseen_lookups,caveat\n",
    );
    let mut summary = format!("finite-window policies, beta = {beta}, reference optimum at M = {reference_m}\n");
    for n in windows {
        let wmodel = build_window_model(model, n, &ref_prior)?;
        let solved = solve_window_model(&wmodel, beta, tol)?;
        let policy = WindowPolicy::from_solution(&wmodel, &solved);
        let sub = measure_window_suboptimality(model, n, &policy, &prior, &reference, beta, trials, seed)?;
        let lnt = estimate_lnt(model, n, &ref_prior, &prior, &policy, lnt_horizon, trials, seed)?;
        let lbar_tv = estimate_lbar_tv(model, n, &ref_prior, lbar_resolution)?;
        let bounds = window_bounds(&constants, &lnt, hk, lbar_tv, beta, alpha_z)?;
        let _ = writeln!(
            results,
            "{n},{},{},{},{},{},{},{},{},L^N_t is a Monte-Carlo estimate; lbar_tv is a lattice estimate of a supremum",
            f(sub.mean),
            f(sub.half_width),
            f(bounds.expected_loss),
            f(bounds.expected_envelope),
            opt(bounds.hilbert),
            opt(bounds.uniform),
            f(lbar_tv),
            policy.unseen_lookups()
        );
        let _ = writeln!(
            summary,
            "N = {n}: suboptimality {:.4e} +- {:.1e}; bounds {:.4e} (expected) {:.4e} (envelope) {}",
            sub.mean,
            sub.half_width,
            bounds.expected_loss,
            bounds.expected_envelope,
            bounds.hilbert.map_or_else(|| "hilbert NA".into(), |h| format!("{h:.4e} (hilbert)"))
        );
    }
    if alpha_z.is_none() {
        summary.push_str("uniform bound omitted: alpha_z not supplied\n");
    }
    Ok(Output { results, summary })
}

pub fn qlearn(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let beta = cfg.beta(model.discount())?;
    let steps: u64 = cfg.get("steps", 1_000_000)?;
    let epochs = cfg.positive("epochs", 20)?;
    let kind: String = cfg.get("instantiation", "window".to_string())?;
    let prior = cfg.belief("prior", "invariant", model)?;
    let params = QParams { beta, steps, epochs, seed };
    let tolerance = 0.05 * model.cost_sup() / (1.0 - beta);
    let (run, oracle): (QRun, LimitModel) = match kind.as_str() {
        "window" => {
            let n = cfg.positive("window", 1)?;
            let oracle = compute_limit_model(model, n, beta)?;
            let run = run_q_learning(|rng| WindowEnv::new(model, n, &prior, rng), params, Some(&oracle))?;
            (run, oracle)
        }
        "belief" => {
            let m = cfg.positive("resolution", 4)?;
            let floor = cfg.get("floor", 100u64)?;
            let grid = Arc::new(build_grid(model, m)?);
            let stats = collect_statistics(
                |rng| BeliefEnv::new(model, Arc::clone(&grid), &prior, rng),
                steps,
                seed.wrapping_add(1),
            );
            let oracle = empirical_limit_model(&stats, floor, beta)?;
            let run = run_q_learning(|rng| BeliefEnv::new(model, Arc::clone(&grid), &prior, rng), params, Some(&oracle))?;
            (run, oracle)
        }
        other => return Err(CliError::Config(format!("`instantiation` = `{other}`: expected window or belief"))),
    };
    let mut summary = format!("Q-learning ({kind}), beta = {beta}, {steps} steps\n");
    let last = run.log.last().and_then(|e| e.oracle_error).unwrap_or(f64::NAN);
    let _ = writeln!(summary, "limit model residual {:.3e}", oracle.residual);
    let _ = writeln!(
        summary,
        "final ||Q - Q*|| = {last:.4e} against tolerance {tolerance:.4e} ({})",
        verdict(last <= tolerance)
    );
    let _ = writeln!(summary, "greedy actions: {:?}", run.table.greedy());
    let _ = writeln!(summary, "unvisited cells: {}", run.unvisited.len());
    let eval_trials = cfg.get("evaluate_trials", 0usize)?;
    if kind == "window" && eval_trials > 0 {
        let n = cfg.positive("window", 1)?;
        let reference = solve_reference(model, cfg.positive("reference_resolution", 64)?, beta, 1e-9)?;
        let policy = window_policy_from_q(&run.table, WindowCodec::new(model, n));
        let sub = measure_window_suboptimality(model, n, &policy, &prior, &reference, beta, eval_trials, seed)?;
        let _ = writeln!(summary, "learned policy suboptimality {:.4e} +- {:.1e}", sub.mean, sub.half_width);
    }
    Ok(Output { results: run.log_csv(), summary })
}

fn grid_model(model: &FinitePomdp, resolution: usize) -> Result<QuantizedBeliefModel, CliError> {
    let grid = build_grid(model, resolution)?;
    Ok(build_quantized_model(model, &grid, LbarParams { samples_per_bin: 0, seed: 0 })?)
}

pub fn avgcost(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let m = cfg.positive("resolution", 32)?;
    let tol = cfg.get("tol", 1e-10)?;
    let reference_node = cfg.get("reference_node", 0usize)?;
    let betas: Vec<f64> = cfg.list("betas", "0.9,0.99,0.999")?;
    let trials = cfg.positive("trials", 400)?;
    let burn_in = cfg.get("burn_in", 200usize)?;
    let window = cfg.positive("window", 2_000)?;
    let k2 = compute_constants(model).k2;
    let qmodel = grid_model(model, m)?;
    let acoe = solve_acoe(&qmodel, k2, tol, reference_node)?;
    let mut results = String::from("section,label,value,half_width\n");
    let _ = writeln!(results, "acoe,rho,{},NA", f(acoe.rho));
    let _ = writeln!(results, "acoe,span_residual,{},NA", f(acoe.span_residual));
    let _ = writeln!(results, "acoe,iterations,{},NA", acoe.iterations);
    let vd = vanishing_discount_check(&qmodel, acoe.rho, &betas, 1e-9)?;
    for r in &vd.rows {
        let _ = writeln!(results, "vanishing_max_deviation,{},{},NA", r.beta, f(r.max_deviation));
        let _ = writeln!(results, "vanishing_spread,{},{},NA", r.beta, f(r.spread));
    }
    let start = invariant_prior(model);
    let mut summary = vd.to_text();
    if k2 >= 1.0 {
        summary.push_str("warning: K2 >= 1, the ACOE is not guaranteed\n");
    }
    for &beta in &betas {
        let rep = discounted_policy_for_average(model, &qmodel, beta, acoe.rho, &start, burn_in, window, trials, seed)?;
        let _ = writeln!(results, "discounted_policy_average,{beta},{},{}", f(rep.average.mean), f(rep.average.half_width));
        let _ = writeln!(summary, "beta = {beta} policy: average cost {:.6} (gap {:+.2e})", rep.average.mean, rep.gap);
    }
    let policy = pomdp_core::quantized::GridPolicy::new(Arc::clone(&qmodel.grid), acoe.policy.clone());
    let priors = initial_beliefs(model);
    let avgs = average_cost_from_priors(model, &policy, &priors, burn_in, window, trials, seed)?;
    for (i, e) in avgs.iter().enumerate() {
        let _ = writeln!(results, "acoe_policy_from_prior,{i},{},{}", f(e.mean), f(e.half_width));
    }
    summary.push_str("transversality (lim E[h(Z_t)]/t = 0) is assumed, not checked\n");
    Ok(Output { results, summary })
}

/// Vertices, the uniform law and the invariant law, in that order.
pub fn initial_beliefs(model: &FinitePomdp) -> Vec<Belief> {
    let n = model.n_states();
    let mut out: Vec<Belief> = (0..n).map(|x| Belief::dirac(n, x)).collect();
    out.push(Belief::uniform(n));
    out.push(invariant_prior(model));
    out
}

pub fn robust_prior(model: &FinitePomdp, cfg: &Config) -> Result<Output, CliError> {
    let seed: u64 = cfg.require("seed")?;
    let beta = cfg.beta(model.discount())?;
    let trials = cfg.positive("trials", 10_000)?;
    let m = cfg.positive("resolution", 32)?;
    let mu = cfg.belief("mu", "invariant", model)?;
    let nu = cfg.belief("nu", "uniform", model)?;
    let qmodel = grid_model(model, m)?;
    let solved = value_iterate(&qmodel, beta, 1e-9)?;
    let policy = extend_policy(&solved, &qmodel);
    let rep = prior_robustness(model, &mu, &nu, beta, &policy, trials, seed)?;
    let mut results = String::from("quantity,mean,half_width\n");
    for (k, e) in [("optimal", rep.optimal), ("mismatched", rep.mismatched), ("gap", rep.gap)] {
        let _ = writeln!(results, "{k},{},{}", f(e.mean), f(e.half_width));
    }
    let summary = format!(
        "J(mu, gamma_nu) - J*(mu) = {:.4e} +- {:.1e} (grid policy at M = {m}, beta = {beta})\n",
        rep.gap.mean, rep.gap.half_width
    );
    Ok(Output { results, summary })
}
