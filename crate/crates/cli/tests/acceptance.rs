//! Acceptance gate: ten numbered criteria at their stated tolerances and
//! time budgets. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pomdp_core::average::{average_cost_from_priors, solve_acoe, vanishing_discount_check};
use pomdp_core::belief::{correct, predict, window_posterior};
use pomdp_core::constants::{hilbert_k, hilbert_r};
use pomdp_core::fixtures;
use pomdp_core::markov::invariant_prior;
use pomdp_core::metrics::{
    dobrushin, hilbert_metric, mixing_constant, partition_overlap, wasserstein1, wasserstein1_line,
    KernelView, StateMetric,
};
use pomdp_core::qlearning::{compute_limit_model, run_q_learning, BeliefEnv, QParams, WindowEnv};
use pomdp_core::quantized::{
    build_grid, build_quantized_model, lattice, measure_quantization_loss, sample_simplex, solve_reference,
    BeliefGrid, GridPolicy, LbarParams,
};
use pomdp_core::simulate::{simulate, UniformPolicy};
use pomdp_core::stability::run_two_filter;
use pomdp_core::window::{
    build_window_model, estimate_lbar_tv, estimate_lnt, measure_window_suboptimality, solve_window_model,
    window_bounds, WindowPolicy,
};
use pomdp_core::{compute_constants, Belief, FinitePomdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4))
}

/// `P(X_t = . | y_0..t, u_0..t-1)` by summing over every state path.
fn brute_force_filter(model: &FinitePomdp, prior: &[f64], obs: &[usize], acts: &[usize]) -> Vec<f64> {
    let n = model.n_states();
    let len = obs.len();
    let mut out = vec![0.0; n];
    let mut path = vec![0usize; len];
    loop {
        let mut p = prior[path[0]] * model.channel(path[0], obs[0]);
        for s in 1..len {
            p *= model.transition(acts[s - 1], path[s - 1], path[s]) * model.channel(path[s], obs[s]);
        }
        out[path[len - 1]] += p;
        let mut i = 0;
        loop {
            if i == len {
                let z: f64 = out.iter().sum();
                return out.iter().map(|v| v / z).collect();
            }
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

fn c1_filter_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (n, m, k) = random_dims(&mut rng);
        let model = fixtures::random_model(&mut rng, n, m, k, 0.0);
        let prior = Belief::new(sample_simplex(&mut rng, n)).unwrap();
        let traj = simulate(&model, &UniformPolicy, &prior, 7, 1000 + i).unwrap();
        for t in 0..7 {
            let oracle = brute_force_filter(&model, prior.probs(), &traj.observations[..=t], &traj.actions[..t]);
            for (a, b) in oracle.iter().zip(&traj.beliefs[t]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(worst <= 1e-10, format!("max |recursive - path enumeration| = {worst:.2e} (tol 1e-10)"))
}

fn c2_dobrushin_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut models = vec![fixtures::twostate()];
    while models.len() < 11 {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(2..=3);
        let m = fixtures::random_contractive_model(&mut rng, n, 2, k, 0.6);
        if compute_constants(&m).alpha_tv < 1.0 {
            models.push(m);
        }
    }
    let mut violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for (i, model) in models.iter().enumerate() {
        let n = model.n_states();
        let curve =
            run_two_filter(model, &Belief::dirac(n, 0), &Belief::uniform(n), &UniformPolicy, 25, 10_000, 2000 + i as u64)
                .unwrap();
        for r in &curve.rows {
            let margin = r.tv.mean - (r.tv_envelope + r.tv.half_width);
            worst_margin = worst_margin.max(margin);
            if margin > 0.0 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("11 models x 26 times: {violations} rows above 2 alpha^t + 3 sigma; max excess {worst_margin:.3e}"),
    )
}

fn c3_hilbert_contraction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut models = vec![fixtures::twostate()];
    while models.len() < 4 {
        let n = rng.random_range(2..=4);
        let m = fixtures::random_model(&mut rng, n, 2, 2, 0.3);
        if hilbert_r(&m).is_ok() {
            models.push(m);
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for model in &models {
        let r = hilbert_r(model).unwrap();
        let n = model.n_states();
        let pts = lattice(n, 16).unwrap();
        let support = |p: &[f64]| p.iter().map(|v| *v > 0.0).collect::<Vec<_>>();
        let images: Vec<Vec<Option<Vec<f64>>>> = pts
            .iter()
            .map(|p| {
                (0..model.n_actions() * model.n_observations())
                    .map(|i| {
                        let (u, y) = (i / model.n_observations(), i % model.n_observations());
                        correct(model, &predict(model, p, u), y).ok().map(Belief::into_vec)
                    })
                    .collect()
            })
            .collect();
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                if support(&pts[a]) != support(&pts[b]) {
                    continue;
                }
                let h0 = hilbert_metric(&pts[a], &pts[b]);
                for (fa, fb) in images[a].iter().zip(&images[b]) {
                    if let (Some(fa), Some(fb)) = (fa, fb) {
                        worst = worst.max(hilbert_metric(fa, fb) - r * h0);
                        checked += 1;
                    }
                }
            }
        }
    }
    verdict(worst <= 1e-9, format!("{checked} (pair, u, y) checks; max h(F mu, F nu) - r h(mu, nu) = {worst:.3e}"))
}

fn c4_quantization_bound() -> Verdict {
    let model = fixtures::twostate();
    let constants = compute_constants(&model);
    let beta = 0.9;
    let reference = solve_reference(&model, 64, beta, 1e-9).unwrap();
    let params = LbarParams { samples_per_bin: 50, seed: 404 };
    let reports: Vec<_> = [2usize, 4, 8]
        .iter()
        .map(|&m| measure_quantization_loss(&model, &constants, m, &reference, beta, 1e-9, params).unwrap())
        .collect();
    let at4 = &reports[1];
    let bound = at4.bound.unwrap();
    let monotone = reports.windows(2).all(|w| w[1].loss <= w[0].loss + 1e-6);
    let losses: Vec<String> = reports.iter().map(|r| format!("{:.3e}", r.loss)).collect();
    verdict(
        at4.loss <= bound && monotone,
        format!(
            "M=4 loss {:.3e} <= bound {bound:.3e} (lbar {:.4}); losses M=2,4,8: {} (nonincreasing: {monotone})",
            at4.loss,
            at4.lbar,
            losses.join(", ")
        ),
    )
}

fn c5_window_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut models = vec![fixtures::twostate()];
    for _ in 0..3 {
        let (n, m, k) = (rng.random_range(2..=4), rng.random_range(1..=3), rng.random_range(2..=4));
        models.push(fixtures::random_model(&mut rng, n, m, k, 0.0));
    }
    let mut worst = 0.0f64;
    for (mi, model) in models.iter().enumerate() {
        let prior = Belief::new(sample_simplex(&mut rng, model.n_states())).unwrap();
        for j in 0..20u64 {
            let traj = simulate(model, &UniformPolicy, &prior, 12, 5000 + 100 * mi as u64 + j).unwrap();
            for n in 1..=3usize {
                for t in n..12 {
                    let s = t - n;
                    let predictor = if s == 0 {
                        prior.probs().to_vec()
                    } else {
                        predict(model, &traj.beliefs[s - 1], traj.actions[s - 1])
                    };
                    let post =
                        window_posterior(model, &predictor, &traj.observations[s..=t], &traj.actions[s..t]).unwrap();
                    for (a, b) in post.probs().iter().zip(&traj.beliefs[t]) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    verdict(worst <= 1e-10, format!("max |full-history - window update| = {worst:.2e} (tol 1e-10)"))
}

fn c6_window_bounds() -> Verdict {
    let model = fixtures::twostate();
    let beta = model.discount();
    let constants = compute_constants(&model);
    let ref_prior = invariant_prior(&model);
    let hk = hilbert_k(&model, &ref_prior, 32).ok();
    let reference = solve_reference(&model, 64, beta, 1e-9).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 1..=3usize {
        let wmodel = build_window_model(&model, n, &ref_prior).unwrap();
        let solved = solve_window_model(&wmodel, beta, 1e-9).unwrap();
        let policy = WindowPolicy::from_solution(&wmodel, &solved);
        let sub =
            measure_window_suboptimality(&model, n, &policy, &ref_prior, &reference, beta, 10_000, 600 + n as u64)
                .unwrap();
        let lnt = estimate_lnt(&model, n, &ref_prior, &ref_prior, &policy, 60, 10_000, 700 + n as u64).unwrap();
        let lbar_tv = estimate_lbar_tv(&model, n, &ref_prior, 16).unwrap();
        let b = window_bounds(&constants, &lnt, hk, lbar_tv, beta, None).unwrap();
        let mut applicable = vec![("a", b.expected_loss), ("envelope", b.expected_envelope)];
        if let Some(h) = b.hilbert {
            applicable.push(("hilbert", h));
        }
        let ok = applicable.iter().all(|(_, v)| sub.mean <= v + sub.half_width);
        pass &= ok;
        let list: Vec<String> = applicable.iter().map(|(k, v)| format!("{k} {v:.3e}")).collect();
        parts.push(format!("N={n}: {:.3e}+-{:.1e} vs {}", sub.mean, sub.half_width, list.join(", ")));
    }
    verdict(pass, format!("{} (uniform bound n/a: alpha_z not supplied)", parts.join("; ")))
}

fn c7_q_learning() -> Verdict {
    let model = fixtures::twostate();
    let beta = 0.8;
    let prior = invariant_prior(&model);
    let oracle = compute_limit_model(&model, 1, beta).unwrap();
    let params = QParams { beta, steps: 1_000_000, epochs: 10, seed: 7070 };
    let run = run_q_learning(|rng| WindowEnv::new(&model, 1, &prior, rng), params, Some(&oracle)).unwrap();
    let err = run.log.last().unwrap().oracle_error.unwrap();
    let tol = 0.05 * model.cost_sup() / (1.0 - beta);
    let window_ok = err <= tol && oracle.residual <= 1e-9;

    let grid = Arc::new(BeliefGrid::new(2, 4).unwrap());
    let belief_run = |seed: u64| {
        let p = QParams { beta, steps: 1_000_000, epochs: 1, seed };
        run_q_learning(|rng| BeliefEnv::new(&model, Arc::clone(&grid), &prior, rng), p, None).unwrap().table
    };
    // Spread of the difference of two independent runs, from replicate pairs.
    let reps: Vec<_> = (0..16).map(|i| belief_run(7100 + i)).collect();
    let cells = reps[0].q.len();
    let sigma_diff: Vec<f64> = (0..cells)
        .map(|c| {
            let ss: f64 = reps.chunks(2).map(|p| (p[0].q[c] - p[1].q[c]).powi(2)).sum();
            (ss / 8.0).sqrt()
        })
        .collect();
    let (a, b) = (belief_run(7200), belief_run(7201));
    let mut cell_ok = true;
    let mut worst_z = 0.0f64;
    for c in 0..cells {
        if a.visits[c] == 0 || b.visits[c] == 0 {
            continue;
        }
        let d = (a.q[c] - b.q[c]).abs();
        let z = d / sigma_diff[c].max(f64::MIN_POSITIVE);
        worst_z = worst_z.max(z);
        cell_ok &= d <= 3.0 * sigma_diff[c];
    }
    let (ga, gb) = (a.greedy(), b.greedy());
    let busy: Vec<usize> =
        (0..grid.len()).filter(|&s| a.state_visits(s) >= 1000 && b.state_visits(s) >= 1000).collect();
    let greedy_ok = busy.iter().all(|&s| ga[s] == gb[s]);
    verdict(
        window_ok && cell_ok && greedy_ok,
        format!(
            "window N=1: ||Q_T - Q*|| = {err:.4} <= {tol:.4}, residual {:.1e}; belief M=4: max |dQ|/sigma = {worst_z:.2}, greedy agree on {} busy bins: {greedy_ok}",
            oracle.residual,
            busy.len()
        ),
    )
}

fn c8_acoe() -> Verdict {
    let model = fixtures::twostate();
    let k2 = compute_constants(&model).k2;
    let grid = build_grid(&model, 32).unwrap();
    let q = build_quantized_model(&model, &grid, LbarParams { samples_per_bin: 0, seed: 0 }).unwrap();
    let sols: Vec<_> = [0usize, 16, 32].iter().map(|&r| solve_acoe(&q, k2, 1e-11, r).unwrap()).collect();
    let rho = sols[0].rho;
    let invariance = sols.iter().map(|s| (s.rho - rho).abs()).fold(0.0, f64::max);
    let vd = vanishing_discount_check(&q, rho, &[0.999], 1e-9).unwrap();
    let dev = vd.rows[0].max_deviation;
    let policy = GridPolicy::new(Arc::clone(&q.grid), sols[0].policy.clone());
    let priors = vec![
        Belief::dirac(2, 0),
        Belief::dirac(2, 1),
        Belief::uniform(2),
        invariant_prior(&model),
        Belief::new(vec![0.25, 0.75]).unwrap(),
    ];
    // Independent streams per prior; shared streams would couple the runs.
    let avgs: Vec<_> = priors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            average_cost_from_priors(&model, &policy, std::slice::from_ref(p), 200, 2_000, 400, 808 + i as u64)
                .unwrap()[0]
        })
        .collect();
    let mut agree = true;
    let mut spread = 0.0f64;
    for i in 0..avgs.len() {
        for j in i + 1..avgs.len() {
            let d = (avgs[i].mean - avgs[j].mean).abs();
            let s = (avgs[i].sigma().powi(2) + avgs[j].sigma().powi(2)).sqrt();
            spread = spread.max(d);
            agree &= d <= 1e-2f64.max(3.0 * s);
        }
    }
    verdict(
        invariance <= 1e-8 && dev <= 1e-2 && agree,
        format!(
            "rho* = {rho:.6}; reference-node spread {invariance:.1e}; max |(1-b)J - rho*| at 0.999 = {dev:.2e}; average-cost spread over 5 priors {spread:.2e}"
        ),
    )
}

fn c9_metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut w1_worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let coords: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let metric = StateMetric::from_coords(&coords).unwrap();
        let mu = sample_simplex(&mut rng, n);
        let nu = sample_simplex(&mut rng, n);
        let lp = wasserstein1(&mu, &nu, &metric).unwrap();
        let cdf = wasserstein1_line(&mu, &nu, &coords).unwrap();
        w1_worst = w1_worst.max((lp - cdf).abs());
    }
    let mut dob_ok = true;
    for _ in 0..100 {
        let (n, k) = (rng.random_range(2..=5), rng.random_range(2..=6));
        let rows = (0..n).map(|_| sample_simplex(&mut rng, k)).collect();
        let kernel = KernelView::from_rows(rows).unwrap();
        let cell: Vec<usize> = (0..k).map(|_| rng.random_range(0..k)).collect();
        let mut part = f64::INFINITY;
        for x in 0..n {
            for y in x + 1..n {
                part = part.min(partition_overlap(&kernel, x, y, &cell));
            }
        }
        dob_ok &= dobrushin(&kernel) <= part + 1e-15;
    }
    let c = 2.0 / 3f64.ln();
    let mut htv_ok = true;
    for i in 0..1000 {
        let n = rng.random_range(2..=6);
        let mut mu = sample_simplex(&mut rng, n);
        let mut nu = sample_simplex(&mut rng, n);
        if i % 2 == 1 {
            // Shared proper support.
            let drop = rng.random_range(0..n);
            for p in [&mut mu, &mut nu] {
                let lost = p[drop];
                p[drop] = 0.0;
                p.iter_mut().for_each(|v| *v /= 1.0 - lost);
            }
        }
        let l1: f64 = mu.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        htv_ok &= l1 <= c * hilbert_metric(&mu, &nu) + 1e-12;
        let rows = (0..n).map(|_| fixtures_row(&mut rng, n)).collect();
        let kernel = KernelView::from_rows(rows).unwrap();
        let cert = mixing_constant(&kernel).unwrap();
        let h = hilbert_metric(&kernel.push_forward(&mu), &kernel.push_forward(&nu));
        htv_ok &= h <= l1 / cert.eps.powi(2) + 1e-12;
    }
    verdict(
        w1_worst <= 1e-9 && dob_ok && htv_ok,
        format!("W1 LP vs CDF max diff {w1_worst:.1e}; Dobrushin singleton minimal: {dob_ok}; h-TV (i),(ii): {htv_ok}"),
    )
}

/// Dense row with every entry at least `0.05 / n`.
fn fixtures_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    sample_simplex(rng, n).into_iter().map(|v| 0.95 * v + 0.05 / n as f64).collect()
}

fn run_cli(dir: &Path, args: &[&str], threads: usize) -> Vec<u8> {
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/twostate.pomdp");
    let out = dir.join(format!("{}-{threads}", args[0]));
    let status = Command::new(env!("CARGO_BIN_EXE_pomdp-lab"))
        .arg(args[0])
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&out)
        .arg("--threads")
        .arg(threads.to_string())
        .args(&args[1..])
        .status()
        .expect("binary runs");
    assert!(status.success(), "{args:?} failed");
    std::fs::read(out.join("results.csv")).unwrap()
}

fn c10_reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 6] = [
        &["stability", "seed=3", "trials=500", "horizon=10"],
        &["quantize", "seed=3", "resolutions=2,4", "reference_resolution=16", "samples_per_bin=20"],
        &["window", "seed=3", "windows=1,2", "trials=300", "lnt_horizon=20", "reference_resolution=16"],
        &["qlearn", "seed=3", "steps=20000", "instantiation=belief", "floor=1"],
        &["avgcost", "seed=3", "resolution=8", "trials=50", "burn_in=20", "window=200"],
        &["robust-prior", "seed=3", "trials=300", "resolution=8"],
    ];
    let mut differing = Vec::new();
    for args in runs {
        let (a, b) = (run_cli(dir.path(), args, 1), run_cli(dir.path(), args, 4));
        let dir2 = dir.path().join("again");
        let c = run_cli(&dir2, args, 3);
        if a != b || a != c {
            differing.push(args[0]);
        }
    }
    verdict(
        differing.is_empty(),
        format!("6 stochastic subcommands at 1, 3 and 4 threads; differing results.csv: {differing:?}"),
    )
}

fn main() {
    let criteria: [(&str, u64, fn() -> Verdict); 10] = [
        ("filter oracle", 10, c1_filter_oracle),
        ("Dobrushin stability bound", 120, c2_dobrushin_bound),
        ("Hilbert one-step contraction", 30, c3_hilbert_contraction),
        ("quantization bound", 120, c4_quantization_bound),
        ("finite-window reduction identity", 10, c5_window_identity),
        ("window bounds", 300, c6_window_bounds),
        ("Q-learning convergence", 300, c7_q_learning),
        ("average-cost optimality", 120, c8_acoe),
        ("metric cross-oracles", 30, c9_metric_oracles),
        ("reproducibility", 300, c10_reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {} ({:.1}s of {budget}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
