use pomdp_core::belief::{belief_mdp_step, expected_cost, predict};
use pomdp_core::metrics::{
    birkhoff_tau, dobrushin, hilbert_diameter, hilbert_metric, mixing_constant, tv_distance, wasserstein1,
    KernelView, StateMetric,
};
use pomdp_core::qlearning::{run_q_learning, BeliefEnv, QParams, WindowEnv};
use pomdp_core::quantized::{build_quantized_model, sample_simplex, BeliefGrid, LbarParams};
use pomdp_core::window::{build_window_model, WindowCodec};
use pomdp_core::{compute_constants, fixtures, parse_model, Belief, FinitePomdp, ModelParts};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_from(seed: u64, n: usize, m: usize, k: usize) -> FinitePomdp {
    fixtures::random_model(&mut ChaCha8Rng::seed_from_u64(seed), n, m, k, 0.05)
}

fn permuted(model: &FinitePomdp, seed: u64) -> FinitePomdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..model.n_states()).collect();
    let mut r: Vec<usize> = (0..model.n_actions()).collect();
    let mut q: Vec<usize> = (0..model.n_observations()).collect();
    p.shuffle(&mut rng);
    r.shuffle(&mut rng);
    q.shuffle(&mut rng);
    let old = model.to_parts();
    FinitePomdp::from_parts(ModelParts {
        states: p.iter().map(|&i| old.states[i].clone()).collect(),
        actions: r.iter().map(|&a| old.actions[a].clone()).collect(),
        observations: q.iter().map(|&y| old.observations[y].clone()).collect(),
        transition: r
            .iter()
            .map(|&a| p.iter().map(|&i| p.iter().map(|&j| old.transition[a][i][j]).collect()).collect())
            .collect(),
        channel: p.iter().map(|&i| q.iter().map(|&y| old.channel[i][y]).collect()).collect(),
        cost: p.iter().map(|&i| r.iter().map(|&a| old.cost[i][a]).collect()).collect(),
        discount: old.discount,
        coords: None,
        dist: None,
    })
    .unwrap()
}

fn simplex(seed: u64, n: usize) -> Vec<f64> {
    sample_simplex(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn kernel(seed: u64, n: usize, k: usize, floor: f64) -> KernelView {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| sample_simplex(&mut rng, k).into_iter().map(|v| (1.0 - floor) * v + floor / k as f64).collect())
        .collect();
    KernelView::from_rows(rows).unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), n in 1..5usize, m in 1..4usize, k in 1..5usize) {
        let model = model_from(seed, n, m, k);
        let back = parse_model(&model.serialize()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn constants_are_relabeling_invariant(seed in any::<u64>(), n in 1..4usize, m in 1..3usize, k in 1..4usize) {
        let model = model_from(seed, n, m, k);
        let a = compute_constants(&model);
        let b = compute_constants(&permuted(&model, seed ^ 0x5a5a));
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
        prop_assert!(close(a.dobrushin_q, b.dobrushin_q));
        prop_assert!(close(a.dobrushin_t_min, b.dobrushin_t_min));
        prop_assert!(close(a.alpha_tv, b.alpha_tv));
        prop_assert!(close(a.tv_lipschitz, b.tv_lipschitz));
        prop_assert!(close(a.cost_lipschitz, b.cost_lipschitz));
        prop_assert!(close(a.k2, b.k2));
        prop_assert!(close(a.eps_q, b.eps_q));
        prop_assert_eq!(a.hilbert_r.is_some(), b.hilbert_r.is_some());
        if let (Some(x), Some(y)) = (a.hilbert_r, b.hilbert_r) {
            prop_assert!(close(x, y));
        }
        if let (Some(x), Some(y)) = (a.hilbert_k, b.hilbert_k) {
            prop_assert!(close(x, y), "K {} vs {}", x, y);
        }
        prop_assert!((0.0..=2.0).contains(&a.alpha_tv));
    }

    #[test]
    fn belief_kernel_conserves_mass(seed in any::<u64>(), n in 1..5usize, m in 1..4usize, k in 1..5usize) {
        let model = model_from(seed, n, m, k);
        let pi = Belief::new(simplex(seed.wrapping_add(1), n)).unwrap();
        for u in 0..m {
            let step = belief_mdp_step(&model, &pi, u);
            let total: f64 = step.atoms.iter().map(|a| a.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            let predicted = predict(&model, pi.probs(), u);
            let mut mixed = vec![0.0; n];
            for a in &step.atoms {
                for (x, p) in a.next.probs().iter().enumerate() {
                    mixed[x] += a.weight * p;
                }
            }
            prop_assert!(l1(&mixed, &predicted) <= 1e-10);
        }
    }

    #[test]
    fn expected_cost_is_linear(seed in any::<u64>(), n in 1..5usize, lambda in 0.0..=1.0f64) {
        let model = model_from(seed, n, 2, 2);
        let a = simplex(seed ^ 1, n);
        let b = simplex(seed ^ 2, n);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
        for u in 0..2 {
            let lhs = expected_cost(&model, &mix, u);
            let rhs = lambda * expected_cost(&model, &a, u) + (1.0 - lambda) * expected_cost(&model, &b, u);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn distances_are_metrics(seed in any::<u64>(), n in 2..7usize) {
        let (a, b, c) = (simplex(seed, n), simplex(seed ^ 7, n), simplex(seed ^ 11, n));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let metric = StateMetric::from_coords(&coords).unwrap();
        let tv = |x: &[f64], y: &[f64]| tv_distance(x, y).unwrap();
        let w = |x: &[f64], y: &[f64]| wasserstein1(x, y, &metric).unwrap();
        let h = |x: &[f64], y: &[f64]| hilbert_metric(x, y);
        for d in [&tv as &dyn Fn(&[f64], &[f64]) -> f64, &w, &h] {
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-9);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        }
        prop_assert!(tv(&a, &b) <= 2.0 + 1e-12);
        prop_assert!(w(&a, &b) <= metric.diameter() / 2.0 * tv(&a, &b) + 1e-9);
    }

    #[test]
    fn hilbert_contraction_and_diameter(seed in any::<u64>(), n in 2..5usize, k in 2..5usize) {
        let kern = kernel(seed, n, k, 0.2);
        let mu = simplex(seed ^ 3, n);
        let nu = simplex(seed ^ 5, n);
        let h0 = hilbert_metric(&mu, &nu);
        let h1 = hilbert_metric(&kern.push_forward(&mu), &kern.push_forward(&nu));
        prop_assert!(h1 <= birkhoff_tau(&kern) * h0 + 1e-9);
        prop_assert!(h1 <= hilbert_diameter(&kern) + 1e-9);
        prop_assert!(l1(&mu, &nu) <= 2.0 / 3f64.ln() * h0 + 1e-12);
        let cert = mixing_constant(&kern).unwrap();
        prop_assert!(h1 <= l1(&mu, &nu) / cert.eps.powi(2) + 1e-9);
    }

    #[test]
    fn dobrushin_contracts_total_variation(seed in any::<u64>(), n in 1..5usize, k in 1..5usize) {
        let kern = kernel(seed, n, k, 0.0);
        let d = dobrushin(&kern);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        let mu = simplex(seed ^ 9, n);
        let nu = simplex(seed ^ 13, n);
        let after = l1(&kern.push_forward(&mu), &kern.push_forward(&nu));
        prop_assert!(after <= (1.0 - d) * l1(&mu, &nu) + 1e-12);
    }

    #[test]
    fn quantizer_returns_a_nearest_point(seed in any::<u64>(), n in 2..5usize, res in 1..9usize) {
        let grid = BeliefGrid::new(n, res).unwrap();
        let pi = simplex(seed, n);
        let i = grid.quantize(&pi);
        let best = grid.representatives().iter().map(|z| l1(z, &pi)).fold(f64::INFINITY, f64::min);
        prop_assert!(l1(grid.representative(i), &pi) <= best + 1e-12);
    }

    #[test]
    fn quantized_costs_stay_in_range(seed in any::<u64>(), n in 2..4usize, res in 1..6usize) {
        let model = model_from(seed, n, 2, 2);
        let grid = BeliefGrid::new(n, res).unwrap();
        let q = build_quantized_model(&model, &grid, LbarParams { samples_per_bin: 0, seed: 0 }).unwrap();
        for s in 0..grid.len() {
            for u in 0..2 {
                let c = q.mdp.cost(s, u);
                prop_assert!(c >= model.cost_min() - 1e-12 && c <= model.cost_sup() + 1e-12);
            }
        }
    }

    #[test]
    fn window_codec_round_trips(k in 1..4usize, m in 1..4usize, len in 0..4usize, seed in any::<u64>()) {
        let codec = WindowCodec { n_observations: k, n_actions: m, len };
        let idx = (seed as usize) % codec.count();
        let w = codec.decode(idx);
        prop_assert_eq!(codec.encode(&w.observations, &w.actions), idx);
    }

    #[test]
    fn q_learning_bookkeeping(seed in any::<u64>(), steps in 1..3000u64) {
        let model = model_from(seed, 2, 2, 2);
        let prior = Belief::uniform(2);
        let params = QParams { beta: 0.7, steps, epochs: 3, seed };
        let run = run_q_learning(|rng| WindowEnv::new(&model, 1, &prior, rng), params, None).unwrap();
        prop_assert_eq!(run.table.visits.iter().sum::<u64>(), steps);
        let cap = model.cost_sup() / (1.0 - 0.7);
        prop_assert!(run.table.q.iter().all(|q| *q >= 0.0 && *q <= cap + 1e-12));
    }
}

#[test]
fn window_states_cover_every_reachable_window() {
    let mut parts = fixtures::twostate().to_parts();
    parts.channel = vec![vec![1.0, 0.0], vec![0.3, 0.7]];
    let model = FinitePomdp::from_parts(parts).unwrap();
    let prior = Belief::uniform(2);
    let w = build_window_model(&model, 2, &prior).unwrap();
    assert_eq!(w.renormalized_rows, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut env = WindowEnv::new(&model, 2, &prior, &mut rng);
    use pomdp_core::qlearning::StateProcess;
    for t in 0..100_000 {
        let (_, s) = env.step(t % 2, &mut rng);
        assert!(w.index_of[s].is_some(), "window {s} reached but excluded");
    }
}

#[test]
fn belief_env_streams_are_reproducible() {
    let model = fixtures::twostate();
    let grid = std::sync::Arc::new(BeliefGrid::new(2, 4).unwrap());
    let prior = Belief::uniform(2);
    let params = QParams { beta: 0.8, steps: 5_000, epochs: 2, seed: 9 };
    let a = run_q_learning(|rng| BeliefEnv::new(&model, grid.clone(), &prior, rng), params, None).unwrap();
    let b = run_q_learning(|rng| BeliefEnv::new(&model, grid.clone(), &prior, rng), params, None).unwrap();
    assert_eq!(a, b);
}
