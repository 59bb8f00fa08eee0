//! Belief-simplex quantization and the finite approximate MDP `(c*, eta*)`
//! built on the type lattice.
//!
//! The weight measure is a point mass at each representative, so
//! `c*(z_i, u) = c~(z_i, u)` and `eta*(z_j | z_i, u)` is the mass that
//! `eta(. | z_i, u)` puts on bin `j`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::belief::{belief_mdp_step, expected_cost, Belief};
use crate::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::mdp::{self, FiniteMdp, SolvedModel};
use crate::metrics::{l1, wasserstein1};
use crate::model::FinitePomdp;
use crate::simulate::{ActionDist, History, Policy};

pub const DEFAULT_GRID_CAP: usize = 100_000;
pub const DEFAULT_SAMPLES_PER_BIN: usize = 50;
const TIE_TOL: f64 = 1e-12;

/// Number of compositions of `resolution` into `n` parts, `C(M + n - 1, n - 1)`.
pub fn lattice_size(n: usize, resolution: usize) -> u128 {
    let mut c: u128 = 1;
    let top = (resolution + n - 1) as u128;
    for i in 0..(n - 1) as u128 {
        c = c * (top - i) / (i + 1);
    }
    c
}

/// All beliefs with coordinates in `(1/M) Z`, in descending lexicographic order.
pub fn lattice(n: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || resolution == 0 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: "state count and resolution must be positive".into(),
        });
    }
    let size = lattice_size(n, resolution);
    if size > DEFAULT_GRID_CAP as u128 {
        return Err(Error::GridTooLarge { size, cap: DEFAULT_GRID_CAP });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut parts = vec![0usize; n];
    compositions(&mut parts, 0, resolution, &mut |p| {
        out.push(p.iter().map(|&c| c as f64 / resolution as f64).collect());
    });
    Ok(out)
}

fn compositions(parts: &mut [usize], pos: usize, left: usize, emit: &mut impl FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = left;
        emit(parts);
        return;
    }
    for c in (0..=left).rev() {
        parts[pos] = c;
        compositions(parts, pos + 1, left - c, emit);
    }
}

/// Type lattice of resolution `M` with nearest-representative map `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    n: usize,
    resolution: usize,
    reps: Vec<Vec<f64>>,
}

impl BeliefGrid {
    pub fn new(n: usize, resolution: usize) -> Result<Self> {
        Ok(Self { n, resolution, reps: lattice(n, resolution)? })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn representative(&self, i: usize) -> &[f64] {
        &self.reps[i]
    }

    pub fn representatives(&self) -> &[Vec<f64>] {
        &self.reps
    }

    /// Index of the L1-nearest representative; ties within 1e-12 go to the
    /// smallest index.
    pub fn quantize(&self, pi: &[f64]) -> usize {
        if self.n == 2 {
            return self.quantize_line(pi);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, r) in self.reps.iter().enumerate() {
            let d = l1(pi, r);
            if d < best_d - TIE_TOL {
                best = i;
                best_d = d;
            }
        }
        best
    }

    // Two states: representatives are (1 - j/M, j/M) at index j.
    fn quantize_line(&self, pi: &[f64]) -> usize {
        let m = self.resolution as f64;
        let centre = (pi[1] * m).round().clamp(0.0, m) as usize;
        let lo = centre.saturating_sub(1);
        let hi = (centre + 1).min(self.resolution);
        let mut best = lo;
        let mut best_d = f64::INFINITY;
        for i in lo..=hi {
            let d = l1(pi, &self.reps[i]);
            if d < best_d - TIE_TOL {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Upper bound on the W1 diameter of any bin: twice the L1 covering
    /// radius `2 floor(n/2) ceil(n/2) / (n M)` of the lattice, scaled by `D/2`.
    pub fn w1_diameter_bound(&self, diameter: f64) -> f64 {
        let n = self.n as f64;
        let fl = (self.n / 2) as f64;
        let ce = self.n.div_ceil(2) as f64;
        diameter * 2.0 * fl * ce / (n * self.resolution as f64)
    }
}

pub fn build_grid(model: &FinitePomdp, resolution: usize) -> Result<BeliefGrid> {
    BeliefGrid::new(model.n_states(), resolution)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbarParams {
    pub samples_per_bin: usize,
    pub seed: u64,
}

impl Default for LbarParams {
    fn default() -> Self {
        Self { samples_per_bin: DEFAULT_SAMPLES_PER_BIN, seed: 0 }
    }
}

/// Finite MDP over grid representatives.
#[derive(Debug, Clone)]
pub struct QuantizedBeliefModel {
    pub grid: Arc<BeliefGrid>,
    pub mdp: FiniteMdp,
    /// Sampled estimate of `max_i sup_{z, z' in Z_i} W1(z, z')` (a lower bound).
    pub lbar: f64,
    /// Analytic upper bound on the same quantity.
    pub lbar_upper: f64,
    /// Bins that received fewer samples than requested.
    pub underfilled_bins: usize,
}

impl QuantizedBeliefModel {
    pub const LBAR_CAVEAT: &'static str = "sampled estimate of a supremum over bins";
}

pub fn build_quantized_model(
    model: &FinitePomdp,
    grid: &BeliefGrid,
    params: LbarParams,
) -> Result<QuantizedBeliefModel> {
    let m = model.n_actions();
    let cells: Vec<(Vec<Vec<(usize, f64)>>, Vec<f64>)> = grid
        .representatives()
        .par_iter()
        .map(|z| {
            let pi = Belief::from_normalized(z.clone());
            let mut rows = Vec::with_capacity(m);
            let mut costs = Vec::with_capacity(m);
            for u in 0..m {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for atom in belief_mdp_step(model, &pi, u).atoms {
                    let j = grid.quantize(atom.next.probs());
                    match row.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += atom.weight,
                        None => row.push((j, atom.weight)),
                    }
                }
                row.sort_by_key(|e| e.0);
                rows.push(row);
                costs.push(expected_cost(model, z, u));
            }
            (rows, costs)
        })
        .collect();
    let (rows, costs): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let mdp = FiniteMdp::new(
        grid.len(),
        m,
        rows.into_iter().flatten().collect(),
        costs.into_iter().flatten().collect(),
    )?;
    let (lbar, underfilled_bins) = estimate_lbar(model, grid, params);
    Ok(QuantizedBeliefModel {
        grid: Arc::new(grid.clone()),
        mdp,
        lbar,
        lbar_upper: grid.w1_diameter_bound(model.diameter()),
        underfilled_bins,
    })
}

/// Uniform draw from the simplex.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

fn estimate_lbar(model: &FinitePomdp, grid: &BeliefGrid, params: LbarParams) -> (f64, usize) {
    let want = params.samples_per_bin;
    let mut bins: Vec<Vec<Vec<f64>>> = grid.representatives().iter().map(|r| vec![r.clone()]).collect();
    let mut filled = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let max_draws = 200 * want.max(1) * grid.len();
    let mut draws = 0;
    while filled < grid.len() && draws < max_draws && want > 0 {
        draws += 1;
        let z = sample_simplex(&mut rng, grid.n_states());
        let i = grid.quantize(&z);
        if bins[i].len() <= want {
            bins[i].push(z);
            if bins[i].len() == want + 1 {
                filled += 1;
            }
        }
    }
    let metric = model.metric();
    let lbar = bins
        .par_iter()
        .map(|members| {
            let mut best = 0.0f64;
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    let w = wasserstein1(&members[a], &members[b], metric).expect("same dimension");
                    best = best.max(w);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    (lbar, grid.len() - filled)
}

/// Discounted Bellman iteration on the quantized model.
pub fn value_iterate(qmodel: &QuantizedBeliefModel, beta: f64, tol: f64) -> Result<SolvedModel> {
    mdp::value_iterate(&qmodel.mdp, beta, tol, mdp::DEFAULT_ITERATION_CAP)
}

/// Grid policy extended to the whole simplex through `q`.
#[derive(Debug, Clone)]
pub struct GridPolicy {
    grid: Arc<BeliefGrid>,
    actions: Vec<usize>,
}

impl GridPolicy {
    pub fn new(grid: Arc<BeliefGrid>, actions: Vec<usize>) -> Self {
        assert_eq!(grid.len(), actions.len());
        Self { grid, actions }
    }

    pub fn action(&self, pi: &[f64]) -> usize {
        self.actions[self.grid.quantize(pi)]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

impl Policy for GridPolicy {
    fn decide(&self, history: &History<'_>) -> ActionDist {
        ActionDist::Deterministic(self.action(history.belief))
    }
}

pub fn extend_policy(solved: &SolvedModel, qmodel: &QuantizedBeliefModel) -> GridPolicy {
    GridPolicy::new(Arc::clone(&qmodel.grid), solved.policy.clone())
}

/// `2 K_1 L / ((1 - beta)^2 (1 - beta K_2))`.
pub fn quantization_bound(constants: &ModelConstants, lbar: f64, beta: f64) -> Result<f64> {
    let factor = beta * constants.k2;
    if factor >= 1.0 {
        return Err(Error::ContractivityViolated { what: "beta * K2", factor });
    }
    Ok(2.0 * constants.cost_lipschitz * lbar / ((1.0 - beta).powi(2) * (1.0 - factor)))
}

/// Policy loss of a coarse grid solution measured on a reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationReport {
    pub resolution: usize,
    pub reference_resolution: usize,
    /// `max_j (J(z_j, coarse policy) - J*(z_j))` over reference representatives.
    pub loss: f64,
    /// Smallest per-node difference; negative values reflect solver tolerance.
    pub min_gap: f64,
    pub lbar: f64,
    pub lbar_upper: f64,
    /// Bound with the sampled `lbar`, or the violated contraction factor.
    pub bound: std::result::Result<f64, f64>,
    pub bound_upper: std::result::Result<f64, f64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub qmodel: QuantizedBeliefModel,
    pub solved: SolvedModel,
}

pub fn solve_reference(
    model: &FinitePomdp,
    resolution: usize,
    beta: f64,
    tol: f64,
) -> Result<ReferenceSolution> {
    let grid = build_grid(model, resolution)?;
    let qmodel = build_quantized_model(model, &grid, LbarParams { samples_per_bin: 0, seed: 0 })?;
    let solved = value_iterate(&qmodel, beta, tol)?;
    Ok(ReferenceSolution { qmodel, solved })
}

pub fn measure_quantization_loss(
    model: &FinitePomdp,
    constants: &ModelConstants,
    resolution: usize,
    reference: &ReferenceSolution,
    beta: f64,
    tol: f64,
    lbar_params: LbarParams,
) -> Result<QuantizationReport> {
    let grid = build_grid(model, resolution)?;
    let coarse = build_quantized_model(model, &grid, lbar_params)?;
    let solved = value_iterate(&coarse, beta, tol)?;
    let policy = extend_policy(&solved, &coarse);
    let ref_grid = &reference.qmodel.grid;
    let actions: Vec<usize> = ref_grid.representatives().iter().map(|z| policy.action(z)).collect();
    let values = mdp::evaluate_policy(&reference.qmodel.mdp, &actions, beta, tol)?;
    let gaps: Vec<f64> = values.iter().zip(&reference.solved.values).map(|(a, b)| a - b).collect();
    let loss = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let as_pair = |r: Result<f64>| match r {
        Ok(v) => Ok(v),
        Err(Error::ContractivityViolated { factor, .. }) => Err(factor),
        Err(_) => Err(f64::NAN),
    };
    Ok(QuantizationReport {
        resolution,
        reference_resolution: ref_grid.resolution(),
        loss,
        min_gap,
        lbar: coarse.lbar,
        lbar_upper: coarse.lbar_upper,
        bound: as_pair(quantization_bound(constants, coarse.lbar, beta)),
        bound_upper: as_pair(quantization_bound(constants, coarse.lbar_upper, beta)),
    })
}

/// Columns `index,z0..z{n-1},value,action`.
pub fn solved_csv(grid: &BeliefGrid, solved: &SolvedModel) -> String {
    let mut out = String::from("index");
    for i in 0..grid.n_states() {
        let _ = write!(out, ",z{i}");
    }
    out.push_str(",value,action\n");
    for (i, z) in grid.representatives().iter().enumerate() {
        let _ = write!(out, "{i}");
        for p in z {
            let _ = write!(out, ",{p}");
        }
        let _ = writeln!(out, ",{},{}", solved.values[i], solved.policy[i]);
    }
    out
}
