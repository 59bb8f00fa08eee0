//! Reference models and random model generators for tests and benches.

use rand::Rng;

use crate::model::{parse_model, FinitePomdp, ModelParts};

pub const TWOSTATE_TEXT: &str = include_str!("../fixtures/twostate.pomdp");

/// The two-state, two-action reference model.
pub fn twostate() -> FinitePomdp {
    parse_model(TWOSTATE_TEXT).expect("bundled fixture is valid")
}

fn random_row<R: Rng + ?Sized>(rng: &mut R, len: usize, min_mass: f64) -> Vec<f64> {
    // Exponential spacings give a uniform Dirichlet draw.
    let mut row: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = row.iter().sum();
    let floor = min_mass / len as f64;
    for v in &mut row {
        *v = floor + (1.0 - min_mass) * *v / s;
    }
    renormalize(&mut row);
    row
}

/// Rescales so the float sum is 1 to within an ulp or two.
fn renormalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
    let s: f64 = row.iter().sum();
    let last = row.len() - 1;
    row[last] += 1.0 - s;
    if row[last] < 0.0 {
        row[last] = 0.0;
    }
}

fn names(prefix: &str, len: usize) -> Vec<String> {
    (0..len).map(|i| format!("{prefix}{i}")).collect()
}

/// Random model with dense kernels; `min_mass` in `[0, 1)` is spread evenly
/// over every row so all entries are at least `min_mass / len`.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    k: usize,
    min_mass: f64,
) -> FinitePomdp {
    let transition = (0..m).map(|_| (0..n).map(|_| random_row(rng, n, min_mass)).collect()).collect();
    let channel = (0..n).map(|_| random_row(rng, k, min_mass)).collect();
    let cost = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    FinitePomdp::from_parts(ModelParts {
        states: names("s", n),
        actions: names("a", m),
        observations: names("o", k),
        transition,
        channel,
        cost,
        discount: 0.9,
        coords: None,
        dist: None,
    })
    .expect("generated rows are stochastic")
}

/// Random model whose transition rows are pulled towards a common row per
/// action, so `delta~(T) >= overlap`; with `overlap > 0.5` the TV stability
/// factor `(1 - delta~)(2 - delta(Q))` is below 1.
pub fn random_contractive_model<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    k: usize,
    overlap: f64,
) -> FinitePomdp {
    let base = random_model(rng, n, m, k, 0.0);
    let mut parts = base.to_parts();
    for block in &mut parts.transition {
        let common = random_row(rng, n, 0.0);
        for row in block.iter_mut() {
            for (v, c) in row.iter_mut().zip(&common) {
                *v = overlap * c + (1.0 - overlap) * *v;
            }
            renormalize(row);
        }
    }
    FinitePomdp::from_parts(parts).expect("mixtures of stochastic rows are stochastic")
}

/// Replaces the channel by the identity (requires `k == n`).
pub fn with_revealing_channel(model: &FinitePomdp) -> FinitePomdp {
    let mut parts = model.to_parts();
    let n = model.n_states();
    parts.observations = names("o", n);
    parts.channel = (0..n).map(|x| (0..n).map(|y| f64::from(u8::from(x == y))).collect()).collect();
    FinitePomdp::from_parts(parts).expect("identity channel is stochastic")
}

/// Replaces every cost entry by `c0`.
pub fn with_constant_cost(model: &FinitePomdp, c0: f64) -> FinitePomdp {
    let mut parts = model.to_parts();
    for row in &mut parts.cost {
        row.fill(c0);
    }
    FinitePomdp::from_parts(parts).expect("constant cost is valid")
}

/// Replaces the discount factor.
pub fn with_discount(model: &FinitePomdp, beta: f64) -> FinitePomdp {
    let mut parts = model.to_parts();
    parts.discount = beta;
    FinitePomdp::from_parts(parts).expect("discount in (0,1)")
}
