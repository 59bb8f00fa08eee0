//! Finite Markov chain utilities: recurrent classes and stationary laws.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::condensation;
use petgraph::graph::DiGraph;
use petgraph::Direction;

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::FinitePomdp;

/// Closed communicating classes of a row-stochastic matrix, each sorted,
/// ordered by smallest member.
pub fn recurrent_classes(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = p.len();
    let mut g = DiGraph::<usize, ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let dag = condensation(g, true);
    let mut classes: Vec<Vec<usize>> = dag
        .node_indices()
        .filter(|&c| dag.neighbors_directed(c, Direction::Outgoing).next().is_none())
        .map(|c| {
            let mut members = dag[c].clone();
            members.sort_unstable();
            members
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

/// Unique stationary distribution of `p`; errors unless the chain has exactly
/// one recurrent class.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    let classes = recurrent_classes(p);
    if classes.len() != 1 {
        return Err(Error::ErgodicityViolation(format!(
            "{} recurrent classes",
            classes.len()
        )));
    }
    // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::ErgodicityViolation("singular stationary system".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= s;
    }
    Ok(pi)
}

/// Invariant law of the hidden chain under uniformly random actions; the
/// uniform belief when that chain has several recurrent classes.
pub fn invariant_prior(model: &FinitePomdp) -> Belief {
    match stationary_distribution(&model.exploration_kernel()) {
        Ok(pi) => Belief::from_normalized(pi),
        Err(e) => {
            log::warn!("no unique invariant law under exploration ({e}); using uniform prior");
            Belief::uniform(model.n_states())
        }
    }
}
