//! Numerical laboratory for finite partially observed Markov decision
//! processes: exact filtering, filter-stability experiments, quantized and
//! finite-window approximations of the belief MDP, tabular Q-learning on
//! non-Markovian state processes, and average-cost solutions.

pub mod average;
pub mod belief;
pub mod constants;
pub mod error;
pub mod fixtures;
pub mod markov;
pub mod mdp;
pub mod metrics;
pub mod model;
pub mod qlearning;
pub mod quantized;
pub mod simulate;
pub mod stability;
pub mod window;

pub use belief::{belief_mdp_step, belief_update, expected_cost, Belief, BeliefTransition};
pub use constants::{compute_constants, ModelConstants};
pub use error::{Error, Result};
pub use mdp::{AcoeSolution, FiniteMdp, SolvedModel};
pub use metrics::{KernelView, MixingCertificate, StateMetric};
pub use model::{parse_model, FinitePomdp, ModelParts};
pub use simulate::{ActionDist, History, Policy, Trajectory};
