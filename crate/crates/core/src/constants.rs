//! Scalar constants of a model that enter the stability and approximation
//! bounds.

use crate::belief::{correct_in_place, predict_into, Belief};
use crate::error::{Error, Result};
use crate::markov::invariant_prior;
use crate::metrics::{dobrushin, hilbert_metric, l1, mixing_constant};
use crate::model::FinitePomdp;
use crate::quantized::lattice;

/// Default lattice resolution for the prior supremum in `K`.
pub const DEFAULT_K_RESOLUTION: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    /// `delta(Q)`
    pub dobrushin_q: f64,
    /// `min_u delta(T_u)`
    pub dobrushin_t_min: f64,
    /// TV stability factor `(1 - delta~(T)) (2 - delta(Q))`.
    pub alpha_tv: f64,
    /// `max_u max_{x != x'} ||T(.|x,u) - T(.|x',u)||_TV / d(x,x')`
    pub tv_lipschitz: f64,
    /// `K_1 = max_u max_{x != x'} |c(x,u) - c(x',u)| / d(x,x')`
    pub cost_lipschitz: f64,
    /// `K_2 = tv_lipschitz * D * (3 - 2 delta(Q)) / 2`
    pub k2: f64,
    pub diameter: f64,
    pub cost_sup: f64,
    /// `min_{x,y} Q(y|x)`
    pub eps_q: f64,
    /// Mixing constant per action; 0 for non-mixing kernels.
    pub eps_mix: Vec<f64>,
    /// Hilbert contraction rate; `None` unless every kernel mixes and `eps_q > 0`.
    pub hilbert_r: Option<f64>,
    /// `(2 / ln 3) sup h(Z_1, Z_1*)` for the default reference prior.
    pub hilbert_k: Option<f64>,
}

pub fn compute_constants(model: &FinitePomdp) -> ModelConstants {
    let n = model.n_states();
    let m = model.n_actions();
    let dobrushin_q = dobrushin(&model.channel_kernel());
    let dobrushin_t_min = (0..m)
        .map(|u| dobrushin(&model.transition_kernel(u)))
        .fold(f64::INFINITY, f64::min);
    let alpha_tv = (1.0 - dobrushin_t_min) * (2.0 - dobrushin_q);
    let metric = model.metric();
    let mut tv_lipschitz = 0.0f64;
    let mut cost_lipschitz = 0.0f64;
    for u in 0..m {
        for x in 0..n {
            for x2 in x + 1..n {
                let d = metric.get(x, x2);
                tv_lipschitz = tv_lipschitz.max(l1(model.transition_row(u, x), model.transition_row(u, x2)) / d);
                cost_lipschitz = cost_lipschitz.max((model.cost(x, u) - model.cost(x2, u)).abs() / d);
            }
        }
    }
    let diameter = model.diameter();
    let k2 = tv_lipschitz * diameter * (3.0 - 2.0 * dobrushin_q) / 2.0;
    let eps_q = (0..n)
        .flat_map(|x| model.channel_row(x).iter().copied())
        .fold(f64::INFINITY, f64::min);
    let eps_mix = (0..m)
        .map(|u| mixing_constant(&model.transition_kernel(u)).map_or(0.0, |c| c.eps))
        .collect();
    let hilbert_r = hilbert_r(model).ok();
    let hilbert_k = hilbert_r
        .and_then(|_| hilbert_k(model, &invariant_prior(model), DEFAULT_K_RESOLUTION).ok());
    ModelConstants {
        dobrushin_q,
        dobrushin_t_min,
        alpha_tv,
        tv_lipschitz,
        cost_lipschitz,
        k2,
        diameter,
        cost_sup: model.cost_sup(),
        eps_q,
        eps_mix,
        hilbert_r,
        hilbert_k,
    }
}

/// `r = max_u (1 - eps_u^2 eps) / (1 + eps_u^2 eps)`; errors name the failing
/// mixing condition.
pub fn hilbert_r(model: &FinitePomdp) -> Result<f64> {
    let eps = (0..model.n_states())
        .flat_map(|x| model.channel_row(x).iter().copied())
        .fold(f64::INFINITY, f64::min);
    if !(eps > 0.0) {
        return Err(Error::AssumptionViolated("channel has a zero entry (eps = 0)".into()));
    }
    let mut r = 0.0f64;
    for u in 0..model.n_actions() {
        let cert = mixing_constant(&model.transition_kernel(u)).map_err(|e| {
            Error::AssumptionViolated(format!(
                "transition kernel of action `{}` is not mixing: {e}",
                model.action_names()[u]
            ))
        })?;
        let a = cert.eps * cert.eps * eps;
        r = r.max((1.0 - a) / (1.0 + a));
    }
    Ok(r)
}

/// `(2 / ln 3) max h(Z_1, Z_1*)` where `Z_1` is the posterior after
/// `(y_0, u_0, y_1)` from a lattice prior and `Z_1*` the same from `reference`.
/// Both the corrected and uncorrected reference are included.
///
/// `h(F(., u, y), w)` is quasi-convex in the prior and the lattice contains the
/// simplex vertices, so the lattice maximum is the supremum.
pub fn hilbert_k(model: &FinitePomdp, reference: &Belief, resolution: usize) -> Result<f64> {
    let n = model.n_states();
    let (m, k) = (model.n_actions(), model.n_observations());
    let priors = lattice(n, resolution)?;
    let mut refs = vec![reference.probs().to_vec()];
    for y0 in 0..k {
        let mut p = reference.probs().to_vec();
        if correct_in_place(model, &mut p, y0).is_ok() {
            refs.push(p);
        }
    }
    let mut pred = vec![0.0; n];
    // F(w, u, y) for every reference w, (u, y).
    let mut ref_images = Vec::new();
    for w in &refs {
        for u in 0..m {
            for y in 0..k {
                predict_into(model, w, u, &mut pred);
                let mut img = pred.clone();
                if correct_in_place(model, &mut img, y).is_ok() {
                    ref_images.push((u, y, img));
                }
            }
        }
    }
    let mut best = 0.0f64;
    for z in &priors {
        for y0 in 0..k {
            let mut z0 = z.clone();
            if correct_in_place(model, &mut z0, y0).is_err() {
                continue;
            }
            for u in 0..m {
                predict_into(model, &z0, u, &mut pred);
                for (ru, y, img) in &ref_images {
                    if *ru != u {
                        continue;
                    }
                    let mut zi = pred.clone();
                    if correct_in_place(model, &mut zi, *y).is_ok() {
                        best = best.max(hilbert_metric(&zi, img));
                    }
                }
            }
        }
    }
    Ok(2.0 / 3f64.ln() * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn twostate_constants() {
        let c = compute_constants(&fixtures::twostate());
        assert!((c.dobrushin_q - 0.5).abs() < 1e-15);
        assert!((c.dobrushin_t_min - 0.7).abs() < 1e-15);
        assert!((c.alpha_tv - 0.45).abs() < 1e-15);
        assert!((c.tv_lipschitz - 0.6).abs() < 1e-15);
        assert_eq!(c.cost_lipschitz, 1.0);
        assert_eq!(c.diameter, 1.0);
        assert!((c.k2 - 0.6).abs() < 1e-15);
        assert!((c.eps_q - 0.2).abs() < 1e-15);
        assert!((c.eps_mix[0] - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.eps_mix[1], 1.0);
        assert!((c.hilbert_r.unwrap() - 0.9 / 1.1).abs() < 1e-12);
        assert!(c.hilbert_k.unwrap() > 0.0);
    }

    #[test]
    fn identical_rows_give_zero_lipschitz() {
        let mut parts = fixtures::twostate().to_parts();
        parts.transition[0] = vec![vec![0.3, 0.7]; 2];
        parts.transition[1] = vec![vec![0.6, 0.4]; 2];
        let c = compute_constants(&FinitePomdp::from_parts(parts).unwrap());
        assert_eq!(c.tv_lipschitz, 0.0);
        assert_eq!(c.k2, 0.0);
        assert_eq!(c.alpha_tv, 0.0);
    }

    #[test]
    fn single_state_degenerates_to_zero() {
        let m = crate::parse_model(
            "states: s\nactions: a\nobservations: o\ndiscount: 0.5\nT: a : s : s 1\nO: s : o 1\nC: s : a 2\n",
        )
        .unwrap();
        let c = compute_constants(&m);
        assert_eq!((c.diameter, c.tv_lipschitz, c.k2, c.cost_lipschitz), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn non_mixing_kernel_has_no_r() {
        let mut parts = fixtures::twostate().to_parts();
        parts.transition[0] = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = FinitePomdp::from_parts(parts).unwrap();
        assert!(matches!(hilbert_r(&m), Err(Error::AssumptionViolated(_))));
        assert_eq!(compute_constants(&m).hilbert_r, None);
    }
}
