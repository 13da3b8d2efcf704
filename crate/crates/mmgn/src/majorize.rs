//! Quadratic majorization of the negative log-likelihood.
//!
//! Around an anchor `Theta~` the objective is bounded above by the quadratic
//!
//! ```text
//! g(Theta | Theta~) = L/2 * sum_omega (theta - theta~ - x)^2 + c
//! ```
//!
//! where `L` is the link's curvature bound, `x` is the per-entry shift
//! `(1/L) * y * f(theta~) / F(y theta~)` (see [`LinkModel::mm_ratio`]) and the
//! constant `c = l(Theta~) - L/2 * sum x^2` makes the bound touch the
//! objective at the anchor. Minimizing `g` over factored updates is the least
//! squares problem the Gauss-Newton step solves.

use crate::error::Result;
use crate::link::LinkModel;
use crate::objective::{nll_of_theta, predict_into, predict_on_omega, FactorPair};
use crate::obs::ObservationSet;
use crate::util::Accumulator;

/// Majorization target built at an anchor point.
#[derive(Clone, Debug)]
pub struct MmTarget {
    /// Per-entry shifts `x` in observation storage order; `-lipschitz * x` is
    /// the objective gradient on the observed entries.
    pub x_values: Vec<f64>,
    /// Objective value at the anchor.
    pub anchor_ll: f64,
    /// Curvature bound `L` of the majorizer.
    pub lipschitz: f64,
}

/// Build the majorization target at `anchor`.
pub fn build_target(
    anchor: &FactorPair,
    obs: &ObservationSet,
    model: &LinkModel,
) -> Result<MmTarget> {
    let theta = predict_on_omega(anchor, obs)?;
    let mut x_values = vec![0.0; obs.len()];
    for (k, (_, _, y)) in obs.iter().enumerate() {
        x_values[k] = model.mm_ratio(y, theta[k]);
    }
    let anchor_ll = nll_of_theta(&theta, obs, model);
    Ok(MmTarget { x_values, anchor_ll, lipschitz: model.lipschitz() })
}

/// Evaluate the majorizer `g(candidate | anchor)`.
///
/// Exactly tangent at the anchor: both quadratic sums run over identical
/// per-entry terms in identical order when `candidate` equals `anchor`, so the
/// two cancel bitwise and the value reduces to `anchor_ll`.
pub fn surrogate_value(
    target: &MmTarget,
    candidate: &FactorPair,
    anchor: &FactorPair,
    obs: &ObservationSet,
) -> Result<f64> {
    let theta_anchor = predict_on_omega(anchor, obs)?;
    let mut theta_cand = vec![0.0; obs.len()];
    predict_into(candidate, obs, &mut theta_cand);
    let mut quad = Accumulator::new();
    let mut xsq = Accumulator::new();
    for k in 0..obs.len() {
        let d = theta_cand[k] - theta_anchor[k] - target.x_values[k];
        quad.add(d * d);
        let x = target.x_values[k];
        xsq.add(x * x);
    }
    Ok(0.5 * target.lipschitz * (quad.value() - xsq.value()) + target.anchor_ll)
}
