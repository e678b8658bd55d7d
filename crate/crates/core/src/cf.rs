//! Counterfactual generators.
//!
//! [`mccf`] is a gradient-based minimum-cost search: minimize
//! `c(x, w) + λ·(m(w) − (0.5 + δ))²` over the unit cube, escalating λ
//! geometrically until the thresholded class flips.
//! [`analytic_linear_cf`] and [`analytic_sphere_cf`] are exact closed-form
//! generators for the two analytic target families and double as test
//! oracles for the gradient search. [`one_nearest_neighbor_cf`] returns
//! realistic counterfactuals from a pool of favorable instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, euclidean, norm1, norm2};
use crate::nn::DifferentiableClassifier;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    L2,
    L1,
}

/// Search hyperparameters for [`mccf`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CfConfig {
    pub cost: CostKind,
    /// Target margin δ above 0.5 for the counterfactual's output
    /// probability; keeps generated points just inside the favorable side.
    pub target_margin: f64,
    /// Rounds of λ escalation.
    pub max_outer: usize,
    /// Descent steps per round.
    pub max_inner: usize,
    /// Initial step length; decays geometrically within each round.
    pub step: f64,
    pub lambda_init: f64,
    pub lambda_growth: f64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            cost: CostKind::L2,
            target_margin: 1e-3,
            max_outer: 30,
            max_inner: 200,
            step: 0.05,
            lambda_init: 0.1,
            lambda_growth: 2.0,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_margin > 0.0 && self.target_margin < 0.5) {
            return Err(Error::InvalidInput(
                "target_margin must lie in (0, 0.5)".into(),
            ));
        }
        if self.step <= 0.0 || self.lambda_init <= 0.0 {
            return Err(Error::InvalidInput(
                "step and lambda_init must be positive".into(),
            ));
        }
        if self.lambda_growth <= 1.0 {
            return Err(Error::InvalidInput(
                "lambda_growth must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a counterfactual search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CfResult {
    pub w: Vec<f64>,
    /// Whether the thresholded class actually flipped.
    pub converged: bool,
    /// Cost `c(x, w)` under the generator's cost function.
    pub cost: f64,
    /// `|m(w) − 0.5|`; `None` for generators that never see the model.
    pub boundary_gap: Option<f64>,
}

fn cost_value(x: &[f64], w: &[f64], cost: CostKind) -> f64 {
    match cost {
        CostKind::L2 => euclidean(x, w),
        CostKind::L1 => {
            let diff: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - b).collect();
            norm1(&diff)
        }
    }
}

/// Gradient (or subgradient) of the cost in `w`; zero where `w = x`.
fn cost_grad(x: &[f64], w: &[f64], cost: CostKind, out: &mut [f64]) {
    match cost {
        CostKind::L2 => {
            let dist = euclidean(x, w);
            if dist < 1e-12 {
                out.fill(0.0);
            } else {
                for ((o, wi), xi) in out.iter_mut().zip(w).zip(x) {
                    *o = (wi - xi) / dist;
                }
            }
        }
        CostKind::L1 => {
            for ((o, wi), xi) in out.iter_mut().zip(w).zip(x) {
                let diff = wi - xi;
                *o = if diff.abs() < 1e-12 {
                    0.0
                } else {
                    diff.signum()
                };
            }
        }
    }
}

/// One round of normalized-gradient descent on `c(x, w) + λ(p(w) − t)²`,
/// with the step length decaying geometrically. Normalization matters:
/// raw gradient magnitudes span many orders across λ rounds and target
/// steepnesses, so fixed unnormalized steps either stall in the sigmoid's
/// flat tails or overshoot across the whole cube. Returns true if the
/// round stopped inside the band `0.5 ≤ p ≤ 0.5 + 2δ`.
fn descend_round<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    x: &[f64],
    w: &mut [f64],
    lambda: f64,
    cfg: &CfConfig,
    stop_in_band: bool,
) -> Result<bool> {
    let t = 0.5 + cfg.target_margin;
    let mut grad = vec![0.0; w.len()];
    let mut cgrad = vec![0.0; w.len()];
    let mut step = cfg.step;
    for _ in 0..cfg.max_inner {
        let p = model.prob(w)?;
        if stop_in_band && p >= 0.5 && p <= 0.5 + 2.0 * cfg.target_margin {
            return Ok(true);
        }
        let pgrad = model.prob_grad(w)?;
        cost_grad(x, w, cfg.cost, &mut cgrad);
        let coeff = 2.0 * lambda * (p - t);
        for ((g, c), pg) in grad.iter_mut().zip(&cgrad).zip(&pgrad) {
            *g = c + coeff * pg;
        }
        let gnorm = norm2(&grad);
        if gnorm < 1e-12 {
            // Stationary: typically a dead sigmoid far from the boundary,
            // which only a larger λ can move.
            return Ok(false);
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi = (*wi - step * g / gnorm).clamp(0.0, 1.0);
        }
        step *= 0.98;
    }
    Ok(false)
}

/// Minimum-cost counterfactual search against any differentiable model:
/// descent on the penalized objective with geometric λ escalation until
/// the thresholded class flips, then one warm-started polish round.
pub fn mccf<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    x: &[f64],
    cfg: &CfConfig,
) -> Result<CfResult> {
    cfg.validate()?;
    if model.predict_class(x)? == 1 {
        return Err(Error::Precondition(
            "query already classifies favorably; no counterfactual to generate".into(),
        ));
    }
    let mut w = x.to_vec();
    let mut lambda = cfg.lambda_init;
    let mut flipped = false;
    for _ in 0..cfg.max_outer {
        let p_before = model.prob(&w)?;
        if descend_round(model, x, &mut w, lambda, cfg, true)?
            || model.predict_class(&w)? == 1
        {
            flipped = true;
            break;
        }
        // A round that left the output untouched means the sigmoid is
        // saturated at this distance; per-round growth alone may never
        // catch up with the vanishing gradient, so escalate harder.
        let stalled = (model.prob(&w)? - p_before).abs() < 1e-9;
        lambda *= if stalled {
            cfg.lambda_growth.powi(4)
        } else {
            cfg.lambda_growth
        };
        lambda = lambda.min(1e30);
    }

    if flipped && cfg.max_inner > 0 {
        // The flip may have happened under a λ orders of magnitude past
        // the point where the cost and clamp forces balance; at such λ the
        // tangential pull toward the cost minimum is drowned out. Rerun
        // one round from the found point with λ chosen so the equilibrium
        // sits half a margin inside the favorable region.
        let pgrad_norm = norm2(&model.prob_grad(&w)?);
        if pgrad_norm > 1e-9 {
            let lambda_polish = 1.0 / (cfg.target_margin * pgrad_norm);
            let mut candidate = w.clone();
            descend_round(model, x, &mut candidate, lambda_polish, cfg, false)?;
            if model.predict_class(&candidate)? == 1 {
                w = candidate;
            }
        }
    }

    let p = model.prob(&w)?;
    Ok(CfResult {
        converged: p >= 0.5,
        cost: cost_value(x, &w, cfg.cost),
        boundary_gap: Some((p - 0.5).abs()),
        w,
    })
}

/// Nearest favorable instance under L2 distance; ties break toward the
/// lowest pool index.
pub fn one_nearest_neighbor_cf(x: &[f64], favorable_pool: &[Vec<f64>]) -> Result<CfResult> {
    if favorable_pool.is_empty() {
        return Err(Error::InvalidInput(
            "favorable pool must be nonempty".into(),
        ));
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, candidate) in favorable_pool.iter().enumerate() {
        if candidate.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: candidate.len(),
            });
        }
        let dist = euclidean(x, candidate);
        if dist < best_dist {
            best_dist = dist;
            best = i;
        }
    }
    Ok(CfResult {
        w: favorable_pool[best].clone(),
        converged: true,
        cost: best_dist,
        boundary_gap: None,
    })
}

/// Closest counterfactual for the linear boundary `a·x + b = 0`: the
/// orthogonal projection, nudged `delta` along `a/‖a‖` into the favorable
/// side. Pass `delta = 0` for the exact boundary point.
pub fn analytic_linear_cf(a: &[f64], b: f64, x: &[f64], delta: f64) -> Result<Vec<f64>> {
    if a.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: x.len(),
        });
    }
    let norm_sq = dot(a, a);
    if norm_sq < 1e-24 {
        return Err(Error::InvalidInput("boundary normal must be nonzero".into()));
    }
    let norm = norm_sq.sqrt();
    let scale = (dot(a, x) + b) / norm_sq;
    Ok(x.iter()
        .zip(a)
        .map(|(xi, ai)| xi - scale * ai + delta * ai / norm)
        .collect())
}

/// Closest point on the sphere `‖x − center‖ = radius`: the radial
/// projection. Exact: the result satisfies `‖w − center‖ = radius` to
/// machine precision.
pub fn analytic_sphere_cf(center: &[f64], radius: f64, x: &[f64]) -> Result<Vec<f64>> {
    if center.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            actual: x.len(),
        });
    }
    let dist = euclidean(x, center);
    if dist < 1e-12 {
        return Err(Error::InvalidInput(
            "projection direction undefined at the sphere center".into(),
        ));
    }
    Ok(center
        .iter()
        .zip(x)
        .map(|(c, xi)| c + radius * (xi - c) / dist)
        .collect())
}
