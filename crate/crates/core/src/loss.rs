//! Binary cross-entropy, binary entropy, and the counterfactual clamping
//! loss, together with their derivatives in the predicted probability.
//!
//! Counterfactual points carry the literal label 0.5. Under the clamping
//! loss with threshold `k`, such a point is penalized only while the
//! surrogate's output sits below `k`; once it reaches `k` the loss is
//! exactly zero, so counterfactuals already inside the favorable region are
//! left alone. Substituting `k = 1` recovers plain binary cross-entropy
//! against a hard label of 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clipped to this range before any logarithm.
pub const PROB_CLIP: f64 = 1e-7;

/// Label value marking a counterfactual point.
pub const CF_LABEL: f64 = 0.5;

/// Loss used when training a surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    /// Plain binary cross-entropy on the given labels (counterfactuals are
    /// expected to arrive already labeled 1). Equivalent to clamping with
    /// `k = 1`.
    BceBaseline,
    /// Counterfactual clamping at threshold `k` in `(0, 1]`.
    Cca { k: f64 },
    /// Ablation: plain binary cross-entropy applied to the raw labels,
    /// including 0.5 — symmetric around 0.5 for counterfactual points.
    SoftBceAblation,
}

impl LossKind {
    pub fn cca(k: f64) -> Result<Self> {
        if !(k > 0.0 && k <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "clamp threshold k must lie in (0, 1], got {k}"
            )));
        }
        Ok(LossKind::Cca { k })
    }

    /// Per-sample loss for a prediction `p` and label `y` in {0, 0.5, 1}.
    pub fn loss(&self, p: f64, y: f64) -> Result<f64> {
        match *self {
            LossKind::BceBaseline => Ok(bce(p, y)),
            LossKind::Cca { k } => cca_loss(p, y, k),
            LossKind::SoftBceAblation => {
                check_label(y)?;
                Ok(soft_bce_ablation(p, y))
            }
        }
    }

    /// Derivative of the per-sample loss in `p`.
    pub fn grad(&self, p: f64, y: f64) -> Result<f64> {
        match *self {
            LossKind::BceBaseline => Ok(bce_grad(p, y)),
            LossKind::Cca { k } => cca_loss_grad(p, y, k),
            LossKind::SoftBceAblation => {
                check_label(y)?;
                Ok(bce_grad(p, y))
            }
        }
    }
}

#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Binary cross-entropy −y·ln(p) − (1−y)·ln(1−p), natural log.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clip_prob(p);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// Derivative of [`bce`] in `p`, evaluated at the clipped probability.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    let p = clip_prob(p);
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Binary entropy h(q) = −q·ln(q) − (1−q)·ln(1−q), with h(0) = h(1) = 0.
pub fn binary_entropy(q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    let mut h = 0.0;
    if q > 0.0 {
        h -= q * q.ln();
    }
    if q < 1.0 {
        h -= (1.0 - q) * (1.0 - q).ln();
    }
    h
}

fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == CF_LABEL || y == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "label must be one of 0, 0.5, 1; got {y}"
        )))
    }
}

/// Counterfactual clamping loss at threshold `k`.
///
/// For the counterfactual label 0.5 this is `bce(p, k) − h(k)` strictly
/// below `k` and 0 at `k` and beyond; for hard labels it is plain
/// [`bce`]. The loss is continuous at `p = k` since `bce(k, k) = h(k)`;
/// taking the zero branch at the point itself keeps the identity
/// `cca_loss(k, 0.5, k) = 0` exact even at `k = 1`, where clipping would
/// otherwise perturb the penalized expression.
pub fn cca_loss(p: f64, y: f64, k: f64) -> Result<f64> {
    check_label(y)?;
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "clamp threshold k must lie in (0, 1], got {k}"
        )));
    }
    if y == CF_LABEL {
        // The raw output decides the branch: at p = k the loss is zero by
        // continuity, and clipping must not push the comparison across k
        // when k = 1.
        if p < k {
            // The −h(k) offset makes the loss vanish as p reaches k and
            // keeps it nonnegative below.
            Ok(bce(p, k) - binary_entropy(k))
        } else {
            Ok(0.0)
        }
    } else {
        Ok(bce(p, y))
    }
}

/// Derivative of [`cca_loss`] in `p`. At the kink `p = k` the flat side
/// wins, so the derivative is 0 there — except at `k = 1`, where clipping
/// keeps `p` strictly below `k` and the loss is plain cross-entropy against
/// a label of 1.
pub fn cca_loss_grad(p: f64, y: f64, k: f64) -> Result<f64> {
    check_label(y)?;
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "clamp threshold k must lie in (0, 1], got {k}"
        )));
    }
    let p = clip_prob(p);
    if y == CF_LABEL {
        if p < k {
            Ok(bce_grad(p, k))
        } else {
            Ok(0.0)
        }
    } else {
        Ok(bce_grad(p, y))
    }
}

/// Ablation loss: cross-entropy applied directly to labels 0, 0.5, 1.
pub fn soft_bce_ablation(p: f64, y: f64) -> f64 {
    bce(p, y)
}
