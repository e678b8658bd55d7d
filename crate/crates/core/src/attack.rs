//! The three reconstruction strategies.
//!
//! `baseline_attack` trains on oracle labels with counterfactuals treated
//! as ordinary label-1 points; `cca_attack` labels counterfactuals 0.5 and
//! trains with the clamping loss; `polytope_attack` intersects tangent
//! halfspaces at the counterfactuals of rejected queries, which
//! circumscribes a convex favorable region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::nn::{
    train, BinaryClassifier, DenseNetwork, NetworkArchitecture, TrainingConfig,
};
use crate::loss::LossKind;
use crate::oracle::TargetOracle;

pub use crate::nn::LabeledPoint;

/// One supporting halfspace: the favorable side is
/// `{z : normal·(z − anchor) ≥ 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// Intersection of supporting halfspaces; the empty intersection accepts
/// everything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceModel {
    pub halfspaces: Vec<Halfspace>,
}

impl HalfspaceModel {
    pub fn new() -> Self {
        HalfspaceModel::default()
    }

    /// Adds a halfspace, normalizing `normal` to unit length.
    pub fn push(&mut self, normal: Vec<f64>, anchor: Vec<f64>) -> Result<()> {
        if normal.len() != anchor.len() {
            return Err(Error::DimensionMismatch {
                expected: normal.len(),
                actual: anchor.len(),
            });
        }
        let n = norm2(&normal);
        if n < 1e-12 {
            return Err(Error::InvalidInput("halfspace normal is zero".into()));
        }
        self.halfspaces.push(Halfspace {
            normal: normal.into_iter().map(|v| v / n).collect(),
            anchor,
        });
        Ok(())
    }

    /// 1 iff `x` lies on the favorable side of every halfspace (boundary
    /// inclusive); 1 for the empty model.
    pub fn predict(&self, x: &[f64]) -> u8 {
        for h in &self.halfspaces {
            debug_assert_eq!(h.normal.len(), x.len());
            let mut s = 0.0;
            for ((n, xi), a) in h.normal.iter().zip(x).zip(&h.anchor) {
                s += n * (xi - a);
            }
            if s < 0.0 {
                return 0;
            }
        }
        1
    }

    pub fn serialize(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("halfspace serialization cannot fail")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let model: HalfspaceModel = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("malformed halfspace payload: {e}")))?;
        for (i, h) in model.halfspaces.iter().enumerate() {
            if h.normal.len() != h.anchor.len() {
                return Err(Error::Format(format!(
                    "halfspace {i}: normal and anchor dimensions differ"
                )));
            }
            if (norm2(&h.normal) - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!(
                    "halfspace {i}: normal is not unit length"
                )));
            }
        }
        Ok(model)
    }
}

impl BinaryClassifier for HalfspaceModel {
    fn dim(&self) -> usize {
        self.halfspaces.first().map_or(0, |h| h.normal.len())
    }

    fn predict_class(&self, x: &[f64]) -> Result<u8> {
        if let Some(h) = self.halfspaces.first() {
            if h.normal.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: h.normal.len(),
                    actual: x.len(),
                });
            }
        }
        Ok(self.predict(x))
    }
}

/// Free-function form of [`HalfspaceModel::predict`].
pub fn polytope_predict(model: &HalfspaceModel, x: &[f64]) -> u8 {
    model.predict(x)
}

/// Queries the oracle for every point and assembles the labeled training
/// set. Converged counterfactuals are labeled 0.5 in clamp mode and 1
/// otherwise; failed generations contribute only the rejected query.
pub fn build_attack_set(
    oracle: &mut TargetOracle,
    queries: &[Vec<f64>],
    clamp_mode: bool,
) -> Result<Vec<LabeledPoint>> {
    let mut set = Vec::with_capacity(queries.len());
    for x in queries {
        let response = oracle.query(x)?;
        set.push(LabeledPoint::new(x.clone(), response.label as f64));
        if let Some(w) = response.counterfactual {
            set.push(LabeledPoint::new(w, if clamp_mode { 0.5 } else { 1.0 }));
        }
    }
    Ok(set)
}

/// Counterfactual clamping: counterfactuals labeled 0.5, trained with the
/// clamping loss at threshold `k`. With `k = 1` this reproduces
/// [`baseline_attack`] bit for bit under shared seeds.
pub fn cca_attack(
    oracle: &mut TargetOracle,
    queries: &[Vec<f64>],
    surrogate_arch: &NetworkArchitecture,
    cfg: &TrainingConfig,
    k: f64,
) -> Result<DenseNetwork> {
    let loss = LossKind::cca(k)?;
    let set = build_attack_set(oracle, queries, true)?;
    let surrogate = DenseNetwork::init(surrogate_arch);
    train(&surrogate, &set, cfg, loss)
}

/// The label-only attack: counterfactuals enter the training set as
/// ordinary label-1 points under plain cross-entropy.
pub fn baseline_attack(
    oracle: &mut TargetOracle,
    queries: &[Vec<f64>],
    surrogate_arch: &NetworkArchitecture,
    cfg: &TrainingConfig,
) -> Result<DenseNetwork> {
    let set = build_attack_set(oracle, queries, false)?;
    let surrogate = DenseNetwork::init(surrogate_arch);
    train(&surrogate, &set, cfg, LossKind::BceBaseline)
}

/// Outcome of [`polytope_attack`]: the circumscribing model plus the count
/// of degenerate query/counterfactual pairs that were skipped.
#[derive(Clone, Debug)]
pub struct PolytopeAttackOutcome {
    pub model: HalfspaceModel,
    pub degenerate_pairs: usize,
}

/// Builds the tangent-halfspace surrogate. Each rejected query `x` with a
/// converged counterfactual `w` contributes the halfspace anchored at `w`
/// with normal `(w − x)/‖w − x‖`; the query-to-counterfactual segment is
/// normal to the boundary at `w` for closest counterfactuals, so each
/// halfspace supports the favorable region.
pub fn polytope_attack(
    oracle: &mut TargetOracle,
    queries: &[Vec<f64>],
) -> Result<PolytopeAttackOutcome> {
    let mut model = HalfspaceModel::new();
    let mut degenerate = 0;
    for x in queries {
        let response = oracle.query(x)?;
        if response.label != 0 {
            continue;
        }
        let Some(w) = response.counterfactual else {
            continue;
        };
        let diff: Vec<f64> = w.iter().zip(x).map(|(wi, xi)| wi - xi).collect();
        if norm2(&diff) < 1e-12 {
            degenerate += 1;
            continue;
        }
        model.push(diff, w)?;
    }
    Ok(PolytopeAttackOutcome {
        model,
        degenerate_pairs: degenerate,
    })
}
