//! The queryable prediction service being attacked: thresholded labels for
//! every query, plus a one-sided counterfactual whenever the label is 0.
//! Each query consumes one budget unit whether or not a counterfactual is
//! attached.

use serde::{Deserialize, Serialize};

use crate::cf::{self, CfConfig, CfResult};
use crate::error::{Error, Result};
use crate::linalg::{dot, euclidean};
use crate::nn::{sigmoid, BinaryClassifier, DenseNetwork, DifferentiableClassifier};

/// The model behind the oracle: a trained network or one of the two
/// analytic families used by the theory experiments.
#[derive(Clone, Debug)]
pub enum Target {
    Network(DenseNetwork),
    /// Favorable side: `a·x + b ≥ 0`. Output probability σ(a·x + b), so a
    /// steeper boundary is expressed by scaling `a` and `b` together.
    Linear { a: Vec<f64>, b: f64 },
    /// Favorable side: `‖x − center‖ ≤ radius`. Output probability
    /// σ(radius − ‖x − center‖).
    Sphere { center: Vec<f64>, radius: f64 },
}

impl Target {
    pub fn network(net: DenseNetwork) -> Self {
        Target::Network(net)
    }

    pub fn linear(a: Vec<f64>, b: f64) -> Self {
        Target::Linear { a, b }
    }

    pub fn sphere(center: Vec<f64>, radius: f64) -> Self {
        Target::Sphere { center, radius }
    }

    /// Pre-sigmoid score; zero exactly on the decision boundary.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            Target::Network(net) => net.logit(x),
            Target::Linear { a, b } => {
                check_dim(a.len(), x)?;
                Ok(dot(a, x) + b)
            }
            Target::Sphere { center, radius } => {
                check_dim(center.len(), x)?;
                Ok(radius - euclidean(x, center))
            }
        }
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: x.len(),
        });
    }
    Ok(())
}

impl BinaryClassifier for Target {
    fn dim(&self) -> usize {
        match self {
            Target::Network(net) => net.input_dim(),
            Target::Linear { a, .. } => a.len(),
            Target::Sphere { center, .. } => center.len(),
        }
    }

    fn predict_class(&self, x: &[f64]) -> Result<u8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { 0 })
    }
}

impl DifferentiableClassifier for Target {
    fn prob(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(x)?))
    }

    fn prob_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Network(net) => net.input_gradient(x),
            Target::Linear { a, b } => {
                check_dim(a.len(), x)?;
                let p = sigmoid(dot(a, x) + b);
                Ok(a.iter().map(|ai| p * (1.0 - p) * ai).collect())
            }
            Target::Sphere { center, radius } => {
                check_dim(center.len(), x)?;
                let dist = euclidean(x, center);
                if dist < 1e-12 {
                    return Ok(vec![0.0; x.len()]);
                }
                let p = sigmoid(radius - dist);
                Ok(x.iter()
                    .zip(center)
                    .map(|(xi, c)| -p * (1.0 - p) * (xi - c) / dist)
                    .collect())
            }
        }
    }
}

/// How the oracle produces counterfactuals for rejected queries.
#[derive(Clone, Debug)]
pub enum CfGenerator {
    /// Gradient-based minimum-cost search.
    Mccf(CfConfig),
    /// Closed-form closest counterfactuals; only available for analytic
    /// targets. `nudge` displaces linear projections into the favorable
    /// side (sphere projections are always exact).
    AnalyticClosest { nudge: f64 },
    /// Nearest favorable instance from a fixed pool.
    OneNearestNeighbor { pool: Vec<Vec<f64>> },
}

/// Generates a counterfactual for `x` under `target` without budget
/// accounting. `x` must classify as 0.
pub fn generate_counterfactual(
    target: &Target,
    generator: &CfGenerator,
    x: &[f64],
) -> Result<CfResult> {
    match generator {
        CfGenerator::Mccf(cfg) => cf::mccf(target, x, cfg),
        CfGenerator::AnalyticClosest { nudge } => {
            let w = match target {
                Target::Linear { a, b } => cf::analytic_linear_cf(a, *b, x, *nudge)?,
                Target::Sphere { center, radius } => {
                    cf::analytic_sphere_cf(center, *radius, x)?
                }
                Target::Network(_) => {
                    return Err(Error::InvalidInput(
                        "no closed-form counterfactual for network targets".into(),
                    ))
                }
            };
            let w = ensure_favorable(target, w)?;
            let gap = (target.prob(&w)? - 0.5).abs();
            Ok(CfResult {
                cost: euclidean(x, &w),
                converged: true,
                boundary_gap: Some(gap),
                w,
            })
        }
        CfGenerator::OneNearestNeighbor { pool } => {
            let mut r = cf::one_nearest_neighbor_cf(x, pool)?;
            if target.predict_class(&r.w)? != 1 {
                return Err(Error::Precondition(
                    "favorable pool contains a point the target rejects".into(),
                ));
            }
            r.boundary_gap = Some((target.prob(&r.w)? - 0.5).abs());
            Ok(r)
        }
    }
}

/// Exact boundary projections can land a few ulps on the rejected side.
/// Push along the inward score gradient direction until the thresholded
/// class is 1; the displacement stays within ~1e-11 of the exact point.
fn ensure_favorable(target: &Target, mut w: Vec<f64>) -> Result<Vec<f64>> {
    if target.predict_class(&w)? == 1 {
        return Ok(w);
    }
    let dir: Vec<f64> = match target {
        Target::Linear { a, .. } => {
            let n = crate::linalg::norm2(a);
            a.iter().map(|ai| ai / n).collect()
        }
        Target::Sphere { center, .. } => {
            let dist = euclidean(&w, center);
            center
                .iter()
                .zip(&w)
                .map(|(c, wi)| (c - wi) / dist)
                .collect()
        }
        Target::Network(_) => unreachable!("analytic generator only"),
    };
    let mut eps = 1e-13;
    for _ in 0..8 {
        for (wi, d) in w.iter_mut().zip(&dir) {
            *wi += eps * d;
        }
        if target.predict_class(&w)? == 1 {
            return Ok(w);
        }
        eps *= 4.0;
    }
    Err(Error::Numeric(
        "could not nudge analytic counterfactual across the boundary".into(),
    ))
}

/// One answer from the oracle: the thresholded label, and for rejected
/// queries the generated counterfactual. `cf_converged` is false only when
/// a counterfactual was attempted and the search failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub label: u8,
    pub counterfactual: Option<Vec<f64>>,
    pub cf_converged: bool,
}

/// Result of a batched query run; `truncated` marks a budget cut-off.
#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub responses: Vec<OracleResponse>,
    pub truncated: bool,
}

/// The MLaaS interface with query accounting. A prediction and its
/// counterfactual count as a single query unit.
#[derive(Clone, Debug)]
pub struct TargetOracle {
    target: Target,
    generator: CfGenerator,
    budget: Option<u64>,
    queries_used: u64,
}

impl TargetOracle {
    pub fn new(target: Target, generator: CfGenerator) -> Self {
        TargetOracle {
            target,
            generator,
            budget: None,
            queries_used: 0,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn query(&mut self, x: &[f64]) -> Result<OracleResponse> {
        if let Some(budget) = self.budget {
            if self.queries_used >= budget {
                return Err(Error::BudgetExhausted {
                    used: self.queries_used,
                });
            }
        }
        self.queries_used += 1;
        let label = self.target.predict_class(x)?;
        if label == 1 {
            return Ok(OracleResponse {
                label,
                counterfactual: None,
                cf_converged: true,
            });
        }
        let result = generate_counterfactual(&self.target, &self.generator, x)?;
        if result.converged {
            Ok(OracleResponse {
                label,
                counterfactual: Some(result.w),
                cf_converged: true,
            })
        } else {
            Ok(OracleResponse {
                label,
                counterfactual: None,
                cf_converged: false,
            })
        }
    }

    /// Element-wise [`query`](Self::query) preserving order. Stops at the
    /// budget boundary and flags the truncation instead of erroring.
    pub fn batch_query(&mut self, xs: &[Vec<f64>]) -> Result<BatchOutcome> {
        let mut responses = Vec::with_capacity(xs.len());
        for x in xs {
            match self.query(x) {
                Ok(r) => responses.push(r),
                Err(Error::BudgetExhausted { .. }) => {
                    return Ok(BatchOutcome {
                        responses,
                        truncated: true,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(BatchOutcome {
            responses,
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_oracle() -> TargetOracle {
        TargetOracle::new(
            Target::linear(vec![1.0, 1.0], -1.0),
            CfGenerator::AnalyticClosest { nudge: 0.0 },
        )
    }

    #[test]
    fn favorable_query_has_no_counterfactual() {
        let mut oracle = linear_oracle();
        let r = oracle.query(&[0.9, 0.9]).unwrap();
        assert_eq!(r.label, 1);
        assert!(r.counterfactual.is_none());
        assert!(r.cf_converged);
    }

    #[test]
    fn rejected_query_gets_projection() {
        let mut oracle = linear_oracle();
        let r = oracle.query(&[0.2, 0.2]).unwrap();
        assert_eq!(r.label, 0);
        let w = r.counterfactual.unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
        assert_eq!(oracle.target().predict_class(&w).unwrap(), 1);
    }

    #[test]
    fn budget_is_enforced() {
        let mut oracle = linear_oracle().with_budget(5);
        for _ in 0..5 {
            oracle.query(&[0.9, 0.9]).unwrap();
        }
        assert!(matches!(
            oracle.query(&[0.9, 0.9]),
            Err(Error::BudgetExhausted { used: 5 })
        ));
        assert_eq!(oracle.queries_used(), 5);
    }

    #[test]
    fn batch_query_empty_and_order() {
        let mut oracle = linear_oracle();
        let out = oracle.batch_query(&[]).unwrap();
        assert!(out.responses.is_empty() && !out.truncated);

        let out = oracle
            .batch_query(&[vec![0.9, 0.9], vec![0.1, 0.1]])
            .unwrap();
        assert_eq!(out.responses[0].label, 1);
        assert_eq!(out.responses[1].label, 0);
    }

    #[test]
    fn batch_query_truncates_at_budget() {
        let mut oracle = linear_oracle().with_budget(2);
        let xs = vec![vec![0.9, 0.9]; 4];
        let out = oracle.batch_query(&xs).unwrap();
        assert_eq!(out.responses.len(), 2);
        assert!(out.truncated);
        assert_eq!(oracle.queries_used(), 2);
    }

    #[test]
    fn sphere_counterfactuals_always_classify_favorable() {
        let mut oracle = TargetOracle::new(
            Target::sphere(vec![1.0, 1.0, 1.0], 1.0),
            CfGenerator::AnalyticClosest { nudge: 0.0 },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen_cf = 0;
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let r = oracle.query(&x).unwrap();
            if r.label == 1 {
                assert!(r.counterfactual.is_none(), "one-sidedness violated");
            } else if let Some(w) = &r.counterfactual {
                seen_cf += 1;
                assert_eq!(oracle.target().predict_class(w).unwrap(), 1);
            }
        }
        assert!(seen_cf > 100, "rejected region should be well sampled");
    }

    #[test]
    fn nearest_neighbor_generator_rejects_bad_pool() {
        let target = Target::linear(vec![1.0, 0.0], -0.5);
        let pool = vec![vec![0.1, 0.1]]; // rejected by the target
        let out = generate_counterfactual(
            &target,
            &CfGenerator::OneNearestNeighbor { pool },
            &[0.2, 0.2],
        );
        assert!(matches!(out, Err(Error::Precondition(_))));
    }
}
