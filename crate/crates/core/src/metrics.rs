//! Fidelity evaluation, uniform reference sets, prediction histograms, and
//! ensemble statistics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BinaryClassifier, DifferentiableClassifier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Test,
    Uniform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityResult {
    pub fidelity: f64,
    pub reference_kind: ReferenceKind,
    pub reference_size: usize,
}

/// Fraction of reference points on which the two models' thresholded
/// predictions agree. Symmetric in its model arguments.
pub fn fidelity<A, B>(
    target: &A,
    surrogate: &B,
    reference: &[Vec<f64>],
    kind: ReferenceKind,
) -> Result<FidelityResult>
where
    A: BinaryClassifier + ?Sized,
    B: BinaryClassifier + ?Sized,
{
    if reference.is_empty() {
        return Err(Error::InvalidInput("reference set is empty".into()));
    }
    let mut agreements = 0usize;
    for x in reference {
        if target.predict_class(x)? == surrogate.predict_class(x)? {
            agreements += 1;
        }
    }
    Ok(FidelityResult {
        fidelity: agreements as f64 / reference.len() as f64,
        reference_kind: kind,
        reference_size: reference.len(),
    })
}

/// Seeded i.i.d. uniform points over the unit cube.
pub fn uniform_reference(d: usize, size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Histogram of output probabilities over equal-width bins on [0, 1]; the
/// final bin is closed so a probability of exactly 1 is counted.
pub fn prediction_histogram<M>(model: &M, points: &[Vec<f64>], bins: usize) -> Result<Vec<usize>>
where
    M: DifferentiableClassifier + ?Sized,
{
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to histogram".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    let mut counts = vec![0usize; bins];
    for x in points {
        let p = model.prob(x)?;
        let bin = ((p * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

/// Sample mean and (n−1)-denominator standard deviation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// A single observation has no spread estimate; std is reported as 0.
    pub single_sample: bool,
}

pub fn ensemble_summary(values: &[f64]) -> Result<EnsembleSummary> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no values to summarize".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(EnsembleSummary {
            mean,
            std: 0.0,
            count: 1,
            single_sample: true,
        });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(EnsembleSummary {
        mean,
        std: var.sqrt(),
        count: n,
        single_sample: false,
    })
}
