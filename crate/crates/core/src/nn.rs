//! Feedforward binary classifiers: ReLU hidden layers, a single sigmoid
//! output unit, per-sample backprop, a seeded mini-batch training loop, and
//! a spectral-norm Lipschitz bound.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::LossKind;

/// Iteration cap for the spectral-norm power iteration.
const POWER_ITERS: usize = 50;
/// Relative convergence tolerance for the power iteration.
const POWER_TOL: f64 = 1e-8;

/// Thresholded predictions, shared by networks, analytic targets, and
/// polytope surrogates.
pub trait BinaryClassifier {
    fn dim(&self) -> usize;

    /// Thresholded class in {0, 1}; the boundary itself maps to 1.
    fn predict_class(&self, x: &[f64]) -> Result<u8>;
}

/// A classifier with a smooth output probability, as needed by the
/// gradient-based counterfactual search.
pub trait DifferentiableClassifier: BinaryClassifier {
    /// Output probability in (0, 1).
    fn prob(&self, x: &[f64]) -> Result<f64>;

    /// Gradient of the output probability in the input.
    fn prob_grad(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Shape and init seed of a network: input width, hidden layer widths, and
/// an implicit single sigmoid output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
}

impl NetworkArchitecture {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidInput("input_dim must be >= 1".into()));
        }
        if hidden_sizes.is_empty() {
            return Err(Error::InvalidInput(
                "at least one hidden layer is required".into(),
            ));
        }
        if hidden_sizes.contains(&0) {
            return Err(Error::InvalidInput(
                "hidden layer sizes must be positive".into(),
            ));
        }
        Ok(NetworkArchitecture {
            input_dim,
            hidden_sizes,
            seed,
        })
    }

    /// Layer shapes as (out, in) pairs, ending with the sigmoid unit.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(1);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

/// A dense ReLU network with sigmoid output. Immutable once built; training
/// produces a new value.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer weight and bias gradients, shaped like the network itself.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    fn zeros_like(net: &DenseNetwork) -> Self {
        GradientSet {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn fill_zero(&mut self) {
        for w in &mut self.weights {
            w.data_mut().fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }
}

/// A training point: a location in the unit cube and a label in
/// {0, 0.5, 1}, where 0.5 marks a counterfactual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LabeledPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        LabeledPoint { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Mini-batch training hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_coefficient: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub shuffle_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 200,
            batch_size: 32,
            l2_coefficient: 0.001,
            learning_rate: 0.001,
            optimizer: OptimizerKind::Adam,
            shuffle_seed: 0,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if self.l2_coefficient < 0.0 || !self.l2_coefficient.is_finite() {
            return Err(Error::InvalidInput(
                "l2_coefficient must be a finite nonnegative value".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward-pass working buffers, reused across samples during training.
struct Scratch {
    // Post-activation of each hidden layer.
    hidden: Vec<Vec<f64>>,
    // ReLU input of each hidden layer.
    pre: Vec<Vec<f64>>,
    // Backpropagated error per layer.
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(net: &DenseNetwork) -> Self {
        let hidden: Vec<Vec<f64>> = net
            .hidden_sizes
            .iter()
            .map(|&h| vec![0.0; h])
            .collect();
        let mut delta: Vec<Vec<f64>> = hidden.clone();
        delta.push(vec![0.0; 1]);
        Scratch {
            pre: hidden.clone(),
            hidden,
            delta,
        }
    }
}

impl DenseNetwork {
    /// Seeded Glorot-uniform initialization of the given architecture.
    pub fn init(arch: &NetworkArchitecture) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(arch.seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (out, inp) in arch.layer_shapes() {
            let limit = (6.0 / (inp + out) as f64).sqrt();
            let data: Vec<f64> = (0..out * inp)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                .collect();
            weights.push(Matrix::from_vec(out, inp, data));
            biases.push(vec![0.0; out]);
        }
        DenseNetwork {
            input_dim: arch.input_dim,
            hidden_sizes: arch.hidden_sizes.clone(),
            weights,
            biases,
        }
    }

    /// Builds a network from explicit layer parameters, validating shapes.
    pub fn from_parts(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let arch = NetworkArchitecture::new(input_dim, hidden_sizes, 0)?;
        let shapes = arch.layer_shapes();
        if weights.len() != shapes.len() || biases.len() != shapes.len() {
            return Err(Error::Format(format!(
                "expected {} layers, got {} weight and {} bias blocks",
                shapes.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (i, ((out, inp), (w, b))) in
            shapes.iter().zip(weights.iter().zip(&biases)).enumerate()
        {
            if w.rows() != *out || w.cols() != *inp {
                return Err(Error::Format(format!(
                    "layer {i}: expected weight shape {out}x{inp}, got {}x{}",
                    w.rows(),
                    w.cols()
                )));
            }
            if b.len() != *out {
                return Err(Error::Format(format!(
                    "layer {i}: expected {out} biases, got {}",
                    b.len()
                )));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "layer {i}: non-finite parameter"
                )));
            }
        }
        Ok(DenseNetwork {
            input_dim: arch.input_dim,
            hidden_sizes: arch.hidden_sizes,
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Runs the forward pass into `scratch` and returns the logit ℓ(x).
    fn logit_cached(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        let n_hidden = self.hidden_sizes.len();
        for l in 0..n_hidden {
            let (done, rest) = scratch.hidden.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            let pre = &mut scratch.pre[l];
            let act = &mut rest[0];
            self.weights[l].matvec_into(input, pre);
            for ((p, b), a) in pre.iter_mut().zip(&self.biases[l]).zip(act.iter_mut()) {
                *p += b;
                *a = p.max(0.0);
            }
        }
        let input: &[f64] = if n_hidden == 0 {
            x
        } else {
            &scratch.hidden[n_hidden - 1]
        };
        let mut z = self.biases[n_hidden][0];
        for (w, a) in self.weights[n_hidden].row(0).iter().zip(input) {
            z += w * a;
        }
        z
    }

    fn forward_cached(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        sigmoid(self.logit_cached(x, scratch))
    }

    /// Pre-sigmoid output ℓ(x).
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut scratch = Scratch::new(self);
        let z = self.logit_cached(x, &mut scratch);
        if !z.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(z)
    }

    /// Output probability σ(ℓ(x)) in (0, 1).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Accumulates `upstream · ∂p/∂θ` into `grads` and returns the input
    /// gradient `upstream · ∂p/∂x`. `scratch` must hold the forward pass
    /// of the same `x`.
    fn backward_cached(
        &self,
        x: &[f64],
        p: f64,
        upstream: f64,
        scratch: &mut Scratch,
        grads: &mut GradientSet,
    ) -> Vec<f64> {
        let n_hidden = self.hidden_sizes.len();
        let n_layers = n_hidden + 1;

        // Sigmoid derivative at the output unit.
        scratch.delta[n_hidden][0] = upstream * p * (1.0 - p);

        for l in (0..n_layers).rev() {
            let below: &[f64] = if l == 0 { x } else { &scratch.hidden[l - 1] };
            // Split deltas around l so we can read delta[l] while writing
            // delta[l-1].
            let (lower, upper) = scratch.delta.split_at_mut(l);
            let delta_l = &upper[0];
            let gw = &mut grads.weights[l];
            for (r, &d) in delta_l.iter().enumerate() {
                grads.biases[l][r] += d;
                let row_start = r * gw.cols();
                let gr = &mut gw.data_mut()[row_start..row_start + below.len()];
                for (g, a) in gr.iter_mut().zip(below) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let prev = &mut lower[l - 1];
                self.weights[l].matvec_transpose_into(delta_l, prev);
                // ReLU subgradient: 0 at exactly-zero pre-activation.
                for (d, z) in prev.iter_mut().zip(&scratch.pre[l - 1]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }

        // delta[0] carries the layer-0 ReLU mask already.
        self.weights[0].matvec_transpose(&scratch.delta[0])
    }

    /// Gradients of `upstream · forward(x)` in the parameters and the input.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<(GradientSet, Vec<f64>)> {
        self.check_dim(x)?;
        let mut scratch = Scratch::new(self);
        let p = self.forward_cached(x, &mut scratch);
        if !p.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        let mut grads = GradientSet::zeros_like(self);
        let input_grad = self.backward_cached(x, p, upstream, &mut scratch, &mut grads);
        if input_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite input gradient".into()));
        }
        Ok((grads, input_grad))
    }

    /// Gradient of the output probability in the input, `∂m/∂x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward(x, 1.0)?.1)
    }

    /// Upper bound on the Lipschitz constant of the pre-sigmoid map ℓ:
    /// the product of per-layer spectral norms, final layer included. The
    /// sigmoid's 1/4 slope factor is not applied here.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.spectral_norm(POWER_ITERS, POWER_TOL))
            .product()
    }

    /// Serializes to the JSON model format (flat row-major weight blocks).
    pub fn serialize(&self) -> Vec<u8> {
        let file = ModelFile {
            input_dim: self.input_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| w.data().to_vec())
                .collect(),
            biases: self.biases.clone(),
        };
        serde_json::to_vec(&file).expect("model serialization cannot fail")
    }

    /// Parses the JSON model format, validating header/shape agreement.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("malformed model payload: {e}")))?;
        let arch = NetworkArchitecture::new(file.input_dim, file.hidden_sizes, 0)
            .map_err(|e| Error::Format(format!("bad architecture header: {e}")))?;
        let shapes = arch.layer_shapes();
        if file.weights.len() != shapes.len() {
            return Err(Error::Format(format!(
                "architecture implies {} layers but payload has {}",
                shapes.len(),
                file.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(shapes.len());
        for (i, ((out, inp), flat)) in shapes.iter().zip(file.weights).enumerate() {
            if flat.len() != out * inp {
                return Err(Error::Format(format!(
                    "layer {i}: expected {} weights, got {}",
                    out * inp,
                    flat.len()
                )));
            }
            weights.push(Matrix::from_vec(*out, *inp, flat));
        }
        DenseNetwork::from_parts(arch.input_dim, arch.hidden_sizes, weights, file.biases)
    }
}

impl BinaryClassifier for DenseNetwork {
    fn dim(&self) -> usize {
        self.input_dim
    }

    fn predict_class(&self, x: &[f64]) -> Result<u8> {
        // σ(ℓ) ≥ 0.5 ⟺ ℓ ≥ 0, and the sign test is exact at the boundary.
        Ok(if self.logit(x)? >= 0.0 { 1 } else { 0 })
    }
}

impl DifferentiableClassifier for DenseNetwork {
    fn prob(&self, x: &[f64]) -> Result<f64> {
        self.forward(x)
    }

    fn prob_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.input_gradient(x)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

struct AdamState {
    m: GradientSet,
    v: GradientSet,
    t: u64,
}

/// Trains a copy of `net` and returns it along with the per-epoch mean
/// data loss.
pub fn train_with_trace(
    net: &DenseNetwork,
    data: &[LabeledPoint],
    cfg: &TrainingConfig,
    loss: LossKind,
) -> Result<(DenseNetwork, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training data is empty".into()));
    }
    for (i, point) in data.iter().enumerate() {
        if point.x.len() != net.input_dim {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim,
                actual: point.x.len(),
            });
        }
        if !(point.y == 0.0 || point.y == 0.5 || point.y == 1.0) {
            return Err(Error::InvalidInput(format!(
                "point {i}: label must be 0, 0.5 or 1, got {}",
                point.y
            )));
        }
    }

    let mut model = net.clone();
    let mut scratch = Scratch::new(&model);
    let mut grads = GradientSet::zeros_like(&model);
    let mut adam = AdamState {
        m: GradientSet::zeros_like(&model),
        v: GradientSet::zeros_like(&model),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let inv = 1.0 / batch.len() as f64;
            for &idx in batch {
                let point = &data[idx];
                let p = model.forward_cached(&point.x, &mut scratch);
                epoch_loss += loss.loss(p, point.y)?;
                let upstream = loss.grad(p, point.y)? * inv;
                model.backward_cached(&point.x, p, upstream, &mut scratch, &mut grads);
            }
            // d/dW of l2 · Σ‖W‖² — weights only, biases unpenalized.
            if cfg.l2_coefficient > 0.0 {
                for (gw, w) in grads.weights.iter_mut().zip(&model.weights) {
                    for (g, wv) in gw.data_mut().iter_mut().zip(w.data()) {
                        *g += 2.0 * cfg.l2_coefficient * wv;
                    }
                }
            }
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(&mut model, &grads, &mut adam, cfg.learning_rate),
                OptimizerKind::Sgd => sgd_step(&mut model, &grads, cfg.learning_rate),
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch}: mean loss {mean}"
            )));
        }
        trace.push(mean);
    }
    Ok((model, trace))
}

/// Trains a copy of `net` on `data`; deterministic given the seeds in the
/// architecture and config.
pub fn train(
    net: &DenseNetwork,
    data: &[LabeledPoint],
    cfg: &TrainingConfig,
    loss: LossKind,
) -> Result<DenseNetwork> {
    Ok(train_with_trace(net, data, cfg, loss)?.0)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_step(model: &mut DenseNetwork, grads: &GradientSet, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for l in 0..model.weights.len() {
        let w = model.weights[l].data_mut();
        let g = grads.weights[l].data();
        let m = state.m.weights[l].data_mut();
        let v = state.v.weights[l].data_mut();
        for i in 0..w.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
        }
        let b = &mut model.biases[l];
        let gb = &grads.biases[l];
        let mb = &mut state.m.biases[l];
        let vb = &mut state.v.biases[l];
        for i in 0..b.len() {
            mb[i] = ADAM_BETA1 * mb[i] + (1.0 - ADAM_BETA1) * gb[i];
            vb[i] = ADAM_BETA2 * vb[i] + (1.0 - ADAM_BETA2) * gb[i] * gb[i];
            b[i] -= lr * (mb[i] / bc1) / ((vb[i] / bc2).sqrt() + ADAM_EPS);
        }
    }
}

fn sgd_step(model: &mut DenseNetwork, grads: &GradientSet, lr: f64) {
    for l in 0..model.weights.len() {
        let w = model.weights[l].data_mut();
        for (wv, g) in w.iter_mut().zip(grads.weights[l].data()) {
            *wv -= lr * g;
        }
        for (bv, g) in model.biases[l].iter_mut().zip(&grads.biases[l]) {
            *bv -= lr * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ℓ(x) = a·x + b as a ReLU network: the hidden pair (u, −u) makes
    /// relu(u) − relu(−u) = u exact.
    pub(crate) fn linear_as_network(a: &[f64], b: f64) -> DenseNetwork {
        let d = a.len();
        let mut w1 = Vec::with_capacity(2 * d);
        w1.extend_from_slice(a);
        w1.extend(a.iter().map(|v| -v));
        DenseNetwork::from_parts(
            d,
            vec![2],
            vec![
                Matrix::from_vec(2, d, w1),
                Matrix::from_vec(1, 2, vec![1.0, -1.0]),
            ],
            vec![vec![0.0, 0.0], vec![b]],
        )
        .unwrap()
    }

    fn zero_network(d: usize, hidden: usize) -> DenseNetwork {
        DenseNetwork::from_parts(
            d,
            vec![hidden],
            vec![Matrix::zeros(hidden, d), Matrix::zeros(1, hidden)],
            vec![vec![0.0; hidden], vec![0.0]],
        )
        .unwrap()
    }

    fn random_net(input_dim: usize, hidden: &[usize], seed: u64) -> DenseNetwork {
        DenseNetwork::init(
            &NetworkArchitecture::new(input_dim, hidden.to_vec(), seed).unwrap(),
        )
    }

    #[test]
    fn forward_zero_net_is_half() {
        let net = zero_network(3, 4);
        assert_eq!(net.forward(&[0.2, 0.9, 0.1]).unwrap(), 0.5);
    }

    #[test]
    fn forward_linear_encoding() {
        let net = linear_as_network(&[1.0, 1.0], -1.0);
        let p = net.forward(&[1.0, 1.0]).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(net.forward(&[0.5, 0.5]).unwrap(), 0.5);
        assert!((net.logit(&[0.25, 0.35]).unwrap() - (-0.4)).abs() < 1e-12);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = zero_network(3, 2);
        assert!(matches!(
            net.forward(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn predict_boundary_is_one() {
        let net = zero_network(2, 2);
        assert_eq!(net.predict_class(&[0.3, 0.4]).unwrap(), 1);
        let below = linear_as_network(&[1.0, 0.0], -0.5);
        assert_eq!(below.predict_class(&[0.49, 0.0]).unwrap(), 0);
        assert_eq!(below.predict_class(&[0.75, 0.0]).unwrap(), 1);
    }

    #[test]
    fn backward_zero_upstream() {
        let net = random_net(3, &[4, 3], 7);
        let (grads, input_grad) = net.backward(&[0.1, 0.5, 0.9], 0.0).unwrap();
        assert!(grads.weights.iter().all(|w| w.data().iter().all(|g| *g == 0.0)));
        assert!(input_grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_linear_closed_form() {
        // For ℓ = a·x + b encoded exactly, ∂p/∂x = σ'(ℓ)·a.
        let a = [0.8, -0.3];
        let net = linear_as_network(&a, 0.1);
        let x = [0.6, 0.2];
        let p = net.forward(&x).unwrap();
        let (_, input_grad) = net.backward(&x, 1.0).unwrap();
        for (g, ai) in input_grad.iter().zip(&a) {
            assert!((g - p * (1.0 - p) * ai).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let d = 2 + trial % 4;
            let net = random_net(d, &[5, 4], 100 + trial as u64);
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            check_gradients(&net, &x, 1e-5, 1e-4);
        }
    }

    pub(crate) fn check_gradients(net: &DenseNetwork, x: &[f64], h: f64, rel_tol: f64) {
        let (grads, input_grad) = net.backward(x, 1.0).unwrap();
        // Skip points with a pre-activation too close to a ReLU kink.
        if kink_margin(net, x) < 1e-3 {
            return;
        }
        for l in 0..net.weights().len() {
            for r in 0..net.weights()[l].rows() {
                for c in 0..net.weights()[l].cols() {
                    let fd = {
                        let mut plus = net.clone();
                        plus.weights[l].set(r, c, net.weights()[l].get(r, c) + h);
                        let mut minus = net.clone();
                        minus.weights[l].set(r, c, net.weights()[l].get(r, c) - h);
                        (plus.forward(x).unwrap() - minus.forward(x).unwrap()) / (2.0 * h)
                    };
                    let g = grads.weights[l].get(r, c);
                    let denom = fd.abs().max(1e-6);
                    assert!(
                        (g - fd).abs() / denom < rel_tol,
                        "weight ({l},{r},{c}): analytic {g} vs fd {fd}"
                    );
                }
            }
        }
        for (i, gi) in input_grad.iter().enumerate() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let fd = (net.forward(&xp).unwrap() - net.forward(&xm).unwrap()) / (2.0 * h);
            let denom = fd.abs().max(1e-6);
            assert!(
                (gi - fd).abs() / denom < rel_tol,
                "input {i}: analytic {gi} vs fd {fd}"
            );
        }
    }

    pub(crate) fn kink_margin(net: &DenseNetwork, x: &[f64]) -> f64 {
        let mut margin = f64::INFINITY;
        let mut act = x.to_vec();
        for l in 0..net.hidden_sizes.len() {
            let mut pre = net.weights[l].matvec(&act);
            for (p, b) in pre.iter_mut().zip(&net.biases[l]) {
                *p += b;
                margin = margin.min(p.abs());
            }
            act = pre.into_iter().map(|z| z.max(0.0)).collect();
        }
        margin
    }

    #[test]
    fn train_zero_epochs_is_identity() {
        let net = random_net(2, &[3], 5);
        let data = vec![LabeledPoint::new(vec![0.1, 0.2], 0.0)];
        let cfg = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        let trained = train(&net, &data, &cfg, LossKind::BceBaseline).unwrap();
        assert_eq!(trained, net);
    }

    #[test]
    fn train_empty_data_errors() {
        let net = random_net(2, &[3], 5);
        assert!(train(&net, &[], &TrainingConfig::default(), LossKind::BceBaseline).is_err());
    }

    #[test]
    fn train_is_deterministic() {
        let net = random_net(2, &[4], 42);
        let data = vec![
            LabeledPoint::new(vec![0.1, 0.1], 0.0),
            LabeledPoint::new(vec![0.9, 0.9], 1.0),
            LabeledPoint::new(vec![0.2, 0.8], 0.0),
            LabeledPoint::new(vec![0.8, 0.2], 1.0),
        ];
        let cfg = TrainingConfig {
            epochs: 50,
            ..TrainingConfig::default()
        };
        let a = train(&net, &data, &cfg, LossKind::BceBaseline).unwrap();
        let b = train(&net, &data, &cfg, LossKind::BceBaseline).unwrap();
        for (wa, wb) in a.weights().iter().zip(b.weights()) {
            for (x, y) in wa.data().iter().zip(wb.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn train_loss_decreases_on_separable_pair() {
        let net = random_net(2, &[4], 3);
        let data = vec![
            LabeledPoint::new(vec![0.1, 0.1], 0.0),
            LabeledPoint::new(vec![0.9, 0.9], 1.0),
        ];
        let cfg = TrainingConfig {
            epochs: 200,
            batch_size: 2,
            ..TrainingConfig::default()
        };
        let (_, trace) = train_with_trace(&net, &data, &cfg, LossKind::BceBaseline).unwrap();
        assert!(trace.last().unwrap() < trace.first().unwrap());
        // Adam on a smooth objective: no large upward jumps between epochs.
        let cap = 0.05 * trace[0].max(1.0);
        for w in trace.windows(2) {
            assert!(w[1] - w[0] < cap, "epoch loss jumped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn lipschitz_zero_and_identity() {
        let net = zero_network(3, 3);
        assert_eq!(net.lipschitz_upper_bound(), 0.0);

        // W1 = 2·I into a passthrough output row; bound = 2 · ‖[1 0 0]‖ = 2.
        let mut w1 = Matrix::identity(3);
        for v in w1.data_mut() {
            *v *= 2.0;
        }
        let net = DenseNetwork::from_parts(
            3,
            vec![3],
            vec![w1, Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0])],
            vec![vec![0.0; 3], vec![0.0]],
        )
        .unwrap();
        assert!((net.lipschitz_upper_bound() - 2.0).abs() < 1e-9);
    }

    /// Cyclic Jacobi eigensolver on W^T W: an SVD-equivalent oracle for the
    /// spectral norm, independent of the power iteration.
    pub(crate) fn spectral_norm_jacobi(w: &Matrix) -> f64 {
        let n = w.cols();
        // A = W^T W, symmetric PSD.
        let mut a = vec![vec![0.0; n]; n];
        for (i, row_a) in a.iter_mut().enumerate() {
            for j in 0..n {
                let mut acc = 0.0;
                for r in 0..w.rows() {
                    acc += w.get(r, i) * w.get(r, j);
                }
                row_a[j] = acc;
            }
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[i][q] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[p][i];
                        let aqi = a[q][i];
                        a[p][i] = c * api - s * aqi;
                        a[q][i] = s * api + c * aqi;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).fold(0.0f64, f64::max).sqrt()
    }

    #[test]
    fn lipschitz_matches_svd_oracle() {
        let net = random_net(4, &[6, 5, 3], 99);
        let expected: f64 = net
            .weights()
            .iter()
            .map(spectral_norm_jacobi)
            .product();
        let got = net.lipschitz_upper_bound();
        assert!(
            (got - expected).abs() < 1e-6 * expected.max(1.0),
            "power {got} vs jacobi {expected}"
        );
    }

    #[test]
    fn lipschitz_dominates_empirical_slope() {
        let net = random_net(3, &[8, 6], 2024);
        let bound = net.lipschitz_upper_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut max_slope = 0.0f64;
        for _ in 0..1000 {
            let x1: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let x2: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let dist = crate::linalg::euclidean(&x1, &x2);
            if dist < 1e-9 {
                continue;
            }
            let slope =
                (net.logit(&x1).unwrap() - net.logit(&x2).unwrap()).abs() / dist;
            max_slope = max_slope.max(slope);
        }
        assert!(max_slope <= bound, "slope {max_slope} exceeds bound {bound}");
    }

    #[test]
    fn serde_round_trip_exact() {
        let net = random_net(5, &[7, 3], 31337);
        let bytes = net.serialize();
        let back = DenseNetwork::deserialize(&bytes).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn deserialize_rejects_truncation_and_shape_mismatch() {
        let net = random_net(2, &[3], 1);
        let bytes = net.serialize();
        assert!(matches!(
            DenseNetwork::deserialize(&bytes[..bytes.len() / 2]),
            Err(Error::Format(_))
        ));

        // Header says hidden (3) but the first weight block is 2x2.
        let bad = br#"{"input_dim":2,"hidden_sizes":[3],"weights":[[1.0,2.0,3.0,4.0],[1.0,1.0,1.0]],"biases":[[0.0,0.0,0.0],[0.0]]}"#;
        assert!(matches!(
            DenseNetwork::deserialize(bad),
            Err(Error::Format(_))
        ));
    }
}
