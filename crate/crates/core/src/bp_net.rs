//! Single-hidden-layer sigmoid network trained by per-pattern back-propagation.
//!
//! Notation follows the classic delta-rule formulation:
//!
//! * `net_j = Σ_i W_ji x_i + b_j`, `oh_j = sigmoid(net_j)`
//! * `net_k = Σ_j W_kj oh_j + b_k`, `oo_k = sigmoid(net_k)`
//! * `δ_ok = (d_k − oo_k) oo_k (1 − oo_k)`
//! * `δ_hj = oh_j (1 − oh_j) Σ_k δ_ok W_kj`
//! * `wed_jk = δ_ok oh_j`, `wed_ij = δ_hj x_i`
//! * `w ← w + η · wed`
//!
//! Because `δ_ok` already carries `(d − oo)`, the weight error derivatives are
//! `−∂E/∂w` for `E = ½ Σ_k (d_k − oo_k)²` and the `+η` update descends `E`.
//! Biases are weights on a constant unit input and follow the same rule.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "cafbp-bpnet";
pub const MODEL_VERSION: u32 = 1;
/// Initial weights are drawn uniformly from `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("gating needs a single-output network, this one has {0} outputs")]
    ShapeMismatch(usize),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("model file: {0}")]
    Io(#[from] io::Error),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl NetworkShape {
    pub fn new(inputs: usize, hidden: usize, outputs: usize) -> Result<Self, NetError> {
        if inputs == 0 || hidden == 0 || outputs == 0 {
            return Err(NetError::Invalid(format!(
                "layer sizes must be >= 1, got {inputs}-{hidden}-{outputs}"
            )));
        }
        Ok(Self {
            inputs,
            hidden,
            outputs,
        })
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NetError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NetError::Invalid("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub shape: NetworkShape,
    /// `W_ji`, hidden × inputs.
    pub w_hidden: Matrix,
    /// `W_kj`, outputs × hidden.
    pub w_output: Matrix,
    pub bias_hidden: Vec<f64>,
    pub bias_output: Vec<f64>,
    /// Learning rate η.
    pub eta: f64,
    /// Seed the weights were initialized from, kept for provenance.
    pub seed: u64,
}

/// Everything the forward pass computed for one input pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub net_hidden: Vec<f64>,
    pub oh: Vec<f64>,
    pub net_output: Vec<f64>,
    pub oo: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub delta_o: Vec<f64>,
    pub delta_h: Vec<f64>,
    /// outputs × hidden, matches `w_output`.
    pub wed_out: Matrix,
    /// hidden × inputs, matches `w_hidden`.
    pub wed_hid: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl TrainingPair {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

const SIGMOID_LO: f64 = f64::MIN_POSITIVE;
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside (0, 1) at float saturation.
pub fn sigmoid(net: f64) -> f64 {
    let s = if net >= 0.0 {
        1.0 / (1.0 + (-net).exp())
    } else {
        let e = net.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_LO, SIGMOID_HI)
}

fn check_len(expected: usize, got: usize) -> Result<(), NetError> {
    if expected != got {
        return Err(NetError::DimensionMismatch { expected, got });
    }
    Ok(())
}

impl Network {
    /// All weights and biases zero.
    pub fn zeros(shape: NetworkShape, eta: f64) -> Self {
        Self {
            shape,
            w_hidden: Matrix::zeros(shape.hidden, shape.inputs),
            w_output: Matrix::zeros(shape.outputs, shape.hidden),
            bias_hidden: vec![0.0; shape.hidden],
            bias_output: vec![0.0; shape.outputs],
            eta,
            seed: 0,
        }
    }

    /// Small uniform random weights from a seeded generator. Draw order:
    /// hidden weights (row-major), hidden biases, output weights, output biases.
    pub fn random(shape: NetworkShape, eta: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(shape, eta);
        net.seed = seed;
        let mut draw = || rng.random_range(-INIT_RANGE..=INIT_RANGE);
        net.w_hidden.as_mut_slice().iter_mut().for_each(|w| *w = draw());
        net.bias_hidden.iter_mut().for_each(|w| *w = draw());
        net.w_output.as_mut_slice().iter_mut().for_each(|w| *w = draw());
        net.bias_output.iter_mut().for_each(|w| *w = draw());
        net
    }

    fn validate(&self) -> Result<(), NetError> {
        let s = self.shape;
        NetworkShape::new(s.inputs, s.hidden, s.outputs)?;
        let ok = self.w_hidden.rows == s.hidden
            && self.w_hidden.cols == s.inputs
            && self.w_hidden.data.len() == s.hidden * s.inputs
            && self.w_output.rows == s.outputs
            && self.w_output.cols == s.hidden
            && self.w_output.data.len() == s.outputs * s.hidden
            && self.bias_hidden.len() == s.hidden
            && self.bias_output.len() == s.outputs;
        if !ok {
            return Err(NetError::Invalid("weight dimensions do not match the shape".into()));
        }
        if !self.all_finite() || !self.eta.is_finite() || self.eta < 0.0 {
            return Err(NetError::Invalid("non-finite weight or learning rate".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.w_hidden
            .data
            .iter()
            .chain(&self.w_output.data)
            .chain(&self.bias_hidden)
            .chain(&self.bias_output)
            .all(|w| w.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace, NetError> {
        check_len(self.shape.inputs, x.len())?;
        let net_hidden: Vec<f64> = (0..self.shape.hidden)
            .map(|j| {
                self.w_hidden
                    .row(j)
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
                    + self.bias_hidden[j]
            })
            .collect();
        let oh: Vec<f64> = net_hidden.iter().map(|&n| sigmoid(n)).collect();
        let net_output: Vec<f64> = (0..self.shape.outputs)
            .map(|k| {
                self.w_output
                    .row(k)
                    .iter()
                    .zip(&oh)
                    .map(|(w, o)| w * o)
                    .sum::<f64>()
                    + self.bias_output[k]
            })
            .collect();
        let oo = net_output.iter().map(|&n| sigmoid(n)).collect();
        Ok(ForwardTrace {
            input: x.to_vec(),
            net_hidden,
            oh,
            net_output,
            oo,
        })
    }

    pub fn backward(&self, trace: &ForwardTrace, target: &[f64]) -> Result<Gradients, NetError> {
        let s = self.shape;
        check_len(s.outputs, target.len())?;
        check_len(s.outputs, trace.oo.len())?;
        check_len(s.hidden, trace.oh.len())?;
        check_len(s.inputs, trace.input.len())?;

        let delta_o: Vec<f64> = trace
            .oo
            .iter()
            .zip(target)
            .map(|(&oo, &d)| (d - oo) * oo * (1.0 - oo))
            .collect();
        let delta_h: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let back: f64 = (0..s.outputs).map(|k| delta_o[k] * self.w_output.get(k, j)).sum();
                let oh = trace.oh[j];
                oh * (1.0 - oh) * back
            })
            .collect();

        let mut wed_out = Matrix::zeros(s.outputs, s.hidden);
        for (k, &d) in delta_o.iter().enumerate() {
            for (j, &oh) in trace.oh.iter().enumerate() {
                wed_out.set(k, j, d * oh);
            }
        }
        let mut wed_hid = Matrix::zeros(s.hidden, s.inputs);
        for (j, &d) in delta_h.iter().enumerate() {
            for (i, &x) in trace.input.iter().enumerate() {
                wed_hid.set(j, i, d * x);
            }
        }
        Ok(Gradients {
            delta_o,
            delta_h,
            wed_out,
            wed_hid,
        })
    }

    /// `w ← w + η·wed` for every weight; bias WEDs are the deltas.
    pub fn apply_update(&mut self, g: &Gradients) -> Result<(), NetError> {
        let s = self.shape;
        check_len(s.outputs * s.hidden, g.wed_out.data.len())?;
        check_len(s.hidden * s.inputs, g.wed_hid.data.len())?;
        check_len(s.outputs, g.delta_o.len())?;
        check_len(s.hidden, g.delta_h.len())?;
        let eta = self.eta;
        for (w, d) in self.w_output.data.iter_mut().zip(&g.wed_out.data) {
            *w += eta * d;
        }
        for (w, d) in self.w_hidden.data.iter_mut().zip(&g.wed_hid.data) {
            *w += eta * d;
        }
        for (b, d) in self.bias_output.iter_mut().zip(&g.delta_o) {
            *b += eta * d;
        }
        for (b, d) in self.bias_hidden.iter_mut().zip(&g.delta_h) {
            *b += eta * d;
        }
        Ok(())
    }

    /// `½ Σ_k (d_k − oo_k)²` for one pattern.
    pub fn pattern_error(&self, input: &[f64], target: &[f64]) -> Result<f64, NetError> {
        check_len(self.shape.outputs, target.len())?;
        let trace = self.forward(input)?;
        Ok(0.5 * trace.oo.iter().zip(target).map(|(o, d)| (d - o) * (d - o)).sum::<f64>())
    }

    /// Mean over patterns and outputs of `(d − oo)²`.
    pub fn mean_squared_error(&self, pairs: &[TrainingPair]) -> Result<f64, NetError> {
        let mut total = 0.0;
        for p in pairs {
            check_len(self.shape.outputs, p.target.len())?;
            let trace = self.forward(&p.input)?;
            total += trace.oo.iter().zip(&p.target).map(|(o, d)| (d - o) * (d - o)).sum::<f64>();
        }
        Ok(total / (pairs.len() * self.shape.outputs) as f64)
    }

    /// Per-pattern training in the given order until the epoch MSE
    /// (measured after each epoch) reaches `error_goal` or `max_epochs` run out.
    /// Returns the per-epoch MSE history.
    pub fn train(
        &mut self,
        pairs: &[TrainingPair],
        max_epochs: usize,
        error_goal: f64,
    ) -> Result<Vec<f64>, NetError> {
        if pairs.is_empty() {
            return Err(NetError::EmptyTrainingSet);
        }
        if max_epochs == 0 {
            return Err(NetError::Invalid("max_epochs must be >= 1".into()));
        }
        for p in pairs {
            check_len(self.shape.inputs, p.input.len())?;
            check_len(self.shape.outputs, p.target.len())?;
        }
        let mut history = Vec::new();
        for _ in 0..max_epochs {
            for p in pairs {
                let trace = self.forward(&p.input)?;
                let g = self.backward(&trace, &p.target)?;
                self.apply_update(&g)?;
            }
            let mse = self.mean_squared_error(pairs)?;
            history.push(mse);
            if mse <= error_goal {
                break;
            }
        }
        Ok(history)
    }

    /// `true` (code the residual) iff the single output is at least `cutoff`.
    pub fn gate(&self, features: &[f64], cutoff: f64) -> Result<bool, NetError> {
        if self.shape.outputs != 1 {
            return Err(NetError::ShapeMismatch(self.shape.outputs));
        }
        Ok(self.forward(features)?.oo[0] >= cutoff)
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            network: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(NetError::Invalid(format!(
                "unsupported model {} v{}",
                file.format, file.version
            )));
        }
        file.network.validate()?;
        Ok(file.network)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    network: Network,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(w_h: f64, w_o: f64) -> Network {
        let mut net = Network::zeros(NetworkShape::new(1, 1, 1).unwrap(), 0.5);
        net.w_hidden.set(0, 0, w_h);
        net.w_output.set(0, 0, w_o);
        net
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731059).abs() < 1e-6);
        for x in [-5.0, -0.3, 0.7, 12.0] {
            assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }
        for x in [-1e6, -800.0, 800.0, 1e6] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0 && !s.is_nan());
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = Network::zeros(NetworkShape::new(3, 4, 2).unwrap(), 0.1);
        let t = net.forward(&[0.2, -7.0, 3.0]).unwrap();
        assert!(t.oh.iter().chain(&t.oo).all(|&v| v == 0.5));
    }

    #[test]
    fn hand_evaluated_chain() {
        let t = tiny(1.0, 1.0).forward(&[0.0]).unwrap();
        assert_eq!(t.oh, vec![0.5]);
        assert_eq!(t.net_output, vec![0.5]);
        // 1 / (1 + e^-0.5)
        assert!((t.oo[0] - 0.622459).abs() < 1e-6);
        assert_eq!(t, tiny(1.0, 1.0).forward(&[0.0]).unwrap());
    }

    #[test]
    fn forward_checks_input_length() {
        let net = Network::zeros(NetworkShape::new(2, 2, 1).unwrap(), 0.1);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(NetError::DimensionMismatch { expected: 2, got: 1 })
        ));
        let t = net.forward(&[1.0, 0.0]).unwrap();
        assert!(matches!(net.backward(&t, &[1.0, 0.0]), Err(NetError::DimensionMismatch { .. })));
    }

    #[test]
    fn backward_examples() {
        let net = Network::random(NetworkShape::new(3, 4, 2).unwrap(), 0.5, 1);
        let t = net.forward(&[0.1, 0.9, 0.4]).unwrap();
        let g = net.backward(&t, &t.oo.clone()).unwrap();
        assert!(g.delta_o.iter().chain(&g.delta_h).all(|&d| d == 0.0));
        assert!(g.wed_out.as_slice().iter().chain(g.wed_hid.as_slice()).all(|&d| d == 0.0));

        // d = 1, oo = 0.5 -> δ = 0.5 * 0.5 * 0.5; wed = δ * oh
        let trace = ForwardTrace {
            input: vec![0.0],
            net_hidden: vec![0.0],
            oh: vec![0.8],
            net_output: vec![0.0],
            oo: vec![0.5],
        };
        let g = tiny(0.0, 0.0).backward(&trace, &[1.0]).unwrap();
        assert_eq!(g.delta_o, vec![0.125]);
        assert_eq!(g.wed_out.get(0, 0), 0.1);
    }

    #[test]
    fn update_examples() {
        let mut net = tiny(0.0, 0.2);
        let mut g = Gradients {
            delta_o: vec![0.0],
            delta_h: vec![0.0],
            wed_out: Matrix::zeros(1, 1),
            wed_hid: Matrix::zeros(1, 1),
        };
        g.wed_out.set(0, 0, 0.1);
        net.apply_update(&g).unwrap();
        assert_eq!(net.w_output.get(0, 0), 0.25);

        let before = Network::random(NetworkShape::new(2, 3, 1).unwrap(), 0.7, 5);
        let mut after = before.clone();
        let t = after.forward(&[0.3, 0.6]).unwrap();
        let zero = after.backward(&t, &t.oo.clone()).unwrap();
        after.apply_update(&zero).unwrap();
        assert_eq!(after, before);

        let mut frozen = before.clone();
        frozen.eta = 0.0;
        let g = frozen.backward(&t, &[1.0]).unwrap();
        frozen.apply_update(&g).unwrap();
        assert_eq!(frozen.w_hidden, before.w_hidden);
        assert_eq!(frozen.w_output, before.w_output);
    }

    #[test]
    fn training_stops_on_goal() {
        let pairs = vec![TrainingPair::new(vec![0.2, 0.4], vec![0.9])];
        let mut net = Network::random(NetworkShape::new(2, 3, 1).unwrap(), 0.5, 1);
        let history = net.train(&pairs, 100, f64::INFINITY).unwrap();
        assert_eq!(history.len(), 1);

        let mut net = Network::zeros(NetworkShape::new(2, 3, 1).unwrap(), 0.5);
        let pairs = vec![TrainingPair::new(vec![0.2, 0.4], vec![0.5])];
        let history = net.train(&pairs, 100, 1e-12).unwrap();
        assert_eq!(history, vec![0.0]);

        assert!(matches!(net.train(&[], 10, 0.1), Err(NetError::EmptyTrainingSet)));
    }

    #[test]
    fn gate_rules() {
        let mut net = Network::zeros(NetworkShape::new(2, 2, 1).unwrap(), 0.1);
        assert!(net.gate(&[0.3, 0.1], 0.5).unwrap());
        assert!(!net.gate(&[0.3, 0.1], 0.51).unwrap());
        net.bias_output[0] = 2.2; // oo ≈ 0.90
        assert!(net.gate(&[0.0, 0.0], 0.5).unwrap());
        net.bias_output[0] = -2.2;
        assert!(!net.gate(&[0.0, 0.0], 0.5).unwrap());
        let two = Network::zeros(NetworkShape::new(2, 2, 2).unwrap(), 0.1);
        assert!(matches!(two.gate(&[0.0, 0.0], 0.5), Err(NetError::ShapeMismatch(2))));
    }

    #[test]
    fn model_file_roundtrip_is_lossless() {
        let mut net = Network::random(NetworkShape::new(4, 8, 1).unwrap(), 0.5, 77);
        net.w_hidden.set(0, 0, 0.1 + 0.2);
        net.bias_output[0] = -1.0e-300;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gate.json");
        net.save(&path).unwrap();
        assert_eq!(Network::load(&path).unwrap(), net);
    }

    #[test]
    fn model_file_rejects_bad_input() {
        let net = Network::random(NetworkShape::new(2, 2, 1).unwrap(), 0.5, 1);
        let text = net.to_json().unwrap();
        assert!(Network::from_json(&text.replace("\"version\": 1", "\"version\": 9")).is_err());
        assert!(Network::from_json(&text.replace("\"inputs\": 2", "\"inputs\": 3")).is_err());
        assert!(Network::from_json("{").is_err());
    }

    proptest! {
        #[test]
        fn small_step_decreases_error(
            seed in any::<u64>(),
            x in proptest::collection::vec(0.0f64..1.0, 3),
            d in proptest::collection::vec(0.0f64..1.0, 2),
        ) {
            let mut net = Network::random(NetworkShape::new(3, 4, 2).unwrap(), 0.01, seed);
            let before = net.pattern_error(&x, &d).unwrap();
            let t = net.forward(&x).unwrap();
            let g = net.backward(&t, &d).unwrap();
            net.apply_update(&g).unwrap();
            let after = net.pattern_error(&x, &d).unwrap();
            prop_assert!(after < before, "{after} !< {before}");
        }
    }
}
