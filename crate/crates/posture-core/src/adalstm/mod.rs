//! Bidirectional LSTM sequence classifier, written from scratch in f64.
//!
//! Episodes of raw tri-axial samples feed a single bi-LSTM layer (ten
//! hidden units per direction by default). The sequence readout
//! concatenates the forward direction's state at the last step with the
//! backward direction's state at the first step; three fully connected
//! layers (tanh, tanh, linear) and a softmax produce class likelihoods.
//!
//! Training (see [`train`]) minimizes a length-weighted cross-entropy with
//! Adam and a decaying learning-rate schedule; the fixed-rate variant used
//! as a comparison baseline is the same model with [`LrSchedule::Fixed`].

mod train;

pub use train::{
    adam_update, compute_gradients, make_minibatches, weighted_cross_entropy, Batch,
    BatchGradients, EpochStats, OptimizerState, TrainReport,
};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Episode, PostureLabel};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("episode has no samples")]
    EmptySequence,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {0} is not in the declared label set")]
    UnknownLabel(PostureLabel),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient at epoch {epoch}, batch {batch}; training aborted")]
    NonFiniteGradient { epoch: usize, batch: usize },
    #[error("model (de)serialization failed: {0}")]
    Persist(#[from] serde_json::Error),
}

/// Learning-rate schedule. The decaying form halves the rate every
/// `period` epochs; `Fixed` is the comparison baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    StepDecay { factor: f64, period: usize },
    Fixed,
}

impl LrSchedule {
    /// Default decay: halve every 20 epochs.
    pub fn default_decay() -> Self {
        LrSchedule::StepDecay {
            factor: 0.5,
            period: 20,
        }
    }

    pub fn lr(&self, initial_lr: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::StepDecay { factor, period } => {
                initial_lr * factor.powi((epoch / period) as i32)
            }
            LrSchedule::Fixed => initial_lr,
        }
    }
}

/// Training configuration; defaults follow the published setup (100
/// epochs, initial rate 0.01, squared-gradient decay 0.99, batches of 27).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub initial_lr: f64,
    /// Adam beta2, the decay rate of the squared-gradient moving average.
    pub sq_grad_decay: f64,
    /// Adam beta1.
    pub beta1: f64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Global-norm gradient clip guarding long-sequence backpropagation.
    pub clip_norm: f64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    /// Optional epoch-loss threshold that ends training early; `None`
    /// always runs `max_epochs`.
    pub early_stop_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            initial_lr: 0.01,
            sq_grad_decay: 0.99,
            beta1: 0.9,
            batch_size: 27,
            schedule: LrSchedule::default_decay(),
            clip_norm: 5.0,
            // Roughly the Glorot half-width for the (40, 3) input matrix;
            // much smaller initializations leave two postures merged on a
            // large fraction of seeds.
            init_scale: 0.4,
            early_stop_loss: None,
        }
    }
}

impl TrainConfig {
    /// The fixed-learning-rate baseline: identical in every respect except
    /// the schedule.
    pub fn fixed_lr() -> Self {
        Self {
            schedule: LrSchedule::Fixed,
            ..Self::default()
        }
    }
}

/// Input, recurrent, and bias weights for the four gates of one direction,
/// stacked in gate order (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmDirectionParams {
    /// (4H, 3) input weights.
    pub w: Array2<f64>,
    /// (4H, H) recurrent weights.
    pub u: Array2<f64>,
    /// (4H) biases.
    pub b: Array1<f64>,
}

impl LstmDirectionParams {
    fn zeros(hidden: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, INPUT_DIM)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseLayer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }
}

pub const INPUT_DIM: usize = 3;

/// The bi-LSTM classifier with its dense head and training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaLstmModel {
    pub schema_version: u32,
    pub hidden: usize,
    pub label_set: Vec<PostureLabel>,
    pub forward: LstmDirectionParams,
    pub backward: LstmDirectionParams,
    /// Three layers: 2H -> d1 (tanh) -> d2 (tanh) -> K (softmax).
    pub dense: Vec<DenseLayer>,
    pub config: TrainConfig,
}

impl AdaLstmModel {
    /// Builds an all-zero model with the given hidden width and dense
    /// hidden widths; `train` draws the actual initialization.
    pub fn new(
        hidden: usize,
        dense_hidden: (usize, usize),
        label_set: &[PostureLabel],
        config: TrainConfig,
    ) -> Self {
        let k = label_set.len();
        Self {
            schema_version: SCHEMA_VERSION,
            hidden,
            label_set: label_set.to_vec(),
            forward: LstmDirectionParams::zeros(hidden),
            backward: LstmDirectionParams::zeros(hidden),
            dense: vec![
                DenseLayer::zeros(dense_hidden.0, 2 * hidden),
                DenseLayer::zeros(dense_hidden.1, dense_hidden.0),
                DenseLayer::zeros(k, dense_hidden.1),
            ],
            config,
        }
    }

    /// The published architecture: ten hidden units per direction and a
    /// 20 -> 16 -> 8 -> K dense head.
    pub fn with_defaults(label_set: &[PostureLabel], config: TrainConfig) -> Self {
        Self::new(10, (16, 8), label_set, config)
    }

    /// Uniform(-s, s) weights with `s = config.init_scale`, +1 forget-gate
    /// bias, zero elsewhere.
    pub fn init_params(&mut self, rng: &mut impl Rng) {
        let h = self.hidden;
        let s = self.config.init_scale;
        for dir in [&mut self.forward, &mut self.backward] {
            for v in dir.w.iter_mut() {
                *v = rng.random_range(-s..s);
            }
            for v in dir.u.iter_mut() {
                *v = rng.random_range(-s..s);
            }
            dir.b.fill(0.0);
            for i in h..2 * h {
                dir.b[i] = 1.0;
            }
        }
        for layer in &mut self.dense {
            for v in layer.w.iter_mut() {
                *v = rng.random_range(-s..s);
            }
            layer.b.fill(0.0);
        }
    }

    /// Flattens every parameter into one vector in a fixed block order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for dir in [&self.forward, &self.backward] {
            out.extend(dir.w.iter());
            out.extend(dir.u.iter());
            out.extend(dir.b.iter());
        }
        for layer in &self.dense {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    /// Writes a flat vector (as produced by [`Self::flatten_params`]) back
    /// into the parameter blocks.
    pub fn set_params_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for dir in [&mut self.forward, &mut self.backward] {
            for v in dir.w.iter_mut() {
                *v = *it.next().expect("flat vector too short");
            }
            for v in dir.u.iter_mut() {
                *v = *it.next().expect("flat vector too short");
            }
            for v in dir.b.iter_mut() {
                *v = *it.next().expect("flat vector too short");
            }
        }
        for layer in &mut self.dense {
            for v in layer.w.iter_mut() {
                *v = *it.next().expect("flat vector too short");
            }
            for v in layer.b.iter_mut() {
                *v = *it.next().expect("flat vector too short");
            }
        }
        assert!(it.next().is_none(), "flat vector too long");
    }

    pub fn n_params(&self) -> usize {
        self.flatten_params().len()
    }

    /// Sequence representation: forward terminal state concatenated with
    /// the backward direction's state at the first input sample.
    pub fn bilstm_forward(&self, samples: &[[f64; 3]]) -> Result<Array1<f64>, LstmError> {
        if samples.is_empty() {
            return Err(LstmError::EmptySequence);
        }
        let fwd = run_direction(&self.forward, self.hidden, samples.iter());
        let bwd = run_direction(&self.backward, self.hidden, samples.iter().rev());
        let mut out = Array1::zeros(2 * self.hidden);
        out.slice_mut(ndarray::s![..self.hidden])
            .assign(&fwd.terminal_h());
        out.slice_mut(ndarray::s![self.hidden..])
            .assign(&bwd.terminal_h());
        Ok(out)
    }

    /// Class probabilities for one episode: bi-LSTM readout through the
    /// dense head and a softmax. Entries are in (0, 1) and sum to 1.
    pub fn predict_proba(&self, ep: &Episode) -> Result<Array1<f64>, LstmError> {
        let samples = episode_inputs(ep);
        let r = self.bilstm_forward(&samples)?;
        let a1 = affine(&self.dense[0], &r.view()).mapv(f64::tanh);
        let a2 = affine(&self.dense[1], &a1.view()).mapv(f64::tanh);
        let logits = affine(&self.dense[2], &a2.view());
        Ok(softmax(&logits))
    }

    /// Predicted label: argmax probability, earlier label on ties.
    pub fn predict(&self, ep: &Episode) -> Result<PostureLabel, LstmError> {
        let p = self.predict_proba(ep)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(self.label_set[best])
    }

    /// Trains in place from a fresh seed-deterministic initialization.
    pub fn train(&mut self, episodes: &[Episode], rng_seed: u64) -> Result<TrainReport, LstmError> {
        train::train(self, episodes, rng_seed)
    }

    pub fn to_json(&self) -> Result<String, LstmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LstmError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn episode_inputs(ep: &Episode) -> Vec<[f64; 3]> {
    ep.samples.iter().map(|s| [s.x, s.y, s.z]).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn affine(layer: &DenseLayer, x: &ArrayView1<f64>) -> Array1<f64> {
    layer.w.dot(x) + &layer.b
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

/// Per-step activations of one direction, cached for backpropagation.
/// Row 0 is the first step *consumed by that direction* (the episode's
/// last sample for the backward direction).
pub(crate) struct DirectionPass {
    pub xs: Vec<[f64; 3]>,
    /// (T, 4H) post-activation gate values in blocks [i, f, g, o].
    pub gates: Array2<f64>,
    /// (T, H) cell states.
    pub c: Array2<f64>,
    /// (T, H) tanh of the cell states.
    pub tanh_c: Array2<f64>,
    /// (T, H) hidden states.
    pub h: Array2<f64>,
}

impl DirectionPass {
    pub fn terminal_h(&self) -> ndarray::ArrayView1<'_, f64> {
        self.h.row(self.h.nrows() - 1)
    }
}

/// One LSTM step: the conventional gated update
/// `i,f,o = sigmoid`, `g = tanh`, `c = f (.) c_prev + i (.) g`,
/// `h = o (.) tanh(c)`.
pub fn lstm_cell_forward(
    params: &LstmDirectionParams,
    x: &[f64; 3],
    h_prev: &ArrayView1<f64>,
    c_prev: &ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let hidden = h_prev.len();
    let xv = Array1::from(x.to_vec());
    let z = params.w.dot(&xv) + params.u.dot(h_prev) + &params.b;
    let mut h = Array1::zeros(hidden);
    let mut c = Array1::zeros(hidden);
    for k in 0..hidden {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hidden + k]);
        let g = z[2 * hidden + k].tanh();
        let o = sigmoid(z[3 * hidden + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
    (h, c)
}

pub(crate) fn run_direction<'a>(
    params: &LstmDirectionParams,
    hidden: usize,
    inputs: impl ExactSizeIterator<Item = &'a [f64; 3]>,
) -> DirectionPass {
    let steps = inputs.len();
    let mut pass = DirectionPass {
        xs: Vec::with_capacity(steps),
        gates: Array2::zeros((steps, 4 * hidden)),
        c: Array2::zeros((steps, hidden)),
        tanh_c: Array2::zeros((steps, hidden)),
        h: Array2::zeros((steps, hidden)),
    };
    let w = params.w.as_slice().expect("standard layout");
    let u = params.u.as_slice().expect("standard layout");
    let b = params.b.as_slice().expect("standard layout");
    let gates = pass.gates.as_slice_mut().expect("standard layout");
    let cs = pass.c.as_slice_mut().expect("standard layout");
    let tanh_cs = pass.tanh_c.as_slice_mut().expect("standard layout");
    let hs = pass.h.as_slice_mut().expect("standard layout");

    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    let mut z = vec![0.0; 4 * hidden];
    for (t, x) in inputs.enumerate() {
        pass.xs.push(*x);
        for (row, zv) in z.iter_mut().enumerate() {
            let mut acc =
                b[row] + w[row * 3] * x[0] + w[row * 3 + 1] * x[1] + w[row * 3 + 2] * x[2];
            let urow = &u[row * hidden..(row + 1) * hidden];
            for (uk, hk) in urow.iter().zip(&h_prev) {
                acc += uk * hk;
            }
            *zv = acc;
        }
        let g0 = t * 4 * hidden;
        let s0 = t * hidden;
        for k in 0..hidden {
            let ig = sigmoid(z[k]);
            let fg = sigmoid(z[hidden + k]);
            let gg = z[2 * hidden + k].tanh();
            let og = sigmoid(z[3 * hidden + k]);
            gates[g0 + k] = ig;
            gates[g0 + hidden + k] = fg;
            gates[g0 + 2 * hidden + k] = gg;
            gates[g0 + 3 * hidden + k] = og;
            let c_new = fg * c_prev[k] + ig * gg;
            let tc = c_new.tanh();
            cs[s0 + k] = c_new;
            tanh_cs[s0 + k] = tc;
            hs[s0 + k] = og * tc;
            c_prev[k] = c_new;
            h_prev[k] = og * tc;
        }
    }
    pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{AccelSample, SensorLocation};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const THREE: [PostureLabel; 3] = [
        PostureLabel::Supine,
        PostureLabel::Prone,
        PostureLabel::LeftSide,
    ];

    fn episode(samples: Vec<AccelSample>) -> Episode {
        Episode {
            samples,
            sample_rate_hz: 30.0,
            subject_id: "s".into(),
            location: SensorLocation::Chest,
            label: PostureLabel::Supine,
            provenance: "t".into(),
        }
    }

    #[test]
    fn zero_weight_cell_outputs_zero() {
        let params = LstmDirectionParams::zeros(4);
        let h = Array1::zeros(4);
        let c = Array1::zeros(4);
        let (h1, c1) = lstm_cell_forward(&params, &[0.3, -0.7, 1.2], &h.view(), &c.view());
        assert!(h1.iter().all(|&v| v == 0.0));
        assert!(c1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = AdaLstmModel::new(6, (4, 3), &THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let mut h = Array1::zeros(6);
        let mut c = Array1::zeros(6);
        for step in 0..200 {
            let x = [
                (step as f64 * 0.7).sin() * 3.0,
                (step as f64 * 0.3).cos() * 3.0,
                1.0,
            ];
            let (h2, c2) = lstm_cell_forward(&model.forward, &x, &h.view(), &c.view());
            h = h2;
            c = c2;
            assert!(h.iter().all(|&v| v.abs() < 1.0));
        }
    }

    /// Direct transcription of the gate equations, evaluated scalar by
    /// scalar, as an independent oracle for the cell step.
    fn cell_oracle(
        params: &LstmDirectionParams,
        x: &[f64; 3],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hidden = h_prev.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |row: usize| -> f64 {
            let mut acc = params.b[row];
            for (d, &xd) in x.iter().enumerate() {
                acc += params.w[[row, d]] * xd;
            }
            for (k, &hk) in h_prev.iter().enumerate() {
                acc += params.u[[row, k]] * hk;
            }
            acc
        };
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for k in 0..hidden {
            let i = sig(pre(k));
            let f = sig(pre(hidden + k));
            let g = pre(2 * hidden + k).tanh();
            let o = sig(pre(3 * hidden + k));
            c[k] = f * c_prev[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        (h, c)
    }

    #[test]
    fn cell_matches_hand_oracle() {
        let hidden = 2;
        let mut params = LstmDirectionParams::zeros(hidden);
        let mut v = 0.05;
        for x in params.w.iter_mut().chain(params.u.iter_mut()) {
            *x = v;
            v = -v * 0.9 + 0.013;
        }
        params.b = Array1::from(vec![0.1, -0.2, 1.0, 1.0, 0.3, -0.3, 0.0, 0.2]);
        let h_prev = Array1::from(vec![0.4, -0.6]);
        let c_prev = Array1::from(vec![-0.2, 0.9]);
        let x = [0.5, -1.3, 0.8];
        let (h, c) = lstm_cell_forward(&params, &x, &h_prev.view(), &c_prev.view());
        let (ho, co) = cell_oracle(
            &params,
            &x,
            h_prev.as_slice().unwrap(),
            c_prev.as_slice().unwrap(),
        );
        for k in 0..hidden {
            assert_abs_diff_eq!(h[k], ho[k], epsilon = 1e-12);
            assert_abs_diff_eq!(c[k], co[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_model_readout_is_zero() {
        let model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        let r = model
            .bilstm_forward(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
            .unwrap();
        assert_eq!(r.len(), 20);
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn length_one_sequence_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = AdaLstmModel::new(3, (4, 3), &THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let x = [0.2, -0.4, 0.9];
        let r = model.bilstm_forward(&[x]).unwrap();
        let z = Array1::zeros(3);
        let (hf, _) = lstm_cell_forward(&model.forward, &x, &z.view(), &z.view());
        let (hb, _) = lstm_cell_forward(&model.backward, &x, &z.view(), &z.view());
        for k in 0..3 {
            assert_abs_diff_eq!(r[k], hf[k], epsilon = 1e-15);
            assert_abs_diff_eq!(r[3 + k], hb[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_sequence_is_error() {
        let model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        assert!(matches!(
            model.bilstm_forward(&[]),
            Err(LstmError::EmptySequence)
        ));
    }

    #[test]
    fn reversal_symmetry_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = AdaLstmModel::new(4, (4, 3), &THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let seq: Vec<[f64; 3]> = (0..12)
            .map(|t| {
                [
                    (t as f64 * 0.31).sin(),
                    (t as f64 * 0.17).cos(),
                    0.1 * t as f64,
                ]
            })
            .collect();
        let r = model.bilstm_forward(&seq).unwrap();

        let mut swapped = model.clone();
        std::mem::swap(&mut swapped.forward, &mut swapped.backward);
        let rev: Vec<[f64; 3]> = seq.iter().rev().cloned().collect();
        let r2 = swapped.bilstm_forward(&rev).unwrap();
        // Swapping direction parameters and reversing the input permutes
        // the two halves of the readout.
        for k in 0..4 {
            assert_abs_diff_eq!(r[k], r2[4 + k], epsilon = 1e-12);
            assert_abs_diff_eq!(r[4 + k], r2[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_model_probabilities_are_uniform() {
        let model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        let ep = episode(vec![AccelSample::new(0.1, 0.2, 0.9); 5]);
        let p = model.predict_proba(&ep).unwrap();
        for &v in p.iter() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        // Tie rule: earliest label.
        assert_eq!(model.predict(&ep).unwrap(), PostureLabel::Supine);
    }

    #[test]
    fn softmax_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let ep = episode(
            (0..30)
                .map(|t| AccelSample::new((t as f64 * 0.2).sin(), 0.3, 0.9))
                .collect(),
        );
        let p = model.predict_proba(&ep).unwrap();
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));

        // Adding a constant to the final bias leaves probabilities unchanged.
        let mut shifted = model.clone();
        shifted.dense[2].b.mapv_inplace(|v| v + 3.7);
        let p2 = shifted.predict_proba(&ep).unwrap();
        for (a, b) in p.iter().zip(p2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn probabilities_match_independent_forward_oracle() {
        // Hand-set tiny model, H = 1, evaluated two independent ways.
        let mut model = AdaLstmModel::new(1, (2, 2), &THREE[..2], TrainConfig::default());
        model.forward.w = Array2::from_shape_vec(
            (4, 3),
            vec![
                0.2, -0.1, 0.3, 0.5, 0.0, -0.2, 0.1, 0.4, -0.3, 0.0, 0.2, 0.1,
            ],
        )
        .unwrap();
        model.forward.u = Array2::from_shape_vec((4, 1), vec![0.3, -0.4, 0.2, 0.1]).unwrap();
        model.forward.b = Array1::from(vec![0.0, 1.0, 0.1, -0.1]);
        model.backward = model.forward.clone();
        model.dense[0].w = Array2::from_shape_vec((2, 2), vec![0.7, -0.2, 0.1, 0.5]).unwrap();
        model.dense[0].b = Array1::from(vec![0.05, -0.05]);
        model.dense[1].w = Array2::from_shape_vec((2, 2), vec![0.3, 0.3, -0.6, 0.2]).unwrap();
        model.dense[1].b = Array1::from(vec![0.0, 0.1]);
        model.dense[2].w = Array2::from_shape_vec((2, 2), vec![1.0, -1.0, 0.5, 0.5]).unwrap();
        model.dense[2].b = Array1::from(vec![0.0, 0.2]);

        let xs = [[0.3, -0.2, 0.9], [0.1, 0.0, 1.0], [-0.4, 0.2, 0.8]];
        let ep = episode(
            xs.iter()
                .map(|x| AccelSample::new(x[0], x[1], x[2]))
                .collect(),
        );
        let p = model.predict_proba(&ep).unwrap();

        // Oracle: scalar-by-scalar evaluation.
        let step = |x: &[f64; 3], h: f64, c: f64| -> (f64, f64) {
            let (hv, cv) = cell_oracle(&model.forward, x, &[h], &[c]);
            (hv[0], cv[0])
        };
        let (mut h, mut c) = (0.0, 0.0);
        for x in &xs {
            let (h2, c2) = step(x, h, c);
            h = h2;
            c = c2;
        }
        let hf = h;
        let (mut h, mut c) = (0.0, 0.0);
        for x in xs.iter().rev() {
            let (h2, c2) = step(x, h, c);
            h = h2;
            c = c2;
        }
        let hb = h;
        let r = [hf, hb];
        let lin = |w: &Array2<f64>, b: &Array1<f64>, x: &[f64]| -> Vec<f64> {
            (0..w.nrows())
                .map(|i| b[i] + (0..w.ncols()).map(|j| w[[i, j]] * x[j]).sum::<f64>())
                .collect()
        };
        let a1: Vec<f64> = lin(&model.dense[0].w, &model.dense[0].b, &r)
            .iter()
            .map(|v| v.tanh())
            .collect();
        let a2: Vec<f64> = lin(&model.dense[1].w, &model.dense[1].b, &a1)
            .iter()
            .map(|v| v.tanh())
            .collect();
        let logits = lin(&model.dense[2].w, &model.dense[2].b, &a2);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        for (k, e) in exps.iter().enumerate() {
            assert_abs_diff_eq!(p[k], e / s, epsilon = 1e-12);
        }
    }

    #[test]
    fn lr_schedule_values() {
        let decay = LrSchedule::default_decay();
        assert_eq!(decay.lr(0.01, 0), 0.01);
        assert_eq!(decay.lr(0.01, 19), 0.01);
        assert_eq!(decay.lr(0.01, 20), 0.005);
        assert_eq!(decay.lr(0.01, 40), 0.0025);
        assert_eq!(LrSchedule::Fixed.lr(0.01, 99), 0.01);
    }

    #[test]
    fn flat_round_trip_preserves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let flat = model.flatten_params();
        let mut other = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        other.set_params_from_flat(&flat);
        assert_eq!(model, other);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut model = AdaLstmModel::with_defaults(&THREE, TrainConfig::default());
        model.init_params(&mut rng);
        let text = model.to_json().unwrap();
        let back = AdaLstmModel::from_json(&text).unwrap();
        assert_eq!(back, model);
    }
}
