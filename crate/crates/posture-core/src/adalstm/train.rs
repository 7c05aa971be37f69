//! Training: length-sorted mini-batches, the length-weighted cross-entropy
//! objective, exact backpropagation through time over both directions, and
//! Adam with bias correction.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    affine, run_direction, softmax, AdaLstmModel, DirectionPass, LstmDirectionParams, LstmError,
};
use crate::signal::{Episode, PostureLabel};

/// Log-argument clamp for the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;
/// Adam denominator stabilizer.
pub const ADAM_EPS: f64 = 1e-8;

/// A mini-batch of episodes padded to a common length.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Indices into the episode list the batch was built from.
    pub episode_indices: Vec<usize>,
    pub lengths: Vec<usize>,
    /// Class index per sequence.
    pub targets: Vec<usize>,
    /// (sequences, max_len, 3); padded steps are zero-filled.
    pub padded: Array3<f64>,
    /// True exactly on real samples.
    pub mask: Array2<bool>,
}

impl Batch {
    fn from_episodes(episodes: &[Episode], indices: &[usize], targets: &[usize]) -> Self {
        let lengths: Vec<usize> = indices.iter().map(|&i| episodes[i].len()).collect();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        let mut padded = Array3::zeros((indices.len(), max_len, 3));
        let mut mask = Array2::from_elem((indices.len(), max_len), false);
        for (row, &ei) in indices.iter().enumerate() {
            for (t, s) in episodes[ei].samples.iter().enumerate() {
                padded[[row, t, 0]] = s.x;
                padded[[row, t, 1]] = s.y;
                padded[[row, t, 2]] = s.z;
                mask[[row, t]] = true;
            }
        }
        Batch {
            episode_indices: indices.to_vec(),
            lengths,
            targets: indices.iter().map(|&i| targets[i]).collect(),
            padded,
            mask,
        }
    }

    /// Zero-padded cells in the batch tensor.
    pub fn padding_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    fn inputs_of(&self, row: usize) -> Vec<[f64; 3]> {
        (0..self.lengths[row])
            .map(|t| {
                debug_assert!(self.mask[[row, t]]);
                [
                    self.padded[[row, t, 0]],
                    self.padded[[row, t, 1]],
                    self.padded[[row, t, 2]],
                ]
            })
            .collect()
    }
}

/// Packs episodes into mini-batches of at most `batch_size` sequences.
/// Episodes are sorted by length first so similar lengths share a batch
/// and padding stays short; the batch order is then shuffled by the seed.
pub fn make_minibatches(
    episodes: &[Episode],
    label_set: &[PostureLabel],
    batch_size: usize,
    rng_seed: u64,
) -> Result<Vec<Batch>, LstmError> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    if episodes.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    let targets: Vec<usize> = episodes
        .iter()
        .map(|e| {
            label_set
                .iter()
                .position(|l| *l == e.label)
                .ok_or(LstmError::UnknownLabel(e.label))
        })
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by_key(|&i| (episodes[i].len(), i));
    let mut batches: Vec<Batch> = order
        .chunks(batch_size)
        .map(|chunk| Batch::from_episodes(episodes, chunk, &targets))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    batches.shuffle(&mut rng);
    Ok(batches)
}

/// Length-weighted cross-entropy over a batch of predictions.
///
/// `predicted` and `one_hot` are (sequences, classes); `lengths` holds the
/// per-sequence weights. With `normalize` the weighted sum is divided by
/// the total weight, which keeps the learning-rate meaning stable across
/// batch compositions; without it the raw weighted sum is returned.
pub fn weighted_cross_entropy(
    predicted: &Array2<f64>,
    one_hot: &Array2<f64>,
    lengths: &[usize],
    normalize: bool,
) -> Result<f64, LstmError> {
    if predicted.dim() != one_hot.dim() || predicted.nrows() != lengths.len() {
        return Err(LstmError::ShapeMismatch(format!(
            "predictions {:?}, targets {:?}, lengths {}",
            predicted.dim(),
            one_hot.dim(),
            lengths.len()
        )));
    }
    let mut sum = 0.0;
    let mut weight = 0.0;
    for (row, &m) in lengths.iter().enumerate() {
        let m = m as f64;
        weight += m;
        for k in 0..predicted.ncols() {
            if one_hot[[row, k]] != 0.0 {
                sum -= m * one_hot[[row, k]] * predicted[[row, k]].max(LOG_EPS).ln();
            }
        }
    }
    Ok(if normalize { sum / weight } else { sum })
}

/// Gradient buffers mirroring one direction's parameters.
struct DirGrads {
    w: Array2<f64>,
    u: Array2<f64>,
    b: Array1<f64>,
}

impl DirGrads {
    fn zeros(hidden: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, super::INPUT_DIM)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }
}

/// Loss value and flattened gradients for one batch.
pub struct BatchGradients {
    /// Normalized loss (weighted sum / total weight).
    pub loss: f64,
    /// Raw weighted cross-entropy sum.
    pub weighted_ce: f64,
    /// Total weight (sum of sequence lengths).
    pub weight: f64,
    /// Gradients of the normalized loss, flattened in parameter order.
    pub flat: Vec<f64>,
}

/// Backpropagation through time for one direction. `dh_terminal` is the
/// gradient arriving at the direction's final hidden state.
fn bptt_direction(
    params: &LstmDirectionParams,
    pass: &DirectionPass,
    dh_terminal: &[f64],
    grads: &mut DirGrads,
) {
    let hidden = dh_terminal.len();
    let steps = pass.h.nrows();
    let u = params.u.as_slice().expect("standard layout");
    let gates = pass.gates.as_slice().expect("standard layout");
    let cs = pass.c.as_slice().expect("standard layout");
    let tanh_cs = pass.tanh_c.as_slice().expect("standard layout");
    let hs = pass.h.as_slice().expect("standard layout");
    let gw = grads.w.as_slice_mut().expect("standard layout");
    let gu = grads.u.as_slice_mut().expect("standard layout");
    let gb = grads.b.as_slice_mut().expect("standard layout");

    let zeros = vec![0.0; hidden];
    let mut dh = dh_terminal.to_vec();
    let mut dc = vec![0.0; hidden];
    let mut dz = vec![0.0; 4 * hidden];
    for t in (0..steps).rev() {
        let g0 = t * 4 * hidden;
        let s0 = t * hidden;
        let c_prev = if t > 0 {
            &cs[s0 - hidden..s0]
        } else {
            &zeros[..]
        };
        let h_prev = if t > 0 {
            &hs[s0 - hidden..s0]
        } else {
            &zeros[..]
        };

        for k in 0..hidden {
            let i = gates[g0 + k];
            let f = gates[g0 + hidden + k];
            let g = gates[g0 + 2 * hidden + k];
            let o = gates[g0 + 3 * hidden + k];
            let tc = tanh_cs[s0 + k];
            let d_o = dh[k] * tc;
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            let d_i = dc[k] * g;
            let d_f = dc[k] * c_prev[k];
            let d_g = dc[k] * i;
            dz[k] = d_i * i * (1.0 - i);
            dz[hidden + k] = d_f * f * (1.0 - f);
            dz[2 * hidden + k] = d_g * (1.0 - g * g);
            dz[3 * hidden + k] = d_o * o * (1.0 - o);
            dc[k] *= f;
        }

        let x = &pass.xs[t];
        for (row, &d) in dz.iter().enumerate() {
            gw[row * 3] += d * x[0];
            gw[row * 3 + 1] += d * x[1];
            gw[row * 3 + 2] += d * x[2];
            let gu_row = &mut gu[row * hidden..(row + 1) * hidden];
            for (gk, hk) in gu_row.iter_mut().zip(h_prev) {
                *gk += d * hk;
            }
            gb[row] += d;
        }

        for (k, dh_k) in dh.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (row, &d) in dz.iter().enumerate() {
                acc += u[row * hidden + k] * d;
            }
            *dh_k = acc;
        }
    }
}

/// Exact gradients of the normalized length-weighted cross-entropy for one
/// batch, via backpropagation through time over both directions. Padded
/// steps never enter the computation, so their stored values cannot affect
/// the result.
pub fn compute_gradients(model: &AdaLstmModel, batch: &Batch) -> Result<BatchGradients, LstmError> {
    let hidden = model.hidden;
    let total_weight: f64 = batch.lengths.iter().map(|&m| m as f64).sum();
    let mut fwd_g = DirGrads::zeros(hidden);
    let mut bwd_g = DirGrads::zeros(hidden);
    let mut dense_g: Vec<(Array2<f64>, Array1<f64>)> = model
        .dense
        .iter()
        .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut weighted_ce = 0.0;

    for row in 0..batch.lengths.len() {
        let xs = batch.inputs_of(row);
        if xs.is_empty() {
            return Err(LstmError::EmptySequence);
        }
        let m = batch.lengths[row] as f64;
        let target = batch.targets[row];

        let fwd = run_direction(&model.forward, hidden, xs.iter());
        let bwd = run_direction(&model.backward, hidden, xs.iter().rev());
        let mut r = Array1::zeros(2 * hidden);
        r.slice_mut(ndarray::s![..hidden]).assign(&fwd.terminal_h());
        r.slice_mut(ndarray::s![hidden..]).assign(&bwd.terminal_h());

        let a1 = affine(&model.dense[0], &r.view()).mapv(f64::tanh);
        let a2 = affine(&model.dense[1], &a1.view()).mapv(f64::tanh);
        let logits = affine(&model.dense[2], &a2.view());
        let p = softmax(&logits);

        weighted_ce -= m * p[target].max(LOG_EPS).ln();

        // d(normalized loss)/d(logits) = (p - onehot) * m / total_weight.
        let scale = m / total_weight;
        let mut dlogits = p.clone();
        dlogits[target] -= 1.0;
        dlogits.mapv_inplace(|v| v * scale);

        // Dense head, layer 3 (linear).
        for i in 0..dlogits.len() {
            for j in 0..a2.len() {
                dense_g[2].0[[i, j]] += dlogits[i] * a2[j];
            }
            dense_g[2].1[i] += dlogits[i];
        }
        let da2 = model.dense[2].w.t().dot(&dlogits);
        let dz2 = &da2 * &a2.mapv(|v| 1.0 - v * v);
        for i in 0..dz2.len() {
            for j in 0..a1.len() {
                dense_g[1].0[[i, j]] += dz2[i] * a1[j];
            }
            dense_g[1].1[i] += dz2[i];
        }
        let da1 = model.dense[1].w.t().dot(&dz2);
        let dz1 = &da1 * &a1.mapv(|v| 1.0 - v * v);
        for i in 0..dz1.len() {
            for j in 0..r.len() {
                dense_g[0].0[[i, j]] += dz1[i] * r[j];
            }
            dense_g[0].1[i] += dz1[i];
        }
        let dr = model.dense[0].w.t().dot(&dz1);

        let dr = dr.as_slice().expect("standard layout");
        bptt_direction(&model.forward, &fwd, &dr[..hidden], &mut fwd_g);
        bptt_direction(&model.backward, &bwd, &dr[hidden..], &mut bwd_g);
    }

    let mut flat: Vec<f64> = Vec::with_capacity(model.n_params());
    for g in [&fwd_g, &bwd_g] {
        flat.extend(g.w.iter());
        flat.extend(g.u.iter());
        flat.extend(g.b.iter());
    }
    for (gw, gb) in &dense_g {
        flat.extend(gw.iter());
        flat.extend(gb.iter());
    }

    let loss = weighted_ce / total_weight;
    if !loss.is_finite() || flat.iter().any(|v| !v.is_finite()) {
        return Err(LstmError::NonFiniteGradient { epoch: 0, batch: 0 });
    }
    Ok(BatchGradients {
        loss,
        weighted_ce,
        weight: total_weight,
        flat,
    })
}

/// Adam accumulator state over the flattened parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam step applied in place.
pub fn adam_update(
    state: &mut OptimizerState,
    params: &mut [f64],
    grads: &[f64],
    beta1: f64,
    beta2: f64,
    lr: f64,
) -> Result<(), LstmError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(LstmError::ShapeMismatch(format!(
            "params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Weighted cross-entropy over the epoch's data divided by the total
    /// weight.
    pub mean_loss: f64,
}

/// Training outcome: the per-epoch trace plus any warnings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
}

impl TrainReport {
    /// Emits the loss trace as CSV with header `epoch,lr,mean_loss`.
    pub fn write_loss_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,lr,mean_loss")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.lr, e.mean_loss)?;
        }
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

pub(super) fn train(
    model: &mut AdaLstmModel,
    episodes: &[Episode],
    rng_seed: u64,
) -> Result<TrainReport, LstmError> {
    if episodes.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    let mut warnings = Vec::new();
    for label in &model.label_set {
        if !episodes.iter().any(|e| e.label == *label) {
            warnings.push(format!("no training episodes for class {label}"));
        }
    }

    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    model.init_params(&mut rng);
    let batches = make_minibatches(
        episodes,
        &model.label_set,
        cfg.batch_size,
        crate::seeds::derive(rng_seed, 1),
    )?;
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut opt = OptimizerState::new(model.n_params());
    let mut trace = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.schedule.lr(cfg.initial_lr, epoch);
        order.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        let mut weight_sum = 0.0;
        for &bi in &order {
            let bg = compute_gradients(model, &batches[bi]).map_err(|e| match e {
                LstmError::NonFiniteGradient { .. } => {
                    LstmError::NonFiniteGradient { epoch, batch: bi }
                }
                other => other,
            })?;
            ce_sum += bg.weighted_ce;
            weight_sum += bg.weight;

            let mut grads = bg.flat;
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                for g in grads.iter_mut() {
                    *g *= s;
                }
            }
            let mut flat = model.flatten_params();
            adam_update(
                &mut opt,
                &mut flat,
                &grads,
                cfg.beta1,
                cfg.sq_grad_decay,
                lr,
            )?;
            model.set_params_from_flat(&flat);
        }
        let mean_loss = ce_sum / weight_sum;
        trace.push(EpochStats {
            epoch,
            lr,
            mean_loss,
        });
        if let Some(threshold) = cfg.early_stop_loss {
            if mean_loss < threshold {
                break;
            }
        }
    }

    Ok(TrainReport {
        epochs: trace,
        warnings,
    })
}
