//! The self-challenging step: per-sample representation gradients, pooled
//! cell weights, exact top-k percentile masks, and the perturbed update.

use crate::error::{Error, Result};
use crate::model::{ModelGraph, NetworkParams, ParamGrads};
use crate::tensor::{per_sample_cross_entropy, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which cells of `Z` a mask operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RscMode {
    /// Whole spatial positions (all channels of a cell), weighted by
    /// channel-averaged gradients.
    #[serde(rename = "spatial")]
    Spatial,
    /// Whole channels (all positions of a channel), weighted by spatially
    /// averaged gradients.
    #[serde(rename = "channel")]
    Channel,
    /// Per selected sample, spatial or channel with probability 1/2 each.
    #[serde(rename = "spatial+channel")]
    SpatialChannel,
    /// Individual entries of `Z`.
    #[serde(rename = "elementwise")]
    Elementwise,
}

/// How cells are ranked before muting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropStrategy {
    /// Largest pooled representation gradient (the default).
    #[serde(rename = "top-gradient")]
    TopGradient,
    /// Largest pooled absolute activation.
    #[serde(rename = "top-activation")]
    TopActivation,
    /// Uniformly random cells.
    #[serde(rename = "random")]
    Random,
}

/// How the per-batch subset of samples is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchSelection {
    #[serde(rename = "random")]
    Random,
    /// Highest per-sample cross-entropy first.
    #[serde(rename = "top-loss")]
    TopLoss,
}

/// All hyperparameters of the self-challenging step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RscConfig {
    /// Percentage of cells muted per selected sample, in [0, 100].
    pub drop_percentage: f64,
    /// Percentage of samples challenged per batch, in (0, 100].
    pub batch_percentage: f64,
    pub mode: RscMode,
    pub strategy: DropStrategy,
    pub batch_selection: BatchSelection,
    /// When mode is spatial+channel: apply both masks to every selected
    /// sample instead of flipping a coin between them.
    pub apply_both: bool,
    pub seed: u64,
}

impl Default for RscConfig {
    fn default() -> Self {
        RscConfig {
            drop_percentage: 33.3,
            batch_percentage: 33.3,
            mode: RscMode::SpatialChannel,
            strategy: DropStrategy::TopGradient,
            batch_selection: BatchSelection::TopLoss,
            apply_both: false,
            seed: 0,
        }
    }
}

impl RscConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.drop_percentage) {
            return Err(Error::InvalidConfig(format!(
                "drop_percentage {} outside [0, 100]",
                self.drop_percentage
            )));
        }
        if !(self.batch_percentage > 0.0 && self.batch_percentage <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "batch_percentage {} outside (0, 100]",
                self.batch_percentage
            )));
        }
        Ok(())
    }
}

/// Binary mask over one sample's representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    /// Same shape as one sample's `Z`; entries are exactly 0.0 or 1.0.
    pub tensor: Tensor,
    /// Number of muted cells at the pooling granularity.
    pub muted_count: usize,
}

impl Mask {
    pub fn all_ones(z_shape: &[usize; 3]) -> Self {
        Mask {
            tensor: Tensor::ones(z_shape.to_vec()),
            muted_count: 0,
        }
    }
}

/// Per-sample gradient of the true-class logit with respect to `Z`.
///
/// Records the top classifier on the clean features and differentiates the
/// batch sum of label-selected logits; samples are independent, so each row
/// is that sample's own gradient.
pub fn representation_gradient(graph: &mut ModelGraph, labels: &Tensor) -> Result<Tensor> {
    let logits = graph.logits(graph.z)?;
    let y = graph.constant(labels.clone());
    let picked = graph.tape.mul(logits, y)?;
    let total = graph.tape.sum_all(picked)?;
    let z = graph.z;
    Ok(graph.tape.grad(total, &[z])?.remove(0))
}

/// Pool a single sample's gradient (or activation) tensor to cell weights.
///
/// `spatial` averages over channels to [H', W']; `channel` averages over
/// positions to [C]; `elementwise` returns the tensor unchanged. The combined
/// spatial+channel mode must be resolved to one of the two before pooling.
pub fn pooled_weights(g: &Tensor, mode: RscMode) -> Result<Tensor> {
    let s = g.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "pooled_weights",
            lhs: s.to_vec(),
            rhs: vec![0, 0, 0],
        });
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    match mode {
        RscMode::Elementwise => Ok(g.clone()),
        RscMode::Spatial => {
            let mut out = Tensor::zeros(vec![h, w]);
            for (cell, chunk) in out.data_mut().iter_mut().zip(g.data().chunks(c)) {
                *cell = chunk.iter().sum::<f64>() / c as f64;
            }
            Ok(out)
        }
        RscMode::Channel => {
            let mut out = Tensor::zeros(vec![c]);
            let data = out.data_mut();
            for chunk in g.data().chunks(c) {
                for (acc, v) in data.iter_mut().zip(chunk) {
                    *acc += v;
                }
            }
            let inv = 1.0 / (h * w) as f64;
            for v in data.iter_mut() {
                *v *= inv;
            }
            Ok(out)
        }
        RscMode::SpatialChannel => Err(Error::InvalidConfig(
            "spatial+channel must be resolved to spatial or channel before pooling".into(),
        )),
    }
}

/// Exact number of muted cells for a drop percentage over `n` cells.
pub fn muted_cell_count(p: f64, n: usize) -> usize {
    (p / 100.0 * n as f64).round() as usize
}

/// Indices of the top-k weights, largest first, ties broken by lowest index.
fn top_k_indices(weights: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Uniform k-subset of 0..n without replacement (partial Fisher-Yates).
fn random_indices<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Build the mask for one sample from pooled cell weights.
///
/// Exactly `round(p/100 * N)` cells are muted, where `N` is the cell count at
/// the pooling granularity. A muted spatial cell zeroes its whole channel
/// fiber; a muted channel zeroes its whole spatial slice. `p = 0` yields the
/// all-ones no-op mask.
pub fn build_mask<R: Rng>(
    weights: &Tensor,
    p: f64,
    z_shape: &[usize; 3],
    mode: RscMode,
    strategy: DropStrategy,
    rng: &mut R,
) -> Result<Mask> {
    let (h, w, c) = (z_shape[0], z_shape[1], z_shape[2]);
    let n = match mode {
        RscMode::Spatial => h * w,
        RscMode::Channel => c,
        RscMode::Elementwise => h * w * c,
        RscMode::SpatialChannel => {
            return Err(Error::InvalidConfig(
                "spatial+channel must be resolved before building a mask".into(),
            ))
        }
    };
    if strategy != DropStrategy::Random && weights.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "build_mask",
            lhs: weights.shape().to_vec(),
            rhs: vec![n],
        });
    }
    let k = muted_cell_count(p, n);
    let muted = match strategy {
        DropStrategy::Random => random_indices(n, k, rng),
        _ => top_k_indices(weights.data(), k),
    };
    let mut mask = Tensor::ones(z_shape.to_vec());
    let data = mask.data_mut();
    for &cell in &muted {
        match mode {
            RscMode::Spatial => {
                data[cell * c..(cell + 1) * c].fill(0.0);
            }
            RscMode::Channel => {
                for pos in 0..h * w {
                    data[pos * c + cell] = 0.0;
                }
            }
            RscMode::Elementwise => data[cell] = 0.0,
            RscMode::SpatialChannel => unreachable!(),
        }
    }
    Ok(Mask {
        tensor: mask,
        muted_count: k,
    })
}

/// z_tilde = z (*) mask, elementwise; untouched entries stay bitwise identical.
pub fn apply_mask(z: &Tensor, mask: &Mask) -> Result<Tensor> {
    if z.shape() != mask.tensor.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_mask",
            lhs: z.shape().to_vec(),
            rhs: mask.tensor.shape().to_vec(),
        });
    }
    let mut out = z.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask.tensor.data()) {
        *v *= m;
    }
    Ok(out)
}

/// Choose ceil(batch_percentage/100 * B) sample indices, returned ascending.
///
/// `top-loss` takes the highest per-sample losses (ties to the lowest index);
/// `random` picks uniformly without replacement.
pub fn select_batch_subset<R: Rng>(
    losses: &[f64],
    batch_percentage: f64,
    selection: BatchSelection,
    rng: &mut R,
) -> Vec<usize> {
    let b = losses.len();
    let count = ((batch_percentage / 100.0 * b as f64).ceil() as usize)
        .min(b)
        .max(1);
    let mut picked = match selection {
        BatchSelection::TopLoss => top_k_indices(losses, count),
        BatchSelection::Random => random_indices(b, count, rng),
    };
    picked.sort_unstable();
    picked
}

/// Diagnostics of one training step.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    /// Mean batch loss on the clean representation.
    pub clean_loss: f64,
    /// Mean batch loss on the muted representation.
    pub masked_loss: f64,
    /// masked/clean loss ratio; absent when the clean loss is zero.
    pub gamma_ratio: Option<f64>,
    /// |clean - masked|, the per-step loss-difference contribution.
    pub loss_gap: f64,
    /// Squared L2 norm of the full parameter gradient.
    pub grad_sq_norm: f64,
}

impl StepDiagnostics {
    /// Whether muting did not decrease the loss on this step.
    pub fn challenge_raised_loss(&self) -> bool {
        self.masked_loss >= self.clean_loss
    }
}

/// Effective mask modes for each selected sample, consuming one coin flip per
/// sample when the combined mode is active.
fn effective_modes<R: Rng>(cfg: &RscConfig, n_selected: usize, rng: &mut R) -> Vec<Vec<RscMode>> {
    (0..n_selected)
        .map(|_| match cfg.mode {
            RscMode::SpatialChannel => {
                if cfg.apply_both {
                    vec![RscMode::Spatial, RscMode::Channel]
                } else if rng.gen_bool(0.5) {
                    vec![RscMode::Spatial]
                } else {
                    vec![RscMode::Channel]
                }
            }
            m => vec![m],
        })
        .collect()
}

/// One full self-challenging step.
///
/// Forward to `Z`, per-sample representation gradients, masks for the selected
/// subset (everyone else keeps all-ones), loss on the muted forward, and the
/// gradient of that loss with respect to every parameter.
pub fn rsc_step<R: Rng>(
    params: &NetworkParams,
    batch: &Tensor,
    labels: &Tensor,
    cfg: &RscConfig,
    rng: &mut R,
) -> Result<(ParamGrads, StepDiagnostics)> {
    cfg.validate()?;
    let b = batch.shape()[0];
    let z_shape = params.arch.z_shape();

    let mut graph = params.features_graph(batch)?;
    let z_values = graph.tape.value(graph.z).clone();

    // clean per-sample losses drive subset selection and diagnostics
    let clean_logits_id = graph.logits(graph.z)?;
    let clean_logits = graph.tape.value(clean_logits_id).clone();
    let per_sample = per_sample_cross_entropy(&clean_logits, labels)?;
    let clean_loss = per_sample.iter().sum::<f64>() / b as f64;

    let selected = select_batch_subset(&per_sample, cfg.batch_percentage, cfg.batch_selection, rng);
    let modes = effective_modes(cfg, selected.len(), rng);

    let g_z = representation_gradient(&mut graph, labels)?;

    let per_sample_len: usize = z_shape.iter().product();
    let mut mask_data = vec![1.0; b * per_sample_len];
    for (&i, sample_modes) in selected.iter().zip(&modes) {
        let z_i = Tensor::new(z_shape.to_vec(), z_values.sample(i).to_vec())?;
        let g_i = Tensor::new(z_shape.to_vec(), g_z.sample(i).to_vec())?;
        for mode in sample_modes {
            let weights = match cfg.strategy {
                DropStrategy::TopGradient => pooled_weights(&g_i, *mode)?,
                DropStrategy::TopActivation => {
                    let mut abs = z_i.clone();
                    for v in abs.data_mut() {
                        *v = v.abs();
                    }
                    pooled_weights(&abs, *mode)?
                }
                DropStrategy::Random => Tensor::zeros(vec![1]),
            };
            let mask = build_mask(&weights, cfg.drop_percentage, &z_shape, *mode, cfg.strategy, rng)?;
            let dst = &mut mask_data[i * per_sample_len..(i + 1) * per_sample_len];
            for (d, m) in dst.iter_mut().zip(mask.tensor.data()) {
                *d *= m;
            }
        }
    }
    let mut batch_mask_shape = vec![b];
    batch_mask_shape.extend_from_slice(&z_shape);
    let batch_mask = Tensor::new(batch_mask_shape, mask_data)?;

    let mask_id = graph.constant(batch_mask);
    let z = graph.z;
    let z_tilde = graph.tape.mul(z, mask_id)?;
    let masked_logits = graph.logits(z_tilde)?;
    let loss_id = graph.loss(masked_logits, labels)?;
    let masked_loss = graph.tape.value(loss_id).item()?;

    let grads = graph.param_grads(loss_id)?;
    let diagnostics = StepDiagnostics {
        clean_loss,
        masked_loss,
        gamma_ratio: if clean_loss > 0.0 {
            Some(masked_loss / clean_loss)
        } else {
            None
        },
        loss_gap: (clean_loss - masked_loss).abs(),
        grad_sq_norm: grads.sq_norm(),
    };
    Ok((grads, diagnostics))
}

/// A conventional step with no muting; diagnostics mirror a p=0 challenge.
pub fn plain_step(
    params: &NetworkParams,
    batch: &Tensor,
    labels: &Tensor,
) -> Result<(ParamGrads, StepDiagnostics)> {
    let mut graph = params.features_graph(batch)?;
    let logits = graph.logits(graph.z)?;
    let loss_id = graph.loss(logits, labels)?;
    let loss = graph.tape.value(loss_id).item()?;
    let grads = graph.param_grads(loss_id)?;
    let diagnostics = StepDiagnostics {
        clean_loss: loss,
        masked_loss: loss,
        gamma_ratio: if loss > 0.0 { Some(1.0) } else { None },
        loss_gap: 0.0,
        grad_sq_norm: grads.sq_norm(),
    };
    Ok((grads, diagnostics))
}
