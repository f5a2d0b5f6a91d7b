//! Mini-batch Adam with linear warmup, cosine decay, global-norm clipping
//! and early stopping on validation MSE.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::{mse_of, ModelConfig, Normalization, SurrogateModel};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const CLIP_NORM: f64 = 1.0;
/// Learning rate at the end of the cosine, as a fraction of the peak.
const LR_FLOOR: f64 = 0.02;

/// Arithmetic used for the training loop. Checkpoints are always `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub precision: Precision,
    /// Leading share of the records used for training; the rest validates.
    pub train_fraction: f64,
    /// Print one line per epoch to stderr.
    pub progress: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { precision: Precision::F32, train_fraction: 0.9, progress: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_seconds: f64,
    pub final_epoch: usize,
    /// Epoch whose weights were kept (lowest validation MSE).
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub n_params: usize,
}

pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<(SurrogateModel, TrainReport)> {
    train_with(dataset, config, &TrainOptions::default())
}

pub fn train_with(dataset: &Dataset, config: &ModelConfig, opts: &TrainOptions) -> Result<(SurrogateModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let family = dataset.family();
    let want = ModelConfig::for_family(family);
    if (config.input_len, config.output_len, config.linear_inputs) != (want.input_len, want.output_len, want.linear_inputs) {
        return Err(Error::InvalidParameter(format!(
            "config lengths ({}, {}, {}) do not fit family {family}",
            config.input_len, config.output_len, config.linear_inputs
        )));
    }
    let (train_set, mut val_set) = dataset.split(opts.train_fraction);
    if val_set.is_empty() {
        val_set = train_set.clone();
    }
    let norm = Normalization::fit(&train_set, config.linear_inputs)?;
    let shell = SurrogateModel::new(config.clone(), family, norm.clone())?;
    let (tx, ty) = shell.normalized_batch(&train_set)?;
    let (vx, vy) = shell.normalized_batch(&val_set)?;
    let (weights, report) = match opts.precision {
        Precision::F32 => fit::<f32>(&shell.net, config, &tx, &ty, &vx, &vy, opts.progress)?,
        Precision::F64 => fit::<f64>(&shell.net, config, &tx, &ty, &vx, &vy, opts.progress)?,
    };
    let model = SurrogateModel::from_parts(config.clone(), family, norm, weights)?;
    Ok((model, report))
}

/// Learning rate at optimizer step `step` of `total`.
fn schedule(peak: f64, step: usize, total: usize) -> f64 {
    let warmup = (total / 20).clamp(1, 500);
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let t = (step - warmup) as f64 / (total - warmup).max(1) as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * t.min(1.0)).cos());
    peak * (LR_FLOOR + (1.0 - LR_FLOOR) * cos)
}

fn cast<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

#[allow(clippy::too_many_arguments)]
fn fit<T: Real>(
    net: &Network,
    cfg: &ModelConfig,
    tx: &[f64],
    ty: &[f64],
    vx: &[f64],
    vy: &[f64],
    progress: bool,
) -> Result<(Vec<f64>, TrainReport)> {
    let start = Instant::now();
    let (lin, lout) = (cfg.input_len, cfg.output_len);
    let n = ty.len() / lout;
    let nv = vy.len() / lout;
    let (tx, ty, vx, vy) = (cast::<T>(tx), cast::<T>(ty), cast::<T>(vx), cast::<T>(vy));
    let mut p: Vec<T> = net.init::<T>(cfg.seed);
    let mut m = vec![0.0f64; p.len()];
    let mut v = vec![0.0f64; p.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..n).collect();
    let batches = n.div_ceil(cfg.batch_size);
    let total_steps = batches * cfg.max_epochs;
    let mut step = 0usize;

    let initial_val = mse_of(net, &p, &vx, &vy, nv);
    let mut best = (initial_val, 0usize, p.clone());
    let mut epochs = Vec::new();
    let mut stale = 0usize;
    let mut bx = Vec::with_capacity(cfg.batch_size * lin);
    let mut by = Vec::with_capacity(cfg.batch_size * lout);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(&tx[i * lin..(i + 1) * lin]);
                by.extend_from_slice(&ty[i * lout..(i + 1) * lout]);
            }
            let (sse, mut g) = batch_gradient(net, &p, &bx, &by, batch.len(), cfg.grad_chunks);
            if !sse.is_finite() {
                return Err(Error::Diverged { epoch, loss: sse });
            }
            sse_sum += sse;
            let denom = (batch.len() * lout) as f64;
            let mut norm2 = 0.0;
            for gi in g.iter_mut() {
                *gi /= denom;
                norm2 += *gi * *gi;
            }
            let clip = if norm2.sqrt() > CLIP_NORM { CLIP_NORM / norm2.sqrt() } else { 1.0 };
            let lr = schedule(cfg.learning_rate, step, total_steps);
            step += 1;
            let bc1 = 1.0 - BETA1.powi(step as i32);
            let bc2 = 1.0 - BETA2.powi(step as i32);
            for (((pi, gi), mi), vi) in p.iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi * clip;
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let upd = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
                *pi = T::lit(pi.as_f64() - upd);
            }
        }
        let train_mse = sse_sum / (n * lout) as f64;
        let val_mse = mse_of(net, &p, &vx, &vy, nv);
        if !val_mse.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_mse });
        }
        epochs.push(EpochStats { epoch, train_mse, val_mse });
        if progress {
            eprintln!("epoch {epoch:4}  train_mse {train_mse:.3e}  val_mse {val_mse:.3e}  {:.1}s", start.elapsed().as_secs_f64());
        }
        if val_mse < best.0 - cfg.min_delta {
            best = (val_mse, epoch, p.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let final_epoch = epochs.last().map_or(0, |e| e.epoch);
    let report = TrainReport {
        epochs,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_epoch,
        best_epoch: best.1,
        best_val_mse: best.0,
        n_params: net.n_params,
    };
    Ok((best.2.iter().map(|x| x.as_f64()).collect(), report))
}

/// Gradient of the batch SSE, split into `chunks` fixed slices whose
/// partial gradients are summed in slice order.
fn batch_gradient<T: Real>(net: &Network, p: &[T], x: &[T], y: &[T], rows: usize, chunks: usize) -> (f64, Vec<f64>) {
    let (lin, lout) = (x.len() / rows, y.len() / rows);
    let per = rows.div_ceil(chunks.min(rows));
    let parts: Vec<(T, Vec<T>)> = (0..rows.div_ceil(per))
        .into_par_iter()
        .map(|c| {
            let lo = c * per;
            let hi = (lo + per).min(rows);
            net.sse_and_grad(p, &x[lo * lin..hi * lin], &y[lo * lout..hi * lout], hi - lo)
        })
        .collect();
    let mut g = vec![0.0f64; p.len()];
    let mut sse = 0.0;
    for (s, part) in parts {
        sse += s.as_f64();
        for (a, b) in g.iter_mut().zip(part) {
            *a += b.as_f64();
        }
    }
    (sse, g)
}
