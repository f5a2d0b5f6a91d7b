//! Encoder-decoder attention surrogate: one token per input scalar, one
//! decoder step per output scalar, trained with teacher forcing on MSE.

mod checkpoint;
mod layers;
mod network;
mod train;

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::FeatureVector;
use crate::datagen::{DatasetRecord, Family};
use crate::error::{Error, Result};
use crate::scalar::Real;
use network::Network;

pub use network::{ModelConfig, TensorSpec};
pub use train::{train, train_with, EpochStats, Precision, TrainOptions, TrainReport};

/// Worst relative error between analytic and central finite-difference
/// gradients for each layer type, on small random instances.
pub fn layer_gradient_errors() -> Vec<(&'static str, f64)> {
    layers::fd::layer_errors()
}

/// Rows handled by one call when predicting or evaluating many inputs.
const EVAL_CHUNK: usize = 256;

/// Per-feature affine maps applied before the network and undone after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
}

fn column_stats(rows: &[&[f64]], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    // Constant columns keep unit scale so they map to exactly zero.
    let scale = var.iter().map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}

impl Normalization {
    pub fn identity(input_len: usize, output_len: usize) -> Self {
        Self {
            input_mean: vec![0.0; input_len],
            input_scale: vec![1.0; input_len],
            target_mean: vec![0.0; output_len],
            target_scale: vec![1.0; output_len],
        }
    }

    /// Statistics of the records; only the first `linear_inputs` input
    /// columns are standardized, angle columns pass through unchanged.
    pub fn fit(records: &[DatasetRecord], linear_inputs: usize) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::InvalidParameter("empty dataset".into()))?;
        let inputs: Vec<&[f64]> = records.iter().map(|r| &r.input[..linear_inputs.min(r.input.len())]).collect();
        let targets: Vec<&[f64]> = records.iter().map(|r| r.target.as_slice()).collect();
        let (mut input_mean, mut input_scale) = column_stats(&inputs, linear_inputs);
        input_mean.resize(first.input.len(), 0.0);
        input_scale.resize(first.input.len(), 1.0);
        let (target_mean, target_scale) = column_stats(&targets, first.target.len());
        Ok(Self { input_mean, input_scale, target_mean, target_scale })
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        affine(x, &self.input_mean, &self.input_scale)
    }

    pub fn denormalize_input(&self, z: &[f64]) -> Vec<f64> {
        inverse(z, &self.input_mean, &self.input_scale)
    }

    pub fn normalize_target(&self, y: &[f64]) -> Vec<f64> {
        affine(y, &self.target_mean, &self.target_scale)
    }

    pub fn denormalize_target(&self, z: &[f64]) -> Vec<f64> {
        inverse(z, &self.target_mean, &self.target_scale)
    }

    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let ok = self.input_mean.len() == cfg.input_len
            && self.input_scale.len() == cfg.input_len
            && self.target_mean.len() == cfg.output_len
            && self.target_scale.len() == cfg.output_len;
        let finite = [&self.input_mean, &self.input_scale, &self.target_mean, &self.target_scale]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        let positive = self.input_scale.iter().chain(&self.target_scale).all(|&s| s > 0.0);
        if ok && finite && positive {
            Ok(())
        } else {
            Err(Error::Format("normalization does not match the model config".into()))
        }
    }
}

fn affine(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

fn inverse(z: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    z.iter().zip(mean).zip(scale).map(|((v, m), s)| v * s + m).collect()
}

impl ModelConfig {
    /// Default architecture with the sequence lengths of `family`.
    pub fn for_family(family: Family) -> Self {
        Self { linear_inputs: family.state_prefix_len(), ..Self::new(family.input_len(), family.output_len()) }
    }
}

/// A trained (or freshly initialised) surrogate for one circuit family.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    config: ModelConfig,
    family: Family,
    normalization: Normalization,
    weights: Vec<f64>,
    net: Network,
}

impl SurrogateModel {
    /// Random initial weights drawn from `config.seed`.
    pub fn new(config: ModelConfig, family: Family, normalization: Normalization) -> Result<Self> {
        let net = Network::new(&config)?;
        let weights = net.init::<f64>(config.seed);
        Self::from_parts(config, family, normalization, weights)
    }

    pub(crate) fn from_parts(config: ModelConfig, family: Family, normalization: Normalization, weights: Vec<f64>) -> Result<Self> {
        let net = Network::new(&config)?;
        let want = ModelConfig::for_family(family);
        if (config.input_len, config.output_len, config.linear_inputs) != (want.input_len, want.output_len, want.linear_inputs) {
            return Err(Error::InvalidParameter(format!(
                "family {family} needs input_len {}, output_len {} and linear_inputs {}",
                want.input_len, want.output_len, want.linear_inputs
            )));
        }
        normalization.check(&config)?;
        if weights.len() != net.n_params {
            return Err(Error::DimensionMismatch { expected: net.n_params, found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights".into()));
        }
        Ok(Self { config, family, normalization, weights, net })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> impl Iterator<Item = (&TensorSpec, &[f64])> {
        self.net.specs.iter().map(move |s| (s, &self.weights[s.offset..s.offset + s.len()]))
    }

    /// Model-space input: angles wrapped into `[0, 2π)`, then normalized.
    fn prepare_input(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.config.input_len {
            return Err(Error::DimensionMismatch { expected: self.config.input_len, found: input.len() });
        }
        let prefix = self.family.state_prefix_len();
        let wrapped: Vec<f64> = input.iter().enumerate().map(|(i, &v)| if i < prefix { v } else { v.rem_euclid(TAU) }).collect();
        Ok(self.normalization.normalize_input(&wrapped))
    }

    /// Raw network output in target units. With `teacher` the decoder sees
    /// those values as its previous outputs; without it, its own.
    pub fn forward(&self, input: &[f64], teacher: Option<&[f64]>) -> Result<Vec<f64>> {
        let x = self.prepare_input(input)?;
        let z = match teacher {
            Some(t) => {
                if t.len() != self.config.output_len {
                    return Err(Error::DimensionMismatch { expected: self.config.output_len, found: t.len() });
                }
                let tn = self.normalization.normalize_target(t);
                self.net.forward(&self.weights, &x, &tn, 1)
            }
            None => self.net.generate(&self.weights, &x, 1),
        };
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surrogate activations".into()));
        }
        Ok(self.normalization.denormalize_target(&z))
    }

    /// Autoregressive prediction wrapped as the family's feature vector.
    pub fn predict(&self, input: &[f64]) -> Result<FeatureVector<f64>> {
        FeatureVector::new(self.family.target_kind(), self.forward(input, None)?)
    }

    /// Autoregressive predictions for many inputs, batched.
    pub fn predict_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<FeatureVector<f64>>> {
        let prepared = inputs.iter().map(|x| self.prepare_input(x)).collect::<Result<Vec<_>>>()?;
        let lout = self.config.output_len;
        let chunks: Vec<Vec<f64>> = prepared
            .par_chunks(EVAL_CHUNK)
            .map(|rows| self.net.generate(&self.weights, &rows.concat(), rows.len()))
            .collect();
        let mut out = Vec::with_capacity(inputs.len());
        for z in chunks {
            for row in z.chunks(lout) {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("surrogate activations".into()));
                }
                out.push(FeatureVector::new(self.family.target_kind(), self.normalization.denormalize_target(row))?);
            }
        }
        Ok(out)
    }

    /// Teacher-forced MSE in normalized target units.
    pub fn mse(&self, records: &[DatasetRecord]) -> Result<f64> {
        let (x, y) = self.normalized_batch(records)?;
        Ok(mse_of(&self.net, &self.weights, &x, &y, records.len()))
    }

    fn normalized_batch(&self, records: &[DatasetRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut x = Vec::with_capacity(records.len() * self.config.input_len);
        let mut y = Vec::with_capacity(records.len() * self.config.output_len);
        for r in records {
            if r.target.len() != self.config.output_len {
                return Err(Error::DimensionMismatch { expected: self.config.output_len, found: r.target.len() });
            }
            x.extend(self.prepare_input(&r.input)?);
            y.extend(self.normalization.normalize_target(&r.target));
        }
        Ok((x, y))
    }

    /// Largest relative gap between the analytic MSE gradient and central
    /// differences, over a random 1% of the parameters (at least one).
    /// The gap is `|a − n| / max(|a|, |n|, 1e-5)`; the floor keeps exactly-zero
    /// gradients (key biases under softmax shift invariance) from reporting
    /// finite-difference rounding as error.
    pub fn grad_check(&self, input: &[f64], target: &[f64], epsilon: f64, seed: u64) -> Result<f64> {
        use rand::seq::index::sample;
        use rand::SeedableRng;

        let rec = DatasetRecord { family: self.family, seed: 0, input: input.to_vec(), target: target.to_vec() };
        let (x, y) = self.normalized_batch(std::slice::from_ref(&rec))?;
        let scale = 1.0 / y.len() as f64;
        let (_, g) = self.net.sse_and_grad(&self.weights, &x, &y, 1);
        let loss = |w: &[f64]| {
            let out = self.net.forward(w, &x, &y, 1);
            out.iter().zip(&y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() * scale
        };
        let n = self.net.n_params;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let picks = sample(&mut rng, n, (n / 100).max(1));
        let mut w = self.weights.clone();
        let mut worst = 0.0f64;
        for i in picks.iter() {
            let w0 = w[i];
            w[i] = w0 + epsilon;
            let up = loss(&w);
            w[i] = w0 - epsilon;
            let down = loss(&w);
            w[i] = w0;
            let numeric = (up - down) / (2.0 * epsilon);
            let analytic = g[i] * scale;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        checkpoint::write(self, &mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        checkpoint::read(&mut std::io::BufReader::new(f))
    }

    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        checkpoint::write(self, w)
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<Self> {
        checkpoint::read(r)
    }
}

/// Teacher-forced mean squared error over `n` rows, evaluated in chunks.
fn mse_of<T: Real>(net: &Network, p: &[T], x: &[T], y: &[T], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (lin, lout) = (x.len() / n, y.len() / n);
    let sums: Vec<f64> = (0..n.div_ceil(EVAL_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * EVAL_CHUNK;
            let hi = (lo + EVAL_CHUNK).min(n);
            let yt = &y[lo * lout..hi * lout];
            let out = net.forward(p, &x[lo * lin..hi * lin], yt, hi - lo);
            out.iter().zip(yt).map(|(&o, &t)| ((o - t) * (o - t)).as_f64()).sum()
        })
        .collect();
    sums.iter().sum::<f64>() / (n * lout) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, Circuit, DatasetConfig};

    fn tiny_cfg(family: Family) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            ..ModelConfig::for_family(family)
        }
    }

    #[test]
    fn normalization_round_trips() {
        let fam = Family::new(Circuit::OneQ, false);
        let ds = generate_dataset(&DatasetConfig::new(fam, 50, 3)).unwrap();
        let norm = Normalization::fit(&ds.records, 2).unwrap();
        for r in &ds.records {
            let back = norm.denormalize_input(&norm.normalize_input(&r.input));
            let back_t = norm.denormalize_target(&norm.normalize_target(&r.target));
            for (a, b) in back.iter().zip(&r.input).chain(back_t.iter().zip(&r.target)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_shapes_and_length_errors() {
        let fam = Family::new(Circuit::OneQ, false);
        let cfg = tiny_cfg(fam);
        let m = SurrogateModel::new(cfg, fam, Normalization::identity(3, 4)).unwrap();
        assert_eq!(m.forward(&[0.1, 0.2, 0.3], None).unwrap().len(), 4);
        assert!(m.forward(&[0.1, 0.2], None).is_err());
        assert!(m.forward(&[0.1, 0.2, 0.3], Some(&[0.0; 3])).is_err());
    }

    #[test]
    fn teacher_forcing_on_greedy_output_reproduces_it() {
        let fam = Family::new(Circuit::TwoQSpecial, true);
        let m = SurrogateModel::new(tiny_cfg(fam), fam, Normalization::identity(12, 16)).unwrap();
        let x: Vec<f64> = (0..12).map(|i| 0.4 * i as f64).collect();
        let greedy = m.forward(&x, None).unwrap();
        assert_eq!(m.forward(&x, Some(&greedy)).unwrap(), greedy);
    }

    #[test]
    fn batched_and_single_prediction_agree() {
        let fam = Family::new(Circuit::OneQ, true);
        let m = SurrogateModel::new(tiny_cfg(fam), fam, Normalization::identity(3, 4)).unwrap();
        let inputs: Vec<Vec<f64>> = (0..5).map(|i| vec![0.3 * i as f64, 1.0, 2.0 + i as f64]).collect();
        let batch = m.predict_batch(&inputs).unwrap();
        for (x, b) in inputs.iter().zip(&batch) {
            let single = m.predict(x).unwrap();
            for (u, v) in single.values.iter().zip(&b.values) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn angles_are_wrapped_before_the_network() {
        let fam = Family::new(Circuit::OneQ, false);
        let m = SurrogateModel::new(tiny_cfg(fam), fam, Normalization::identity(3, 4)).unwrap();
        let a = m.forward(&[0.5, 1.0, 2.0], None).unwrap();
        let b = m.forward(&[0.5 + TAU, 1.0 - TAU, 2.0 + 2.0 * TAU], None).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn grad_check_on_fresh_model() {
        let fam = Family::new(Circuit::TwoQSpecial, true);
        let m = SurrogateModel::new(tiny_cfg(fam), fam, Normalization::identity(12, 16)).unwrap();
        let x: Vec<f64> = (0..12).map(|i| 0.5 * i as f64).collect();
        let y: Vec<f64> = (0..16).map(|i| 0.1 * i as f64 - 0.5).collect();
        let err = m.grad_check(&x, &y, 1e-5, 1).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn zero_loss_sample_has_zero_mse() {
        let fam = Family::new(Circuit::OneQ, false);
        let m = SurrogateModel::new(tiny_cfg(fam), fam, Normalization::identity(3, 4)).unwrap();
        let x = [0.2, 0.4, 0.6];
        let y = m.forward(&x, None).unwrap();
        let rec = DatasetRecord { family: fam, seed: 0, input: x.to_vec(), target: y };
        assert!(m.mse(&[rec]).unwrap() < 1e-24);
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let fam = Family::new(Circuit::OneQ, false);
        let other = Family::new(Circuit::TwoQSpecial, false);
        assert!(SurrogateModel::new(tiny_cfg(fam), other, Normalization::identity(3, 4)).is_err());
    }
}
