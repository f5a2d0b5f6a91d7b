//! The encoder-decoder network: parameter layout, batched forward pass with
//! teacher forcing, autoregressive decoding, and the MSE gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Attention, DecCache, DecoderLayer, EncCache, EncoderLayer, FeedForward, LayerNorm, LnCache, Linear};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Architecture and optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ff: usize,
    pub input_len: usize,
    pub output_len: usize,
    /// Leading inputs embedded as `x·e`; the remaining inputs are angles,
    /// embedded as `cos(x/2)·e + sin(x/2)·e'`. Amplitudes are polynomials in
    /// these half-angle terms, so the targets are smooth in the embedding.
    #[serde(default)]
    pub linear_inputs: usize,
    /// Peak learning rate of the warmup/cosine schedule.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs without a validation gain of at least `min_delta` before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
    /// Batches are cut into this many fixed slices for data-parallel
    /// gradients; the result does not depend on the thread count.
    #[serde(default = "default_chunks")]
    pub grad_chunks: usize,
}

fn default_patience() -> usize {
    20
}

fn default_min_delta() -> f64 {
    1e-6
}

fn default_chunks() -> usize {
    4
}

impl ModelConfig {
    pub fn new(input_len: usize, output_len: usize) -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            d_ff: 128,
            input_len,
            output_len,
            linear_inputs: 0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            seed: 0,
            patience: default_patience(),
            min_delta: default_min_delta(),
            grad_chunks: default_chunks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.input_len == 0 || self.output_len == 0 {
            return bad("sequence lengths must be at least 1");
        }
        if self.linear_inputs > self.input_len {
            return bad("linear_inputs exceeds input_len");
        }
        if self.d_ff == 0 || self.batch_size == 0 || self.grad_chunks == 0 {
            return bad("d_ff, batch_size and grad_chunks must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Name, shape and flat offset of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
struct Layout {
    specs: Vec<TensorSpec>,
    total: usize,
}

impl Layout {
    fn add(&mut self, name: String, shape: &[usize]) -> usize {
        let offset = self.total;
        let spec = TensorSpec { name, shape: shape.to_vec(), offset };
        self.total += spec.len();
        self.specs.push(spec);
        offset
    }

    fn linear(&mut self, name: &str, n_in: usize, n_out: usize) -> Linear {
        let w = self.add(format!("{name}.weight"), &[n_in, n_out]);
        let b = self.add(format!("{name}.bias"), &[n_out]);
        Linear { w, b, n_in, n_out }
    }

    fn ln(&mut self, name: &str, d: usize) -> LayerNorm {
        let gamma = self.add(format!("{name}.gamma"), &[d]);
        let beta = self.add(format!("{name}.beta"), &[d]);
        LayerNorm { gamma, beta, d }
    }

    fn attn(&mut self, name: &str, d: usize, heads: usize, causal: bool) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
            heads,
            d,
            causal,
        }
    }

    fn ff(&mut self, name: &str, d: usize, f: usize) -> FeedForward {
        FeedForward { l1: self.linear(&format!("{name}.fc1"), d, f), l2: self.linear(&format!("{name}.fc2"), f, d) }
    }
}

/// Offsets of every tensor, derived from a [`ModelConfig`].
#[derive(Clone, Debug)]
pub(crate) struct Network {
    d: usize,
    lin: usize,
    lout: usize,
    linear: usize,
    in_scale: usize,
    in_phase: usize,
    in_pos: usize,
    out_scale: usize,
    out_pos: usize,
    start: usize,
    enc: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    dec: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    head: Linear,
    pub specs: Vec<TensorSpec>,
    pub n_params: usize,
}

struct Tape<T> {
    enc_in: Vec<Vec<T>>,
    enc: Vec<EncCache<T>>,
    enc_norm: LnCache<T>,
    mem: Vec<T>,
    dec: Vec<DecCache<T>>,
    dec_norm: LnCache<T>,
    dec_final: Vec<T>,
}

impl Network {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let mut l = Layout::default();
        let in_scale = l.add("embed.input.scale".into(), &[cfg.input_len, d]);
        let in_phase = l.add("embed.input.phase".into(), &[cfg.input_len - cfg.linear_inputs, d]);
        let in_pos = l.add("embed.input.position".into(), &[cfg.input_len, d]);
        let out_scale = l.add("embed.output.scale".into(), &[cfg.output_len - 1, d]);
        let out_pos = l.add("embed.output.position".into(), &[cfg.output_len, d]);
        let start = l.add("embed.start".into(), &[d]);
        let enc = (0..cfg.n_encoder_layers)
            .map(|i| {
                let n = format!("encoder.{i}");
                EncoderLayer {
                    ln1: l.ln(&format!("{n}.ln1"), d),
                    attn: l.attn(&format!("{n}.self_attn"), d, cfg.n_heads, false),
                    ln2: l.ln(&format!("{n}.ln2"), d),
                    ff: l.ff(&format!("{n}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let enc_norm = l.ln("encoder.norm", d);
        let dec = (0..cfg.n_decoder_layers)
            .map(|i| {
                let n = format!("decoder.{i}");
                DecoderLayer {
                    ln1: l.ln(&format!("{n}.ln1"), d),
                    self_attn: l.attn(&format!("{n}.self_attn"), d, cfg.n_heads, true),
                    ln2: l.ln(&format!("{n}.ln2"), d),
                    cross: l.attn(&format!("{n}.cross_attn"), d, cfg.n_heads, false),
                    ln3: l.ln(&format!("{n}.ln3"), d),
                    ff: l.ff(&format!("{n}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let dec_norm = l.ln("decoder.norm", d);
        let head = l.linear("head", d, 1);
        Ok(Self {
            d,
            lin: cfg.input_len,
            lout: cfg.output_len,
            linear: cfg.linear_inputs,
            in_scale,
            in_phase,
            in_pos,
            out_scale,
            out_pos,
            start,
            enc,
            enc_norm,
            dec,
            dec_norm,
            head,
            n_params: l.total,
            specs: l.specs,
        })
    }

    /// Xavier-uniform weights, zero biases, unit norm gains, small embeddings.
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![T::zero(); self.n_params];
        for spec in &self.specs {
            let slot = &mut p[spec.offset..spec.offset + spec.len()];
            let name = spec.name.as_str();
            let bound = if name.ends_with(".weight") {
                (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt()
            } else if name.ends_with(".gamma") {
                slot.iter_mut().for_each(|v| *v = T::one());
                continue;
            } else if name.ends_with("scale") || name.ends_with("phase") {
                0.8
            } else if name.ends_with("position") || name == "embed.start" {
                0.2
            } else {
                continue;
            };
            slot.iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        }
        p
    }

    fn embed_inputs<T: Real>(&self, p: &[T], x: &[T], batch: usize) -> Vec<T> {
        let d = self.d;
        let mut e = vec![T::zero(); batch * self.lin * d];
        for b in 0..batch {
            for i in 0..self.lin {
                let xv = x[b * self.lin + i];
                let row = &mut e[(b * self.lin + i) * d..(b * self.lin + i + 1) * d];
                if i < self.linear {
                    for j in 0..d {
                        row[j] = xv * p[self.in_scale + i * d + j] + p[self.in_pos + i * d + j];
                    }
                } else {
                    let (s, c) = (xv * T::lit(0.5)).sin_cos();
                    let ph = self.in_phase + (i - self.linear) * d;
                    for j in 0..d {
                        row[j] = c * p[self.in_scale + i * d + j] + s * p[ph + j] + p[self.in_pos + i * d + j];
                    }
                }
            }
        }
        e
    }

    /// Decoder input: the start token, then each previous target scalar.
    fn embed_outputs<T: Real>(&self, p: &[T], prev: &[T], batch: usize) -> Vec<T> {
        let d = self.d;
        let mut e = vec![T::zero(); batch * self.lout * d];
        for b in 0..batch {
            for t in 0..self.lout {
                let row = &mut e[(b * self.lout + t) * d..(b * self.lout + t + 1) * d];
                for j in 0..d {
                    let pos = p[self.out_pos + t * d + j];
                    row[j] = if t == 0 {
                        p[self.start + j] + pos
                    } else {
                        prev[b * self.lout + t - 1] * p[self.out_scale + (t - 1) * d + j] + pos
                    };
                }
            }
        }
        e
    }

    fn encode<T: Real>(&self, p: &[T], x: &[T], batch: usize) -> (Vec<Vec<T>>, Vec<EncCache<T>>, LnCache<T>, Vec<T>) {
        let mut h = self.embed_inputs(p, x, batch);
        let mut inputs = Vec::with_capacity(self.enc.len());
        let mut caches = Vec::with_capacity(self.enc.len());
        for layer in &self.enc {
            let (next, c) = layer.forward(p, &h, batch);
            inputs.push(h);
            caches.push(c);
            h = next;
        }
        let (mem, norm) = self.enc_norm.forward(p, &h);
        (inputs, caches, norm, mem)
    }

    fn decode<T: Real>(&self, p: &[T], prev: &[T], mem: &[T], batch: usize) -> (Vec<DecCache<T>>, LnCache<T>, Vec<T>, Vec<T>) {
        let mut h = self.embed_outputs(p, prev, batch);
        let mut caches = Vec::with_capacity(self.dec.len());
        for layer in &self.dec {
            let (next, c) = layer.forward(p, &h, mem, batch);
            caches.push(c);
            h = next;
        }
        let (fin, norm) = self.dec_norm.forward(p, &h);
        let out = self.head.forward(p, &fin, batch * self.lout);
        (caches, norm, fin, out)
    }

    fn forward_tape<T: Real>(&self, p: &[T], x: &[T], prev: &[T], batch: usize) -> (Vec<T>, Tape<T>) {
        let (enc_in, enc, enc_norm, mem) = self.encode(p, x, batch);
        let (dec, dec_norm, dec_final, out) = self.decode(p, prev, &mem, batch);
        (out, Tape { enc_in, enc, enc_norm, mem, dec, dec_norm, dec_final })
    }

    /// Teacher-forced outputs, `batch × output_len`.
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], prev: &[T], batch: usize) -> Vec<T> {
        self.forward_tape(p, x, prev, batch).0
    }

    /// Greedy decoding: step `t` feeds the outputs of steps `< t` back in.
    /// Causal masking makes later (still zero) slots invisible, so each step
    /// reproduces the teacher-forced computation on the generated prefix.
    pub fn generate<T: Real>(&self, p: &[T], x: &[T], batch: usize) -> Vec<T> {
        let (_, _, _, mem) = self.encode(p, x, batch);
        let mut y = vec![T::zero(); batch * self.lout];
        for t in 0..self.lout {
            let (_, _, _, out) = self.decode(p, &y, &mem, batch);
            for b in 0..batch {
                y[b * self.lout + t] = out[b * self.lout + t];
            }
        }
        y
    }

    /// Sum of squared errors under teacher forcing, and its gradient.
    pub fn sse_and_grad<T: Real>(&self, p: &[T], x: &[T], y: &[T], batch: usize) -> (T, Vec<T>) {
        let (out, tape) = self.forward_tape(p, x, y, batch);
        let mut sse = T::zero();
        let two = T::lit(2.0);
        let dout: Vec<T> = out
            .iter()
            .zip(y)
            .map(|(&o, &t)| {
                sse = sse + (o - t) * (o - t);
                two * (o - t)
            })
            .collect();
        let mut g = vec![T::zero(); self.n_params];
        self.backward(p, &mut g, &tape, x, y, &dout, batch);
        (sse, g)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward<T: Real>(&self, p: &[T], g: &mut [T], tape: &Tape<T>, x: &[T], prev: &[T], dout: &[T], batch: usize) {
        let d = self.d;
        let dfin = self.head.backward(p, g, &tape.dec_final, dout, batch * self.lout);
        let mut dh = self.dec_norm.backward(p, g, &tape.dec_norm, &dfin);
        let mut dmem = vec![T::zero(); tape.mem.len()];
        for (layer, cache) in self.dec.iter().zip(&tape.dec).rev() {
            let (dx, dm) = layer.backward(p, g, cache, &tape.mem, &dh, batch);
            for (a, b) in dmem.iter_mut().zip(dm) {
                *a = *a + b;
            }
            dh = dx;
        }
        for b in 0..batch {
            for t in 0..self.lout {
                let row = &dh[(b * self.lout + t) * d..(b * self.lout + t + 1) * d];
                for j in 0..d {
                    g[self.out_pos + t * d + j] = g[self.out_pos + t * d + j] + row[j];
                    if t == 0 {
                        g[self.start + j] = g[self.start + j] + row[j];
                    } else {
                        let k = self.out_scale + (t - 1) * d + j;
                        g[k] = g[k] + row[j] * prev[b * self.lout + t - 1];
                    }
                }
            }
        }
        let mut dh = self.enc_norm.backward(p, g, &tape.enc_norm, &dmem);
        for (layer, cache) in self.enc.iter().zip(&tape.enc).rev() {
            dh = layer.backward(p, g, cache, &dh, batch);
        }
        debug_assert_eq!(tape.enc_in.len(), self.enc.len());
        for b in 0..batch {
            for i in 0..self.lin {
                let xv = x[b * self.lin + i];
                let row = &dh[(b * self.lin + i) * d..(b * self.lin + i + 1) * d];
                let half = T::lit(0.5);
                let (s, c) = if i < self.linear { (T::zero(), xv) } else { (xv * half).sin_cos() };
                let ph = self.in_phase + i.saturating_sub(self.linear) * d;
                for j in 0..d {
                    g[self.in_pos + i * d + j] = g[self.in_pos + i * d + j] + row[j];
                    g[self.in_scale + i * d + j] = g[self.in_scale + i * d + j] + row[j] * c;
                    if i >= self.linear {
                        g[ph + j] = g[ph + j] + row[j] * s;
                    }
                }
            }
        }
    }

    /// Every softmax row produced by one teacher-forced pass.
    #[cfg(test)]
    pub fn attention_rows<T: Real>(&self, p: &[T], x: &[T], prev: &[T], batch: usize) -> Vec<Vec<T>> {
        let (_, tape) = self.forward_tape(p, x, prev, batch);
        let mut rows = Vec::new();
        let mut push = |probs: &[T], lk: usize| rows.extend(probs.chunks(lk).map(<[T]>::to_vec));
        for c in &tape.enc {
            push(EncoderLayer::attention_probs(c), self.lin);
        }
        for c in &tape.dec {
            let (sa, ca) = DecoderLayer::attention_probs(c);
            push(sa, self.lout);
            push(ca, self.lin);
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::layers::fd::rel_err;

    fn tiny() -> ModelConfig {
        ModelConfig { d_model: 8, n_heads: 2, d_ff: 12, n_encoder_layers: 1, n_decoder_layers: 2, linear_inputs: 1, ..ModelConfig::new(3, 4) }
    }

    fn batch(seed: u64, n: usize, cfg: &ModelConfig) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n * cfg.input_len).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y = (0..n * cfg.output_len).map(|_| rng.gen_range(-1.5..1.5)).collect();
        (x, y)
    }

    #[test]
    fn layout_names_are_unique_and_cover_the_buffer() {
        let net = Network::new(&ModelConfig::new(12, 16)).unwrap();
        let mut names: Vec<&str> = net.specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), net.specs.len());
        assert_eq!(net.specs.iter().map(|s| s.len()).sum::<usize>(), net.n_params);
    }

    #[test]
    fn output_shape_matches_config() {
        let cfg = tiny();
        let net = Network::new(&cfg).unwrap();
        let p = net.init::<f64>(1);
        let (x, y) = batch(2, 5, &cfg);
        assert_eq!(net.forward(&p, &x, &y, 5).len(), 5 * 4);
        assert_eq!(net.generate(&p, &x, 5).len(), 5 * 4);
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let cfg = tiny();
        let net = Network::new(&cfg).unwrap();
        let p = net.init::<f64>(7);
        let (x, y) = batch(3, 3, &cfg);
        let (_, g) = net.sse_and_grad(&p, &x, &y, 3);
        let sse = |p: &[f64]| net.forward(p, &x, &y, 3).iter().zip(&y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..net.n_params {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[i] += eps;
            pm[i] -= eps;
            let num = (sse(&pp) - sse(&pm)) / (2.0 * eps);
            worst = worst.max(rel_err(g[i], num));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn teacher_forcing_on_own_outputs_equals_generation() {
        let cfg = tiny();
        let net = Network::new(&cfg).unwrap();
        let p = net.init::<f64>(4);
        let (x, _) = batch(5, 6, &cfg);
        let greedy = net.generate(&p, &x, 6);
        assert_eq!(net.forward(&p, &x, &greedy, 6), greedy);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = tiny();
        let net = Network::new(&cfg).unwrap();
        let p = net.init::<f64>(8);
        let (x, y) = batch(9, 4, &cfg);
        for row in net.attention_rows(&p, &x, &y, 4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Network::new(&ModelConfig { n_heads: 3, ..ModelConfig::new(3, 4) }).is_err());
        assert!(Network::new(&ModelConfig::new(0, 4)).is_err());
    }
}
