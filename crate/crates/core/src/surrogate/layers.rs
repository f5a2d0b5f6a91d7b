//! Building blocks of the attention network with hand-written backward passes.
//!
//! Activations are row-major `rows × width` slices. Parameters live in one
//! flat slice; every layer stores the offsets of its tensors. Backward passes
//! accumulate into a gradient slice of the same layout and return the input
//! gradient.

use crate::scalar::Real;

/// Safe strided GEMM over slices: `C ← A·B + beta·C` where
/// `A[i][l] = a[a_off + i·a_rs + l·a_cs]` and so on.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Strided {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Strided {
    pub fn rows(off: usize, width: usize) -> Self {
        Self { off, rs: width, cs: 1 }
    }

    pub fn cols(off: usize, width: usize) -> Self {
        Self { off, rs: 1, cs: width }
    }

    fn last(&self, r: usize, c: usize) -> usize {
        self.off + (r.max(1) - 1) * self.rs + (c.max(1) - 1) * self.cs
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    av: Strided,
    b: &[T],
    bv: Strided,
    beta: T,
    c: &mut [T],
    cv: Strided,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(av.last(m, k) < a.len().max(1) || k == 0, "A out of bounds");
    assert!(bv.last(k, n) < b.len().max(1) || k == 0, "B out of bounds");
    assert!(cv.last(m, n) < c.len(), "C out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches, and
    // `c` is a distinct mutable borrow so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(av.off.min(a.len())),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off.min(b.len())),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// `out (m×n) = a (m×k) · b (k×n)`, or with either operand transposed in storage.
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    matmul_into(&mut out, T::zero(), a, b, m, k, n, ta, tb);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_into<T: Real>(out: &mut [T], beta: T, a: &[T], b: &[T], m: usize, k: usize, n: usize, ta: bool, tb: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let av = if ta { Strided::cols(0, m) } else { Strided::rows(0, k) };
    let bv = if tb { Strided::cols(0, k) } else { Strided::rows(0, n) };
    gemm(m, k, n, a, av, b, bv, beta, out, Strided::rows(0, n));
}

fn add_assign<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

pub(crate) fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// Affine map `y = x·W + b` with `W` stored `n_in × n_out`.
#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], rows: usize) -> Vec<T> {
        let bias = &p[self.b..self.b + self.n_out];
        let mut y: Vec<T> = Vec::with_capacity(rows * self.n_out);
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        matmul_into(&mut y, T::one(), x, w, rows, self.n_in, self.n_out, false, false);
        y
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], x: &[T], dy: &[T], rows: usize) -> Vec<T> {
        let (ni, no) = (self.n_in, self.n_out);
        // dW += xᵀ dy
        gemm(ni, rows, no, x, Strided::cols(0, ni), dy, Strided::rows(0, no), T::one(), &mut g[self.w..self.w + ni * no], Strided::rows(0, no));
        let gb = &mut g[self.b..self.b + no];
        for r in 0..rows {
            add_assign(gb, &dy[r * no..(r + 1) * no]);
        }
        // dx = dy Wᵀ
        matmul(dy, &p[self.w..self.w + ni * no], rows, no, ni, false, true)
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub(crate) struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub d: usize,
}

pub(crate) struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

impl LayerNorm {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> (Vec<T>, LnCache<T>) {
        let d = self.d;
        let rows = x.len() / d;
        let gamma = &p[self.gamma..self.gamma + d];
        let beta = &p[self.beta..self.beta + d];
        let inv_d = T::lit(1.0 / d as f64);
        let eps = T::lit(LN_EPS);
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let s = (var + eps).sqrt().recip();
            rstd.push(s);
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[r * d + j] = h;
                y[r * d + j] = gamma[j] * h + beta[j];
            }
        }
        (y, LnCache { xhat, rstd })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], cache: &LnCache<T>, dy: &[T]) -> Vec<T> {
        let d = self.d;
        let rows = dy.len() / d;
        let inv_d = T::lit(1.0 / d as f64);
        let mut dx = vec![T::zero(); dy.len()];
        let mut dxhat = vec![T::zero(); d];
        for r in 0..rows {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dyr = &dy[r * d..(r + 1) * d];
            let mut mean_dxhat = T::zero();
            let mut mean_dxhat_xhat = T::zero();
            for j in 0..d {
                g[self.gamma + j] = g[self.gamma + j] + dyr[j] * xh[j];
                g[self.beta + j] = g[self.beta + j] + dyr[j];
                dxhat[j] = dyr[j] * p[self.gamma + j];
                mean_dxhat = mean_dxhat + dxhat[j];
                mean_dxhat_xhat = mean_dxhat_xhat + dxhat[j] * xh[j];
            }
            mean_dxhat = mean_dxhat * inv_d;
            mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
            let s = cache.rstd[r];
            for j in 0..d {
                dx[r * d + j] = s * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

/// tanh approximation of GELU.
pub(crate) fn gelu<T: Real>(x: &[T]) -> Vec<T> {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    x.iter()
        .map(|&v| half * v * (T::one() + (c * (v + k * v * v * v)).tanh()))
        .collect()
}

pub(crate) fn gelu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    let three_k = T::lit(3.0 * 0.044715);
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let t = (c * (v + k * v * v * v)).tanh();
            let dudx = c * (T::one() + three_k * v * v);
            g * (half * (T::one() + t) + half * v * (T::one() - t * t) * dudx)
        })
        .collect()
}

/// Multi-head scaled dot-product attention. Queries come from `xq`
/// (`batch·lq` rows), keys and values from `xkv` (`batch·lk` rows).
#[derive(Clone, Debug)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub d: usize,
    pub causal: bool,
}

pub(crate) struct AttnCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Softmax rows, laid out `[batch][head][lq][lk]`.
    pub probs: Vec<T>,
    concat: Vec<T>,
}

impl Attention {
    fn dh(&self) -> usize {
        self.d / self.heads
    }

    pub fn forward<T: Real>(&self, p: &[T], xq: &[T], xkv: &[T], batch: usize) -> (Vec<T>, AttnCache<T>) {
        let d = self.d;
        let (lq, lk) = (xq.len() / d / batch, xkv.len() / d / batch);
        let dh = self.dh();
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let q = self.q.forward(p, xq, batch * lq);
        let k = self.k.forward(p, xkv, batch * lk);
        let v = self.v.forward(p, xkv, batch * lk);
        let mut probs = vec![T::zero(); batch * self.heads * lq * lk];
        let mut concat = vec![T::zero(); batch * lq * d];
        let mut scores = vec![T::zero(); lq * lk];
        for b in 0..batch {
            for h in 0..self.heads {
                let qv = Strided::rows(b * lq * d + h * dh, d);
                let kv = Strided::cols(b * lk * d + h * dh, d);
                gemm(lq, dh, lk, &q, qv, &k, kv, T::zero(), &mut scores, Strided::rows(0, lk));
                let base = ((b * self.heads) + h) * lq * lk;
                for i in 0..lq {
                    let visible = if self.causal { (i + 1).min(lk) } else { lk };
                    let row = &scores[i * lk..i * lk + visible];
                    let max = row.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
                    let mut sum = T::zero();
                    for j in 0..visible {
                        let e = ((row[j] - max) * scale).exp();
                        probs[base + i * lk + j] = e;
                        sum = sum + e;
                    }
                    for j in 0..visible {
                        probs[base + i * lk + j] = probs[base + i * lk + j] / sum;
                    }
                }
                gemm(
                    lq,
                    lk,
                    dh,
                    &probs,
                    Strided::rows(base, lk),
                    &v,
                    Strided::rows(b * lk * d + h * dh, d),
                    T::zero(),
                    &mut concat,
                    Strided::rows(b * lq * d + h * dh, d),
                );
            }
        }
        let out = self.o.forward(p, &concat, batch * lq);
        (out, AttnCache { q, k, v, probs, concat })
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        cache: &AttnCache<T>,
        xq: &[T],
        xkv: &[T],
        dout: &[T],
        batch: usize,
    ) -> (Vec<T>, Vec<T>) {
        let d = self.d;
        let (lq, lk) = (xq.len() / d / batch, xkv.len() / d / batch);
        let dh = self.dh();
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let dconcat = self.o.backward(p, g, &cache.concat, dout, batch * lq);
        let mut dq = vec![T::zero(); batch * lq * d];
        let mut dk = vec![T::zero(); batch * lk * d];
        let mut dv = vec![T::zero(); batch * lk * d];
        let mut dprobs = vec![T::zero(); lq * lk];
        for b in 0..batch {
            for h in 0..self.heads {
                let base = ((b * self.heads) + h) * lq * lk;
                let o_view = Strided::rows(b * lq * d + h * dh, d);
                let kv_rows = Strided::rows(b * lk * d + h * dh, d);
                // dP = dO Vᵀ
                gemm(lq, dh, lk, &dconcat, o_view, &cache.v, Strided::cols(b * lk * d + h * dh, d), T::zero(), &mut dprobs, Strided::rows(0, lk));
                // dV = Pᵀ dO
                gemm(lk, lq, dh, &cache.probs, Strided::cols(base, lk), &dconcat, o_view, T::one(), &mut dv, kv_rows);
                // dS = P ⊙ (dP − Σ_j dP·P), folded with the score scale
                for i in 0..lq {
                    let pr = &cache.probs[base + i * lk..base + (i + 1) * lk];
                    let dr = &mut dprobs[i * lk..(i + 1) * lk];
                    let dot = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..lk {
                        dr[j] = pr[j] * (dr[j] - dot) * scale;
                    }
                }
                // dQ = dS K, dK = dSᵀ Q
                gemm(lq, lk, dh, &dprobs, Strided::rows(0, lk), &cache.k, kv_rows, T::one(), &mut dq, o_view);
                gemm(lk, lq, dh, &dprobs, Strided::cols(0, lk), &cache.q, o_view, T::one(), &mut dk, kv_rows);
            }
        }
        let dxq = self.q.backward(p, g, xq, &dq, batch * lq);
        let mut dxkv = self.k.backward(p, g, xkv, &dk, batch * lk);
        add_assign(&mut dxkv, &self.v.backward(p, g, xkv, &dv, batch * lk));
        (dxq, dxkv)
    }
}

/// Feed-forward sublayer `W₂·GELU(W₁·x)`.
#[derive(Clone, Debug)]
pub(crate) struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

pub(crate) struct FfCache<T> {
    x: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

impl FeedForward {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> (Vec<T>, FfCache<T>) {
        let rows = x.len() / self.l1.n_in;
        let pre = self.l1.forward(p, x, rows);
        let act = gelu(&pre);
        let y = self.l2.forward(p, &act, rows);
        (y, FfCache { x: x.to_vec(), pre, act })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], cache: &FfCache<T>, dy: &[T]) -> Vec<T> {
        let rows = dy.len() / self.l2.n_out;
        let dact = self.l2.backward(p, g, &cache.act, dy, rows);
        let dpre = gelu_backward(&cache.pre, &dact);
        self.l1.backward(p, g, &cache.x, &dpre, rows)
    }
}

/// Pre-norm encoder block: self-attention and feed-forward, each residual.
#[derive(Clone, Debug)]
pub(crate) struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

pub(crate) struct EncCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    attn: AttnCache<T>,
    ln2: LnCache<T>,
    ff: FfCache<T>,
}

impl EncoderLayer {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], batch: usize) -> (Vec<T>, EncCache<T>) {
        let (h1, ln1) = self.ln1.forward(p, x);
        let (a, attn) = self.attn.forward(p, &h1, &h1, batch);
        let x1 = add(x, &a);
        let (h2, ln2) = self.ln2.forward(p, &x1);
        let (f, ff) = self.ff.forward(p, &h2);
        (add(&x1, &f), EncCache { ln1, h1, attn, ln2, ff })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], c: &EncCache<T>, dy: &[T], batch: usize) -> Vec<T> {
        let dh2 = self.ff.backward(p, g, &c.ff, dy);
        let mut dx1 = dy.to_vec();
        add_assign(&mut dx1, &self.ln2.backward(p, g, &c.ln2, &dh2));
        let (dq, dkv) = self.attn.backward(p, g, &c.attn, &c.h1, &c.h1, &dx1, batch);
        let dh1 = add(&dq, &dkv);
        let mut dx = dx1;
        add_assign(&mut dx, &self.ln1.backward(p, g, &c.ln1, &dh1));
        dx
    }

    #[cfg(test)]
    pub fn attention_probs<'a, T>(cache: &'a EncCache<T>) -> &'a [T] {
        &cache.attn.probs
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention to the
/// encoder memory, feed-forward.
#[derive(Clone, Debug)]
pub(crate) struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_attn: Attention,
    pub ln2: LayerNorm,
    pub cross: Attention,
    pub ln3: LayerNorm,
    pub ff: FeedForward,
}

pub(crate) struct DecCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    sa: AttnCache<T>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    ca: AttnCache<T>,
    ln3: LnCache<T>,
    ff: FfCache<T>,
}

impl DecoderLayer {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], mem: &[T], batch: usize) -> (Vec<T>, DecCache<T>) {
        let (h1, ln1) = self.ln1.forward(p, x);
        let (a, sa) = self.self_attn.forward(p, &h1, &h1, batch);
        let x1 = add(x, &a);
        let (h2, ln2) = self.ln2.forward(p, &x1);
        let (c, ca) = self.cross.forward(p, &h2, mem, batch);
        let x2 = add(&x1, &c);
        let (h3, ln3) = self.ln3.forward(p, &x2);
        let (f, ff) = self.ff.forward(p, &h3);
        (add(&x2, &f), DecCache { ln1, h1, sa, ln2, h2, ca, ln3, ff })
    }

    /// Returns `(d x, d mem)`.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        c: &DecCache<T>,
        mem: &[T],
        dy: &[T],
        batch: usize,
    ) -> (Vec<T>, Vec<T>) {
        let dh3 = self.ff.backward(p, g, &c.ff, dy);
        let mut dx2 = dy.to_vec();
        add_assign(&mut dx2, &self.ln3.backward(p, g, &c.ln3, &dh3));
        let (dh2, dmem) = self.cross.backward(p, g, &c.ca, &c.h2, mem, &dx2, batch);
        let mut dx1 = dx2;
        add_assign(&mut dx1, &self.ln2.backward(p, g, &c.ln2, &dh2));
        let (dq, dkv) = self.self_attn.backward(p, g, &c.sa, &c.h1, &c.h1, &dx1, batch);
        let dh1 = add(&dq, &dkv);
        let mut dx = dx1;
        add_assign(&mut dx, &self.ln1.backward(p, g, &c.ln1, &dh1));
        (dx, dmem)
    }

    #[cfg(test)]
    pub fn attention_probs<'a, T>(cache: &'a DecCache<T>) -> (&'a [T], &'a [T]) {
        (&cache.sa.probs, &cache.ca.probs)
    }
}

/// Central finite-difference checks of the hand-written backward passes.
pub(crate) mod fd {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hands out consecutive offsets, like the model's parameter layout.
    pub(crate) struct Alloc(pub usize);

    impl Alloc {
        pub fn take(&mut self, n: usize) -> usize {
            let off = self.0;
            self.0 += n;
            off
        }

        pub fn linear(&mut self, n_in: usize, n_out: usize) -> Linear {
            Linear { w: self.take(n_in * n_out), b: self.take(n_out), n_in, n_out }
        }

        pub fn ln(&mut self, d: usize) -> LayerNorm {
            LayerNorm { gamma: self.take(d), beta: self.take(d), d }
        }

        pub fn attn(&mut self, d: usize, heads: usize, causal: bool) -> Attention {
            Attention { q: self.linear(d, d), k: self.linear(d, d), v: self.linear(d, d), o: self.linear(d, d), heads, d, causal }
        }

        pub fn ff(&mut self, d: usize, f: usize) -> FeedForward {
            FeedForward { l1: self.linear(d, f), l2: self.linear(f, d) }
        }
    }

    pub(crate) fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    pub(crate) fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
    }

    /// Checks analytic gradients of `L = Σ w ⊙ f(p, x)` against central
    /// differences, for every parameter and every input entry.
    pub(crate) fn check_layer(
        n_params: usize,
        x_len: usize,
        f: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
        b: &dyn Fn(&[f64], &mut [f64], &[f64], &[f64]) -> Vec<f64>,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = random_vec(&mut rng, n_params, 0.5);
        let x = random_vec(&mut rng, x_len, 1.0);
        let y = f(&p, &x);
        let w = random_vec(&mut rng, y.len(), 1.0);
        let loss = |p: &[f64], x: &[f64]| f(p, x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mut g = vec![0.0; n_params];
        let dx = b(&p, &mut g, &x, &w);
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..n_params {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[i] += eps;
            pm[i] -= eps;
            let num = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            worst = worst.max(rel_err(g[i], num));
        }
        for i in 0..x_len {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += eps;
            xm[i] -= eps;
            let num = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * eps);
            worst = worst.max(rel_err(dx[i], num));
        }
        worst
    }

    /// Worst relative error of every layer type against central differences.
    pub fn layer_errors() -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut a = Alloc(0);
        let l = a.linear(5, 3);
        out.push(("linear", check_layer(a.0, 4 * 5, &|p, x| l.forward(p, x, 4), &|p, g, x, dy| l.backward(p, g, x, dy, 4))));

        let mut a = Alloc(0);
        let ln = a.ln(6);
        out.push((
            "layer_norm",
            check_layer(a.0, 3 * 6, &|p, x| ln.forward(p, x).0, &|p, g, x, dy| {
                let (_, c) = ln.forward(p, x);
                ln.backward(p, g, &c, dy)
            }),
        ));

        out.push(("gelu", check_layer(0, 20, &|_, x| gelu(x), &|_, _, x, dy| gelu_backward(x, dy))));

        for (name, causal) in [("self_attention", false), ("causal_self_attention", true)] {
            let mut a = Alloc(0);
            let at = a.attn(8, 2, causal);
            out.push((
                name,
                check_layer(a.0, 2 * 5 * 8, &|p, x| at.forward(p, x, x, 2).0, &|p, g, x, dy| {
                    let (_, c) = at.forward(p, x, x, 2);
                    let (dq, dkv) = at.backward(p, g, &c, x, x, dy, 2);
                    add(&dq, &dkv)
                }),
            ));
        }

        // Queries: 2 batches × 3 rows; memory: 2 batches × 4 rows; packed in one input.
        let mut a = Alloc(0);
        let at = a.attn(8, 4, false);
        let split = 2 * 3 * 8;
        out.push((
            "cross_attention",
            check_layer(a.0, split + 2 * 4 * 8, &|p, x| at.forward(p, &x[..split], &x[split..], 2).0, &|p, g, x, dy| {
                let (_, c) = at.forward(p, &x[..split], &x[split..], 2);
                let (dq, dkv) = at.backward(p, g, &c, &x[..split], &x[split..], dy, 2);
                [dq, dkv].concat()
            }),
        ));

        let mut a = Alloc(0);
        let ff = a.ff(6, 10);
        out.push((
            "feed_forward",
            check_layer(a.0, 3 * 6, &|p, x| ff.forward(p, x).0, &|p, g, x, dy| {
                let (_, c) = ff.forward(p, x);
                ff.backward(p, g, &c, dy)
            }),
        ));

        let mut a = Alloc(0);
        let layer = EncoderLayer { ln1: a.ln(8), attn: a.attn(8, 2, false), ln2: a.ln(8), ff: a.ff(8, 12) };
        out.push((
            "encoder_layer",
            check_layer(a.0, 2 * 3 * 8, &|p, x| layer.forward(p, x, 2).0, &|p, g, x, dy| {
                let (_, c) = layer.forward(p, x, 2);
                layer.backward(p, g, &c, dy, 2)
            }),
        ));

        let mut a = Alloc(0);
        let layer = DecoderLayer {
            ln1: a.ln(8),
            self_attn: a.attn(8, 2, true),
            ln2: a.ln(8),
            cross: a.attn(8, 2, false),
            ln3: a.ln(8),
            ff: a.ff(8, 12),
        };
        let split = 2 * 4 * 8;
        out.push((
            "decoder_layer",
            check_layer(a.0, split + 2 * 3 * 8, &|p, x| layer.forward(p, &x[..split], &x[split..], 2).0, &|p, g, x, dy| {
                let (_, c) = layer.forward(p, &x[..split], &x[split..], 2);
                let (dx, dmem) = layer.backward(p, g, &c, &x[split..], dy, 2);
                [dx, dmem].concat()
            }),
        ));
        out
    }
}
