//! LSTM backbone (LSTM -> dense+LN+ReLU -> dense+LN+ReLU) and linear softmax
//! head, with hand-written backpropagation through time.
//!
//! Batched tensors are row-major with the batch on rows. Sequences enter as
//! `[T, B, D]`. Gate blocks in the `4H` axis are ordered input, forget, cell,
//! output.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::ParamSet;
use super::{softmax7, Decision};
use crate::dataset::N_CLASSES;
use crate::error::{Error, Result};
use crate::features::{Standardizer, LSF4_DIM};
use crate::rng::rng_for;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentArch {
    pub input_dim: usize,
    pub hidden: usize,
    /// Width of both dense layers, which is also the embedding size.
    pub dense: usize,
    pub n_classes: usize,
    pub sequence_len: usize,
}

impl Default for RecurrentArch {
    fn default() -> Self {
        Self {
            input_dim: LSF4_DIM,
            hidden: 128,
            dense: 128,
            n_classes: N_CLASSES,
            sequence_len: 40,
        }
    }
}

/// Branch-free `exp` (range reduction plus degree-13 Taylor polynomial),
/// written so gate loops auto-vectorize. Relative error is a few ulp.
#[inline(always)]
fn exp_vec(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const SHIFTER: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    let x = x.clamp(-700.0, 700.0);
    let shifted = x * LOG2E + SHIFTER;
    let kf = shifted - SHIFTER;
    let r = (x - kf * LN2_HI) - kf * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // the low mantissa bits of `shifted` hold k
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    p * scale
}

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp_vec(-x))
}

#[inline(always)]
fn tanh_vec(x: f64) -> f64 {
    let e = exp_vec(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn uniform<R: Rng>(rng: &mut R, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
}

fn slice_of(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// `out += v * m` for a row vector `v` and row-major `m`.
#[inline]
fn vec_mat_acc(v: &[f64], m: &Array2<f64>, out: &mut [f64]) {
    let n = m.ncols();
    let data = slice_of(m);
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = &data[k * n..(k + 1) * n];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += vk * w;
        }
    }
}

/// Trainable trunk producing the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub arch: RecurrentArch,
    /// `input_dim x 4H`
    pub w_x: Array2<f64>,
    /// `H x 4H`
    pub w_h: Array2<f64>,
    pub b_lstm: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

/// Gradients share the parameter layout.
pub type BackboneGrads = Backbone;

impl Backbone {
    pub fn zeros(arch: RecurrentArch) -> Self {
        let (d, h, e) = (arch.input_dim, arch.hidden, arch.dense);
        Self {
            arch,
            w_x: Array2::zeros((d, 4 * h)),
            w_h: Array2::zeros((h, 4 * h)),
            b_lstm: Array1::zeros(4 * h),
            w1: Array2::zeros((h, e)),
            b1: Array1::zeros(e),
            ln1_gain: Array1::zeros(e),
            ln1_bias: Array1::zeros(e),
            w2: Array2::zeros((e, e)),
            b2: Array1::zeros(e),
            ln2_gain: Array1::zeros(e),
            ln2_bias: Array1::zeros(e),
        }
    }

    /// Uniform fan-in initialization, forget-gate bias 1, unit LN gains.
    pub fn init(arch: RecurrentArch, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0xBAC_B0E]);
        let (d, h, e) = (arch.input_dim, arch.hidden, arch.dense);
        let mut b_lstm = Array1::zeros(4 * h);
        b_lstm.slice_mut(s![h..2 * h]).fill(1.0);
        Self {
            arch,
            w_x: uniform(&mut rng, (d, 4 * h), d),
            w_h: uniform(&mut rng, (h, 4 * h), h),
            b_lstm,
            w1: uniform(&mut rng, (h, e), h),
            b1: Array1::zeros(e),
            ln1_gain: Array1::ones(e),
            ln1_bias: Array1::zeros(e),
            w2: uniform(&mut rng, (e, e), e),
            b2: Array1::zeros(e),
            ln2_gain: Array1::ones(e),
            ln2_bias: Array1::zeros(e),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    fn check_input(&self, xs: &Array3<f64>) -> Result<()> {
        if xs.dim().2 != self.arch.input_dim {
            return Err(Error::Dimension { expected: self.arch.input_dim, got: xs.dim().2 });
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in recurrent input".into()));
        }
        Ok(())
    }

    /// Forward pass over `[T, B, D]`, keeping what backpropagation needs.
    pub fn forward_train(&self, xs: &Array3<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(xs)?;
        let (t_len, batch, d) = xs.dim();
        let h = self.arch.hidden;
        let x_flat = xs
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t_len * batch, d))
            .expect("contiguous");
        let mut xproj = x_flat.dot(&self.w_x);
        xproj += &self.b_lstm;

        let mut h_prev_all = Array2::<f64>::zeros((t_len * batch, h));
        let mut gates_all = Array2::<f64>::zeros((t_len * batch, 4 * h));
        let mut c_all = Array2::<f64>::zeros(((t_len + 1) * batch, h));
        let mut tanh_c_all = Array2::<f64>::zeros((t_len * batch, h));
        let mut h_cur = Array2::<f64>::zeros((batch, h));

        for t in 0..t_len {
            let rows = t * batch..(t + 1) * batch;
            h_prev_all.slice_mut(s![rows.clone(), ..]).assign(&h_cur);
            let mut g = xproj.slice(s![rows.clone(), ..]).to_owned();
            general_mat_mul(1.0, &h_cur, &self.w_h, 1.0, &mut g);
            let (c_done, c_rest) = c_all.as_slice_mut().expect("standard layout").split_at_mut((t + 1) * batch * h);
            let c_prev_block = &c_done[t * batch * h..];
            let tc_block = &mut tanh_c_all.as_slice_mut().expect("standard layout")[t * batch * h..(t + 1) * batch * h];
            let h_block = h_cur.as_slice_mut().expect("standard layout");
            let g_block = g.as_slice_mut().expect("standard layout");
            for r in 0..batch {
                let hr = r * h..(r + 1) * h;
                lstm_cell(
                    &mut g_block[4 * h * r..4 * h * (r + 1)],
                    &c_prev_block[hr.clone()],
                    &mut c_rest[hr.clone()],
                    &mut tc_block[hr.clone()],
                    &mut h_block[hr],
                );
            }
            gates_all.slice_mut(s![rows, ..]).assign(&g);
        }

        let (y1, n1, inv1) = dense_ln(&h_cur, &self.w1, &self.b1, &self.ln1_gain, &self.ln1_bias);
        let a1 = y1.mapv(|v| v.max(0.0));
        let (y2, n2, inv2) = dense_ln(&a1, &self.w2, &self.b2, &self.ln2_gain, &self.ln2_bias);
        let emb = y2.mapv(|v| v.max(0.0));
        let cache = ForwardCache {
            t_len,
            batch,
            x_flat,
            h_prev_all,
            gates_all,
            c_all,
            tanh_c_all,
            h_last: h_cur,
            y1,
            n1,
            inv1,
            a1,
            y2,
            n2,
            inv2,
        };
        Ok((emb, cache))
    }

    pub fn embed(&self, xs: &Array3<f64>) -> Result<Array2<f64>> {
        self.forward_train(xs).map(|(e, _)| e)
    }

    /// Backpropagates `d_emb` (`B x dense`) to parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, d_emb: &Array2<f64>) -> BackboneGrads {
        let mut grads = self.zeros_like();
        let h = self.arch.hidden;
        let (t_len, batch) = (cache.t_len, cache.batch);

        // dense 2
        let d_y2 = relu_grad(d_emb, &cache.y2);
        let dz2 = ln_backward(&d_y2, &cache.n2, &cache.inv2, &self.ln2_gain, &mut grads.ln2_gain, &mut grads.ln2_bias);
        general_mat_mul(1.0, &cache.a1.t(), &dz2, 0.0, &mut grads.w2);
        grads.b2 = dz2.sum_axis(Axis(0));
        let d_a1 = dz2.dot(&self.w2.t());
        // dense 1
        let d_y1 = relu_grad(&d_a1, &cache.y1);
        let dz1 = ln_backward(&d_y1, &cache.n1, &cache.inv1, &self.ln1_gain, &mut grads.ln1_gain, &mut grads.ln1_bias);
        general_mat_mul(1.0, &cache.h_last.t(), &dz1, 0.0, &mut grads.w1);
        grads.b1 = dz1.sum_axis(Axis(0));
        let mut dh = dz1.dot(&self.w1.t());

        // LSTM, through time
        let mut d_gates_all = Array2::<f64>::zeros((t_len * batch, 4 * h));
        let mut dc = Array2::<f64>::zeros((batch, h));
        for t in (0..t_len).rev() {
            for r in 0..batch {
                let row = t * batch + r;
                let gates = cache.gates_all.row(row);
                let gates = gates.as_slice().expect("row-major");
                let c_prev = cache.c_all.row(row);
                let c_prev = c_prev.as_slice().expect("row-major");
                let tc = cache.tanh_c_all.row(row);
                let tc = tc.as_slice().expect("row-major");
                let dh_r = dh.row(r);
                let dh_r = dh_r.as_slice().expect("row-major");
                let dc_r = dc.row_mut(r).into_slice().expect("row-major");
                let dg = d_gates_all.row_mut(row).into_slice().expect("row-major");
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let d_o = dh_r[j] * tc[j];
                    let d_c = dc_r[j] + dh_r[j] * o_g * (1.0 - tc[j] * tc[j]);
                    dg[j] = d_c * g_g * i_g * (1.0 - i_g);
                    dg[h + j] = d_c * c_prev[j] * f_g * (1.0 - f_g);
                    dg[2 * h + j] = d_c * i_g * (1.0 - g_g * g_g);
                    dg[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    dc_r[j] = d_c * f_g;
                }
            }
            if t > 0 {
                let dg_t = d_gates_all.slice(s![t * batch..(t + 1) * batch, ..]);
                general_mat_mul(1.0, &dg_t, &self.w_h.t(), 0.0, &mut dh);
            }
        }
        general_mat_mul(1.0, &cache.h_prev_all.t(), &d_gates_all, 0.0, &mut grads.w_h);
        general_mat_mul(1.0, &cache.x_flat.t(), &d_gates_all, 0.0, &mut grads.w_x);
        grads.b_lstm = d_gates_all.sum_axis(Axis(0));
        grads
    }

    /// Cheap content hash of all parameters (bitwise).
    pub fn fingerprint(&self) -> u64 {
        use std::hash::Hasher;
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for t in self.tensors() {
            for v in t {
                hasher.write_u64(v.to_bits());
            }
        }
        hasher.finish()
    }
}

/// Activates one row of pre-activations in place and advances the cell.
#[inline(always)]
fn lstm_cell(gates: &mut [f64], c_prev: &[f64], c_new: &mut [f64], tanh_c: &mut [f64], h_out: &mut [f64]) {
    let h = c_prev.len();
    let (gi, rest) = gates.split_at_mut(h);
    let (gf, rest) = rest.split_at_mut(h);
    let (gg, go) = rest.split_at_mut(h);
    let go = &mut go[..h];
    for j in 0..h {
        let i_g = sigmoid(gi[j]);
        let f_g = sigmoid(gf[j]);
        let g_g = tanh_vec(gg[j]);
        let o_g = sigmoid(go[j]);
        gi[j] = i_g;
        gf[j] = f_g;
        gg[j] = g_g;
        go[j] = o_g;
        let c = f_g * c_prev[j] + i_g * g_g;
        c_new[j] = c;
        let tc = tanh_vec(c);
        tanh_c[j] = tc;
        h_out[j] = o_g * tc;
    }
}

fn relu_grad(d: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|o, &p| {
        if p <= 0.0 {
            *o = 0.0;
        }
    });
    out
}

/// `y = gain * LN(x W + b) + bias`; returns `(y, normalized, inv_std)`.
fn dense_ln(
    x: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let mut z = x.dot(w);
    z += b;
    let n = z.ncols() as f64;
    let mut inv = Array1::zeros(z.nrows());
    for (r, mut row) in z.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv[r] = is;
        row.mapv_inplace(|v| (v - mean) * is);
    }
    let mut y = &z * gain;
    y += bias;
    (y, z, inv)
}

fn ln_backward(
    d_y: &Array2<f64>,
    normalized: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gain = (d_y * normalized).sum_axis(Axis(0));
    *d_bias = d_y.sum_axis(Axis(0));
    let dn = d_y * gain;
    let n = dn.ncols() as f64;
    let mut dz = Array2::zeros(dn.raw_dim());
    for r in 0..dn.nrows() {
        let dn_r = dn.row(r);
        let nr = normalized.row(r);
        let mean_dn = dn_r.sum() / n;
        let mean_dn_n = dn_r.iter().zip(nr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        for j in 0..dn.ncols() {
            dz[[r, j]] = inv_std[r] * (dn_r[j] - mean_dn - nr[j] * mean_dn_n);
        }
    }
    dz
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    t_len: usize,
    batch: usize,
    x_flat: Array2<f64>,
    h_prev_all: Array2<f64>,
    gates_all: Array2<f64>,
    c_all: Array2<f64>,
    tanh_c_all: Array2<f64>,
    h_last: Array2<f64>,
    y1: Array2<f64>,
    n1: Array2<f64>,
    inv1: Array1<f64>,
    a1: Array2<f64>,
    y2: Array2<f64>,
    n2: Array2<f64>,
    inv2: Array1<f64>,
}

impl ParamSet for Backbone {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            slice_of(&self.w_x),
            slice_of(&self.w_h),
            self.b_lstm.as_slice().unwrap(),
            slice_of(&self.w1),
            self.b1.as_slice().unwrap(),
            self.ln1_gain.as_slice().unwrap(),
            self.ln1_bias.as_slice().unwrap(),
            slice_of(&self.w2),
            self.b2.as_slice().unwrap(),
            self.ln2_gain.as_slice().unwrap(),
            self.ln2_bias.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_x.as_slice_mut().unwrap(),
            self.w_h.as_slice_mut().unwrap(),
            self.b_lstm.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.ln1_gain.as_slice_mut().unwrap(),
            self.ln1_bias.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.ln2_gain.as_slice_mut().unwrap(),
            self.ln2_bias.as_slice_mut().unwrap(),
        ]
    }
}

/// Linear softmax classifier on the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `dense x classes`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Head {
    pub fn zeros(arch: RecurrentArch) -> Self {
        Self {
            w: Array2::zeros((arch.dense, arch.n_classes)),
            b: Array1::zeros(arch.n_classes),
        }
    }

    pub fn init(arch: RecurrentArch, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x4EAD]);
        Self {
            w: uniform(&mut rng, (arch.dense, arch.n_classes), arch.dense),
            b: Array1::zeros(arch.n_classes),
        }
    }

    pub fn logits(&self, emb: &Array2<f64>) -> Array2<f64> {
        let mut z = emb.dot(&self.w);
        z += &self.b;
        z
    }

    /// Mean cross-entropy and its gradient w.r.t. logits.
    pub fn xent(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
        let b = logits.nrows() as f64;
        let mut d = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (r, row) in logits.rows().into_iter().enumerate() {
            let p = super::softmax(row.as_slice().expect("row-major"));
            loss -= p[labels[r]].max(f64::MIN_POSITIVE).ln();
            for (j, &pj) in p.iter().enumerate() {
                d[[r, j]] = (pj - if j == labels[r] { 1.0 } else { 0.0 }) / b;
            }
        }
        (loss / b, d)
    }

    /// Returns `(d_w, d_b, d_emb)`.
    pub fn backward(&self, emb: &Array2<f64>, d_logits: &Array2<f64>) -> (Head, Array2<f64>) {
        let grads = Head {
            w: emb.t().dot(d_logits),
            b: d_logits.sum_axis(Axis(0)),
        };
        (grads, d_logits.dot(&self.w.t()))
    }
}

impl ParamSet for Head {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice_of(&self.w), self.b.as_slice().unwrap()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }
}

/// Backbone + head + the standardizer of its training features.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel {
    pub backbone: Backbone,
    pub head: Head,
    pub standardizer: Standardizer,
}

impl RecurrentModel {
    pub fn init(arch: RecurrentArch, standardizer: Standardizer, seed: u64) -> Self {
        Self {
            backbone: Backbone::init(arch, seed),
            head: Head::init(arch, seed),
            standardizer,
        }
    }

    pub fn arch(&self) -> RecurrentArch {
        self.backbone.arch
    }

    /// Single standardized sequence (`T x D`) to embedding and posterior.
    pub fn forward(&self, sequence: ArrayView2<f64>) -> Result<(Array1<f64>, [f64; N_CLASSES])> {
        let (t, d) = sequence.dim();
        let xs = sequence.to_owned().into_shape_with_order((t, 1, d)).expect("contiguous");
        let emb = self.backbone.embed(&xs)?;
        let logits = self.head.logits(&emb);
        let post = softmax7(logits.row(0).as_slice().expect("row-major"));
        Ok((emb.row(0).to_owned(), post))
    }

    /// Batched posteriors for `[T, B, D]`.
    pub fn posteriors(&self, xs: &Array3<f64>) -> Result<Vec<[f64; N_CLASSES]>> {
        let emb = self.backbone.embed(xs)?;
        let logits = self.head.logits(&emb);
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| softmax7(r.as_slice().expect("row-major")))
            .collect())
    }
}

/// Composite parameter view: backbone tensors followed by head tensors.
pub struct ModelParams<'a> {
    pub backbone: &'a mut Backbone,
    pub head: &'a mut Head,
}

impl ParamSet for ModelParams<'_> {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.backbone.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.backbone.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

/// Owned gradient pair matching [`ModelParams`].
pub struct ModelGrads {
    pub backbone: Backbone,
    pub head: Head,
}

impl ParamSet for ModelGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.backbone.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.backbone.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

/// Sliding-window inference over a frame stream.
///
/// Input projections are cached per frame; each new frame re-runs the
/// recurrence over the last `sequence_len` projections from a zero state,
/// which gives exactly the batch forward on that window.
pub struct StreamingRecurrent<'m> {
    model: &'m RecurrentModel,
    proj: std::collections::VecDeque<Vec<f64>>,
}

impl<'m> StreamingRecurrent<'m> {
    pub fn new(model: &'m RecurrentModel) -> Self {
        Self {
            model,
            proj: std::collections::VecDeque::with_capacity(model.arch().sequence_len),
        }
    }

    pub fn reset(&mut self) {
        self.proj.clear();
    }

    /// Feeds one raw (unstandardized) LSF4 frame.
    pub fn push_raw(&mut self, frame: &[f64]) -> Result<Decision> {
        let mut z = frame.to_vec();
        self.model.standardizer.apply_row_in_place(&mut z);
        self.push_standardized(&z)
    }

    pub fn push_standardized(&mut self, frame: &[f64]) -> Result<Decision> {
        let bb = &self.model.backbone;
        let arch = bb.arch;
        if frame.len() != arch.input_dim {
            return Err(Error::Dimension { expected: arch.input_dim, got: frame.len() });
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in recurrent input".into()));
        }
        let mut p = bb.b_lstm.to_vec();
        vec_mat_acc(frame, &bb.w_x, &mut p);
        if self.proj.len() == arch.sequence_len {
            self.proj.pop_front();
        }
        self.proj.push_back(p);
        if self.proj.len() < arch.sequence_len {
            return Ok(Decision::no_movement());
        }
        let emb = self.embedding_from_projections();
        let mut logits = self.model.head.b.to_vec();
        vec_mat_acc(&emb, &self.model.head.w, &mut logits);
        Ok(Decision::from_posterior(softmax7(&logits)))
    }

    fn embedding_from_projections(&self) -> Vec<f64> {
        let bb = &self.model.backbone;
        let h = bb.arch.hidden;
        let mut hv = vec![0.0; h];
        let mut cv = vec![0.0; h];
        let mut c_next = vec![0.0; h];
        let mut tc = vec![0.0; h];
        let mut g = vec![0.0; 4 * h];
        for p in &self.proj {
            g.copy_from_slice(p);
            vec_mat_acc(&hv, &bb.w_h, &mut g);
            lstm_cell(&mut g, &cv, &mut c_next, &mut tc, &mut hv);
            std::mem::swap(&mut cv, &mut c_next);
        }
        let a1 = dense_ln_vec(&hv, &bb.w1, &bb.b1, &bb.ln1_gain, &bb.ln1_bias);
        dense_ln_vec(&a1, &bb.w2, &bb.b2, &bb.ln2_gain, &bb.ln2_bias)
    }
}

fn dense_ln_vec(x: &[f64], w: &Array2<f64>, b: &Array1<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> Vec<f64> {
    let mut z = b.to_vec();
    vec_mat_acc(x, w, &mut z);
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let is = 1.0 / (var + LN_EPS).sqrt();
    z.iter()
        .zip(gain.iter().zip(bias.iter()))
        .map(|(&v, (&g, &bi))| (g * (v - mean) * is + bi).max(0.0))
        .collect()
}
