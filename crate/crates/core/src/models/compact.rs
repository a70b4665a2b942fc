//! 32-bit inference copy of a trained recurrent model.
//!
//! Training stays in f64; deployment (streaming and offline evaluation)
//! runs this single-precision mirror. Posteriors agree with the f64 path to
//! roughly 1e-4.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2};

use super::recurrent::{RecurrentArch, RecurrentModel, LN_EPS};
use super::{softmax7, Decision};
use crate::error::{Error, Result};
use crate::features::Standardizer;

const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct CompactRecurrent {
    pub arch: RecurrentArch,
    w_x: Array2<f32>,
    w_h: Array2<f32>,
    b_lstm: Vec<f32>,
    w1: Array2<f32>,
    b1: Vec<f32>,
    g1: Vec<f32>,
    be1: Vec<f32>,
    w2: Array2<f32>,
    b2: Vec<f32>,
    g2: Vec<f32>,
    be2: Vec<f32>,
    head_w: Array2<f32>,
    head_b: Vec<f32>,
    pub standardizer: Standardizer,
}

fn m32(a: &Array2<f64>) -> Array2<f32> {
    a.mapv(|v| v as f32).as_standard_layout().into_owned()
}

fn v32(a: &Array1<f64>) -> Vec<f32> {
    a.iter().map(|&v| v as f32).collect()
}

#[inline(always)]
fn exp32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    const SHIFTER: f32 = 12_582_912.0; // 1.5 * 2^23
    let x = x.clamp(-87.0, 87.0);
    let shifted = x * LOG2E + SHIFTER;
    let kf = shifted - SHIFTER;
    let r = (x - kf * LN2_HI) - kf * LN2_LO;
    let mut p = 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let scale = f32::from_bits((shifted.to_bits().wrapping_add(127)) << 23);
    p * scale
}

#[inline(always)]
fn sigmoid32(x: f32) -> f32 {
    1.0 / (1.0 + exp32(-x))
}

#[inline(always)]
fn tanh32(x: f32) -> f32 {
    let e = exp32(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Gates in place, then `c` and `h` in place.
#[inline(always)]
fn cell(g: &mut [f32], c: &mut [f32], h: &mut [f32]) {
    let n = c.len();
    let (gi, rest) = g.split_at_mut(n);
    let (gf, rest) = rest.split_at_mut(n);
    let (gg, go) = rest.split_at_mut(n);
    for j in 0..n {
        let i_g = sigmoid32(gi[j]);
        let f_g = sigmoid32(gf[j]);
        let g_g = tanh32(gg[j]);
        let o_g = sigmoid32(go[j]);
        let cj = f_g * c[j] + i_g * g_g;
        c[j] = cj;
        h[j] = o_g * tanh32(cj);
    }
}

#[inline]
fn vec_mat_acc(v: &[f32], m: &Array2<f32>, out: &mut [f32]) {
    let n = m.ncols();
    let data = m.as_slice().expect("standard layout");
    for (k, &vk) in v.iter().enumerate() {
        let row = &data[k * n..(k + 1) * n];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += vk * w;
        }
    }
}

/// LayerNorm with affine and ReLU, row by row.
fn ln_relu_rows(z: &mut Array2<f32>, gain: &[f32], bias: &[f32]) {
    for mut row in z.rows_mut() {
        let r = row.as_slice_mut().expect("row-major");
        ln_relu(r, gain, bias);
    }
}

fn ln_relu(r: &mut [f32], gain: &[f32], bias: &[f32]) {
    let n = r.len() as f64;
    let mean = r.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = r.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let is = (1.0 / (var + LN_EPS).sqrt()) as f32;
    let mean = mean as f32;
    for ((v, &g), &b) in r.iter_mut().zip(gain).zip(bias) {
        *v = (g * (*v - mean) * is + b).max(0.0);
    }
}

fn posterior(logits: &[f32]) -> Decision {
    let l: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    Decision::from_posterior(softmax7(&l))
}

impl CompactRecurrent {
    pub fn from_model(model: &RecurrentModel) -> Self {
        let bb = &model.backbone;
        Self {
            arch: bb.arch,
            w_x: m32(&bb.w_x),
            w_h: m32(&bb.w_h),
            b_lstm: v32(&bb.b_lstm),
            w1: m32(&bb.w1),
            b1: v32(&bb.b1),
            g1: v32(&bb.ln1_gain),
            be1: v32(&bb.ln1_bias),
            w2: m32(&bb.w2),
            b2: v32(&bb.b2),
            g2: v32(&bb.ln2_gain),
            be2: v32(&bb.ln2_bias),
            head_w: m32(&model.head.w),
            head_b: v32(&model.head.b),
            standardizer: model.standardizer.clone(),
        }
    }

    fn check_frames(&self, frames: ArrayView2<f64>) -> Result<()> {
        if frames.ncols() != self.arch.input_dim {
            return Err(Error::Dimension { expected: self.arch.input_dim, got: frames.ncols() });
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in recurrent input".into()));
        }
        Ok(())
    }

    /// Standardized input projections `x W_x + b` for every frame.
    fn projections(&self, frames: ArrayView2<f64>) -> Result<Array2<f32>> {
        self.check_frames(frames)?;
        let z = self.standardizer.apply(frames)?;
        let z32 = z.mapv(|v| v as f32);
        let mut p = Array2::<f32>::zeros((z.nrows(), 4 * self.arch.hidden));
        for mut row in p.rows_mut() {
            row.as_slice_mut().unwrap().copy_from_slice(&self.b_lstm);
        }
        general_mat_mul(1.0, &z32, &self.w_x, 1.0, &mut p);
        Ok(p)
    }

    /// Embeddings and decisions for windows ending at each `ends[b]`.
    fn windows(&self, proj: &Array2<f32>, ends: &[usize]) -> (Array2<f32>, Vec<Decision>) {
        let h = self.arch.hidden;
        let t_len = self.arch.sequence_len;
        let batch = ends.len();
        let mut hs = Array2::<f32>::zeros((batch, h));
        let mut cs = vec![0.0f32; batch * h];
        let mut g = Array2::<f32>::zeros((batch, 4 * h));
        for t in 0..t_len {
            for (b, &e) in ends.iter().enumerate() {
                g.row_mut(b).assign(&proj.row(e + 1 + t - t_len));
            }
            general_mat_mul(1.0, &hs, &self.w_h, 1.0, &mut g);
            let gs = g.as_slice_mut().unwrap();
            let hsl = hs.as_slice_mut().unwrap();
            for b in 0..batch {
                cell(
                    &mut gs[4 * h * b..4 * h * (b + 1)],
                    &mut cs[h * b..h * (b + 1)],
                    &mut hsl[h * b..h * (b + 1)],
                );
            }
        }
        let mut a1 = Array2::<f32>::zeros((batch, self.arch.dense));
        for mut row in a1.rows_mut() {
            row.as_slice_mut().unwrap().copy_from_slice(&self.b1);
        }
        general_mat_mul(1.0, &hs, &self.w1, 1.0, &mut a1);
        ln_relu_rows(&mut a1, &self.g1, &self.be1);
        let mut emb = Array2::<f32>::zeros((batch, self.arch.dense));
        for mut row in emb.rows_mut() {
            row.as_slice_mut().unwrap().copy_from_slice(&self.b2);
        }
        general_mat_mul(1.0, &a1, &self.w2, 1.0, &mut emb);
        ln_relu_rows(&mut emb, &self.g2, &self.be2);
        let mut logits = Array2::<f32>::zeros((batch, self.arch.n_classes));
        for mut row in logits.rows_mut() {
            row.as_slice_mut().unwrap().copy_from_slice(&self.head_b);
        }
        general_mat_mul(1.0, &emb, &self.head_w, 1.0, &mut logits);
        let decisions = logits.rows().into_iter().map(|r| posterior(r.as_slice().unwrap())).collect();
        (emb, decisions)
    }

    /// Same contract as [`super::sliding_infer`]: one decision per raw frame,
    /// NM during the first `sequence_len - 1` frames.
    pub fn sliding_infer(&self, frames: ArrayView2<f64>) -> Result<Vec<Decision>> {
        let proj = self.projections(frames)?;
        let n = proj.nrows();
        let t_len = self.arch.sequence_len;
        let mut out = vec![Decision::no_movement(); n.min(t_len - 1)];
        let ends: Vec<usize> = (t_len - 1..n).collect();
        for chunk in ends.chunks(CHUNK) {
            out.extend(self.windows(&proj, chunk).1);
        }
        Ok(out)
    }

    /// Decisions at the given window end frames only.
    pub fn infer_at(&self, frames: ArrayView2<f64>, ends: &[usize]) -> Result<Vec<Decision>> {
        let proj = self.projections(frames)?;
        let t_len = self.arch.sequence_len;
        if let Some(&bad) = ends.iter().find(|&&e| e + 1 < t_len || e >= proj.nrows()) {
            return Err(Error::InvalidInput(format!("window end {bad} out of range")));
        }
        let mut out = Vec::with_capacity(ends.len());
        for chunk in ends.chunks(CHUNK) {
            out.extend(self.windows(&proj, chunk).1);
        }
        Ok(out)
    }

    /// Embeddings (f64) of windows ending at the given frames.
    pub fn embed_at(&self, frames: ArrayView2<f64>, ends: &[usize]) -> Result<Array2<f64>> {
        let proj = self.projections(frames)?;
        let t_len = self.arch.sequence_len;
        if let Some(&bad) = ends.iter().find(|&&e| e + 1 < t_len || e >= proj.nrows()) {
            return Err(Error::InvalidInput(format!("window end {bad} out of range")));
        }
        let mut out = Array2::zeros((ends.len(), self.arch.dense));
        for (ci, chunk) in ends.chunks(CHUNK).enumerate() {
            let (emb, _) = self.windows(&proj, chunk);
            out.slice_mut(ndarray::s![ci * CHUNK..ci * CHUNK + chunk.len(), ..])
                .assign(&emb.mapv(|v| v as f64));
        }
        Ok(out)
    }

    pub fn stream(&self) -> CompactStream<'_> {
        CompactStream {
            model: self,
            proj: std::collections::VecDeque::with_capacity(self.arch.sequence_len),
            scratch: vec![0.0; self.arch.input_dim],
        }
    }
}

/// Frame-by-frame sliding-window inference (one window per pushed frame).
pub struct CompactStream<'m> {
    model: &'m CompactRecurrent,
    proj: std::collections::VecDeque<Vec<f32>>,
    scratch: Vec<f64>,
}

impl CompactStream<'_> {
    pub fn reset(&mut self) {
        self.proj.clear();
    }

    pub fn push_raw(&mut self, frame: &[f64]) -> Result<Decision> {
        let m = self.model;
        let arch = m.arch;
        if frame.len() != arch.input_dim {
            return Err(Error::Dimension { expected: arch.input_dim, got: frame.len() });
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in recurrent input".into()));
        }
        self.scratch.copy_from_slice(frame);
        m.standardizer.apply_row_in_place(&mut self.scratch);
        let z: Vec<f32> = self.scratch.iter().map(|&v| v as f32).collect();
        let mut p = if self.proj.len() == arch.sequence_len {
            self.proj.pop_front().unwrap()
        } else {
            vec![0.0; 4 * arch.hidden]
        };
        p.copy_from_slice(&m.b_lstm);
        vec_mat_acc(&z, &m.w_x, &mut p);
        self.proj.push_back(p);
        if self.proj.len() < arch.sequence_len {
            return Ok(Decision::no_movement());
        }
        let h = arch.hidden;
        let mut hv = vec![0.0f32; h];
        let mut cv = vec![0.0f32; h];
        let mut g = vec![0.0f32; 4 * h];
        for p in &self.proj {
            g.copy_from_slice(p);
            vec_mat_acc(&hv, &m.w_h, &mut g);
            cell(&mut g, &mut cv, &mut hv);
        }
        let mut a1 = m.b1.clone();
        vec_mat_acc(&hv, &m.w1, &mut a1);
        ln_relu(&mut a1, &m.g1, &m.be1);
        let mut emb = m.b2.clone();
        vec_mat_acc(&a1, &m.w2, &mut emb);
        ln_relu(&mut emb, &m.g2, &m.be2);
        let mut logits = m.head_b.clone();
        vec_mat_acc(&emb, &m.head_w, &mut logits);
        Ok(posterior(&logits))
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::sliding_infer;

    fn model() -> RecurrentModel {
        let arch = RecurrentArch { input_dim: 24, hidden: 32, dense: 32, n_classes: 7, sequence_len: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_simple_fn((50, 24), || rng.gen_range(0.0..3.0));
        let st = Standardizer::fit(data.view()).unwrap();
        let mut m = RecurrentModel::init(arch, st, 11);
        // make the head non-trivial so posteriors differ across windows
        m.head.w.mapv_inplace(|v| v * 8.0);
        m
    }

    fn frames(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, 24), || rng.gen_range(0.0..3.0))
    }

    #[test]
    fn exp32_is_accurate() {
        for i in -800..800 {
            let x = i as f32 * 0.1;
            let rel = ((exp32(x) as f64 - (x as f64).exp()) / (x as f64).exp()).abs();
            assert!(rel < 2e-6, "{x}: {rel}");
        }
    }

    #[test]
    fn batched_matches_f64_reference() {
        let m = model();
        let c = CompactRecurrent::from_model(&m);
        let f = frames(300, 5);
        let reference = sliding_infer(&m, f.view()).unwrap();
        let fast = c.sliding_infer(f.view()).unwrap();
        assert_eq!(reference.len(), fast.len());
        let mut agree = 0;
        for (a, b) in reference.iter().zip(&fast) {
            for k in 0..7 {
                assert!((a.posterior[k] - b.posterior[k]).abs() < 1e-4);
            }
            agree += (a.class == b.class) as usize;
        }
        assert!(agree >= reference.len() - 1);
    }

    #[test]
    fn stream_matches_batched() {
        let m = model();
        let c = CompactRecurrent::from_model(&m);
        let f = frames(120, 9);
        let batch = c.sliding_infer(f.view()).unwrap();
        let mut s = c.stream();
        for (i, row) in f.rows().into_iter().enumerate() {
            let d = s.push_raw(row.as_slice().unwrap()).unwrap();
            for k in 0..7 {
                assert!((d.posterior[k] - batch[i].posterior[k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn infer_at_and_embed_at_select_windows() {
        let m = model();
        let c = CompactRecurrent::from_model(&m);
        let f = frames(60, 2);
        let all = c.sliding_infer(f.view()).unwrap();
        let ends = [7, 20, 59];
        let some = c.infer_at(f.view(), &ends).unwrap();
        for (d, &e) in some.iter().zip(&ends) {
            assert_eq!(d.posterior, all[e].posterior);
        }
        let emb = c.embed_at(f.view(), &ends).unwrap();
        let z = m.standardizer.apply(f.view()).unwrap();
        let (e64, _) = m.forward(z.slice(ndarray::s![13..=20, ..])).unwrap();
        for k in 0..32 {
            assert!((emb[[1, k]] - e64[k]).abs() < 1e-4);
        }
        assert!(c.infer_at(f.view(), &[6]).is_err());
    }
}
