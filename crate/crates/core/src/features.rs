//! LSF4 features (L-scale, maximum fractal length, mean squared root,
//! Willison amplitude) and MAV, plus per-feature standardization.
//!
//! The flattened LSF4 vector is channel-major, feature-minor:
//! `[ch0.lscale, ch0.mfl, ch0.msr, ch0.wamp, ch1.lscale, ...]`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmgSession, N_CHANNELS};
use crate::dsp::{frame_signal, FilterChain, Frame, FrameSpec};
use crate::error::{Error, Result};

pub const FEATURES_PER_CHANNEL: usize = 4;
pub const LSF4_DIM: usize = N_CHANNELS * FEATURES_PER_CHANNEL;
pub const FEATURE_NAMES: [&str; FEATURES_PER_CHANNEL] = ["lscale", "mfl", "msr", "wamp"];
/// Version tag of the flattened layout, stored in model files.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

const MFL_FLOOR: f64 = 1e-12;
const STD_FLOOR: f64 = 1e-8;

pub fn feature_layout() -> Vec<String> {
    (0..N_CHANNELS)
        .flat_map(|ch| FEATURE_NAMES.iter().map(move |f| format!("ch{ch}.{f}")))
        .collect()
}

pub fn mav(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::InvalidInput("MAV of an empty window".into()));
    }
    Ok(window.iter().map(|x| x.abs()).sum::<f64>() / window.len() as f64)
}

/// Unbiased sample L-scale (second L-moment) from the sorted window.
pub fn l_scale(window: &[f64]) -> Result<f64> {
    let n = window.len();
    if n < 2 {
        return Err(Error::InvalidInput("L-scale needs at least 2 samples".into()));
    }
    let mut sorted = window.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let b0 = sorted.iter().sum::<f64>() / nf;
    let b1 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| x * i as f64)
        .sum::<f64>()
        / (nf * (nf - 1.0));
    Ok(2.0 * b1 - b0)
}

/// Maximum fractal length: `log10(sqrt(sum of squared first differences))`,
/// floored at `log10(1e-12)` for constant windows.
pub fn mfl(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::InvalidInput("MFL needs at least 2 samples".into()));
    }
    let ss: f64 = window.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(ss.sqrt().max(MFL_FLOOR).log10())
}

/// Mean squared root, on magnitudes.
pub fn msr(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::InvalidInput("MSR of an empty window".into()));
    }
    Ok(window.iter().map(|x| x.abs().sqrt()).sum::<f64>() / window.len() as f64)
}

pub fn wamp(window: &[f64], threshold: f64) -> usize {
    window
        .windows(2)
        .filter(|w| (w[1] - w[0]).abs() > threshold)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub wamp_threshold: f64,
}

/// Default Willison threshold: twice the standard deviation of NM signal.
pub fn estimate_wamp_threshold(nm_samples: &[f64]) -> Result<f64> {
    if nm_samples.len() < 2 {
        return Err(Error::InvalidInput("need NM samples to estimate WAMP threshold".into()));
    }
    let n = nm_samples.len() as f64;
    let mean = nm_samples.iter().sum::<f64>() / n;
    let var = nm_samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(2.0 * var.sqrt())
}

/// Ordered feature frames of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    /// `frames x LSF4_DIM`.
    pub lsf4: Array2<f64>,
    /// `frames x channels`.
    pub mav: Array2<f64>,
    /// First sample of each frame.
    pub starts: Vec<usize>,
    pub frame_len: usize,
    pub sample_rate: f64,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Center of frame `k`, seconds.
    pub fn center_time(&self, k: usize) -> f64 {
        (self.starts[k] as f64 + self.frame_len as f64 / 2.0) / self.sample_rate
    }

    pub fn summed_mav(&self) -> Array1<f64> {
        self.mav.sum_axis(Axis(1))
    }

    pub fn select(&self, idx: &[usize]) -> FrameSequence {
        FrameSequence {
            lsf4: self.lsf4.select(Axis(0), idx),
            mav: self.mav.select(Axis(0), idx),
            starts: idx.iter().map(|&i| self.starts[i]).collect(),
            frame_len: self.frame_len,
            sample_rate: self.sample_rate,
        }
    }
}

/// LSF4 vector and per-channel MAV of a single frame.
pub fn frame_features(frame: ArrayView2<f64>, cfg: &FeatureConfig) -> Result<([f64; LSF4_DIM], [f64; N_CHANNELS])> {
    if frame.nrows() != N_CHANNELS {
        return Err(Error::Dimension { expected: N_CHANNELS, got: frame.nrows() });
    }
    let mut lsf4 = [0.0; LSF4_DIM];
    let mut mavs = [0.0; N_CHANNELS];
    let mut buf = Vec::with_capacity(frame.ncols());
    for (ch, row) in frame.rows().into_iter().enumerate() {
        buf.clear();
        buf.extend(row.iter().copied());
        let base = ch * FEATURES_PER_CHANNEL;
        lsf4[base] = l_scale(&buf)?;
        lsf4[base + 1] = mfl(&buf)?;
        lsf4[base + 2] = msr(&buf)?;
        lsf4[base + 3] = wamp(&buf, cfg.wamp_threshold) as f64;
        mavs[ch] = mav(&buf)?;
    }
    Ok((lsf4, mavs))
}

pub fn extract_features(frames: &[Frame<'_>], cfg: &FeatureConfig, sample_rate: f64) -> Result<FrameSequence> {
    let n = frames.len();
    let frame_len = frames.first().map(|f| f.data.ncols()).unwrap_or(0);
    let mut lsf4 = Array2::zeros((n, LSF4_DIM));
    let mut mavs = Array2::zeros((n, N_CHANNELS));
    for (k, frame) in frames.iter().enumerate() {
        let (l, m) = frame_features(frame.data, cfg)?;
        lsf4.row_mut(k).assign(&ArrayView1::from(&l[..]));
        mavs.row_mut(k).assign(&ArrayView1::from(&m[..]));
    }
    Ok(FrameSequence {
        lsf4,
        mav: mavs,
        starts: frames.iter().map(|f| f.start).collect(),
        frame_len,
        sample_rate,
    })
}

/// Filter, frame and featurize a whole session.
pub fn session_features(
    session: &EmgSession,
    chain: &FilterChain,
    frame_spec: &FrameSpec,
    cfg: &FeatureConfig,
) -> Result<FrameSequence> {
    let filtered = chain.apply(session.signal_f64().view())?;
    let frames = frame_signal(&filtered, frame_spec)?;
    extract_features(&frames, cfg, session.sample_rate)
}

/// Per-feature z-scoring fitted on training data (population statistics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: ArrayView2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "standardizer needs at least 2 frames, got {n}"
            )));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let std = features
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &m)| {
                let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean: mean.to_vec(), std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: features.ncols() });
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            self.apply_row_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(out)
    }

    pub fn apply_row_in_place(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// O(n^2) pairwise L-scale: half the mean absolute difference over pairs.
    fn l_scale_pairwise(x: &[f64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += (x[i] - x[j]).abs();
            }
        }
        0.5 * s / (n * (n - 1) / 2) as f64
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hand_examples() {
        assert_eq!(mav(&[1.0, -1.0, 2.0, -2.0]).unwrap(), 1.5);
        assert_eq!(mav(&[0.0; 8]).unwrap(), 0.0);
        assert!(mav(&[]).is_err());
        assert_eq!(l_scale(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(l_scale(&[3.0; 10]).unwrap(), 0.0);
        assert!(l_scale(&[1.0]).is_err());
        assert!((mfl(&[0.0, 1.0, 0.0]).unwrap() - 2f64.sqrt().log10()).abs() < 1e-15);
        assert_eq!(mfl(&[2.0; 5]).unwrap(), -12.0);
        assert_eq!(msr(&[1.0, 4.0]).unwrap(), 1.5);
        assert_eq!(msr(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(wamp(&[0.0, 0.1, 0.1, 0.5], 0.05), 2);
        assert_eq!(wamp(&[1.0; 9], 0.05), 0);
    }

    #[test]
    fn random_windows_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.gen_range(2..400);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!(rel_err(l_scale(&x).unwrap(), l_scale_pairwise(&x)) < 1e-10);
            let brute_mav = x.iter().fold(0.0, |s, v| s + v.abs()) / n as f64;
            assert!(rel_err(mav(&x).unwrap(), brute_mav) < 1e-10);
        }
    }

    #[test]
    fn layout_is_channel_major() {
        let l = feature_layout();
        assert_eq!(l.len(), 24);
        assert_eq!(l[0], "ch0.lscale");
        assert_eq!(l[5], "ch1.mfl");
        assert_eq!(l[23], "ch5.wamp");
    }

    #[test]
    fn extraction_is_compositional() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sig = Array2::from_shape_fn((6, 2000), |_| rng.gen_range(-1.0..1.0));
        let frames = frame_signal(&sig, &FrameSpec::default()).unwrap();
        let cfg = FeatureConfig { wamp_threshold: 0.3 };
        let seq = extract_features(&frames, &cfg, 2000.0).unwrap();
        assert_eq!(seq.lsf4.dim(), (63, 24));
        assert_eq!(seq.mav.dim(), (63, 6));
        let k = 17;
        let row: Vec<f64> = sig.row(3).slice(ndarray::s![k * 27..k * 27 + 324]).to_vec();
        assert_eq!(seq.lsf4[[k, 12]], l_scale(&row).unwrap());
        assert_eq!(seq.lsf4[[k, 15]], wamp(&row, 0.3) as f64);
        assert_eq!(seq.mav[[k, 3]], mav(&row).unwrap());
    }

    #[test]
    fn standardizer_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Array2::from_shape_fn((500, 4), |_| rng.gen_range(-5.0..20.0));
        x.column_mut(2).fill(7.0);
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        for j in 0..4 {
            let col = z.column(j);
            let m = col.mean().unwrap();
            assert!(m.abs() < 1e-9);
            if j != 2 {
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 500.0).sqrt();
                assert!((sd - 1.0).abs() < 1e-6);
            } else {
                assert!(col.iter().all(|&v| v == 0.0));
            }
        }
        // held-out data uses the training statistics
        let held = Array2::from_elem((3, 4), 100.0);
        let zh = s.apply(held.view()).unwrap();
        assert_eq!(zh[[0, 0]], (100.0 - s.mean[0]) / s.std[0]);
        assert!(Standardizer::fit(x.slice(ndarray::s![..1, ..])).is_err());
    }

    proptest! {
        #[test]
        fn frame_permutation_permutes_outputs(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sig = Array2::from_shape_fn((6, 700), |_| rng.gen_range(-1.0..1.0));
            let frames = frame_signal(&sig, &FrameSpec::default()).unwrap();
            let cfg = FeatureConfig { wamp_threshold: 0.2 };
            let fwd = extract_features(&frames, &cfg, 2000.0).unwrap();
            let rev_frames: Vec<_> = frames.iter().rev().cloned().collect();
            let rev = extract_features(&rev_frames, &cfg, 2000.0).unwrap();
            let n = frames.len();
            for k in 0..n {
                prop_assert_eq!(fwd.lsf4.row(k), rev.lsf4.row(n - 1 - k));
                prop_assert_eq!(fwd.mav.row(k), rev.mav.row(n - 1 - k));
            }
        }
    }
}
