//! Zero-phase band-pass/notch filtering and overlapping framing.
//!
//! Filters are kept as cascades of second-order sections. `filtfilt` runs
//! each cascade forward and backward over an odd-symmetric extension of the
//! signal, seeding every pass with steady-state initial conditions.

use nalgebra::Complex;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub band_low: f64,
    pub band_high: f64,
    /// Total order of the band-pass (twice the low-pass prototype order).
    pub band_order: usize,
    pub notch_freq: f64,
    /// -3 dB bandwidth of the notch, Hz. Q = notch_freq / notch_bandwidth.
    pub notch_bandwidth: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            band_low: 20.0,
            band_high: 450.0,
            band_order: 4,
            notch_freq: 60.0,
            notch_bandwidth: 2.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(0.0 < self.band_low && self.band_low < self.band_high && self.band_high < fs / 2.0) {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < {} < {} < {}",
                self.band_low,
                self.band_high,
                fs / 2.0
            )));
        }
        if self.band_order < 2 || self.band_order % 2 != 0 {
            return Err(Error::Config(format!(
                "band order must be even and >= 2, got {}",
                self.band_order
            )));
        }
        if !(0.0 < self.notch_freq && self.notch_freq < fs / 2.0) || !(self.notch_bandwidth > 0.0) {
            return Err(Error::Config("invalid notch parameters".into()));
        }
        Ok(())
    }
}

/// One biquad: `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Section>,
}

/// Transposed direct form II delay line, two values per section.
pub type SosState = Vec<[f64; 2]>;

impl SosFilter {
    pub fn zero_state(&self) -> SosState {
        vec![[0.0; 2]; self.sections.len()]
    }

    /// Order of the equivalent transfer function.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    #[inline]
    pub fn step(&self, state: &mut SosState, x: f64) -> f64 {
        let mut v = x;
        for (sec, z) in self.sections.iter().zip(state.iter_mut()) {
            let [b0, b1, b2, a1, a2] = *sec;
            let y = b0 * v + z[0];
            z[0] = b1 * v - a1 * y + z[1];
            z[1] = b2 * v - a2 * y;
            v = y;
        }
        v
    }

    /// Steady-state initial conditions for a unit step input.
    pub fn step_initial_state(&self) -> SosState {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|&[b0, b1, b2, a1, a2]| {
                let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
                let z1 = b2 - a2 * gain;
                let z0 = b1 - a1 * gain + z1;
                let zi = [scale * z0, scale * z1];
                scale *= gain;
                zi
            })
            .collect()
    }

    pub fn response(&self, freq: f64, fs: f64) -> Complex<f64> {
        let w = 2.0 * std::f64::consts::PI * freq / fs;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, &[b0, b1, b2, a1, a2]| {
                acc * (z1 * b1 + z2 * b2 + b0) / (z1 * a1 + z2 * a2 + 1.0)
            })
    }

    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        self.response(freq, fs).norm()
    }

    /// Poles of every section.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.sections
            .iter()
            .flat_map(|&[_, _, _, a1, a2]| {
                let disc = Complex::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                [(-disc - a1) / 2.0, (disc - a1) / 2.0]
            })
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    fn filter_in_place(&self, data: &mut [f64], mut state: SosState) {
        for x in data.iter_mut() {
            *x = self.step(&mut state, *x);
        }
    }

    /// Zero-phase forward-backward filtering of one channel.
    pub fn filtfilt(&self, signal: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = signal.len();
        let padlen = 3 * self.order();
        if n <= padlen {
            return Err(Error::SignalTooShort { needed: padlen, got: n });
        }
        let x: Vec<f64> = signal.iter().copied().collect();
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=padlen).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(&x);
        ext.extend((1..=padlen).map(|i| 2.0 * last - x[n - 1 - i]));

        let zi = self.step_initial_state();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<SosState>();
        let x0 = ext[0];
        self.filter_in_place(&mut ext, scaled(x0));
        ext.reverse();
        let y0 = ext[0];
        self.filter_in_place(&mut ext, scaled(y0));
        ext.reverse();
        Ok(Array1::from(ext[padlen..padlen + n].to_vec()))
    }
}

/// Butterworth band-pass via the bilinear transform with pre-warped edges.
pub fn design_bandpass(spec: &FilterSpec, fs: f64) -> Result<SosFilter> {
    spec.validate(fs)?;
    let proto_order = spec.band_order / 2;
    let c = 2.0 * fs;
    let w1 = c * (std::f64::consts::PI * spec.band_low / fs).tan();
    let w2 = c * (std::f64::consts::PI * spec.band_high / fs).tan();
    let bw = w2 - w1;
    let w0sq = w1 * w2;

    // analog band-pass poles from each prototype pole, then bilinear map
    let mut poles: Vec<Complex<f64>> = Vec::with_capacity(2 * proto_order);
    for k in 0..proto_order {
        let theta = std::f64::consts::PI * (2 * k + proto_order + 1) as f64 / (2 * proto_order) as f64;
        let p = Complex::from_polar(1.0, theta);
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            poles.push((s + c) / (-s + c));
        }
    }
    let sections = pair_poles(&poles)
        .into_iter()
        .map(|(a1, a2)| [1.0, 0.0, -1.0, a1, a2])
        .collect();
    let mut filter = SosFilter { sections };

    // unit gain at the digital image of the analog center frequency
    let f_center = fs / std::f64::consts::PI * (w0sq.sqrt() / c).atan();
    let g = filter.magnitude(f_center, fs);
    let per_section = g.powf(-1.0 / filter.sections.len() as f64);
    for sec in filter.sections.iter_mut() {
        sec[0] *= per_section;
        sec[2] *= per_section;
    }
    Ok(filter)
}

/// Groups digital poles into real-coefficient biquads `(a1, a2)`.
fn pair_poles(poles: &[Complex<f64>]) -> Vec<(f64, f64)> {
    const TOL: f64 = 1e-10;
    let mut complex: Vec<Complex<f64>> = poles.iter().copied().filter(|p| p.im > TOL).collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= TOL).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = complex
        .iter()
        .map(|p| (-2.0 * p.re, p.norm_sqr()))
        .collect();
    for pair in real.chunks(2) {
        match *pair {
            [r1, r2] => out.push((-(r1 + r2), r1 * r2)),
            [r] => out.push((-r, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

/// Second-order IIR notch (Q = freq / bandwidth).
pub fn design_notch(freq: f64, bandwidth: f64, fs: f64) -> Result<SosFilter> {
    if !(0.0 < freq && freq < fs / 2.0) || !(bandwidth > 0.0) {
        return Err(Error::Config("invalid notch parameters".into()));
    }
    let w0 = 2.0 * std::f64::consts::PI * freq / fs;
    let bw = 2.0 * std::f64::consts::PI * bandwidth / fs;
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let cw = w0.cos();
    Ok(SosFilter {
        sections: vec![[gain, -2.0 * gain * cw, gain, -2.0 * gain * cw, 2.0 * gain - 1.0]],
    })
}

/// Band-pass followed by notch, both applied zero-phase.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterChain {
    pub bandpass: SosFilter,
    pub notch: SosFilter,
}

impl FilterChain {
    pub fn new(spec: &FilterSpec, fs: f64) -> Result<Self> {
        Ok(Self {
            bandpass: design_bandpass(spec, fs)?,
            notch: design_notch(spec.notch_freq, spec.notch_bandwidth, fs)?,
        })
    }

    pub fn apply(&self, signal: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(signal.raw_dim());
        for (ch, row) in signal.rows().into_iter().enumerate() {
            let y = self.bandpass.filtfilt(row)?;
            let y = self.notch.filtfilt(y.view())?;
            out.row_mut(ch).assign(&y);
        }
        Ok(out)
    }
}

/// Convenience: zero-phase filtering of a multichannel signal with one cascade.
pub fn filtfilt(filter: &SosFilter, signal: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(signal.raw_dim());
    for (ch, row) in signal.rows().into_iter().enumerate() {
        out.row_mut(ch).assign(&filter.filtfilt(row)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub frame_inc: usize,
}

impl Default for FrameSpec {
    /// 162 ms frames advanced by 13.5 ms at 2 kHz.
    fn default() -> Self {
        Self::from_ms(162.0, 13.5, 2000.0)
    }
}

impl FrameSpec {
    pub fn from_ms(len_ms: f64, inc_ms: f64, fs: f64) -> Self {
        Self {
            frame_len: (len_ms * fs / 1000.0).round() as usize,
            frame_inc: (inc_ms * fs / 1000.0).round() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_inc == 0 || self.frame_len < self.frame_inc {
            return Err(Error::Config(format!(
                "frame_len {} must be >= frame_inc {} >= 1",
                self.frame_len, self.frame_inc
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            (samples - self.frame_len) / self.frame_inc + 1
        }
    }

    /// Frame increment in seconds.
    pub fn increment_secs(&self, fs: f64) -> f64 {
        self.frame_inc as f64 / fs
    }
}

/// A view of one frame: `channels x frame_len`.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    pub start: usize,
    pub data: ArrayView2<'a, f64>,
}

pub fn frame_signal<'a>(signal: &'a Array2<f64>, spec: &FrameSpec) -> Result<Vec<Frame<'a>>> {
    spec.validate()?;
    let n = signal.ncols();
    if n < spec.frame_len {
        return Err(Error::SignalTooShort {
            needed: spec.frame_len,
            got: n,
        });
    }
    Ok((0..spec.frame_count(n))
        .map(|k| {
            let start = k * spec.frame_inc;
            Frame {
                start,
                data: signal.slice(s![.., start..start + spec.frame_len]),
            }
        })
        .collect())
}
