//! Synthetic sEMG.
//!
//! Each channel is band-limited (20-450 Hz) Gaussian noise normalized to unit
//! mean absolute value and amplitude-modulated by an envelope
//! `noise_floor + gain[class][channel] * intensity(t)`. Continuous trials
//! cross-fade between class patterns after a random reaction delay.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmgSession, MotionClass, PromptTimeline, SessionKind, N_CHANNELS, N_CLASSES, SAMPLE_RATE};
use crate::dsp::{design_bandpass, FilterSpec, SosFilter, SosState};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub type GainMatrix = [[f64; N_CHANNELS]; N_CLASSES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthProfile {
    /// Rows follow [`MotionClass::ALL`]; the NM row must be zero.
    pub gain_matrix: GainMatrix,
    pub noise_floor: f64,
    /// Cross-fade duration between class patterns, seconds.
    pub transition_time: f64,
    pub rng_seed: u64,
    /// Per-trial multiplicative gain jitter (uniform, +/- fraction).
    pub gain_jitter: f64,
    /// Held intensity for continuous prompts.
    pub steady_intensity: f64,
    /// Per-prompt intensity jitter (uniform, +/- fraction).
    pub intensity_jitter: f64,
    pub reaction_delay_mean: f64,
    pub reaction_delay_sd: f64,
    pub reaction_delay_min: f64,
    pub reaction_delay_max: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            gain_matrix: default_gain_matrix(),
            noise_floor: 0.05,
            transition_time: 0.25,
            rng_seed: 0,
            gain_jitter: 0.10,
            steady_intensity: 1.0,
            intensity_jitter: 0.10,
            reaction_delay_mean: 0.464,
            reaction_delay_sd: 0.050,
            reaction_delay_min: 0.300,
            reaction_delay_max: 0.700,
        }
    }
}

/// Each active class drives one channel at full gain and bleeds 30% into the
/// next channel.
pub fn default_gain_matrix() -> GainMatrix {
    let mut g = [[0.0; N_CHANNELS]; N_CLASSES];
    for (k, class) in MotionClass::ACTIVE.iter().enumerate() {
        g[class.index()][k] = 1.0;
        g[class.index()][(k + 1) % N_CHANNELS] = 0.3;
    }
    g
}

impl SynthProfile {
    pub fn validate(&self) -> Result<()> {
        let nm = &self.gain_matrix[MotionClass::NM.index()];
        if nm.iter().any(|&g| g != 0.0) {
            return Err(Error::Config("NM row of the gain matrix must be zero".into()));
        }
        for class in MotionClass::ACTIVE {
            let row = &self.gain_matrix[class.index()];
            if row.iter().any(|&g| g < 0.0) {
                return Err(Error::Config(format!("negative gain for {class}")));
            }
            if !row.iter().any(|&g| g > self.noise_floor) {
                return Err(Error::Config(format!(
                    "class {class} has no channel gain above the noise floor"
                )));
            }
        }
        if !(self.noise_floor > 0.0) || self.transition_time < 0.0 {
            return Err(Error::Config("noise floor must be > 0, transition >= 0".into()));
        }
        if !(self.reaction_delay_min <= self.reaction_delay_max) {
            return Err(Error::Config("reaction delay bounds inverted".into()));
        }
        Ok(())
    }

    /// A per-subject variant: every nonzero gain is scaled by an independent
    /// uniform factor in `1 +/- spread`, and the RNG seed is replaced.
    pub fn for_subject(&self, seed: u64, spread: f64) -> Self {
        let mut rng = rng_for(seed, &[0x5B_1EC7]);
        let mut out = self.clone();
        for row in out.gain_matrix.iter_mut() {
            for g in row.iter_mut() {
                if *g != 0.0 {
                    *g *= 1.0 + rng.gen_range(-spread..=spread);
                }
            }
        }
        out.rng_seed = seed;
        out
    }

    pub(crate) fn jittered_gains<R: Rng>(&self, rng: &mut R) -> GainMatrix {
        let mut g = self.gain_matrix;
        for row in g.iter_mut() {
            for v in row.iter_mut() {
                if self.gain_jitter > 0.0 {
                    *v *= 1.0 + rng.gen_range(-self.gain_jitter..=self.gain_jitter);
                }
            }
        }
        g
    }

    pub(crate) fn draw_reaction_delay<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.reaction_delay_sd <= 0.0 {
            return self
                .reaction_delay_mean
                .clamp(self.reaction_delay_min, self.reaction_delay_max);
        }
        let normal = Normal::new(self.reaction_delay_mean, self.reaction_delay_sd)
            .expect("finite reaction delay parameters");
        // rejection sampling for the truncated normal; fall back to clamping
        for _ in 0..1000 {
            let d = normal.sample(rng);
            if (self.reaction_delay_min..=self.reaction_delay_max).contains(&d) {
                return d;
            }
        }
        self.reaction_delay_mean
            .clamp(self.reaction_delay_min, self.reaction_delay_max)
    }

    fn draw_intensity<R: Rng>(&self, rng: &mut R) -> f64 {
        let j = if self.intensity_jitter > 0.0 {
            rng.gen_range(-self.intensity_jitter..=self.intensity_jitter)
        } else {
            0.0
        };
        self.steady_intensity * (1.0 + j)
    }
}

/// Streaming band-limited noise source, one independent generator per channel.
#[derive(Debug, Clone)]
pub struct EmgSynth {
    filter: SosFilter,
    states: Vec<SosState>,
    scale: f64,
    rng: ChaCha8Rng,
}

impl EmgSynth {
    pub fn new(seed: u64, stream: u64) -> Self {
        let spec = FilterSpec::default();
        let filter = design_bandpass(&spec, SAMPLE_RATE).expect("default band-pass is valid");
        let states = (0..N_CHANNELS).map(|_| filter.zero_state()).collect();
        let scale = unit_mav_scale(&filter);
        Self {
            filter,
            states,
            scale,
            rng: rng_for(seed, &[0xE_3C, stream]),
        }
    }

    /// Next sample for every channel, modulated by `envelope`.
    pub fn sample(&mut self, envelope: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
        let mut out = [0.0; N_CHANNELS];
        for ch in 0..N_CHANNELS {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            let y = self.filter.step(&mut self.states[ch], w);
            out[ch] = envelope[ch] * y * self.scale;
        }
        out
    }

    /// Warms the filter states so output starts in steady state.
    pub fn warm_up(&mut self, n: usize) {
        let env = [0.0; N_CHANNELS];
        for _ in 0..n {
            self.sample(&env);
        }
    }
}

/// Scale that maps unit-variance white noise, after `filter`, to unit MAV.
fn unit_mav_scale(filter: &SosFilter) -> f64 {
    let mut state = filter.zero_state();
    let mut energy = 0.0;
    for n in 0..16_384 {
        let x = if n == 0 { 1.0 } else { 0.0 };
        let y = filter.step(&mut state, x);
        energy += y * y;
    }
    // Gaussian with std s has MAV s * sqrt(2/pi)
    (std::f64::consts::PI / 2.0).sqrt() / energy.sqrt()
}

/// Intent onsets actually used by the synthesizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// (class, time at which the user starts moving toward it, seconds).
    pub intent_onsets: Vec<(MotionClass, f64)>,
}

impl GroundTruth {
    pub fn class_at(&self, t: f64) -> MotionClass {
        let idx = self.intent_onsets.partition_point(|&(_, on)| on <= t);
        if idx == 0 {
            MotionClass::NM
        } else {
            self.intent_onsets[idx - 1].0
        }
    }

    pub fn reaction_delays(&self, timeline: &PromptTimeline) -> Vec<f64> {
        timeline
            .prompts()
            .iter()
            .zip(&self.intent_onsets)
            .map(|(p, &(_, on))| on - p.onset)
            .collect()
    }
}

pub fn synthesize_session(
    timeline: &PromptTimeline,
    profile: &SynthProfile,
    kind: SessionKind,
    stream: u64,
) -> Result<EmgSession> {
    synthesize_session_with_truth(timeline, profile, kind, stream).map(|(s, _)| s)
}

/// Synthesizes a session; `stream` distinguishes trials drawn from the same
/// profile seed.
pub fn synthesize_session_with_truth(
    timeline: &PromptTimeline,
    profile: &SynthProfile,
    kind: SessionKind,
    stream: u64,
) -> Result<(EmgSession, GroundTruth)> {
    profile.validate()?;
    let mut rng = rng_for(profile.rng_seed, &[0x7E_1A, stream]);
    let gains = profile.jittered_gains(&mut rng);
    let n = (timeline.span() * SAMPLE_RATE).round() as usize;
    let fs = SAMPLE_RATE;

    let (segments, truth) = match kind {
        SessionKind::Ramp => {
            let onsets = timeline.prompts().iter().map(|p| (p.class, p.onset)).collect();
            (Vec::new(), GroundTruth { intent_onsets: onsets })
        }
        SessionKind::Continuous | SessionKind::Fitts => {
            let segs: Vec<(MotionClass, f64, f64)> = timeline
                .prompts()
                .iter()
                .map(|p| {
                    let delay = profile.draw_reaction_delay(&mut rng);
                    (p.class, p.onset + delay, profile.draw_intensity(&mut rng))
                })
                .collect();
            let onsets = segs.iter().map(|&(c, on, _)| (c, on)).collect();
            (segs, GroundTruth { intent_onsets: onsets })
        }
    };

    let mut synth = EmgSynth::new(profile.rng_seed, stream);
    synth.warm_up(2048);
    let mut signal = Array2::<f32>::zeros((N_CHANNELS, n));
    let floor = [profile.noise_floor; N_CHANNELS];
    let mut seg_idx = 0usize;
    for i in 0..n {
        let t = i as f64 / fs;
        let mut env = floor;
        match kind {
            SessionKind::Ramp => {
                if let Some(pi) = timeline.prompt_index_at(t) {
                    let p = &timeline.prompts()[pi];
                    let intensity = ((t - p.onset) / p.duration).clamp(0.0, 1.0);
                    let row = &gains[p.class.index()];
                    for ch in 0..N_CHANNELS {
                        env[ch] += row[ch] * intensity;
                    }
                }
            }
            SessionKind::Continuous | SessionKind::Fitts => {
                while seg_idx < segments.len() && segments[seg_idx].1 <= t {
                    seg_idx += 1;
                }
                if seg_idx > 0 {
                    let (cur_class, cur_on, cur_int) = segments[seg_idx - 1];
                    let (prev_class, prev_int) = if seg_idx >= 2 {
                        (segments[seg_idx - 2].0, segments[seg_idx - 2].2)
                    } else {
                        (MotionClass::NM, 0.0)
                    };
                    let alpha = if profile.transition_time > 0.0 {
                        ((t - cur_on) / profile.transition_time).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    let cur = &gains[cur_class.index()];
                    let prev = &gains[prev_class.index()];
                    for ch in 0..N_CHANNELS {
                        env[ch] += alpha * cur[ch] * cur_int + (1.0 - alpha) * prev[ch] * prev_int;
                    }
                }
            }
        }
        let s = synth.sample(&env);
        for ch in 0..N_CHANNELS {
            signal[[ch, i]] = s[ch] as f32;
        }
    }
    let session = EmgSession::new(signal, fs, timeline.clone(), kind)?;
    Ok((session, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Prompt;

    fn mav(xs: impl Iterator<Item = f32>) -> f64 {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + (x as f64).abs(), n + 1));
        s / n as f64
    }

    #[test]
    fn nm_only_session_sits_at_noise_floor() {
        let tl = PromptTimeline::contiguous(&[MotionClass::NM; 3], 3.0).unwrap();
        let profile = SynthProfile::default();
        let s = synthesize_session(&tl, &profile, SessionKind::Continuous, 0).unwrap();
        for ch in 0..N_CHANNELS {
            let m = mav(s.signal.row(ch).iter().copied());
            assert!((m / profile.noise_floor - 1.0).abs() < 0.2, "channel {ch}: {m}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let tl = PromptTimeline::contiguous(&[MotionClass::WF, MotionClass::HC], 1.0).unwrap();
        let p = SynthProfile::default();
        let a = synthesize_session(&tl, &p, SessionKind::Continuous, 3).unwrap();
        let b = synthesize_session(&tl, &p, SessionKind::Continuous, 3).unwrap();
        assert_eq!(a, b);
        let q = SynthProfile { rng_seed: 99, ..p.clone() };
        let c = synthesize_session(&tl, &q, SessionKind::Continuous, 3).unwrap();
        assert_ne!(a.signal, c.signal);
    }

    #[test]
    fn active_channel_stands_out_in_steady_state() {
        let mut profile = SynthProfile { gain_jitter: 0.0, intensity_jitter: 0.0, ..Default::default() };
        profile.gain_matrix[MotionClass::WF.index()][0] = 10.0 * profile.noise_floor;
        let tl = PromptTimeline::new(vec![
            Prompt { class: MotionClass::NM, onset: 0.0, duration: 3.0 },
            Prompt { class: MotionClass::WF, onset: 3.0, duration: 3.0 },
        ])
        .unwrap();
        let s = synthesize_session(&tl, &profile, SessionKind::Continuous, 0).unwrap();
        let row = s.signal.row(0);
        let nm = mav(row.iter().take(4000).copied());
        let wf = mav(row.iter().skip(9000).take(3000).copied());
        assert!(wf > 5.0 * nm, "wf {wf} nm {nm}");
    }

    #[test]
    fn reaction_delays_are_truncated() {
        let tl = PromptTimeline::contiguous(&[MotionClass::WF, MotionClass::WE, MotionClass::NM], 3.0)
            .unwrap();
        let p = SynthProfile::default();
        for stream in 0..20 {
            let (_, truth) =
                synthesize_session_with_truth(&tl, &p, SessionKind::Continuous, stream).unwrap();
            for d in truth.reaction_delays(&tl) {
                assert!((0.3..=0.7).contains(&d));
            }
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = SynthProfile::default();
        p.gain_matrix[MotionClass::NM.index()][2] = 0.1;
        assert!(p.validate().is_err());
        let mut p = SynthProfile::default();
        p.gain_matrix[MotionClass::HO.index()] = [0.01; N_CHANNELS];
        assert!(p.validate().is_err());
        assert!(SynthProfile::default().validate().is_ok());
    }
}
