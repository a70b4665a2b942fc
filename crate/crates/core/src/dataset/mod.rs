//! Sessions, prompt timelines, synthetic sEMG and the session file format.

mod io;
mod protocol;
mod synth;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_session, write_session, SESSION_MAGIC};
pub use protocol::{make_continuous_protocol, make_ramp_protocol};
pub use synth::{
    default_gain_matrix, synthesize_session, synthesize_session_with_truth, EmgSynth, GainMatrix,
    GroundTruth, SynthProfile,
};

pub const N_CHANNELS: usize = 6;
pub const N_CLASSES: usize = 7;
pub const SAMPLE_RATE: f64 = 2000.0;

/// The seven motion classes. `NM` is the inactive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionClass {
    WF,
    WE,
    WP,
    WS,
    HC,
    HO,
    NM,
}

impl MotionClass {
    pub const ALL: [MotionClass; N_CLASSES] = [
        MotionClass::WF,
        MotionClass::WE,
        MotionClass::WP,
        MotionClass::WS,
        MotionClass::HC,
        MotionClass::HO,
        MotionClass::NM,
    ];

    pub const ACTIVE: [MotionClass; 6] = [
        MotionClass::WF,
        MotionClass::WE,
        MotionClass::WP,
        MotionClass::WS,
        MotionClass::HC,
        MotionClass::HO,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<MotionClass> {
        Self::ALL.get(i).copied()
    }

    pub fn is_active(self) -> bool {
        self != MotionClass::NM
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotionClass::WF => "WF",
            MotionClass::WE => "WE",
            MotionClass::WP => "WP",
            MotionClass::WS => "WS",
            MotionClass::HC => "HC",
            MotionClass::HO => "HO",
            MotionClass::NM => "NM",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown motion class {s:?}")))
    }
}

/// One visual prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub class: MotionClass,
    /// Seconds from the start of the recording.
    pub onset: f64,
    pub duration: f64,
}

impl Prompt {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Ordered, non-overlapping prompts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptTimeline {
    prompts: Vec<Prompt>,
}

impl PromptTimeline {
    pub fn new(prompts: Vec<Prompt>) -> Result<Self> {
        for p in &prompts {
            if !(p.duration > 0.0) || !p.onset.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "prompt {} has invalid onset/duration ({}, {})",
                    p.class, p.onset, p.duration
                )));
            }
        }
        for w in prompts.windows(2) {
            if w[1].onset <= w[0].onset {
                return Err(Error::InvalidInput("prompt onsets must increase".into()));
            }
            if w[1].onset < w[0].end() - 1e-9 {
                return Err(Error::InvalidInput("prompts overlap".into()));
            }
        }
        Ok(Self { prompts })
    }

    /// Back-to-back prompts starting at t = 0.
    pub fn contiguous(classes: &[MotionClass], duration: f64) -> Result<Self> {
        let prompts = classes
            .iter()
            .enumerate()
            .map(|(i, &class)| Prompt {
                class,
                onset: i as f64 * duration,
                duration,
            })
            .collect();
        Self::new(prompts)
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// End of the last prompt, in seconds.
    pub fn span(&self) -> f64 {
        self.prompts.last().map(Prompt::end).unwrap_or(0.0)
    }

    /// Index of the prompt active at time `t` (onset inclusive, end exclusive).
    pub fn prompt_index_at(&self, t: f64) -> Option<usize> {
        let idx = self.prompts.partition_point(|p| p.onset <= t);
        if idx == 0 {
            return None;
        }
        let p = &self.prompts[idx - 1];
        (t < p.end()).then_some(idx - 1)
    }

    pub fn class_at(&self, t: f64) -> Option<MotionClass> {
        self.prompt_index_at(t).map(|i| self.prompts[i].class)
    }

    /// Copy with every onset shifted by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            prompts: self
                .prompts
                .iter()
                .map(|p| Prompt {
                    onset: p.onset + dt,
                    ..*p
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Ramp,
    Continuous,
    Fitts,
}

impl SessionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionKind::Ramp => "ramp",
            SessionKind::Continuous => "continuous",
            SessionKind::Fitts => "fitts",
        }
    }
}

impl FromStr for SessionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(SessionKind::Ramp),
            "continuous" => Ok(SessionKind::Continuous),
            "fitts" => Ok(SessionKind::Fitts),
            other => Err(Error::InvalidInput(format!("unknown session kind {other:?}"))),
        }
    }
}

/// A multichannel recording with its prompt timeline.
///
/// Samples are stored as `f32`, channel-major (`channels x samples`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmgSession {
    pub signal: Array2<f32>,
    pub sample_rate: f64,
    pub timeline: PromptTimeline,
    pub kind: SessionKind,
}

impl EmgSession {
    pub fn new(
        signal: Array2<f32>,
        sample_rate: f64,
        timeline: PromptTimeline,
        kind: SessionKind,
    ) -> Result<Self> {
        if signal.nrows() != N_CHANNELS {
            return Err(Error::ChannelCount {
                expected: N_CHANNELS,
                found: signal.nrows(),
            });
        }
        let needed = (timeline.span() * sample_rate).round() as usize;
        if signal.ncols() < needed {
            return Err(Error::SignalTooShort {
                needed,
                got: signal.ncols(),
            });
        }
        Ok(Self {
            signal,
            sample_rate,
            timeline,
            kind,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.signal.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate
    }

    /// Signal as `f64`, the working precision of the DSP chain.
    pub fn signal_f64(&self) -> Array2<f64> {
        self.signal.mapv(f64::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_roundtrip_and_indexing() {
        assert_eq!(MotionClass::ALL.len(), 7);
        for (i, c) in MotionClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.as_str().parse::<MotionClass>().unwrap(), *c);
        }
        assert!(!MotionClass::NM.is_active());
        assert!(MotionClass::ACTIVE.iter().all(|c| c.is_active()));
    }

    #[test]
    fn timeline_rejects_overlap_and_lookup_is_half_open() {
        let bad = PromptTimeline::new(vec![
            Prompt { class: MotionClass::WF, onset: 0.0, duration: 3.0 },
            Prompt { class: MotionClass::WE, onset: 2.0, duration: 3.0 },
        ]);
        assert!(bad.is_err());
        let tl = PromptTimeline::contiguous(&[MotionClass::WF, MotionClass::WE], 3.0).unwrap();
        assert_eq!(tl.class_at(0.0), Some(MotionClass::WF));
        assert_eq!(tl.class_at(2.999), Some(MotionClass::WF));
        assert_eq!(tl.class_at(3.0), Some(MotionClass::WE));
        assert_eq!(tl.class_at(6.0), None);
        assert_eq!(tl.class_at(-0.1), None);
    }

    #[test]
    fn session_checks_channels() {
        let tl = PromptTimeline::contiguous(&[MotionClass::NM], 0.01).unwrap();
        let sig = Array2::<f32>::zeros((5, 20));
        assert!(matches!(
            EmgSession::new(sig, SAMPLE_RATE, tl, SessionKind::Ramp),
            Err(Error::ChannelCount { expected: 6, found: 5 })
        ));
    }
}
