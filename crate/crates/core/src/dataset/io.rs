//! Session container: a line-oriented text header followed by little-endian
//! `f32` samples, channel-major.
//!
//! ```text
//! MYOSESSION
//! version 1
//! channels 6
//! sample_rate 2000
//! samples <n>
//! kind <ramp|continuous|fitts>
//! prompts <k>
//! <class> <onset> <duration>      (k lines)
//! end
//! <payload: channels * samples * 4 bytes>
//! ```
//!
//! Floats in the header use Rust's shortest round-trip formatting, so
//! `read_session(write_session(s)) == s` bit for bit.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{EmgSession, MotionClass, Prompt, PromptTimeline, SessionKind, N_CHANNELS};
use crate::error::{Error, Result};

pub const SESSION_MAGIC: &str = "MYOSESSION";
const VERSION: u32 = 1;

pub fn encode_session(session: &EmgSession) -> Vec<u8> {
    let mut header = String::new();
    header.push_str(SESSION_MAGIC);
    header.push('\n');
    header.push_str(&format!("version {VERSION}\n"));
    header.push_str(&format!("channels {}\n", session.signal.nrows()));
    header.push_str(&format!("sample_rate {:?}\n", session.sample_rate));
    header.push_str(&format!("samples {}\n", session.signal.ncols()));
    header.push_str(&format!("kind {}\n", session.kind.as_str()));
    header.push_str(&format!("prompts {}\n", session.timeline.len()));
    for p in session.timeline.prompts() {
        header.push_str(&format!("{} {:?} {:?}\n", p.class, p.onset, p.duration));
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    bytes.reserve(session.signal.len() * 4);
    for row in session.signal.rows() {
        for &x in row {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    bytes
}

pub fn write_session(session: &EmgSession, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_session(session))?;
    Ok(())
}

pub fn read_session(path: impl AsRef<Path>) -> Result<EmgSession> {
    decode_session(&fs::read(path)?)
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("unterminated header line".into()))?;
        self.pos += nl + 1;
        std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?;
        let value = line
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| Error::MalformedHeader(format!("expected `{key}`, found {line:?}")))?;
        value
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad value for `{key}`: {value:?}")))
    }
}

pub fn decode_session(bytes: &[u8]) -> Result<EmgSession> {
    let mut lines = Lines { bytes, pos: 0 };
    if bytes.is_empty() || lines.next_line()? != SESSION_MAGIC {
        return Err(Error::MalformedHeader("missing magic".into()));
    }
    let version: u32 = lines.field("version")?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let channels: usize = lines.field("channels")?;
    if channels != N_CHANNELS {
        return Err(Error::ChannelCount {
            expected: N_CHANNELS,
            found: channels,
        });
    }
    let sample_rate: f64 = lines.field("sample_rate")?;
    let samples: usize = lines.field("samples")?;
    let kind: String = lines.field("kind")?;
    let kind: SessionKind = kind
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad kind {kind:?}")))?;
    let n_prompts: usize = lines.field("prompts")?;
    let mut prompts = Vec::with_capacity(n_prompts);
    for _ in 0..n_prompts {
        let line = lines.next_line()?;
        let mut it = line.split(' ');
        let (Some(c), Some(o), Some(d), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(Error::MalformedHeader(format!("bad prompt line {line:?}")));
        };
        let class: MotionClass = c
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad class {c:?}")))?;
        let onset: f64 = o
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad onset {o:?}")))?;
        let duration: f64 = d
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad duration {d:?}")))?;
        prompts.push(Prompt { class, onset, duration });
    }
    if lines.next_line()? != "end" {
        return Err(Error::MalformedHeader("missing `end`".into()));
    }
    let timeline =
        PromptTimeline::new(prompts).map_err(|e| Error::MalformedHeader(e.to_string()))?;

    let payload = &bytes[lines.pos..];
    let expected = channels * samples * 4;
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let signal = Array2::from_shape_vec((channels, samples), data)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    EmgSession::new(signal, sample_rate, timeline, kind)
}
