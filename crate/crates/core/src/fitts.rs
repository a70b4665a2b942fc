//! 3DoF Fitts' law environment, simulated user and online metrics.
//!
//! The cursor has a position `(x, y)` and a diameter. Targets sit at a fixed
//! Manhattan amplitude from the state in which the previous target was
//! acquired, in a random direction on the unit sphere. A trial succeeds once
//! both criteria (center inside the target circle, diameter within the size
//! zone) hold for the full dwell time.

use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::{normalize_speed, to_command, ControlCommand, PcMap, RejectionConfig};
use crate::dataset::{EmgSynth, GainMatrix, MotionClass, SynthProfile, N_CHANNELS, SAMPLE_RATE};
use crate::dsp::{FilterChain, FilterSpec, FrameSpec};
use crate::error::{Error, Result};
use crate::features::{frame_features, FeatureConfig, LSF4_DIM};
use crate::models::{CompactStream, Decision, LdaModel, StreamingRecurrent};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FittsConfig {
    pub amplitude: f64,
    pub width: f64,
    /// Seconds both criteria must hold.
    pub dwell: f64,
    pub timeout: f64,
    pub targets_total: usize,
    /// The last `targets_scored` targets are scored.
    pub targets_scored: usize,
    pub tick: f64,
    pub diameter_range: [f64; 2],
    pub xy_range: [f64; 2],
    /// Seconds to cross each axis range at full velocity.
    pub t_ref: f64,
    pub start: CursorState,
    pub max_placement_attempts: usize,
}

impl Default for FittsConfig {
    fn default() -> Self {
        Self {
            amplitude: 300.0,
            width: 40.0,
            dwell: 3.0,
            timeout: 13.0,
            targets_total: 26,
            targets_scored: 13,
            tick: 0.0135,
            diameter_range: [20.0, 320.0],
            xy_range: [0.0, 600.0],
            t_ref: 2.0,
            start: CursorState { x: 300.0, y: 300.0, diameter: 170.0 },
            max_placement_attempts: 10_000,
        }
    }
}

impl FittsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.width > 0.0 && self.width < self.amplitude) {
            return bad(format!("width {} must be in (0, amplitude {})", self.width, self.amplitude));
        }
        if !(self.dwell > 0.0 && self.dwell < self.timeout) {
            return bad(format!("dwell {} must be in (0, timeout {})", self.dwell, self.timeout));
        }
        if self.targets_scored > self.targets_total || self.targets_total == 0 {
            return bad("need 0 < targets_scored <= targets_total".into());
        }
        if !(self.tick > 0.0) || self.max_placement_attempts == 0 {
            return bad("tick and placement attempts must be positive".into());
        }
        for (name, r) in [("xy_range", self.xy_range), ("diameter_range", self.diameter_range)] {
            if !(r[1] - r[0] > self.width) {
                return bad(format!("{name} {r:?} narrower than the target width"));
            }
        }
        if self.diameter_range[0] < 0.0 {
            return bad("diameters must be non-negative".into());
        }
        if self.clamp(self.start) != self.start {
            return bad("start state outside the workspace".into());
        }
        normalize_speed([1.0, 1.0, 1.0], self.t_ref).map(|_| ())
    }

    /// Index of difficulty, bits.
    pub fn index_of_difficulty(&self) -> f64 {
        (self.amplitude / self.width + 1.0).log2()
    }

    pub fn dwell_ticks(&self) -> usize {
        (self.dwell / self.tick - 1e-9).ceil() as usize
    }

    /// Last tick at which a trial may still succeed.
    pub fn timeout_ticks(&self) -> usize {
        (self.timeout / self.tick + 1e-9).floor() as usize
    }

    /// Per-axis speed at velocity 1 (px/s for x, y, diameter).
    pub fn gains(&self) -> Result<[f64; 3]> {
        let xy = self.xy_range[1] - self.xy_range[0];
        normalize_speed([xy, xy, self.diameter_range[1] - self.diameter_range[0]], self.t_ref)
    }

    pub fn clamp(&self, c: CursorState) -> CursorState {
        CursorState {
            x: c.x.clamp(self.xy_range[0], self.xy_range[1]),
            y: c.y.clamp(self.xy_range[0], self.xy_range[1]),
            diameter: c.diameter.clamp(self.diameter_range[0], self.diameter_range[1]),
        }
    }

    fn target_fits(&self, x: f64, y: f64, d: f64) -> bool {
        let h = self.width / 2.0;
        let inside = |v: f64, r: [f64; 2]| v >= r[0] + h && v <= r[1] - h;
        inside(x, self.xy_range) && inside(y, self.xy_range) && inside(d, self.diameter_range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CursorState {
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
}

impl CursorState {
    pub fn axes(&self) -> [f64; 3] {
        [self.x, self.y, self.diameter]
    }

    pub fn manhattan(&self, other: &CursorState) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs() + (self.diameter - other.diameter).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub sphere_point: [f64; 3],
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    /// Tolerance on each criterion.
    pub width: f64,
}

impl Target {
    pub fn as_state(&self) -> CursorState {
        CursorState { x: self.x, y: self.y, diameter: self.diameter }
    }

    /// Cursor center inside the target circle.
    pub fn position_ok(&self, c: &CursorState) -> bool {
        (c.x - self.x).hypot(c.y - self.y) <= self.width / 2.0
    }

    pub fn size_ok(&self, c: &CursorState) -> bool {
        (c.diameter - self.diameter).abs() <= self.width / 2.0
    }
}

/// A target at Manhattan distance `amplitude` from `from`, in a direction
/// drawn uniformly on the unit sphere; `z` moves the desired diameter.
pub fn next_target<R: Rng>(from: &CursorState, cfg: &FittsConfig, rng: &mut R) -> Result<Target> {
    for _ in 0..cfg.max_placement_attempts {
        let mut u = [0.0f64; 3];
        for v in u.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l1 = u.iter().map(|v| v.abs()).sum::<f64>();
        if !(norm > 1e-12) {
            continue;
        }
        let d = u.map(|v| v * cfg.amplitude / l1);
        let (x, y, diameter) = (from.x + d[0], from.y + d[1], from.diameter + d[2]);
        if cfg.target_fits(x, y, diameter) {
            return Ok(Target { sphere_point: u.map(|v| v / norm), x, y, diameter, width: cfg.width });
        }
    }
    Err(Error::InfeasibleTarget(cfg.max_placement_attempts))
}

/// Axis (0 = x, 1 = y, 2 = diameter) and direction driven by a class.
pub fn class_axis(class: MotionClass) -> Option<(usize, f64)> {
    match class {
        MotionClass::WF => Some((0, 1.0)),
        MotionClass::WE => Some((0, -1.0)),
        MotionClass::WP => Some((1, 1.0)),
        MotionClass::WS => Some((1, -1.0)),
        MotionClass::HO => Some((2, 1.0)),
        MotionClass::HC => Some((2, -1.0)),
        MotionClass::NM => None,
    }
}

fn axis_class(axis: usize, sign: f64) -> MotionClass {
    match (axis, sign > 0.0) {
        (0, true) => MotionClass::WF,
        (0, false) => MotionClass::WE,
        (1, true) => MotionClass::WP,
        (1, false) => MotionClass::WS,
        (_, true) => MotionClass::HO,
        (_, false) => MotionClass::HC,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Success,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub cursor: CursorState,
    pub target: Target,
    /// Consecutive ticks with both criteria held.
    pub dwell: usize,
    pub tick: usize,
    pub status: TrialStatus,
}

impl EnvState {
    pub fn new(cursor: CursorState, target: Target) -> Self {
        Self { cursor, target, dwell: 0, tick: 0, status: TrialStatus::Running }
    }
}

/// One control tick.
pub fn step(state: &EnvState, cmd: &ControlCommand, cfg: &FittsConfig, gains: &[f64; 3]) -> EnvState {
    let mut next = *state;
    if state.status != TrialStatus::Running {
        return next;
    }
    next.tick += 1;
    if let Some((axis, sign)) = class_axis(cmd.class) {
        let mut a = state.cursor.axes();
        a[axis] += sign * cmd.velocity * gains[axis] * cfg.tick;
        next.cursor = cfg.clamp(CursorState { x: a[0], y: a[1], diameter: a[2] });
    }
    if state.target.position_ok(&next.cursor) && state.target.size_ok(&next.cursor) {
        next.dwell += 1;
    } else {
        next.dwell = 0;
    }
    if next.dwell >= cfg.dwell_ticks() {
        next.status = TrialStatus::Success;
    } else if next.tick >= cfg.timeout_ticks() {
        next.status = TrialStatus::Timeout;
    }
    next
}

/// Simulated participant.
///
/// The greedy policy drives the axis with the largest remaining error. The
/// target speed along that axis saturates at `full_speed_error` and is
/// proportional below it; in EMG mode the contraction intensity is adjusted
/// every tick toward that speed from the observed cursor motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Persona {
    pub reaction_delay: f64,
    pub reaction_delay_sd: f64,
    /// Multiplicative intensity noise (standard deviation) per tick.
    pub motor_noise: f64,
    /// Per-axis error below which an axis counts as done, px.
    pub deadband: f64,
    /// Extra error another axis needs before the persona abandons the
    /// current one, px.
    pub switch_margin: f64,
    pub full_speed_error: f64,
    /// Floor of the target speed while an axis is outside the deadband.
    pub min_speed: f64,
    pub effort_gain: f64,
    pub intensity_start: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for Persona {
    fn default() -> Self {
        Self {
            reaction_delay: 0.464,
            reaction_delay_sd: 0.05,
            motor_noise: 0.05,
            deadband: 10.0,
            switch_margin: 25.0,
            full_speed_error: 100.0,
            min_speed: 0.05,
            effort_gain: 0.02,
            intensity_start: 0.6,
            intensity_min: 0.05,
            intensity_max: 1.5,
        }
    }
}

impl Persona {
    /// Noise-free persona with a fixed reaction delay.
    pub fn ideal() -> Self {
        Self { reaction_delay_sd: 0.0, motor_noise: 0.0, ..Self::default() }
    }

    /// Reaction delay taken from a subject profile.
    pub fn for_profile(profile: &SynthProfile) -> Self {
        Self {
            reaction_delay: profile.reaction_delay_mean,
            reaction_delay_sd: profile.reaction_delay_sd,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.reaction_delay >= 0.0
            && self.reaction_delay_sd >= 0.0
            && self.motor_noise >= 0.0
            && self.deadband >= 0.0
            && self.switch_margin >= 0.0
            && self.full_speed_error > 0.0
            && (0.0..=1.0).contains(&self.min_speed)
            && self.effort_gain >= 0.0
            && self.intensity_min >= 0.0
            && self.intensity_min <= self.intensity_start
            && self.intensity_start <= self.intensity_max;
        if !ok {
            return Err(Error::Config(format!("invalid persona {self:?}")));
        }
        Ok(())
    }

    /// Class the persona wants to execute now, before reaction delay.
    pub fn desired_class(&self, cursor: &CursorState, target: &Target, current: MotionClass) -> MotionClass {
        let err = axis_errors(cursor, target);
        let best = (0..3)
            .filter(|&a| err[a].abs() > self.deadband)
            .max_by(|&a, &b| err[a].abs().total_cmp(&err[b].abs()));
        let Some(best) = best else {
            return MotionClass::NM;
        };
        if let Some((axis, sign)) = class_axis(current) {
            let along = sign * err[axis];
            if along > self.deadband && err[best].abs() - along < self.switch_margin {
                return current;
            }
        }
        axis_class(best, err[best])
    }

    /// Normalized speed wanted along `class`'s direction.
    pub fn target_speed(&self, cursor: &CursorState, target: &Target, class: MotionClass) -> f64 {
        match class_axis(class) {
            None => 0.0,
            Some((axis, sign)) => {
                let along = sign * axis_errors(cursor, target)[axis];
                if along <= 0.0 {
                    0.0
                } else {
                    (along / self.full_speed_error).clamp(self.min_speed, 1.0)
                }
            }
        }
    }

    fn draw_delay_ticks<R: Rng>(&self, tick: f64, rng: &mut R) -> usize {
        let mut d = self.reaction_delay;
        if self.reaction_delay_sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            d = (d + self.reaction_delay_sd * z).clamp(0.5 * self.reaction_delay, 1.5 * self.reaction_delay);
        }
        (d / tick).round() as usize
    }
}

fn axis_errors(cursor: &CursorState, target: &Target) -> [f64; 3] {
    [target.x - cursor.x, target.y - cursor.y, target.diameter - cursor.diameter]
}

/// Intent executed by the simulated user on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub class: MotionClass,
    pub intensity: f64,
    pub target_speed: f64,
}

/// Reaction-delayed execution state of the simulated user.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    persona: Persona,
    executed: MotionClass,
    pending: Option<(MotionClass, usize)>,
    intensity: f64,
    clock: usize,
    rng: ChaCha8Rng,
}

impl SimulatedUser {
    pub fn new(persona: Persona, seed: u64) -> Self {
        Self {
            persona,
            executed: MotionClass::NM,
            pending: None,
            intensity: persona.intensity_start,
            clock: 0,
            rng: rng_for(seed, &[0xF1_77, 0x9E]),
        }
    }

    pub fn executed(&self) -> MotionClass {
        self.executed
    }

    /// Advances one tick. `moved` is the cursor displacement caused by the
    /// previous tick's command.
    pub fn act(&mut self, cursor: &CursorState, target: &Target, moved: [f64; 3], cfg: &FittsConfig, gains: &[f64; 3]) -> Intent {
        let p = self.persona;
        self.clock += 1;
        let desired = p.desired_class(cursor, target, self.executed);
        if desired == self.executed {
            self.pending = None;
        } else if self.pending.map(|(c, _)| c) != Some(desired) {
            let delay = p.draw_delay_ticks(cfg.tick, &mut self.rng);
            self.pending = Some((desired, self.clock + delay));
        }
        if let Some((class, due)) = self.pending {
            if self.clock >= due {
                self.executed = class;
                self.pending = None;
                self.intensity = p.intensity_start;
            }
        }
        let speed = p.target_speed(cursor, target, self.executed);
        if let Some((axis, sign)) = class_axis(self.executed) {
            let observed = sign * moved[axis] / (gains[axis] * cfg.tick);
            self.intensity = (self.intensity + p.effort_gain * (speed - observed)).clamp(p.intensity_min, p.intensity_max);
        }
        let mut intensity = self.intensity;
        if p.motor_noise > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            intensity = (intensity * (1.0 + p.motor_noise * z)).max(0.0);
        }
        Intent { class: self.executed, intensity, target_speed: speed }
    }
}

/// A classifier usable inside the closed loop, fed one raw LSF4 frame per tick.
pub trait OnlineClassifier {
    fn classify(&mut self, lsf4: &[f64]) -> Result<Decision>;
}

impl OnlineClassifier for LdaModel {
    fn classify(&mut self, lsf4: &[f64]) -> Result<Decision> {
        self.predict(lsf4)
    }
}

impl OnlineClassifier for StreamingRecurrent<'_> {
    fn classify(&mut self, lsf4: &[f64]) -> Result<Decision> {
        self.push_raw(lsf4)
    }
}

impl OnlineClassifier for CompactStream<'_> {
    fn classify(&mut self, lsf4: &[f64]) -> Result<Decision> {
        self.push_raw(lsf4)
    }
}

/// Always answers NM with full confidence.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllNm;

impl OnlineClassifier for AllNm {
    fn classify(&mut self, _lsf4: &[f64]) -> Result<Decision> {
        Ok(Decision::no_movement())
    }
}

/// Rolling-buffer filtering and featurization of the live signal.
#[derive(Debug, Clone)]
pub struct OnlineFrontEnd {
    chain: FilterChain,
    frame: FrameSpec,
    features: FeatureConfig,
    buffer: Array2<f64>,
}

impl OnlineFrontEnd {
    /// Filtering runs over the last two frames of signal.
    pub fn new(filter: &FilterSpec, frame: FrameSpec, features: FeatureConfig) -> Result<Self> {
        frame.validate()?;
        Ok(Self {
            chain: FilterChain::new(filter, SAMPLE_RATE)?,
            frame,
            features,
            buffer: Array2::zeros((N_CHANNELS, 2 * frame.frame_len)),
        })
    }

    pub fn push(&mut self, chunk: &[[f64; N_CHANNELS]]) {
        let n = chunk.len().min(self.buffer.ncols());
        let len = self.buffer.ncols();
        let kept = self.buffer.slice(s![.., n..]).to_owned();
        self.buffer.slice_mut(s![.., ..len - n]).assign(&kept);
        for (k, sample) in chunk[chunk.len() - n..].iter().enumerate() {
            for ch in 0..N_CHANNELS {
                self.buffer[[ch, len - n + k]] = sample[ch];
            }
        }
    }

    /// LSF4 and per-channel MAV of the newest frame.
    pub fn current(&self) -> Result<([f64; LSF4_DIM], [f64; N_CHANNELS])> {
        let filtered = self.chain.apply(self.buffer.view())?;
        let start = filtered.ncols() - self.frame.frame_len;
        frame_features(filtered.slice(s![.., start..]), &self.features)
    }
}

/// EMG loop settings for a trained classifier.
pub struct EmgDriver<'a> {
    pub classifier: &'a mut dyn OnlineClassifier,
    pub pc_map: &'a PcMap,
    pub rejection: RejectionConfig,
    pub features: FeatureConfig,
    pub filter: FilterSpec,
    pub frame: FrameSpec,
    pub profile: &'a SynthProfile,
}

/// What turns the user's intent into a control command.
pub enum Driver<'a> {
    /// Perfect decoding: the executed intent and its target speed.
    Oracle,
    Emg(EmgDriver<'a>),
}

/// Ticks of rest fed through the loop before the first target.
pub const WARM_UP_TICKS: usize = 64;

struct EmgLoop<'d, 'a> {
    drv: &'d mut EmgDriver<'a>,
    synth: EmgSynth,
    gains: GainMatrix,
    front: OnlineFrontEnd,
    current: (MotionClass, f64),
    previous: (MotionClass, f64),
    since_switch: usize,
    chunk: Vec<[f64; N_CHANNELS]>,
}

impl<'d, 'a> EmgLoop<'d, 'a> {
    fn new(drv: &'d mut EmgDriver<'a>, seed: u64) -> Result<Self> {
        drv.profile.validate()?;
        drv.rejection.validate()?;
        let session_seed = derive_seed(drv.profile.rng_seed, &[seed, 0xF1_77]);
        let gains = drv.profile.jittered_gains(&mut rng_for(session_seed, &[0x6A]));
        let mut synth = EmgSynth::new(session_seed, 0xF1_77);
        synth.warm_up(2048);
        let front = OnlineFrontEnd::new(&drv.filter, drv.frame, drv.features)?;
        let inc = drv.frame.frame_inc;
        Ok(Self {
            drv,
            synth,
            gains,
            front,
            current: (MotionClass::NM, 0.0),
            previous: (MotionClass::NM, 0.0),
            since_switch: 0,
            chunk: vec![[0.0; N_CHANNELS]; inc],
        })
    }

    fn tick(&mut self, intent: &Intent) -> Result<(Decision, ControlCommand)> {
        if intent.class != self.current.0 {
            self.previous = self.current;
            self.since_switch = 0;
        }
        self.current = (intent.class, intent.intensity);
        let fade = self.drv.profile.transition_time * SAMPLE_RATE;
        let floor = self.drv.profile.noise_floor;
        let cur = self.gains[self.current.0.index()];
        let prev = self.gains[self.previous.0.index()];
        for sample in self.chunk.iter_mut() {
            let alpha = if fade > 0.0 { (self.since_switch as f64 / fade).min(1.0) } else { 1.0 };
            let mut env = [floor; N_CHANNELS];
            for ch in 0..N_CHANNELS {
                env[ch] += alpha * cur[ch] * self.current.1 + (1.0 - alpha) * prev[ch] * self.previous.1;
            }
            *sample = self.synth.sample(&env);
            self.since_switch += 1;
        }
        self.front.push(&self.chunk);
        let (lsf4, mav) = self.front.current()?;
        let decision = self.drv.classifier.classify(&lsf4)?;
        let summed: f64 = mav.iter().sum();
        let cmd = to_command(&decision, summed, &self.drv.rejection, self.drv.pc_map)?;
        Ok((decision, cmd))
    }
}

/// One logged control tick, recorded after the command was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub trial: usize,
    pub tick: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub intent: MotionClass,
    pub intensity: f64,
    pub raw_class: MotionClass,
    pub confidence: f64,
    pub class: MotionClass,
    pub velocity: f64,
    pub rejected: bool,
    pub in_position: bool,
    pub in_size: bool,
    pub dwell: usize,
}

impl TickRecord {
    pub fn cursor(&self) -> CursorState {
        CursorState { x: self.x, y: self.y, diameter: self.diameter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittsTrialLog {
    pub index: usize,
    pub scored: bool,
    pub target: Target,
    pub start: CursorState,
    pub records: Vec<TickRecord>,
    pub outcome: TrialStatus,
    /// Seconds from target onset to dwell completion; the timeout for
    /// failed trials.
    pub acquire_time: f64,
}

impl FittsTrialLog {
    pub fn success(&self) -> bool {
        self.outcome == TrialStatus::Success
    }

    pub fn end_state(&self) -> CursorState {
        self.records.last().map(|r| r.cursor()).unwrap_or(self.start)
    }
}

/// Runs `cfg.targets_total` consecutive targets without ever resetting the
/// cursor.
pub fn run_fitts(driver: &mut Driver<'_>, cfg: &FittsConfig, persona: &Persona, seed: u64) -> Result<Vec<FittsTrialLog>> {
    cfg.validate()?;
    persona.validate()?;
    let gains = cfg.gains()?;
    let mut target_rng = rng_for(seed, &[0xF1_77, 0x7A]);
    let mut user = SimulatedUser::new(*persona, seed);
    let mut emg = match driver {
        Driver::Oracle => None,
        Driver::Emg(d) => {
            let expected = (cfg.tick * SAMPLE_RATE).round() as usize;
            if d.frame.frame_inc != expected {
                return Err(Error::Config(format!(
                    "frame increment {} samples does not match the {expected}-sample tick",
                    d.frame.frame_inc
                )));
            }
            Some(EmgLoop::new(d, seed)?)
        }
    };
    if let Some(emg) = emg.as_mut() {
        let rest = Intent { class: MotionClass::NM, intensity: 0.0, target_speed: 0.0 };
        for _ in 0..WARM_UP_TICKS {
            emg.tick(&rest)?;
        }
    }

    let mut cursor = cfg.start;
    let mut moved = [0.0; 3];
    let mut logs = Vec::with_capacity(cfg.targets_total);
    for index in 0..cfg.targets_total {
        let target = next_target(&cursor, cfg, &mut target_rng)?;
        let start = cursor;
        let mut state = EnvState::new(cursor, target);
        let mut records = Vec::new();
        while state.status == TrialStatus::Running {
            let intent = user.act(&state.cursor, &target, moved, cfg, &gains);
            let (decision, cmd) = match emg.as_mut() {
                None => {
                    let mut d = Decision::no_movement();
                    d.class = intent.class;
                    let cmd = ControlCommand { class: intent.class, velocity: intent.target_speed, rejected: false };
                    (d, cmd)
                }
                Some(e) => e.tick(&intent)?,
            };
            let next = step(&state, &cmd, cfg, &gains);
            let (a, b) = (state.cursor.axes(), next.cursor.axes());
            moved = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            state = next;
            records.push(TickRecord {
                trial: index,
                tick: state.tick,
                time: state.tick as f64 * cfg.tick,
                x: state.cursor.x,
                y: state.cursor.y,
                diameter: state.cursor.diameter,
                intent: intent.class,
                intensity: intent.intensity,
                raw_class: decision.class,
                confidence: decision.confidence,
                class: cmd.class,
                velocity: cmd.velocity,
                rejected: cmd.rejected,
                in_position: target.position_ok(&state.cursor),
                in_size: target.size_ok(&state.cursor),
                dwell: state.dwell,
            });
        }
        let acquire_time = match state.status {
            TrialStatus::Success => state.tick as f64 * cfg.tick,
            _ => cfg.timeout,
        };
        cursor = state.cursor;
        logs.push(FittsTrialLog {
            index,
            scored: index >= cfg.targets_total - cfg.targets_scored,
            target,
            start,
            records,
            outcome: state.status,
            acquire_time,
        });
    }
    Ok(logs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittsMetrics {
    pub completion_rate: f64,
    pub movement_time: f64,
    pub throughput: f64,
    pub path_efficiency: f64,
    pub stopping_distance: f64,
    pub overshoots: f64,
    pub instability: f64,
}

/// Mean length of maximal runs of decisions that differ from the previous
/// one, after NM decisions are removed.
pub fn instability(classes: &[MotionClass]) -> f64 {
    let active: Vec<MotionClass> = classes.iter().copied().filter(|c| c.is_active()).collect();
    let mut runs = Vec::new();
    let mut run = 0usize;
    for w in active.windows(2) {
        if w[1] != w[0] {
            run += 1;
        } else if run > 0 {
            runs.push(run);
            run = 0;
        }
    }
    if run > 0 {
        runs.push(run);
    }
    if runs.is_empty() {
        0.0
    } else {
        runs.iter().sum::<usize>() as f64 / runs.len() as f64
    }
}

fn path_length(log: &FittsTrialLog) -> f64 {
    let mut prev = log.start;
    let mut total = 0.0;
    for r in &log.records {
        let c = r.cursor();
        total += prev.manhattan(&c);
        prev = c;
    }
    total
}

/// Manhattan movement while the final, successful dwell was counting.
fn final_dwell_movement(log: &FittsTrialLog) -> f64 {
    let n = log.records.len();
    let mut first = n;
    while first > 0 && log.records[first - 1].dwell > 0 {
        first -= 1;
    }
    log.records[first..]
        .windows(2)
        .map(|w| w[0].cursor().manhattan(&w[1].cursor()))
        .sum()
}

fn overshoot_count(log: &FittsTrialLog) -> usize {
    let mut pos = log.target.position_ok(&log.start);
    let mut size = log.target.size_ok(&log.start);
    let mut count = 0;
    for r in &log.records {
        count += (pos && !r.in_position) as usize + (size && !r.in_size) as usize;
        pos = r.in_position;
        size = r.in_size;
    }
    count
}

/// The seven online metrics over `logs` (normally the scored trials).
///
/// Path efficiency averages over trials that moved at all and is 0 when
/// none did.
pub fn compute_metrics(logs: &[FittsTrialLog], cfg: &FittsConfig) -> Result<FittsMetrics> {
    if logs.is_empty() {
        return Err(Error::InvalidInput("no trial logs to score".into()));
    }
    let n = logs.len() as f64;
    let successes: Vec<&FittsTrialLog> = logs.iter().filter(|l| l.success()).collect();
    let movement_time = logs
        .iter()
        .map(|l| if l.success() { l.acquire_time } else { cfg.timeout })
        .sum::<f64>()
        / n;
    let efficiencies: Vec<f64> = logs
        .iter()
        .filter_map(|l| {
            let path = path_length(l);
            (path > 0.0).then(|| (l.start.manhattan(&l.end_state()) / path).min(1.0))
        })
        .collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let stopping: Vec<f64> = successes.iter().map(|l| final_dwell_movement(l)).collect();
    let overshoots = logs.iter().map(|l| overshoot_count(l) as f64).sum::<f64>() / n;
    let inst = logs
        .iter()
        .map(|l| instability(&l.records.iter().map(|r| r.class).collect::<Vec<_>>()))
        .sum::<f64>()
        / n;
    Ok(FittsMetrics {
        completion_rate: successes.len() as f64 / n,
        movement_time,
        throughput: cfg.index_of_difficulty() / movement_time,
        path_efficiency: mean(&efficiencies),
        stopping_distance: mean(&stopping),
        overshoots,
        instability: inst,
    })
}

pub fn scored(logs: &[FittsTrialLog]) -> Vec<FittsTrialLog> {
    logs.iter().filter(|l| l.scored).cloned().collect()
}

/// One CSV row per tick across all trials.
pub fn write_tick_csv(logs: &[FittsTrialLog], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for log in logs {
        for r in &log.records {
            w.serialize(r)?;
        }
    }
    w.flush()?;
    Ok(())
}
