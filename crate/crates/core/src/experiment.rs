//! The five-classifier study at desk scale: session generation, training,
//! offline evaluation on the held-out trial, Fitts runs in Latin-square order,
//! statistics and latent-space export.
//!
//! Output layout under the output directory:
//!
//! ```text
//! config.json  manifest.json  metrics.csv  oracle_metrics.csv  offline.csv
//! fitts_order.csv  stats.json
//! subject_XX/{sessions,models,offline,fitts,latent}/
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{balanced_latin_square, offline_report, pca_project, rm_anova, rm_anova_with_posthoc, OfflineReport, StatResult};
use crate::control::{fit_pc_map_with_fallback, reject, PcMap, RejectionConfig};
use crate::dataset::{
    make_continuous_protocol, make_ramp_protocol, read_session, synthesize_session, write_session, EmgSession, MotionClass,
    PromptTimeline, SessionKind, SynthProfile, SAMPLE_RATE,
};
use crate::dsp::{frame_signal, FilterChain, FilterSpec, FrameSpec};
use crate::error::{Error, Result};
use crate::features::{estimate_wamp_threshold, extract_features, FeatureConfig, Standardizer, LSF4_DIM};
use crate::fitts::{compute_metrics, run_fitts, scored, write_tick_csv, Driver, EmgDriver, FittsConfig, FittsMetrics, OnlineClassifier, Persona, WARM_UP_TICKS};
use crate::labeling::{default_nm_threshold, label_continuous, label_ramp, CrtConfig, LabeledFrameSequence};
use crate::models::io::{load_model, save_model, Stage, StoredModel};
use crate::models::{train_xent, Backbone, CompactRecurrent, Decision, LdaModel, RecurrentArch, RecurrentModel, SequenceSet, TrainConfig, TrainMode};
use crate::rng::{derive_seed, rng_for};
use crate::ssl::{pretrain_backbone, train_lstm_v, AugmentConfig, VicregConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "LDA-R")]
    LdaR,
    #[serde(rename = "LSTM-R")]
    LstmR,
    #[serde(rename = "LDA-D")]
    LdaD,
    #[serde(rename = "LSTM-D")]
    LstmD,
    #[serde(rename = "LSTM-V")]
    LstmV,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::LdaR,
        ClassifierKind::LstmR,
        ClassifierKind::LdaD,
        ClassifierKind::LstmD,
        ClassifierKind::LstmV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::LdaR => "LDA-R",
            ClassifierKind::LstmR => "LSTM-R",
            ClassifierKind::LdaD => "LDA-D",
            ClassifierKind::LstmD => "LSTM-D",
            ClassifierKind::LstmV => "LSTM-V",
        }
    }

    /// File-name stem.
    pub fn stem(self) -> &'static str {
        match self {
            ClassifierKind::LdaR => "lda_r",
            ClassifierKind::LstmR => "lstm_r",
            ClassifierKind::LdaD => "lda_d",
            ClassifierKind::LstmD => "lstm_d",
            ClassifierKind::LstmV => "lstm_v",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ClassifierKind::LdaR | ClassifierKind::LdaD)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub ramp_trials: usize,
    pub continuous_trials: usize,
    /// Seconds per prompt, both trial types.
    pub prompt_duration: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { ramp_trials: 5, continuous_trials: 6, prompt_duration: 3.0 }
    }
}

/// How much of the data each training stage sees, and for how long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyBudget {
    /// Window stride over ramp prompt segments.
    pub ramp_stride: usize,
    /// Window stride over continuous trials (supervised stages).
    pub continuous_stride: usize,
    /// Anchor stride for VICReg pre-training.
    pub pretrain_stride: usize,
    pub xent_max_epochs: usize,
    pub pretrain_max_epochs: usize,
    pub head_max_epochs: usize,
}

impl Default for StudyBudget {
    fn default() -> Self {
        Self {
            ramp_stride: 4,
            continuous_stride: 16,
            pretrain_stride: 20,
            xent_max_epochs: 30,
            pretrain_max_epochs: 20,
            head_max_epochs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentConfig {
    /// Subjects whose Fitts features are recorded and projected.
    pub subjects: Vec<usize>,
    /// Frame stride of the exported windows.
    pub stride: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self { subjects: vec![0], stride: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_virtual_subjects: usize,
    /// Per-subject gain spread (uniform, +/- fraction).
    pub subject_spread: f64,
    pub roster: Vec<ClassifierKind>,
    pub protocol: ProtocolConfig,
    pub synth: SynthProfile,
    pub filter: FilterSpec,
    pub frame: FrameSpec,
    pub crt: CrtConfig,
    pub arch: RecurrentArch,
    pub train: TrainConfig,
    pub budget: StudyBudget,
    pub vicreg: VicregConfig,
    pub augment: AugmentConfig,
    pub rejection: RejectionConfig,
    pub fitts: FittsConfig,
    pub persona: Persona,
    pub sweep_points: usize,
    pub alpha: f64,
    pub latent: LatentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_virtual_subjects: 10,
            subject_spread: 0.15,
            roster: ClassifierKind::ALL.to_vec(),
            protocol: ProtocolConfig::default(),
            synth: SynthProfile::default(),
            filter: FilterSpec::default(),
            frame: FrameSpec::default(),
            crt: CrtConfig::default(),
            arch: RecurrentArch::default(),
            train: TrainConfig::default(),
            budget: StudyBudget::default(),
            vicreg: VicregConfig::default(),
            augment: AugmentConfig::default(),
            rejection: RejectionConfig::default(),
            fitts: FittsConfig::default(),
            persona: Persona::default(),
            sweep_points: 21,
            alpha: 0.05,
            latent: LatentConfig::default(),
        }
    }
}

/// Everything fixed per virtual subject before any data exist.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPlan {
    pub index: usize,
    pub seed: u64,
    pub profile: SynthProfile,
    pub validation_ramp: usize,
    pub validation_continuous: usize,
    pub test_continuous: usize,
    /// Fitts order (a Latin-square row mapped onto the roster).
    pub order: Vec<ClassifierKind>,
}

impl SubjectPlan {
    pub fn dir(&self, out: &Path) -> PathBuf {
        subject_dir(out, self.index)
    }

    pub fn training_continuous(&self, n_trials: usize) -> Vec<usize> {
        (0..n_trials)
            .filter(|&t| t != self.validation_continuous && t != self.test_continuous)
            .collect()
    }
}

pub fn subject_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("subject_{index:02}"))
}

fn session_path(dir: &Path, kind: SessionKind, trial: usize) -> PathBuf {
    dir.join("sessions").join(format!("{}_{trial}.emg", kind.as_str()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(Error::Config("classifier roster is empty".into()));
        }
        let unique: HashSet<_> = self.roster.iter().collect();
        if unique.len() != self.roster.len() {
            return Err(Error::Config("classifier roster lists a classifier twice".into()));
        }
        let p = &self.protocol;
        if p.ramp_trials < 2 || p.continuous_trials < 3 || !(p.prompt_duration > 0.0) {
            return Err(Error::Config(format!("protocol needs >= 2 ramp and >= 3 continuous trials, got {p:?}")));
        }
        let b = &self.budget;
        if [b.ramp_stride, b.continuous_stride, b.pretrain_stride, b.xent_max_epochs, b.pretrain_max_epochs, b.head_max_epochs]
            .contains(&0)
        {
            return Err(Error::Config(format!("study budget entries must be positive: {b:?}")));
        }
        if self.arch.input_dim != LSF4_DIM || self.arch.n_classes != MotionClass::ALL.len() {
            return Err(Error::Config("recurrent architecture must match LSF4 input and seven classes".into()));
        }
        if self.sweep_points < 2 || self.latent.stride == 0 || !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config("sweep needs >= 2 points, latent stride > 0, alpha in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.subject_spread) {
            return Err(Error::Config(format!("subject spread {} not in [0, 1)", self.subject_spread)));
        }
        self.synth.validate()?;
        self.filter.validate(SAMPLE_RATE)?;
        self.frame.validate()?;
        self.train.validate()?;
        self.vicreg.validate()?;
        self.augment.validate()?;
        self.rejection.validate()?;
        self.fitts.validate()?;
        self.persona.validate()?;
        let seeds: HashSet<u64> = (0..self.n_virtual_subjects).map(|i| self.subject_seed(i)).collect();
        if seeds.len() != self.n_virtual_subjects {
            return Err(Error::Config("virtual subject seeds collide".into()));
        }
        Ok(())
    }

    pub fn subject_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[0x5_0B1E, index as u64])
    }

    /// Evenly spaced rejection thresholds from 0 to 1.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.sweep_points;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    pub fn latin_rows(&self) -> Result<Vec<Vec<usize>>> {
        if self.roster.len() < 2 {
            return Ok(vec![vec![0]]);
        }
        balanced_latin_square(self.roster.len())
    }

    pub fn plan(&self, index: usize) -> Result<SubjectPlan> {
        let seed = self.subject_seed(index);
        let mut rng = rng_for(seed, &[0x5_711]);
        let test_continuous = self.protocol.continuous_trials - 1;
        let rows = self.latin_rows()?;
        let row = &rows[index % rows.len()];
        Ok(SubjectPlan {
            index,
            seed,
            profile: self.synth.for_subject(seed, self.subject_spread),
            validation_ramp: rng.gen_range(0..self.protocol.ramp_trials),
            validation_continuous: rng.gen_range(0..test_continuous),
            test_continuous,
            order: row.iter().map(|&j| self.roster[j]).collect(),
        })
    }

    fn plans(&self) -> Result<Vec<SubjectPlan>> {
        (0..self.n_virtual_subjects).map(|i| self.plan(i)).collect()
    }

    fn stage_config(&self, max_epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig { max_epochs, rng_seed: seed, ..self.train }
    }
}

fn create_dirs(dir: &Path) -> Result<()> {
    for sub in ["sessions", "models", "offline", "fitts", "latent"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| missing(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::Missing(format!("{} not found", path.display()))
    } else {
        Error::Io(e)
    }
}

// ---------------------------------------------------------------- generate

/// Ramp and continuous sessions for every virtual subject.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    cfg.plans()?.par_iter().map(|plan| generate_subject(cfg, plan, out)).collect::<Result<Vec<_>>>()?;
    write_manifest(cfg, out)
}

fn generate_subject(cfg: &ExperimentConfig, plan: &SubjectPlan, out: &Path) -> Result<()> {
    let dir = plan.dir(out);
    create_dirs(&dir)?;
    let p = &cfg.protocol;
    for (t, tl) in make_ramp_protocol(p.ramp_trials, p.prompt_duration)?.iter().enumerate() {
        let s = synthesize_session(tl, &plan.profile, SessionKind::Ramp, t as u64)?;
        write_session(&s, session_path(&dir, SessionKind::Ramp, t))?;
    }
    let continuous = make_continuous_protocol(p.continuous_trials, p.prompt_duration, derive_seed(plan.seed, &[0xC0]))?;
    for (t, tl) in continuous.iter().enumerate() {
        let s = synthesize_session(tl, &plan.profile, SessionKind::Continuous, 0x100 + t as u64)?;
        write_session(&s, session_path(&dir, SessionKind::Continuous, t))?;
    }
    log::info!("subject {:02}: sessions written", plan.index);
    Ok(())
}

fn load_session(dir: &Path, kind: SessionKind, trial: usize) -> Result<EmgSession> {
    let path = session_path(dir, kind, trial);
    if !path.exists() {
        return Err(Error::Missing(format!("session {} not found", path.display())));
    }
    read_session(path)
}

// ---------------------------------------------------------------- features

/// A contiguous run of frames: a continuous trial or one ramp prompt.
#[derive(Debug, Clone)]
struct Chunk {
    lsf4: Array2<f64>,
    summed: Array1<f64>,
    labels: Vec<MotionClass>,
}

impl Chunk {
    fn whole(seq: &LabeledFrameSequence) -> Self {
        Self { lsf4: seq.frames.lsf4.clone(), summed: seq.frames.summed_mav(), labels: seq.labels.clone() }
    }

    /// Splits a ramp trial at prompt boundaries (by frame center).
    fn ramp_segments(seq: &LabeledFrameSequence, timeline: &PromptTimeline) -> Vec<Self> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for k in 0..seq.len() {
            if let Some(p) = timeline.prompt_index_at(seq.frames.center_time(k)) {
                groups.entry(p).or_default().push(k);
            }
        }
        groups
            .into_values()
            .map(|idx| {
                let frames = seq.frames.select(&idx);
                Self {
                    summed: frames.summed_mav(),
                    lsf4: frames.lsf4,
                    labels: idx.iter().map(|&k| seq.labels[k]).collect(),
                }
            })
            .collect()
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

fn stack(chunks: &[&Chunk]) -> Result<(Array2<f64>, Vec<f64>, Vec<MotionClass>)> {
    let views: Vec<ArrayView2<f64>> = chunks.iter().map(|c| c.lsf4.view()).collect();
    let x = concatenate(Axis(0), &views).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let summed = chunks.iter().flat_map(|c| c.summed.iter().copied()).collect();
    let labels = chunks.iter().flat_map(|c| c.labels.iter().copied()).collect();
    Ok((x, summed, labels))
}

/// Window end frames of one chunk, matching [`SequenceSet::add_trial`].
fn window_ends(len: usize, seq_len: usize, stride: usize) -> Vec<usize> {
    (seq_len.saturating_sub(1)..len).step_by(stride).collect()
}

fn sequence_set(chunks: &[&Chunk], st: &Standardizer, seq_len: usize, stride: usize) -> Result<SequenceSet> {
    let mut set = SequenceSet::new(seq_len);
    for c in chunks {
        set.add_trial(st.apply(c.lsf4.view())?, &c.labels, stride)?;
    }
    Ok(set)
}

/// Labeled features of one subject's recordings.
struct SubjectData {
    ramp: Vec<Vec<Chunk>>,
    continuous: Vec<Chunk>,
}

fn featurize(signal: &Array2<f64>, frame: &FrameSpec, features: &FeatureConfig) -> Result<crate::features::FrameSequence> {
    extract_features(&frame_signal(signal, frame)?, features, SAMPLE_RATE)
}

/// Filtered samples of the NM prompts, all channels pooled.
fn nm_samples(filtered: &Array2<f64>, timeline: &PromptTimeline) -> Vec<f64> {
    let mut out = Vec::new();
    for p in timeline.prompts().iter().filter(|p| p.class == MotionClass::NM) {
        let a = (p.onset * SAMPLE_RATE).round() as usize;
        let b = ((p.end() * SAMPLE_RATE).round() as usize).min(filtered.ncols());
        if a < b {
            out.extend(filtered.slice(s![.., a..b]).iter().copied());
        }
    }
    out
}

/// WAMP threshold from the ramp NM prompts, then features and labels for
/// every trial.
fn compute_subject_data(cfg: &ExperimentConfig, dir: &Path) -> Result<SubjectData> {
    let chain = FilterChain::new(&cfg.filter, SAMPLE_RATE)?;
    let mut ramp_filtered = Vec::new();
    let mut nm = Vec::new();
    for t in 0..cfg.protocol.ramp_trials {
        let session = load_session(dir, SessionKind::Ramp, t)?;
        let filtered = chain.apply(session.signal_f64().view())?;
        nm.extend(nm_samples(&filtered, &session.timeline));
        ramp_filtered.push((filtered, session.timeline));
    }
    let features = FeatureConfig { wamp_threshold: estimate_wamp_threshold(&nm)? };
    let data = subject_data_with(cfg, dir, features, &chain, ramp_filtered)?;
    write_json(&dir.join("models").join("features.json"), &features)?;
    Ok(data)
}

/// Features and labels with a stored WAMP threshold.
fn load_subject_data(cfg: &ExperimentConfig, dir: &Path) -> Result<SubjectData> {
    let features: FeatureConfig = read_json(&dir.join("models").join("features.json"))?;
    let chain = FilterChain::new(&cfg.filter, SAMPLE_RATE)?;
    let mut ramp_filtered = Vec::new();
    for t in 0..cfg.protocol.ramp_trials {
        let session = load_session(dir, SessionKind::Ramp, t)?;
        ramp_filtered.push((chain.apply(session.signal_f64().view())?, session.timeline));
    }
    subject_data_with(cfg, dir, features, &chain, ramp_filtered)
}

fn subject_data_with(
    cfg: &ExperimentConfig,
    dir: &Path,
    features: FeatureConfig,
    chain: &FilterChain,
    ramp_filtered: Vec<(Array2<f64>, PromptTimeline)>,
) -> Result<SubjectData> {
    let mut ramp = Vec::new();
    for (filtered, timeline) in ramp_filtered {
        let frames = featurize(&filtered, &cfg.frame, &features)?;
        let labeled = label_ramp(&frames, &timeline, default_nm_threshold(&frames, &timeline)?)?;
        ramp.push(Chunk::ramp_segments(&labeled, &timeline));
    }
    let continuous = (0..cfg.protocol.continuous_trials)
        .map(|t| continuous_chunk(cfg, dir, t, &features, chain))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubjectData { ramp, continuous })
}

fn continuous_chunk(cfg: &ExperimentConfig, dir: &Path, trial: usize, features: &FeatureConfig, chain: &FilterChain) -> Result<Chunk> {
    let session = load_session(dir, SessionKind::Continuous, trial)?;
    let filtered = chain.apply(session.signal_f64().view())?;
    let frames = featurize(&filtered, &cfg.frame, features)?;
    Ok(Chunk::whole(&label_continuous(&frames, &session.timeline, &cfg.crt)?))
}

// ---------------------------------------------------------------- train

fn model_path(dir: &Path, kind: ClassifierKind) -> PathBuf {
    dir.join("models").join(format!("{}.model", kind.stem()))
}

fn pc_map_path(dir: &Path, kind: ClassifierKind) -> PathBuf {
    dir.join("models").join(format!("{}_pcmap.json", kind.stem()))
}

fn backbone_path(dir: &Path) -> PathBuf {
    dir.join("models").join("lstm_v_backbone.model")
}

/// Trains the roster for every subject and writes model and PcMap files.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    cfg.plans()?.par_iter().map(|plan| train_subject(cfg, plan, out)).collect::<Result<Vec<_>>>()?;
    write_manifest(cfg, out)
}

fn train_subject(cfg: &ExperimentConfig, plan: &SubjectPlan, out: &Path) -> Result<()> {
    let dir = plan.dir(out);
    create_dirs(&dir)?;
    let data = compute_subject_data(cfg, &dir)?;
    for &kind in &cfg.roster {
        let started = std::time::Instant::now();
        train_one(cfg, plan, &data, &dir, kind)?;
        log::info!("subject {:02}: {kind} trained in {:.1} s", plan.index, started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn train_one(cfg: &ExperimentConfig, plan: &SubjectPlan, data: &SubjectData, dir: &Path, kind: ClassifierKind) -> Result<()> {
    let b = &cfg.budget;
    let all_ramp: Vec<&Chunk> = data.ramp.iter().flatten().collect();
    let ramp_train: Vec<&Chunk> = data
        .ramp
        .iter()
        .enumerate()
        .filter(|(t, _)| *t != plan.validation_ramp)
        .flat_map(|(_, c)| c)
        .collect();
    let ramp_val: Vec<&Chunk> = data.ramp[plan.validation_ramp].iter().collect();
    let cont_all: Vec<&Chunk> = (0..cfg.protocol.continuous_trials)
        .filter(|&t| t != plan.test_continuous)
        .map(|t| &data.continuous[t])
        .collect();
    let cont_train: Vec<&Chunk> = plan
        .training_continuous(cfg.protocol.continuous_trials)
        .into_iter()
        .map(|t| &data.continuous[t])
        .collect();
    let cont_val = vec![&data.continuous[plan.validation_continuous]];
    let seed = derive_seed(plan.seed, &[0x7A_14, kind.index() as u64]);

    let pc_map = match kind {
        ClassifierKind::LdaR | ClassifierKind::LdaD => {
            let chunks = if kind == ClassifierKind::LdaR { &all_ramp } else { &cont_all };
            let (x, summed, labels) = stack(chunks)?;
            let lda = LdaModel::fit(x.view(), &labels, &MotionClass::ALL)?;
            let predicted: Vec<MotionClass> = lda.predict_all(x.view())?.iter().map(|d| d.class).collect();
            save_model(&model_path(dir, kind), &StoredModel::Lda(lda))?;
            fit_pc_map_with_fallback(&summed, &predicted, &labels)?
        }
        ClassifierKind::LstmR | ClassifierKind::LstmD => {
            let (train, val, stride) = if kind == ClassifierKind::LstmR {
                (&ramp_train, &ramp_val, b.ramp_stride)
            } else {
                (&cont_train, &cont_val, b.continuous_stride)
            };
            let (x, _, _) = stack(train)?;
            let st = Standardizer::fit(x.view())?;
            let seq_len = cfg.arch.sequence_len;
            let train_set = sequence_set(train, &st, seq_len, stride)?;
            let val_set = sequence_set(val, &st, seq_len, stride)?;
            let mut model = RecurrentModel::init(cfg.arch, st, seed);
            let history = train_xent(
                &mut model,
                &train_set,
                &val_set,
                &cfg.stage_config(b.xent_max_epochs, seed),
                TrainMode::EndToEnd,
            )?;
            write_json(&dir.join("models").join(format!("{}_history.json", kind.stem())), &history)?;
            let map = recurrent_pc_map(&model, train, seq_len, stride)?;
            save_model(&model_path(dir, kind), &StoredModel::Recurrent { model, stage: Stage::Supervised })?;
            map
        }
        ClassifierKind::LstmV => {
            let (x, _, _) = stack(&cont_train)?;
            let st = Standardizer::fit(x.view())?;
            let seq_len = cfg.arch.sequence_len;
            let pre_train = sequence_set(&cont_train, &st, seq_len, b.pretrain_stride)?;
            let pre_val = sequence_set(&cont_val, &st, seq_len, b.pretrain_stride)?;
            let mut backbone = Backbone::init(cfg.arch, seed);
            let aug = AugmentConfig { rng_seed: derive_seed(seed, &[0xA06]), ..cfg.augment };
            let pre_history = pretrain_backbone(
                &mut backbone,
                &pre_train,
                &pre_val,
                &cfg.vicreg,
                &aug,
                &cfg.stage_config(b.pretrain_max_epochs, seed),
            )?;
            write_json(&dir.join("models").join("lstm_v_pretrain_history.json"), &pre_history)?;
            save_model(
                &backbone_path(dir),
                &StoredModel::Backbone { backbone: backbone.clone(), standardizer: st.clone(), stage: Stage::Pretrained },
            )?;
            let train_set = sequence_set(&cont_train, &st, seq_len, b.continuous_stride)?;
            let val_set = sequence_set(&cont_val, &st, seq_len, b.continuous_stride)?;
            let head_cfg = cfg.stage_config(b.head_max_epochs, derive_seed(seed, &[0x4EAD]));
            let (model, history) = train_lstm_v(&backbone, &st, &train_set, &val_set, &head_cfg)?;
            write_json(&dir.join("models").join("lstm_v_history.json"), &history)?;
            let map = recurrent_pc_map(&model, &cont_train, seq_len, b.continuous_stride)?;
            save_model(&model_path(dir, kind), &StoredModel::Recurrent { model, stage: Stage::Finetuned })?;
            map
        }
    };
    write_json(&pc_map_path(dir, kind), &pc_map)
}

/// PcMap from the model's predictions at the training window ends.
fn recurrent_pc_map(model: &RecurrentModel, chunks: &[&Chunk], seq_len: usize, stride: usize) -> Result<PcMap> {
    let compact = CompactRecurrent::from_model(model);
    let (mut summed, mut predicted, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for c in chunks {
        let ends = window_ends(c.len(), seq_len, stride);
        if ends.is_empty() {
            continue;
        }
        let decisions = compact.infer_at(c.lsf4.view(), &ends)?;
        for (&e, d) in ends.iter().zip(&decisions) {
            summed.push(c.summed[e]);
            predicted.push(d.class);
            labels.push(c.labels[e]);
        }
    }
    fit_pc_map_with_fallback(&summed, &predicted, &labels)
}

/// A trained classifier ready for inference.
pub enum Trained {
    Lda(LdaModel),
    Recurrent(CompactRecurrent),
}

impl Trained {
    /// One decision per frame of a contiguous stream.
    pub fn decisions(&self, lsf4: ArrayView2<f64>) -> Result<Vec<Decision>> {
        match self {
            Trained::Lda(m) => m.predict_all(lsf4),
            Trained::Recurrent(c) => c.sliding_infer(lsf4),
        }
    }
}

pub fn load_trained(dir: &Path, kind: ClassifierKind) -> Result<(Trained, PcMap)> {
    let path = model_path(dir, kind);
    if !path.exists() {
        return Err(Error::Missing(format!("model {} not found", path.display())));
    }
    let trained = match (load_model(&path)?, kind.is_recurrent()) {
        (StoredModel::Lda(m), false) => Trained::Lda(m),
        (StoredModel::Recurrent { model, .. }, true) => Trained::Recurrent(CompactRecurrent::from_model(&model)),
        _ => return Err(Error::MalformedModel(format!("{} does not hold a {kind} model", path.display()))),
    };
    Ok((trained, read_json(&pc_map_path(dir, kind))?))
}

// ---------------------------------------------------------------- offline

#[derive(Debug, Serialize)]
struct DecisionRow {
    frame: usize,
    time: f64,
    label: MotionClass,
    raw_class: MotionClass,
    confidence: f64,
    rejected: bool,
    class: MotionClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub subject: usize,
    pub classifier: ClassifierKind,
    pub accuracy: f64,
    pub total_error_rate: f64,
    pub instability: f64,
}

/// Decision streams and reports on each subject's held-out test trial.
pub fn cmd_offline(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(usize, Vec<OfflineReport>)>> {
    cfg.validate()?;
    let per_subject = cfg
        .plans()?
        .par_iter()
        .map(|plan| offline_subject(cfg, plan, out).map(|r| (plan.index, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out.join("offline.csv"))?;
    for (subject, reports) in &per_subject {
        for (kind, r) in cfg.roster.iter().zip(reports) {
            w.serialize(OfflineRow {
                subject: *subject,
                classifier: *kind,
                accuracy: r.accuracy,
                total_error_rate: r.total_error_rate,
                instability: r.instability,
            })?;
        }
    }
    w.flush()?;
    write_manifest(cfg, out)?;
    Ok(per_subject)
}

fn offline_subject(cfg: &ExperimentConfig, plan: &SubjectPlan, out: &Path) -> Result<Vec<OfflineReport>> {
    let dir = plan.dir(out);
    let features: FeatureConfig = read_json(&dir.join("models").join("features.json"))?;
    let chain = FilterChain::new(&cfg.filter, SAMPLE_RATE)?;
    let session = load_session(&dir, SessionKind::Continuous, plan.test_continuous)?;
    let frames = featurize(&chain.apply(session.signal_f64().view())?, &cfg.frame, &features)?;
    let labeled = label_continuous(&frames, &session.timeline, &cfg.crt)?;
    let thresholds = cfg.thresholds();
    let mut reports = Vec::new();
    for &kind in &cfg.roster {
        let (trained, _) = load_trained(&dir, kind)?;
        let decisions = trained.decisions(frames.lsf4.view())?;
        let mut w = csv::Writer::from_path(dir.join("offline").join(format!("{}_decisions.csv", kind.stem())))?;
        for (k, (d, &label)) in decisions.iter().zip(&labeled.labels).enumerate() {
            let g = reject(d, &cfg.rejection);
            w.serialize(DecisionRow {
                frame: k,
                time: frames.center_time(k),
                label,
                raw_class: d.class,
                confidence: d.confidence,
                rejected: g.rejected,
                class: g.class,
            })?;
        }
        w.flush()?;
        reports.push(offline_report(kind.name(), &decisions, &labeled.labels, &cfg.rejection, &thresholds)?);
    }
    write_json(&dir.join("offline").join("report.json"), &reports)?;
    Ok(reports)
}

// ---------------------------------------------------------------- fitts

pub const METRIC_NAMES: [&str; 7] = [
    "completion_rate",
    "movement_time",
    "throughput",
    "path_efficiency",
    "stopping_distance",
    "overshoots",
    "instability",
];

pub fn metric_values(m: &FittsMetrics) -> [f64; 7] {
    [
        m.completion_rate,
        m.movement_time,
        m.throughput,
        m.path_efficiency,
        m.stopping_distance,
        m.overshoots,
        m.instability,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub subject: usize,
    pub classifier: String,
    pub metric: String,
    pub value: f64,
}

fn metric_rows(subject: usize, classifier: &str, m: &FittsMetrics) -> Vec<MetricRow> {
    METRIC_NAMES
        .iter()
        .zip(metric_values(m))
        .map(|(name, value)| MetricRow { subject, classifier: classifier.to_string(), metric: name.to_string(), value })
        .collect()
}

/// Passes frames through while keeping a copy of each one.
struct Recorder<'c> {
    inner: &'c mut dyn OnlineClassifier,
    frames: Vec<[f64; LSF4_DIM]>,
}

impl OnlineClassifier for Recorder<'_> {
    fn classify(&mut self, lsf4: &[f64]) -> Result<Decision> {
        let mut row = [0.0; LSF4_DIM];
        row.copy_from_slice(lsf4);
        self.frames.push(row);
        self.inner.classify(lsf4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFitts {
    pub subject: usize,
    pub order: Vec<ClassifierKind>,
    pub metrics: Vec<(ClassifierKind, FittsMetrics)>,
    pub oracle: FittsMetrics,
}

/// Fitts runs for every subject, classifiers in Latin-square order, plus one
/// oracle-decoded run per subject.
pub fn cmd_fitts(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SubjectFitts>> {
    cfg.validate()?;
    let results = cfg.plans()?.par_iter().map(|plan| fitts_subject(cfg, plan, out)).collect::<Result<Vec<_>>>()?;
    let mut metrics = csv::Writer::from_path(out.join("metrics.csv"))?;
    let mut oracle = csv::Writer::from_path(out.join("oracle_metrics.csv"))?;
    let mut order = csv::Writer::from_path(out.join("fitts_order.csv"))?;
    order.write_record(["subject", "position", "classifier"])?;
    for r in &results {
        for &kind in &cfg.roster {
            let m = &r.metrics.iter().find(|(k, _)| *k == kind).expect("every roster entry ran").1;
            for row in metric_rows(r.subject, kind.name(), m) {
                metrics.serialize(row)?;
            }
        }
        for row in metric_rows(r.subject, "oracle", &r.oracle) {
            oracle.serialize(row)?;
        }
        for (pos, kind) in r.order.iter().enumerate() {
            order.write_record([r.subject.to_string(), pos.to_string(), kind.name().to_string()])?;
        }
    }
    metrics.flush()?;
    oracle.flush()?;
    order.flush()?;
    write_manifest(cfg, out)?;
    Ok(results)
}

fn fitts_subject(cfg: &ExperimentConfig, plan: &SubjectPlan, out: &Path) -> Result<SubjectFitts> {
    let dir = plan.dir(out);
    let features: FeatureConfig = read_json(&dir.join("models").join("features.json"))?;
    let record = cfg.latent.subjects.contains(&plan.index);
    let mut metrics = Vec::new();
    for &kind in &plan.order {
        let started = std::time::Instant::now();
        let (trained, pc_map) = load_trained(&dir, kind)?;
        let mut lda;
        let mut stream;
        let inner: &mut dyn OnlineClassifier = match &trained {
            Trained::Lda(m) => {
                lda = m.clone();
                &mut lda
            }
            Trained::Recurrent(c) => {
                stream = c.stream();
                &mut stream
            }
        };
        let mut recorder = Recorder { inner, frames: Vec::new() };
        let mut driver = Driver::Emg(EmgDriver {
            classifier: &mut recorder,
            pc_map: &pc_map,
            rejection: cfg.rejection,
            features,
            filter: cfg.filter,
            frame: cfg.frame,
            profile: &plan.profile,
        });
        let logs = run_fitts(&mut driver, &cfg.fitts, &cfg.persona, derive_seed(plan.seed, &[0xF1, kind.index() as u64]))?;
        drop(driver);
        let m = compute_metrics(&scored(&logs), &cfg.fitts)?;
        write_tick_csv(&logs, dir.join("fitts").join(format!("{}_ticks.csv", kind.stem())))?;
        write_json(&dir.join("fitts").join(format!("{}_metrics.json", kind.stem())), &m)?;
        if record {
            write_feature_csv(&recorder.frames[WARM_UP_TICKS..], &fitts_features_path(&dir, kind))?;
        }
        log::info!(
            "subject {:02}: {kind} Fitts completion {:.2}, instability {:.3} ({:.1} s)",
            plan.index,
            m.completion_rate,
            m.instability,
            started.elapsed().as_secs_f64()
        );
        metrics.push((kind, m));
    }
    let logs = run_fitts(&mut Driver::Oracle, &cfg.fitts, &cfg.persona, derive_seed(plan.seed, &[0xF1, 0x0AC1E]))?;
    let oracle = compute_metrics(&scored(&logs), &cfg.fitts)?;
    write_json(&dir.join("fitts").join("oracle_metrics.json"), &oracle)?;
    Ok(SubjectFitts { subject: plan.index, order: plan.order.clone(), metrics, oracle })
}

fn fitts_features_path(dir: &Path, kind: ClassifierKind) -> PathBuf {
    dir.join("fitts").join(format!("{}_lsf4.csv", kind.stem()))
}

fn write_feature_csv(frames: &[[f64; LSF4_DIM]], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(crate::features::feature_layout())?;
    for f in frames {
        w.write_record(f.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_feature_csv(path: &Path) -> Result<Array2<f64>> {
    if !path.exists() {
        return Err(Error::Missing(format!("{} not found", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != LSF4_DIM {
            return Err(Error::Dimension { expected: LSF4_DIM, got: rec.len() });
        }
        for v in rec.iter() {
            values.push(v.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, LSF4_DIM), values).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.exists() {
        return Err(Error::Missing(format!("{} not found", path.display())));
    }
    csv::Reader::from_path(path)?.deserialize().map(|r| r.map_err(Error::from)).collect()
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub metric: String,
    /// Column order of the ANOVA table.
    pub classifiers: Vec<String>,
    pub baseline: Option<String>,
    pub result: StatResult,
}

/// RM-ANOVA per metric with post-hoc comparisons against LDA-R.
pub fn cmd_stats(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricStats>> {
    let rows = read_metrics(&out.join("metrics.csv"))?;
    let stats = stats_from_rows(&rows, &cfg.roster, cfg.alpha)?;
    write_json(&out.join("stats.json"), &stats)?;
    write_manifest(cfg, out)?;
    Ok(stats)
}

pub fn stats_from_rows(rows: &[MetricRow], roster: &[ClassifierKind], alpha: f64) -> Result<Vec<MetricStats>> {
    let subjects: Vec<usize> = rows.iter().map(|r| r.subject).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let names: Vec<String> = roster.iter().map(|k| k.name().to_string()).collect();
    let baseline = roster.iter().position(|&k| k == ClassifierKind::LdaR);
    let mut lookup: BTreeMap<(usize, &str, &str), f64> = BTreeMap::new();
    for r in rows {
        lookup.insert((r.subject, r.classifier.as_str(), r.metric.as_str()), r.value);
    }
    METRIC_NAMES
        .iter()
        .map(|&metric| {
            let mut table = Array2::zeros((subjects.len(), names.len()));
            for (i, &s) in subjects.iter().enumerate() {
                for (j, name) in names.iter().enumerate() {
                    table[[i, j]] = *lookup.get(&(s, name.as_str(), metric)).ok_or_else(|| {
                        Error::Missing(format!("metric {metric} for subject {s}, classifier {name}"))
                    })?;
                }
            }
            let result = match baseline {
                Some(b) => rm_anova_with_posthoc(table.view(), b, alpha)?,
                None => rm_anova(table.view())?,
            };
            Ok(MetricStats {
                metric: metric.to_string(),
                classifiers: names.clone(),
                baseline: baseline.map(|b| names[b].clone()),
                result,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- latent

#[derive(Debug, Serialize)]
struct LatentRow {
    source: &'static str,
    recording: String,
    frame: usize,
    tag: &'static str,
    class: MotionClass,
    pc1: f64,
    pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub subject: usize,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Points per source, in export order.
    pub counts: Vec<(String, usize)>,
}

struct Points {
    source: &'static str,
    recording: String,
    tag: &'static str,
    frames: Vec<usize>,
    classes: Vec<MotionClass>,
    embeddings: Array2<f64>,
}

/// Embeds ramp, continuous training, test and Fitts windows with the
/// LSTM-V backbone and projects them onto two shared principal components.
pub fn cmd_latent(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<LatentSummary>> {
    cfg.validate()?;
    let subjects: Vec<usize> = cfg.latent.subjects.iter().copied().filter(|&s| s < cfg.n_virtual_subjects).collect();
    let res = subjects
        .par_iter()
        .map(|&s| latent_subject(cfg, &cfg.plan(s)?, out))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(cfg, out)?;
    Ok(res)
}

fn latent_subject(cfg: &ExperimentConfig, plan: &SubjectPlan, out: &Path) -> Result<LatentSummary> {
    let dir = plan.dir(out);
    let model = match load_model(&model_path(&dir, ClassifierKind::LstmV))? {
        StoredModel::Recurrent { model, .. } => CompactRecurrent::from_model(&model),
        _ => return Err(Error::MalformedModel("LSTM-V file does not hold a recurrent model".into())),
    };
    let data = load_subject_data(cfg, &dir)?;
    let (seq_len, stride) = (cfg.arch.sequence_len, cfg.latent.stride);
    let labeled = |source: &'static str, recording: String, c: &Chunk| -> Result<Points> {
        let ends = window_ends(c.len(), seq_len, stride);
        Ok(Points {
            source,
            recording,
            tag: "label",
            classes: ends.iter().map(|&e| c.labels[e]).collect(),
            embeddings: model.embed_at(c.lsf4.view(), &ends)?,
            frames: ends,
        })
    };
    let mut points = Vec::new();
    for (t, segments) in data.ramp.iter().enumerate() {
        for (p, c) in segments.iter().enumerate() {
            points.push(labeled("ramp", format!("ramp_{t}_prompt_{p}"), c)?);
        }
    }
    for t in plan.training_continuous(cfg.protocol.continuous_trials) {
        points.push(labeled("continuous_train", format!("continuous_{t}"), &data.continuous[t])?);
    }
    points.push(labeled("continuous_test", format!("continuous_{}", plan.test_continuous), &data.continuous[plan.test_continuous])?);
    for &kind in &cfg.roster {
        let frames = read_feature_csv(&fitts_features_path(&dir, kind))?;
        let ends = window_ends(frames.nrows(), seq_len, stride);
        let decisions = model.infer_at(frames.view(), &ends)?;
        points.push(Points {
            source: "fitts",
            recording: kind.name().to_string(),
            tag: "prediction",
            classes: decisions.iter().map(|d| d.class).collect(),
            embeddings: model.embed_at(frames.view(), &ends)?,
            frames: ends,
        });
    }
    let views: Vec<ArrayView2<f64>> = points.iter().map(|p| p.embeddings.view()).collect();
    let all = concatenate(Axis(0), &views).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let pca = pca_project(all.view(), 2)?;
    let mut counts: Vec<(String, usize)> = Vec::new();
    let mut writers: BTreeMap<&str, csv::Writer<fs::File>> = BTreeMap::new();
    let mut row = 0;
    for p in &points {
        if !writers.contains_key(p.source) {
            writers.insert(p.source, csv::Writer::from_path(dir.join("latent").join(format!("{}.csv", p.source)))?);
            counts.push((p.source.to_string(), 0));
        }
        let w = writers.get_mut(p.source).expect("inserted");
        for (i, (&frame, &class)) in p.frames.iter().zip(&p.classes).enumerate() {
            let proj = pca.projected.row(row + i);
            w.serialize(LatentRow {
                source: p.source,
                recording: p.recording.clone(),
                frame,
                tag: p.tag,
                class,
                pc1: proj[0],
                pc2: proj.get(1).copied().unwrap_or(0.0),
            })?;
        }
        row += p.frames.len();
        counts.iter_mut().find(|(s, _)| s == p.source).expect("registered").1 += p.frames.len();
    }
    for w in writers.values_mut() {
        w.flush()?;
    }
    let summary = LatentSummary {
        subject: plan.index,
        explained_variance: pca.explained_variance.to_vec(),
        total_variance: pca.total_variance,
        counts,
    };
    write_json(&dir.join("latent").join("pca.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub subjects: Vec<(usize, u64)>,
    /// Relative path to SHA-256 (hex), sorted by path.
    pub files: BTreeMap<String, String>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join("manifest.json") {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Hashes every file under `out` into `manifest.json`.
pub fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut paths = Vec::new();
    collect_files(out, out, &mut paths)?;
    let mut files = BTreeMap::new();
    for p in paths {
        let rel = p.strip_prefix(out).expect("under root").to_string_lossy().replace('\\', "/");
        files.insert(rel, sha256_file(&p)?);
    }
    let manifest = Manifest {
        seed: cfg.seed,
        subjects: (0..cfg.n_virtual_subjects).map(|i| (i, cfg.subject_seed(i))).collect(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    read_json(&out.join("manifest.json"))
}

/// generate, train, offline, fitts, stats and latent in sequence.
pub fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cmd_generate(cfg, out)?;
    cmd_train(cfg, out)?;
    cmd_offline(cfg, out)?;
    cmd_fitts(cfg, out)?;
    if cfg.n_virtual_subjects >= 2 {
        cmd_stats(cfg, out)?;
    }
    if cfg.roster.contains(&ClassifierKind::LstmV) {
        cmd_latent(cfg, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_names_roundtrip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
            assert_eq!(k.stem().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("GRU".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn empty_config_is_the_default() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.roster.len(), 5);
        assert_eq!(cfg.protocol.ramp_trials, 5);
        assert_eq!(cfg.protocol.continuous_trials, 6);
        assert_eq!(cfg.thresholds().len(), 21);
    }

    #[test]
    fn toml_overrides_sections() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 9\nroster = [\"LDA-R\", \"LSTM-V\"]\n[budget]\nxent_max_epochs = 3\n[rejection]\nthreshold = 0.7\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.roster, vec![ClassifierKind::LdaR, ClassifierKind::LstmV]);
        assert_eq!(cfg.budget.xent_max_epochs, 3);
        assert_eq!(cfg.budget.ramp_stride, StudyBudget::default().ramp_stride);
        assert_eq!(cfg.rejection.threshold, 0.7);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("roster = []").is_err());
        assert!(ExperimentConfig::from_toml_str("roster = [\"LDA-R\", \"LDA-R\"]").is_err());
    }

    #[test]
    fn plans_follow_the_latin_square_and_split_rules() {
        let cfg = ExperimentConfig::default();
        let rows = balanced_latin_square(5).unwrap();
        let mut seeds = HashSet::new();
        for i in 0..10 {
            let plan = cfg.plan(i).unwrap();
            let expected: Vec<ClassifierKind> = rows[i].iter().map(|&j| ClassifierKind::ALL[j]).collect();
            assert_eq!(plan.order, expected);
            assert_eq!(plan.test_continuous, 5);
            assert!(plan.validation_continuous < 5);
            assert!(plan.validation_ramp < 5);
            let train = plan.training_continuous(6);
            assert_eq!(train.len(), 4);
            assert!(!train.contains(&plan.validation_continuous) && !train.contains(&5));
            assert!(seeds.insert(plan.seed));
        }
        assert_eq!(cfg.plan(3).unwrap(), cfg.plan(3).unwrap());
    }

    #[test]
    fn window_ends_match_sequence_set() {
        let mut set = SequenceSet::new(5);
        set.add_trial(Array2::zeros((23, 2)), &[MotionClass::NM; 23], 3).unwrap();
        let ends = window_ends(23, 5, 3);
        assert_eq!(ends.len(), set.len());
        for (i, &e) in ends.iter().enumerate() {
            assert_eq!(set.anchor(i), (0, e));
        }
        assert!(window_ends(3, 5, 1).is_empty());
    }

    #[test]
    fn stats_require_every_cell_and_gate_on_alpha() {
        let roster = [ClassifierKind::LdaR, ClassifierKind::LstmV];
        let mut rows = Vec::new();
        for s in 0..6 {
            for (j, k) in roster.iter().enumerate() {
                for (m, name) in METRIC_NAMES.iter().enumerate() {
                    let value = if m == 0 { 0.5 + j as f64 * 0.3 + 0.01 * s as f64 } else { 1.0 + s as f64 };
                    rows.push(MetricRow { subject: s, classifier: k.name().into(), metric: name.to_string(), value });
                }
            }
        }
        let stats = stats_from_rows(&rows, &roster, 0.05).unwrap();
        assert_eq!(stats.len(), 7);
        assert!(stats[0].result.p < 0.05);
        assert_eq!(stats[0].result.posthoc.len(), 1);
        assert_eq!(stats[1].result.f, 0.0);
        assert!(stats[1].result.posthoc.is_empty());
        rows.pop();
        assert!(matches!(stats_from_rows(&rows, &roster, 0.05), Err(Error::Missing(_))));
    }

    #[test]
    fn zero_subjects_generate_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { n_virtual_subjects: 0, ..Default::default() };
        cmd_generate(&cfg, tmp.path()).unwrap();
        let manifest = read_manifest(tmp.path()).unwrap();
        assert_eq!(manifest.files.keys().collect::<Vec<_>>(), vec!["config.json"]);
    }

    #[test]
    fn missing_sessions_are_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { n_virtual_subjects: 1, ..Default::default() };
        assert!(matches!(cmd_train(&cfg, tmp.path()), Err(Error::Missing(_))));
    }
}
