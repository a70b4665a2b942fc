//! Cross-entropy training with AdamW and early stopping, and sliding-window
//! inference.

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig, ParamSet};
use super::recurrent::{Head, ModelGrads, ModelParams, RecurrentModel};
use super::Decision;
use crate::dataset::MotionClass;
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::labeling::LabeledFrameSequence;
use crate::rng::rng_for;

/// Windows per forward call during evaluation.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    EndToEnd,
    HeadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_end_to_end: f64,
    pub lr_stagewise: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Frames between the end indices of consecutive training windows.
    pub window_stride: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            weight_decay: 1e-3,
            lr_end_to_end: 1e-4,
            lr_stagewise: 1e-3,
            patience: 10,
            max_epochs: 200,
            window_stride: 1,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.weight_decay >= 0.0
            && self.lr_end_to_end > 0.0
            && self.lr_stagewise > 0.0
            && self.patience > 0
            && self.max_epochs > 0
            && self.window_stride > 0;
        if !ok {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    pub fn lr(&self, mode: TrainMode) -> f64 {
        match mode {
            TrainMode::EndToEnd => self.lr_end_to_end,
            TrainMode::HeadOnly => self.lr_stagewise,
        }
    }
}

/// Fixed-length windows over standardized trials, labeled by their last frame.
#[derive(Debug, Clone, Default)]
pub struct SequenceSet {
    seq_len: usize,
    trials: Vec<Array2<f64>>,
    labels: Vec<Vec<usize>>,
    windows: Vec<(usize, usize)>,
}

impl SequenceSet {
    pub fn new(seq_len: usize) -> Self {
        Self { seq_len, ..Default::default() }
    }

    /// Adds a trial of standardized frames; window ends step by `stride`.
    pub fn add_trial(&mut self, frames: Array2<f64>, labels: &[MotionClass], stride: usize) -> Result<()> {
        if frames.nrows() != labels.len() {
            return Err(Error::Dimension { expected: frames.nrows(), got: labels.len() });
        }
        if stride == 0 || self.seq_len == 0 {
            return Err(Error::InvalidInput("window stride and length must be positive".into()));
        }
        let t = self.trials.len();
        let mut end = self.seq_len - 1;
        while end < frames.nrows() {
            self.windows.push((t, end));
            end += stride;
        }
        self.trials.push(frames);
        self.labels.push(labels.iter().map(|c| c.index()).collect());
        Ok(())
    }

    pub fn from_labeled(
        seqs: &[&LabeledFrameSequence],
        standardizer: &Standardizer,
        seq_len: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut set = Self::new(seq_len);
        for seq in seqs {
            set.add_trial(standardizer.apply(seq.frames.lsf4.view())?, &seq.labels, stride)?;
        }
        Ok(set)
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn trial_len(&self, trial: usize) -> usize {
        self.trials[trial].nrows()
    }

    /// `(trial, end frame)` of window `i`.
    pub fn anchor(&self, i: usize) -> (usize, usize) {
        self.windows[i]
    }

    pub fn label(&self, i: usize) -> usize {
        let (t, e) = self.windows[i];
        self.labels[t][e]
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Frames `[end + 1 - seq_len, end]` of a trial.
    pub fn window(&self, trial: usize, end: usize) -> ArrayView2<'_, f64> {
        self.trials[trial].slice(s![end + 1 - self.seq_len..=end, ..])
    }

    /// Stacks windows into `[T, B, D]`.
    pub fn batch(&self, idx: &[usize]) -> Array3<f64> {
        let d = self.trials.first().map(|t| t.ncols()).unwrap_or(0);
        let mut out = Array3::zeros((self.seq_len, idx.len(), d));
        for (b, &i) in idx.iter().enumerate() {
            let (t, e) = self.windows[i];
            out.slice_mut(s![.., b, ..]).assign(&self.window(t, e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn check_loss(loss: f64, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, batch })
    }
}

fn mean_xent_embedded(head: &Head, emb: &Array2<f64>, labels: &[usize]) -> f64 {
    let (loss, _) = Head::xent(&head.logits(emb), labels);
    loss
}

fn eval_loss(model: &RecurrentModel, set: &SequenceSet) -> Result<f64> {
    let mut total = 0.0;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let emb = model.backbone.embed(&set.batch(chunk))?;
        let labels: Vec<usize> = chunk.iter().map(|&i| set.label(i)).collect();
        total += mean_xent_embedded(&model.head, &emb, &labels) * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

fn embed_all(model: &RecurrentModel, set: &SequenceSet) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((set.len(), model.arch().dense));
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let emb = model.backbone.embed(&set.batch(chunk))?;
        out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..]).assign(&emb);
    }
    Ok(out)
}

/// Early-stopping bookkeeping; strict improvement, earliest best wins.
struct Stopper {
    best: f64,
    best_epoch: usize,
    patience: usize,
}

impl Stopper {
    fn new(patience: usize) -> Self {
        Self { best: f64::INFINITY, best_epoch: 0, patience }
    }

    /// Returns `(improved, stop)`.
    fn update(&mut self, epoch: usize, val: f64) -> (bool, bool) {
        let improved = val < self.best;
        if improved {
            self.best = val;
            self.best_epoch = epoch;
        }
        (improved, epoch - self.best_epoch >= self.patience)
    }
}

/// Trains with mean cross-entropy; restores the best-validation parameters.
///
/// `HeadOnly` leaves the backbone untouched and trains the head on
/// precomputed embeddings.
pub fn train_xent(
    model: &mut RecurrentModel,
    train: &SequenceSet,
    val: &SequenceSet,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let opt_cfg = AdamWConfig::new(cfg.lr(mode), cfg.weight_decay);
    let mut history = Vec::new();
    let mut stopper = Stopper::new(cfg.patience);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    match mode {
        TrainMode::EndToEnd => {
            let mut opt = AdamW::new(opt_cfg, &ModelParams { backbone: &mut model.backbone, head: &mut model.head });
            let mut best = (model.backbone.clone(), model.head.clone());
            for epoch in 1..=cfg.max_epochs {
                order.shuffle(&mut rng_for(cfg.rng_seed, &[0x5411, epoch as u64]));
                let mut train_loss = 0.0;
                for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
                    let xs = train.batch(chunk);
                    let labels: Vec<usize> = chunk.iter().map(|&i| train.label(i)).collect();
                    let (emb, cache) = model.backbone.forward_train(&xs)?;
                    let (loss, d_logits) = Head::xent(&model.head.logits(&emb), &labels);
                    check_loss(loss, epoch, bi + 1)?;
                    let (head_grads, d_emb) = model.head.backward(&emb, &d_logits);
                    let grads = ModelGrads { backbone: model.backbone.backward(&cache, &d_emb), head: head_grads };
                    let mut params = ModelParams { backbone: &mut model.backbone, head: &mut model.head };
                    opt.step(&mut params, &grads);
                    train_loss += loss * chunk.len() as f64;
                }
                let val_loss = eval_loss(model, val)?;
                check_loss(val_loss, epoch, 0)?;
                history.push(EpochRecord { epoch, train_loss: train_loss / train.len() as f64, val_loss });
                let (improved, stop) = stopper.update(epoch, val_loss);
                if improved {
                    best = (model.backbone.clone(), model.head.clone());
                }
                if stop {
                    stopped_early = epoch < cfg.max_epochs;
                    break;
                }
            }
            model.backbone = best.0;
            model.head = best.1;
        }
        TrainMode::HeadOnly => {
            let train_emb = embed_all(model, train)?;
            let val_emb = embed_all(model, val)?;
            let train_labels = train.labels();
            let val_labels = val.labels();
            let mut opt = AdamW::new(opt_cfg, &model.head);
            let mut best = model.head.clone();
            let d = train_emb.ncols();
            for epoch in 1..=cfg.max_epochs {
                order.shuffle(&mut rng_for(cfg.rng_seed, &[0x4EAD, epoch as u64]));
                let mut train_loss = 0.0;
                for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
                    let mut emb = Array2::zeros((chunk.len(), d));
                    for (r, &i) in chunk.iter().enumerate() {
                        emb.row_mut(r).assign(&train_emb.row(i));
                    }
                    let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
                    let (loss, d_logits) = Head::xent(&model.head.logits(&emb), &labels);
                    check_loss(loss, epoch, bi + 1)?;
                    let (grads, _) = model.head.backward(&emb, &d_logits);
                    opt.step(&mut model.head, &grads);
                    train_loss += loss * chunk.len() as f64;
                }
                let val_loss = mean_xent_embedded(&model.head, &val_emb, &val_labels);
                check_loss(val_loss, epoch, 0)?;
                history.push(EpochRecord { epoch, train_loss: train_loss / train.len() as f64, val_loss });
                let (improved, stop) = stopper.update(epoch, val_loss);
                if improved {
                    best = model.head.clone();
                }
                if stop {
                    stopped_early = epoch < cfg.max_epochs;
                    break;
                }
            }
            model.head = best;
        }
    }
    debug_assert!(model.head.all_finite());
    Ok(TrainHistory {
        epochs: history,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        stopped_early,
    })
}

/// One decision per raw LSF4 frame. Frames before `sequence_len - 1` are NM
/// with confidence 1; later frames use the window ending at that frame.
pub fn sliding_infer(model: &RecurrentModel, frames: ArrayView2<f64>) -> Result<Vec<Decision>> {
    let arch = model.arch();
    let z = model.standardizer.apply(frames)?;
    let n = z.nrows();
    let t_len = arch.sequence_len;
    let mut out = vec![Decision::no_movement(); n.min(t_len - 1)];
    let ends: Vec<usize> = (t_len - 1..n).collect();
    for chunk in ends.chunks(EVAL_CHUNK) {
        let mut xs = Array3::zeros((t_len, chunk.len(), arch.input_dim));
        for (b, &e) in chunk.iter().enumerate() {
            xs.slice_mut(s![.., b, ..]).assign(&z.slice(s![e + 1 - t_len..=e, ..]));
        }
        out.extend(model.posteriors(&xs)?.into_iter().map(Decision::from_posterior));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::recurrent::RecurrentArch;

    fn arch() -> RecurrentArch {
        RecurrentArch { input_dim: 4, hidden: 16, dense: 16, n_classes: 7, sequence_len: 5 }
    }

    fn ident(d: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    /// Class k shows as a +2 offset on feature k % 4 (classes 0..3 only).
    fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<MotionClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 4));
        let mut y = Vec::new();
        for i in 0..n {
            let k = (i / 20) % 4;
            for j in 0..4 {
                x[[i, j]] = rng.gen_range(-0.5..0.5) + if j == k { 2.0 } else { 0.0 };
            }
            y.push(MotionClass::from_index(k).unwrap());
        }
        (x, y)
    }

    fn set(seed: u64) -> SequenceSet {
        let mut s = SequenceSet::new(5);
        let (x, y) = separable(400, seed);
        s.add_trial(x, &y, 1).unwrap();
        s
    }

    #[test]
    fn windows_and_batches() {
        let s = set(1);
        assert_eq!(s.len(), 396);
        assert_eq!(s.anchor(0), (0, 4));
        let b = s.batch(&[0, 3]);
        assert_eq!(b.dim(), (5, 2, 4));
        assert_eq!(b[[4, 1, 2]], s.window(0, 7)[[4, 2]]);
        let mut strided = SequenceSet::new(5);
        let (x, y) = separable(20, 0);
        strided.add_trial(x, &y, 4).unwrap();
        assert_eq!(strided.len(), 4);
    }

    #[test]
    fn separable_data_is_learned() {
        let mut m = RecurrentModel::init(arch(), ident(4), 2);
        let cfg = TrainConfig { batch_size: 32, lr_end_to_end: 1e-2, max_epochs: 50, ..Default::default() };
        let hist = train_xent(&mut m, &set(1), &set(2), &cfg, TrainMode::EndToEnd).unwrap();
        let (x, y) = separable(400, 3);
        let dec = sliding_infer(&m, x.view()).unwrap();
        let correct = dec.iter().zip(&y).skip(4).filter(|(d, l)| d.class == **l).count();
        let acc = correct as f64 / (y.len() - 4) as f64;
        assert!(acc >= 0.95, "accuracy {acc}, history {:?}", hist.best_epoch);
    }

    #[test]
    fn constant_validation_stops_after_patience() {
        let mut m = RecurrentModel::init(arch(), ident(4), 2);
        let cfg = TrainConfig { lr_end_to_end: 1e-300, weight_decay: 0.0, ..Default::default() };
        let hist = train_xent(&mut m, &set(1), &set(2), &cfg, TrainMode::EndToEnd).unwrap();
        assert_eq!(hist.epochs.len(), 11);
        assert_eq!(hist.best_epoch, 1);
        assert!(hist.stopped_early);
    }

    #[test]
    fn best_epoch_parameters_are_restored() {
        let mut m = RecurrentModel::init(arch(), ident(4), 5);
        let cfg = TrainConfig { batch_size: 64, lr_end_to_end: 5e-2, max_epochs: 25, patience: 3, ..Default::default() };
        let val = set(9);
        let hist = train_xent(&mut m, &set(1), &val, &cfg, TrainMode::EndToEnd).unwrap();
        let min = hist.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(hist.best_val_loss, min);
        assert!((eval_loss(&m, &val).unwrap() - min).abs() < 1e-9);
    }

    #[test]
    fn head_only_freezes_backbone_and_is_deterministic() {
        let base = RecurrentModel::init(arch(), ident(4), 7);
        let cfg = TrainConfig { batch_size: 64, max_epochs: 5, rng_seed: 3, ..Default::default() };
        let mut a = base.clone();
        let mut b = base.clone();
        train_xent(&mut a, &set(1), &set(2), &cfg, TrainMode::HeadOnly).unwrap();
        train_xent(&mut b, &set(1), &set(2), &cfg, TrainMode::HeadOnly).unwrap();
        assert_eq!(a.backbone, base.backbone);
        assert_ne!(a.head, base.head);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_is_error() {
        let mut m = RecurrentModel::init(arch(), ident(4), 2);
        let empty = SequenceSet::new(5);
        assert!(train_xent(&mut m, &set(1), &empty, &TrainConfig::default(), TrainMode::EndToEnd).is_err());
    }

    #[test]
    fn sliding_inference_warm_up_and_steady_state() {
        let m = RecurrentModel::init(arch(), ident(4), 2);
        let short = Array2::from_elem((3, 4), 0.5);
        let d = sliding_infer(&m, short.view()).unwrap();
        assert!(d.iter().all(|d| *d == Decision::no_movement()));
        let long = Array2::from_elem((12, 4), 0.5);
        let d = sliding_infer(&m, long.view()).unwrap();
        assert_eq!(d.len(), 12);
        for w in d[4..].windows(2) {
            assert_eq!(w[0], w[1]);
        }
        let (x, _) = separable(30, 1);
        let d = sliding_infer(&m, x.view()).unwrap();
        let mut stream = crate::models::StreamingRecurrent::new(&m);
        for (t, row) in x.rows().into_iter().enumerate() {
            let s = stream.push_raw(row.as_slice().unwrap()).unwrap();
            for (a, b) in s.posterior.iter().zip(d[t].posterior) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
