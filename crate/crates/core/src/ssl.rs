//! Self-supervised pre-training of the recurrent backbone with VICReg on
//! pairs of augmented views, followed by a frozen-backbone linear probe.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::models::optim::{AdamW, AdamWConfig, ParamSet};
use crate::models::recurrent::{Backbone, Head, RecurrentModel};
use crate::models::train::{train_xent, SequenceSet, TrainConfig, TrainHistory, TrainMode};
use crate::rng::{derive_seed, rng_for};

const EMBED_CHUNK: usize = 512;
/// Per-dimension std below which a dimension counts as collapsed.
pub const COLLAPSE_STD: f64 = 0.01;
/// Consecutive fully collapsed epochs that abort pre-training.
pub const COLLAPSE_EPOCHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VicregConfig {
    pub lambda_inv: f64,
    pub mu_var: f64,
    pub nu_cov: f64,
    pub gamma: f64,
    pub var_eps: f64,
    pub use_expander: bool,
    pub expander_dim: usize,
}

impl Default for VicregConfig {
    fn default() -> Self {
        Self {
            lambda_inv: 25.0,
            mu_var: 25.0,
            nu_cov: 1.0,
            gamma: 1.0,
            var_eps: 1e-4,
            use_expander: false,
            expander_dim: 256,
        }
    }
}

impl VicregConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_inv >= 0.0
            && self.mu_var >= 0.0
            && self.nu_cov >= 0.0
            && self.gamma > 0.0
            && self.var_eps > 0.0
            && (!self.use_expander || self.expander_dim > 0);
        if !ok {
            return Err(Error::Config(format!("invalid VICReg config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VicregTerms {
    pub total: f64,
    pub invariance: f64,
    /// Summed over both branches.
    pub variance: f64,
    /// Summed over both branches.
    pub covariance: f64,
}

fn centered(z: &Array2<f64>) -> Array2<f64> {
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    z - &mean
}

/// Variance hinge of one branch and its gradient.
fn variance_term(zc: &Array2<f64>, cfg: &VicregConfig) -> (f64, Array2<f64>) {
    let (n, d) = zc.dim();
    let mut grad = Array2::zeros((n, d));
    let mut v = 0.0;
    for j in 0..d {
        let col = zc.column(j);
        let var = col.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64;
        let std = (var + cfg.var_eps).sqrt();
        if cfg.gamma - std > 0.0 {
            v += cfg.gamma - std;
            let k = -1.0 / (d as f64 * std * (n - 1) as f64);
            grad.column_mut(j).assign(&col.mapv(|x| k * x));
        }
    }
    (v / d as f64, grad)
}

/// Off-diagonal covariance penalty of one branch and its gradient.
fn covariance_term(zc: &Array2<f64>) -> (f64, Array2<f64>) {
    let (n, d) = zc.dim();
    let mut cov = zc.t().dot(zc) / (n - 1) as f64;
    for i in 0..d {
        cov[[i, i]] = 0.0;
    }
    let c = cov.iter().map(|x| x * x).sum::<f64>() / d as f64;
    let grad = zc.dot(&cov) * (4.0 / (d as f64 * (n - 1) as f64));
    (c, grad)
}

/// Loss terms and gradients with respect to both branches.
pub fn vicreg_loss_grad(
    z: &Array2<f64>,
    zp: &Array2<f64>,
    cfg: &VicregConfig,
) -> Result<(VicregTerms, Array2<f64>, Array2<f64>)> {
    if z.dim() != zp.dim() {
        return Err(Error::Dimension { expected: z.nrows(), got: zp.nrows() });
    }
    let n = z.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("VICReg needs a batch of at least 2".into()));
    }
    let diff = z - zp;
    let invariance = diff.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let d_inv = diff * (2.0 / n as f64);

    let (zc, zpc) = (centered(z), centered(zp));
    let (v1, dv1) = variance_term(&zc, cfg);
    let (v2, dv2) = variance_term(&zpc, cfg);
    let (c1, dc1) = covariance_term(&zc);
    let (c2, dc2) = covariance_term(&zpc);

    let terms = VicregTerms {
        total: cfg.lambda_inv * invariance + cfg.mu_var * (v1 + v2) + cfg.nu_cov * (c1 + c2),
        invariance,
        variance: v1 + v2,
        covariance: c1 + c2,
    };
    let dz = &d_inv * cfg.lambda_inv + &dv1 * cfg.mu_var + &dc1 * cfg.nu_cov;
    let dzp = &d_inv * -cfg.lambda_inv + &dv2 * cfg.mu_var + &dc2 * cfg.nu_cov;
    Ok((terms, dz, dzp))
}

pub fn vicreg_loss(z: &Array2<f64>, zp: &Array2<f64>, cfg: &VicregConfig) -> Result<VicregTerms> {
    vicreg_loss_grad(z, zp, cfg).map(|(t, _, _)| t)
}

/// Optional two-layer projector (linear, ReLU, linear) between the
/// embedding and the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Expander {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Expander {
    pub fn init(input: usize, width: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0xE4A9]);
        let mut u = |shape: (usize, usize), fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn(shape, || rng.gen_range(-b..b))
        };
        Self {
            w1: u((input, width), input),
            b1: Array1::zeros(width),
            w2: u((width, width), width),
            b2: Array1::zeros(width),
        }
    }

    /// Returns `(output, hidden activation)`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut a = x.dot(&self.w1);
        a += &self.b1;
        a.mapv_inplace(|v| v.max(0.0));
        let mut y = a.dot(&self.w2);
        y += &self.b2;
        (y, a)
    }

    /// Returns `(grads, d_input)`.
    pub fn backward(&self, x: &Array2<f64>, hidden: &Array2<f64>, d_y: &Array2<f64>) -> (Self, Array2<f64>) {
        let mut d_a = d_y.dot(&self.w2.t());
        ndarray::Zip::from(&mut d_a).and(hidden).for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        let grads = Self {
            w1: x.t().dot(&d_a),
            b1: d_a.sum_axis(Axis(0)),
            w2: hidden.t().dot(d_y),
            b2: d_y.sum_axis(Axis(0)),
        };
        (grads, d_a.dot(&self.w1.t()))
    }
}

impl ParamSet for Expander {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }
}

/// Backbone plus optional expander, as one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct SslNet {
    pub backbone: Backbone,
    pub expander: Option<Expander>,
}

impl ParamSet for SslNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.backbone.tensors();
        if let Some(e) = &self.expander {
            v.extend(e.tensors());
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.backbone.tensors_mut();
        if let Some(e) = &mut self.expander {
            v.extend(e.tensors_mut());
        }
        v
    }
}

impl SslNet {
    pub fn new(backbone: Backbone, cfg: &VicregConfig, seed: u64) -> Self {
        let expander = cfg
            .use_expander
            .then(|| Expander::init(backbone.arch.dense, cfg.expander_dim, seed));
        Self { backbone, expander }
    }

    /// VICReg loss of two view batches (`[T, B, D]` each) and, when
    /// `with_grads`, the parameter gradients.
    pub fn loss_and_grads(
        &self,
        view_a: &Array3<f64>,
        view_b: &Array3<f64>,
        cfg: &VicregConfig,
        with_grads: bool,
    ) -> Result<(VicregTerms, Option<SslNet>)> {
        let b = view_a.dim().1;
        let both = ndarray::concatenate(Axis(1), &[view_a.view(), view_b.view()])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let (emb, cache) = self.backbone.forward_train(&both)?;
        let (out, hidden) = match &self.expander {
            Some(e) => {
                let (y, a) = e.forward(&emb);
                (y, Some(a))
            }
            None => (emb.clone(), None),
        };
        let z = out.slice(s![..b, ..]).to_owned();
        let zp = out.slice(s![b.., ..]).to_owned();
        let (terms, dz, dzp) = vicreg_loss_grad(&z, &zp, cfg)?;
        if !with_grads {
            return Ok((terms, None));
        }
        let d_out = ndarray::concatenate(Axis(0), &[dz.view(), dzp.view()]).expect("matching widths");
        let (exp_grads, d_emb) = match (&self.expander, hidden) {
            (Some(e), Some(a)) => {
                let (g, d) = e.backward(&emb, &a, &d_out);
                (Some(g), d)
            }
            _ => (None, d_out),
        };
        let grads = SslNet { backbone: self.backbone.backward(&cache, &d_emb), expander: exp_grads };
        Ok((terms, Some(grads)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_lag: usize,
    pub scale_mean: f64,
    pub scale_sd: f64,
    pub noise_mean: f64,
    pub noise_sd: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_lag: 4,
            scale_mean: 1.0,
            scale_sd: 0.05,
            noise_mean: 0.0,
            noise_sd: 0.05,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_sd >= 0.0 && self.noise_sd >= 0.0) {
            return Err(Error::Config("augmentation standard deviations must be >= 0".into()));
        }
        Ok(())
    }

    /// Identity configuration.
    pub fn identity() -> Self {
        Self { max_lag: 0, scale_sd: 0.0, noise_sd: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub data: Array2<f64>,
    /// Lag actually applied, after clamping to the trial.
    pub lag: isize,
    pub clamped: bool,
}

/// One augmented view of window `sample` of `set`: whole-window lag, then
/// per-dimension scaling, then additive noise. Deterministic per
/// `(cfg.rng_seed, sample, view)`.
pub fn augment(set: &SequenceSet, sample: usize, view: u64, cfg: &AugmentConfig) -> AugmentedView {
    let mut rng = rng_for(cfg.rng_seed, &[0xA06, sample as u64, view]);
    let (trial, end) = set.anchor(sample);
    let wanted = rng.gen_range(-(cfg.max_lag as isize)..=cfg.max_lag as isize);
    let lo = set.seq_len() as isize - 1;
    let hi = set.trial_len(trial) as isize - 1;
    let shifted = (end as isize + wanted).clamp(lo, hi);
    let lag = shifted - end as isize;
    let mut data = set.window(trial, shifted as usize).to_owned();
    let d = data.ncols();
    if cfg.scale_sd > 0.0 || cfg.scale_mean != 1.0 {
        let scale = Normal::new(cfg.scale_mean, cfg.scale_sd).expect("validated sd");
        let factors: Vec<f64> = (0..d).map(|_| scale.sample(&mut rng)).collect();
        for mut row in data.rows_mut() {
            for (v, f) in row.iter_mut().zip(&factors) {
                *v *= f;
            }
        }
    }
    if cfg.noise_sd > 0.0 || cfg.noise_mean != 0.0 {
        let noise = Normal::new(cfg.noise_mean, cfg.noise_sd).expect("validated sd");
        data.mapv_inplace(|v| v + noise.sample(&mut rng));
    }
    AugmentedView { data, lag, clamped: lag != wanted }
}

fn view_batch(set: &SequenceSet, idx: &[usize], view: u64, cfg: &AugmentConfig) -> Array3<f64> {
    let d = set.window(set.anchor(0).0, set.anchor(0).1).ncols();
    let mut out = Array3::zeros((set.seq_len(), idx.len(), d));
    for (b, &i) in idx.iter().enumerate() {
        out.slice_mut(s![.., b, ..]).assign(&augment(set, i, view, cfg).data);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Smallest per-dimension embedding std on the validation anchors.
    pub min_std: f64,
    pub max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainHistory {
    pub epochs: Vec<PretrainEpoch>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Column standard deviations (1/(n-1)).
pub fn embedding_std(emb: &Array2<f64>) -> Vec<f64> {
    let n = emb.nrows();
    if n < 2 {
        return vec![0.0; emb.ncols()];
    }
    centered(emb)
        .columns()
        .into_iter()
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64).sqrt())
        .collect()
}

/// Pre-trains `backbone` on unlabeled anchors. Views of the validation set
/// use a fixed augmentation seed so its loss is comparable across epochs.
pub fn pretrain_backbone(
    backbone: &mut Backbone,
    train: &SequenceSet,
    val: &SequenceSet,
    vic: &VicregConfig,
    aug: &AugmentConfig,
    cfg: &TrainConfig,
) -> Result<PretrainHistory> {
    vic.validate()?;
    aug.validate()?;
    cfg.validate()?;
    if train.len() < 2 || val.len() < 2 {
        return Err(Error::InvalidInput("pre-training needs at least two anchors per split".into()));
    }
    let mut net = SslNet::new(backbone.clone(), vic, cfg.rng_seed);
    let mut opt = AdamW::new(AdamWConfig::new(cfg.lr_stagewise, cfg.weight_decay), &net);
    let mut best = net.backbone.clone();
    let (mut best_loss, mut best_epoch) = (f64::INFINITY, 0);
    let mut collapsed_run = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_aug = AugmentConfig { rng_seed: derive_seed(aug.rng_seed, &[0x7A1]), ..*aug };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng_for(cfg.rng_seed, &[0x551, epoch as u64]));
        let epoch_aug = AugmentConfig { rng_seed: derive_seed(aug.rng_seed, &[epoch as u64]), ..*aug };
        let mut total = 0.0;
        let mut seen = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let a = view_batch(train, chunk, 0, &epoch_aug);
            let b = view_batch(train, chunk, 1, &epoch_aug);
            let (terms, grads) = net.loss_and_grads(&a, &b, vic, true)?;
            if !terms.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi + 1 });
            }
            let grads = grads.expect("gradients requested");
            opt.step(&mut net, &grads);
            total += terms.total * chunk.len() as f64;
            seen += chunk.len();
        }

        let (val_loss, stds) = validation_pass(&net, val, vic, &val_aug)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let min_std = stds.iter().copied().fold(f64::INFINITY, f64::min);
        let max_std = stds.iter().copied().fold(0.0, f64::max);
        epochs.push(PretrainEpoch { epoch, train_loss: total / seen.max(1) as f64, val_loss, min_std, max_std });
        collapsed_run = if max_std < COLLAPSE_STD { collapsed_run + 1 } else { 0 };
        if collapsed_run >= COLLAPSE_EPOCHS {
            return Err(Error::Collapse(format!(
                "every embedding dimension had std < {COLLAPSE_STD} for {COLLAPSE_EPOCHS} consecutive epochs (epoch {epoch}, max std {max_std:.2e})"
            )));
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = net.backbone.clone();
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    *backbone = best;
    Ok(PretrainHistory { epochs, best_epoch, best_val_loss: best_loss })
}

/// Validation VICReg loss (weighted by batch size) and embedding stds.
fn validation_pass(net: &SslNet, val: &SequenceSet, vic: &VicregConfig, aug: &AugmentConfig) -> Result<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..val.len()).collect();
    let mut total = 0.0;
    let mut seen = 0;
    for chunk in idx.chunks(EMBED_CHUNK) {
        if chunk.len() < 2 {
            continue;
        }
        let a = view_batch(val, chunk, 0, aug);
        let b = view_batch(val, chunk, 1, aug);
        let (terms, _) = net.loss_and_grads(&a, &b, vic, false)?;
        total += terms.total * chunk.len() as f64;
        seen += chunk.len();
    }
    let emb = export_embeddings(&net.backbone, val)?;
    Ok((total / seen.max(1) as f64, embedding_std(&emb)))
}

/// Trains a fresh head on a frozen backbone.
pub fn train_lstm_v(
    backbone: &Backbone,
    standardizer: &Standardizer,
    train: &SequenceSet,
    val: &SequenceSet,
    cfg: &TrainConfig,
) -> Result<(RecurrentModel, TrainHistory)> {
    let mut model = RecurrentModel {
        backbone: backbone.clone(),
        head: Head::init(backbone.arch, cfg.rng_seed),
        standardizer: standardizer.clone(),
    };
    let history = train_xent(&mut model, train, val, cfg, TrainMode::HeadOnly)?;
    Ok((model, history))
}

/// One embedding row per window of `set`, in window order.
pub fn export_embeddings(backbone: &Backbone, set: &SequenceSet) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((set.len(), backbone.arch.dense));
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EMBED_CHUNK) {
        let emb = backbone.embed(&set.batch(chunk))?;
        out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..]).assign(&emb);
    }
    Ok(out)
}

/// Finite-difference check of VICReg gradients through a hidden-`hidden`
/// backbone (and the expander when enabled).
pub fn vicreg_grad_check(
    hidden: usize,
    use_expander: bool,
    n_checks: usize,
    seed: u64,
) -> Result<crate::models::gradcheck::GradCheckReport> {
    use crate::models::recurrent::RecurrentArch;
    let arch = RecurrentArch { input_dim: 24, hidden, dense: hidden, n_classes: 7, sequence_len: 5 };
    let vic = VicregConfig { use_expander, expander_dim: 12, ..Default::default() };
    let mut net = SslNet::new(Backbone::init(arch, seed), &vic, seed);
    let mut rng = rng_for(seed, &[0x6C5]);
    let batch = 6;
    let mut draw = || Array3::from_shape_simple_fn((arch.sequence_len, batch, 24), || rng.gen_range(-1.5..1.5));
    let a = draw();
    let b = draw();
    let (_, grads) = net.loss_and_grads(&a, &b, &vic, true)?;
    let analytic = grads.expect("requested").to_flat();
    crate::models::gradcheck::grad_check(&mut net, &analytic, n_checks, seed, &mut |p: &SslNet| {
        p.loss_and_grads(&a, &b, &vic, false).expect("valid batch").0.total
    })
}
