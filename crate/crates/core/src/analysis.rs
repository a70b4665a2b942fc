//! Offline evaluation and the study statistics: error rates, rejection
//! sweeps, PCA of latent embeddings, balanced Latin squares, one-factor
//! repeated-measures ANOVA, Benjamini-Yekutieli adjustment and Cohen's d.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::control::{reject, RejectionConfig};
use crate::dataset::MotionClass;
use crate::error::{Error, Result};
use crate::fitts;
use crate::models::Decision;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: b, got: a });
    }
    if a == 0 {
        return Err(Error::InvalidInput("empty decision stream".into()));
    }
    Ok(())
}

/// Fraction of frames whose post-rejection class differs from the label.
pub fn total_error_rate(classes: &[MotionClass], labels: &[MotionClass]) -> Result<f64> {
    check_lengths(classes.len(), labels.len())?;
    let wrong = classes.iter().zip(labels).filter(|(c, l)| c != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Raw accuracy of the unrejected decisions.
pub fn accuracy(decisions: &[Decision], labels: &[MotionClass]) -> Result<f64> {
    check_lengths(decisions.len(), labels.len())?;
    let right = decisions.iter().zip(labels).filter(|(d, l)| d.class == **l).count();
    Ok(right as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub total_error_rate: f64,
}

pub fn sweep_rejection(decisions: &[Decision], labels: &[MotionClass], thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    check_lengths(decisions.len(), labels.len())?;
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("rejection thresholds must be ascending".into()));
    }
    thresholds
        .iter()
        .map(|&threshold| {
            let cfg = RejectionConfig { threshold };
            let classes: Vec<MotionClass> = decisions.iter().map(|d| reject(d, &cfg).class).collect();
            Ok(SweepPoint { threshold, total_error_rate: total_error_rate(&classes, labels)? })
        })
        .collect()
}

/// Same definition as the online instability metric.
pub fn offline_instability(classes: &[MotionClass]) -> Result<f64> {
    if classes.is_empty() {
        return Err(Error::InvalidInput("empty decision stream".into()));
    }
    Ok(fitts::instability(classes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub classifier: String,
    pub accuracy: f64,
    pub total_error_rate: f64,
    pub rejection_threshold: f64,
    pub sweep: Vec<SweepPoint>,
    pub instability: f64,
}

pub fn offline_report(
    classifier: &str,
    decisions: &[Decision],
    labels: &[MotionClass],
    rejection: &RejectionConfig,
    thresholds: &[f64],
) -> Result<OfflineReport> {
    let classes: Vec<MotionClass> = decisions.iter().map(|d| reject(d, rejection).class).collect();
    Ok(OfflineReport {
        classifier: classifier.to_string(),
        accuracy: accuracy(decisions, labels)?,
        total_error_rate: total_error_rate(&classes, labels)?,
        rejection_threshold: rejection.threshold,
        sweep: sweep_rejection(decisions, labels, thresholds)?,
        instability: offline_instability(&classes)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `n x k` projected points.
    pub projected: Array2<f64>,
    /// Variance along each kept component, descending.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// `k x d` unit loadings.
    pub components: Array2<f64>,
}

impl Pca {
    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }
}

/// Projection onto the top-`k` principal components (sample covariance).
/// Components with negligible variance are dropped.
pub fn pca_project(data: ArrayView2<f64>, k: usize) -> Result<Pca> {
    let (n, d) = data.dim();
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidInput(format!("PCA with k={k} needs at least {} points, got {n}", k + 1)));
    }
    let mean = data.mean_axis(Axis(0)).expect("n > 0");
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let total_variance = cov.diag().sum();
    let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let tol = 1e-12 * total_variance.max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = order.into_iter().take(k).filter(|&i| eig.eigenvalues[i] > tol).collect();
    if kept.len() < k {
        log::warn!("data rank below {k}: keeping {} principal components", kept.len());
    }
    let mut components = Array2::zeros((kept.len(), d));
    for (r, &i) in kept.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[r, j]] = sign * v[j];
        }
    }
    let projected = centered.dot(&components.t());
    Ok(Pca {
        projected,
        explained_variance: kept.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        total_variance,
        components,
    })
}

/// Balanced Latin square over conditions `0..n`. Odd `n` appends the
/// reversed rows, giving `2n` rows.
pub fn balanced_latin_square(n: usize) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::InvalidInput("a Latin square needs at least 2 conditions".into()));
    }
    let mut first = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n);
    for j in 0..n {
        if j % 2 == 0 {
            first.push(lo);
            lo += 1;
        } else {
            hi -= 1;
            first.push(hi);
        }
    }
    let mut rows: Vec<Vec<usize>> = (0..n).map(|r| first.iter().map(|c| (c + r) % n).collect()).collect();
    if n % 2 == 1 {
        let reversed: Vec<Vec<usize>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        rows.extend(reversed);
    }
    Ok(rows)
}

/// ln Gamma via the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if !(f > 0.0) {
        return 1.0;
    }
    inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Two-sided p value of Student's t.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectSize {
    VerySmall,
    Small,
    Medium,
    Large,
    VeryLarge,
    Huge,
}

impl EffectSize {
    pub fn from_d(d: f64) -> Self {
        let d = d.abs();
        if d >= 2.0 {
            Self::Huge
        } else if d >= 1.2 {
            Self::VeryLarge
        } else if d >= 0.8 {
            Self::Large
        } else if d >= 0.5 {
            Self::Medium
        } else if d >= 0.2 {
            Self::Small
        } else {
            Self::VerySmall
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohensD {
    pub d: f64,
    pub label: EffectSize,
    /// The differences had zero variance; `d` is reported as 0.
    pub degenerate: bool,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Stats("need at least two pairs".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Paired Cohen's d: mean difference over the standard deviation of the
/// differences.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<CohensD> {
    let diff = differences(a, b)?;
    let (mean, sd) = mean_sd(&diff);
    if !(sd > 0.0) {
        return Ok(CohensD { d: 0.0, label: EffectSize::VerySmall, degenerate: true });
    }
    let d = mean / sd;
    Ok(CohensD { d, label: EffectSize::from_d(d), degenerate: false })
}

/// Paired two-sided t test; returns `(t, p)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let diff = differences(a, b)?;
    let (mean, sd) = mean_sd(&diff);
    let n = diff.len() as f64;
    if !(sd > 0.0) {
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) });
    }
    let t = mean / (sd / n.sqrt());
    Ok((t, t_two_sided(t, n - 1.0)))
}

/// Benjamini-Yekutieli step-up adjustment, returned in input order.
pub fn benjamini_yekutieli(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Stats("p values must lie in [0, 1]".into()));
    }
    let m = p.len();
    let c: f64 = (1..=m).map(|k| 1.0 / k as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        running = running.min(p[i] * m as f64 * c / rank as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHoc {
    pub condition: usize,
    pub baseline: usize,
    pub t: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub cohens_d: CohensD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub f: f64,
    pub df: (f64, f64),
    pub p: f64,
    pub ss_conditions: f64,
    pub ss_subjects: f64,
    pub ss_error: f64,
    pub posthoc: Vec<PostHoc>,
}

/// One-factor repeated-measures ANOVA on a `subjects x conditions` table.
pub fn rm_anova(data: ArrayView2<f64>) -> Result<StatResult> {
    let (n, k) = data.dim();
    if n < 2 || k < 2 {
        return Err(Error::Stats(format!("need >= 2 subjects and conditions, got {n} x {k}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Missing("missing or non-finite cell in the ANOVA table".into()));
    }
    let grand = data.mean().expect("non-empty");
    let ss_total: f64 = data.iter().map(|v| (v - grand).powi(2)).sum();
    let cond_means = data.mean_axis(Axis(0)).expect("n > 0");
    let subj_means = data.mean_axis(Axis(1)).expect("k > 0");
    let ss_cond = n as f64 * cond_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_subj = k as f64 * subj_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_err = (ss_total - ss_cond - ss_subj).max(0.0);
    let df1 = (k - 1) as f64;
    let df2 = ((k - 1) * (n - 1)) as f64;
    let scale = ss_total.max(grand.abs().powi(2) * (n * k) as f64).max(f64::MIN_POSITIVE);
    let (f, p) = if ss_cond <= 1e-12 * scale {
        (0.0, 1.0)
    } else if ss_err <= 1e-12 * scale {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_cond / df1) / (ss_err / df2);
        (f, f_sf(f, df1, df2))
    };
    Ok(StatResult {
        f,
        df: (df1, df2),
        p,
        ss_conditions: ss_cond,
        ss_subjects: ss_subj,
        ss_error: ss_err,
        posthoc: Vec::new(),
    })
}

/// RM-ANOVA plus, when `p < alpha`, paired t tests of every condition
/// against `baseline` with BY-adjusted p values and paired Cohen's d.
pub fn rm_anova_with_posthoc(data: ArrayView2<f64>, baseline: usize, alpha: f64) -> Result<StatResult> {
    let mut res = rm_anova(data)?;
    let k = data.ncols();
    if baseline >= k {
        return Err(Error::InvalidInput(format!("baseline column {baseline} out of range")));
    }
    if res.p >= alpha {
        return Ok(res);
    }
    let base = data.column(baseline).to_vec();
    let mut rows = Vec::new();
    for c in (0..k).filter(|&c| c != baseline) {
        let col = data.column(c).to_vec();
        let (t, p) = paired_t_test(&col, &base)?;
        rows.push((c, t, p, cohens_d(&col, &base)?));
    }
    let adjusted = benjamini_yekutieli(&rows.iter().map(|r| r.2).collect::<Vec<_>>())?;
    res.posthoc = rows
        .into_iter()
        .zip(adjusted)
        .map(|((condition, t, p_raw, cohens_d), p_adjusted)| PostHoc {
            condition,
            baseline,
            t,
            p_raw,
            p_adjusted,
            cohens_d,
        })
        .collect();
    Ok(res)
}
