//! Decision post-processing: confidence rejection, class-specific
//! proportional control and per-axis speed normalization.

use serde::{Deserialize, Serialize};

use crate::dataset::MotionClass;
use crate::error::{Error, Result};
use crate::models::Decision;

pub const MIN_PC_PREDICTIONS: usize = 20;
pub const PC_LOW_PERCENTILE: f64 = 0.10;
pub const PC_HIGH_PERCENTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RejectionConfig {
    pub threshold: f64,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl RejectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("rejection threshold {} not in [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// A decision after rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatedDecision {
    /// NM when rejected.
    pub class: MotionClass,
    pub raw_class: MotionClass,
    pub confidence: f64,
    pub rejected: bool,
}

/// Confidence below the threshold turns the decision into a rejected NM.
/// A threshold of 1 rejects everything, including posteriors that round to 1.
pub fn reject(decision: &Decision, cfg: &RejectionConfig) -> GatedDecision {
    let rejected = decision.confidence < cfg.threshold || cfg.threshold >= 1.0;
    GatedDecision {
        class: if rejected { MotionClass::NM } else { decision.class },
        raw_class: decision.class,
        confidence: decision.confidence,
        rejected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBounds {
    pub class: MotionClass,
    pub p_low: f64,
    pub p_high: f64,
}

/// Class-specific normalization of summed MAV followed by a logistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcMap {
    pub bounds: Vec<ClassBounds>,
    pub a: f64,
    pub x0: f64,
    /// Classes whose bounds came from labels rather than predictions.
    #[serde(default)]
    pub label_fallback: Vec<MotionClass>,
}

/// Percentile by linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bounds_for(class: MotionClass, values: &mut [f64]) -> Result<ClassBounds> {
    values.sort_by(f64::total_cmp);
    let p_low = percentile(values, PC_LOW_PERCENTILE);
    let p_high = percentile(values, PC_HIGH_PERCENTILE);
    if !(p_high > p_low) {
        return Err(Error::DegenerateBounds(class));
    }
    Ok(ClassBounds { class, p_low, p_high })
}

fn collect(summed_mav: &[f64], classes: &[MotionClass], class: MotionClass) -> Vec<f64> {
    summed_mav
        .iter()
        .zip(classes)
        .filter(|(_, &c)| c == class)
        .map(|(&m, _)| m)
        .collect()
}

/// Bounds per active class from the frames the classifier predicted as
/// that class.
pub fn fit_pc_map(summed_mav: &[f64], predicted: &[MotionClass]) -> Result<PcMap> {
    if summed_mav.len() != predicted.len() {
        return Err(Error::Dimension { expected: summed_mav.len(), got: predicted.len() });
    }
    let bounds = MotionClass::ACTIVE
        .iter()
        .map(|&class| {
            let mut v = collect(summed_mav, predicted, class);
            if v.len() < MIN_PC_PREDICTIONS {
                return Err(Error::InsufficientPredictions { class, count: v.len(), needed: MIN_PC_PREDICTIONS });
            }
            bounds_for(class, &mut v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PcMap { bounds, a: 10.0, x0: 0.5, label_fallback: Vec::new() })
}

/// As [`fit_pc_map`], but a class predicted fewer than the minimum number of
/// times (or with degenerate bounds) uses the frames labeled as it instead.
pub fn fit_pc_map_with_fallback(summed_mav: &[f64], predicted: &[MotionClass], labels: &[MotionClass]) -> Result<PcMap> {
    if summed_mav.len() != predicted.len() || summed_mav.len() != labels.len() {
        return Err(Error::Dimension { expected: summed_mav.len(), got: predicted.len().min(labels.len()) });
    }
    let mut fallback = Vec::new();
    let mut bounds = Vec::new();
    for class in MotionClass::ACTIVE {
        let mut v = collect(summed_mav, predicted, class);
        let fitted = if v.len() >= MIN_PC_PREDICTIONS { bounds_for(class, &mut v).ok() } else { None };
        match fitted {
            Some(b) => bounds.push(b),
            None => {
                fallback.push(class);
                let mut v = collect(summed_mav, labels, class);
                if v.len() < MIN_PC_PREDICTIONS {
                    return Err(Error::InsufficientPredictions { class, count: v.len(), needed: MIN_PC_PREDICTIONS });
                }
                bounds.push(bounds_for(class, &mut v)?);
            }
        }
    }
    Ok(PcMap { bounds, a: 10.0, x0: 0.5, label_fallback: fallback })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PcMap {
    pub fn get(&self, class: MotionClass) -> Option<&ClassBounds> {
        self.bounds.iter().find(|b| b.class == class)
    }

    /// Velocity in `[0, 1]`; NM gives 0.
    pub fn value(&self, summed_mav: f64, class: MotionClass) -> Result<f64> {
        if class == MotionClass::NM {
            return Ok(0.0);
        }
        let b = self
            .get(class)
            .ok_or_else(|| Error::Missing(format!("no proportional-control bounds for {class}")))?;
        let x = ((summed_mav - b.p_low) / (b.p_high - b.p_low)).clamp(0.0, 1.0);
        Ok(logistic(self.a * (x - self.x0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub class: MotionClass,
    pub velocity: f64,
    pub rejected: bool,
}

impl ControlCommand {
    pub fn idle() -> Self {
        Self { class: MotionClass::NM, velocity: 0.0, rejected: false }
    }
}

/// Rejection followed by proportional control.
pub fn to_command(decision: &Decision, summed_mav: f64, rejection: &RejectionConfig, map: &PcMap) -> Result<ControlCommand> {
    let gated = reject(decision, rejection);
    Ok(ControlCommand {
        class: gated.class,
        velocity: map.value(summed_mav, gated.class)?,
        rejected: gated.rejected,
    })
}

/// Gains (units per second) so that every axis crosses its range in `t_ref`
/// seconds at velocity 1.
pub fn normalize_speed(ranges: [f64; 3], t_ref: f64) -> Result<[f64; 3]> {
    if !(t_ref > 0.0) || ranges.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Config(format!("workspace ranges {ranges:?} and T_ref {t_ref} must be positive")));
    }
    Ok(ranges.map(|r| r / t_ref))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn decision(class: MotionClass, confidence: f64) -> Decision {
        let mut posterior = [(1.0 - confidence) / 6.0; 7];
        posterior[class.index()] = confidence;
        Decision { class, confidence, posterior }
    }

    fn uniform_map() -> PcMap {
        PcMap {
            bounds: MotionClass::ACTIVE.iter().map(|&class| ClassBounds { class, p_low: 0.0, p_high: 1.0 }).collect(),
            a: 10.0,
            x0: 0.5,
            label_fallback: vec![],
        }
    }

    #[test]
    fn rejection_examples() {
        let cfg = RejectionConfig::default();
        let a = reject(&decision(MotionClass::WE, 0.6), &cfg);
        assert_eq!((a.class, a.rejected), (MotionClass::WE, false));
        let r = reject(&decision(MotionClass::WE, 0.4), &cfg);
        assert_eq!((r.class, r.rejected), (MotionClass::NM, true));
        let zero = RejectionConfig { threshold: 0.0 };
        for c in [0.15, 0.3, 0.99] {
            let d = decision(MotionClass::HC, c);
            assert_eq!(reject(&d, &zero).class, MotionClass::HC);
        }
        assert!(RejectionConfig { threshold: 1.5 }.validate().is_err());
        let certain = reject(&decision(MotionClass::HO, 1.0), &RejectionConfig { threshold: 1.0 });
        assert_eq!((certain.class, certain.rejected), (MotionClass::NM, true));
    }

    proptest! {
        #[test]
        fn rejection_sets_are_nested(conf in 0.0f64..1.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let d = decision(MotionClass::WP, conf.max(1.0 / 7.0));
            if reject(&d, &RejectionConfig { threshold: lo }).rejected {
                let strict = RejectionConfig { threshold: hi };
                prop_assert!(reject(&d, &strict).rejected);
            }
        }

        #[test]
        fn pc_value_is_monotone(a in -1.0f64..2.0, b in -1.0f64..2.0) {
            let m = uniform_map();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(m.value(lo, MotionClass::HO).unwrap() <= m.value(hi, MotionClass::HO).unwrap());
        }

        #[test]
        fn rejected_commands_are_idle(conf in 0.15f64..0.5) {
            let cmd = to_command(&decision(MotionClass::WF, conf), 0.9, &RejectionConfig { threshold: 0.5 }, &uniform_map()).unwrap();
            prop_assert!(cmd.rejected);
            prop_assert_eq!(cmd.class, MotionClass::NM);
            prop_assert_eq!(cmd.velocity, 0.0);
        }
    }

    #[test]
    fn pc_value_examples() {
        let m = uniform_map();
        assert!((m.value(0.5, MotionClass::WF).unwrap() - 0.5).abs() < 1e-15);
        let low = 1.0 / (1.0 + 5f64.exp());
        assert!((m.value(-0.3, MotionClass::WF).unwrap() - low).abs() < 1e-15);
        assert!((m.value(0.0, MotionClass::WF).unwrap() - 0.0066928509).abs() < 1e-9);
        assert!((m.value(7.0, MotionClass::WF).unwrap() - 0.9933071491).abs() < 1e-9);
        assert_eq!(m.value(0.9, MotionClass::NM).unwrap(), 0.0);
        let partial = PcMap { bounds: vec![], ..uniform_map() };
        assert!(partial.value(0.4, MotionClass::WS).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert!((percentile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert!((percentile(&v, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn uniform_mav_gives_expected_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 7000;
        let predicted: Vec<MotionClass> = (0..n).map(|i| MotionClass::ALL[i % 7]).collect();
        let mav: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = fit_pc_map(&mav, &predicted).unwrap();
        assert_eq!(m.bounds.len(), 6);
        for b in &m.bounds {
            assert!((b.p_low - 0.10).abs() < 0.03, "{b:?}");
            assert!((b.p_high - 0.95).abs() < 0.03, "{b:?}");
        }
    }

    #[test]
    fn too_few_or_degenerate_predictions_are_errors() {
        let predicted: Vec<MotionClass> = (0..140).map(|i| MotionClass::ALL[i % 7]).collect();
        let mav: Vec<f64> = (0..140).map(|i| i as f64).collect();
        assert!(fit_pc_map(&mav, &predicted).is_ok());
        let mut short = predicted.clone();
        short[0] = MotionClass::NM; // WF now predicted 19 times
        assert!(matches!(
            fit_pc_map(&mav, &short),
            Err(Error::InsufficientPredictions { class: MotionClass::WF, count: 19, .. })
        ));
        let flat = vec![0.7; 140];
        assert!(matches!(fit_pc_map(&flat, &predicted), Err(Error::DegenerateBounds(_))));
        let fb = fit_pc_map_with_fallback(&mav, &short, &predicted).unwrap();
        assert_eq!(fb.label_fallback, vec![MotionClass::WF]);
    }

    #[test]
    fn speed_normalization() {
        assert_eq!(normalize_speed([600.0, 600.0, 300.0], 2.0).unwrap(), [300.0, 300.0, 150.0]);
        let g = normalize_speed([400.0, 400.0, 400.0], 2.0).unwrap();
        assert!(g[0] == g[1] && g[1] == g[2]);
        assert!(normalize_speed([0.0, 1.0, 1.0], 2.0).is_err());
    }

    #[test]
    fn full_speed_traversal_takes_equal_time() {
        let ranges = [600.0, 450.0, 300.0];
        let gains = normalize_speed(ranges, 2.0).unwrap();
        let tick = 0.0135;
        let ticks: Vec<usize> = (0..3)
            .map(|k| {
                let mut pos = 0.0;
                let mut n = 0;
                while pos < ranges[k] {
                    pos += gains[k] * tick;
                    n += 1;
                }
                n
            })
            .collect();
        let (lo, hi) = (ticks.iter().min().unwrap(), ticks.iter().max().unwrap());
        assert!(hi - lo <= 1, "{ticks:?}");
    }
}
