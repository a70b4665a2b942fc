//! Classifiers: shared-covariance LDA and the recurrent backbone + softmax
//! head, with AdamW training, gradient checking and model files.

pub mod compact;
pub mod gradcheck;
pub mod io;
pub mod lda;
pub mod optim;
pub mod recurrent;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::dataset::{MotionClass, N_CLASSES};

pub use compact::{CompactRecurrent, CompactStream};
pub use lda::LdaModel;
pub use optim::{AdamW, AdamWConfig, ParamSet};
pub use recurrent::{
    Backbone, BackboneGrads, ForwardCache, Head, RecurrentArch, RecurrentModel, StreamingRecurrent,
};
pub use train::{
    sliding_infer, train_xent, EpochRecord, SequenceSet, TrainConfig, TrainHistory, TrainMode,
};

/// One classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub class: MotionClass,
    pub confidence: f64,
    pub posterior: [f64; N_CLASSES],
}

impl Decision {
    pub fn from_posterior(posterior: [f64; N_CLASSES]) -> Self {
        let (idx, &confidence) = posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("seven classes");
        Self {
            class: MotionClass::from_index(idx).expect("index in range"),
            confidence,
            posterior,
        }
    }

    /// Warm-up output of the sliding-window recurrent model.
    pub fn no_movement() -> Self {
        let mut posterior = [0.0; N_CLASSES];
        posterior[MotionClass::NM.index()] = 1.0;
        Self {
            class: MotionClass::NM,
            confidence: 1.0,
            posterior,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn softmax7(logits: &[f64]) -> [f64; N_CLASSES] {
    let p = softmax(logits);
    let mut out = [0.0; N_CLASSES];
    out.copy_from_slice(&p);
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            logits in proptest::collection::vec(-50.0f64..50.0, 7),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decision_picks_argmax() {
        let d = Decision::from_posterior([0.1, 0.05, 0.5, 0.05, 0.1, 0.1, 0.1]);
        assert_eq!(d.class, MotionClass::WP);
        assert_eq!(d.confidence, 0.5);
        assert_eq!(Decision::no_movement().class, MotionClass::NM);
    }
}
