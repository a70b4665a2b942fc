//! Central finite-difference gradient checking.

use ndarray::Array3;
use rand::seq::index::sample;
use rand::Rng;

use super::optim::ParamSet;
use super::recurrent::{Backbone, Head, ModelGrads, ModelParams, RecurrentArch};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn locate<P: ParamSet + ?Sized>(params: &P, mut flat: usize) -> (usize, usize) {
    for (t, tensor) in params.tensors().iter().enumerate() {
        if flat < tensor.len() {
            return (t, flat);
        }
        flat -= tensor.len();
    }
    unreachable!("index within parameter count")
}

/// Compares `analytic` (flattened in tensor order) to central differences of
/// `loss` at `n_checks` randomly chosen parameters.
pub fn grad_check<P: ParamSet + ?Sized>(
    params: &mut P,
    analytic: &[f64],
    n_checks: usize,
    seed: u64,
    loss: &mut dyn FnMut(&P) -> f64,
) -> Result<GradCheckReport> {
    let total = params.n_params();
    if n_checks == 0 {
        return Err(Error::InvalidInput("gradient check needs at least one parameter".into()));
    }
    if analytic.len() != total {
        return Err(Error::Dimension { expected: total, got: analytic.len() });
    }
    let mut rng = rng_for(seed, &[0x6C4E]);
    let picks = sample(&mut rng, total, n_checks.min(total));
    let mut max_rel: f64 = 0.0;
    for flat in picks.iter() {
        let (t, i) = locate(params, flat);
        let orig = params.tensors()[t][i];
        params.tensors_mut()[t][i] = orig + FD_STEP;
        let plus = loss(params);
        params.tensors_mut()[t][i] = orig - FD_STEP;
        let minus = loss(params);
        params.tensors_mut()[t][i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        max_rel = max_rel.max(relative_error(analytic[flat], numeric));
    }
    Ok(GradCheckReport { checked: picks.len(), max_rel_error: max_rel })
}

/// Cross-entropy check on a randomly initialized hidden-`hidden` model.
pub fn xent_grad_check(hidden: usize, n_checks: usize, seed: u64) -> Result<GradCheckReport> {
    let arch = RecurrentArch { input_dim: 24, hidden, dense: hidden, n_classes: 7, sequence_len: 6 };
    let mut backbone = Backbone::init(arch, seed);
    let mut head = Head::init(arch, seed);
    let mut rng = rng_for(seed, &[0x1A9]);
    // non-trivial LN affine parameters so their gradients are exercised
    for v in backbone.ln1_gain.iter_mut().chain(backbone.ln2_gain.iter_mut()) {
        *v = rng.gen_range(0.5..1.5);
    }
    for v in backbone.ln1_bias.iter_mut().chain(backbone.ln2_bias.iter_mut()) {
        *v = rng.gen_range(-0.2..0.5);
    }
    let batch = 5;
    let xs = Array3::from_shape_simple_fn((arch.sequence_len, batch, arch.input_dim), || rng.gen_range(-1.5..1.5));
    let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..7)).collect();

    let (emb, cache) = backbone.forward_train(&xs)?;
    let (_, d_logits) = Head::xent(&head.logits(&emb), &labels);
    let (head_grads, d_emb) = head.backward(&emb, &d_logits);
    let grads = ModelGrads { backbone: backbone.backward(&cache, &d_emb), head: head_grads };
    let analytic = grads.to_flat();

    let mut params = ModelParams { backbone: &mut backbone, head: &mut head };
    grad_check(&mut params, &analytic, n_checks, seed, &mut |p: &ModelParams| {
        let emb = p.backbone.embed(&xs).expect("finite input");
        Head::xent(&p.head.logits(&emb), &labels).0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl ParamSet for Flat {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0[..2], &self.0[2..]]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            let (a, b) = self.0.split_at_mut(2);
            vec![a, b]
        }
    }

    #[test]
    fn exact_gradient_of_cubic_passes() {
        let mut p = Flat(vec![0.3, -1.2, 2.0, 0.7]);
        let analytic: Vec<f64> = p.0.iter().map(|x| 3.0 * x * x).collect();
        let r = grad_check(&mut p, &analytic, 4, 1, &mut |q: &Flat| q.0.iter().map(|x| x.powi(3)).sum()).unwrap();
        assert_eq!(r.checked, 4);
        assert!(r.max_rel_error < 1e-8);
        assert_eq!(p.0, vec![0.3, -1.2, 2.0, 0.7]);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let mut p = Flat(vec![1.0, 2.0, 3.0]);
        let r = grad_check(&mut p, &[1.0, 1.0, 1.0], 3, 1, &mut |q: &Flat| q.0.iter().map(|x| x * x).sum()).unwrap();
        assert!(r.max_rel_error > 0.5);
    }

    #[test]
    fn zero_selection_is_error() {
        let mut p = Flat(vec![1.0, 2.0]);
        assert!(grad_check(&mut p, &[0.0, 0.0], 0, 1, &mut |_: &Flat| 0.0).is_err());
    }

    #[test]
    fn recurrent_xent_gradients_match() {
        let r = xent_grad_check(8, 250, 11).unwrap();
        assert!(r.checked >= 200);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
