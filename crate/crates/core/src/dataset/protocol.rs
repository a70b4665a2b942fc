use rand::seq::SliceRandom;
use rand::Rng;

use super::{MotionClass, PromptTimeline, N_CLASSES};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Ramp trials: the seven classes once each, in fixed order. Only the ramp-up
/// phases are recorded, so prompts are back to back.
pub fn make_ramp_protocol(n_trials: usize, prompt_duration: f64) -> Result<Vec<PromptTimeline>> {
    (0..n_trials)
        .map(|_| PromptTimeline::contiguous(&MotionClass::ALL, prompt_duration))
        .collect()
}

/// Continuous dynamic trials: 43 prompts whose 42 adjacent pairs cover every
/// ordered pair of distinct classes exactly once.
///
/// Each trial is a randomized Eulerian circuit of the complete directed graph
/// on the seven classes (Hierholzer with shuffled adjacency lists).
pub fn make_continuous_protocol(
    n_trials: usize,
    prompt_duration: f64,
    seed: u64,
) -> Result<Vec<PromptTimeline>> {
    (0..n_trials)
        .map(|trial| {
            let mut rng = rng_for(seed, &[0xC0_17, trial as u64]);
            let order = random_eulerian_circuit(&mut rng)?;
            PromptTimeline::contiguous(&order, prompt_duration)
        })
        .collect()
}

fn random_eulerian_circuit<R: Rng>(rng: &mut R) -> Result<Vec<MotionClass>> {
    let mut adjacency: Vec<Vec<usize>> = (0..N_CLASSES)
        .map(|a| {
            let mut out: Vec<usize> = (0..N_CLASSES).filter(|&b| b != a).collect();
            out.shuffle(rng);
            out
        })
        .collect();
    let start = rng.gen_range(0..N_CLASSES);
    let mut stack = vec![start];
    let mut circuit = Vec::with_capacity(N_CLASSES * (N_CLASSES - 1) + 1);
    while let Some(&v) = stack.last() {
        if let Some(next) = adjacency[v].pop() {
            stack.push(next);
        } else {
            circuit.push(v);
            stack.pop();
        }
    }
    circuit.reverse();
    if circuit.len() != N_CLASSES * (N_CLASSES - 1) + 1 {
        return Err(Error::InvalidInput(format!(
            "eulerian construction produced {} prompts",
            circuit.len()
        )));
    }
    Ok(circuit
        .into_iter()
        .map(|i| MotionClass::from_index(i).expect("class index in range"))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn ramp_durations() {
        let trials = make_ramp_protocol(5, 3.0).unwrap();
        let total: f64 = trials.iter().map(PromptTimeline::span).sum();
        assert_eq!(total, 105.0);
        let one = make_ramp_protocol(1, 3.0).unwrap();
        assert_eq!(one[0].len(), 7);
        assert_eq!(one[0].span(), 21.0);
        assert!(make_ramp_protocol(0, 3.0).unwrap().is_empty());
    }

    #[test]
    fn continuous_durations() {
        let trials = make_continuous_protocol(6, 3.0, 11).unwrap();
        let total: f64 = trials.iter().map(PromptTimeline::span).sum();
        assert_eq!(total, 774.0);
        assert!(trials.iter().all(|t| t.len() == 43));
    }

    #[test]
    fn every_ordered_pair_exactly_once() {
        for seed in 0..20 {
            for tl in make_continuous_protocol(2, 3.0, seed).unwrap() {
                let mut counts: HashMap<(MotionClass, MotionClass), usize> = HashMap::new();
                for w in tl.prompts().windows(2) {
                    assert_ne!(w[0].class, w[1].class);
                    *counts.entry((w[0].class, w[1].class)).or_default() += 1;
                }
                assert_eq!(counts.len(), 42);
                assert!(counts.values().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn trials_are_randomized() {
        let trials = make_continuous_protocol(3, 3.0, 5).unwrap();
        assert_ne!(trials[0], trials[1]);
        assert_eq!(trials, make_continuous_protocol(3, 3.0, 5).unwrap());
    }
}
