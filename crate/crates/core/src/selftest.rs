//! Built-in consistency checks behind the `selftest` command.

use rand::Rng;
use serde::Serialize;

use crate::dqn::{QNetwork, DEFAULT_LAYOUT};
use crate::error::Result;
use crate::rng::seeded;
use crate::types::{decode_state, encode_state, NUM_ACTIONS, NUM_STATES};

/// Layout of the reduced network used for finite-difference checks.
pub const GRADCHECK_LAYOUT: [usize; 4] = [3, 4, 3, 3];
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const GRADCHECK_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub seed: u64,
    pub params: usize,
    pub max_rel_err: f64,
}

/// Compares backprop against central differences on every parameter of a
/// small network with random inputs, actions and targets.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = seeded(seed);
    let net = QNetwork::new(&GRADCHECK_LAYOUT, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let samples: Vec<(&[f64], usize, f64)> = inputs
        .iter()
        .map(|x| (&x[..], rng.gen_range(0..3), rng.gen_range(-1.0..1.0)))
        .collect();

    let analytic = net.loss_and_gradient(&samples).1.flat();
    let base = net.params();
    let mut probe = net.clone();
    let mut loss_at = |params: &[f64]| {
        probe.set_params(params).expect("same layout");
        probe.loss_and_gradient(&samples).0
    };
    let mut max_rel_err: f64 = 0.0;
    for (k, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[k] = base[k] + GRADCHECK_STEP;
        let up = loss_at(&p);
        p[k] = base[k] - GRADCHECK_STEP;
        let down = loss_at(&p);
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let scale = g.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        max_rel_err = max_rel_err.max((g - numeric).abs() / scale);
    }
    GradCheck {
        seed,
        params: base.len(),
        max_rel_err,
    }
}

/// Encodes and decodes every state; returns `(states, state-action pairs)`.
pub fn state_sweep() -> Result<(usize, usize)> {
    let mut count = 0;
    for i in 0..NUM_STATES {
        let s = decode_state(i)?;
        if encode_state(&s) != i {
            return Err(crate::error::Error::contract(format!("state {i} does not round-trip")));
        }
        count += 1;
    }
    Ok((count, count * NUM_ACTIONS))
}

pub fn decision_flops() -> usize {
    QNetwork::zeros(&DEFAULT_LAYOUT).flop_count()
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub decision_flops: usize,
    pub states: usize,
    pub state_action_pairs: usize,
    pub gradient_checks: Vec<GradCheck>,
}

impl SelftestReport {
    pub fn worst_gradient_error(&self) -> f64 {
        self.gradient_checks.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn run_selftest(gradient_seeds: u64) -> Result<SelftestReport> {
    let (states, pairs) = state_sweep()?;
    Ok(SelftestReport {
        decision_flops: decision_flops(),
        states,
        state_action_pairs: pairs,
        gradient_checks: (0..gradient_seeds).map(gradient_check).collect(),
    })
}
