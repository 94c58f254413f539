//! Deep Q-learning: network, replay memory, target network and ε-greedy
//! action selection, all implemented without an ML framework.

mod network;
mod replay;

pub use network::{Dense, Gradients, Optimizer, OptimizerKind, QNetwork, DEFAULT_LAYOUT};
pub use replay::{Experience, ReplayMemory};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::{NodeState, PowerAction, MAX_POWER_DBM, MAX_QUALITY, MIN_STRENGTH_DBM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which ε is annealed linearly.
    pub epsilon_decay_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Online-to-target copy period, in training steps.
    pub target_sync_interval: u64,
    pub replay_capacity: usize,
    pub optimizer: OptimizerKind,
    /// Multiplier applied to rewards before they enter the replay memory.
    /// Positive scaling leaves the optimal policy unchanged.
    pub reward_scale: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            target_sync_interval: 100,
            replay_capacity: 10_000,
            optimizer: OptimizerKind::Sgd,
            reward_scale: 0.01,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) {
            return Err(Error::Config(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) {
            return Err(Error::Config("epsilon outside [0, 1]".into()));
        }
        if !unit(self.epsilon_decay_fraction) {
            return Err(Error::Config("epsilon_decay_fraction outside [0, 1]".into()));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_sync_interval == 0 {
            return Err(Error::Config(
                "batch_size, replay_capacity and target_sync_interval must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::Config("learning_rate and reward_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Linear ε annealing from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let f = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * f
    }
}

/// Maps an observation onto the unit cube.
pub fn normalize_state(s: &NodeState) -> [f64; 3] {
    [
        s.power.dbm() as f64 / MAX_POWER_DBM as f64,
        s.quality.value() as f64 / MAX_QUALITY as f64,
        (s.strength.dbm() - MIN_STRENGTH_DBM) as f64 / 70.0,
    ]
}

/// `r + γ max Q(s', ·)`, or just `r` for a terminal transition.
pub fn bellman_target(reward: f64, next_q: &[f64], gamma: f64, terminal: bool) -> f64 {
    if terminal {
        return reward;
    }
    let best = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * best
}

/// Index of the best Q-value. Ties prefer `Hold`, then `Decrease`.
pub fn greedy_action(q: &[f64]) -> PowerAction {
    const PREFERENCE: [PowerAction; 3] =
        [PowerAction::Hold, PowerAction::Decrease, PowerAction::Increase];
    let mut best = PREFERENCE[0];
    for a in &PREFERENCE[1..] {
        if q[a.index()] > q[best.index()] {
            best = *a;
        }
    }
    best
}

pub fn select_action(
    net: &QNetwork,
    s: &NodeState,
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<PowerAction> {
    if rng.gen::<f64>() < epsilon {
        return PowerAction::from_index(rng.gen_range(0..PowerAction::ALL.len()));
    }
    Ok(greedy_action(&net.forward(&normalize_state(s))?))
}

/// One gradient step on the MSE between Bellman targets from `target` and
/// the online estimates of the taken actions. Returns the batch loss
/// measured before the update.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Experience],
    gamma: f64,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let targets: Vec<f64> = batch
        .iter()
        .map(|e| {
            let next_q = target.forward_unchecked(&e.next_state);
            bellman_target(e.reward, &next_q, gamma, e.terminal)
        })
        .collect();
    let samples: Vec<(&[f64], usize, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(e, &t)| (&e.state[..], e.action, t))
        .collect();
    let (loss, grads) = net.loss_and_gradient(&samples);
    if !loss.is_finite() {
        return Err(Error::Divergence { step: 0, loss });
    }
    optimizer.apply(net, &grads);
    Ok(loss)
}

/// Copies the online parameters into the target network.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if !net.same_architecture(target) {
        return Err(Error::contract(format!(
            "cannot sync {:?} into {:?}",
            net.layout(),
            target.layout()
        )));
    }
    target.clone_from(net);
    Ok(())
}

/// Online network, frozen target, replay memory and optimiser of one agent.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub online: QNetwork,
    pub target: QNetwork,
    pub memory: ReplayMemory,
    optimizer: Optimizer,
    gamma: f64,
    batch_size: usize,
    sync_interval: u64,
    train_steps: u64,
    replay_rng: SimRng,
}

impl DqnLearner {
    pub fn new(layout: &[usize], hp: &Hyperparameters, init_rng: &mut SimRng, replay_rng: SimRng) -> Self {
        let online = QNetwork::new(layout, init_rng);
        let optimizer = Optimizer::new(hp.optimizer, hp.learning_rate, &online);
        Self {
            target: online.clone(),
            online,
            memory: ReplayMemory::new(hp.replay_capacity),
            optimizer,
            gamma: hp.gamma,
            batch_size: hp.batch_size,
            sync_interval: hp.target_sync_interval,
            train_steps: 0,
            replay_rng,
        }
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn remember(&mut self, e: Experience) {
        self.memory.push(e);
    }

    /// Trains on one sampled minibatch once the memory holds a full batch.
    /// Returns the loss, or `None` during warm-up.
    pub fn train(&mut self) -> Result<Option<f64>> {
        if self.memory.len() < self.batch_size {
            return Ok(None);
        }
        let batch = self.memory.sample(self.batch_size, &mut self.replay_rng);
        let loss = train_step(&mut self.online, &self.target, &batch, self.gamma, &mut self.optimizer)
            .map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence {
                    step: self.train_steps,
                    loss,
                },
                other => other,
            })?;
        self.train_steps += 1;
        if self.train_steps % self.sync_interval == 0 {
            sync_target(&self.online, &mut self.target)?;
        }
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::types::NodeState;

    fn s(p: i32, l: i32, st: i32) -> NodeState {
        NodeState::from_raw(p, l, st).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_state(&s(0, 0, -110)), [0.0, 0.0, 0.0]);
        assert_eq!(normalize_state(&s(20, 70, -40)), [1.0, 1.0, 1.0]);
        assert_eq!(normalize_state(&s(10, 35, -75)), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn bellman_examples() {
        assert!((bellman_target(1.0, &[0.0, 2.0, 1.0], 0.9, false) - 2.8).abs() < 1e-12);
        assert_eq!(bellman_target(1.0, &[0.0, 2.0, 1.0], 0.0, false), 1.0);
        assert_eq!(bellman_target(1.0, &[9.0, 9.0, 9.0], 0.9, true), 1.0);
    }

    #[test]
    fn greedy_tie_breaks() {
        assert_eq!(greedy_action(&[0.1, 0.9, 0.2]), PowerAction::Hold);
        assert_eq!(greedy_action(&[0.5, 0.5, 0.1]), PowerAction::Hold);
        assert_eq!(greedy_action(&[0.5, 0.1, 0.5]), PowerAction::Decrease);
        assert_eq!(greedy_action(&[0.1, 0.1, 0.5]), PowerAction::Increase);
        assert_eq!(greedy_action(&[0.3, 0.3, 0.3]), PowerAction::Hold);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut net = QNetwork::zeros(&DEFAULT_LAYOUT);
        net.layers_mut()[2].biases = vec![0.1, 0.9, 0.2];
        let mut rng = seeded(4);
        for _ in 0..100 {
            assert_eq!(select_action(&net, &s(5, 5, -90), 0.0, &mut rng).unwrap(), PowerAction::Hold);
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        // Each count is Binomial(10_000, 1/3): sigma ~ 47.1.
        let net = QNetwork::zeros(&DEFAULT_LAYOUT);
        let mut rng = seeded(2024);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&net, &s(5, 5, -90), 1.0, &mut rng).unwrap().index()] += 1;
        }
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let e = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_steps: 100,
        };
        assert_eq!(e.at(0), 1.0);
        assert!((e.at(50) - 0.525).abs() < 1e-12);
        assert_eq!(e.at(100), 0.05);
        assert_eq!(e.at(10_000), 0.05);
    }

    #[test]
    fn sync_copies_and_checks_architecture() {
        let net = QNetwork::new(&DEFAULT_LAYOUT, &mut seeded(1));
        let mut target = QNetwork::new(&DEFAULT_LAYOUT, &mut seeded(2));
        sync_target(&net, &mut target).unwrap();
        let mut rng = seeded(3);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            assert_eq!(net.forward(&x).unwrap(), target.forward(&x).unwrap());
        }
        let mut small = QNetwork::zeros(&[3, 4, 3]);
        assert!(sync_target(&net, &mut small).is_err());
    }

    #[test]
    fn train_step_rejects_empty_batch_and_leaves_target() {
        let mut net = QNetwork::new(&[3, 4, 3, 3], &mut seeded(1));
        let target = net.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &net);
        assert!(train_step(&mut net, &target, &[], 0.9, &mut opt).is_err());
        let e = Experience {
            state: [0.1, 0.2, 0.3],
            action: 2,
            reward: 1.0,
            next_state: [0.3, 0.2, 0.1],
            terminal: false,
        };
        let before = target.clone();
        train_step(&mut net, &target, &[&e], 0.9, &mut opt).unwrap();
        assert_eq!(before, target);
        assert_ne!(net, target);
    }

    #[test]
    fn diverging_loss_is_an_error() {
        let mut net = QNetwork::new(&[3, 4, 3, 3], &mut seeded(1));
        let target = net.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &net);
        let e = Experience {
            state: [0.1, 0.2, 0.3],
            action: 0,
            reward: f64::INFINITY,
            next_state: [0.3, 0.2, 0.1],
            terminal: false,
        };
        assert!(matches!(
            train_step(&mut net, &target, &[&e], 0.9, &mut opt),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn target_changes_only_on_sync_steps() {
        let hp = Hyperparameters {
            batch_size: 2,
            target_sync_interval: 5,
            ..Default::default()
        };
        let mut l = DqnLearner::new(&[3, 4, 3, 3], &hp, &mut seeded(1), seeded(2));
        let initial = l.target.clone();
        for k in 0..4 {
            l.remember(Experience {
                state: [0.1 * k as f64, 0.5, 0.5],
                action: k % 3,
                reward: 1.0,
                next_state: [0.5, 0.5, 0.5],
                terminal: false,
            });
        }
        let mut prev = l.target.clone();
        for step in 1..=12u64 {
            l.train().unwrap().unwrap();
            if step % 5 == 0 {
                assert_ne!(l.target, prev);
                assert_eq!(l.target, l.online);
            } else {
                assert_eq!(l.target, prev);
            }
            if step < 5 {
                assert_eq!(l.target, initial);
            }
            prev = l.target.clone();
        }
    }

    #[test]
    fn warm_up_skips_training() {
        let hp = Hyperparameters::default();
        let mut l = DqnLearner::new(&DEFAULT_LAYOUT, &hp, &mut seeded(1), seeded(2));
        l.remember(Experience {
            state: [0.0; 3],
            action: 1,
            reward: 0.0,
            next_state: [0.0; 3],
            terminal: false,
        });
        assert_eq!(l.train().unwrap(), None);
        assert_eq!(l.train_steps(), 0);
    }
}
