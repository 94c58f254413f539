//! Power-control policies: the learning DQN agent and the two baselines.
//!
//! Every policy is driven the same way by the simulator. At the start of a
//! frame it sees an [`AgentContext`] built only from the node's own
//! measurements and the actions its neighbours broadcast last frame, and
//! returns the power to use. After the frame, learning policies get the
//! reward and the next observation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{
    greedy_action, normalize_state, select_action, DqnLearner, EpsilonSchedule, Experience,
    Hyperparameters,
};
use crate::error::{Error, Result};
use crate::phy::{dbm_to_mw, energy_for_frame, frame_capacity_bits, mw_to_dbm, PhyConfig};
use crate::rng::SimRng;
use crate::types::{apply_action, NodeId, NodeState, PowerAction, PowerLevel};

/// Inputs to the per-frame reward of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub throughput_mbps: f64,
    /// Frame energy divided by frame duration, W.
    pub energy_watts: f64,
    pub realized_delta_dbm: i32,
    pub transmitting: bool,
}

/// Energy efficiency minus a penalty on the signed power change.
///
/// A node that did not transmit gets exactly zero. Lowering power is
/// therefore rewarded by `+c` per dB, raising it penalised by `-c`.
pub fn compute_reward(inputs: &RewardInputs, c: f64) -> Result<f64> {
    if !inputs.transmitting {
        return Ok(0.0);
    }
    if !(inputs.energy_watts > 0.0) {
        return Err(Error::contract(format!(
            "transmitting node with non-positive energy {}",
            inputs.energy_watts
        )));
    }
    Ok(inputs.throughput_mbps / inputs.energy_watts - c * inputs.realized_delta_dbm as f64)
}

/// Everything a node's controller may look at when choosing its power.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentContext {
    pub node: NodeId,
    pub state: NodeState,
    pub last_delta_dbm: i32,
    /// Actions broadcast by neighbours during the previous frame, at most
    /// one per neighbour.
    pub mailbox: Vec<(NodeId, PowerAction)>,
}

/// Per-frame broadcast delivery: what is posted at frame `t` becomes
/// readable at `t + 1`.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    inbox: Vec<Vec<(NodeId, PowerAction)>>,
    outbox: Vec<Vec<(NodeId, PowerAction)>>,
}

impl Mailbox {
    pub fn new(n: usize) -> Self {
        Self {
            inbox: vec![Vec::new(); n],
            outbox: vec![Vec::new(); n],
        }
    }

    pub fn read(&self, node: NodeId) -> &[(NodeId, PowerAction)] {
        &self.inbox[node.0]
    }

    pub fn post(&mut self, from: NodeId, action: PowerAction, to: impl IntoIterator<Item = NodeId>) {
        for n in to {
            let slot = &mut self.outbox[n.0];
            if let Some(e) = slot.iter_mut().find(|(src, _)| *src == from) {
                e.1 = action;
            } else {
                slot.push((from, action));
            }
        }
    }

    /// Makes this frame's posts visible and clears the outbox.
    pub fn deliver(&mut self) {
        std::mem::swap(&mut self.inbox, &mut self.outbox);
        for o in &mut self.outbox {
            o.clear();
        }
    }
}

/// Frozen view of a node's last transmission, used to evaluate what each
/// action would have earned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSnapshot {
    pub power: PowerLevel,
    pub loss_db: f64,
    pub interference_mw: f64,
    pub offered_bits: u64,
}

/// Immediate reward of a hypothetical action.
pub trait RewardOracle {
    fn reward(&self, action: PowerAction) -> f64;
}

/// Counterfactual one-frame rewards under a frozen channel.
#[derive(Debug, Clone)]
pub struct ChannelOracle<'a> {
    pub snapshot: Option<LinkSnapshot>,
    pub phy: &'a PhyConfig,
    pub frame_duration: f64,
    pub penalty: f64,
}

impl RewardOracle for ChannelOracle<'_> {
    fn reward(&self, action: PowerAction) -> f64 {
        let Some(s) = self.snapshot else { return 0.0 };
        let p = apply_action(s.power, action);
        let sinr = p.dbm() as f64
            - s.loss_db
            - mw_to_dbm(dbm_to_mw(self.phy.noise_dbm) + s.interference_mw);
        let bits = frame_capacity_bits(self.phy.rate_table.rate_for_snr(sinr), self.frame_duration)
            .min(s.offered_bits);
        let energy = energy_for_frame(p, true, self.phy, self.frame_duration);
        let inputs = RewardInputs {
            throughput_mbps: bits as f64 / self.frame_duration / 1e6,
            energy_watts: energy.power_draw_watts(),
            realized_delta_dbm: p.dbm() - s.power.dbm(),
            transmitting: true,
        };
        compute_reward(&inputs, self.penalty).expect("energy is positive while transmitting")
    }
}

/// Best one-step action; ties prefer `Hold`, then `Decrease`.
pub fn myopic_policy_step(_ctx: &AgentContext, oracle: &impl RewardOracle) -> PowerAction {
    let r = PowerAction::ALL.map(|a| oracle.reward(a));
    greedy_action(&r)
}

/// Uniform draw from the fixed power levels.
pub fn fixed_policy_step(levels: &[PowerLevel], rng: &mut SimRng) -> PowerLevel {
    levels[rng.gen_range(0..levels.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Dqn,
    Fixed,
    Myopic,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Dqn => "dqn",
            Arm::Fixed => "fixed",
            Arm::Myopic => "myopic",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// When the fixed baseline redraws its power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FixedRedraw {
    #[default]
    PerFrame,
    PerRun,
}

/// DQN controller for one node.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub learner: DqnLearner,
    explore_rng: SimRng,
    schedule: EpsilonSchedule,
    reward_scale: f64,
    step: u64,
    /// Observation and action of the frame in flight.
    pending: Option<([f64; 3], usize)>,
}

impl DqnAgent {
    pub fn new(
        layout: &[usize],
        hp: &Hyperparameters,
        total_frames: u64,
        init_rng: &mut SimRng,
        replay_rng: SimRng,
        explore_rng: SimRng,
    ) -> Self {
        let decay_steps = (total_frames as f64 * hp.epsilon_decay_fraction).round() as u64;
        Self {
            learner: DqnLearner::new(layout, hp, init_rng, replay_rng),
            explore_rng,
            schedule: EpsilonSchedule {
                start: hp.epsilon_start,
                end: hp.epsilon_end,
                decay_steps,
            },
            reward_scale: hp.reward_scale,
            step: 0,
            pending: None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.at(self.step)
    }

    /// Observe, select ε-greedily and return the action to perform.
    pub fn act(&mut self, ctx: &AgentContext) -> Result<PowerAction> {
        let eps = self.epsilon();
        let a = select_action(&self.learner.online, &ctx.state, eps, &mut self.explore_rng)?;
        self.pending = Some((normalize_state(&ctx.state), a.index()));
        Ok(a)
    }

    /// Stores the finished transition and runs one training step.
    pub fn learn(&mut self, reward: f64, next_state: &NodeState) -> Result<Option<f64>> {
        let Some((state, action)) = self.pending.take() else {
            return Ok(None);
        };
        self.learner.remember(Experience {
            state,
            action,
            reward: reward * self.reward_scale,
            next_state: normalize_state(next_state),
            terminal: false,
        });
        self.step += 1;
        self.learner.train()
    }
}

/// The controller behind one node in a run.
#[derive(Debug, Clone)]
pub enum Controller {
    Dqn(Box<DqnAgent>),
    Fixed {
        levels: Vec<PowerLevel>,
        redraw: FixedRedraw,
        rng: SimRng,
        drawn: Option<PowerLevel>,
    },
    Myopic,
}

impl Controller {
    /// Chooses the power for the coming frame.
    pub fn decide(&mut self, ctx: &AgentContext, oracle: &impl RewardOracle) -> Result<PowerLevel> {
        let p = ctx.state.power;
        Ok(match self {
            Controller::Dqn(agent) => apply_action(p, agent.act(ctx)?),
            Controller::Myopic => apply_action(p, myopic_policy_step(ctx, oracle)),
            Controller::Fixed {
                levels,
                redraw,
                rng,
                drawn,
            } => match (redraw, *drawn) {
                (FixedRedraw::PerRun, Some(level)) => level,
                _ => {
                    let level = fixed_policy_step(levels, rng);
                    *drawn = Some(level);
                    level
                }
            },
        })
    }

    pub fn learn(&mut self, reward: f64, next_state: &NodeState) -> Result<Option<f64>> {
        match self {
            Controller::Dqn(agent) => agent.learn(reward, next_state),
            _ => Ok(None),
        }
    }
}
