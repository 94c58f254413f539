//! Run configuration, loadable from TOML. Keys are the field names below;
//! anything omitted takes its default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::PathlossModel;
use crate::dqn::Hyperparameters;
use crate::error::{Error, Result};
use crate::phy::PhyConfig;
use crate::policies::{Arm, FixedRedraw};
use crate::types::PowerLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    /// ETX sliding window, frames.
    pub etx_window: u64,
    /// Frames between route recomputations.
    pub recompute_interval: u64,
    /// Transmit power assumed when judging links that have no samples yet.
    pub seed_power: SeedPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedPower {
    /// The transmitter's current power, as its hello frames would use.
    #[default]
    Current,
    /// The maximum power level.
    Max,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            etx_window: 100,
            recompute_interval: 20,
            seed_power: SeedPower::Current,
        }
    }
}

/// How flows are drawn at each episode start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrafficPattern {
    /// `flows` distinct (source, destination) pairs.
    RandomPairs,
    /// Every node sources one flow to a uniformly drawn destination.
    #[default]
    EveryNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub area_width: f64,
    pub area_height: f64,
    /// Node speed, m/s.
    pub speed: f64,
    /// Frame slot length, s. Also the power decision period.
    pub frame_duration: f64,
    /// Frames per episode. Flows are redrawn at every episode start.
    pub episode_length: u64,
    pub episodes: u64,
    pub traffic: TrafficPattern,
    /// Concurrent saturated unicast flows under `random_pairs`.
    pub flows: usize,
    pub policy: Arm,
    pub seed: u64,
    /// Power every adaptive controller starts from, dBm.
    pub initial_power_dbm: i32,
    /// Weight `c` of the power-change penalty in the reward.
    pub reward_penalty: f64,
    pub fixed_levels_dbm: Vec<i32>,
    pub fixed_redraw: FixedRedraw,
    /// Per-destination relay queue limit, bits.
    pub relay_buffer_bits: u64,
    /// Trailing fraction of episodes that metrics are computed over.
    pub measured_fraction: f64,
    pub channel: PathlossModel,
    pub phy: PhyConfig,
    pub routing: RoutingConfig,
    pub dqn: Hyperparameters,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            node_count: 5,
            area_width: 500.0,
            area_height: 500.0,
            speed: 5.0,
            frame_duration: 0.005,
            episode_length: 200,
            episodes: 30,
            traffic: TrafficPattern::EveryNode,
            flows: 2,
            policy: Arm::Dqn,
            seed: 1,
            initial_power_dbm: 20,
            reward_penalty: 0.1,
            fixed_levels_dbm: vec![0, 10, 20],
            fixed_redraw: FixedRedraw::PerFrame,
            relay_buffer_bits: 3_250_000,
            measured_fraction: 0.5,
            channel: PathlossModel::default(),
            phy: PhyConfig::default(),
            routing: RoutingConfig::default(),
            dqn: Hyperparameters::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn total_frames(&self) -> u64 {
        self.episode_length * self.episodes
    }

    /// First episode included in the reported metrics.
    pub fn first_measured_episode(&self) -> u64 {
        let skip = (self.episodes as f64 * (1.0 - self.measured_fraction)).round() as u64;
        skip.min(self.episodes.saturating_sub(1))
    }

    pub fn fixed_levels(&self) -> Result<Vec<PowerLevel>> {
        self.fixed_levels_dbm.iter().map(|&v| PowerLevel::new(v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.node_count < 2 {
            return bad(format!("node_count = {} (need at least 2)", self.node_count));
        }
        if !(self.area_width > 0.0 && self.area_height > 0.0) {
            return bad("area must be positive".into());
        }
        if !(self.speed >= 0.0) {
            return bad("speed must be non-negative".into());
        }
        if !(self.frame_duration > 0.0) {
            return bad("frame_duration must be positive".into());
        }
        if self.episode_length == 0 || self.episodes == 0 {
            return bad("episode_length and episodes must be positive".into());
        }
        if self.flows > 0 && self.node_count < 2 {
            return bad("flows need two distinct nodes".into());
        }
        if !(self.reward_penalty > 0.0) {
            return bad("reward_penalty must be positive".into());
        }
        if !(self.measured_fraction > 0.0 && self.measured_fraction <= 1.0) {
            return bad("measured_fraction must be in (0, 1]".into());
        }
        if self.fixed_levels_dbm.is_empty() {
            return bad("fixed_levels_dbm is empty".into());
        }
        if self.routing.etx_window == 0 || self.routing.recompute_interval == 0 {
            return bad("routing intervals must be positive".into());
        }
        PowerLevel::new(self.initial_power_dbm)?;
        self.fixed_levels()?;
        self.phy.validate()?;
        self.dqn.validate()
    }
}
