//! Quantized observation levels, power actions and the flat state index.
//!
//! A node observes its own transmit power (0..=20 dBm), a link quality
//! figure (0..=70) and a signal strength (-110..=-40 dBm), all in unit steps.
//! The product of the three ranges is the tabular state space a Q-table
//! would need; the DQN replaces that table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POWER_DBM: i32 = 0;
pub const MAX_POWER_DBM: i32 = 20;
pub const MAX_QUALITY: i32 = 70;
pub const MIN_STRENGTH_DBM: i32 = -110;
pub const MAX_STRENGTH_DBM: i32 = -40;

pub const POWER_LEVELS: usize = (MAX_POWER_DBM - MIN_POWER_DBM + 1) as usize;
pub const QUALITY_LEVELS: usize = (MAX_QUALITY + 1) as usize;
pub const STRENGTH_LEVELS: usize = (MAX_STRENGTH_DBM - MIN_STRENGTH_DBM + 1) as usize;

/// Number of distinct `(P, L, S)` tuples.
pub const NUM_STATES: usize = POWER_LEVELS * QUALITY_LEVELS * STRENGTH_LEVELS;
pub const NUM_ACTIONS: usize = 3;
/// Size of the equivalent tabular Q-function.
pub const Q_TABLE_SIZE: usize = NUM_STATES * NUM_ACTIONS;

fn check(what: &'static str, value: i64, min: i32, max: i32) -> Result<()> {
    if value < min as i64 || value > max as i64 {
        return Err(Error::OutOfRange {
            what,
            value,
            min: min as i64,
            max: max as i64,
        });
    }
    Ok(())
}

/// Transmit power in whole dBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct PowerLevel(u8);

impl PowerLevel {
    pub const MIN: PowerLevel = PowerLevel(MIN_POWER_DBM as u8);
    pub const MAX: PowerLevel = PowerLevel(MAX_POWER_DBM as u8);

    pub fn new(dbm: i32) -> Result<Self> {
        check("power_dbm", dbm as i64, MIN_POWER_DBM, MAX_POWER_DBM)?;
        Ok(PowerLevel(dbm as u8))
    }

    /// Clamps into the valid range instead of failing.
    pub fn saturating(dbm: i32) -> Self {
        PowerLevel(dbm.clamp(MIN_POWER_DBM, MAX_POWER_DBM) as u8)
    }

    pub fn dbm(self) -> i32 {
        self.0 as i32
    }

    pub fn milliwatts(self) -> f64 {
        10f64.powf(self.dbm() as f64 / 10.0)
    }
}

impl TryFrom<i32> for PowerLevel {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        PowerLevel::new(v)
    }
}

impl From<PowerLevel> for i32 {
    fn from(p: PowerLevel) -> i32 {
        p.dbm()
    }
}

impl fmt::Display for PowerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dBm", self.0)
    }
}

/// Driver-style link quality, 0..=70.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkQuality(u8);

impl LinkQuality {
    pub const MIN: LinkQuality = LinkQuality(0);

    pub fn new(v: i32) -> Result<Self> {
        check("link_quality", v as i64, 0, MAX_QUALITY)?;
        Ok(LinkQuality(v as u8))
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }
}

/// Received signal strength in whole dBm, -110..=-40.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalStrength(i8);

impl SignalStrength {
    pub const FLOOR: SignalStrength = SignalStrength(MIN_STRENGTH_DBM as i8);

    pub fn new(dbm: i32) -> Result<Self> {
        check("signal_strength_dbm", dbm as i64, MIN_STRENGTH_DBM, MAX_STRENGTH_DBM)?;
        Ok(SignalStrength(dbm as i8))
    }

    pub fn dbm(self) -> i32 {
        self.0 as i32
    }
}

/// What an agent observes about itself each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeState {
    pub power: PowerLevel,
    pub quality: LinkQuality,
    pub strength: SignalStrength,
}

impl NodeState {
    pub fn new(power: PowerLevel, quality: LinkQuality, strength: SignalStrength) -> Self {
        Self {
            power,
            quality,
            strength,
        }
    }

    /// Builds a state from raw integers, validating each field.
    pub fn from_raw(power_dbm: i32, quality: i32, strength_dbm: i32) -> Result<Self> {
        Ok(Self {
            power: PowerLevel::new(power_dbm)?,
            quality: LinkQuality::new(quality)?,
            strength: SignalStrength::new(strength_dbm)?,
        })
    }
}

/// Power-major flat index in `[0, NUM_STATES)`.
pub fn encode_state(s: &NodeState) -> usize {
    let p = s.power.dbm() as usize;
    let l = s.quality.value() as usize;
    let st = (s.strength.dbm() - MIN_STRENGTH_DBM) as usize;
    p * QUALITY_LEVELS * STRENGTH_LEVELS + l * STRENGTH_LEVELS + st
}

pub fn decode_state(index: usize) -> Result<NodeState> {
    if index >= NUM_STATES {
        return Err(Error::OutOfRange {
            what: "state_index",
            value: index as i64,
            min: 0,
            max: NUM_STATES as i64 - 1,
        });
    }
    let st = index % STRENGTH_LEVELS;
    let l = (index / STRENGTH_LEVELS) % QUALITY_LEVELS;
    let p = index / (STRENGTH_LEVELS * QUALITY_LEVELS);
    NodeState::from_raw(p as i32, l as i32, st as i32 + MIN_STRENGTH_DBM)
}

/// One of the three power adjustments. The discriminant order is also the
/// Q-network output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerAction {
    Decrease,
    Hold,
    Increase,
}

impl PowerAction {
    pub const ALL: [PowerAction; NUM_ACTIONS] =
        [PowerAction::Decrease, PowerAction::Hold, PowerAction::Increase];

    /// Step size in dBm.
    pub const STEP_DBM: i32 = 1;

    pub fn delta(self) -> i32 {
        match self {
            PowerAction::Decrease => -Self::STEP_DBM,
            PowerAction::Hold => 0,
            PowerAction::Increase => Self::STEP_DBM,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::OutOfRange {
            what: "action_index",
            value: i as i64,
            min: 0,
            max: NUM_ACTIONS as i64 - 1,
        })
    }
}

/// Applies `action` to `power`, saturating at the range ends.
///
/// The realized change is `result - power`, which is zero for a saturated step.
pub fn apply_action(power: PowerLevel, action: PowerAction) -> PowerLevel {
    PowerLevel::saturating(power.dbm() + action.delta())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
