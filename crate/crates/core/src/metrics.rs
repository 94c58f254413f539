//! Network throughput, energy efficiency and arm comparisons.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policies::Arm;
use crate::sim::FrameRecord;

/// Additive totals over a set of frames. Combining totals of disjoint
/// chunks gives the totals of their union.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Totals {
    pub frames: u64,
    pub duration_s: f64,
    /// Bits received by final destinations.
    pub delivered_bits: u64,
    /// Energy drawn by all nodes, J.
    pub energy_j: f64,
    /// Sum over frames and nodes of transmit power, dBm, for the mean.
    pub power_dbm_sum: f64,
    pub node_frames: u64,
}

impl Totals {
    pub fn merge(self, other: Totals) -> Totals {
        Totals {
            frames: self.frames + other.frames,
            duration_s: self.duration_s + other.duration_s,
            delivered_bits: self.delivered_bits + other.delivered_bits,
            energy_j: self.energy_j + other.energy_j,
            power_dbm_sum: self.power_dbm_sum + other.power_dbm_sum,
            node_frames: self.node_frames + other.node_frames,
        }
    }

    pub fn throughput_mbps(&self) -> Result<f64> {
        if !(self.duration_s > 0.0) {
            return Err(Error::contract("throughput over a zero-duration log"));
        }
        Ok(self.delivered_bits as f64 / self.duration_s / 1e6)
    }

    /// Delivered megabits per Joule; zero when nothing was delivered.
    pub fn energy_efficiency(&self) -> Result<f64> {
        if !(self.duration_s > 0.0) {
            return Err(Error::contract("efficiency over a zero-duration log"));
        }
        if self.delivered_bits == 0 {
            return Ok(0.0);
        }
        if !(self.energy_j > 0.0) {
            return Err(Error::contract("bits delivered with no energy consumed"));
        }
        Ok(self.delivered_bits as f64 / 1e6 / self.energy_j)
    }

    pub fn mean_power_dbm(&self) -> f64 {
        if self.node_frames == 0 {
            0.0
        } else {
            self.power_dbm_sum / self.node_frames as f64
        }
    }
}

pub fn aggregate(records: &[FrameRecord]) -> Result<Totals> {
    if records.is_empty() {
        return Err(Error::contract("aggregate needs at least one frame"));
    }
    Ok(records.iter().fold(Totals::default(), |acc, r| {
        acc.merge(Totals {
            frames: 1,
            duration_s: r.duration,
            delivered_bits: r.delivered_bits,
            energy_j: r.energy_j(),
            power_dbm_sum: r.nodes.iter().map(|n| n.power_dbm as f64).sum(),
            node_frames: r.nodes.len() as u64,
        })
    }))
}

/// Summary of one (arm, seed) run over its measured window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub arm: Arm,
    pub seed: u64,
    pub frames: u64,
    pub throughput_mbps: f64,
    /// Mbps per W, i.e. Mbit/J.
    pub energy_efficiency: f64,
    pub energy_j: f64,
    pub delivered_bits: u64,
    pub mean_power_dbm: f64,
    /// Frames in which some flow had no route, summed over flows.
    pub paused_flow_frames: u64,
}

impl EpisodeMetrics {
    pub fn from_records(arm: Arm, seed: u64, records: &[FrameRecord]) -> Result<Self> {
        let t = aggregate(records)?;
        Ok(Self {
            arm,
            seed,
            frames: t.frames,
            throughput_mbps: t.throughput_mbps()?,
            energy_efficiency: t.energy_efficiency()?,
            energy_j: t.energy_j,
            delivered_bits: t.delivered_bits,
            mean_power_dbm: t.mean_power_dbm(),
            paused_flow_frames: records.iter().map(|r| r.paused_flows as u64).sum(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub arm: Arm,
    pub energy_eff_mbps_per_j: f64,
    pub throughput_mbps: f64,
    /// Percent over the fixed arm; `None` without a usable fixed baseline.
    pub gain_eff_pct: Option<f64>,
    pub gain_tput_pct: Option<f64>,
}

/// Rows in fixed, myopic, DQN order; absent arms are skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, arm: Arm) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }
}

pub fn relative_gain_pct(value: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0 && baseline.is_finite()).then(|| (value - baseline) / baseline * 100.0)
}

/// `entries` holds `(arm, energy efficiency, throughput)` per arm.
pub fn build_comparison(entries: &[(Arm, f64, f64)]) -> ComparisonTable {
    let fixed = entries.iter().find(|e| e.0 == Arm::Fixed);
    let rows = [Arm::Fixed, Arm::Myopic, Arm::Dqn]
        .into_iter()
        .filter_map(|arm| entries.iter().find(|e| e.0 == arm))
        .map(|&(arm, eff, tput)| ComparisonRow {
            arm,
            energy_eff_mbps_per_j: eff,
            throughput_mbps: tput,
            gain_eff_pct: fixed.and_then(|f| relative_gain_pct(eff, f.1)),
            gain_tput_pct: fixed.and_then(|f| relative_gain_pct(tput, f.2)),
        })
        .collect();
    ComparisonTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NodeFrame;

    fn record(bits: u64, energy: &[f64]) -> FrameRecord {
        FrameRecord {
            frame: 0,
            episode: 0,
            nodes: energy
                .iter()
                .map(|&e| NodeFrame {
                    power_dbm: 10,
                    action: 0,
                    reward: 0.0,
                    tx_bits: 0,
                    energy_j: e,
                    transmitting: false,
                    deferred: false,
                })
                .collect(),
            reports: vec![],
            delivered_bits: bits,
            paused_flows: 0,
            route_digest: 0,
            duration: 0.005,
        }
    }

    #[test]
    fn single_frame_rates() {
        // 1.1 W for 5 ms.
        let t = aggregate(&[record(325_000, &[0.0055])]).unwrap();
        assert!((t.throughput_mbps().unwrap() - 65.0).abs() < 1e-9);
        assert!((t.energy_efficiency().unwrap() - 65.0 / 1.1).abs() < 1e-9);
    }

    #[test]
    fn no_traffic_is_zero() {
        let t = aggregate(&[record(0, &[0.0005, 0.0005])]).unwrap();
        assert_eq!(t.throughput_mbps().unwrap(), 0.0);
        assert_eq!(t.energy_efficiency().unwrap(), 0.0);
    }

    #[test]
    fn empty_or_zero_duration_is_an_error() {
        assert!(aggregate(&[]).is_err());
        let mut r = record(10, &[0.1]);
        r.duration = 0.0;
        assert!(aggregate(&[r]).unwrap().throughput_mbps().is_err());
    }

    #[test]
    fn gains_follow_the_fixed_baseline() {
        let t = build_comparison(&[
            (Arm::Dqn, 3.0, 6.0),
            (Arm::Fixed, 2.0, 4.0),
            (Arm::Myopic, 2.0, 4.0),
        ]);
        let arms: Vec<Arm> = t.rows.iter().map(|r| r.arm).collect();
        assert_eq!(arms, vec![Arm::Fixed, Arm::Myopic, Arm::Dqn]);
        assert_eq!(t.row(Arm::Dqn).unwrap().gain_eff_pct, Some(50.0));
        assert_eq!(t.row(Arm::Myopic).unwrap().gain_tput_pct, Some(0.0));
        assert_eq!(t.row(Arm::Fixed).unwrap().gain_eff_pct, Some(0.0));
    }

    #[test]
    fn degenerate_or_missing_baseline() {
        let zero = build_comparison(&[(Arm::Fixed, 0.0, 0.0), (Arm::Dqn, 1.0, 1.0)]);
        assert_eq!(zero.row(Arm::Dqn).unwrap().gain_eff_pct, None);
        let missing = build_comparison(&[(Arm::Dqn, 1.0, 1.0)]);
        assert_eq!(missing.rows.len(), 1);
        assert_eq!(missing.rows[0].gain_tput_pct, None);
    }
}
