//! CSV and JSON output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::ComparisonTable;
use crate::sim::{ArmResult, FrameLog};
use crate::types::NodeId;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub frame: u64,
    pub node: usize,
    pub power_dbm: i32,
    pub action: i32,
    pub reward: f64,
    pub tx_bits: u64,
    pub energy_j: f64,
}

/// Per-frame rows for one node, or for every node when `node` is `None`.
pub fn trace_rows(log: &FrameLog, node: Option<NodeId>) -> Result<Vec<TraceRow>> {
    if let Some(id) = node {
        if id.0 >= log.node_count {
            return Err(Error::UnknownNode(id.0));
        }
    }
    let mut rows = Vec::new();
    for r in &log.records {
        for (i, n) in r.nodes.iter().enumerate() {
            if node.is_some_and(|id| id.0 != i) {
                continue;
            }
            rows.push(TraceRow {
                frame: r.frame,
                node: i,
                power_dbm: n.power_dbm,
                action: n.action,
                reward: n.reward,
                tx_bits: n.tx_bits,
                energy_j: n.energy_j,
            });
        }
    }
    Ok(rows)
}

pub fn write_traces<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["frame", "node", "power_dbm", "action", "reward", "tx_bits", "energy_j"])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the trace CSV for `node` (all nodes if `None`) to `path`.
pub fn export_traces(log: &FrameLog, node: Option<NodeId>, path: &Path) -> Result<usize> {
    let rows = trace_rows(log, node)?;
    write_traces(&rows, std::fs::File::create(path)?)?;
    Ok(rows.len())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

/// Comparison CSV; undefined gains are written as `null`.
pub fn write_comparison<W: Write>(table: &ComparisonTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arm", "energy_eff_mbps_per_j", "throughput_mbps", "gain_eff_pct", "gain_tput_pct"])?;
    for r in &table.rows {
        w.write_record([
            r.arm.name().to_string(),
            r.energy_eff_mbps_per_j.to_string(),
            r.throughput_mbps.to_string(),
            opt(r.gain_eff_pct),
            opt(r.gain_tput_pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub seeds: &'a [u64],
    pub config: &'a ScenarioConfig,
    pub arms: &'a [ArmResult],
    pub comparison: Option<&'a ComparisonTable>,
}

impl<'a> RunSummary<'a> {
    pub fn new(
        config: &'a ScenarioConfig,
        seeds: &'a [u64],
        arms: &'a [ArmResult],
        comparison: Option<&'a ComparisonTable>,
    ) -> Self {
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            seeds,
            config,
            arms,
            comparison,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}
