//! Per-frame link outcomes: SINR, rate selection, carrier-sense admission
//! and energy accounting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::types::{LinkQuality, NodeId, PowerLevel, MAX_QUALITY};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTier {
    pub snr_db: f64,
    pub mbps: f64,
}

/// SNR thresholds and the PHY rate unlocked at each, both strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct RateTable {
    tiers: Vec<RateTier>,
}

impl RateTable {
    pub fn new(tiers: Vec<RateTier>) -> Result<Self> {
        if tiers.is_empty() {
            return Err(Error::Config("rate table is empty".into()));
        }
        for w in tiers.windows(2) {
            if !(w[1].snr_db > w[0].snr_db && w[1].mbps > w[0].mbps) {
                return Err(Error::Config(
                    "rate table thresholds and rates must be strictly increasing".into(),
                ));
            }
        }
        if tiers[0].mbps <= 0.0 {
            return Err(Error::Config("rate table rates must be positive".into()));
        }
        Ok(Self { tiers })
    }

    pub fn tiers(&self) -> &[RateTier] {
        &self.tiers
    }

    /// SNR needed for any delivery at all.
    pub fn min_snr_db(&self) -> f64 {
        self.tiers[0].snr_db
    }

    pub fn max_mbps(&self) -> f64 {
        self.tiers[self.tiers.len() - 1].mbps
    }

    /// Highest rate whose threshold is at or below `snr`; 0 below the table.
    pub fn rate_for_snr(&self, snr_db: f64) -> f64 {
        self.tiers
            .iter()
            .rev()
            .find(|t| snr_db >= t.snr_db)
            .map_or(0.0, |t| t.mbps)
    }
}

impl Default for RateTable {
    /// Single-stream 20 MHz 802.11n, MCS0..MCS7.
    fn default() -> Self {
        let pairs = [
            (5.0, 6.5),
            (8.0, 13.0),
            (11.0, 19.5),
            (14.0, 26.0),
            (17.0, 39.0),
            (20.0, 52.0),
            (23.0, 58.5),
            (25.0, 65.0),
        ];
        Self::try_from(pairs.to_vec()).expect("default table is valid")
    }
}

impl TryFrom<Vec<(f64, f64)>> for RateTable {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        RateTable::new(v.into_iter().map(|(snr_db, mbps)| RateTier { snr_db, mbps }).collect())
    }
}

impl From<RateTable> for Vec<(f64, f64)> {
    fn from(t: RateTable) -> Self {
        t.tiers.into_iter().map(|t| (t.snr_db, t.mbps)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    pub noise_dbm: f64,
    pub cs_threshold_dbm: f64,
    /// Power amplifier efficiency (radiated / drawn).
    pub amp_efficiency: f64,
    /// Constant electronics draw, transmitting or not.
    pub processing_watts: f64,
    pub rate_table: RateTable,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            noise_dbm: -94.0,
            cs_threshold_dbm: -82.0,
            amp_efficiency: 0.1,
            processing_watts: 0.1,
            rate_table: RateTable::default(),
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return Err(Error::Config("amp_efficiency must be in (0, 1]".into()));
        }
        if !(self.processing_watts > 0.0) {
            return Err(Error::Config("processing_watts must be positive".into()));
        }
        Ok(())
    }

    /// Noise-only SNR of a link with the given attenuation.
    pub fn link_snr_db(&self, p_tx_dbm: f64, loss_db: f64) -> f64 {
        p_tx_dbm - loss_db - self.noise_dbm
    }
}

/// Signal to interference-plus-noise ratio in dB.
pub fn snr_db(p_rx_dbm: f64, interference_mw: f64, noise_dbm: f64) -> f64 {
    mw_to_dbm(dbm_to_mw(p_rx_dbm) / (dbm_to_mw(noise_dbm) + interference_mw))
}

/// Rounds SNR to an integer quality figure in `[0, 70]`.
pub fn quantize_quality(snr_db: f64) -> LinkQuality {
    let v = if snr_db.is_nan() {
        0
    } else {
        snr_db.round().clamp(0.0, MAX_QUALITY as f64) as i32
    };
    LinkQuality::new(v).expect("clamped into range")
}

pub fn rate_for_snr(snr_db: f64, table: &RateTable) -> f64 {
    table.rate_for_snr(snr_db)
}

/// Bits carried in one frame at `mbps`.
pub fn frame_capacity_bits(mbps: f64, frame_duration: f64) -> u64 {
    (mbps * 1e6 * frame_duration).round() as u64
}

/// A node's wish to send up to `offered_bits` to `rx` in this slot.
/// `u64::MAX` means saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxIntent {
    pub tx: NodeId,
    pub rx: NodeId,
    pub offered_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub tx: NodeId,
    pub rx: NodeId,
    pub rssi_dbm: f64,
    /// SINR at the receiver.
    pub snr_db: f64,
    /// Co-channel interference at the receiver, mW.
    pub interference_mw: f64,
    pub success: bool,
    pub bits_delivered: u64,
    pub frame_duration: f64,
}

impl LinkReport {
    pub fn throughput_mbps(&self) -> f64 {
        self.bits_delivered as f64 / self.frame_duration / 1e6
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContentionOutcome {
    /// One report per admitted transmitter, sorted by transmitter id.
    pub reports: Vec<LinkReport>,
    /// Transmitters that sensed the medium busy, sorted by id.
    pub deferred: Vec<NodeId>,
}

impl ContentionOutcome {
    pub fn report_for(&self, tx: NodeId) -> Option<&LinkReport> {
        self.reports.iter().find(|r| r.tx == tx)
    }
}

/// Resolves one frame slot of channel access.
///
/// Contenders are visited in a random order drawn from `rng`. A contender
/// defers if it hears any already admitted transmitter at or above the
/// carrier-sense threshold. Every admitted link is then evaluated at its
/// receiver's SINR with all other admitted transmitters as interference.
/// A receiver that is itself transmitting cannot decode.
pub fn contend_and_transmit(
    intents: &[TxIntent],
    channel: &ChannelMatrix,
    powers: &[PowerLevel],
    phy: &PhyConfig,
    frame_duration: f64,
    rng: &mut SimRng,
) -> Result<ContentionOutcome> {
    for (i, a) in intents.iter().enumerate() {
        if intents[..i].iter().any(|b| b.tx == a.tx) {
            return Err(Error::contract(format!("transmitter {} appears twice in one slot", a.tx)));
        }
        if a.tx == a.rx {
            return Err(Error::contract(format!("{} addressed to itself", a.tx)));
        }
        if a.tx.0 >= channel.len() || a.rx.0 >= channel.len() || a.tx.0 >= powers.len() {
            return Err(Error::UnknownNode(a.tx.0.max(a.rx.0)));
        }
    }

    let mut order: Vec<usize> = (0..intents.len()).collect();
    order.shuffle(rng);

    let mut admitted: Vec<TxIntent> = Vec::with_capacity(intents.len());
    let mut deferred = Vec::new();
    for i in order {
        let c = intents[i];
        let busy = admitted.iter().any(|a| {
            channel.rx_dbm(a.tx, c.tx, powers[a.tx.0].dbm() as f64) >= phy.cs_threshold_dbm
        });
        if busy {
            deferred.push(c.tx);
        } else {
            admitted.push(c);
        }
    }

    let noise_mw = dbm_to_mw(phy.noise_dbm);
    let min_snr = phy.rate_table.min_snr_db();
    let mut reports: Vec<LinkReport> = admitted
        .iter()
        .map(|link| {
            let rssi = channel.rx_dbm(link.tx, link.rx, powers[link.tx.0].dbm() as f64);
            let interference_mw: f64 = admitted
                .iter()
                .filter(|o| o.tx != link.tx)
                .map(|o| dbm_to_mw(channel.rx_dbm(o.tx, link.rx, powers[o.tx.0].dbm() as f64)))
                .sum();
            let sinr = mw_to_dbm(dbm_to_mw(rssi) / (noise_mw + interference_mw));
            let rx_busy = admitted.iter().any(|o| o.tx == link.rx);
            let decodable = sinr >= min_snr && !rx_busy;
            let bits = if decodable {
                frame_capacity_bits(phy.rate_table.rate_for_snr(sinr), frame_duration)
                    .min(link.offered_bits)
            } else {
                0
            };
            LinkReport {
                tx: link.tx,
                rx: link.rx,
                rssi_dbm: rssi,
                snr_db: sinr,
                interference_mw,
                success: bits > 0,
                bits_delivered: bits,
                frame_duration,
            }
        })
        .collect();
    reports.sort_by_key(|r| r.tx);
    deferred.sort();
    Ok(ContentionOutcome { reports, deferred })
}

/// Energy drawn by one node over one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    /// Radiated power; zero when idle.
    pub tx_power_watts: f64,
    pub processing_watts: f64,
    pub energy_joules: f64,
    pub duration: f64,
}

impl EnergyRecord {
    /// Energy normalised by the frame duration, i.e. mean power draw in W.
    pub fn power_draw_watts(&self) -> f64 {
        self.energy_joules / self.duration
    }
}

pub fn energy_for_frame(
    p: PowerLevel,
    transmitting: bool,
    phy: &PhyConfig,
    frame_duration: f64,
) -> EnergyRecord {
    let tx_power_watts = if transmitting {
        dbm_to_mw(p.dbm() as f64) / 1000.0
    } else {
        0.0
    };
    let draw = tx_power_watts / phy.amp_efficiency + phy.processing_watts;
    EnergyRecord {
        tx_power_watts,
        processing_watts: phy.processing_watts,
        energy_joules: draw * frame_duration,
        duration: frame_duration,
    }
}
