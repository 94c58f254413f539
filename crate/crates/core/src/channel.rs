//! Node mobility and the pairwise radio channel.
//!
//! Nodes follow a zero-pause random waypoint model inside a rectangular
//! area. Link attenuation is log-distance pathloss, optionally with
//! symmetric log-normal shadowing drawn once per frame per node pair.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::types::{NodeId, SignalStrength, MAX_STRENGTH_DBM, MIN_STRENGTH_DBM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn sample(&self, rng: &mut SimRng) -> Position {
        Position::new(rng.gen_range(0.0..=self.width), rng.gen_range(0.0..=self.height))
    }
}

/// Random waypoint state for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mobility {
    pub area: Area,
    /// Metres per second, identical for every node.
    pub speed: f64,
    pub positions: Vec<Position>,
    pub waypoints: Vec<Position>,
}

impl Mobility {
    /// Places `n` nodes and their first waypoints uniformly over the area.
    pub fn random(n: usize, area: Area, speed: f64, rng: &mut SimRng) -> Self {
        let positions: Vec<Position> = (0..n).map(|_| area.sample(rng)).collect();
        let waypoints = (0..n).map(|_| area.sample(rng)).collect();
        Self {
            area,
            speed,
            positions,
            waypoints,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Advances every node by at most `speed * dt` toward its waypoint.
    ///
    /// A node that reaches its waypoint stops exactly on it and immediately
    /// gets a fresh waypoint; a node already sitting on its waypoint only
    /// gets a fresh waypoint this step.
    pub fn step(&mut self, dt: f64, rng: &mut SimRng) {
        debug_assert!(dt > 0.0);
        let reach = self.speed * dt;
        for (pos, wp) in self.positions.iter_mut().zip(self.waypoints.iter_mut()) {
            let remaining = pos.distance(wp);
            if remaining == 0.0 {
                *wp = self.area.sample(rng);
                continue;
            }
            if remaining <= reach {
                *pos = *wp;
                *wp = self.area.sample(rng);
            } else {
                let f = reach / remaining;
                pos.x += (wp.x - pos.x) * f;
                pos.y += (wp.y - pos.y) * f;
                // Guard against rounding pushing a coordinate a hair outside.
                pos.x = pos.x.clamp(0.0, self.area.width);
                pos.y = pos.y.clamp(0.0, self.area.height);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossModel {
    /// Loss at the reference distance, dB.
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    /// Distances below this are treated as this.
    pub d_min_m: f64,
    /// Log-normal shadowing standard deviation; 0 disables shadowing.
    pub shadowing_sigma_db: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            pl0_db: 40.0,
            d0_m: 1.0,
            exponent: 3.0,
            d_min_m: 1.0,
            shadowing_sigma_db: 0.0,
        }
    }
}

impl PathlossModel {
    pub fn pathloss_db(&self, d: f64) -> f64 {
        let d = d.max(self.d_min_m);
        self.pl0_db + 10.0 * self.exponent * (d / self.d0_m).log10()
    }

    pub fn received_power_dbm(&self, p_tx_dbm: f64, d: f64) -> f64 {
        p_tx_dbm - self.pathloss_db(d)
    }
}

/// Rounds to whole dBm and clamps into the observable range.
pub fn quantize_strength(p_rx_dbm: f64) -> SignalStrength {
    let v = if p_rx_dbm.is_nan() {
        MIN_STRENGTH_DBM
    } else {
        p_rx_dbm
            .round()
            .clamp(MIN_STRENGTH_DBM as f64, MAX_STRENGTH_DBM as f64) as i32
    };
    SignalStrength::new(v).expect("clamped into range")
}

/// Pairwise attenuation snapshot for one frame.
///
/// Received power for a given transmit power is `p_tx - loss(tx, rx)`.
/// Loss is symmetric; a node is infinitely far from itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n: usize,
    loss_db: Vec<f64>,
}

impl ChannelMatrix {
    pub fn from_positions(
        positions: &[Position],
        model: &PathlossModel,
        shadowing: Option<&mut SimRng>,
    ) -> Self {
        let n = positions.len();
        let mut loss_db = vec![f64::INFINITY; n * n];
        let normal = (model.shadowing_sigma_db > 0.0)
            .then(|| Normal::new(0.0, model.shadowing_sigma_db).expect("sigma > 0"));
        let mut shadowing = shadowing;
        for i in 0..n {
            for j in i + 1..n {
                let mut l = model.pathloss_db(positions[i].distance(&positions[j]));
                if let (Some(dist), Some(rng)) = (normal.as_ref(), shadowing.as_deref_mut()) {
                    l += dist.sample(rng);
                }
                loss_db[i * n + j] = l;
                loss_db[j * n + i] = l;
            }
        }
        Self { n, loss_db }
    }

    /// Builds a matrix from explicit symmetric losses, mainly for tests.
    /// `losses` lists `(i, j, dB)`; unlisted pairs are effectively isolated.
    pub fn from_losses(n: usize, losses: &[(usize, usize, f64)]) -> Self {
        let mut loss_db = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    loss_db[i * n + j] = 500.0;
                }
            }
        }
        for &(i, j, l) in losses {
            loss_db[i * n + j] = l;
            loss_db[j * n + i] = l;
        }
        Self { n, loss_db }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn loss_db(&self, a: NodeId, b: NodeId) -> f64 {
        self.loss_db[a.0 * self.n + b.0]
    }

    pub fn rx_dbm(&self, tx: NodeId, rx: NodeId, p_tx_dbm: f64) -> f64 {
        p_tx_dbm - self.loss_db(tx, rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn pathloss_examples() {
        let m = PathlossModel::default();
        assert!(close(m.pathloss_db(1.0), 40.0));
        assert!(close(m.pathloss_db(10.0), 70.0));
        assert!(close(m.pathloss_db(100.0), 100.0));
        assert!(close(m.pathloss_db(0.2), 40.0));
    }

    #[test]
    fn received_power_examples() {
        let m = PathlossModel::default();
        assert!(close(m.received_power_dbm(20.0, 1.0), -20.0));
        assert!(close(m.received_power_dbm(0.0, 10.0), -70.0));
        assert!(close(m.received_power_dbm(10.0, 100.0), -90.0));
    }

    #[test]
    fn quantize_strength_examples() {
        assert_eq!(quantize_strength(-70.4).dbm(), -70);
        assert_eq!(quantize_strength(-120.0).dbm(), -110);
        assert_eq!(quantize_strength(-35.0).dbm(), -40);
        assert_eq!(quantize_strength(f64::NEG_INFINITY).dbm(), -110);
    }

    fn single(pos: Position, wp: Position, speed: f64) -> Mobility {
        Mobility {
            area: Area {
                width: 500.0,
                height: 500.0,
            },
            speed,
            positions: vec![pos],
            waypoints: vec![wp],
        }
    }

    #[test]
    fn straight_line_step() {
        let mut m = single(Position::new(0.0, 0.0), Position::new(100.0, 0.0), 5.0);
        m.step(1.0, &mut seeded(1));
        assert!(close(m.positions[0].x, 5.0));
        assert!(close(m.positions[0].y, 0.0));
        assert_eq!(m.waypoints[0], Position::new(100.0, 0.0));
    }

    #[test]
    fn at_waypoint_draws_new_and_stays() {
        let p = Position::new(42.0, 17.0);
        let mut m = single(p, p, 5.0);
        m.step(1.0, &mut seeded(1));
        assert_eq!(m.positions[0], p);
        assert_ne!(m.waypoints[0], p);
    }

    #[test]
    fn lands_exactly_without_overshoot() {
        let wp = Position::new(3.0, 4.0);
        let mut m = single(Position::new(0.0, 0.0), wp, 5.0);
        m.step(2.0, &mut seeded(1));
        assert_eq!(m.positions[0], wp);
    }

    #[test]
    fn channel_is_symmetric_and_monotone() {
        let pos = vec![
            Position::new(0.0, 0.0),
            Position::new(30.0, 40.0),
            Position::new(300.0, 0.0),
        ];
        let c = ChannelMatrix::from_positions(&pos, &PathlossModel::default(), None);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(c.loss_db(NodeId(i), NodeId(j)), c.loss_db(NodeId(j), NodeId(i)));
                }
            }
        }
        assert!(close(c.loss_db(NodeId(0), NodeId(1)), 40.0 + 30.0 * 50f64.log10()));
        assert!(c.rx_dbm(NodeId(0), NodeId(1), 10.0) > c.rx_dbm(NodeId(0), NodeId(2), 10.0));
    }

    #[test]
    fn shadowing_is_symmetric_and_seeded() {
        let pos = vec![
            Position::new(0.0, 0.0),
            Position::new(30.0, 40.0),
            Position::new(300.0, 0.0),
        ];
        let model = PathlossModel {
            shadowing_sigma_db: 4.0,
            ..Default::default()
        };
        let a = ChannelMatrix::from_positions(&pos, &model, Some(&mut seeded(3)));
        let b = ChannelMatrix::from_positions(&pos, &model, Some(&mut seeded(3)));
        assert_eq!(a, b);
        assert_eq!(a.loss_db(NodeId(0), NodeId(2)), a.loss_db(NodeId(2), NodeId(0)));
        let plain = ChannelMatrix::from_positions(&pos, &PathlossModel::default(), None);
        assert_ne!(a, plain);
    }
}
