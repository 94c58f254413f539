use proptest::prelude::*;

use txpower::channel::{Area, ChannelMatrix, Mobility, PathlossModel, Position};
use txpower::metrics::aggregate;
use txpower::phy::{contend_and_transmit, PhyConfig, TxIntent};
use txpower::rng::seeded;
use txpower::routing::{recompute_routes, CostMatrix};
use txpower::sim::run_single;
use txpower::types::{apply_action, decode_state, encode_state, NUM_STATES};
use txpower::{Arm, NodeId, PowerAction, PowerLevel, ScenarioConfig};

fn cost_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::option::weighted(0.7, 1u32..40), n * n).prop_map(move |v| {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i == j, v[i * n + j]) {
                        (true, _) => 0.0,
                        (false, Some(c)) => c as f64 * 0.25,
                        (false, None) => f64::INFINITY,
                    })
                    .collect()
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn routes_are_loop_free_and_consistent(rows in (2usize..8).prop_flat_map(cost_matrix)) {
        let costs = CostMatrix::from_rows(&rows);
        let n = rows.len();
        let routes = recompute_routes(&costs);
        for dst in 0..n {
            for src in 0..n {
                let (s, d) = (NodeId(src), NodeId(dst));
                match routes.path(s, d) {
                    Some(path) => {
                        let mut seen = path.clone();
                        seen.sort();
                        seen.dedup();
                        prop_assert_eq!(seen.len(), path.len());
                        let along: f64 = path.windows(2).map(|w| costs.get(w[0], w[1])).sum();
                        prop_assert_eq!(along, routes.cost(s, d));
                    }
                    None => prop_assert!(routes.cost(s, d).is_infinite()),
                }
            }
        }
    }

    #[test]
    fn pathloss_is_monotone(a in 0.0f64..2_000.0, b in 0.0f64..2_000.0) {
        let m = PathlossModel::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.pathloss_db(lo) <= m.pathloss_db(hi));
    }

    #[test]
    fn mobility_stays_in_bounds(seed in any::<u64>(), w in 1.0f64..1_000.0, h in 1.0f64..1_000.0,
                                speed in 0.0f64..200.0, steps in 1usize..400) {
        let area = Area { width: w, height: h };
        let mut rng = seeded(seed);
        let mut m = Mobility::random(4, area, speed, &mut rng);
        for _ in 0..steps {
            let before = m.positions.clone();
            m.step(0.1, &mut rng);
            for (p, q) in before.iter().zip(&m.positions) {
                prop_assert!(area.contains(q));
                prop_assert!(p.distance(q) <= speed * 0.1 + 1e-9);
            }
        }
    }

    #[test]
    fn carrier_sense_keeps_admitted_nodes_apart(seed in any::<u64>(),
                                                 xs in prop::collection::vec((0.0f64..300.0, 0.0f64..300.0), 6),
                                                 p in prop::collection::vec(0i32..=20, 6)) {
        let positions: Vec<Position> = xs.iter().map(|&(x, y)| Position::new(x, y)).collect();
        let ch = ChannelMatrix::from_positions(&positions, &PathlossModel::default(), None);
        let powers: Vec<PowerLevel> = p.iter().map(|&d| PowerLevel::new(d).unwrap()).collect();
        let phy = PhyConfig::default();
        let intents: Vec<TxIntent> = (0..6)
            .map(|i| TxIntent { tx: NodeId(i), rx: NodeId((i + 1) % 6), offered_bits: u64::MAX })
            .collect();
        let out = contend_and_transmit(&intents, &ch, &powers, &phy, 0.005, &mut seeded(seed)).unwrap();
        prop_assert_eq!(out.reports.len() + out.deferred.len(), 6);
        prop_assert!(!out.reports.is_empty());
        for a in &out.reports {
            for b in &out.reports {
                if a.tx != b.tx {
                    // Whoever was admitted later would have deferred to the other.
                    let hears_ab = ch.rx_dbm(a.tx, b.tx, powers[a.tx.0].dbm() as f64) >= phy.cs_threshold_dbm;
                    let hears_ba = ch.rx_dbm(b.tx, a.tx, powers[b.tx.0].dbm() as f64) >= phy.cs_threshold_dbm;
                    prop_assert!(!(hears_ab && hears_ba));
                }
            }
        }
    }

    #[test]
    fn rate_is_monotone_in_snr(a in -20.0f64..40.0, b in -20.0f64..40.0) {
        let t = PhyConfig::default().rate_table;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.rate_for_snr(lo) <= t.rate_for_snr(hi));
    }

    #[test]
    fn state_encoding_round_trips(i in 0usize..NUM_STATES) {
        prop_assert_eq!(encode_state(&decode_state(i).unwrap()), i);
    }

    #[test]
    fn actions_stay_in_range(p in 0i32..=20, a in 0usize..3) {
        let action = PowerAction::from_index(a).unwrap();
        let q = apply_action(PowerLevel::new(p).unwrap(), action).dbm();
        prop_assert!((0..=20).contains(&q));
        prop_assert!((q - p).abs() <= 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn aggregation_is_chunking_invariant(seed in 0u64..1_000, cut in 1usize..199) {
        let cfg = ScenarioConfig { episodes: 2, episode_length: 100, ..Default::default() };
        let (_, log) = run_single(&cfg, Arm::Fixed, seed).unwrap();
        let whole = aggregate(&log.records).unwrap();
        let (a, b) = log.records.split_at(cut);
        let merged = aggregate(a).unwrap().merge(aggregate(b).unwrap());
        prop_assert_eq!(merged.delivered_bits, whole.delivered_bits);
        prop_assert_eq!(merged.frames, whole.frames);
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-12);
        prop_assert!(rel(merged.energy_j, whole.energy_j) < 1e-12);
        prop_assert!(rel(merged.throughput_mbps().unwrap(), whole.throughput_mbps().unwrap()) < 1e-12);
        prop_assert!(rel(merged.energy_efficiency().unwrap().max(1e-300), whole.energy_efficiency().unwrap().max(1e-300)) < 1e-12);
    }
}
