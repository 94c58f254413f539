//! Frame-by-frame simulation loop and multi-seed experiments.
//!
//! Each frame runs, in order: mobility, channel snapshot, periodic route
//! recomputation, power decisions (with neighbour broadcasts), traffic to
//! transmit intents, channel access, link statistics and queue updates, and
//! finally per-node rewards and learning. World randomness (placement,
//! mobility, traffic, contention, shadowing) comes from streams that do not
//! depend on the policy, so every arm sees the same node trajectories and
//! flows for a given seed.

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::channel::{quantize_strength, Area, ChannelMatrix, Mobility, Position};
use crate::config::{ScenarioConfig, SeedPower, TrafficPattern};
use crate::dqn::DEFAULT_LAYOUT;
use crate::error::{Error, Result};
use crate::metrics::EpisodeMetrics;
use crate::phy::{contend_and_transmit, energy_for_frame, quantize_quality, LinkReport, TxIntent};
use crate::policies::{
    compute_reward, AgentContext, Arm, ChannelOracle, Controller, DqnAgent, LinkSnapshot, Mailbox,
    RewardInputs,
};
use crate::rng::{stream, SimRng, Stream};
use crate::routing::{recompute_routes, LinkStatsTable, RoutingTable};
use crate::types::{LinkQuality, NodeId, NodeState, PowerAction, PowerLevel, SignalStrength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
}

/// One node's line in a frame record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeFrame {
    pub power_dbm: i32,
    /// Power change applied at the start of this frame, dBm.
    pub action: i32,
    pub reward: f64,
    /// Bits this node delivered to its next hop.
    pub tx_bits: u64,
    pub energy_j: f64,
    pub transmitting: bool,
    pub deferred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub episode: u64,
    pub nodes: Vec<NodeFrame>,
    pub reports: Vec<LinkReport>,
    /// Bits that reached their final destination this frame.
    pub delivered_bits: u64,
    pub paused_flows: usize,
    pub route_digest: u64,
    pub duration: f64,
}

impl FrameRecord {
    pub fn energy_j(&self) -> f64 {
        self.nodes.iter().map(|n| n.energy_j).sum()
    }
}

/// Append-only record of a run, one entry per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameLog {
    pub node_count: usize,
    pub records: Vec<FrameRecord>,
}

impl FrameLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn episode(&self, e: u64) -> impl Iterator<Item = &FrameRecord> {
        self.records.iter().filter(move |r| r.episode == e)
    }

    pub fn from_episode(&self, first: u64) -> &[FrameRecord] {
        let start = self.records.partition_point(|r| r.episode < first);
        &self.records[start..]
    }
}

#[derive(Debug, Clone, Copy)]
struct Measurement {
    quality: LinkQuality,
    strength: SignalStrength,
    next_hop: Option<NodeId>,
}

/// One simulated network with one controller per node.
pub struct Simulation {
    cfg: ScenarioConfig,
    arm: Arm,
    n: usize,
    mobility: Mobility,
    mobility_rng: SimRng,
    traffic_rng: SimRng,
    contention_rng: SimRng,
    shadowing_rng: SimRng,
    stats: LinkStatsTable,
    routes: RoutingTable,
    flows: Vec<Flow>,
    /// Relay backlog per node per destination, bits.
    queues: Vec<Vec<u64>>,
    rr_next: Vec<usize>,
    powers: Vec<PowerLevel>,
    last_delta: Vec<i32>,
    meas: Vec<Measurement>,
    snapshots: Vec<Option<LinkSnapshot>>,
    mailbox: Mailbox,
    controllers: Vec<Controller>,
    pinned_flows: Option<Vec<Flow>>,
    frame: u64,
    log: FrameLog,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, arm: Arm) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.node_count;
        let seed = cfg.seed;
        let area = Area {
            width: cfg.area_width,
            height: cfg.area_height,
        };
        let mobility = Mobility::random(n, area, cfg.speed, &mut stream(seed, Stream::Placement));
        let initial = PowerLevel::new(cfg.initial_power_dbm)?;
        let fixed_levels = cfg.fixed_levels()?;
        let controllers = (0..n)
            .map(|i| {
                let id = NodeId(i);
                match arm {
                    Arm::Dqn => Controller::Dqn(Box::new(DqnAgent::new(
                        &DEFAULT_LAYOUT,
                        &cfg.dqn,
                        cfg.total_frames(),
                        &mut stream(seed, Stream::AgentInit(id)),
                        stream(seed, Stream::AgentReplay(id)),
                        stream(seed, Stream::AgentExplore(id)),
                    ))),
                    Arm::Fixed => Controller::Fixed {
                        levels: fixed_levels.clone(),
                        redraw: cfg.fixed_redraw,
                        rng: stream(seed, Stream::AgentExplore(id)),
                        drawn: None,
                    },
                    Arm::Myopic => Controller::Myopic,
                }
            })
            .collect();
        Ok(Self {
            arm,
            n,
            mobility,
            mobility_rng: stream(seed, Stream::Mobility),
            traffic_rng: stream(seed, Stream::Traffic),
            contention_rng: stream(seed, Stream::Contention),
            shadowing_rng: stream(seed, Stream::Shadowing),
            stats: LinkStatsTable::new(n, cfg.routing.etx_window),
            routes: recompute_routes(&crate::routing::CostMatrix::unreachable(n)),
            flows: Vec::new(),
            queues: vec![vec![0; n]; n],
            rr_next: vec![0; n],
            powers: vec![initial; n],
            last_delta: vec![0; n],
            meas: vec![
                Measurement {
                    quality: LinkQuality::MIN,
                    strength: SignalStrength::FLOOR,
                    next_hop: None,
                };
                n
            ],
            snapshots: vec![None; n],
            mailbox: Mailbox::new(n),
            controllers,
            pinned_flows: None,
            frame: 0,
            log: FrameLog {
                node_count: n,
                records: Vec::new(),
            },
            cfg: cfg.clone(),
        })
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn positions(&self) -> &[Position] {
        &self.mobility.positions
    }

    pub fn powers(&self) -> &[PowerLevel] {
        &self.powers
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn routes(&self) -> &RoutingTable {
        &self.routes
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn log(&self) -> &FrameLog {
        &self.log
    }

    pub fn frames_run(&self) -> u64 {
        self.frame
    }

    /// Fixes node positions and disables movement. Meant for controlled
    /// experiments and tests; call before the first frame.
    pub fn pin_positions(&mut self, positions: Vec<Position>) -> Result<()> {
        if positions.len() != self.n {
            return Err(Error::contract("one position per node required"));
        }
        if let Some(p) = positions.iter().find(|p| !self.mobility.area.contains(p)) {
            return Err(Error::contract(format!("position {p:?} outside the area")));
        }
        self.mobility.waypoints = positions.clone();
        self.mobility.positions = positions;
        self.mobility.speed = 0.0;
        Ok(())
    }

    /// Replaces the random flows with a fixed set for every episode.
    pub fn pin_flows(&mut self, flows: Vec<Flow>) -> Result<()> {
        for f in &flows {
            if f.src == f.dst || f.src.0 >= self.n || f.dst.0 >= self.n {
                return Err(Error::contract(format!("invalid flow {f:?}")));
            }
        }
        self.pinned_flows = Some(flows);
        Ok(())
    }

    fn draw_flows(&mut self) {
        if let Some(f) = &self.pinned_flows {
            self.flows = f.clone();
            return;
        }
        let n = self.n;
        if self.cfg.traffic == TrafficPattern::EveryNode {
            self.flows = (0..n)
                .map(|src| {
                    let mut dst = self.traffic_rng.gen_range(0..n - 1);
                    if dst >= src {
                        dst += 1;
                    }
                    Flow {
                        src: NodeId(src),
                        dst: NodeId(dst),
                    }
                })
                .collect();
            return;
        }
        let pairs = n * (n - 1);
        let k = self.cfg.flows.min(pairs);
        self.flows = index::sample(&mut self.traffic_rng, pairs, k)
            .into_iter()
            .map(|p| {
                let src = p / (n - 1);
                let mut dst = p % (n - 1);
                if dst >= src {
                    dst += 1;
                }
                Flow {
                    src: NodeId(src),
                    dst: NodeId(dst),
                }
            })
            .collect();
    }

    fn is_source(&self, node: NodeId, dst: NodeId) -> bool {
        self.flows.iter().any(|f| f.src == node && f.dst == dst)
    }

    /// Runs one episode and returns its frame records.
    pub fn run_episode(&mut self) -> Result<&[FrameRecord]> {
        let start = self.log.records.len();
        for _ in 0..self.cfg.episode_length {
            self.step_frame()?;
        }
        Ok(&self.log.records[start..])
    }

    /// Runs every configured episode and returns the full log.
    pub fn run(mut self) -> Result<FrameLog> {
        while self.frame < self.cfg.total_frames() {
            self.run_episode()?;
        }
        Ok(self.log)
    }

    pub fn step_frame(&mut self) -> Result<()> {
        let t = self.frame;
        let episode = t / self.cfg.episode_length;
        let n = self.n;
        if t % self.cfg.episode_length == 0 {
            self.draw_flows();
            for q in &mut self.queues {
                q.iter_mut().for_each(|b| *b = 0);
            }
        }
        let phy = &self.cfg.phy;
        let dt = self.cfg.frame_duration;

        // 1-2. Mobility and channel.
        if self.mobility.speed > 0.0 {
            self.mobility.step(dt, &mut self.mobility_rng);
        }
        let shadowing = (self.cfg.channel.shadowing_sigma_db > 0.0).then_some(&mut self.shadowing_rng);
        let channel = ChannelMatrix::from_positions(&self.mobility.positions, &self.cfg.channel, shadowing);

        // 3. Converged routes from the current link statistics.
        if t % self.cfg.routing.recompute_interval == 0 {
            self.stats.expire(t);
            let powers = &self.powers;
            let seed_power = self.cfg.routing.seed_power;
            let min_snr = phy.rate_table.min_snr_db();
            let costs = self.stats.costs(|a, b| {
                let p = match seed_power {
                    SeedPower::Current => powers[a.0],
                    SeedPower::Max => PowerLevel::MAX,
                };
                phy.link_snr_db(p.dbm() as f64, channel.loss_db(a, b)) >= min_snr
            });
            self.routes = recompute_routes(&costs);
        }

        // 4. Power decisions and action broadcasts.
        let mut deltas = vec![0i32; n];
        for i in 0..n {
            let id = NodeId(i);
            let ctx = AgentContext {
                node: id,
                state: NodeState::new(self.powers[i], self.meas[i].quality, self.meas[i].strength),
                last_delta_dbm: self.last_delta[i],
                mailbox: self.mailbox.read(id).to_vec(),
            };
            let oracle = ChannelOracle {
                snapshot: self.snapshots[i],
                phy,
                frame_duration: dt,
                penalty: self.cfg.reward_penalty,
            };
            let new_power = self.controllers[i].decide(&ctx, &oracle)?;
            deltas[i] = new_power.dbm() - self.powers[i].dbm();
            self.powers[i] = new_power;
        }
        for i in 0..n {
            let id = NodeId(i);
            let p = self.powers[i].dbm() as f64;
            let action = match deltas[i].signum() {
                -1 => PowerAction::Decrease,
                0 => PowerAction::Hold,
                _ => PowerAction::Increase,
            };
            let neighbours = (0..n)
                .filter(|&j| j != i && channel.rx_dbm(id, NodeId(j), p) >= phy.cs_threshold_dbm)
                .map(NodeId);
            self.mailbox.post(id, action, neighbours);
        }
        self.mailbox.deliver();
        self.last_delta = deltas.clone();

        // 5. Traffic: each node serves one destination per frame, round robin.
        let mut intents = Vec::new();
        let mut intent_dst = vec![None; n];
        for i in 0..n {
            let id = NodeId(i);
            let mut chosen = None;
            for k in 0..n {
                let d = (self.rr_next[i] + k) % n;
                let dst = NodeId(d);
                if d == i || !(self.is_source(id, dst) || self.queues[i][d] > 0) {
                    continue;
                }
                if let Some(nh) = self.routes.next_hop(id, dst) {
                    chosen = Some((dst, nh));
                    break;
                }
            }
            if let Some((dst, nh)) = chosen {
                self.rr_next[i] = (dst.0 + 1) % n;
                let offered = if self.is_source(id, dst) {
                    u64::MAX
                } else {
                    self.queues[i][dst.0]
                };
                intents.push(TxIntent {
                    tx: id,
                    rx: nh,
                    offered_bits: offered,
                });
                intent_dst[i] = Some(dst);
                self.meas[i].next_hop = Some(nh);
            }
        }
        let paused_flows = self
            .flows
            .iter()
            .filter(|f| self.routes.next_hop(f.src, f.dst).is_none())
            .count();

        // 6. Channel access.
        let outcome = contend_and_transmit(&intents, &channel, &self.powers, phy, dt, &mut self.contention_rng)?;

        // 7. Link statistics, queues and measurements.
        let mut delivered_bits = 0u64;
        let mut tx_bits = vec![0u64; n];
        let mut admitted = vec![false; n];
        for r in &outcome.reports {
            let i = r.tx.0;
            admitted[i] = true;
            tx_bits[i] = r.bits_delivered;
            self.stats.record(r.tx, r.rx, t, r.success);
            self.meas[i].quality = quantize_quality(r.snr_db);
            let dst = intent_dst[i].expect("admitted node had an intent");
            if r.success {
                if !self.is_source(r.tx, dst) {
                    self.queues[i][dst.0] -= r.bits_delivered;
                }
                if r.rx == dst {
                    delivered_bits += r.bits_delivered;
                } else {
                    let q = &mut self.queues[r.rx.0][dst.0];
                    *q = (*q + r.bits_delivered).min(self.cfg.relay_buffer_bits);
                }
                // The receiver's acknowledgement reveals its signal strength.
                self.meas[i].strength =
                    quantize_strength(channel.rx_dbm(r.rx, r.tx, self.powers[r.rx.0].dbm() as f64));
            }
            self.snapshots[i] = Some(LinkSnapshot {
                power: self.powers[i],
                loss_db: channel.loss_db(r.tx, r.rx),
                interference_mw: r.interference_mw,
                offered_bits: intents.iter().find(|x| x.tx == r.tx).map_or(0, |x| x.offered_bits),
            });
        }
        // Overheard frames from a node's next hop also update its strength.
        for i in 0..n {
            if !admitted[i] {
                self.snapshots[i] = None;
            }
            if let Some(h) = self.meas[i].next_hop {
                if admitted[h.0] && h.0 != i {
                    self.meas[i].strength = quantize_strength(channel.rx_dbm(
                        h,
                        NodeId(i),
                        self.powers[h.0].dbm() as f64,
                    ));
                }
            }
        }

        // 8. Rewards and learning.
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let energy = energy_for_frame(self.powers[i], admitted[i], phy, dt);
            let inputs = RewardInputs {
                throughput_mbps: tx_bits[i] as f64 / dt / 1e6,
                energy_watts: energy.power_draw_watts(),
                realized_delta_dbm: deltas[i],
                transmitting: admitted[i],
            };
            let reward = compute_reward(&inputs, self.cfg.reward_penalty)?;
            let next = NodeState::new(self.powers[i], self.meas[i].quality, self.meas[i].strength);
            self.controllers[i].learn(reward, &next)?;
            nodes.push(NodeFrame {
                power_dbm: self.powers[i].dbm(),
                action: deltas[i],
                reward,
                tx_bits: tx_bits[i],
                energy_j: energy.energy_joules,
                transmitting: admitted[i],
                deferred: outcome.deferred.contains(&NodeId(i)),
            });
        }

        self.log.records.push(FrameRecord {
            frame: t,
            episode,
            nodes,
            reports: outcome.reports,
            delivered_bits,
            paused_flows,
            route_digest: self.routes.digest(),
            duration: dt,
        });
        self.frame += 1;
        Ok(())
    }
}

/// Runs one arm on one seed and summarises the measured window.
pub fn run_single(cfg: &ScenarioConfig, arm: Arm, seed: u64) -> Result<(EpisodeMetrics, FrameLog)> {
    let cfg = ScenarioConfig {
        seed,
        policy: arm,
        ..cfg.clone()
    };
    let log = Simulation::new(&cfg, arm)?.run()?;
    let window = log.from_episode(cfg.first_measured_episode());
    let metrics = EpisodeMetrics::from_records(arm, seed, window)?;
    Ok((metrics, log))
}

/// Per-arm results of a multi-seed experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub runs: Vec<EpisodeMetrics>,
    pub mean_throughput_mbps: f64,
    pub mean_energy_efficiency: f64,
}

/// Runs every arm on every seed. Arms share world randomness per seed.
/// Independent runs are spread over the available cores; results do not
/// depend on the thread count.
pub fn run_experiment(cfg: &ScenarioConfig, arms: &[Arm], seeds: &[u64]) -> Result<Vec<ArmResult>> {
    if seeds.is_empty() {
        return Err(Error::contract("run_experiment needs at least one seed"));
    }
    let jobs: Vec<(Arm, u64)> = arms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<EpisodeMetrics>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(&(arm, seed)) = jobs.get(k) else { break };
                        done.push((k, run_single(cfg, arm, seed).map(|(m, _)| m)));
                    }
                    done
                })
            })
            .collect();
        for w in workers {
            for (k, r) in w.join().expect("simulation thread panicked") {
                slots[k] = Some(r);
            }
        }
    });
    let mut results = slots.into_iter().map(|r| r.expect("every job ran"));
    arms.iter()
        .map(|&arm| {
            let runs = results.by_ref().take(seeds.len()).collect::<Result<Vec<_>>>()?;
            let k = runs.len() as f64;
            Ok(ArmResult {
                arm,
                mean_throughput_mbps: runs.iter().map(|m| m.throughput_mbps).sum::<f64>() / k,
                mean_energy_efficiency: runs.iter().map(|m| m.energy_efficiency).sum::<f64>() / k,
                runs,
            })
        })
        .collect()
}
