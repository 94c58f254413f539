//! ETX link costs and converged shortest-path routes.
//!
//! The routing protocol itself is not simulated; instead the table is
//! recomputed from a snapshot of windowed link statistics, which is what a
//! loop-free distance-vector protocol converges to.

use std::collections::VecDeque;

use crate::types::NodeId;

/// Delivery history of one directed link over the last `window` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkStats {
    window: u64,
    samples: VecDeque<(u64, bool)>,
}

impl LinkStats {
    pub fn new(window: u64) -> Self {
        Self {
            window,
            samples: VecDeque::new(),
        }
    }

    pub fn record(&mut self, frame: u64, success: bool) {
        self.samples.push_back((frame, success));
        self.expire(frame);
    }

    /// Drops samples that fell out of the window ending at `now`.
    pub fn expire(&mut self, now: u64) {
        while let Some(&(f, _)) = self.samples.front() {
            if f + self.window <= now {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn attempt_count(&self) -> usize {
        self.samples.len()
    }

    pub fn success_count(&self) -> usize {
        self.samples.iter().filter(|(_, ok)| *ok).count()
    }

    /// `None` when the window is empty.
    pub fn delivery_ratio(&self) -> Option<f64> {
        let n = self.attempt_count();
        (n > 0).then(|| self.success_count() as f64 / n as f64)
    }
}

/// Expected transmission count from forward and reverse delivery ratios.
///
/// Infinite when either ratio is zero or unknown.
pub fn etx_from_ratios(forward: Option<f64>, reverse: Option<f64>) -> f64 {
    match (forward, reverse) {
        (Some(f), Some(r)) if f > 0.0 && r > 0.0 => 1.0 / (f * r),
        _ => f64::INFINITY,
    }
}

pub fn etx(forward: &LinkStats, reverse: &LinkStats) -> f64 {
    etx_from_ratios(forward.delivery_ratio(), reverse.delivery_ratio())
}

/// Statistics for every directed link.
#[derive(Debug, Clone)]
pub struct LinkStatsTable {
    n: usize,
    links: Vec<LinkStats>,
}

impl LinkStatsTable {
    pub fn new(n: usize, window: u64) -> Self {
        Self {
            n,
            links: vec![LinkStats::new(window); n * n],
        }
    }

    pub fn get(&self, tx: NodeId, rx: NodeId) -> &LinkStats {
        &self.links[tx.0 * self.n + rx.0]
    }

    pub fn record(&mut self, tx: NodeId, rx: NodeId, frame: u64, success: bool) {
        self.links[tx.0 * self.n + rx.0].record(frame, success);
    }

    pub fn expire(&mut self, now: u64) {
        for l in &mut self.links {
            l.expire(now);
        }
    }

    /// Builds the ETX cost matrix. Directions without samples fall back to
    /// `seed(tx, rx)`: a ratio of 1 when the link looks usable, else 0.
    pub fn costs(&self, seed: impl Fn(NodeId, NodeId) -> bool) -> CostMatrix {
        let mut costs = CostMatrix::unreachable(self.n);
        let ratio = |a: NodeId, b: NodeId| {
            self.get(a, b)
                .delivery_ratio()
                .or_else(|| Some(if seed(a, b) { 1.0 } else { 0.0 }))
        };
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let (a, b) = (NodeId(i), NodeId(j));
                    costs.set(a, b, etx_from_ratios(ratio(a, b), ratio(b, a)));
                }
            }
        }
        costs
    }
}

/// Directed link costs; infinite means no usable link.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    c: Vec<f64>,
}

impl CostMatrix {
    pub fn unreachable(n: usize) -> Self {
        let mut c = vec![f64::INFINITY; n * n];
        for i in 0..n {
            c[i * n + i] = 0.0;
        }
        Self { n, c }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::unreachable(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "cost matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    m.c[i * n + j] = v;
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> f64 {
        self.c[a.0 * self.n + b.0]
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, v: f64) {
        self.c[a.0 * self.n + b.0] = v;
    }
}

/// Next hop and path cost for every (node, destination) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    n: usize,
    next: Vec<Option<NodeId>>,
    dist: Vec<f64>,
}

impl RoutingTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `None` when `dst` is unreachable or `node == dst`.
    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.next[node.0 * self.n + dst.0]
    }

    pub fn cost(&self, node: NodeId, dst: NodeId) -> f64 {
        self.dist[node.0 * self.n + dst.0]
    }

    /// Hop sequence from `src` to `dst`, or `None` if unreachable.
    pub fn path(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        let mut path = vec![src];
        let mut cur = src;
        while cur != dst {
            cur = self.next_hop(cur, dst)?;
            path.push(cur);
            if path.len() > self.n {
                return None;
            }
        }
        Some(path)
    }

    /// FNV-1a digest of the next-hop table, for logging route changes.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for nh in &self.next {
            let b = nh.map_or(u64::MAX, |n| n.0 as u64);
            for byte in b.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Minimum-total-cost routes toward every destination.
///
/// Ties between next hops are broken toward the smallest node id.
pub fn recompute_routes(costs: &CostMatrix) -> RoutingTable {
    let n = costs.len();
    let mut next = vec![None; n * n];
    let mut dist_all = vec![f64::INFINITY; n * n];
    for d in 0..n {
        // Dijkstra over reversed edges: dist[v] = cost of v -> ... -> dst.
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[d] = 0.0;
        for _ in 0..n {
            let u = (0..n)
                .filter(|&v| !done[v] && dist[v].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
            let Some(u) = u else { break };
            done[u] = true;
            for v in 0..n {
                if !done[v] {
                    let alt = costs.get(NodeId(v), NodeId(u)) + dist[u];
                    if alt < dist[v] {
                        dist[v] = alt;
                    }
                }
            }
        }
        for v in 0..n {
            dist_all[v * n + d] = dist[v];
            if v == d || !dist[v].is_finite() {
                continue;
            }
            next[v * n + d] = (0..n)
                .filter(|&u| u != v && dist[u].is_finite())
                .map(|u| (costs.get(NodeId(v), NodeId(u)) + dist[u], u))
                .filter(|(c, _)| c.is_finite())
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, u)| NodeId(u));
        }
    }
    RoutingTable {
        n,
        next,
        dist: dist_all,
    }
}
