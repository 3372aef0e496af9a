//! Abstracted transport: a graph of bidirectional links with fixed latency
//! and an optional serialization bitrate.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use super::{KernelError, SimTime};

/// Index of a node in the transport graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// One-way propagation latency in seconds.
    pub latency: SimTime,
    /// Serialization rate in bits/second; `None` means infinitely fast.
    pub bitrate: Option<f64>,
}

impl LinkParams {
    pub fn latency(latency: SimTime) -> Self {
        LinkParams { latency, bitrate: None }
    }

    fn serialization(&self, bits: u64) -> SimTime {
        match self.bitrate {
            Some(rate) => bits as f64 / rate,
            None => 0.0,
        }
    }
}

#[derive(Debug, Default)]
pub struct Transport {
    names: Vec<String>,
    adjacency: Vec<BTreeMap<NodeId, LinkParams>>,
    // Directed (from, to) -> time the sender side of the link frees up.
    // Only tracked for links with a bitrate.
    busy_until: BTreeMap<(NodeId, NodeId), SimTime>,
}

impl Transport {
    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.names.push(name.into());
        self.adjacency.push(BTreeMap::new());
        NodeId(self.names.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.names.len()
    }

    /// Install (or replace) a bidirectional link with symmetric parameters.
    pub fn connect(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> Result<(), KernelError> {
        if !self.contains(a) || !self.contains(b) {
            return Err(KernelError::UnknownNode);
        }
        if !(params.latency >= 0.0) || params.bitrate.is_some_and(|r| !(r > 0.0)) {
            return Err(KernelError::BadLink);
        }
        self.adjacency[a.0].insert(b, params);
        self.adjacency[b.0].insert(a, params);
        Ok(())
    }

    pub fn disconnect(&mut self, a: NodeId, b: NodeId) -> bool {
        let removed = self.adjacency.get_mut(a.0).and_then(|m| m.remove(&b)).is_some();
        if let Some(m) = self.adjacency.get_mut(b.0) {
            m.remove(&a);
        }
        self.busy_until.remove(&(a, b));
        self.busy_until.remove(&(b, a));
        removed
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<LinkParams> {
        self.adjacency.get(a.0)?.get(&b).copied()
    }

    pub fn neighbours(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[node.0].keys().copied()
    }

    /// Minimum-delay path from `src` to `dst` for a message of `bits` bits,
    /// ignoring link occupancy. Ties are broken toward lower node ids.
    pub fn route(&self, src: NodeId, dst: NodeId, bits: u64) -> Option<Vec<NodeId>> {
        if !self.contains(src) || !self.contains(dst) {
            return None;
        }
        if src == dst {
            return Some(vec![src]);
        }
        let n = self.names.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<NodeId>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[src.0] = 0.0;
        heap.push(Reverse((Cost(0.0), src)));
        while let Some(Reverse((Cost(d), node))) = heap.pop() {
            if d > dist[node.0] {
                continue;
            }
            if node == dst {
                break;
            }
            for (&next, params) in &self.adjacency[node.0] {
                let nd = d + params.latency + params.serialization(bits);
                if nd < dist[next.0] {
                    dist[next.0] = nd;
                    prev[next.0] = Some(node);
                    heap.push(Reverse((Cost(nd), next)));
                }
            }
        }
        if dist[dst.0].is_infinite() {
            return None;
        }
        let mut path = vec![dst];
        let mut cur = dst;
        while let Some(p) = prev[cur.0] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    /// Walk `path` starting at `start`, reserving serialization time on rate
    /// limited links, and return the arrival time at the last node.
    pub(crate) fn traverse(&mut self, path: &[NodeId], start: SimTime, bits: u64) -> SimTime {
        let mut t = start;
        for hop in path.windows(2) {
            let (a, b) = (hop[0], hop[1]);
            let params = self.adjacency[a.0][&b];
            let ser = params.serialization(bits);
            if params.bitrate.is_some() {
                let busy = self.busy_until.entry((a, b)).or_insert(0.0);
                let depart = t.max(*busy);
                *busy = depart + ser;
                t = depart + ser + params.latency;
            } else {
                t += params.latency;
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy)]
struct Cost(f64);

impl PartialEq for Cost {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
