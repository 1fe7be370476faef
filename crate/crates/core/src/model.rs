//! Network description: validated acyclic graphs with erasure links and
//! per-node buffers.
//!
//! A [`NetworkSpec`] is only ever produced by [`validate`], so every value of
//! the type is acyclic, has a reachable/co-reachable node set, and carries a
//! dense `0..n` node indexing plus a cached topological order.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Largest in- or out-degree accepted.
pub const MAX_DEGREE: usize = 20;

/// Dense node index, `0..n` after validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`NetworkSpec::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferSize {
    Finite(u32),
    Unbounded,
}

impl BufferSize {
    pub fn finite(self) -> Option<u32> {
        match self {
            BufferSize::Finite(m) => Some(m),
            BufferSize::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub tail: NodeId,
    pub head: NodeId,
    pub erasure: f64,
}

impl EdgeSpec {
    /// Probability that a transmission on this edge survives the channel.
    pub fn survival(&self) -> f64 {
        1.0 - self.erasure
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    /// Identifier used in the config file.
    pub label: i64,
    pub buffer: BufferSize,
}

/// Nodes listed so that every edge points forward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoOrder {
    pub order: Vec<NodeId>,
}

impl TopoOrder {
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = NodeId> + '_ {
        self.order.iter().copied()
    }

    /// Position of every node in the order, indexed by node.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.order.len()];
        for (pos, v) in self.order.iter().enumerate() {
            rank[v.0] = pos;
        }
        rank
    }

    pub fn respects(&self, edges: &[EdgeSpec]) -> bool {
        let rank = self.ranks();
        edges.iter().all(|e| rank[e.tail.0] < rank[e.head.0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    nodes: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
    source: NodeId,
    destination: NodeId,
    in_edges: Vec<Vec<EdgeId>>,
    out_edges: Vec<Vec<EdgeId>>,
    topo: TopoOrder,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("could not parse network config: {0}")]
    Parse(String),
    #[error("graph contains a directed cycle")]
    CycleDetected,
    #[error("node {0} does not lie on any source-to-destination path")]
    DisconnectedNode(i64),
    #[error("edge {from}->{to}: {reason}")]
    InvalidProbability { from: i64, to: i64, reason: String },
    #[error("node {0}: bad buffer size (intermediate nodes need a finite buffer >= 1, source and destination must be unbounded)")]
    BadBufferSize(i64),
    #[error("source or destination missing from the node list, or source == destination")]
    MissingSourceOrDest,
    #[error("node {0} listed twice")]
    DuplicateNode(i64),
    #[error("edge references unknown node {0}")]
    UnknownNode(i64),
    #[error("self-loop on node {0}")]
    SelfLoop(i64),
    #[error("more than one edge {from}->{to}")]
    DuplicateEdge { from: i64, to: i64 },
    #[error("node {node} has degree {degree}, above the limit of {MAX_DEGREE}")]
    DegreeTooLarge { node: i64, degree: usize },
}

/// Buffer entry as written in the config file: an integer or `"unbounded"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawBuffer {
    Packets(i64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: i64,
    pub buffer: RawBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEdge {
    pub from: i64,
    pub to: i64,
    pub erasure: f64,
}

/// Unvalidated network exactly as it appears in the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub nodes: Vec<RawNode>,
    pub edges: Vec<RawEdge>,
    pub source: i64,
    pub destination: i64,
}

impl RawNetwork {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }
}

/// Parse and validate a JSON network config in one step.
pub fn parse_network(text: &str) -> Result<NetworkSpec, ModelError> {
    validate(&RawNetwork::from_json(text)?)
}

pub fn validate(raw: &RawNetwork) -> Result<NetworkSpec, ModelError> {
    let mut labels: Vec<i64> = raw.nodes.iter().map(|n| n.id).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(ModelError::DuplicateNode(w[0]));
    }
    let index: BTreeMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    let source = *index.get(&raw.source).ok_or(ModelError::MissingSourceOrDest)?;
    let destination = *index.get(&raw.destination).ok_or(ModelError::MissingSourceOrDest)?;
    if source == destination {
        return Err(ModelError::MissingSourceOrDest);
    }

    let mut nodes = vec![
        NodeSpec {
            label: 0,
            buffer: BufferSize::Unbounded,
        };
        labels.len()
    ];
    for rn in &raw.nodes {
        let i = index[&rn.id];
        let endpoint = i == source || i == destination;
        let buffer = match (&rn.buffer, endpoint) {
            (RawBuffer::Keyword(k), true) if k == "unbounded" => BufferSize::Unbounded,
            (RawBuffer::Packets(m), false) if *m >= 1 && *m <= u32::MAX as i64 => {
                BufferSize::Finite(*m as u32)
            }
            _ => return Err(ModelError::BadBufferSize(rn.id)),
        };
        nodes[i] = NodeSpec {
            label: rn.id,
            buffer,
        };
    }

    let mut edges = Vec::with_capacity(raw.edges.len());
    for re in &raw.edges {
        let tail = *index.get(&re.from).ok_or(ModelError::UnknownNode(re.from))?;
        let head = *index.get(&re.to).ok_or(ModelError::UnknownNode(re.to))?;
        if tail == head {
            return Err(ModelError::SelfLoop(re.from));
        }
        if !re.erasure.is_finite() || !(0.0..=1.0).contains(&re.erasure) {
            return Err(ModelError::InvalidProbability {
                from: re.from,
                to: re.to,
                reason: format!("erasure {} outside [0, 1]", re.erasure),
            });
        }
        edges.push(EdgeSpec {
            tail: NodeId(tail),
            head: NodeId(head),
            erasure: re.erasure,
        });
    }
    edges.sort_by_key(|e| (e.tail, e.head));
    if let Some(w) = edges.windows(2).find(|w| w[0].tail == w[1].tail && w[0].head == w[1].head) {
        return Err(ModelError::DuplicateEdge {
            from: nodes[w[0].tail.0].label,
            to: nodes[w[0].head.0].label,
        });
    }

    let n = nodes.len();
    let mut in_edges = vec![Vec::new(); n];
    let mut out_edges = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        out_edges[e.tail.0].push(EdgeId(k));
        in_edges[e.head.0].push(EdgeId(k));
    }
    // edges are sorted by (tail, head), so out lists are ascending by head;
    // in lists are ascending by tail for the same reason.

    let topo = kahn_order(n, &edges, &out_edges, &in_edges).ok_or(ModelError::CycleDetected)?;

    let forward = reach(n, source, |v| out_edges[v].iter().map(|e| edges[e.0].head.0));
    let backward = reach(n, destination, |v| in_edges[v].iter().map(|e| edges[e.0].tail.0));
    if let Some(v) = (0..n).find(|&v| !(forward[v] && backward[v])) {
        return Err(ModelError::DisconnectedNode(nodes[v].label));
    }

    for v in 0..n {
        let degree = in_edges[v].len().max(out_edges[v].len());
        if degree > MAX_DEGREE {
            return Err(ModelError::DegreeTooLarge {
                node: nodes[v].label,
                degree,
            });
        }
    }

    Ok(NetworkSpec {
        nodes,
        edges,
        source: NodeId(source),
        destination: NodeId(destination),
        in_edges,
        out_edges,
        topo,
    })
}

/// Kahn's algorithm, always releasing the smallest ready node first.
fn kahn_order(
    n: usize,
    edges: &[EdgeSpec],
    out_edges: &[Vec<EdgeId>],
    in_edges: &[Vec<EdgeId>],
) -> Option<TopoOrder> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let mut indegree: Vec<usize> = in_edges.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(NodeId(v));
        for e in &out_edges[v] {
            let h = edges[e.0].head.0;
            indegree[h] -= 1;
            if indegree[h] == 0 {
                ready.push(Reverse(h));
            }
        }
    }
    (order.len() == n).then_some(TopoOrder { order })
}

fn reach<I, F>(n: usize, start: usize, next: F) -> Vec<bool>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for w in next(v) {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

impl NetworkSpec {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeSpec {
        &self.edges[e.0]
    }

    pub fn find_edge(&self, tail: NodeId, head: NodeId) -> Option<EdgeId> {
        self.out_edges
            .get(tail.0)?
            .iter()
            .copied()
            .find(|e| self.edges[e.0].head == head)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    pub fn label(&self, v: NodeId) -> i64 {
        self.nodes[v.0].label
    }

    pub fn buffer(&self, v: NodeId) -> BufferSize {
        self.nodes[v.0].buffer
    }

    /// Finite buffer of an intermediate node. Panics on the source or
    /// destination, which have unbounded storage.
    pub fn capacity(&self, v: NodeId) -> usize {
        match self.nodes[v.0].buffer {
            BufferSize::Finite(m) => m as usize,
            BufferSize::Unbounded => panic!("node {} has an unbounded buffer", self.label(v)),
        }
    }

    pub fn is_intermediate(&self, v: NodeId) -> bool {
        v != self.source && v != self.destination
    }

    pub fn intermediates(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.topo.iter().filter(move |&v| self.is_intermediate(v))
    }

    /// Incoming edges of `v`, ascending by tail.
    pub fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.in_edges[v.0]
    }

    /// Outgoing edges of `v`, ascending by head.
    pub fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.out_edges[v.0]
    }

    pub fn topo_order(&self) -> &TopoOrder {
        &self.topo
    }

    /// Copy of the network with every finite buffer replaced by `m`.
    pub fn with_uniform_buffer(&self, m: u32) -> NetworkSpec {
        assert!(m >= 1, "buffer size must be at least one packet");
        let mut out = self.clone();
        for node in &mut out.nodes {
            if let BufferSize::Finite(_) = node.buffer {
                node.buffer = BufferSize::Finite(m);
            }
        }
        out
    }

    pub fn to_raw(&self) -> RawNetwork {
        RawNetwork {
            nodes: self
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.label,
                    buffer: match n.buffer {
                        BufferSize::Finite(m) => RawBuffer::Packets(m as i64),
                        BufferSize::Unbounded => RawBuffer::Keyword("unbounded".into()),
                    },
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| RawEdge {
                    from: self.label(e.tail),
                    to: self.label(e.head),
                    erasure: e.erasure,
                })
                .collect(),
            source: self.label(self.source),
            destination: self.label(self.destination),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("network serializes")
    }
}

pub fn topo_order(spec: &NetworkSpec) -> TopoOrder {
    spec.topo.clone()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    /// Nodes with an edge into `u`, ascending.
    pub incoming: Vec<NodeId>,
    /// Nodes `u` has an edge to, ascending.
    pub outgoing: Vec<NodeId>,
}

impl Neighbors {
    pub fn in_degree(&self) -> usize {
        self.incoming.len()
    }

    pub fn out_degree(&self) -> usize {
        self.outgoing.len()
    }
}

pub fn neighbors(spec: &NetworkSpec, u: NodeId) -> Result<Neighbors, ModelError> {
    if u.0 >= spec.node_count() {
        return Err(ModelError::UnknownNode(u.0 as i64));
    }
    Ok(Neighbors {
        incoming: spec.in_edges(u).iter().map(|e| spec.edge(*e).tail).collect(),
        outgoing: spec.out_edges(u).iter().map(|e| spec.edge(*e).head).collect(),
    })
}

/// Small builder used by tests and examples: node labels are `0..n`,
/// `buffers[i]` is `None` for the endpoints.
pub fn network_from_parts(
    buffers: &[Option<u32>],
    edges: &[(i64, i64, f64)],
    source: i64,
    destination: i64,
) -> Result<NetworkSpec, ModelError> {
    validate(&RawNetwork {
        nodes: buffers
            .iter()
            .enumerate()
            .map(|(i, b)| RawNode {
                id: i as i64,
                buffer: match b {
                    Some(m) => RawBuffer::Packets(*m as i64),
                    None => RawBuffer::Keyword("unbounded".into()),
                },
            })
            .collect(),
        edges: edges
            .iter()
            .map(|&(from, to, erasure)| RawEdge { from, to, erasure })
            .collect(),
        source,
        destination,
    })
}
