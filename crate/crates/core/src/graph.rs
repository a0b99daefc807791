//! Exchange networks, matchings and the outcome predicates (stability,
//! balance, slacks).
//!
//! Nodes are dense indices `0..node_count`. Anchor nodes are modelled as
//! *pinned* nodes: they hold a constant value, are never matched and never
//! updated, but still act as outside options for their neighbours.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Default absolute tolerance for [`check_outcome`].
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
}

impl Edge {
    pub fn new(u: NodeId, v: NodeId, weight: f64) -> Self {
        Edge { u, v, weight }
    }

    fn key(&self) -> (NodeId, NodeId) {
        ordered(self.u, self.v)
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Weighted undirected graph of players.
///
/// Construction never fails; structural problems are reported by
/// [`validate`] so that a caller sees every violation at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeNetwork {
    node_count: usize,
    edges: Vec<Edge>,
    pinned: BTreeMap<NodeId, f64>,
    // (neighbour, weight) for in-range edges
    adjacency: Vec<Vec<(NodeId, f64)>>,
}

impl ExchangeNetwork {
    pub fn new(node_count: usize, edges: Vec<Edge>, pinned: BTreeMap<NodeId, f64>) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            if e.u < node_count && e.v < node_count && e.u != e.v {
                adjacency[e.u].push((e.v, e.weight));
                adjacency[e.v].push((e.u, e.weight));
            }
        }
        ExchangeNetwork {
            node_count,
            edges,
            pinned,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn pinned(&self) -> &BTreeMap<NodeId, f64> {
        &self.pinned
    }

    pub fn is_pinned(&self, node: NodeId) -> bool {
        self.pinned.contains_key(&node)
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node]
    }

    /// Weight of edge `(i, j)`, if present.
    pub fn weight(&self, i: NodeId, j: NodeId) -> Option<f64> {
        self.adjacency
            .get(i)?
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, w)| *w)
    }

    /// Largest edge weight (0 for an edgeless network).
    pub fn max_weight(&self) -> f64 {
        self.edges.iter().fold(0.0, |acc, e| acc.max(e.weight))
    }
}

/// Node-disjoint set of edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    pairs: Vec<(NodeId, NodeId)>,
}

impl Matching {
    pub fn new(pairs: Vec<(NodeId, NodeId)>) -> Self {
        Matching { pairs }
    }

    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("network has no nodes")]
    Empty,
    #[error("edge ({u}, {v}) references a node outside 0..{node_count}")]
    NodeOutOfRange {
        u: NodeId,
        v: NodeId,
        node_count: usize,
    },
    #[error("edge ({u}, {v}) has negative or non-finite weight {weight}")]
    NegativeWeight { u: NodeId, v: NodeId, weight: f64 },
    #[error("self-loop at node {node}")]
    SelfLoop { node: NodeId },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: NodeId, v: NodeId },
    #[error("pinned node {node} has negative or non-finite value {value}")]
    NegativePinnedValue { node: NodeId, value: f64 },
    #[error("pinned node {node} is outside 0..{node_count}")]
    PinnedOutOfRange { node: NodeId, node_count: usize },
    #[error("node {node} appears in more than one matched pair")]
    OverlappingMatch { node: NodeId },
    #[error("matched pair ({u}, {v}) is not an edge of the network")]
    MatchNotAnEdge { u: NodeId, v: NodeId },
    #[error("pinned node {node} is matched")]
    PinnedNodeMatched { node: NodeId },
}

/// Every violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl std::error::Error for ValidationErrors {}

/// Non-fatal observations about a valid network.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    /// A matched edge of weight zero pins both endpoints at 0 through the clamp.
    ZeroWeightMatch { u: NodeId, v: NodeId },
}

/// Checks every network and matching invariant and returns the complete
/// list of violations.
pub fn validate(net: &ExchangeNetwork, m: &Matching) -> Result<(), ValidationErrors> {
    let mut errors = Vec::new();
    let n = net.node_count;
    if n == 0 {
        errors.push(ValidationError::Empty);
    }

    let mut seen = BTreeSet::new();
    for e in &net.edges {
        if e.u >= n || e.v >= n {
            errors.push(ValidationError::NodeOutOfRange {
                u: e.u,
                v: e.v,
                node_count: n,
            });
        }
        if e.u == e.v {
            errors.push(ValidationError::SelfLoop { node: e.u });
        }
        if !(e.weight >= 0.0) || !e.weight.is_finite() {
            errors.push(ValidationError::NegativeWeight {
                u: e.u,
                v: e.v,
                weight: e.weight,
            });
        }
        if e.u != e.v && !seen.insert(e.key()) {
            let (u, v) = e.key();
            errors.push(ValidationError::DuplicateEdge { u, v });
        }
    }

    for (&node, &value) in &net.pinned {
        if node >= n {
            errors.push(ValidationError::PinnedOutOfRange {
                node,
                node_count: n,
            });
        }
        if !(value >= 0.0) || !value.is_finite() {
            errors.push(ValidationError::NegativePinnedValue { node, value });
        }
    }

    let mut used = BTreeSet::new();
    let mut overlapping = BTreeSet::new();
    for &(u, v) in &m.pairs {
        for node in [u, v] {
            if !used.insert(node) {
                overlapping.insert(node);
            }
            if net.is_pinned(node) {
                errors.push(ValidationError::PinnedNodeMatched { node });
            }
        }
        if u == v || !seen.contains(&ordered(u, v)) {
            errors.push(ValidationError::MatchNotAnEdge { u, v });
        }
    }
    errors.extend(
        overlapping
            .into_iter()
            .map(|node| ValidationError::OverlappingMatch { node }),
    );

    if errors.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(errors))
    }
}

/// A validated network together with its matching and the derived
/// partner map.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    network: ExchangeNetwork,
    matching: Matching,
    partner: Vec<Option<NodeId>>,
    matched_weight: Vec<f64>,
    // (neighbour, weight) over incident edges that are not in the matching
    outside: Vec<Vec<(NodeId, f64)>>,
}

impl Market {
    pub fn new(network: ExchangeNetwork, matching: Matching) -> Result<Self, ValidationErrors> {
        validate(&network, &matching)?;
        let n = network.node_count;
        let mut partner = vec![None; n];
        let mut matched_weight = vec![0.0; n];
        for &(u, v) in &matching.pairs {
            let w = network.weight(u, v).expect("validated matching uses existing edges");
            partner[u] = Some(v);
            partner[v] = Some(u);
            matched_weight[u] = w;
            matched_weight[v] = w;
        }
        let outside = (0..n)
            .map(|i| {
                network.adjacency[i]
                    .iter()
                    .copied()
                    .filter(|&(k, _)| partner[i] != Some(k))
                    .collect()
            })
            .collect();
        Ok(Market {
            network,
            matching,
            partner,
            matched_weight,
            outside,
        })
    }

    pub fn network(&self) -> &ExchangeNetwork {
        &self.network
    }

    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    pub fn node_count(&self) -> usize {
        self.network.node_count
    }

    pub fn partner(&self, node: NodeId) -> Option<NodeId> {
        self.partner[node]
    }

    /// Weight of the matched edge at `node` (0 for unmatched nodes).
    pub fn matched_weight(&self, node: NodeId) -> f64 {
        self.matched_weight[node]
    }

    /// Incident edges of `node` that are not in the matching.
    pub fn unmatched_incident(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.outside[node]
    }

    pub fn warnings(&self) -> Vec<ValidationWarning> {
        self.matching
            .pairs
            .iter()
            .filter(|&&(u, v)| self.network.weight(u, v) == Some(0.0))
            .map(|&(u, v)| ValidationWarning::ZeroWeightMatch { u, v })
            .collect()
    }

    /// Builds a state from raw values, overwriting pinned nodes with their
    /// pinned value.
    pub fn state(&self, mut values: Vec<f64>) -> Result<ProfitState, StateError> {
        if values.len() != self.node_count() {
            return Err(StateError::Length {
                expected: self.node_count(),
                found: values.len(),
            });
        }
        for (&node, &v) in &self.network.pinned {
            values[node] = v;
        }
        ProfitState::new(values)
    }

    /// All-zero state (pinned nodes at their pinned values).
    pub fn zero_state(&self) -> ProfitState {
        self.state(vec![0.0; self.node_count()])
            .expect("zero state is always well-formed")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state has {found} entries, network has {expected} nodes")]
    Length { expected: usize, found: usize },
    #[error("state entry {index} is not finite")]
    NonFinite { index: usize },
}

/// Per-node profit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfitState(Vec<f64>);

impl ProfitState {
    pub fn new(values: Vec<f64>) -> Result<Self, StateError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StateError::NonFinite { index });
        }
        Ok(ProfitState(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ProfitState(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &ProfitState) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

impl std::ops::Index<NodeId> for ProfitState {
    type Output = f64;

    fn index(&self, i: NodeId) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} is not matched")]
    UnmatchedNode { node: NodeId },
    #[error("({u}, {v}) is not an edge")]
    EdgeNotFound { u: NodeId, v: NodeId },
    #[error("node {node} is outside the network")]
    NodeOutOfRange { node: NodeId },
}

#[inline]
fn positive_part(v: f64) -> f64 {
    v.max(0.0)
}

/// Largest `(w - x_k)_+` over the given incident edges, 0 when empty.
#[inline]
pub(crate) fn outside_option(edges: &[(NodeId, f64)], x: &[f64]) -> f64 {
    edges
        .iter()
        .fold(0.0, |acc: f64, &(k, w)| acc.max(positive_part(w - x[k])))
}

/// Best alternate value of a matched node: the largest surplus it could
/// extract over an unmatched incident edge.
pub fn best_alternate(market: &Market, x: &ProfitState, node: NodeId) -> Result<f64, GraphError> {
    if node >= market.node_count() {
        return Err(GraphError::NodeOutOfRange { node });
    }
    if market.partner(node).is_none() {
        return Err(GraphError::UnmatchedNode { node });
    }
    Ok(outside_option(market.unmatched_incident(node), x.values()))
}

/// `x_i + x_j - w_ij`.
pub fn edge_slack(
    net: &ExchangeNetwork,
    x: &ProfitState,
    i: NodeId,
    j: NodeId,
) -> Result<f64, GraphError> {
    let w = net.weight(i, j).ok_or(GraphError::EdgeNotFound { u: i, v: j })?;
    Ok(x[i] + x[j] - w)
}

/// `min(x_i, min over unmatched incident edges of the edge slack)`.
pub fn node_slack(market: &Market, x: &ProfitState, i: NodeId) -> Result<f64, GraphError> {
    if i >= market.node_count() {
        return Err(GraphError::NodeOutOfRange { node: i });
    }
    Ok(market
        .unmatched_incident(i)
        .iter()
        .fold(x[i], |acc, &(l, w)| acc.min(x[i] + x[l] - w)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeCheck {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
    pub matched: bool,
    pub slack: f64,
    /// `|(x_u - r_u) - (x_v - r_v)|` for matched edges.
    pub balance_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeCheckReport {
    pub stable: bool,
    pub balanced: bool,
    pub tolerance: f64,
    pub worst_stability_violation: f64,
    pub worst_balance_residual: f64,
    pub edges: Vec<EdgeCheck>,
}

/// Evaluates the stability and balance conditions of an outcome.
///
/// Stability looks at every edge; balance looks at every matched edge with
/// outside options taken over all other neighbours. Pinned nodes are never
/// matched, so they only enter as outside options.
pub fn check_outcome(market: &Market, x: &ProfitState, tol: f64) -> OutcomeCheckReport {
    let xs = x.values();
    let mut worst_stability = 0.0_f64;
    let mut worst_balance = 0.0_f64;
    let mut edges = Vec::with_capacity(market.network.edges.len());

    for e in &market.network.edges {
        let slack = xs[e.u] + xs[e.v] - e.weight;
        worst_stability = worst_stability.max(positive_part(-slack));
        let matched = market.partner(e.u) == Some(e.v);
        let balance_residual = matched.then(|| {
            let ru = outside_option(market.unmatched_incident(e.u), xs);
            let rv = outside_option(market.unmatched_incident(e.v), xs);
            ((xs[e.u] - ru) - (xs[e.v] - rv)).abs()
        });
        if let Some(r) = balance_residual {
            worst_balance = worst_balance.max(r);
        }
        edges.push(EdgeCheck {
            u: e.u,
            v: e.v,
            weight: e.weight,
            matched,
            slack,
            balance_residual,
        });
    }

    OutcomeCheckReport {
        stable: worst_stability <= tol,
        balanced: worst_balance <= tol,
        tolerance: tol,
        worst_stability_violation: worst_stability,
        worst_balance_residual: worst_balance,
        edges,
    }
}
