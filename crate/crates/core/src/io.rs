//! JSON network documents and trajectory export.
//!
//! A network document looks like
//!
//! ```json
//! {"nodes": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]], "matching": [[0, 1]],
//!  "pinned": {"2": 0.25}, "x": [0.5, 0.5, 0.25]}
//! ```
//!
//! `pinned` and `x` may be omitted.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsConfig, Trajectory};
use crate::graph::{Edge, ExchangeNetwork, Market, Matching, NodeId, ProfitState, StateError, ValidationErrors};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pinned key {0:?} is not a node index")]
    PinnedKey(String),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("state: {0}")]
    State(#[from] StateError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: usize,
    pub edges: Vec<(NodeId, NodeId, f64)>,
    pub matching: Vec<(NodeId, NodeId)>,
    #[serde(default)]
    pub pinned: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl NetworkDocument {
    pub fn from_market(market: &Market, x: Option<&ProfitState>) -> Self {
        let net = market.network();
        NetworkDocument {
            nodes: net.node_count(),
            edges: net.edges().iter().map(|e| (e.u, e.v, e.weight)).collect(),
            matching: market.matching().pairs().to_vec(),
            pinned: net.pinned().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            x: x.map(|s| s.values().to_vec()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("document is plain data")
    }

    /// Validates the document and returns the market plus the state in
    /// `x`, if present.
    pub fn into_market(self) -> Result<(Market, Option<ProfitState>), IoError> {
        let mut pinned = BTreeMap::new();
        for (key, value) in &self.pinned {
            let node = key.parse::<NodeId>().map_err(|_| IoError::PinnedKey(key.clone()))?;
            pinned.insert(node, *value);
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v, w)| Edge::new(u, v, w))
            .collect();
        let net = ExchangeNetwork::new(self.nodes, edges, pinned);
        let market = Market::new(net, Matching::new(self.matching))?;
        let state = match self.x {
            Some(values) => Some(market.state(values)?),
            None => None,
        };
        Ok((market, state))
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,x_0,...,x_{N-1}` followed by one row per state.
pub fn write_trajectory_csv<W: Write>(states: &[Vec<f64>], out: W) -> Result<(), IoError> {
    let dim = states.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (t, s) in states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(s.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory as JSON with the configuration that produced it.
pub fn trajectory_json(traj: &Trajectory, cfg: &DynamicsConfig) -> serde_json::Value {
    serde_json::json!({
        "config": cfg,
        "converged": traj.converged,
        "steps_taken": traj.steps_taken,
        "states": traj.states,
    })
}
