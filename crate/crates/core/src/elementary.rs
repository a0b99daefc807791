//! The four elementary graphs (path, cycle, blossom, bicycle) with unit
//! weights, plus the maps between full node states and the reduced
//! one-value-per-matched-edge form.
//!
//! Node layout (matched edges written `a-b`, unmatched edges `a~b`):
//!
//! * path: `anchor+ ~ a1-b1 ~ a2-b2 ~ ... ~ an-bn ~ anchor-`, representative `ai`.
//! * cycle: `a1-b1 ~ a2-b2 ~ ... ~ an-bn ~ a1`, representative `ai`.
//! * blossom: free end `a1-b1 ~ ... ~ an-g`, where the gateway `g` closes the
//!   odd loop `g ~ c1-d1 ~ c2-d2 ~ ... ~ cm-dm ~ g`. Representatives are
//!   `ai` for the stem and `ci` for the loop, in the order `(x1..xn, y1..ym)`.
//! * bicycle: loop 1 `g1 ~ c1-d1 ~ ... ~ cl-dl ~ g1`, cross-bar
//!   `g1=p1-q1 ~ p2-q2 ~ ... ~ pn-qn=g2`, loop 2 as in the blossom.
//!   Representatives `(z1..zl, x1..xn, y1..ym)` = `(ci, pj, c'i)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Edge, ExchangeNetwork, Market, Matching, NodeId, ProfitState};

/// Tolerance on `x_rep + x_partner = 1` accepted by [`to_reduced`].
pub const PAIR_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementarySpec {
    Path { n: usize, x_plus: f64, x_minus: f64 },
    Cycle { n: usize },
    Blossom { n: usize, m: usize },
    Bicycle { l: usize, n: usize, m: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("cannot parse spec string {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("invalid {kind} parameters: {reason}")]
    SpecInvariantViolation { kind: &'static str, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    #[error("matched pair at reduced index {index} sums to {sum}, expected 1")]
    PairSumViolation { index: usize, sum: f64 },
    #[error("reduced value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("expected {expected} entries, found {found}")]
    Length { expected: usize, found: usize },
}

impl ElementarySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ElementarySpec::Path { .. } => "path",
            ElementarySpec::Cycle { .. } => "cycle",
            ElementarySpec::Blossom { .. } => "blossom",
            ElementarySpec::Bicycle { .. } => "bicycle",
        }
    }

    /// Number of matched edges, which is also the reduced dimension.
    pub fn matched_edges(&self) -> usize {
        match *self {
            ElementarySpec::Path { n, .. } | ElementarySpec::Cycle { n } => n,
            ElementarySpec::Blossom { n, m } => n + m,
            ElementarySpec::Bicycle { l, n, m } => l + n + m,
        }
    }

    /// Number of odd loops (and therefore gateways).
    pub fn loop_count(&self) -> usize {
        match self {
            ElementarySpec::Path { .. } | ElementarySpec::Cycle { .. } => 0,
            ElementarySpec::Blossom { .. } => 1,
            ElementarySpec::Bicycle { .. } => 2,
        }
    }

    pub fn check(&self) -> Result<(), SpecError> {
        let bad = |reason: &str| {
            Err(SpecError::SpecInvariantViolation {
                kind: self.kind(),
                reason: reason.to_string(),
            })
        };
        match *self {
            ElementarySpec::Path { n, x_plus, x_minus } => {
                if n < 1 {
                    return bad("path needs n >= 1");
                }
                if !(0.0..=1.0).contains(&x_plus) || !(0.0..=1.0).contains(&x_minus) {
                    return bad("boundary values must lie in [0, 1]");
                }
            }
            ElementarySpec::Cycle { n } => {
                if n < 2 {
                    return bad("cycle needs n >= 2");
                }
            }
            ElementarySpec::Blossom { n, m } => {
                if n < 1 || m < 2 {
                    return bad("blossom needs n >= 1 and m >= 2");
                }
            }
            ElementarySpec::Bicycle { l, n, m } => {
                if l < 2 || m < 2 || n < 1 {
                    return bad("bicycle needs l, m >= 2 and n >= 1");
                }
            }
        }
        Ok(())
    }

    /// Returns a copy with the named size parameter replaced.
    pub fn with_param(&self, name: &str, value: usize) -> Result<Self, SpecError> {
        let mut out = *self;
        let slot = match (&mut out, name) {
            (ElementarySpec::Path { n, .. }, "n")
            | (ElementarySpec::Cycle { n }, "n")
            | (ElementarySpec::Blossom { n, .. }, "n")
            | (ElementarySpec::Bicycle { n, .. }, "n") => n,
            (ElementarySpec::Blossom { m, .. }, "m") | (ElementarySpec::Bicycle { m, .. }, "m") => {
                m
            }
            (ElementarySpec::Bicycle { l, .. }, "l") => l,
            _ => {
                return Err(SpecError::Parse {
                    input: name.to_string(),
                    reason: format!("{} has no size parameter {name:?}", self.kind()),
                })
            }
        };
        *slot = value;
        Ok(out)
    }
}

impl fmt::Display for ElementarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ElementarySpec::Path { n, x_plus, x_minus } => {
                write!(f, "path:n={n},xp={x_plus},xm={x_minus}")
            }
            ElementarySpec::Cycle { n } => write!(f, "cycle:n={n}"),
            ElementarySpec::Blossom { n, m } => write!(f, "blossom:n={n},m={m}"),
            ElementarySpec::Bicycle { l, n, m } => write!(f, "bicycle:l={l},n={n},m={m}"),
        }
    }
}

/// Splits `"kind:k=v,k=v"` into the kind and its key/value pairs.
pub(crate) fn split_spec(input: &str) -> Result<(String, BTreeMap<String, String>), SpecError> {
    let parse_err = |reason: String| SpecError::Parse {
        input: input.to_string(),
        reason,
    };
    let (kind, rest) = match input.trim().split_once(':') {
        Some((k, r)) => (k.trim().to_ascii_lowercase(), r),
        None => (input.trim().to_ascii_lowercase(), ""),
    };
    let mut params = BTreeMap::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, found {item:?}")))?;
        let key = k.trim().to_ascii_lowercase();
        if params.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(parse_err(format!("parameter {key:?} given twice")));
        }
    }
    Ok((kind, params))
}

impl FromStr for ElementarySpec {
    type Err = SpecError;

    /// Parses `"path:n=8,xp=0,xm=0"`, `"cycle:n=6"`, `"blossom:n=3,m=4"`
    /// or `"bicycle:l=3,n=2,m=5"`. Path boundaries default to 0.
    ///
    /// Only syntax is checked here; size constraints are enforced by
    /// [`ElementarySpec::check`] and [`build`].
    fn from_str(input: &str) -> Result<Self, SpecError> {
        let (kind, mut params) = split_spec(input)?;
        let parse_err = |reason: String| SpecError::Parse {
            input: input.to_string(),
            reason,
        };
        let mut size = |key: &str| -> Result<usize, SpecError> {
            let raw = params
                .remove(key)
                .ok_or_else(|| parse_err(format!("missing parameter {key:?}")))?;
            raw.parse::<usize>()
                .map_err(|_| parse_err(format!("{key}={raw:?} is not a non-negative integer")))
        };
        let spec = match kind.as_str() {
            "path" => {
                let n = size("n")?;
                let mut boundary = |key: &str| -> Result<f64, SpecError> {
                    match params.remove(key) {
                        None => Ok(0.0),
                        Some(raw) => raw
                            .parse::<f64>()
                            .map_err(|_| parse_err(format!("{key}={raw:?} is not a number"))),
                    }
                };
                let x_plus = boundary("xp")?;
                let x_minus = boundary("xm")?;
                ElementarySpec::Path { n, x_plus, x_minus }
            }
            "cycle" => ElementarySpec::Cycle { n: size("n")? },
            "blossom" => {
                let n = size("n")?;
                let m = size("m")?;
                ElementarySpec::Blossom { n, m }
            }
            "bicycle" => {
                let l = size("l")?;
                let n = size("n")?;
                let m = size("m")?;
                ElementarySpec::Bicycle { l, n, m }
            }
            other => return Err(parse_err(format!("unknown graph kind {other:?}"))),
        };
        if let Some(extra) = params.keys().next() {
            return Err(parse_err(format!("unexpected parameter {extra:?}")));
        }
        Ok(spec)
    }
}

/// Gateway of an odd loop and the two loop neighbours that compete for its
/// outside option.
///
/// `case1_neighbor` is the neighbour whose option enters the linear model
/// with a `+1/2` coupling; the loop is in case 1 when that option is at
/// least as large as the other one (ties resolve to case 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GatewayBranch {
    pub gateway: NodeId,
    pub case1_neighbor: NodeId,
    pub case2_neighbor: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryInstance {
    pub spec: ElementarySpec,
    pub market: Market,
    /// Node carrying the reduced value of each matched edge, in model order.
    pub representatives: Vec<NodeId>,
    /// Matched partner of each representative.
    pub partners: Vec<NodeId>,
    /// Role tag for every node.
    pub labels: Vec<String>,
    /// One entry per loop: loop 1 then loop 2 for a bicycle.
    pub gateways: Vec<GatewayBranch>,
}

struct Builder {
    labels: Vec<String>,
    edges: Vec<Edge>,
    matching: Vec<(NodeId, NodeId)>,
    pinned: BTreeMap<NodeId, f64>,
    representatives: Vec<NodeId>,
    partners: Vec<NodeId>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            labels: Vec::new(),
            edges: Vec::new(),
            matching: Vec::new(),
            pinned: BTreeMap::new(),
            representatives: Vec::new(),
            partners: Vec::new(),
        }
    }

    fn node(&mut self, label: String) -> NodeId {
        self.labels.push(label);
        self.labels.len() - 1
    }

    fn unmatched(&mut self, u: NodeId, v: NodeId) {
        self.edges.push(Edge::new(u, v, 1.0));
    }

    /// Matched edge whose reduced value is carried by `rep`.
    fn matched(&mut self, rep: NodeId, other: NodeId) {
        self.edges.push(Edge::new(rep, other, 1.0));
        self.matching.push((rep, other));
        self.representatives.push(rep);
        self.partners.push(other);
    }

    /// Odd loop hanging off `gateway`, labelled `{tag}-k{a,b}`.
    /// Returns the first (`c1`) and last (`dm`) loop nodes.
    fn odd_loop(&mut self, gateway: NodeId, m: usize, tag: &str) -> (NodeId, NodeId) {
        let mut prev = gateway;
        let mut first = None;
        for k in 1..=m {
            let c = self.node(format!("{tag}-{k}a"));
            let d = self.node(format!("{tag}-{k}b"));
            self.unmatched(prev, c);
            self.matched(c, d);
            first.get_or_insert(c);
            prev = d;
        }
        self.unmatched(prev, gateway);
        (first.expect("m >= 1"), prev)
    }

    fn finish(self, spec: ElementarySpec, gateways: Vec<GatewayBranch>) -> ElementaryInstance {
        let n = self.labels.len();
        let net = ExchangeNetwork::new(n, self.edges, self.pinned);
        let market = Market::new(net, Matching::new(self.matching))
            .expect("elementary constructions satisfy every network invariant");
        ElementaryInstance {
            spec,
            market,
            representatives: self.representatives,
            partners: self.partners,
            labels: self.labels,
            gateways,
        }
    }
}

/// Builds the unit-weight elementary graph described by `spec`.
pub fn build(spec: &ElementarySpec) -> Result<ElementaryInstance, SpecError> {
    spec.check()?;
    let mut b = Builder::new();
    let inst = match *spec {
        ElementarySpec::Path { n, x_plus, x_minus } => {
            let plus = b.node("anchor+".into());
            b.pinned.insert(plus, x_plus);
            let mut prev = plus;
            for k in 1..=n {
                let a = b.node(format!("path-{k}a"));
                let bb = b.node(format!("path-{k}b"));
                b.unmatched(prev, a);
                b.matched(a, bb);
                prev = bb;
            }
            let minus = b.node("anchor-".into());
            b.pinned.insert(minus, x_minus);
            b.unmatched(prev, minus);
            b.finish(*spec, Vec::new())
        }
        ElementarySpec::Cycle { n } => {
            let mut first = None;
            let mut prev: Option<NodeId> = None;
            for k in 1..=n {
                let a = b.node(format!("cycle-{k}a"));
                let bb = b.node(format!("cycle-{k}b"));
                if let Some(p) = prev {
                    b.unmatched(p, a);
                }
                b.matched(a, bb);
                first.get_or_insert(a);
                prev = Some(bb);
            }
            b.unmatched(prev.expect("n >= 2"), first.expect("n >= 2"));
            b.finish(*spec, Vec::new())
        }
        ElementarySpec::Blossom { n, m } => {
            let mut prev: Option<NodeId> = None;
            let mut gateway = 0;
            for k in 1..=n {
                let a = b.node(format!("stem-{k}a"));
                let other = if k == n {
                    b.node("gateway".into())
                } else {
                    b.node(format!("stem-{k}b"))
                };
                if let Some(p) = prev {
                    b.unmatched(p, a);
                }
                b.matched(a, other);
                prev = Some(other);
                gateway = other;
            }
            let (c1, dm) = b.odd_loop(gateway, m, "loop");
            b.finish(
                *spec,
                vec![GatewayBranch {
                    gateway,
                    case1_neighbor: c1,
                    case2_neighbor: dm,
                }],
            )
        }
        ElementarySpec::Bicycle { l, n, m } => {
            // loop-1 nodes come first so that the representatives are ordered (z, x, y)
            let mut loop1 = Vec::with_capacity(2 * l);
            for k in 1..=l {
                let c = b.node(format!("loop1-{k}a"));
                let d = b.node(format!("loop1-{k}b"));
                b.matched(c, d);
                loop1.push((c, d));
            }
            let mut prev: Option<NodeId> = None;
            let mut g1 = 0;
            let mut g2 = 0;
            for k in 1..=n {
                let p = if k == 1 {
                    b.node("gateway1".into())
                } else {
                    b.node(format!("bar-{k}a"))
                };
                let q = if k == n {
                    b.node("gateway2".into())
                } else {
                    b.node(format!("bar-{k}b"))
                };
                if let Some(pr) = prev {
                    b.unmatched(pr, p);
                }
                b.matched(p, q);
                if k == 1 {
                    g1 = p;
                }
                g2 = q;
                prev = Some(q);
            }
            b.unmatched(g1, loop1[0].0);
            for k in 0..l - 1 {
                b.unmatched(loop1[k].1, loop1[k + 1].0);
            }
            b.unmatched(loop1[l - 1].1, g1);
            let (c1, dm) = b.odd_loop(g2, m, "loop2");
            let first = GatewayBranch {
                gateway: g1,
                // seen from the bar, loop 1 runs in the opposite direction
                case1_neighbor: loop1[l - 1].1,
                case2_neighbor: loop1[0].0,
            };
            let second = GatewayBranch {
                gateway: g2,
                case1_neighbor: c1,
                case2_neighbor: dm,
            };
            b.finish(*spec, vec![first, second])
        }
    };
    Ok(inst)
}

impl ElementaryInstance {
    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    /// Gateway branch of every loop in `x` (`true` = case 1).
    pub fn loop_cases(&self, x: &[f64]) -> Vec<bool> {
        self.gateways
            .iter()
            .map(|g| (1.0 - x[g.case1_neighbor]) >= (1.0 - x[g.case2_neighbor]))
            .collect()
    }
}

/// Representative values of a full state whose matched pairs sum to one.
pub fn to_reduced(inst: &ElementaryInstance, x_full: &ProfitState) -> Result<Vec<f64>, ReducedError> {
    to_reduced_slice(inst, x_full.values())
}

pub(crate) fn to_reduced_slice(inst: &ElementaryInstance, x: &[f64]) -> Result<Vec<f64>, ReducedError> {
    if x.len() != inst.market.node_count() {
        return Err(ReducedError::Length {
            expected: inst.market.node_count(),
            found: x.len(),
        });
    }
    inst.representatives
        .iter()
        .zip(&inst.partners)
        .enumerate()
        .map(|(index, (&r, &p))| {
            let sum = x[r] + x[p];
            if (sum - 1.0).abs() > PAIR_SUM_TOLERANCE {
                Err(ReducedError::PairSumViolation { index, sum })
            } else {
                Ok(x[r])
            }
        })
        .collect()
}

/// Full state with representative `k` at `v[k]`, its partner at `1 - v[k]`,
/// and anchors at their pinned values.
pub fn from_reduced(inst: &ElementaryInstance, v: &[f64]) -> Result<ProfitState, ReducedError> {
    if v.len() != inst.dim() {
        return Err(ReducedError::Length {
            expected: inst.dim(),
            found: v.len(),
        });
    }
    let mut x = vec![0.0; inst.market.node_count()];
    for (index, ((&r, &p), &value)) in inst
        .representatives
        .iter()
        .zip(&inst.partners)
        .zip(v)
        .enumerate()
    {
        if !(0.0..=1.0).contains(&value) {
            return Err(ReducedError::OutOfRange { index, value });
        }
        x[r] = value;
        x[p] = 1.0 - value;
    }
    Ok(inst
        .market
        .state(x)
        .expect("reduced values in [0, 1] give a finite state"))
}
