//! Edge-balanced bargaining dynamics on exchange networks.
//!
//! [`graph`] holds networks, matchings and outcome checks; [`dynamics`] the
//! synchronous update and rate estimation; [`elementary`] the path, cycle,
//! blossom and bicycle constructions; [`linear_model`] their reduced linear
//! systems; [`spectral`] the closed-form spectra and convergence times;
//! [`scan`] size sweeps and [`io`] the JSON/CSV formats.

// `!(x > 0.0)` style checks are there to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod elementary;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod linear_model;
pub mod scan;
pub mod spectral;

pub use dynamics::{simulate, step, DynamicsConfig, RateFit, Trajectory};
pub use elementary::{build, ElementaryInstance, ElementarySpec};
pub use graph::{check_outcome, Edge, ExchangeNetwork, Market, Matching, NodeId, ProfitState};
pub use linear_model::{LinearModel, LoopCase, ModelFamily};
pub use spectral::{Classification, SpectrumReport};
