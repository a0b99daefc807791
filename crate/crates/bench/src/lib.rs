//! Shared inputs for the benchmarks.

use bargain_core::elementary::{build, from_reduced, ElementaryInstance, ElementarySpec};
use bargain_core::graph::ProfitState;
use bargain_core::scan::random_reduced;

/// Instance for `spec` with a fixed random reduced start state.
pub fn instance_with_state(spec: &str) -> (ElementaryInstance, ProfitState) {
    let spec: ElementarySpec = spec.parse().expect("valid spec string");
    let inst = build(&spec).expect("valid spec");
    let x0 = from_reduced(&inst, &random_reduced(inst.dim(), 1)).expect("values in [0, 1)");
    (inst, x0)
}
