//! Shared fixtures for the benchmarks.

use parglm_core::{AllenCahnConfig, MethodSpec, ProblemSpec};

/// Orders exercised by every benchmark group.
pub const ORDERS: [usize; 3] = [2, 4, 6];

pub fn methods(order: usize) -> [(&'static str, MethodSpec); 2] {
    [("ensemble", MethodSpec::ensemble(order)), ("dimsim", MethodSpec::dimsim(order))]
}

/// A small Allen-Cahn grid, large enough that stage solves dominate.
pub fn allen_cahn(n: usize) -> ProblemSpec {
    ProblemSpec::AllenCahn(AllenCahnConfig {
        n,
        tspan: (0.0, 0.1),
        ..AllenCahnConfig::default()
    })
}
