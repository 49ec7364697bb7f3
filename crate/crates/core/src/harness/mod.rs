//! Experiment drivers behind the command-line tool: derivation and
//! verification summaries, stability scans, convergence ladders and
//! work-precision measurements.

mod bench;
mod convergence;
mod reference;
mod spec;

pub use bench::{run_bench, runtime_at_error, speedup_at_error, write_bench_csv, BenchRow};
pub use convergence::{desk_ladder, fit_order, loglog_slope, run_convergence, ConvergenceRecord, ConvergenceReport};
pub use reference::{ReferencePolicy, ReferenceSolution, ReferenceSource};
pub use spec::{MethodSpec, ProblemSpec, RunManifest, RunSettings};

use serde::Serialize;

use crate::error::Result;
use crate::stability::{constrained_region, GridSpec, StabilityGrid};
use crate::tableau::{verify_order_conditions, ImexGlmTableau, OrderConditionResidual};

/// What `derive` reports about a constructed tableau.
#[derive(Debug, Clone, Serialize)]
pub struct DeriveSummary {
    pub method: MethodSpec,
    pub lambda: f64,
    pub max_coefficient: f64,
    pub residual: f64,
    pub tolerance: f64,
}

pub fn derive(method: &MethodSpec) -> Result<(ImexGlmTableau, DeriveSummary)> {
    let t = method.build()?;
    let residual = verify_order_conditions(&t)?;
    let summary = DeriveSummary {
        method: method.clone(),
        lambda: t.lambda(),
        max_coefficient: t.max_coefficient(),
        residual: residual.max_abs,
        tolerance: t.order_tolerance(),
    };
    Ok((t, summary))
}

/// Order-condition residuals with the pass/fail verdict.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub residual: OrderConditionResidual,
    pub tolerance: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.residual.max_abs <= self.tolerance
    }

    /// Blocks above tolerance, worst first.
    pub fn failing_blocks(&self) -> Vec<(&'static str, f64)> {
        let mut blocks: Vec<_> = self
            .residual
            .blocks()
            .into_iter()
            .filter(|(_, r)| !(*r <= self.tolerance))
            .collect();
        blocks.sort_by(|a, b| b.1.total_cmp(&a.1));
        blocks
    }
}

pub fn verify(t: &ImexGlmTableau) -> Result<VerifyReport> {
    Ok(VerifyReport {
        residual: verify_order_conditions(t)?,
        tolerance: t.order_tolerance(),
    })
}

/// One constrained region per sector angle (degrees).
pub fn stability_scan(t: &ImexGlmTableau, alphas_deg: &[f64], grid: GridSpec) -> Result<Vec<StabilityGrid>> {
    alphas_deg
        .iter()
        .map(|a| constrained_region(t, a.to_radians(), grid, None))
        .collect()
}

/// True when every cell accepted by `inner` is accepted by `outer`.
pub fn nested(inner: &StabilityGrid, outer: &StabilityGrid) -> bool {
    inner.grid == outer.grid
        && inner
            .verdicts
            .iter()
            .flatten()
            .zip(outer.verdicts.iter().flatten())
            .all(|(&i, &o)| !i || o)
}
