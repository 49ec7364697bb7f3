//! Parallel implicit-explicit general linear methods: tableau construction,
//! order-condition checks, linear stability analysis and a stage-parallel
//! time integrator.

pub mod error;
pub mod matkernels;
pub mod tableau;
pub mod dimsim;
pub mod ensemble;
pub mod stability;
pub mod integrator;
pub mod problems;
pub mod harness;

pub use error::{GlmError, Result};
pub use matkernels::{Abscissae, AbscissaeChoice};
pub use tableau::{
    explicit_from_implicit, implicit_from_explicit, read_tableau, taylor_weights_parallel,
    verify_order_conditions, write_tableau, Family, ImexGlmTableau, OrderConditionResidual,
    TableauParts,
};
pub use integrator::{integrate, EndingProcedure, IntegrationConfig, IntegrationOutput, Integrator, JacobianReuse, PartitionedSystem};
pub use problems::{AllenCahn, AllenCahnConfig, Cusp, CuspConfig, LinearTest};
pub use dimsim::{build_parallel_imex_dimsim, find_dimsim_lambda, DimsimSpec};
pub use ensemble::{build_parallel_ensemble, EnsembleSpec};
pub use stability::{StiffValue, C64};
pub use harness::{
    derive, desk_ladder, fit_order, run_bench, run_convergence, stability_scan, verify, BenchRow, ConvergenceRecord,
    ConvergenceReport, DeriveSummary, MethodSpec, ProblemSpec, ReferencePolicy, ReferenceSolution, RunManifest, RunSettings,
    VerifyReport,
};
