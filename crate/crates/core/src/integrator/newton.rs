use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::linsolve::NewtonSolver;
use super::{IntegrationConfig, PartitionedSystem};
use crate::error::{GlmError, Result};

/// When the Newton matrix `I − hλJ` is refactored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianReuse {
    EveryIteration,
    /// One factorization per stage solve, at the initial guess, refreshed
    /// only when the residual stops contracting.
    #[default]
    PerStage,
    /// One factorization per step shared by all stages, replaced by a
    /// stage-local one when the residual stops contracting.
    Frozen,
}

/// Residual ratio above which a reused Newton matrix is refreshed.
const SLOW_CONTRACTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct StageSolution {
    pub y: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn residual(sys: &dyn PartitionedSystem, y: &DVector<f64>, rhs: &DVector<f64>, hl: f64) -> DVector<f64> {
    y - sys.g(y) * hl - rhs
}

/// Solve `Y = hλ g(Y) + rhs` by modified Newton iteration started from `rhs`.
///
/// Converged when `‖Y − hλg(Y) − rhs‖₂ ≤ tol·(1 + ‖rhs‖₂)`.
pub fn solve_stage(
    sys: &dyn PartitionedSystem,
    rhs: &DVector<f64>,
    hl: f64,
    cfg: &IntegrationConfig,
    shared: Option<&NewtonSolver>,
) -> Result<StageSolution> {
    solve_stage_from(sys, rhs, rhs, hl, cfg, shared)
}

/// As [`solve_stage`], with an explicit initial iterate.
pub fn solve_stage_from(
    sys: &dyn PartitionedSystem,
    rhs: &DVector<f64>,
    guess: &DVector<f64>,
    hl: f64,
    cfg: &IntegrationConfig,
    shared: Option<&NewtonSolver>,
) -> Result<StageSolution> {
    if hl == 0.0 {
        return Ok(StageSolution {
            y: rhs.clone(),
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = cfg.newton_tol * (1.0 + rhs.norm());
    let mut y = guess.clone();
    let mut own: Option<NewtonSolver> = None;
    let use_shared = cfg.jacobian_reuse == JacobianReuse::Frozen && shared.is_some();
    let mut last = f64::INFINITY;
    for k in 0..=cfg.newton_max_iters {
        let r = residual(sys, &y, rhs, hl);
        let norm = r.norm();
        if !norm.is_finite() {
            return Err(GlmError::NonFinite(format!("Newton residual after {k} iterations")));
        }
        let previous = last;
        last = norm;
        if norm <= target {
            return Ok(StageSolution {
                y,
                iterations: k,
                residual: norm,
            });
        }
        if k == cfg.newton_max_iters {
            break;
        }
        // a reused factorization is refreshed at the current iterate once
        // the residual stops contracting
        let stalled = k > 0 && norm > SLOW_CONTRACTION * previous;
        let refactor = match cfg.jacobian_reuse {
            JacobianReuse::EveryIteration => true,
            _ => (own.is_none() && !use_shared) || stalled,
        };
        if refactor {
            own = Some(NewtonSolver::new(&sys.g_jacobian(&y), hl, cfg.dense_threshold)?);
        }
        let solver = own.as_ref().or(shared).expect("a factorization is available");
        y -= solver.solve(&r)?;
    }
    Err(GlmError::NewtonDivergence {
        stage: 0,
        iterations: cfg.newton_max_iters,
        residual: last,
    })
}
