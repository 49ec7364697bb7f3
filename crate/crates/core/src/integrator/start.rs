use nalgebra::{DMatrix, DVector};

use super::{ExternalStages, IntegrationConfig, PartitionedSystem};
use crate::error::{GlmError, Result};
use crate::matkernels::solve_left;
use crate::tableau::ImexGlmTableau;

/// Explicit substeps must keep `Δ·‖J_g‖∞` below this so the inner solve
/// resolves stiff transients instead of merely staying stable.
const STIFF_SUBSTEP: f64 = 0.05;

/// Number of whole steps `ℓ = ⌈−min c⌉` by which the method start is delayed
/// so that every abscissa target lies at or after `t0`.
pub fn start_shift(c: &[f64]) -> usize {
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        0
    } else {
        (-min - 1e-12).ceil() as usize
    }
}

fn rk4_step(sys: &dyn PartitionedSystem, y: &DVector<f64>, dt: f64) -> DVector<f64> {
    let rhs = |z: &DVector<f64>| sys.f(z) + sys.g(z);
    let k1 = rhs(y);
    let k2 = rhs(&(y + &k1 * (0.5 * dt)));
    let k3 = rhs(&(y + &k2 * (0.5 * dt)));
    let k4 = rhs(&(y + &k3 * dt));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// Substeps for one inner segment of length `len`.
pub(crate) fn substeps(order: usize, h: f64, len: f64, stiffness: f64) -> usize {
    if len <= 0.0 {
        return 0;
    }
    let base = (order + 1).div_ceil(4) as f64 * 16f64.max(((1.0 / h).ceil() * h * 64.0).ceil());
    let stiff = (len * stiffness / STIFF_SUBSTEP).ceil();
    base.max(stiff).max(1.0) as usize
}

/// Classical RK4 on `f + g` from `t0`/`y0` through the sorted `targets`.
pub(crate) fn inner_solutions(
    sys: &dyn PartitionedSystem,
    y0: &DVector<f64>,
    t0: f64,
    targets: &[f64],
    order: usize,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    let mut order_idx: Vec<usize> = (0..targets.len()).collect();
    order_idx.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let mut out = vec![DVector::zeros(0); targets.len()];
    let (mut t, mut y) = (t0, y0.clone());
    for idx in order_idx {
        let len = targets[idx] - t;
        if len < -1e-12 * (1.0 + t.abs()) {
            return Err(GlmError::Config(format!("start target {} precedes t0", targets[idx])));
        }
        let n = substeps(order, h, len, sys.g_jacobian(&y).norm_inf());
        let dt = len / n.max(1) as f64;
        for _ in 0..n {
            y = rk4_step(sys, &y, dt);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(GlmError::NonFinite(format!("inner start-up solve towards t = {}", targets[idx])));
        }
        t = targets[idx];
        out[idx] = y.clone();
    }
    Ok(out)
}

/// External stages `x_i = y(t_ℓ + c_i h) − hλ g(y(t_ℓ + c_i h))` (mapped through
/// `U⁻¹` when `U ≠ I`) at `t_ℓ = t0 + ℓh`.
pub fn starting_procedure(
    t: &ImexGlmTableau,
    sys: &dyn PartitionedSystem,
    cfg: &IntegrationConfig,
) -> Result<ExternalStages> {
    starting_values(t, sys, cfg).map(|(x, _)| x)
}

/// The external stages together with the inner solutions `y(t_ℓ + c_i h)`
/// they were built from.
pub(crate) fn starting_values(
    t: &ImexGlmTableau,
    sys: &dyn PartitionedSystem,
    cfg: &IntegrationConfig,
) -> Result<(ExternalStages, Vec<DVector<f64>>)> {
    let (t0, _) = sys.tspan();
    let h = cfg.h;
    let shift = start_shift(t.abscissae());
    let base = t0 + shift as f64 * h;
    let targets: Vec<f64> = t.abscissae().iter().map(|&ci| base + ci * h).collect();
    let ys = inner_solutions(sys, &sys.initial_state(), t0, &targets, t.order(), h)?;
    let hl = h * t.lambda();
    let z: Vec<DVector<f64>> = ys.iter().map(|y| y - sys.g(y) * hl).collect();
    let stages = if *t.u() == DMatrix::identity(t.stages(), t.external_stages()) {
        z
    } else {
        if t.stages() != t.external_stages() {
            return Err(GlmError::Config("starting procedure needs a square U".into()));
        }
        let d = sys.dim();
        let zt = DMatrix::from_fn(t.stages(), d, |i, k| z[i][k]);
        let xt = solve_left(t.u(), &zt)?;
        (0..t.external_stages()).map(|j| xt.row(j).transpose()).collect()
    };
    Ok((
        ExternalStages {
            stages,
            t: base,
            step_index: 0,
            shift,
        },
        ys,
    ))
}

/// For each stage `i`, the previous-step stage `j` whose time `c_j − 1` lies
/// closest to `c_i`; its value seeds the Newton iteration.
pub(crate) fn predictor_map(c: &[f64]) -> Vec<usize> {
    c.iter()
        .map(|&ci| {
            let mut best = 0;
            for (j, &cj) in c.iter().enumerate() {
                if (cj - 1.0 - ci).abs() <= (c[best] - 1.0 - ci).abs() {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_examples() {
        assert_eq!(start_shift(&[0.0, 1.0]), 0);
        assert_eq!(start_shift(&[-2.0, -1.0, 0.0, 1.0]), 2);
        assert_eq!(start_shift(&[-0.5, 1.0]), 1);
    }

    #[test]
    fn predictor_picks_the_nearest_shifted_stage() {
        assert_eq!(predictor_map(&[0.0, 0.5, 1.0]), vec![2, 2, 2]);
        assert_eq!(predictor_map(&[-2.0, -1.0, 0.0, 1.0]), vec![1, 2, 3, 3]);
    }

    #[test]
    fn substep_rule() {
        assert_eq!(substeps(4, 0.01, 0.01, 0.0), 2 * 64);
        assert_eq!(substeps(2, 0.5, 0.5, 0.0), 64);
        assert_eq!(substeps(2, 0.1, 0.0, 1e9), 0);
        assert!(substeps(2, 1e-3, 1e-3, 5e4) >= 1000);
    }
}
