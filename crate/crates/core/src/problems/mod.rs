//! Benchmark systems in partitioned form.

mod allen_cahn;
mod cusp;
mod linear;

pub use allen_cahn::{AllenCahn, AllenCahnConfig};
pub use cusp::{Cusp, CuspConfig};
pub use linear::LinearTest;

use nalgebra::DVector;

use crate::integrator::PartitionedSystem;

/// Discrete ℓ₂ distance over the first `sys.solution_len()` components.
pub fn solution_error(sys: &dyn PartitionedSystem, y: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    let n = sys.solution_len();
    (y.rows(0, n) - reference.rows(0, n)).norm()
}

/// Central-difference Jacobian column check used by the problem tests.
#[cfg(test)]
pub(crate) fn max_jacobian_mismatch(sys: &dyn PartitionedSystem, y: &DVector<f64>) -> f64 {
    let jac = sys.g_jacobian(y).to_dense();
    let mut worst: f64 = 0.0;
    for k in 0..sys.dim() {
        let step = 1e-6 * (1.0 + y[k].abs());
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[k] += step;
        ym[k] -= step;
        let col = (sys.g(&yp) - sys.g(&ym)) / (2.0 * step);
        let scale = col.amax().max(jac.column(k).amax()).max(1.0);
        worst = worst.max((col - jac.column(k)).amax() / scale);
    }
    worst
}
