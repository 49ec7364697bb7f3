use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::integrator::{CsrMatrix, Jacobian, PartitionedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspConfig {
    pub n: usize,
    pub eps: f64,
    pub sigma: f64,
    pub tspan: (f64, f64),
}

impl Default for CuspConfig {
    fn default() -> Self {
        CuspConfig {
            n: 32,
            eps: 1e-4,
            sigma: 1.0 / 144.0,
            tspan: (0.0, 1.1),
        }
    }
}

/// Periodic semi-discretization of the CUSP catastrophe model on `[0, 1]`.
///
/// State layout `[y₁..y_N, a₁..a_N, b₁..b_N]`. The stiff part is the
/// diffusion together with the `1/ε` cubic; the nonstiff part holds the
/// remaining reaction terms.
#[derive(Debug, Clone)]
pub struct Cusp {
    cfg: CuspConfig,
    /// `σ/Δx²`
    diffusion: f64,
}

impl Cusp {
    pub fn new(cfg: CuspConfig) -> Result<Self> {
        if cfg.n < 3 || !(cfg.eps > 0.0) || !(cfg.sigma > 0.0) || !(cfg.tspan.1 > cfg.tspan.0) {
            return Err(GlmError::Config(format!("invalid CUSP configuration {cfg:?}")));
        }
        let dx = 1.0 / cfg.n as f64;
        let diffusion = cfg.sigma / (dx * dx);
        Ok(Cusp { cfg, diffusion })
    }

    pub fn config(&self) -> &CuspConfig {
        &self.cfg
    }

    fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let left = u[(i + n - 1) % n];
            let right = u[(i + 1) % n];
            out[i] += self.diffusion * (left - 2.0 * u[i] + right);
        }
    }
}

fn v_of(y: f64) -> f64 {
    let u = (y - 0.7) * (y - 1.3);
    u / (u + 0.1)
}

impl PartitionedSystem for Cusp {
    fn dim(&self) -> usize {
        3 * self.cfg.n
    }

    fn f(&self, state: &DVector<f64>) -> DVector<f64> {
        let n = self.cfg.n;
        let s = state.as_slice();
        let (y, a, b) = (&s[..n], &s[n..2 * n], &s[2 * n..]);
        let mut out = DVector::zeros(3 * n);
        for i in 0..n {
            let v = v_of(y[i]);
            out[n + i] = b[i] + 0.07 * v;
            out[2 * n + i] = b[i] * (1.0 - a[i] * a[i]) - a[i] - 0.4 * y[i] + 0.035 * v;
        }
        out
    }

    fn g(&self, state: &DVector<f64>) -> DVector<f64> {
        let n = self.cfg.n;
        let s = state.as_slice();
        let mut out = DVector::zeros(3 * n);
        {
            let o = out.as_mut_slice();
            for block in 0..3 {
                self.laplacian(&s[block * n..(block + 1) * n], &mut o[block * n..(block + 1) * n]);
            }
            for i in 0..n {
                let (y, a, b) = (s[i], s[n + i], s[2 * n + i]);
                o[i] -= (y * y * y + a * y + b) / self.cfg.eps;
            }
        }
        out
    }

    fn g_jacobian(&self, state: &DVector<f64>) -> Jacobian {
        let n = self.cfg.n;
        let mut t = Vec::with_capacity(3 * n * 3 + 3 * n);
        for block in 0..3 {
            let off = block * n;
            for i in 0..n {
                t.push((off + i, off + i, -2.0 * self.diffusion));
                t.push((off + i, off + (i + n - 1) % n, self.diffusion));
                t.push((off + i, off + (i + 1) % n, self.diffusion));
            }
        }
        let inv = 1.0 / self.cfg.eps;
        for i in 0..n {
            let (y, a) = (state[i], state[n + i]);
            t.push((i, i, -(3.0 * y * y + a) * inv));
            t.push((i, n + i, -y * inv));
            t.push((i, 2 * n + i, -inv));
        }
        Jacobian::Sparse(CsrMatrix::from_triplets(3 * n, 3 * n, &t).expect("indices in range"))
    }

    fn tspan(&self) -> (f64, f64) {
        self.cfg.tspan
    }

    fn initial_state(&self) -> DVector<f64> {
        let n = self.cfg.n;
        let mut y0 = DVector::zeros(3 * n);
        for i in 0..n {
            let phase = 2.0 * std::f64::consts::PI * (i + 1) as f64 / n as f64;
            y0[n + i] = -2.0 * phase.cos();
            y0[2 * n + i] = 2.0 * phase.sin();
        }
        y0
    }
}
