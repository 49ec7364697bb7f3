use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::integrator::{CsrMatrix, Jacobian, PartitionedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllenCahnConfig {
    /// Grid points per direction, boundary included.
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub tspan: (f64, f64),
}

impl Default for AllenCahnConfig {
    fn default() -> Self {
        AllenCahnConfig {
            n: 32,
            alpha: 0.1,
            beta: 3.0,
            tspan: (0.0, 1.0),
        }
    }
}

/// `u_t = αΔu + β(u − u³) + s` on the unit square with Dirichlet data and a
/// source chosen so that `2 + sin(2π(x−t))cos(3π(y−t))` solves the
/// semi-discrete system exactly.
///
/// Unknowns are the interior nodes of a uniform grid followed by the time
/// variable `τ` (`τ' = 1`, carried in `f`). The diffusion and the boundary
/// forcing form `g`; reaction and source form `f`.
#[derive(Debug, Clone)]
pub struct AllenCahn {
    cfg: AllenCahnConfig,
    m: usize,
    dx: f64,
}

pub fn manufactured(t: f64, x: f64, y: f64) -> f64 {
    2.0 + (2.0 * PI * (x - t)).sin() * (3.0 * PI * (y - t)).cos()
}

fn manufactured_dt(t: f64, x: f64, y: f64) -> f64 {
    let (a, b) = (2.0 * PI * (x - t), 3.0 * PI * (y - t));
    -2.0 * PI * a.cos() * b.cos() + 3.0 * PI * a.sin() * b.sin()
}

impl AllenCahn {
    pub fn new(cfg: AllenCahnConfig) -> Result<Self> {
        if cfg.n < 4 || !(cfg.alpha > 0.0) || !(cfg.beta > 0.0) || !(cfg.tspan.1 > cfg.tspan.0) {
            return Err(GlmError::Config(format!("invalid Allen-Cahn configuration {cfg:?}")));
        }
        Ok(AllenCahn {
            m: cfg.n - 2,
            dx: 1.0 / (cfg.n - 1) as f64,
            cfg,
        })
    }

    pub fn config(&self) -> &AllenCahnConfig {
        &self.cfg
    }

    /// Interior unknowns per direction.
    pub fn interior(&self) -> usize {
        self.m
    }

    fn coord(&self, k: usize) -> f64 {
        k as f64 * self.dx
    }

    /// Visit the four neighbours of interior node `(i, j)` (grid indices
    /// 1..=m): `Ok(index)` for interior ones, `Err((x, y))` on the boundary.
    fn neighbours(&self, i: usize, j: usize, mut visit: impl FnMut(std::result::Result<usize, (f64, f64)>)) {
        let m = self.m;
        for (ni, nj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            if ni == 0 || nj == 0 || ni == m + 1 || nj == m + 1 {
                visit(Err((self.coord(ni), self.coord(nj))));
            } else {
                visit(Ok((ni - 1) * m + (nj - 1)));
            }
        }
    }

    fn inv_dx2(&self) -> f64 {
        1.0 / (self.dx * self.dx)
    }

    /// The exact solution is `2 + X(x)Y(y)`. Tabulate the sines and cosines
    /// of both factors along the grid lines at time `t`, boundary included.
    fn factors(&self, t: f64) -> Factors {
        let n = self.m + 2;
        let mut f = Factors {
            sx: Vec::with_capacity(n),
            cx: Vec::with_capacity(n),
            cy: Vec::with_capacity(n),
            sy: Vec::with_capacity(n),
        };
        for k in 0..n {
            let (a, b) = (2.0 * PI * (self.coord(k) - t), 3.0 * PI * (self.coord(k) - t));
            f.sx.push(a.sin());
            f.cx.push(a.cos());
            f.cy.push(b.cos());
            f.sy.push(b.sin());
        }
        f
    }
}

struct Factors {
    sx: Vec<f64>,
    cx: Vec<f64>,
    cy: Vec<f64>,
    sy: Vec<f64>,
}

impl PartitionedSystem for AllenCahn {
    fn dim(&self) -> usize {
        self.m * self.m + 1
    }

    fn solution_len(&self) -> usize {
        self.m * self.m
    }

    fn f(&self, state: &DVector<f64>) -> DVector<f64> {
        let (m, alpha, beta) = (self.m, self.cfg.alpha, self.cfg.beta);
        let tau = state[m * m];
        let inv = self.inv_dx2();
        let Factors { sx, cx, cy, sy } = self.factors(tau);
        let mut out = DVector::zeros(m * m + 1);
        for i in 1..=m {
            let d2x = (sx[i - 1] + sx[i + 1] - 2.0 * sx[i]) * inv;
            for j in 1..=m {
                let k = (i - 1) * m + (j - 1);
                let ue = 2.0 + sx[i] * cy[j];
                let ue_t = -2.0 * PI * cx[i] * cy[j] + 3.0 * PI * sx[i] * sy[j];
                // Δ_h of the exact solution, one direction at a time
                let lap = d2x * cy[j] + sx[i] * (cy[j - 1] + cy[j + 1] - 2.0 * cy[j]) * inv;
                let source = ue_t - alpha * lap - beta * (ue - ue * ue * ue);
                let u = state[k];
                out[k] = beta * (u - u * u * u) + source;
            }
        }
        out[m * m] = 1.0;
        out
    }

    fn g(&self, state: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let tau = state[m * m];
        let scale = self.cfg.alpha * self.inv_dx2();
        let mut out = DVector::zeros(m * m + 1);
        for i in 1..=m {
            for j in 1..=m {
                let k = (i - 1) * m + (j - 1);
                let mut acc = -4.0 * state[k];
                self.neighbours(i, j, |nb| {
                    acc += match nb {
                        Ok(idx) => state[idx],
                        Err((x, y)) => manufactured(tau, x, y),
                    }
                });
                out[k] = scale * acc;
            }
        }
        out
    }

    fn g_jacobian(&self, state: &DVector<f64>) -> Jacobian {
        let m = self.m;
        let d = m * m + 1;
        let tau = state[m * m];
        let scale = self.cfg.alpha * self.inv_dx2();
        let mut t = Vec::with_capacity(5 * m * m + 4 * m);
        for i in 1..=m {
            for j in 1..=m {
                let k = (i - 1) * m + (j - 1);
                t.push((k, k, -4.0 * scale));
                let mut forcing = 0.0;
                self.neighbours(i, j, |nb| match nb {
                    Ok(idx) => t.push((k, idx, scale)),
                    Err((x, y)) => forcing += manufactured_dt(tau, x, y),
                });
                if forcing != 0.0 || i == 1 || j == 1 || i == m || j == m {
                    t.push((k, d - 1, scale * forcing));
                }
            }
        }
        Jacobian::Sparse(CsrMatrix::from_triplets(d, d, &t).expect("indices in range"))
    }

    fn tspan(&self) -> (f64, f64) {
        self.cfg.tspan
    }

    fn initial_state(&self) -> DVector<f64> {
        self.exact(self.cfg.tspan.0).expect("closed form")
    }

    fn exact(&self, t: f64) -> Option<DVector<f64>> {
        let m = self.m;
        let mut out = DVector::zeros(m * m + 1);
        for i in 1..=m {
            for j in 1..=m {
                out[(i - 1) * m + (j - 1)] = manufactured(t, self.coord(i), self.coord(j));
            }
        }
        out[m * m] = t;
        Some(out)
    }
}
