use nalgebra::{DMatrix, DVector};

use crate::integrator::{Jacobian, PartitionedSystem};
use crate::stability::C64;

/// `y' = ξy + ξ̂y` with `ξy` nonstiff and `ξ̂y` stiff.
///
/// Real coefficients give a scalar system; otherwise `y = p + iq` is carried
/// as the real pair `(p, q)`.
#[derive(Debug, Clone)]
pub struct LinearTest {
    xi: C64,
    xi_hat: C64,
    y0: C64,
    tspan: (f64, f64),
    complex: bool,
}

fn real_block(z: C64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[z.re, -z.im, z.im, z.re])
}

impl LinearTest {
    pub fn new(xi: impl Into<C64>, xi_hat: impl Into<C64>) -> Self {
        let (xi, xi_hat) = (xi.into(), xi_hat.into());
        LinearTest {
            xi,
            xi_hat,
            y0: C64::new(1.0, 0.0),
            tspan: (0.0, 1.0),
            complex: xi.im != 0.0 || xi_hat.im != 0.0,
        }
    }

    pub fn with_initial(mut self, y0: impl Into<C64>) -> Self {
        self.y0 = y0.into();
        if self.y0.im != 0.0 {
            self.complex = true;
        }
        self
    }

    pub fn with_tspan(mut self, t0: f64, tf: f64) -> Self {
        self.tspan = (t0, tf);
        self
    }

    pub fn xi(&self) -> C64 {
        self.xi
    }

    pub fn xi_hat(&self) -> C64 {
        self.xi_hat
    }

    fn apply(&self, z: C64, y: &DVector<f64>) -> DVector<f64> {
        if self.complex {
            &real_block(z) * y
        } else {
            y * z.re
        }
    }

    fn pack(&self, z: C64) -> DVector<f64> {
        if self.complex {
            DVector::from_vec(vec![z.re, z.im])
        } else {
            DVector::from_element(1, z.re)
        }
    }
}

impl PartitionedSystem for LinearTest {
    fn dim(&self) -> usize {
        if self.complex {
            2
        } else {
            1
        }
    }

    fn f(&self, y: &DVector<f64>) -> DVector<f64> {
        self.apply(self.xi, y)
    }

    fn g(&self, y: &DVector<f64>) -> DVector<f64> {
        self.apply(self.xi_hat, y)
    }

    fn g_jacobian(&self, _y: &DVector<f64>) -> Jacobian {
        Jacobian::Dense(if self.complex {
            real_block(self.xi_hat)
        } else {
            DMatrix::from_element(1, 1, self.xi_hat.re)
        })
    }

    fn tspan(&self) -> (f64, f64) {
        self.tspan
    }

    fn initial_state(&self) -> DVector<f64> {
        self.pack(self.y0)
    }

    fn exact(&self, t: f64) -> Option<DVector<f64>> {
        let growth = ((self.xi + self.xi_hat) * (t - self.tspan.0)).exp();
        Some(self.pack(growth * self.y0))
    }
}
