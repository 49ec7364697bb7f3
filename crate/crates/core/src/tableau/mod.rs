//! The IMEX GLM coefficient set, its external-stage Taylor weights and the
//! matrix form of the order conditions.

mod io;

pub use io::{read_tableau, read_tableau_file, write_tableau, write_tableau_file};

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::matkernels::{
    exp_shift_matrix, max_abs, scaled_vandermonde, shift_matrix, solve_left, solve_right, Abscissae,
};

/// Where a tableau came from. Constructed families carry the parallel structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dimsim,
    Ensemble,
    External,
}

impl Family {
    pub fn is_constructed(self) -> bool {
        !matches!(self, Family::External)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Dimsim => "dimsim",
            Family::Ensemble => "ensemble",
            Family::External => "external",
        })
    }
}

/// Full coefficient set of an implicit-explicit general linear method
///
/// ```text
///   c | A  Â  U
///   --+---------
///     | B  B̂  V
/// ```
///
/// together with the Taylor weights `W`, `Ŵ` describing what the external
/// stages approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImexGlmTableau {
    pub(crate) s: usize,
    pub(crate) r: usize,
    pub(crate) p: usize,
    pub(crate) q: usize,
    pub(crate) c: Vec<f64>,
    pub(crate) a: DMatrix<f64>,
    pub(crate) a_hat: DMatrix<f64>,
    pub(crate) u: DMatrix<f64>,
    pub(crate) b: DMatrix<f64>,
    pub(crate) b_hat: DMatrix<f64>,
    pub(crate) v: DMatrix<f64>,
    pub(crate) lambda: f64,
    pub(crate) w: DMatrix<f64>,
    pub(crate) w_hat: DMatrix<f64>,
    pub(crate) family: Family,
}

/// Raw coefficient blocks for [`ImexGlmTableau::from_parts`].
#[derive(Debug, Clone)]
pub struct TableauParts {
    pub p: usize,
    pub q: usize,
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub lambda: f64,
    /// Recomputed from the internal stage conditions when absent.
    pub w: Option<DMatrix<f64>>,
    pub w_hat: Option<DMatrix<f64>>,
    pub family: Family,
}

impl ImexGlmTableau {
    /// Parallel tableau `A = 0`, `Â = λI` with `p = q = r = s` and Taylor
    /// weights from [`taylor_weights_parallel`].
    pub(crate) fn parallel(
        family: Family,
        c: &Abscissae,
        lambda: f64,
        u: DMatrix<f64>,
        b: DMatrix<f64>,
        b_hat: DMatrix<f64>,
        v: DMatrix<f64>,
    ) -> Result<Self> {
        let s = c.len();
        let (w, w_hat) = taylor_weights_parallel(c, lambda, s)?;
        let t = ImexGlmTableau {
            s,
            r: s,
            p: s,
            q: s,
            c: c.as_slice().to_vec(),
            a: DMatrix::zeros(s, s),
            a_hat: DMatrix::identity(s, s) * lambda,
            u,
            b,
            b_hat,
            v,
            lambda,
            w,
            w_hat,
            family,
        };
        t.validate()?;
        Ok(t)
    }

    /// Assemble and validate a tableau from its blocks.
    pub fn from_parts(parts: TableauParts) -> Result<Self> {
        let s = parts.c.len();
        let r = parts.v.nrows();
        let (w, w_hat) = match (parts.w, parts.w_hat) {
            (Some(w), Some(w_hat)) => (w, w_hat),
            (None, None) => recompute_taylor_weights(&parts.c, &parts.a, &parts.a_hat, &parts.u, parts.p, parts.q)?,
            _ => {
                return Err(GlmError::Schema(
                    "\"W\" and \"What\" must be given together or not at all".into(),
                ))
            }
        };
        let t = ImexGlmTableau {
            s,
            r,
            p: parts.p,
            q: parts.q,
            c: parts.c,
            a: parts.a,
            a_hat: parts.a_hat,
            u: parts.u,
            b: parts.b,
            b_hat: parts.b_hat,
            v: parts.v,
            lambda: parts.lambda,
            w,
            w_hat,
            family: parts.family,
        };
        t.validate()?;
        Ok(t)
    }

    /// The coefficient blocks, for editing and reassembly.
    pub fn to_parts(&self) -> TableauParts {
        TableauParts {
            p: self.p,
            q: self.q,
            c: self.c.clone(),
            a: self.a.clone(),
            a_hat: self.a_hat.clone(),
            u: self.u.clone(),
            b: self.b.clone(),
            b_hat: self.b_hat.clone(),
            v: self.v.clone(),
            lambda: self.lambda,
            w: Some(self.w.clone()),
            w_hat: Some(self.w_hat.clone()),
            family: self.family,
        }
    }

    pub fn stages(&self) -> usize {
        self.s
    }
    pub fn external_stages(&self) -> usize {
        self.r
    }
    pub fn order(&self) -> usize {
        self.p
    }
    pub fn stage_order(&self) -> usize {
        self.q
    }
    pub fn abscissae(&self) -> &[f64] {
        &self.c
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn family(&self) -> Family {
        self.family
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn w_hat(&self) -> &DMatrix<f64> {
        &self.w_hat
    }

    /// `A = 0` and `Â = λI` exactly, so all stages decouple.
    pub fn is_parallel(&self) -> bool {
        self.a.iter().all(|&x| x == 0.0) && self.a_hat == DMatrix::identity(self.s, self.s) * self.lambda
    }

    /// Largest coefficient magnitude over `B`, `B̂` and `V`.
    pub fn max_coefficient(&self) -> f64 {
        max_abs(&self.b).max(max_abs(&self.b_hat)).max(max_abs(&self.v))
    }

    /// Coefficient-scaled acceptance threshold for the order-condition residual.
    pub fn order_tolerance(&self) -> f64 {
        let scale = self
            .max_coefficient()
            .max(max_abs(&self.a))
            .max(max_abs(&self.a_hat))
            .max(max_abs(&self.u));
        1e-9 * (1.0 + scale)
    }

    /// Replace one coefficient block entry; used to inject faults in tests.
    pub fn with_b_entry(mut self, i: usize, j: usize, value: f64) -> Self {
        self.b[(i, j)] = value;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let (s, r) = (self.s, self.r);
        if s == 0 || r == 0 {
            return Err(GlmError::Invariant("stage counts must be positive".into()));
        }
        let shapes: [(&str, &DMatrix<f64>, usize, usize); 8] = [
            ("A", &self.a, s, s),
            ("Ahat", &self.a_hat, s, s),
            ("U", &self.u, s, r),
            ("B", &self.b, r, s),
            ("Bhat", &self.b_hat, r, s),
            ("V", &self.v, r, r),
            ("W", &self.w, r, self.p + 1),
            ("What", &self.w_hat, r, self.p + 1),
        ];
        for (name, m, rows, cols) in shapes {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(GlmError::Invariant(format!(
                    "block {name} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(GlmError::Invariant(format!("block {name} has non-finite entries")));
            }
        }
        if self.c.iter().any(|x| !x.is_finite()) || !self.lambda.is_finite() {
            return Err(GlmError::Invariant("non-finite abscissae or lambda".into()));
        }
        if self.q > self.p {
            return Err(GlmError::Invariant(format!(
                "stage order {} exceeds order {}",
                self.q, self.p
            )));
        }
        if self.w.column(0) != self.w_hat.column(0) {
            return Err(GlmError::Invariant(
                "first columns of W and What differ (preconsistency weights must match)".into(),
            ));
        }
        if self.family.is_constructed() {
            if !self.is_parallel() {
                return Err(GlmError::Invariant(format!(
                    "parallel structure violated: family {} requires A = 0 and Ahat = lambda*I",
                    self.family
                )));
            }
            if !(self.p == s && self.q == s && r == s) {
                return Err(GlmError::Invariant(format!(
                    "family {} requires p = q = r = s, got p={} q={} r={} s={}",
                    self.family, self.p, self.q, r, s
                )));
            }
            Abscissae::new(self.c.clone())
                .map_err(|_| GlmError::Invariant("constructed families need distinct abscissae".into()))?;
            if self.u != DMatrix::identity(s, s) {
                return Err(GlmError::Invariant(format!("family {} requires U = I", self.family)));
            }
            if self.family == Family::Ensemble && self.v != DMatrix::identity(s, s) {
                return Err(GlmError::Invariant("family ensemble requires V = I".into()));
            }
        }
        Ok(())
    }
}

/// External-stage Taylor weights of a parallel method with `U = I`:
/// `W = C_{p+1}` and `Ŵ = C_{p+1} − λ C_{p+1} K_{p+1}`.
pub fn taylor_weights_parallel(c: &Abscissae, lambda: f64, p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let w = scaled_vandermonde(c, p + 1)?;
    let w_hat = &w - (&w * shift_matrix(p + 1)?) * lambda;
    Ok((w, w_hat))
}

/// Internal stage conditions solved for the weights:
/// `U W_{:,0:q} = C_{q+1} − A C_{q+1} K_{q+1}` (and likewise with `Â`).
fn recompute_taylor_weights(
    c: &[f64],
    a: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    u: &DMatrix<f64>,
    p: usize,
    q: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p != q || u.nrows() != u.ncols() {
        return Err(GlmError::Schema(
            "\"W\"/\"What\" can only be recomputed when p = q and U is square; supply them explicitly".into(),
        ));
    }
    let s = c.len();
    if a.shape() != (s, s) || a_hat.shape() != (s, s) || u.nrows() != s {
        return Err(GlmError::Invariant("A, Ahat and U must be s x s to recompute W".into()));
    }
    // plain Vandermonde: c need not be distinct for external methods
    let cq = DMatrix::from_fn(s, q + 1, |i, j| c[i].powi(j as i32) / crate::matkernels::factorial(j));
    let k = shift_matrix(q + 1)?;
    let w = solve_left(u, &(&cq - a * &cq * &k))?;
    let w_hat = solve_left(u, &(&cq - a_hat * &cq * &k))?;
    Ok((w, w_hat))
}

/// Residuals of the four matrix order conditions. All blocks vanish for a
/// method of order `p` and stage order `q`.
#[derive(Debug, Clone)]
pub struct OrderConditionResidual {
    pub internal_explicit: DMatrix<f64>,
    pub internal_implicit: DMatrix<f64>,
    pub external_explicit: DMatrix<f64>,
    pub external_implicit: DMatrix<f64>,
    pub max_abs: f64,
}

impl OrderConditionResidual {
    /// `(name, max |entry|)` for each block.
    pub fn blocks(&self) -> [(&'static str, f64); 4] {
        [
            ("internal_explicit", max_abs(&self.internal_explicit)),
            ("internal_implicit", max_abs(&self.internal_implicit)),
            ("external_explicit", max_abs(&self.external_explicit)),
            ("external_implicit", max_abs(&self.external_implicit)),
        ]
    }

    /// The block holding the largest residual.
    pub fn worst_block(&self) -> (&'static str, f64) {
        self.blocks()
            .into_iter()
            .fold(("internal_explicit", -1.0), |acc, b| if b.1 > acc.1 { b } else { acc })
    }
}

/// Evaluate the compact order conditions exactly as written:
///
/// ```text
/// C_{q+1} − A C_{q+1} K − U W_{:,0:q}
/// C_{q+1} − Â C_{q+1} K − U Ŵ_{:,0:q}
/// W E − B C_{p+1} K − V W
/// Ŵ E − B̂ C_{p+1} K − V Ŵ
/// ```
pub fn verify_order_conditions(t: &ImexGlmTableau) -> Result<OrderConditionResidual> {
    t.validate()
        .map_err(|e| GlmError::DimensionMismatch(format!("inconsistent tableau: {e}")))?;
    let (p, q, s) = (t.p, t.q, t.s);
    let vand = |n: usize| {
        DMatrix::from_fn(s, n, |i, j| t.c[i].powi(j as i32) / crate::matkernels::factorial(j))
    };
    let cq = vand(q + 1);
    let kq = shift_matrix(q + 1)?;
    let cp = vand(p + 1);
    let kp = shift_matrix(p + 1)?;
    let ep = exp_shift_matrix(p + 1)?;

    let w_q = t.w.columns(0, q + 1);
    let w_hat_q = t.w_hat.columns(0, q + 1);
    let internal_explicit = &cq - &t.a * &cq * &kq - &t.u * w_q;
    let internal_implicit = &cq - &t.a_hat * &cq * &kq - &t.u * w_hat_q;
    let ck = &cp * &kp;
    let external_explicit = &t.w * &ep - &t.b * &ck - &t.v * &t.w;
    let external_implicit = &t.w_hat * &ep - &t.b_hat * &ck - &t.v * &t.w_hat;

    let max = [&internal_explicit, &internal_implicit, &external_explicit, &external_implicit]
        .iter()
        .map(|m| max_abs(m))
        .fold(0.0, f64::max);
    Ok(OrderConditionResidual {
        internal_explicit,
        internal_implicit,
        external_explicit,
        external_implicit,
        max_abs: max,
    })
}

/// `λ C_s E_s C_s⁻¹`, the coupling term between the explicit and implicit weights.
fn coupling(c: &Abscissae, lambda: f64) -> Result<DMatrix<f64>> {
    let s = c.len();
    let cs = scaled_vandermonde(c, s)?;
    let ce = &cs * exp_shift_matrix(s)?;
    Ok(solve_right(&ce, &cs)? * lambda)
}

fn check_square_pair(x: &DMatrix<f64>, v: &DMatrix<f64>, s: usize) -> Result<()> {
    if x.shape() != (s, s) || v.shape() != (s, s) {
        return Err(GlmError::DimensionMismatch(format!(
            "expected {s}x{s} weights and V, got {:?} and {:?}",
            x.shape(),
            v.shape()
        )));
    }
    Ok(())
}

/// Explicit weights uniquely determined by the implicit base method:
/// `B = B̂ + λ C_s E_s C_s⁻¹ − λ V`.
pub fn explicit_from_implicit(
    b_hat: &DMatrix<f64>,
    v: &DMatrix<f64>,
    c: &Abscissae,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_square_pair(b_hat, v, c.len())?;
    Ok(b_hat + coupling(c, lambda)? - v * lambda)
}

/// Implicit weights determined by the explicit base method:
/// `B̂ = B − λ C_s E_s C_s⁻¹ + λ V`.
pub fn implicit_from_explicit(
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    c: &Abscissae,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_square_pair(b, v, c.len())?;
    Ok(b - coupling(c, lambda)? + v * lambda)
}
