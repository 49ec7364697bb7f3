//! Parallel IMEX DIMSIMs of order `p = q = r = s`.
//!
//! The methods are built in the transformed coordinates where `V̄` has a single
//! nonzero row and then mapped back with the similarity `T (·) T⁻¹`.

pub mod certify;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::matkernels::{
    exp_shift_matrix, factorial, hess_matrix, laguerre_derivative, shift_matrix, similarity,
    solve_left, Abscissae, AbscissaeChoice,
};
use crate::tableau::{Family, ImexGlmTableau};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 10;

/// Reference values of the L-stable `λ` for orders 2 through 10.
const LAMBDA_REFERENCE: [f64; 9] = [
    0.633975, 1.21014, 0.872421, 1.30128, 1.80569, 1.35220, 1.73680, 1.38470, 1.69561,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsimSpec {
    pub order: usize,
    pub abscissae: AbscissaeChoice,
    #[serde(default)]
    pub lambda_override: Option<f64>,
}

impl DimsimSpec {
    pub fn new(order: usize) -> Self {
        DimsimSpec {
            order,
            abscissae: AbscissaeChoice::default_for(order),
            lambda_override: None,
        }
    }

    pub fn with_abscissae(mut self, abscissae: AbscissaeChoice) -> Self {
        self.abscissae = abscissae;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_override = Some(lambda);
        self
    }
}

fn check_order(s: usize) -> Result<()> {
    if !(MIN_ORDER..=MAX_ORDER).contains(&s) {
        return Err(GlmError::UnsupportedOrder {
            order: s,
            reason: format!("parallel IMEX DIMSIMs are available for orders {MIN_ORDER}..={MAX_ORDER}"),
        });
    }
    Ok(())
}

/// Table value of `λ` for order `s`, before polishing.
pub fn reference_lambda(s: usize) -> Result<f64> {
    check_order(s)?;
    Ok(LAMBDA_REFERENCE[s - MIN_ORDER])
}

/// Root `x` of `L'_{s+1}(x) = 0` nearest `(s+1)/λ_ref`, polished by Newton.
fn polished_root(s: usize) -> Result<f64> {
    let n = s + 1;
    let mut x = n as f64 / reference_lambda(s)?;
    for _ in 0..50 {
        let step = laguerre_derivative(n, 1, x) / laguerre_derivative(n, 2, x);
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    let residual = laguerre_derivative(n, 1, x);
    if !x.is_finite() || residual.abs() >= 1e-10 {
        return Err(GlmError::RootFinding(format!(
            "order {s}: Newton on L'_{n} ended at x = {x} with residual {residual:e}"
        )));
    }
    Ok(x)
}

/// The L-stable `λ` solving `L'_{s+1}((s+1)/λ) = 0`.
pub fn find_dimsim_lambda(s: usize) -> Result<f64> {
    let x = polished_root(s)?;
    let lambda = (s + 1) as f64 / x;
    let reference = reference_lambda(s)?;
    if (lambda - reference).abs() > 1e-4 {
        return Err(GlmError::RootFinding(format!(
            "order {s}: Newton converged to λ = {lambda}, away from the reference {reference}"
        )));
    }
    Ok(lambda)
}

/// First (and only nonzero) row of `V̄`:
/// `v_i = (−1)^{s+1} (s−i+2)/(s+1) λ^{i−1} L_{s+1}^{(s−i+2)}((s+1)/λ)`.
pub fn dimsim_vbar(s: usize, lambda: f64) -> Result<DVector<f64>> {
    if s == 0 {
        return Err(GlmError::InvalidDimension("order must be positive".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(GlmError::Config(format!("λ must be positive, got {lambda}")));
    }
    let n = s + 1;
    let x = n as f64 / lambda;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(DVector::from_fn(s, |k, _| {
        let i = k + 1;
        let m = s - i + 2;
        sign * m as f64 / n as f64 * lambda.powi(k as i32) * laguerre_derivative(n, m, x)
    }))
}

/// `T` with `T_ij = P^{(s−j+1)}(c_i)` for `P(x) = ∏(x − c_k)/s!`.
pub fn dimsim_transform(c: &Abscissae) -> Result<DMatrix<f64>> {
    let s = c.len();
    // monic coefficients, lowest degree first
    let mut poly = vec![1.0];
    for &root in c.as_slice() {
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &a) in poly.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= root * a;
        }
        poly = next;
    }
    let scale = factorial(s);
    let poly: Vec<f64> = poly.into_iter().map(|a| a / scale).collect();
    let derivative_at = |order: usize, x: f64| {
        poly.iter()
            .enumerate()
            .skip(order)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + a * factorial(k) / factorial(k - order))
    };
    let t = DMatrix::from_fn(s, s, |i, j| derivative_at(s - j, c.as_slice()[i]));
    if t.clone().lu().determinant() == 0.0 {
        return Err(GlmError::Singular("DIMSIM transform".into()));
    }
    Ok(t)
}

/// Coefficients in transformed coordinates: `(V̄, B̄, B̄̂)` with
/// `B̄ = H − V̄Kᵀ` and `B̄̂ = H − λE + V̄(λI − Kᵀ)`.
pub fn dimsim_reduced(s: usize, lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let v = dimsim_vbar(s, lambda)?;
    let mut vbar = DMatrix::zeros(s, s);
    vbar.row_mut(0).copy_from(&v.transpose());
    let kt = shift_matrix(s)?.transpose();
    let h = hess_matrix(s)?;
    let b = &h - &vbar * &kt;
    let b_hat = &h - exp_shift_matrix(s)? * lambda + &vbar * (DMatrix::identity(s, s) * lambda - &kt);
    Ok((vbar, b, b_hat))
}

/// Construct the parallel IMEX DIMSIM described by `spec`.
pub fn build_parallel_imex_dimsim(spec: &DimsimSpec) -> Result<ImexGlmTableau> {
    let s = spec.order;
    check_order(s)?;
    let c = spec.abscissae.abscissae(s)?;
    let lambda = match spec.lambda_override {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(GlmError::Config(format!("λ override must be positive, got {l}"))),
        None => find_dimsim_lambda(s)?,
    };
    let t = dimsim_transform(&c)?;
    let (vbar, b, b_hat) = dimsim_reduced(s, lambda)?;
    let v = similarity(&t, &vbar)?;
    let b = similarity(&t, &b)?;
    let b_hat = similarity(&t, &b_hat)?;
    ImexGlmTableau::parallel(Family::Dimsim, &c, lambda, DMatrix::identity(s, s), b, b_hat, v)
}

/// `T⁻¹ X T`, mapping a full-coordinate matrix back to transformed coordinates.
pub fn to_reduced(c: &Abscissae, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = dimsim_transform(c)?;
    solve_left(&t, &(x * &t))
}
