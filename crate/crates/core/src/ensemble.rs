//! Parallel ensemble IMEX Euler methods: `s` independent IMEX Euler stages
//! combined through `B = C_s Φ_s C_s⁻¹` and `B̂ = C_s Φ_s (I − λK_s) C_s⁻¹`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::matkernels::{phi1_matrix, scaled_vandermonde, shift_matrix, solve_right, Abscissae, AbscissaeChoice};
use crate::tableau::{Family, ImexGlmTableau};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub order: usize,
    pub abscissae: AbscissaeChoice,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

impl EnsembleSpec {
    pub fn new(order: usize) -> Self {
        EnsembleSpec {
            order,
            abscissae: AbscissaeChoice::default_for(order),
            lambda: 1.0,
        }
    }

    pub fn with_abscissae(mut self, abscissae: AbscissaeChoice) -> Self {
        self.abscissae = abscissae;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// `(B, B̂)` for the given nodes.
pub fn ensemble_weights(c: &Abscissae, lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = c.len();
    let cs = scaled_vandermonde(c, s)?;
    let cphi = &cs * phi1_matrix(s)?;
    let b = solve_right(&cphi, &cs)?;
    let damped = &cphi * (DMatrix::identity(s, s) - shift_matrix(s)? * lambda);
    let b_hat = solve_right(&damped, &cs)?;
    Ok((b, b_hat))
}

pub fn build_parallel_ensemble(spec: &EnsembleSpec) -> Result<ImexGlmTableau> {
    let s = spec.order;
    if s == 0 {
        return Err(GlmError::UnsupportedOrder {
            order: 0,
            reason: "ensemble methods need at least one stage".into(),
        });
    }
    if !spec.lambda.is_finite() {
        return Err(GlmError::Config(format!("λ must be finite, got {}", spec.lambda)));
    }
    let c = spec.abscissae.abscissae(s)?;
    let (b, b_hat) = ensemble_weights(&c, spec.lambda)?;
    let id = DMatrix::identity(s, s);
    ImexGlmTableau::parallel(Family::Ensemble, &c, spec.lambda, id.clone(), b, b_hat, id)
}

/// Largest `|entry|` over `B` and `B̂` with `λ = 1`.
pub fn ensemble_max_coefficient(s: usize, abscissae: &AbscissaeChoice) -> Result<f64> {
    let t = build_parallel_ensemble(&EnsembleSpec::new(s).with_abscissae(abscissae.clone()))?;
    Ok(crate::matkernels::max_abs(t.b()).max(crate::matkernels::max_abs(t.b_hat())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernels::{max_abs, solve_left};
    use crate::tableau::verify_order_conditions;

    fn custom(c: &[f64]) -> AbscissaeChoice {
        AbscissaeChoice::Custom(c.to_vec())
    }

    #[test]
    fn printed_low_order_rows() {
        let t = build_parallel_ensemble(&EnsembleSpec::new(3).with_abscissae(custom(&[0.0, 0.5, 1.0]))).unwrap();
        let b1: Vec<f64> = t.b().row(0).iter().copied().collect();
        for (x, y) in b1.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in t.b_hat().row(2).iter().zip([-11.0 / 6.0, 14.0 / 3.0, -11.0 / 6.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        let t = build_parallel_ensemble(&EnsembleSpec::new(4).with_abscissae(custom(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]))).unwrap();
        for (x, y) in t.b().row(3).iter().zip([-25.0, 93.0, -123.0, 63.0]) {
            assert!((x - y / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn order_one_is_imex_euler() {
        let t = build_parallel_ensemble(&EnsembleSpec::new(1)).unwrap();
        assert_eq!(t.b()[(0, 0)], 1.0);
        assert_eq!(t.b_hat()[(0, 0)], 1.0);
    }

    #[test]
    fn explicit_weights_ignore_lambda() {
        for s in [2, 5, 8] {
            let base = build_parallel_ensemble(&EnsembleSpec::new(s).with_lambda(0.0)).unwrap();
            for lambda in [0.5, 1.0] {
                let t = build_parallel_ensemble(&EnsembleSpec::new(s).with_lambda(lambda)).unwrap();
                assert_eq!(t.b(), base.b());
            }
        }
    }

    #[test]
    fn triangularizes_under_vandermonde() {
        for s in 2..=8 {
            let spec = EnsembleSpec::new(s);
            let c = spec.abscissae.abscissae(s).unwrap();
            let t = build_parallel_ensemble(&spec).unwrap();
            let cs = scaled_vandermonde(&c, s).unwrap();
            let phi = phi1_matrix(s).unwrap();
            let tb = solve_left(&cs, &(t.b() * &cs)).unwrap();
            let tbh = solve_left(&cs, &(t.b_hat() * &cs)).unwrap();
            let damped = &phi * (DMatrix::identity(s, s) - shift_matrix(s).unwrap());
            assert!(max_abs(&(tb - phi)) < 1e-10, "s={s}");
            assert!(max_abs(&(tbh - damped)) < 1e-10, "s={s}");
        }
    }

    #[test]
    fn rows_of_b_sum_to_one_and_conditions_hold() {
        for s in 1..=10 {
            for choice in [AbscissaeChoice::UnitInterval, AbscissaeChoice::IntegerTail] {
                let t = build_parallel_ensemble(&EnsembleSpec::new(s).with_abscissae(choice.clone())).unwrap();
                let res = verify_order_conditions(&t).unwrap();
                assert!(res.max_abs <= t.order_tolerance(), "s={s} {choice:?}: {}", res.max_abs);
                for i in 0..s {
                    assert!((t.b().row(i).sum() - 1.0).abs() < 1e-9 * (1.0 + max_abs(t.b())));
                }
            }
        }
    }

    #[test]
    fn coefficient_growth_examples() {
        let unit4 = ensemble_max_coefficient(4, &AbscissaeChoice::UnitInterval).unwrap();
        assert!((unit4 - 29.62).abs() <= 0.01 * 29.62, "{unit4}");
        let int8 = ensemble_max_coefficient(8, &AbscissaeChoice::IntegerTail).unwrap();
        assert!((int8 - 47.97).abs() <= 0.01 * 47.97, "{int8}");
        for choice in [AbscissaeChoice::UnitInterval, AbscissaeChoice::IntegerTail] {
            assert!((ensemble_max_coefficient(2, &choice).unwrap() - 1.5).abs() < 1e-12);
        }
    }
}
