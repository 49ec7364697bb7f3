use nalgebra::{DMatrix, DVector};
use parglm_core::integrator::{ending_coefficients, ending_procedure, solve_stage, start_shift, ExternalStages};
use parglm_core::problems::solution_error;
use parglm_core::stability::stability_matrix;
use parglm_core::*;

fn ensemble(order: usize) -> ImexGlmTableau {
    build_parallel_ensemble(&EnsembleSpec::new(order)).unwrap()
}

fn dimsim(order: usize) -> ImexGlmTableau {
    build_parallel_imex_dimsim(&DimsimSpec::new(order)).unwrap()
}

fn slope(hs: &[f64], errs: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn explicit_stage_needs_no_iterations() {
    let sys = LinearTest::new(-1.0, -5.0);
    let rhs = DVector::from_element(1, 0.7);
    let sol = solve_stage(&sys, &rhs, 0.0, &IntegrationConfig::new(0.1), None).unwrap();
    assert_eq!(sol.iterations, 0);
    assert_eq!(sol.y, rhs);
}

#[test]
fn scalar_stage_matches_closed_form() {
    for mu in [-1.0, -40.0, -1e4, 3.0] {
        let sys = LinearTest::new(0.0, mu);
        let rhs = DVector::from_element(1, 1.3);
        let hl = 0.05 * 0.7;
        let sol = solve_stage(&sys, &rhs, hl, &IntegrationConfig::new(0.05), None).unwrap();
        let exact = 1.3 / (1.0 - hl * mu);
        assert!((sol.y[0] - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "mu = {mu}");
    }
}

#[test]
fn cusp_cubic_converges_quickly_for_small_steps() {
    let sys = Cusp::new(CuspConfig::default()).unwrap();
    let y0 = sys.initial_state();
    let h = 1e-5;
    let cfg = IntegrationConfig::new(h);
    let rhs = &y0 - sys.g(&y0) * h;
    let sol = solve_stage(&sys, &rhs, h, &cfg, None).unwrap();
    let r = &sol.y - sys.g(&sol.y) * h - &rhs;
    assert!(r.norm() <= cfg.newton_tol * (1.0 + rhs.norm()));
    assert!(sol.iterations <= 8, "{} iterations", sol.iterations);
}

#[test]
fn divergence_is_reported_with_its_stage() {
    // a stiff value far outside the Newton basin of a cubic
    let sys = Cusp::new(CuspConfig::default()).unwrap();
    let t = ensemble(3);
    let cfg = IntegrationConfig::for_steps(&sys, 500);
    let err = integrate(&t, &sys, &cfg).unwrap_err();
    assert!(matches!(err, GlmError::NewtonDivergence { .. } | GlmError::Stage { .. } | GlmError::NonFinite(_)), "{err}");
    assert!(!err.is_validation());
}

fn scalar_vector(x: &ExternalStages) -> DVector<f64> {
    DVector::from_iterator(x.stages.len(), x.stages.iter().map(|v| v[0]))
}

#[test]
fn one_step_applies_the_stability_matrix() {
    let (xi, xi_hat) = (-0.8, -30.0);
    let sys = LinearTest::new(xi, xi_hat);
    for t in [ensemble(2), ensemble(4), dimsim(2), dimsim(3)] {
        let h = 0.05;
        let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
        let x = it.start().unwrap();
        let out = it.step(&x).unwrap();
        let m = stability_matrix(&t, C64::new(h * xi, 0.0), StiffValue::from(h * xi_hat)).unwrap();
        let expect = m.map(|z| z.re) * scalar_vector(&x);
        let got = scalar_vector(&out.next);
        assert!((got - &expect).amax() < 1e-12 * (1.0 + expect.amax()), "{} {}", t.family(), t.order());
        assert!((out.next.t - (x.t + h)).abs() < 1e-15);
    }
}

#[test]
fn n_steps_equal_matrix_power() {
    let (xi, xi_hat) = (-1.0, -50.0);
    let sys = LinearTest::new(xi, xi_hat);
    for t in [ensemble(2), ensemble(3), ensemble(4), dimsim(2), dimsim(3), dimsim(4)] {
        let h = 0.02;
        let n = 40;
        let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
        let x0 = it.start().unwrap();
        let mut x = x0.clone();
        for _ in 0..n {
            x = it.step(&x).unwrap().next;
        }
        let m = stability_matrix(&t, C64::new(h * xi, 0.0), StiffValue::from(h * xi_hat)).unwrap().map(|z| z.re);
        let expect = m.pow(n as u32) * scalar_vector(&x0);
        assert!((scalar_vector(&x) - expect).amax() <= 1e-10 * n as f64);
    }
}

#[test]
fn complex_linear_test_steps_like_the_complex_matrix() {
    let (xi, xi_hat) = (C64::new(-0.5, 3.0), C64::new(-20.0, 5.0));
    let sys = LinearTest::new(xi, xi_hat);
    let t = ensemble(3);
    let h = 0.01;
    let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
    let x = it.start().unwrap();
    let out = it.step(&x).unwrap();
    let m = stability_matrix(&t, xi * h, StiffValue::from(xi_hat * h)).unwrap();
    let z0 = DVector::from_iterator(3, x.stages.iter().map(|v| C64::new(v[0], v[1])));
    let z1 = m * z0;
    for (i, v) in out.next.stages.iter().enumerate() {
        assert!((C64::new(v[0], v[1]) - z1[i]).norm() < 1e-12);
    }
}

#[test]
fn zero_tendencies_apply_v() {
    let sys = LinearTest::new(0.0, 0.0);
    for t in [dimsim(3), ensemble(3)] {
        let it = Integrator::new(&t, &sys, IntegrationConfig::new(0.1)).unwrap();
        let x = ExternalStages {
            stages: vec![DVector::from_element(1, 0.3), DVector::from_element(1, -1.1), DVector::from_element(1, 2.5)],
            t: 0.0,
            step_index: 0,
            shift: 0,
        };
        let out = it.step(&x).unwrap();
        let expect = t.v() * scalar_vector(&x);
        assert!((scalar_vector(&out.next) - expect).amax() < 1e-15);
    }
}

#[test]
fn zero_right_hand_side_keeps_the_initial_state() {
    let sys = LinearTest::new(0.0, 0.0).with_initial(0.42);
    for t in [dimsim(2), ensemble(4), dimsim(5)] {
        let cfg = IntegrationConfig::new(0.125);
        let out = integrate(&t, &sys, &cfg).unwrap();
        assert!((out.y[0] - 0.42).abs() < 1e-13, "{} {}", t.family(), t.order());
    }
}

#[test]
fn stage_solves_are_independent() {
    let sys = Cusp::new(CuspConfig { eps: 1e-2, ..Default::default() }).unwrap();
    let t = ensemble(3);
    let it = Integrator::new(&t, &sys, IntegrationConfig::for_steps(&sys, 2200)).unwrap();
    let x = it.start().unwrap();
    let base = it.step(&x).unwrap();
    let mut perturbed = x.clone();
    perturbed.stages[2] *= 1.01;
    let other = it.step(&perturbed).unwrap();
    assert_eq!(base.stage_values[0], other.stage_values[0]);
    assert_eq!(base.stage_values[1], other.stage_values[1]);
    assert_ne!(base.stage_values[2], other.stage_values[2]);
}

#[test]
fn results_are_bitwise_identical_across_worker_counts() {
    let sys = Cusp::new(CuspConfig { eps: 1e-2, ..Default::default() }).unwrap();
    for t in [ensemble(4), dimsim(4)] {
        let mut outs = Vec::new();
        for workers in [1, 2, t.stages()] {
            let cfg = IntegrationConfig::for_steps(&sys, 2200).with_workers(workers);
            outs.push(integrate(&t, &sys, &cfg).unwrap());
        }
        for o in &outs[1..] {
            assert_eq!(o.y.as_slice(), outs[0].y.as_slice());
            assert_eq!(o.diagnostics.newton_iters_total, outs[0].diagnostics.newton_iters_total);
        }
    }
}

#[test]
fn frozen_and_every_iteration_jacobians_agree() {
    let sys = Cusp::new(CuspConfig { eps: 1e-2, ..Default::default() }).unwrap();
    let t = ensemble(3);
    let reference = integrate(&t, &sys, &IntegrationConfig::for_steps(&sys, 2200)).unwrap().y;
    for reuse in [JacobianReuse::Frozen, JacobianReuse::EveryIteration] {
        let cfg = IntegrationConfig::for_steps(&sys, 2200).with_jacobian_reuse(reuse);
        let y = integrate(&t, &sys, &cfg).unwrap().y;
        assert!((y - &reference).amax() < 1e-9, "{reuse:?}");
    }
}

#[test]
fn sparse_and_dense_newton_paths_agree() {
    let sys = Cusp::new(CuspConfig { eps: 1e-2, ..Default::default() }).unwrap();
    let t = dimsim(3);
    let dense = integrate(&t, &sys, &IntegrationConfig::for_steps(&sys, 1100)).unwrap().y;
    let mut cfg = IntegrationConfig::for_steps(&sys, 1100);
    cfg.dense_threshold = 0;
    let sparse = integrate(&t, &sys, &cfg).unwrap().y;
    assert!((dense - sparse).amax() < 1e-9);
}

#[test]
fn zero_abscissa_start_is_exact() {
    let sys = LinearTest::new(-0.5, -3.0).with_initial(2.0);
    let t = build_parallel_ensemble(&EnsembleSpec::new(2)).unwrap();
    assert_eq!(t.abscissae(), &[0.0, 1.0]);
    let h = 0.1;
    let x = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap().start().unwrap();
    assert_eq!(x.shift, 0);
    assert_eq!(x.stages[0][0], 2.0 - h * (-3.0 * 2.0));
}

#[test]
fn integer_abscissae_start_after_a_shift() {
    assert_eq!(start_shift(&[-2.0, -1.0, 0.0, 1.0]), 2);
    let sys = LinearTest::new(-0.5, -3.0);
    let t = build_parallel_ensemble(&EnsembleSpec::new(4).with_abscissae(AbscissaeChoice::IntegerTail)).unwrap();
    let h = 0.05;
    let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
    let x = it.start().unwrap();
    assert_eq!(x.shift, 2);
    assert!((x.t - 2.0 * h).abs() < 1e-15);
    // the first external stage sits at t0 itself
    let y0 = sys.initial_state()[0];
    assert!((x.stages[0][0] - (y0 + h * 3.0 * y0)).abs() < 1e-15);
    assert_eq!(it.step_count().unwrap(), 18);
}

#[test]
fn starting_error_is_high_order() {
    let sys = LinearTest::new(-0.7, -2.0);
    for t in [ensemble(3), dimsim(3)] {
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for k in 0..4 {
            let h = 0.4 / 2f64.powi(k);
            let x = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap().start().unwrap();
            let err = t
                .abscissae()
                .iter()
                .zip(&x.stages)
                .map(|(&c, xi)| {
                    let y = sys.exact(x.t + c * h).unwrap()[0];
                    (xi[0] - (y - h * t.lambda() * (-2.0 * y))).abs()
                })
                .fold(0.0, f64::max);
            hs.push(h);
            errs.push(err);
        }
        // RK4 substeps put the error far below h^(p+1)
        for (h, e) in hs.iter().zip(&errs) {
            assert!(*e <= 1e-3 * h.powi(t.order() as i32 + 1), "h = {h}: {e}");
        }
    }
}

#[test]
fn final_stage_ending_returns_the_last_stage() {
    let sys = LinearTest::new(-1.0, -10.0);
    for t in [ensemble(3), dimsim(3)] {
        let h = 0.05;
        let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
        let out = it.step(&it.start().unwrap()).unwrap();
        let y = ending_procedure(&t, &out, EndingProcedure::FinalStage, h).unwrap();
        let ys = &out.stage_values[t.stages() - 1];
        assert!((y - ys).amax() < 1e-14);
    }
}

#[test]
fn corrected_ending_adds_the_implicit_term() {
    let sys = LinearTest::new(-1.0, -10.0);
    let t = ensemble(3);
    assert_eq!(t.abscissae(), &[0.0, 0.5, 1.0]);
    let h = 0.05;
    let it = Integrator::new(&t, &sys, IntegrationConfig::new(h)).unwrap();
    let out = it.step(&it.start().unwrap()).unwrap();
    let y = ending_procedure(&t, &out, EndingProcedure::CorrectedZeroAbscissa, h).unwrap();
    let expect = &out.next.stages[0] + &out.g_values[2] * (h * t.lambda());
    assert!((y - expect).amax() < 1e-14);
    let coef = ending_coefficients(&t, EndingProcedure::CorrectedZeroAbscissa).unwrap();
    assert_eq!(coef.gamma, t.v().row(0).transpose());
}

#[test]
fn ending_preconditions_are_enforced() {
    let t = build_parallel_ensemble(&EnsembleSpec::new(3).with_abscissae(AbscissaeChoice::Custom(vec![0.0, 0.5, 0.9]))).unwrap();
    assert!(ending_coefficients(&t, EndingProcedure::FinalStage).is_err());
    let t = build_parallel_ensemble(&EnsembleSpec::new(3).with_abscissae(AbscissaeChoice::Custom(vec![0.2, 0.5, 1.0]))).unwrap();
    assert!(ending_coefficients(&t, EndingProcedure::FinalStage).is_ok());
    assert!(ending_coefficients(&t, EndingProcedure::CorrectedZeroAbscissa).is_err());
}

fn scalar_errors(t: &ImexGlmTableau, sys: &LinearTest, steps: &[usize], ending: EndingProcedure) -> (Vec<f64>, Vec<f64>) {
    let exact = sys.exact(sys.tspan().1).unwrap();
    steps
        .iter()
        .map(|&n| {
            let cfg = IntegrationConfig::for_steps(sys, n).with_ending(ending);
            let y = integrate(t, sys, &cfg).unwrap().y;
            (1.0 / n as f64, solution_error(sys, &y, &exact))
        })
        .unzip()
}

#[test]
fn scalar_convergence_reaches_nominal_order() {
    let sys = LinearTest::new(-1.0, -4.0);
    for t in [ensemble(2), ensemble(3), ensemble(4), dimsim(2), dimsim(3), dimsim(4)] {
        let ending = EndingProcedure::default_for(t.family());
        let (hs, errs) = scalar_errors(&t, &sys, &[20, 40, 80, 160], ending);
        let p = slope(&hs[1..], &errs[1..]);
        assert!(p >= t.order() as f64 - 0.3, "{} {}: slope {p}, errors {errs:?}", t.family(), t.order());
    }
}

#[test]
fn both_endings_agree_to_the_method_order() {
    let sys = LinearTest::new(-1.0, -4.0);
    let t = ensemble(3);
    let steps = [20, 40, 80, 160];
    let diffs: Vec<f64> = steps
        .iter()
        .map(|&n| {
            let run = |e| integrate(&t, &sys, &IntegrationConfig::for_steps(&sys, n).with_ending(e)).unwrap().y[0];
            (run(EndingProcedure::FinalStage) - run(EndingProcedure::CorrectedZeroAbscissa)).abs()
        })
        .collect();
    let hs: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
    assert!(slope(&hs, &diffs) >= 2.7, "{diffs:?}");
}

#[test]
fn allen_cahn_with_small_steps_matches_the_exact_solution() {
    let sys = AllenCahn::new(AllenCahnConfig { n: 16, ..Default::default() }).unwrap();
    let t = ensemble(4);
    let out = integrate(&t, &sys, &IntegrationConfig::for_steps(&sys, 1280)).unwrap();
    let err = solution_error(&sys, &out.y, &sys.exact(1.0).unwrap());
    assert!(err < 1e-8, "{err}");
    assert!((out.t - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_configurations_are_rejected() {
    let sys = LinearTest::new(-1.0, -1.0);
    let t = ensemble(2);
    assert!(Integrator::new(&t, &sys, IntegrationConfig::new(0.0)).is_err());
    assert!(Integrator::new(&t, &sys, IntegrationConfig::new(0.1).with_workers(0)).is_err());
    let err = integrate(&t, &sys, &IntegrationConfig::new(0.3)).unwrap_err();
    assert!(err.is_validation(), "{err}");
    let serial = ImexGlmTableau::from_parts(TableauParts {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]),
        w: None,
        w_hat: None,
        family: Family::External,
        ..t.to_parts()
    })
    .unwrap();
    assert!(!serial.is_parallel());
    assert!(Integrator::new(&serial, &sys, IntegrationConfig::new(0.1)).is_err());
}

#[test]
fn diagnostics_csv_has_the_documented_header() {
    let sys = LinearTest::new(-1.0, -2.0);
    let out = integrate(&ensemble(2), &sys, &IntegrationConfig::new(0.25)).unwrap();
    assert_eq!(out.diagnostics.steps.len(), 4);
    let mut buf = Vec::new();
    out.diagnostics.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,t,newton_iters_max,wall_ms"));
    assert_eq!(lines.count(), 4);
}
