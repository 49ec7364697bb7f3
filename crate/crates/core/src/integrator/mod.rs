//! Fixed-step time integration with parallel IMEX GLMs.
//!
//! Each step solves the `s` decoupled stage equations
//! `Y_i = hλ g(Y_i) + Σ_j u_ij x_j` (concurrently when more than one worker
//! is configured) and then forms the new external stages
//! `x_i = h Σ_j (b_ij f(Y_j) + b̂_ij g(Y_j)) + Σ_j v_ij x_j`.

pub mod linsolve;
pub mod newton;
pub mod start;

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use linsolve::{CsrMatrix, Jacobian, NewtonSolver};
pub use newton::{solve_stage, solve_stage_from, JacobianReuse, StageSolution};
pub use start::{start_shift, starting_procedure};

use start::{predictor_map, starting_values};

use crate::error::{GlmError, Result};
use crate::tableau::{Family, ImexGlmTableau};

/// `y' = f(y) + g(y)` with nonstiff `f` and stiff `g`.
///
/// Implementations must be safe to evaluate from several threads at once.
pub trait PartitionedSystem: Sync {
    fn dim(&self) -> usize;
    fn f(&self, y: &DVector<f64>) -> DVector<f64>;
    fn g(&self, y: &DVector<f64>) -> DVector<f64>;
    fn g_jacobian(&self, y: &DVector<f64>) -> Jacobian;
    fn tspan(&self) -> (f64, f64);
    fn initial_state(&self) -> DVector<f64>;
    fn exact(&self, _t: f64) -> Option<DVector<f64>> {
        None
    }
    /// Leading components that make up the physical solution; trailing
    /// auxiliary components (such as an appended time variable) are excluded
    /// from error norms.
    fn solution_len(&self) -> usize {
        self.dim()
    }
}

/// How the final solution is extracted from the last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndingProcedure {
    /// The last internal stage `Y_s` (needs `c_s = 1`).
    FinalStage,
    /// `x_i + hλ g(Y_s)` for the external stage with `c_i = 0` (needs `c_s = 1`).
    CorrectedZeroAbscissa,
}

impl EndingProcedure {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Ensemble => EndingProcedure::CorrectedZeroAbscissa,
            _ => EndingProcedure::FinalStage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub h: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub jacobian_reuse: JacobianReuse,
    /// `None` picks the family default.
    pub ending: Option<EndingProcedure>,
    pub parallel_workers: usize,
    /// Newton systems up to this size use dense LU.
    pub dense_threshold: usize,
}

impl IntegrationConfig {
    pub fn new(h: f64) -> Self {
        IntegrationConfig {
            h,
            newton_tol: 1e-12,
            newton_max_iters: 20,
            jacobian_reuse: JacobianReuse::PerStage,
            ending: None,
            parallel_workers: 1,
            dense_threshold: 512,
        }
    }

    /// Step size giving `steps` intervals over the system's time span.
    pub fn for_steps(sys: &dyn PartitionedSystem, steps: usize) -> Self {
        let (t0, tf) = sys.tspan();
        Self::new((tf - t0) / steps as f64)
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.parallel_workers = workers;
        self
    }

    pub fn with_ending(mut self, ending: EndingProcedure) -> Self {
        self.ending = Some(ending);
        self
    }

    pub fn with_jacobian_reuse(mut self, reuse: JacobianReuse) -> Self {
        self.jacobian_reuse = reuse;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(GlmError::Config(format!("step size must be positive, got {}", self.h)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(GlmError::Config("Newton tolerance must be positive".into()));
        }
        if self.newton_max_iters == 0 {
            return Err(GlmError::Config("Newton needs at least one iteration".into()));
        }
        if self.parallel_workers == 0 {
            return Err(GlmError::Config("at least one worker is required".into()));
        }
        Ok(())
    }
}

/// External stage vector `x^{[n]}` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalStages {
    pub stages: Vec<DVector<f64>>,
    pub t: f64,
    pub step_index: usize,
    pub shift: usize,
}

/// Everything one step produced, as needed by the ending procedures.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub previous: ExternalStages,
    pub next: ExternalStages,
    pub stage_values: Vec<DVector<f64>>,
    pub f_values: Vec<DVector<f64>>,
    pub g_values: Vec<DVector<f64>>,
    pub newton_iterations: Vec<usize>,
    pub newton_residual_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub t: f64,
    pub newton_iters_max: usize,
    pub newton_residual_max: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: Vec<StepDiagnostic>,
    pub newton_iters_total: usize,
    pub start_ms: f64,
    pub wall_ms: f64,
}

impl Diagnostics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,t,newton_iters_max,wall_ms")?;
        for d in &self.steps {
            writeln!(out, "{},{},{},{}", d.step, d.t, d.newton_iters_max, d.wall_ms)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationOutput {
    pub y: DVector<f64>,
    pub t: f64,
    pub diagnostics: Diagnostics,
}

/// Weights of `h Σ_j (β_j f(Y_j) + β̂_j g(Y_j)) + Σ_j γ_j x_j` over the last
/// step's stages and incoming external stages.
#[derive(Debug, Clone, PartialEq)]
pub struct EndingCoefficients {
    pub beta: DVector<f64>,
    pub beta_hat: DVector<f64>,
    pub gamma: DVector<f64>,
}

pub fn ending_coefficients(t: &ImexGlmTableau, ending: EndingProcedure) -> Result<EndingCoefficients> {
    let (s, r) = (t.stages(), t.external_stages());
    let c = t.abscissae();
    if c[s - 1] != 1.0 {
        return Err(GlmError::Config(format!(
            "ending procedures need the last abscissa to be 1, got {}",
            c[s - 1]
        )));
    }
    let mut beta = DVector::zeros(s);
    let mut beta_hat = DVector::zeros(s);
    let gamma;
    match ending {
        EndingProcedure::FinalStage => {
            beta_hat[s - 1] = t.lambda();
            gamma = t.u().row(s - 1).transpose();
        }
        EndingProcedure::CorrectedZeroAbscissa => {
            let i = c[..s - 1].iter().position(|&ci| ci == 0.0).ok_or_else(|| {
                GlmError::Config("corrected ending needs an abscissa equal to 0 before the last stage".into())
            })?;
            if i >= r {
                return Err(GlmError::Config("zero abscissa has no matching external stage".into()));
            }
            beta.copy_from(&t.b().row(i).transpose());
            beta_hat.copy_from(&t.b_hat().row(i).transpose());
            beta_hat[s - 1] += t.lambda();
            gamma = t.v().row(i).transpose();
        }
    }
    Ok(EndingCoefficients { beta, beta_hat, gamma })
}

/// Apply an ending procedure to the output of the last step.
pub fn ending_procedure(t: &ImexGlmTableau, last: &StepOutput, ending: EndingProcedure, h: f64) -> Result<DVector<f64>> {
    let coef = ending_coefficients(t, ending)?;
    let d = last.previous.stages[0].len();
    let mut out = DVector::zeros(d);
    for j in 0..t.stages() {
        out.axpy(h * coef.beta[j], &last.f_values[j], 1.0);
        out.axpy(h * coef.beta_hat[j], &last.g_values[j], 1.0);
    }
    for (j, x) in last.previous.stages.iter().enumerate() {
        out.axpy(coef.gamma[j], x, 1.0);
    }
    Ok(out)
}

/// A tableau bound to a system and configuration.
pub struct Integrator<'a> {
    tableau: &'a ImexGlmTableau,
    sys: &'a dyn PartitionedSystem,
    cfg: IntegrationConfig,
    pool: Option<rayon::ThreadPool>,
}

fn tag_stage(stage: usize, err: GlmError) -> GlmError {
    match err {
        GlmError::NewtonDivergence { iterations, residual, .. } => GlmError::NewtonDivergence {
            stage,
            iterations,
            residual,
        },
        other => GlmError::Stage {
            stage,
            source: Box::new(other),
        },
    }
}

impl<'a> Integrator<'a> {
    pub fn new(tableau: &'a ImexGlmTableau, sys: &'a dyn PartitionedSystem, cfg: IntegrationConfig) -> Result<Self> {
        cfg.validate()?;
        if !tableau.is_parallel() {
            return Err(GlmError::Config(
                "time stepping requires the parallel structure A = 0, Ahat = lambda*I".into(),
            ));
        }
        if tableau.stages() != tableau.external_stages() {
            return Err(GlmError::Config("time stepping requires r = s".into()));
        }
        let d = sys.dim();
        let y0 = sys.initial_state();
        if y0.len() != d || sys.solution_len() > d {
            return Err(GlmError::DimensionMismatch(format!(
                "system reports dimension {d} but its initial state has {} entries",
                y0.len()
            )));
        }
        let pool = if cfg.parallel_workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.parallel_workers)
                    .build()
                    .map_err(|e| GlmError::Config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Integrator { tableau, sys, cfg, pool })
    }

    pub fn config(&self) -> &IntegrationConfig {
        &self.cfg
    }

    pub fn ending(&self) -> EndingProcedure {
        self.cfg.ending.unwrap_or_else(|| EndingProcedure::default_for(self.tableau.family()))
    }

    pub fn start(&self) -> Result<ExternalStages> {
        starting_procedure(self.tableau, self.sys, &self.cfg)
    }

    fn run_parallel<T: Send>(&self, n: usize, job: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&job).collect()),
            None => (0..n).map(job).collect(),
        }
    }

    fn solve_one(
        &self,
        i: usize,
        rhs: &DVector<f64>,
        guess: &DVector<f64>,
        shared: Option<&NewtonSolver>,
    ) -> Result<StageSolution> {
        let hl = self.cfg.h * self.tableau.lambda();
        match solve_stage_from(self.sys, rhs, guess, hl, &self.cfg, shared) {
            Err(GlmError::NewtonDivergence { .. }) if shared.is_some() => {
                solve_stage_from(self.sys, rhs, guess, hl, &self.cfg, None).map_err(|e| tag_stage(i, e))
            }
            other => other.map_err(|e| tag_stage(i, e)),
        }
    }

    /// One step `x^{[n]} → x^{[n+1]}`, with each Newton iteration started from
    /// its right-hand side.
    pub fn step(&self, x: &ExternalStages) -> Result<StepOutput> {
        self.step_from(x, None)
    }

    /// One step with explicit Newton starting values for the `s` stages.
    pub fn step_from(&self, x: &ExternalStages, guesses: Option<&[DVector<f64>]>) -> Result<StepOutput> {
        let t = self.tableau;
        let (s, h) = (t.stages(), self.cfg.h);
        let d = self.sys.dim();
        if x.stages.len() != t.external_stages() || x.stages.iter().any(|v| v.len() != d) {
            return Err(GlmError::DimensionMismatch("external stage vector does not match the method".into()));
        }
        if let Some(g) = guesses {
            if g.len() != s || g.iter().any(|v| v.len() != d) {
                return Err(GlmError::DimensionMismatch("Newton starting values do not match the method".into()));
            }
        }
        let rhs: Vec<DVector<f64>> = (0..s)
            .map(|i| {
                let mut acc = DVector::zeros(d);
                for (j, xj) in x.stages.iter().enumerate() {
                    acc.axpy(t.u()[(i, j)], xj, 1.0);
                }
                acc
            })
            .collect();

        let shared = if self.cfg.jacobian_reuse == JacobianReuse::Frozen && t.lambda() != 0.0 {
            Some(NewtonSolver::new(&self.sys.g_jacobian(&rhs[s - 1]), h * t.lambda(), self.cfg.dense_threshold)?)
        } else {
            None
        };

        let solved = self.run_parallel(s, |i| -> Result<(StageSolution, DVector<f64>, DVector<f64>)> {
            let guess = guesses.map_or(&rhs[i], |g| &g[i]);
            let sol = self.solve_one(i, &rhs[i], guess, shared.as_ref())?;
            let f = self.sys.f(&sol.y);
            let g = self.sys.g(&sol.y);
            Ok((sol, f, g))
        });
        let mut stage_values = Vec::with_capacity(s);
        let mut f_values = Vec::with_capacity(s);
        let mut g_values = Vec::with_capacity(s);
        let mut newton_iterations = Vec::with_capacity(s);
        let mut residual_max: f64 = 0.0;
        for item in solved {
            let (sol, f, g) = item?;
            newton_iterations.push(sol.iterations);
            residual_max = residual_max.max(sol.residual);
            stage_values.push(sol.y);
            f_values.push(f);
            g_values.push(g);
        }

        let next = self.run_parallel(t.external_stages(), |i| {
            let mut acc = DVector::zeros(d);
            for j in 0..s {
                acc.axpy(h * t.b()[(i, j)], &f_values[j], 1.0);
                acc.axpy(h * t.b_hat()[(i, j)], &g_values[j], 1.0);
            }
            for (j, xj) in x.stages.iter().enumerate() {
                acc.axpy(t.v()[(i, j)], xj, 1.0);
            }
            acc
        });
        if next.iter().any(|v| !v.iter().all(|z| z.is_finite())) {
            return Err(GlmError::NonFinite(format!("external stages after step {}", x.step_index + 1)));
        }
        let step_index = x.step_index + 1;
        Ok(StepOutput {
            previous: x.clone(),
            next: ExternalStages {
                stages: next,
                t: self.sys.tspan().0 + (x.shift + step_index) as f64 * h,
                step_index,
                shift: x.shift,
            },
            stage_values,
            f_values,
            g_values,
            newton_iterations,
            newton_residual_max: residual_max,
        })
    }

    /// Number of method steps after the starting offset.
    pub fn step_count(&self) -> Result<usize> {
        let (t0, tf) = self.sys.tspan();
        let ratio = (tf - t0) / self.cfg.h;
        let total = ratio.round();
        if (ratio - total).abs() > 1e-9 * ratio.max(1.0) || total < 1.0 {
            return Err(GlmError::Config(format!(
                "time span {} is not an integer multiple of h = {}",
                tf - t0,
                self.cfg.h
            )));
        }
        let shift = start_shift(self.tableau.abscissae());
        let total = total as usize;
        if total <= shift {
            return Err(GlmError::Config(format!(
                "{total} steps do not cover the starting offset of {shift} steps"
            )));
        }
        Ok(total - shift)
    }

    /// Start, step to the end of the time span, and apply the ending procedure.
    ///
    /// Newton iterations in the first step start from the inner start-up
    /// solutions, and afterwards from the previous step's stage values.
    pub fn run(&self) -> Result<IntegrationOutput> {
        let steps = self.step_count()?;
        let ending = self.ending();
        ending_coefficients(self.tableau, ending)?;
        let predictor = predictor_map(self.tableau.abscissae());
        let clock = Instant::now();
        let (mut x, mut guesses) = starting_values(self.tableau, self.sys, &self.cfg)?;
        let start_ms = clock.elapsed().as_secs_f64() * 1e3;
        let mut diags = Vec::with_capacity(steps);
        let mut total_iters = 0;
        let mut last = None;
        for _ in 0..steps {
            let tick = Instant::now();
            let out = self.step_from(&x, Some(&guesses))?;
            guesses = predictor.iter().map(|&j| out.stage_values[j].clone()).collect();
            let iters_max = out.newton_iterations.iter().copied().max().unwrap_or(0);
            total_iters += out.newton_iterations.iter().sum::<usize>();
            diags.push(StepDiagnostic {
                step: out.next.step_index,
                t: out.next.t,
                newton_iters_max: iters_max,
                newton_residual_max: out.newton_residual_max,
                wall_ms: tick.elapsed().as_secs_f64() * 1e3,
            });
            x = out.next.clone();
            last = Some(out);
        }
        let last = last.expect("at least one step");
        let y = ending_procedure(self.tableau, &last, ending, self.cfg.h)?;
        Ok(IntegrationOutput {
            y,
            t: last.next.t,
            diagnostics: Diagnostics {
                steps: diags,
                newton_iters_total: total_iters,
                start_ms,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            },
        })
    }
}

/// Integrate `sys` over its time span with `tableau`.
pub fn integrate(
    tableau: &ImexGlmTableau,
    sys: &dyn PartitionedSystem,
    cfg: &IntegrationConfig,
) -> Result<IntegrationOutput> {
    Integrator::new(tableau, sys, cfg.clone())?.run()
}
