use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::reference::ReferenceSolution;
use super::spec::{MethodSpec, ProblemSpec, RunSettings};
use crate::error::{GlmError, Result};
use crate::integrator::{integrate, EndingProcedure};
use crate::problems::solution_error;

/// One work-precision measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub steps: usize,
    /// `NaN` for a failed run.
    pub error: f64,
    pub wall_ms: f64,
}

/// Run every `(workers, steps)` pair, timing the whole integration.
pub fn run_bench(
    method: &MethodSpec,
    problem: &ProblemSpec,
    steps: &[usize],
    workers: &[usize],
    reference: &ReferenceSolution,
    ending: Option<EndingProcedure>,
) -> Result<Vec<BenchRow>> {
    let t = method.build()?;
    let sys = problem.system()?;
    let target = reference.vector();
    let mut rows = Vec::with_capacity(steps.len() * workers.len());
    for &w in workers {
        for &n in steps {
            let settings = RunSettings { workers: w, ending };
            let cfg = settings.apply(problem.config(n)?);
            let clock = Instant::now();
            let error = match integrate(&t, sys.as_ref(), &cfg) {
                Ok(out) => solution_error(sys.as_ref(), &out.y, &target),
                Err(e) if e.is_validation() => return Err(e),
                Err(_) => f64::NAN,
            };
            rows.push(BenchRow {
                workers: w,
                steps: n,
                error,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "workers,steps,error,wall_ms")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.workers, r.steps, r.error, r.wall_ms)?;
    }
    Ok(())
}

/// Wall time needed to reach `target` error, by linear interpolation of
/// `log wall_ms` against `log error` between the bracketing rows.
pub fn runtime_at_error(rows: &[BenchRow], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error.is_finite() && r.error > 0.0 && r.wall_ms > 0.0)
        .map(|r| (r.error.ln(), r.wall_ms.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x = target.ln();
    pts.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 <= x && x <= x1 {
            let s = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
            Some((y0 + s * (y1 - y0)).exp())
        } else {
            None
        }
    })
}

/// Runtime ratio `slow/fast` at matched error.
pub fn speedup_at_error(fast: &[BenchRow], slow: &[BenchRow], target: f64) -> Result<f64> {
    match (runtime_at_error(fast, target), runtime_at_error(slow, target)) {
        (Some(f), Some(s)) => Ok(s / f),
        _ => Err(GlmError::Config(format!("error {target:e} is not bracketed by both curves"))),
    }
}
