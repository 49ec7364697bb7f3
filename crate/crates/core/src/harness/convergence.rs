use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::reference::ReferenceSolution;
use super::spec::{MethodSpec, ProblemSpec, RunSettings};
use crate::error::{GlmError, Result};
use crate::integrator::integrate;
use crate::problems::solution_error;
use crate::tableau::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub steps: usize,
    pub h: f64,
    /// `None` when the run failed.
    pub l2_error: Option<f64>,
    pub wall_ms: f64,
    pub newton_iters_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: MethodSpec,
    pub problem: ProblemSpec,
    /// Sorted by step count.
    pub records: Vec<ConvergenceRecord>,
    pub fitted_order: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln() / n, b + y.ln() / n));
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, y) in points {
        num += (x.ln() - mx) * (y.ln() - my);
        den += (x.ln() - mx).powi(2);
    }
    num / den
}

/// Order fitted over the finest `⌈n/2⌉` of the `n` successful records
/// (at least two).
pub fn fit_order(records: &[ConvergenceRecord]) -> Result<f64> {
    let mut ok: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.l2_error.filter(|e| *e > 0.0 && e.is_finite()).map(|e| (r.h, e)))
        .collect();
    if ok.len() < 2 {
        return Err(GlmError::Config(format!(
            "an order fit needs two successful runs, got {}",
            ok.len()
        )));
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail = ok.len().div_ceil(2).max(2);
    let slope = loglog_slope(&ok[..tail]);
    if !slope.is_finite() {
        return Err(GlmError::NonFinite("fitted order".into()));
    }
    Ok(slope)
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.l2_error).collect()
    }

    pub fn error_at(&self, steps: usize) -> Option<f64> {
        self.records.iter().find(|r| r.steps == steps).and_then(|r| r.l2_error)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConvergenceRecord> {
        self.records.iter().filter(|r| r.failure.is_some())
    }

    /// Columns `steps,h,error,wall_ms`; failed rows carry `NaN` and a
    /// trailing comment names the failure. The last line is
    /// `# fitted_order=`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "steps,h,error,wall_ms")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.steps, r.h, r.l2_error.unwrap_or(f64::NAN), r.wall_ms)?;
        }
        for r in self.failures() {
            writeln!(out, "# failed steps={}: {}", r.steps, r.failure.as_deref().unwrap_or(""))?;
        }
        writeln!(out, "# fitted_order={}", self.fitted_order)
    }
}

/// Integrate `method` on `problem` for every step count and measure the
/// final-time error against `reference`. Failed runs are kept as flagged
/// rows and left out of the fit.
pub fn run_convergence(
    method: &MethodSpec,
    problem: &ProblemSpec,
    steps: &[usize],
    reference: &ReferenceSolution,
    settings: &RunSettings,
) -> Result<ConvergenceReport> {
    let t = method.build()?;
    let sys = problem.system()?;
    let target = reference.vector();
    if target.len() != sys.dim() {
        return Err(GlmError::DimensionMismatch(format!(
            "reference has {} entries, the system {}",
            target.len(),
            sys.dim()
        )));
    }
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut records = Vec::with_capacity(sorted.len());
    for n in sorted {
        let cfg = settings.apply(problem.config(n)?);
        let clock = Instant::now();
        let record = match integrate(&t, sys.as_ref(), &cfg) {
            Ok(out) => ConvergenceRecord {
                steps: n,
                h: cfg.h,
                l2_error: Some(solution_error(sys.as_ref(), &out.y, &target)),
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
                newton_iters_total: out.diagnostics.newton_iters_total,
                failure: None,
            },
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => ConvergenceRecord {
                steps: n,
                h: cfg.h,
                l2_error: None,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
                newton_iters_total: 0,
                failure: Some(e.to_string()),
            },
        };
        records.push(record);
    }
    let fitted_order = fit_order(&records)?;
    Ok(ConvergenceReport {
        method: method.clone(),
        problem: problem.clone(),
        records,
        fitted_order,
    })
}

/// Step-count ladders sized for a single workstation. CUSP at `ε = 10⁻⁴`
/// needs at least about 25k steps before the implicit stage equations have
/// a unique nearby root; the high orders use narrow windows that end
/// before their roundoff floor.
pub fn desk_ladder(problem: &ProblemSpec, family: Family, order: usize) -> Vec<usize> {
    let geometric = |start: f64, ratio: f64, n: usize| -> Vec<usize> {
        (0..n).map(|k| (start * ratio.powi(k as i32)).round() as usize).collect()
    };
    match problem {
        ProblemSpec::Cusp(_) => match (family, order) {
            (Family::Ensemble, o) if o >= 7 => (0..6).map(|k| 100_000 + 20_000 * k).collect(),
            (Family::Dimsim, o) if o >= 6 => (0..6).map(|k| 100_000 + 10_000 * k).collect(),
            _ => geometric(25_000.0, 2.0, 6),
        },
        ProblemSpec::AllenCahn(_) => match order {
            0..=3 => geometric(160.0, 2.0, 6),
            4 => geometric(160.0, 2f64.sqrt(), 6),
            _ => geometric(240.0, 2f64.powf(0.25), 6),
        },
        ProblemSpec::Linear { .. } => geometric(20.0, 2.0, 6),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(steps: usize, err: Option<f64>) -> ConvergenceRecord {
        ConvergenceRecord {
            steps,
            h: 1.0 / steps as f64,
            l2_error: err,
            wall_ms: 0.0,
            newton_iters_total: 0,
            failure: err.is_none().then(|| "boom".to_string()),
        }
    }

    #[test]
    fn fit_uses_the_finest_half() {
        // coarse points are off the asymptotic line
        let records: Vec<_> = [10, 20, 40, 80, 160, 320]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let h = 1.0 / n as f64;
                let e = if k < 3 { 1.0 } else { 5.0 * h.powi(3) };
                rec(n, Some(e))
            })
            .collect();
        assert!((fit_order(&records).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn failures_are_excluded() {
        let records = vec![rec(10, None), rec(20, Some(0.25)), rec(40, Some(0.0625)), rec(80, None)];
        assert!((fit_order(&records).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_order(&records[..2]).is_err());
    }

    #[test]
    fn ladders_have_six_counts() {
        for problem in [ProblemSpec::cusp(), ProblemSpec::allen_cahn(), ProblemSpec::linear(-1.0, -1.0)] {
            for family in [Family::Dimsim, Family::Ensemble] {
                for order in 2..=8 {
                    let l = desk_ladder(&problem, family, order);
                    assert_eq!(l.len(), 6);
                    assert!(l.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
        assert_eq!(desk_ladder(&ProblemSpec::allen_cahn(), Family::Ensemble, 5), vec![240, 285, 339, 404, 480, 571]);
    }

    #[test]
    fn scalar_convergence_report() {
        let problem = ProblemSpec::linear(-1.0, -3.0);
        let reference = ReferenceSolution::resolve(&problem, None, None).unwrap();
        let report = run_convergence(&MethodSpec::ensemble(3), &problem, &[80, 10, 20, 40], &reference, &RunSettings::default()).unwrap();
        assert_eq!(report.records.iter().map(|r| r.steps).collect::<Vec<_>>(), vec![10, 20, 40, 80]);
        assert!(report.fitted_order > 2.7, "{}", report.fitted_order);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("steps,h,error,wall_ms\n"));
        assert!(text.trim_end().ends_with(&format!("# fitted_order={}", report.fitted_order)));
    }
}
