use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::spec::{MethodSpec, ProblemSpec};
use crate::error::{GlmError, Result};
use crate::integrator::integrate;
use crate::matkernels::AbscissaeChoice;

/// How a reference solution is computed when no closed form exists: the
/// same integrator at `steps`, accepted if a run at `cross_check_steps`
/// agrees to `agreement·‖y_ref‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePolicy {
    pub method: MethodSpec,
    pub steps: usize,
    pub cross_check_steps: usize,
    pub agreement: f64,
}

impl ReferencePolicy {
    /// Eighth-order ensemble at 800k steps, checked against 400k.
    pub fn cusp_default() -> Self {
        ReferencePolicy {
            method: MethodSpec::ensemble(8).with_abscissae(AbscissaeChoice::IntegerTail),
            steps: 800_000,
            cross_check_steps: 400_000,
            agreement: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSource {
    Exact,
    Computed {
        policy: ReferencePolicy,
        /// `‖y(steps) − y(cross_check_steps)‖₂ / ‖y(steps)‖₂`
        relative_disagreement: f64,
    },
}

/// Final-time solution against which errors are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub problem: ProblemSpec,
    pub source: ReferenceSource,
    pub y: Vec<f64>,
}

impl ReferenceSolution {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }

    /// Closed-form solution at the final time, if the problem has one.
    pub fn exact(problem: &ProblemSpec) -> Result<Option<Self>> {
        let sys = problem.system()?;
        Ok(sys.exact(sys.tspan().1).map(|y| ReferenceSolution {
            problem: problem.clone(),
            source: ReferenceSource::Exact,
            y: y.as_slice().to_vec(),
        }))
    }

    pub fn compute(problem: &ProblemSpec, policy: &ReferencePolicy) -> Result<Self> {
        let t = policy.method.build()?;
        let sys = problem.system()?;
        let run = |steps| -> Result<DVector<f64>> { Ok(integrate(&t, sys.as_ref(), &problem.config(steps)?)?.y) };
        let fine = run(policy.steps)?;
        let check = run(policy.cross_check_steps)?;
        let n = sys.solution_len();
        let scale = fine.rows(0, n).norm().max(f64::MIN_POSITIVE);
        let relative = (fine.rows(0, n) - check.rows(0, n)).norm() / scale;
        if !(relative <= policy.agreement) {
            return Err(GlmError::Invariant(format!(
                "reference runs at {} and {} steps disagree by {relative:.3e} (relative), above {:.1e}",
                policy.steps, policy.cross_check_steps, policy.agreement
            )));
        }
        Ok(ReferenceSolution {
            problem: problem.clone(),
            source: ReferenceSource::Computed {
                policy: policy.clone(),
                relative_disagreement: relative,
            },
            y: fine.as_slice().to_vec(),
        })
    }

    /// The exact solution when available, otherwise a computed one (CUSP uses
    /// [`ReferencePolicy::cusp_default`] unless `policy` is given). Computed
    /// references are cached as JSON under `cache_dir`.
    pub fn resolve(problem: &ProblemSpec, policy: Option<&ReferencePolicy>, cache_dir: Option<&Path>) -> Result<Self> {
        if policy.is_none() {
            if let Some(exact) = Self::exact(problem)? {
                return Ok(exact);
            }
        }
        let policy = policy.cloned().unwrap_or_else(ReferencePolicy::cusp_default);
        let cache = cache_dir.map(|dir| cache_path(dir, problem, &policy));
        if let Some(path) = &cache {
            if let Some(hit) = read_cache(path, problem, &policy) {
                return Ok(hit);
            }
        }
        let fresh = Self::compute(problem, &policy)?;
        if let Some(path) = &cache {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, serde_json::to_string(&fresh).expect("reference serializes"))?;
        }
        Ok(fresh)
    }
}

fn cache_key(problem: &ProblemSpec, policy: &ReferencePolicy) -> String {
    serde_json::to_string(&(problem, policy, env!("CARGO_PKG_VERSION"))).expect("key serializes")
}

fn cache_path(dir: &Path, problem: &ProblemSpec, policy: &ReferencePolicy) -> PathBuf {
    let mut hasher = DefaultHasher::new();
    cache_key(problem, policy).hash(&mut hasher);
    dir.join(format!("reference-{}-{:016x}.json", problem.name(), hasher.finish()))
}

fn read_cache(path: &Path, problem: &ProblemSpec, policy: &ReferencePolicy) -> Option<ReferenceSolution> {
    let text = std::fs::read_to_string(path).ok()?;
    let hit: ReferenceSolution = serde_json::from_str(&text).ok()?;
    let matches = hit.problem == *problem
        && matches!(&hit.source, ReferenceSource::Computed { policy: p, .. } if p == policy);
    matches.then_some(hit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::CuspConfig;

    #[test]
    fn exact_reference_for_allen_cahn() {
        let r = ReferenceSolution::resolve(&ProblemSpec::allen_cahn(), None, None).unwrap();
        assert_eq!(r.source, ReferenceSource::Exact);
        assert_eq!(r.y.len(), 30 * 30 + 1);
        assert_eq!(r.y[900], 1.0);
    }

    #[test]
    fn computed_reference_round_trips_through_the_cache() {
        let problem = ProblemSpec::Cusp(CuspConfig {
            n: 8,
            eps: 1e-2,
            tspan: (0.0, 0.2),
            ..Default::default()
        });
        let policy = ReferencePolicy {
            method: MethodSpec::ensemble(4),
            steps: 800,
            cross_check_steps: 400,
            agreement: 1e-5,
        };
        let dir = std::env::temp_dir().join(format!("parglm-ref-test-{}", std::process::id()));
        let first = ReferenceSolution::resolve(&problem, Some(&policy), Some(&dir)).unwrap();
        let second = ReferenceSolution::resolve(&problem, Some(&policy), Some(&dir)).unwrap();
        assert_eq!(first, second);
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).unwrap();

        let strict = ReferencePolicy { agreement: 1e-30, ..policy };
        assert!(matches!(ReferenceSolution::compute(&problem, &strict), Err(GlmError::Invariant(_))));
    }
}
