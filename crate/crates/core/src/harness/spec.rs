use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dimsim::{build_parallel_imex_dimsim, DimsimSpec};
use crate::ensemble::{build_parallel_ensemble, EnsembleSpec};
use crate::error::{GlmError, Result};
use crate::integrator::{integrate, EndingProcedure, IntegrationConfig, IntegrationOutput, PartitionedSystem};
use crate::matkernels::AbscissaeChoice;
use crate::problems::{AllenCahn, AllenCahnConfig, Cusp, CuspConfig, LinearTest};
use crate::stability::C64;
use crate::tableau::{Family, ImexGlmTableau};

/// A constructed method: family, order, nodes and optional `λ` override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub family: Family,
    pub order: usize,
    pub abscissae: AbscissaeChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl MethodSpec {
    /// Family default nodes (unit interval up to order 4, integers above).
    pub fn new(family: Family, order: usize) -> Self {
        MethodSpec {
            family,
            order,
            abscissae: AbscissaeChoice::default_for(order),
            lambda: None,
        }
    }

    pub fn dimsim(order: usize) -> Self {
        Self::new(Family::Dimsim, order)
    }

    pub fn ensemble(order: usize) -> Self {
        Self::new(Family::Ensemble, order)
    }

    pub fn with_abscissae(mut self, abscissae: AbscissaeChoice) -> Self {
        self.abscissae = abscissae;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn build(&self) -> Result<ImexGlmTableau> {
        match self.family {
            Family::Dimsim => {
                let mut spec = DimsimSpec::new(self.order).with_abscissae(self.abscissae.clone());
                if let Some(l) = self.lambda {
                    spec = spec.with_lambda(l);
                }
                build_parallel_imex_dimsim(&spec)
            }
            Family::Ensemble => {
                let mut spec = EnsembleSpec::new(self.order).with_abscissae(self.abscissae.clone());
                if let Some(l) = self.lambda {
                    spec = spec.with_lambda(l);
                }
                build_parallel_ensemble(&spec)
            }
            Family::External => Err(GlmError::Config(
                "external tableaux are loaded from files, not constructed".into(),
            )),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = match &self.abscissae {
            AbscissaeChoice::UnitInterval => "unit",
            AbscissaeChoice::IntegerTail => "integer",
            AbscissaeChoice::Custom(_) => "custom",
        };
        write!(f, "{}-{} ({nodes})", self.family, self.order)
    }
}

/// One of the shipped test problems with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ProblemSpec {
    Cusp(CuspConfig),
    #[serde(rename = "allencahn")]
    AllenCahn(AllenCahnConfig),
    Linear {
        /// `[re, im]` of the nonstiff coefficient.
        xi: [f64; 2],
        xi_hat: [f64; 2],
        y0: f64,
        tf: f64,
    },
}

impl ProblemSpec {
    pub fn cusp() -> Self {
        ProblemSpec::Cusp(CuspConfig::default())
    }

    pub fn allen_cahn() -> Self {
        ProblemSpec::AllenCahn(AllenCahnConfig::default())
    }

    pub fn linear(xi: f64, xi_hat: f64) -> Self {
        ProblemSpec::Linear {
            xi: [xi, 0.0],
            xi_hat: [xi_hat, 0.0],
            y0: 1.0,
            tf: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Cusp(_) => "cusp",
            ProblemSpec::AllenCahn(_) => "allencahn",
            ProblemSpec::Linear { .. } => "linear",
        }
    }

    pub fn system(&self) -> Result<Box<dyn PartitionedSystem>> {
        Ok(match self {
            ProblemSpec::Cusp(cfg) => Box::new(Cusp::new(cfg.clone())?),
            ProblemSpec::AllenCahn(cfg) => Box::new(AllenCahn::new(cfg.clone())?),
            ProblemSpec::Linear { xi, xi_hat, y0, tf } => {
                if !(*tf > 0.0) {
                    return Err(GlmError::Config(format!("linear test end time must be positive, got {tf}")));
                }
                Box::new(
                    LinearTest::new(C64::new(xi[0], xi[1]), C64::new(xi_hat[0], xi_hat[1]))
                        .with_initial(*y0)
                        .with_tspan(0.0, *tf),
                )
            }
        })
    }

    /// Integration settings for `steps` uniform steps over the time span.
    ///
    /// CUSP goes through the sparse Newton path even though it is small
    /// enough for dense LU.
    pub fn config(&self, steps: usize) -> Result<IntegrationConfig> {
        if steps == 0 {
            return Err(GlmError::Config("step count must be positive".into()));
        }
        let sys = self.system()?;
        let mut cfg = IntegrationConfig::for_steps(sys.as_ref(), steps);
        if matches!(self, ProblemSpec::Cusp(_)) {
            cfg.dense_threshold = 0;
        }
        Ok(cfg)
    }
}

/// Per-run overrides applied on top of [`ProblemSpec::config`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub workers: usize,
    /// `None` keeps the family default.
    pub ending: Option<EndingProcedure>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { workers: 1, ending: None }
    }
}

impl RunSettings {
    pub fn apply(&self, cfg: IntegrationConfig) -> IntegrationConfig {
        let cfg = cfg.with_workers(self.workers);
        match self.ending {
            Some(e) => cfg.with_ending(e),
            None => cfg,
        }
    }
}

/// Everything needed to replay one integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: MethodSpec,
    pub problem: ProblemSpec,
    pub config: IntegrationConfig,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(method: MethodSpec, problem: ProblemSpec, config: IntegrationConfig) -> Self {
        RunManifest {
            method,
            problem,
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GlmError::Schema(format!("run manifest: {e}")))
    }

    pub fn replay(&self) -> Result<IntegrationOutput> {
        let t = self.method.build()?;
        let sys = self.problem.system()?;
        integrate(&t, sys.as_ref(), &self.config)
    }
}
