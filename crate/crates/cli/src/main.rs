use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use parglm_core::harness::{self, ReferenceSolution, RunSettings};
use parglm_core::problems::solution_error;
use parglm_core::stability::GridSpec;
use parglm_core::tableau::{read_tableau_file, write_tableau_file};
use parglm_core::{
    AbscissaeChoice, AllenCahnConfig, CuspConfig, EndingProcedure, Family, GlmError, ImexGlmTableau, MethodSpec,
    ProblemSpec, RunManifest,
};

#[derive(Parser)]
#[command(name = "parglm", version, about = "Parallel IMEX general linear methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a tableau and write it as JSON.
    Derive(DeriveArgs),
    /// Check the order conditions of a tableau file.
    Verify(VerifyArgs),
    /// Scan constrained nonstiff stability regions.
    Stability(StabilityArgs),
    /// Integrate one problem with one step size.
    Integrate(IntegrateArgs),
    /// Run a step-count ladder and fit the order.
    Convergence(ConvergenceArgs),
    /// Work-precision measurements across worker counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Dimsim,
    Ensemble,
}

#[derive(Clone, Copy, ValueEnum)]
enum AbscissaeArg {
    Unit,
    Integer,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Cusp,
    Allencahn,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndingArg {
    Final,
    Corrected,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: Option<FamilyArg>,
    #[arg(long)]
    order: Option<usize>,
    /// Defaults to unit up to order 4 and integer above.
    #[arg(long, value_enum)]
    abscissae: Option<AbscissaeArg>,
    #[arg(long)]
    lambda: Option<f64>,
}

impl MethodArgs {
    fn spec(&self, family: Option<FamilyArg>, order: Option<usize>) -> Result<MethodSpec, Failure> {
        let family = family.or(self.method).ok_or_else(|| usage("a method family is required (--method)"))?;
        let order = order.or(self.order).ok_or_else(|| usage("an order is required (--order)"))?;
        let family = match family {
            FamilyArg::Dimsim => Family::Dimsim,
            FamilyArg::Ensemble => Family::Ensemble,
        };
        let mut spec = MethodSpec::new(family, order);
        if let Some(a) = self.abscissae {
            spec = spec.with_abscissae(match a {
                AbscissaeArg::Unit => AbscissaeChoice::UnitInterval,
                AbscissaeArg::Integer => AbscissaeChoice::IntegerTail,
            });
        }
        if let Some(l) = self.lambda {
            spec = spec.with_lambda(l);
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, value_enum)]
    problem: Option<ProblemArg>,
    /// Grid parameter: CUSP cells or Allen–Cahn points per side.
    #[arg(long)]
    grid_n: Option<usize>,
    /// CUSP stiffness parameter.
    #[arg(long)]
    eps: Option<f64>,
    /// Linear test coefficients (real).
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    xi_hat: Option<f64>,
    /// Final time (the start is always 0).
    #[arg(long)]
    tf: Option<f64>,
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec, Failure> {
        let problem = self.problem.ok_or_else(|| usage("a problem is required (--problem)"))?;
        Ok(match problem {
            ProblemArg::Cusp => {
                let mut cfg = CuspConfig::default();
                if let Some(n) = self.grid_n {
                    cfg.n = n;
                }
                if let Some(e) = self.eps {
                    cfg.eps = e;
                }
                if let Some(tf) = self.tf {
                    cfg.tspan.1 = tf;
                }
                ProblemSpec::Cusp(cfg)
            }
            ProblemArg::Allencahn => {
                let mut cfg = AllenCahnConfig::default();
                if let Some(n) = self.grid_n {
                    cfg.n = n;
                }
                if let Some(tf) = self.tf {
                    cfg.tspan.1 = tf;
                }
                ProblemSpec::AllenCahn(cfg)
            }
            ProblemArg::Linear => ProblemSpec::Linear {
                xi: [self.xi.unwrap_or(-1.0), 0.0],
                xi_hat: [self.xi_hat.unwrap_or(-100.0), 0.0],
                y0: 1.0,
                tf: self.tf.unwrap_or(1.0),
            },
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Defaults to corrected for ensemble methods, final otherwise.
    #[arg(long, value_enum)]
    ending: Option<EndingArg>,
    /// Where computed reference solutions are cached.
    #[arg(long)]
    reference_cache: Option<PathBuf>,
}

impl RunArgs {
    fn ending(&self) -> Option<EndingProcedure> {
        self.ending.map(|e| match e {
            EndingArg::Final => EndingProcedure::FinalStage,
            EndingArg::Corrected => EndingProcedure::CorrectedZeroAbscissa,
        })
    }

    fn settings(&self, workers: usize) -> RunSettings {
        RunSettings {
            workers,
            ending: self.ending(),
        }
    }

    fn reference(&self, problem: &ProblemSpec) -> Result<ReferenceSolution, Failure> {
        let dir = self
            .reference_cache
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("parglm-reference"));
        Ok(ReferenceSolution::resolve(problem, None, Some(&dir))?)
    }
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(id = "family_pos", value_name = "FAMILY", value_enum)]
    family: Option<FamilyArg>,
    #[arg(id = "order_pos", value_name = "ORDER")]
    order: Option<usize>,
    #[command(flatten)]
    method: MethodArgs,
    /// Tableau file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    tableau: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    /// Tableau file; otherwise the method flags are used.
    tableau: Option<PathBuf>,
    #[command(flatten)]
    method: MethodArgs,
    /// Sector angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,75,90")]
    alpha: Vec<f64>,
    /// `re_min,re_max,im_min,im_max,n_re,n_im`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Output directory for the per-angle CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct IntegrateArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
    /// Final state as `index,value` CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step diagnostics CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Replay a stored manifest instead of the method and problem flags.
    #[arg(long, conflicts_with_all = ["method", "order", "problem", "steps"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Step counts; a six-rung default ladder when omitted.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Worker counts; `1` and the stage count when omitted.
    #[arg(long, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<GlmError> for Failure {
    fn from(e: GlmError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(msg: &str) -> Failure {
    Failure::Validation(msg.to_string())
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn derive(args: &DeriveArgs) -> Result<(), Failure> {
    let spec = args.method.spec(args.family, args.order)?;
    let (t, summary) = harness::derive(&spec)?;
    let report = format!(
        "method {}\nlambda {}\nmax_coefficient {}\norder_residual {:e} (tolerance {:e})",
        summary.method, summary.lambda, summary.max_coefficient, summary.residual, summary.tolerance
    );
    match &args.out {
        Some(path) => {
            write_tableau_file(&t, path)?;
            println!("{report}\nwritten {}", path.display());
        }
        None => {
            eprintln!("{report}");
            print!("{}", parglm_core::write_tableau(&t));
        }
    }
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let t = read_tableau_file(&args.tableau)?;
    let report = harness::verify(&t)?;
    for (name, r) in report.residual.blocks() {
        println!("{name} {r:e}");
    }
    println!("tolerance {:e}", report.tolerance);
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        let (name, r) = report.failing_blocks()[0];
        println!("FAIL");
        Err(Failure::Validation(format!("order conditions violated, worst block {name} ({r:e})")))
    }
}

fn tableau_or_method(path: Option<&Path>, method: &MethodArgs) -> Result<ImexGlmTableau, Failure> {
    match path {
        Some(p) => Ok(read_tableau_file(p)?),
        None => Ok(method.spec(None, None)?.build()?),
    }
}

fn stability(args: &StabilityArgs) -> Result<(), Failure> {
    let t = tableau_or_method(args.tableau.as_deref(), &args.method)?;
    let grid = match &args.grid {
        Some(g) => {
            if g.len() != 6 {
                return Err(usage("--grid takes re_min,re_max,im_min,im_max,n_re,n_im"));
            }
            let count = |x: f64| {
                (x >= 1.0 && x.fract() == 0.0)
                    .then_some(x as usize)
                    .ok_or_else(|| usage("grid resolutions must be positive integers"))
            };
            GridSpec {
                re_min: g[0],
                re_max: g[1],
                im_min: g[2],
                im_max: g[3],
                n_re: count(g[4])?,
                n_im: count(g[5])?,
            }
        }
        None => GridSpec::default(),
    };
    let regions = harness::stability_scan(&t, &args.alpha, grid)?;
    std::fs::create_dir_all(&args.out)?;
    println!("alpha_deg,accepted_cells,area,file");
    for (alpha, region) in args.alpha.iter().zip(&regions) {
        let path = args.out.join(format!("region_alpha{alpha}.csv"));
        region.write_csv(BufWriter::new(File::create(&path)?))?;
        println!("{alpha},{},{},{}", region.accepted_cells(), region.area(), path.display());
    }
    Ok(())
}

fn integrate(args: &IntegrateArgs) -> Result<(), Failure> {
    let manifest = match &args.replay {
        Some(path) => RunManifest::from_json(&std::fs::read_to_string(path)?)?,
        None => {
            let method = args.method.spec(None, None)?;
            let problem = args.problem.spec()?;
            let steps = args.steps.ok_or_else(|| usage("--steps is required"))?;
            let config = args.run.settings(args.workers).apply(problem.config(steps)?);
            RunManifest::new(method, problem, config)
        }
    };
    if let Some(path) = &args.manifest {
        std::fs::write(path, manifest.to_json())?;
    }
    let out = manifest.replay()?;
    let sys = manifest.problem.system()?;
    eprintln!(
        "{} on {}: t = {}, newton iterations {}, wall {:.1} ms",
        manifest.method,
        manifest.problem.name(),
        out.t,
        out.diagnostics.newton_iters_total,
        out.diagnostics.wall_ms
    );
    if let Some(exact) = ReferenceSolution::exact(&manifest.problem)? {
        eprintln!("error {:e}", solution_error(sys.as_ref(), &out.y, &exact.vector()));
    }
    if let Some(path) = &args.diagnostics {
        out.diagnostics.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "index,value")?;
    for (i, v) in out.y.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn convergence(args: &ConvergenceArgs) -> Result<(), Failure> {
    let method = args.method.spec(None, None)?;
    let problem = args.problem.spec()?;
    let steps = args
        .steps
        .clone()
        .unwrap_or_else(|| harness::desk_ladder(&problem, method.family, method.order));
    let reference = args.run.reference(&problem)?;
    let report = harness::run_convergence(&method, &problem, &steps, &reference, &args.run.settings(args.workers))?;
    let mut w = output(args.out.as_deref())?;
    report.write_csv(&mut w)?;
    w.flush()?;
    eprintln!("{method} on {}: fitted order {:.3}", problem.name(), report.fitted_order);
    for r in report.failures() {
        eprintln!("steps {} failed: {}", r.steps, r.failure.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let method = args.method.spec(None, None)?;
    let problem = args.problem.spec()?;
    let t = method.build()?;
    let steps = args
        .steps
        .clone()
        .unwrap_or_else(|| harness::desk_ladder(&problem, method.family, method.order));
    let workers = args.workers.clone().unwrap_or_else(|| vec![1, t.stages()]);
    let reference = args.run.reference(&problem)?;
    let rows = harness::run_bench(&method, &problem, &steps, &workers, &reference, args.run.ending())?;
    let mut w = output(args.out.as_deref())?;
    harness::write_bench_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Derive(a) => derive(a),
        Command::Verify(a) => verify(a),
        Command::Stability(a) => stability(a),
        Command::Integrate(a) => integrate(a),
        Command::Convergence(a) => convergence(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
