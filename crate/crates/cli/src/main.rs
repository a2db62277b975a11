use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swe_esdg::bench::{ratio_csv, ratio_sweep, SweepConfig, DEFAULT_SIZES};
use swe_esdg::config::{run_experiment, RunConfig};
use swe_esdg::diagnostics::{
    atomic_write, convergence_study, invariants_csv, study_csv, Problem, StudyCase,
};
use swe_esdg::par;
use swe_esdg::quadrature::{
    sbp_rule, surface_rule, verify_exactness, verify_sbp_rule, verify_surface_exactness,
    volume_rule, EdgeFamily, MAX_DEGREE, MAX_SBP_DEGREE, MIN_DEGREE,
};
use swe_esdg::refelem::{build_traditional_sbp, RefOperators};
use swe_esdg::solver::Scheme;
use swe_esdg::Error;

/// Operator residuals above this fail `verify-operators`.
const OPERATOR_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "swe-esdg",
    version,
    about = "Entropy stable DG for the shallow water equations"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check positivity and exactness of every quadrature rule
    VerifyQuadrature {
        #[arg(long, default_value = "legendre")]
        family: EdgeFamily,
    },
    /// Print the residual of each reference operator identity
    VerifyOperators {
        #[arg(long)]
        degree: usize,
        #[arg(long, default_value = "legendre")]
        family: EdgeFamily,
    },
    /// Run one experiment
    Run(Box<RunArgs>),
    /// Vortex error over a sequence of refinements
    Convergence(ConvergenceArgs),
    /// Time flux differencing against a matrix-vector product
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; flags below override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Switching problems resets every other entry to that problem's defaults
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    warp: Option<String>,
    #[arg(long)]
    periodic: Option<String>,
    #[arg(long)]
    cfl: Option<String>,
    #[arg(long)]
    tfinal: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    every: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    degree: Vec<usize>,
    #[arg(long, default_value = "hybridized")]
    scheme: Scheme,
    /// Cells in y per level; x uses twice as many
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    ny: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    warp: f64,
    #[arg(long, default_value_t = 0.125)]
    cfl: f64,
    #[arg(long, default_value_t = 0.5)]
    tfinal: f64,
    #[arg(long, default_value = "vortex")]
    problem: Problem,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Starting element count, doubled while runs are too short to time
    #[arg(long, default_value_t = 64)]
    elements: usize,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    warmups: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Verification,
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::DegreeOutOfRange { .. } => {
                Failure::Usage(format!("error [{}]: {e}", e.module()))
            }
            other => Failure::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::VerifyQuadrature { family } => verify_quadrature(family),
        Command::VerifyOperators { degree, family } => verify_operators(degree, family),
        Command::Run(a) => run(*a),
        Command::Convergence(a) => convergence(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error [{}]: {e}", e.module());
            ExitCode::from(1)
        }
    }
}

fn status(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn verify_quadrature(family: EdgeFamily) -> Result<(), Failure> {
    println!(
        "{:<12} {:>3} {:>6} {:>7} {:>12} {:>10}  status",
        "rule", "N", "degree", "points", "max error", "min weight"
    );
    let mut ok = true;
    let mut row =
        |kind: &str, n: usize, degree: usize, points: usize, err: f64, wmin: f64, pass: bool| {
            ok &= pass;
            println!(
                "{kind:<12} {n:>3} {degree:>6} {points:>7} {err:>12.3e} {wmin:>10.3e}  {}",
                status(pass)
            );
        };
    for n in MIN_DEGREE..=MAX_DEGREE {
        let v = volume_rule(n)?;
        let r = verify_exactness(&v, 2 * n);
        let wmin = v.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        row(
            "volume",
            n,
            2 * n,
            v.len(),
            r.max_error,
            wmin,
            r.pass && wmin > 0.0,
        );
        let s = surface_rule(n)?;
        let r = verify_surface_exactness(&s, 2 * n + 1);
        let wmin = s.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        row(
            "surface",
            n,
            2 * n + 1,
            s.points.len(),
            r.max_error,
            wmin,
            r.pass && wmin > 0.0,
        );
    }
    for n in MIN_DEGREE..=MAX_SBP_DEGREE {
        let kind = format!("sbp-{family}");
        match sbp_rule(n, family) {
            Ok(rule) => {
                let r = verify_exactness(&rule.volume, 2 * n - 1);
                let wmin = rule
                    .volume
                    .weights
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                let pass = r.pass && verify_sbp_rule(&rule).is_ok();
                row(
                    &kind,
                    n,
                    2 * n - 1,
                    rule.volume.len(),
                    r.max_error,
                    wmin,
                    pass,
                );
            }
            Err(e @ Error::SbpRuleUnavailable { .. }) => {
                println!(
                    "{kind:<12} {n:>3} {:>6} {:>7} {:>12} {:>10}  skipped: {e}",
                    2 * n - 1,
                    "-",
                    "-",
                    "-"
                );
            }
            Err(e) => return Err(e.into()),
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn verify_operators(degree: usize, family: EdgeFamily) -> Result<(), Failure> {
    let mut rows: Vec<(String, f64)> = Vec::new();
    let ops = RefOperators::new(degree)?;
    rows.extend(
        ops.identity_residuals()
            .into_iter()
            .map(|(n, r)| (format!("hybridized: {n}"), r)),
    );
    match sbp_rule(degree, family) {
        Ok(rule) => {
            let on = RefOperators::on_sbp_rule(&rule)?;
            let sbp = build_traditional_sbp(&on, &rule)?;
            rows.extend(
                sbp.identity_residuals()
                    .into_iter()
                    .map(|(n, r)| (format!("sbp-{family}: {n}"), r)),
            );
        }
        Err(e @ Error::SbpRuleUnavailable { .. }) => println!("# sbp-{family} skipped: {e}"),
        Err(e) => return Err(e.into()),
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    println!("# N = {degree}, tolerance {OPERATOR_TOL:e}");
    let mut ok = true;
    for (name, r) in rows {
        let pass = r <= OPERATOR_TOL;
        ok &= pass;
        println!("{name:<width$}  {r:>10.3e}  {}", status(pass));
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn resolve_run(a: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::new(Problem::Lake),
    };
    let overrides = [
        ("run.problem", &a.problem),
        ("run.degree", &a.degree),
        ("run.scheme", &a.scheme),
        ("run.penalty", &a.penalty),
        ("run.cfl", &a.cfl),
        ("run.tfinal", &a.tfinal),
        ("run.g", &a.g),
        ("run.threads", &a.threads),
        ("run.seed", &a.seed),
        ("mesh.nx", &a.nx),
        ("mesh.ny", &a.ny),
        ("mesh.warp", &a.warp),
        ("mesh.periodic", &a.periodic),
        ("output.dir", &a.out_dir),
        ("output.every", &a.every),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = resolve_run(&a)?;
    for line in cfg.to_string().lines() {
        println!("# {line}");
    }
    let s = run_experiment(&cfg)?;
    println!("# elements = {}, dt = {:e}", s.num_elements, s.dt);
    println!("# initial max |du/dt| = {:.3e}", s.initial_residual);
    print!("{}", invariants_csv(&s.invariants));
    if let Some(e) = &s.error {
        println!(
            "# L2 error at t = {}: h {:.6e}, hu {:.6e}, hv {:.6e}, total {:.6e}",
            s.state.t, e.fields[0], e.fields[1], e.fields[2], e.total
        );
    }
    for f in &s.files {
        println!("# wrote {}", f.display());
    }
    Ok(())
}

fn write_out(dir: &Option<PathBuf>, name: &str, text: &str) -> Result<(), Failure> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(Error::from)?;
        let p = d.join(name);
        atomic_write(&p, text.as_bytes())?;
        println!("# wrote {}", p.display());
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> Result<(), Failure> {
    if a.problem != Problem::Vortex {
        return Err(Failure::Usage(
            "error [config]: convergence studies need an exact solution; only `vortex` has one"
                .into(),
        ));
    }
    if !(a.cfl > 0.0) || !(a.tfinal >= 0.0) {
        return Err(Failure::Usage(
            "error [config]: need cfl > 0 and tfinal >= 0".into(),
        ));
    }
    println!(
        "# problem = {}, scheme = {}, degree = {:?}, ny = {:?}, warp = {}, cfl = {}, tfinal = {}, threads = {}, seed = {}",
        a.problem, a.scheme, a.degree, a.ny, a.warp, a.cfl, a.tfinal, a.threads, a.seed
    );
    let cases: Vec<StudyCase> = a
        .degree
        .iter()
        .flat_map(|&n| {
            a.ny.iter().map(move |&ny| StudyCase {
                scheme: a.scheme,
                n,
                nx: 2 * ny,
                ny,
                warp: a.warp,
            })
        })
        .collect();
    let rows = par::with_threads(a.threads, || convergence_study(&cases, a.tfinal, a.cfl));
    let csv = study_csv(&rows);
    print!("{csv}");
    write_out(&a.out_dir, "errors.csv", &csv)?;
    if rows.iter().any(|r| r.result.is_err()) {
        return Err(Failure::Verification);
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let sizes = a.sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
    if sizes.iter().any(|&n| n < 2) || a.elements == 0 {
        return Err(Failure::Usage(
            "error [config]: sizes must be >= 2 and elements > 0".into(),
        ));
    }
    let cfg = SweepConfig {
        sizes,
        k: a.elements,
        threads: a.threads,
        seed: a.seed,
        warmups: a.warmups,
        reps: a.reps,
        ..SweepConfig::default()
    };
    println!(
        "# sizes = {:?}, elements = {}, threads = {}, seed = {}, reps = {}, warmups = {}, parallel = {}",
        cfg.sizes, cfg.k, cfg.threads, cfg.seed, cfg.reps.max(5), cfg.warmups.max(2), par::PARALLEL
    );
    let reports = ratio_sweep(&cfg);
    let csv = ratio_csv(&reports);
    print!("{csv}");
    if let Some(p) = &a.out {
        write_file(p, &csv)?;
    }
    Ok(())
}

fn write_file(p: &Path, text: &str) -> Result<(), Failure> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).map_err(Error::from)?;
    }
    atomic_write(p, text.as_bytes())?;
    println!("# wrote {}", p.display());
    Ok(())
}
