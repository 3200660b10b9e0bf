//! Command-line runner for the verification suites.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nlgauge_cli::model::{self, Model};
use nlgauge_cli::plotdata::{emit_plotdata, Trajectory};
use nlgauge_cli::report::Report;
use nlgauge_cli::suites::{self, GroupoidChoice};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "nlgauge",
    version,
    about = "Numerically certifies algebroid, gauge-field, and groupoid identities on declarative models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to a TOML model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Name of a bundled model (or groupoid for `finite-groupoid`).
    #[arg(long, global = true)]
    builtin: Option<String>,

    /// Override the model seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the gauge tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Override the sample point count.
    #[arg(long, global = true)]
    points: Option<usize>,

    /// Directory for report and CSV output (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: `json` writes the report only, `csv` also dumps
    /// trajectory files (requires --out).
    #[arg(long, global = true, default_value = "json")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check the algebroid axioms (antisymmetry, anchor, Jacobi, d^2 = 0).
    ValidateAlgebroid,
    /// Flat-versus-morphism verdicts on seeded gauge fields.
    CheckFlat,
    /// Finite gauge transforms against 100-step flows; curvature conjugation.
    GaugeFlow,
    /// Gauge invariance of the curvature operator (order-2 ratio test).
    Covariance,
    /// Interval holonomy: consistency, drift under homotopies, separation.
    Weinstein,
    /// Exhaustive finite-groupoid and principal-bundle identities.
    FiniteGroupoid,
    /// Poisson sigma model two-route equations of motion.
    Psm,
    /// Every suite the model selects.
    All,
}

fn main() {
    match run() {
        Ok(pass) => std::process::exit(if pass { 0 } else { 1 }),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn load(cli: &Cli) -> Result<Model> {
    let mut m = match (&cli.model, &cli.builtin) {
        (Some(path), None) => model::load_model(path)?,
        (None, Some(name)) => model::load_builtin_model(name)?,
        (None, None) => model::load_builtin_model("default")?,
        (Some(_), Some(_)) => bail!("pass either --model or --builtin, not both"),
    };
    if let Some(seed) = cli.seed {
        m.params.seed = seed;
    }
    if let Some(tol) = cli.tol {
        m.params.tol = tol;
    }
    if let Some(points) = cli.points {
        m.params.points = points;
    }
    Ok(m)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    if cli.format != "json" && cli.format != "csv" {
        bail!("--format must be `json` or `csv`");
    }

    let (report, trajectories) = match &cli.command {
        Command::FiniteGroupoid => {
            // the exact suite stands alone; --builtin picks the groupoid
            let choice = match cli.builtin.as_deref() {
                None => GroupoidChoice::Both,
                Some(name) => GroupoidChoice::parse(name)
                    .with_context(|| format!("unknown groupoid `{name}` (pair4, z3, both)"))?,
            };
            let seed = cli.seed.unwrap_or(42);
            let mut report = Report::new("finite-groupoid", seed);
            let t0 = Instant::now();
            let suite = suites::finite_groupoid_suite(choice, seed);
            report.push(suite, t0.elapsed().as_millis() as u64);
            (report, Vec::new())
        }
        command => {
            let model = load(&cli)?;
            match command {
                Command::All => suites::run_all(&model),
                other => {
                    let name = match other {
                        Command::ValidateAlgebroid => "algebroid",
                        Command::CheckFlat => "flat",
                        Command::GaugeFlow => "gauge-flow",
                        Command::Covariance => "covariance",
                        Command::Weinstein => "weinstein",
                        Command::Psm => "psm",
                        Command::All | Command::FiniteGroupoid => unreachable!(),
                    };
                    let mut report = Report::new(&model.name, model.params.seed);
                    let t0 = Instant::now();
                    let (suite, traj) = suites::run_suite(name, &model);
                    report.push(suite, t0.elapsed().as_millis() as u64);
                    (report, traj)
                }
            }
        }
    };

    emit(&cli, &report, &trajectories)?;
    for suite in &report.suites {
        let failures = suite.failures();
        if !failures.is_empty() {
            eprintln!("suite `{}` failed: {}", suite.name, failures.join(", "));
        }
    }
    Ok(report.pass)
}

fn emit(cli: &Cli, report: &Report, trajectories: &[Trajectory]) -> Result<()> {
    match &cli.out {
        None => {
            println!("{}", report.to_json());
            if cli.format == "csv" && !trajectories.is_empty() {
                bail!("--format csv needs --out to place the trajectory files");
            }
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("report.json");
            let tmp = dir.join("report.json.tmp");
            std::fs::write(&tmp, report.to_json())
                .with_context(|| format!("writing {}", tmp.display()))?;
            std::fs::rename(&tmp, &path)
                .with_context(|| format!("moving {} into place", path.display()))?;
            if cli.format == "csv" {
                emit_plotdata(trajectories, dir)?;
            }
        }
    }
    Ok(())
}
