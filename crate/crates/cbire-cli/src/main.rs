//! Command-line driver for the branching-process laboratory.
//!
//! Loads a model document, dispatches one subcommand, and writes seeded
//! artifacts (`report.json` plus `table.csv`) into the output directory.
//! Every stochastic subcommand requires an explicit `--seed`; reruns with
//! the same arguments produce byte-identical CSV output.
//!
//! Exit codes: 0 when every check passes, 1 when the model or an
//! experiment fails an assertion, 2 on configuration or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbire::config::validate;
use cbire::ergodicity::{
    coupling_bound_experiment, domination_experiment, first_moment_experiment, tv_decay_experiment,
    wasserstein_decay_experiment, CouplingParams, DominationParams, ExperimentReport,
    FirstMomentParams, TvParams, WassersteinParams,
};
use cbire::moments::{decay_bound, mean_total_mass, pi, pi_prime, spectral_of};
use cbire::simulate::simulate_annealed;
use cbire::{Error, ModelSpec64, Vec2, V2};

#[derive(Parser)]
#[command(
    name = "cbire",
    version,
    about = "Numerical laboratory for two-type branching processes with \
             immigration in a random environment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document against every standing assumption.
    Validate(ValidateArgs),
    /// Simulate an annealed trajectory ensemble and write it to CSV.
    Simulate(SimulateArgs),
    /// Tabulate first-moment weights, spectral data, and the decay bound.
    Moments(MomentsArgs),
    /// Transport distance to the stationary law along a time grid.
    WassersteinDecay(WassersteinArgs),
    /// Total-variation bound via the extinction functional.
    TvDecay(TvArgs),
    /// Coupled-path upper bound and transport lower bound.
    CouplingBound(CouplingArgs),
    /// Simulated mean mass against the closed-form first moment.
    FirstMoment(FirstMomentArgs),
    /// Domination chain and extinction-functional tail.
    Domination(DominationArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Model document (JSON).
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Directory receiving report.json and table.csv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Seed embedded in the artifacts; validation itself draws nothing.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    /// Horizon of each trajectory.
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    #[arg(long, default_value_t = 256)]
    n_paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    /// Largest tabulated time.
    #[arg(long, default_value_t = 5.0)]
    t_max: f64,
    /// Number of equally spaced rows.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Seed embedded in the artifacts; the table is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct WassersteinArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 2.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    /// Comma-separated time grid.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1..,
        default_values_t = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5]
    )]
    times: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    n_paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Stationary chain burn-in; defaults to 8 / rho.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Stationary chain spacing; defaults to 2 / rho.
    #[arg(long)]
    thinning: Option<f64>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TvArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    /// Comma-separated time grid.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1..,
        default_values_t = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
    )]
    times: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    n_paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Stationary chain burn-in; defaults to 8 / rho.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Stationary chain spacing; defaults to 2 / rho.
    #[arg(long)]
    thinning: Option<f64>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct CouplingArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 0.0)]
    x2: f64,
    #[arg(long, default_value_t = 0.0)]
    y1: f64,
    #[arg(long, default_value_t = 1.0)]
    y2: f64,
    /// Comma-separated time grid.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5, 1.0, 2.0])]
    times: Vec<f64>,
    /// Coupled paths behind the upper bound.
    #[arg(long, default_value_t = 2000)]
    n_paths: usize,
    /// Ensemble size per side of the transport lower bound.
    #[arg(long, default_value_t = 512)]
    n_w1: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct FirstMomentArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    /// Comma-separated time grid.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5, 1.0, 2.0])]
    times: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct DominationArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Comma-separated times for the domination chain.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5, 1.0, 2.0])]
    times: Vec<f64>,
    /// Comma-separated times for the extinction tail.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1..,
        default_values_t = [1.0, 2.0, 3.0, 5.0, 8.0, 12.0]
    )]
    tail_times: Vec<f64>,
    /// Per-component terminal levels; the grid is their product.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5, 1.0, 2.0])]
    lambda_levels: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    n_paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> cbire::Result<ExitCode> {
    match command {
        Command::Validate(args) => run_validate(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Moments(args) => run_moments(&args),
        Command::WassersteinDecay(args) => run_experiment(&args.io, |model| {
            wasserstein_decay_experiment(
                model,
                &WassersteinParams {
                    x: Vec2::new(args.x1, args.x2),
                    time_grid: args.times.clone(),
                    n_paths: args.n_paths,
                    dt: args.dt,
                    burn_in: args.burn_in,
                    thinning: args.thinning,
                    seed: args.seed,
                },
            )
        }),
        Command::TvDecay(args) => run_experiment(&args.io, |model| {
            tv_decay_experiment(
                model,
                &TvParams {
                    x: Vec2::new(args.x1, args.x2),
                    time_grid: args.times.clone(),
                    n_paths: args.n_paths,
                    dt: args.dt,
                    burn_in: args.burn_in,
                    thinning: args.thinning,
                    seed: args.seed,
                },
            )
        }),
        Command::CouplingBound(args) => run_experiment(&args.io, |model| {
            coupling_bound_experiment(
                model,
                &CouplingParams {
                    x: Vec2::new(args.x1, args.x2),
                    y: Vec2::new(args.y1, args.y2),
                    time_grid: args.times.clone(),
                    n_paths: args.n_paths,
                    n_w1: args.n_w1,
                    dt: args.dt,
                    seed: args.seed,
                },
            )
        }),
        Command::FirstMoment(args) => run_experiment(&args.io, |model| {
            first_moment_experiment(
                model,
                &FirstMomentParams {
                    x: Vec2::new(args.x1, args.x2),
                    time_grid: args.times.clone(),
                    n_paths: args.n_paths,
                    dt: args.dt,
                    seed: args.seed,
                },
            )
        }),
        Command::Domination(args) => run_experiment(&args.io, |model| {
            let lambda_grid: Vec<V2> = args
                .lambda_levels
                .iter()
                .flat_map(|&a| args.lambda_levels.iter().map(move |&b| Vec2::new(a, b)))
                .collect();
            domination_experiment(
                model,
                &DominationParams {
                    varphi: model.dominating_or_default(),
                    t_grid: args.times.clone(),
                    lambda_grid,
                    tail_grid: args.tail_times.clone(),
                    n_paths: args.n_paths,
                    dt: args.dt,
                    seed: args.seed,
                },
            )
        }),
    }
}

fn ensure_out_dir(dir: &Path) -> cbire::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Shared flow of the experiment subcommands: load, pre-validate (exit 1
/// when the model itself fails), run, write artifacts, then report. An
/// extinction-functional blow-up is an assertion failure (exit 1), every
/// other error a configuration one (exit 2).
fn run_experiment(
    io: &IoArgs,
    f: impl FnOnce(&ModelSpec64) -> cbire::Result<ExperimentReport>,
) -> cbire::Result<ExitCode> {
    let model = ModelSpec64::load(&io.model)?;
    let validation = validate(&model);
    if !validation.passed() {
        eprintln!(
            "model fails validation checks: {}",
            validation.failed_names().join(", ")
        );
        return Ok(ExitCode::from(1));
    }
    match f(&model) {
        Ok(report) => {
            ensure_out_dir(&io.out)?;
            report.write_json(&io.out.join("report.json"))?;
            report.write_csv(&io.out.join("table.csv"))?;
            print_report(&report, &io.out);
            Ok(ExitCode::from(if report.passed { 0 } else { 1 }))
        }
        Err(e @ Error::BlowUpPaths { .. }) => {
            eprintln!("experiment failed: {e}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e),
    }
}

fn print_report(report: &ExperimentReport, out: &Path) {
    println!(
        "experiment {} model {} seed {}",
        report.experiment, report.model_hash, report.seed
    );
    for r in &report.records {
        println!(
            "  t = {:<6} {:<32} estimate {:>13.6e} reference {:>13.6e} {}",
            r.t,
            r.check,
            r.estimate,
            r.reference,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
    println!(
        "{} (artifacts in {})",
        if report.passed { "PASS" } else { "FAIL" },
        out.display()
    );
}

fn run_validate(args: &ValidateArgs) -> cbire::Result<ExitCode> {
    let model = ModelSpec64::load(&args.io.model)?;
    let report = validate(&model);
    println!("model {} seed {}", model.hash(), args.seed);
    for check in &report.checks {
        println!(
            "  {:<44} {}  {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.detail
        );
    }
    let json = serde_json::json!({
        "experiment": "validate",
        "model_hash": model.hash(),
        "seed": args.seed,
        "checks": report
            .checks
            .iter()
            .map(|c| {
                serde_json::json!({
                    "name": c.name,
                    "passed": c.passed,
                    "detail": c.detail,
                })
            })
            .collect::<Vec<_>>(),
        "passed": report.passed(),
    });
    ensure_out_dir(&args.io.out)?;
    std::fs::write(args.io.out.join("report.json"), format!("{:#}\n", json))?;
    println!(
        "{} (artifacts in {})",
        if report.passed() { "PASS" } else { "FAIL" },
        args.io.out.display()
    );
    Ok(ExitCode::from(if report.passed() { 0 } else { 1 }))
}

fn run_simulate(args: &SimulateArgs) -> cbire::Result<ExitCode> {
    let model = ModelSpec64::load(&args.io.model)?;
    let validation = validate(&model);
    if !validation.passed() {
        eprintln!(
            "model fails validation checks: {}",
            validation.failed_names().join(", ")
        );
        return Ok(ExitCode::from(1));
    }
    let x = Vec2::new(args.x1, args.x2);
    let set = simulate_annealed(&model, x, args.t, args.n_paths, args.dt, args.seed)?;
    let mut csv = format!("# model={} seed={}\n", model.hash(), args.seed);
    csv.push_str(&set.to_csv());
    ensure_out_dir(&args.io.out)?;
    std::fs::write(args.io.out.join("table.csv"), csv)?;
    let json = serde_json::json!({
        "experiment": "simulate",
        "model_hash": model.hash(),
        "seed": args.seed,
        "params": {
            "x": format!("({}, {})", args.x1, args.x2),
            "t": args.t,
            "n_paths": args.n_paths,
            "dt": args.dt,
        },
        "metrics": {
            "rate_warnings": set.rate_warnings(),
        },
    });
    std::fs::write(args.io.out.join("report.json"), format!("{:#}\n", json))?;
    println!(
        "simulated {} paths to t = {} (artifacts in {})",
        args.n_paths,
        args.t,
        args.io.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_moments(args: &MomentsArgs) -> cbire::Result<ExitCode> {
    use std::fmt::Write as _;
    let model = ModelSpec64::load(&args.io.model)?;
    let validation = validate(&model);
    if !validation.passed() {
        eprintln!(
            "model fails validation checks: {}",
            validation.failed_names().join(", ")
        );
        return Ok(ExitCode::from(1));
    }
    if args.steps == 0 || !(args.t_max.is_finite() && args.t_max > 0.0) {
        return Err(Error::InvalidInput(
            "steps must be positive and t-max finite and positive".into(),
        ));
    }
    let spectral = spectral_of(&model)?;
    let x = Vec2::new(args.x1, args.x2);
    let beta = model.env.beta();
    let b = model.branching.b;

    let mut csv = format!("# model={} seed={}\n", model.hash(), args.seed);
    csv.push_str(
        "t,pi_prime_1,pi_prime_2,pi_1,pi_2,mean_total_mass,weighted_gap,weighted_gap_bound\n",
    );
    for k in 1..=args.steps {
        let t = args.t_max * k as f64 / args.steps as f64;
        let p_prime = pi_prime(b, t);
        let p = pi(b, beta, t);
        let mass = mean_total_mass(b, beta, &model.immigration, x, t);
        let (lhs, rhs) = decay_bound(&spectral, x, Vec2::zero(), t);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            t, p_prime.x1, p_prime.x2, p.x1, p.x2, mass, lhs, rhs
        );
    }
    ensure_out_dir(&args.io.out)?;
    std::fs::write(args.io.out.join("table.csv"), csv)?;

    let metrics: serde_json::Map<String, serde_json::Value> = spectral
        .metrics()
        .into_iter()
        .map(|(name, value)| (name.to_string(), serde_json::json!(value)))
        .collect();
    let json = serde_json::json!({
        "experiment": "moments",
        "model_hash": model.hash(),
        "seed": args.seed,
        "params": {
            "x": format!("({}, {})", args.x1, args.x2),
            "t_max": args.t_max,
            "steps": args.steps,
        },
        "metrics": metrics,
    });
    std::fs::write(args.io.out.join("report.json"), format!("{:#}\n", json))?;
    println!(
        "tabulated {} rows to t = {} (artifacts in {})",
        args.steps,
        args.t_max,
        args.io.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
