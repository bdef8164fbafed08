//! Command-line front end: single runs, parameter sweeps, the linear
//! analysis checks, and the preset listing.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 numerical failure
//! (blow-up, stalled solve), 4 I/O failure.

use clap::{Args, Parser, Subcommand};
use fourdamp::evolution::EvolveError;
use fourdamp::harness::{
    heuristic_deviation, load_config, preset_names, run, run_sweep, undamped_bound_sweep,
    HarnessError, Overrides, RunRecord, HEURISTIC_LADDER,
};
use fourdamp::linkdv::LinkdvError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fourdamp",
    version,
    about = "Artificially damped Fourier evolution of dispersive waves on large domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration to t_final and report the outcome.
    Run(RunArgs),
    /// Expand a configuration's sweep axes and run every cell.
    Sweep(RunArgs),
    /// Check the damped spectral heuristic and the lattice error bounds.
    AnalyzeLinkdv(AnalyzeArgs),
    /// List the built-in run presets.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name (see list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// Evolution equation: kdv|nls|linkdv|riemann-kdv|kawahara|eckhaus.
    #[arg(long)]
    model: Option<String>,
    /// Domain half-width.
    #[arg(long = "L", value_name = "HALF_WIDTH")]
    half_width: Option<f64>,
    /// Grid size, a power of two.
    #[arg(long = "m", value_name = "MODES")]
    modes: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Initial condition: preset name or expr:<formula in x>.
    #[arg(long)]
    initial: Option<String>,
    /// Damping mode: none|exp|heat|both.
    #[arg(long)]
    damping: Option<String>,
    /// Decay mask shape: right|even.
    #[arg(long)]
    gamma: Option<String>,
    /// Sponge diffusion strength.
    #[arg(long)]
    k1: Option<f64>,
    /// Steps between sponge applications.
    #[arg(long)]
    f1: Option<usize>,
    /// Steps between decay-mask applications.
    #[arg(long)]
    f2: Option<usize>,
    #[arg(long = "cg-tol")]
    cg_tol: Option<f64>,
    /// Comparison window as LO:HI (LO may be negative).
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    /// none | analytic | auto | path to a solution CSV.
    #[arg(long)]
    reference: Option<String>,
    /// Domain growth factor for the auto reference.
    #[arg(long = "reference-scale")]
    reference_scale: Option<f64>,
    /// Dispersion coefficient (riemann-kdv only).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output directory for solution CSVs and run records.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Time step for the heuristic ladder evolutions.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Final time for the heuristic ladder evolutions.
    #[arg(long = "t-final", default_value_t = 150.0)]
    t_final: f64,
    /// Skip the solver ladder and only evaluate the lattice bounds.
    #[arg(long)]
    bounds_only: bool,
}

fn parse_window(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("window '{s}' is not LO:HI"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad window low '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad window high '{hi}'"))?;
    Ok([lo, hi])
}

fn overrides_from(args: &RunArgs) -> Result<Overrides, String> {
    Ok(Overrides {
        model: args.model.clone(),
        half_width: args.half_width,
        modes: args.modes,
        dt: args.dt,
        t_final: args.t_final,
        initial: args.initial.clone(),
        mode: args.damping.clone(),
        gamma: args.gamma.clone(),
        k1: args.k1,
        f1: args.f1,
        f2: args.f2,
        cg_tol: args.cg_tol,
        window: args.window.as_deref().map(parse_window).transpose()?,
        reference: args.reference.clone(),
        reference_scale: args.reference_scale,
        epsilon: args.epsilon,
        out: args.out.clone(),
        workers: args.workers,
        label: args.label.clone(),
    })
}

fn exit_code_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Io(_) => 4,
        HarnessError::BadReferenceFile(..) => 4,
        HarnessError::Evolve(e) => match e {
            EvolveError::BlowUp { .. }
            | EvolveError::Cg { .. }
            | EvolveError::NonFiniteStage { .. }
            | EvolveError::NonFiniteInitial => 3,
            _ => 2,
        },
        HarnessError::Analysis(LinkdvError::QuadratureStalled { .. }) => 3,
        HarnessError::Damping(_) => 3,
        _ => 2,
    }
}

fn print_record(record: &RunRecord) {
    let status = match &record.failure {
        Some(msg) => format!("FAILED: {msg}"),
        None => "done".into(),
    };
    let error = match record.max_window_error {
        Some(e) => format!(", max window error {e:.3e}"),
        None => String::new(),
    };
    let cg = if record.cg_iterations > 0 {
        format!(", {} cg iterations", record.cg_iterations)
    } else {
        String::new()
    };
    println!(
        "{}: {} ({} steps in {:.1}s{}{})",
        record.label, status, record.steps, record.wall_seconds, error, cg
    );
    if let (Some(path), Some(digest)) = (&record.solution_path, &record.solution_sha256) {
        println!("  solution: {} (sha256 {})", path, &digest[..16]);
    }
}

fn do_run(args: &RunArgs, sweep: bool) -> u8 {
    let overrides = match overrides_from(args) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let config = match load_config(args.config.as_deref(), args.preset.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if sweep {
        match run_sweep(&config) {
            Ok(records) => {
                let mut failed = false;
                for record in &records {
                    print_record(record);
                    failed |= record.failure.is_some();
                }
                if failed {
                    3
                } else {
                    0
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        }
    } else {
        if config.sweep.is_some() {
            eprintln!("error: configuration declares sweep axes; use the sweep command");
            return 2;
        }
        match run(&config) {
            Ok(record) => {
                print_record(&record);
                if record.failure.is_some() {
                    3
                } else {
                    0
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        }
    }
}

fn do_analyze(args: &AnalyzeArgs) -> u8 {
    if !args.bounds_only {
        println!(
            "damped heuristic ladder (dt = {}, t_final = {}):",
            args.dt, args.t_final
        );
        println!("  {:>8} {:>8} {:>12} {:>10} {:>8}", "L", "m", "measured", "expected", "ratio");
        for &(l, m, expected) in &HEURISTIC_LADDER {
            match heuristic_deviation(l, m, args.dt, args.t_final) {
                Ok(check) => println!(
                    "  {:>8} {:>8} {:>12.4e} {:>10} {:>8.2}",
                    l,
                    m,
                    check.measured,
                    expected,
                    check.measured / expected
                ),
                Err(e) => {
                    eprintln!("error at L = {l}: {e}");
                    return exit_code_for(&e);
                }
            }
        }
    }
    println!("undamped lattice truncation bounds (delta = 0.25, window half-width 20):");
    println!(
        "  {:>6} {:>8} {:>12} {:>12} {:>8}",
        "t", "L", "measured", "bound", "margin"
    );
    match undamped_bound_sweep(&[1.0, 2.0, 5.0], &[30.0, 50.0, 80.0], 0.25, 20.0, 81) {
        Ok(checks) => {
            let mut ok = true;
            for c in checks {
                let margin = c.bound / c.measured.max(f64::MIN_POSITIVE);
                // Allow double-precision evaluation noise when the true
                // truncation error sits below it.
                ok &= c.bound + 1e-13 >= c.measured;
                println!(
                    "  {:>6} {:>8} {:>12.4e} {:>12.4e} {:>8.1}",
                    c.t, c.half_width, c.measured, c.bound, margin
                );
            }
            if ok {
                0
            } else {
                eprintln!("error: a measured truncation error exceeded its bound");
                3
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(args) => do_run(args, false),
        Command::Sweep(args) => do_run(args, true),
        Command::AnalyzeLinkdv(args) => do_analyze(args),
        Command::ListPresets => {
            for (name, description) in preset_names() {
                println!("{name:24} {description}");
            }
            0
        }
    };
    ExitCode::from(code)
}
