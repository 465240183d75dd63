//! `casimir`: Casimir force curves, distance-fluctuation corrections, fits
//! and χ² comparisons from the command line.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 when the numerics
//! fail (non-convergence, a fit that breaks down).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use config::{PhysicsArgs, ProfileArgs, Spacing};

#[derive(Debug, Parser)]
#[command(name = "casimir", version, about = "Casimir force calculations with distance-fluctuation corrections")]
struct Cli {
    /// JSON run configuration; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, written atomically [default: stdout]
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core
    #[arg(long, global = true, env = "CASIMIR_THREADS", default_value_t = 0)]
    threads: usize,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sphere-plate Casimir force on a distance grid (CSV d_um,F_udyne)
    Force(ForceArgs),
    /// Apparent force including the distance-fluctuation shift (CSV)
    Correct(CorrectArgs),
    /// Fit F = β/(d - d0) to long-distance data (JSON)
    FitBeta(FitBetaArgs),
    /// χ² of binned data against a theory curve file (JSON)
    Chi2(Chi2Args),
    /// χ² as a function of δ_rms (CSV delta_um,chi2,reduced,p)
    ScanDelta(ScanDeltaArgs),
    /// Monte Carlo check of the second-order fluctuation expansion (JSON)
    Simulate(SimulateArgs),
    /// Scale pendulum tilt noise to a longer lever arm (JSON)
    TiltEstimate(TiltArgs),
    /// ε(iξ) from an absorption table by Kramers-Kronig (CSV xi_ev,eps)
    Kk(KkArgs),
}

#[derive(Debug, Args)]
struct ForceArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Smallest separation in μm [default: 0.5]
    #[arg(long)]
    d_min: Option<f64>,
    /// Largest separation in μm [default: 6]
    #[arg(long)]
    d_max: Option<f64>,
    /// Number of grid points [default: 50]
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    /// d_um,F_udyne,F_apparent_udyne,delta_rms_um,sigma_inflation_udyne
    Curve,
    /// F·d³ for Drude, Plasma and the T = 0 perfect conductor, with and
    /// without the fluctuation shift
    Fig1,
}

#[derive(Debug, Args)]
struct CorrectArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Electrostatic background β in μdyne·μm [default: 0]
    #[arg(long)]
    beta: Option<f64>,
    /// Distance offset of the background in μm [default: 0]
    #[arg(long)]
    d0: Option<f64>,
    /// Report forces with β/(d - d0) removed, as for background-subtracted data
    #[arg(long)]
    subtract_background: bool,
    /// Smallest separation in μm [default: 0.6]
    #[arg(long)]
    d_min: Option<f64>,
    /// Largest separation in μm [default: 6]
    #[arg(long)]
    d_max: Option<f64>,
    /// Number of grid points [default: 55]
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    spacing: Spacing,
    #[arg(long, value_enum, default_value_t = Emit::Curve)]
    emit: Emit,
}

#[derive(Debug, Args)]
struct FitBetaArgs {
    /// Binned data, CSV d_um,force_udyne,sigma_udyne,n_samples,bin_width_um
    #[arg(long)]
    data: Option<PathBuf>,
    /// Only points beyond this distance in μm are fitted [default: 2]
    #[arg(long)]
    d_min: Option<f64>,
    /// Hold d0 at zero and fit β alone
    #[arg(long)]
    fix_d0: bool,
    /// Lower bound of the d0 search in μm
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    d0_lo: f64,
    /// Upper bound of the d0 search in μm
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    d0_hi: f64,
    /// Subtract the Casimir force of the physics model before fitting
    #[arg(long)]
    subtract_casimir: bool,
    #[command(flatten)]
    physics: PhysicsArgs,
}

#[derive(Debug, Args)]
struct Chi2Args {
    /// Binned data CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Theory curve CSV with a d_um column
    #[arg(long)]
    theory: Option<PathBuf>,
    /// Force column of the theory file [default: F_apparent_udyne, else F_udyne]
    #[arg(long)]
    column: Option<String>,
    /// Degrees of freedom; the fitted-parameter count becomes points - dof
    #[arg(long, conflicts_with = "fitted_params")]
    dof: Option<u32>,
    /// Number of parameters fitted to the data [default: 1]
    #[arg(long)]
    fitted_params: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// δ constant in d
    Constant,
    /// δ = A·√(d / 3 μm), scanning the amplitude A
    SqrtLaw,
}

#[derive(Debug, Args)]
struct ScanDeltaArgs {
    /// Binned data CSV
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Electrostatic background β in μdyne·μm [default: 0]
    #[arg(long)]
    beta: Option<f64>,
    /// Background offset in μm [default: 0]
    #[arg(long)]
    d0: Option<f64>,
    /// The data have had β/(d - d0) subtracted
    #[arg(long)]
    subtract_background: bool,
    /// Explicit δ values in μm, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["delta_min", "delta_max", "delta_steps"])]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    delta_min: f64,
    #[arg(long, default_value_t = 0.2)]
    delta_max: f64,
    #[arg(long, default_value_t = 21)]
    delta_steps: usize,
    #[arg(long, value_enum, default_value_t = Family::Constant)]
    family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Law {
    /// F = β/d
    Inverse,
    /// Sphere-plate Lifshitz force of the physics model
    Lifshitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    White,
    OneOverF,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Law::Inverse)]
    law: Law,
    /// β of the inverse law in μdyne·μm
    #[arg(long, default_value_t = 215.0)]
    beta: f64,
    /// Mean separation in μm
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Target rms of δ(t) in μm [default: 0.02]
    #[arg(long)]
    delta_rms: Option<f64>,
    /// Lower band edge in Hz [default: 0.01]
    #[arg(long)]
    f_lo: Option<f64>,
    /// Upper band edge in Hz [default: 5]
    #[arg(long)]
    f_hi: Option<f64>,
    /// Sample interval in s [default: 0.05]
    #[arg(long)]
    dt: Option<f64>,
    /// Series length in s [default: 2000]
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Seed of the first trial; trial i uses seed + i [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials, at least 10
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    physics: PhysicsArgs,
}

#[derive(Debug, Args)]
struct TiltArgs {
    /// Noise measured at the reference length, in nm
    #[arg(long, default_value_t = 20.0)]
    ref_noise_nm: f64,
    /// Reference lever arm in cm
    #[arg(long, default_value_t = 4.0)]
    ref_length_cm: f64,
    /// Lever arm to scale to, in cm
    #[arg(long, default_value_t = 80.0)]
    length_cm: f64,
    /// Ratio of mode frequencies [default: √(length / ref_length)]
    #[arg(long)]
    mode_freq_ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct KkArgs {
    /// Absorption table, CSV omega_ev,eps_imag
    #[arg(long)]
    absorption: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    xi_min: f64,
    #[arg(long, default_value_t = 10.0)]
    xi_max: f64,
    /// Log-spaced output points
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Relaxation of the Drude tail below the table, in eV
    #[arg(long, default_value_t = 0.035)]
    extension_gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("cannot size the thread pool: {e}");
        }
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Some messages already embed their cause; print each text once.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            let numerical = e
                .chain()
                .filter_map(|c| c.downcast_ref::<casimir_core::Error>())
                .any(|c| c.is_numerical());
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
