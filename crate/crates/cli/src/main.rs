mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vtrack_core::station::InputSource;

/// Vehicle tracking toolkit: simulate, decode, filter, evaluate and monitor
/// GPS/OBD telemetry.
#[derive(Debug, Parser)]
#[command(name = "vtrack", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate telemetry messages, truth and pseudoranges for one vehicle.
    Simulate(SimulateArgs),
    /// Decode a message file to CSV on stdout.
    Decode(DecodeArgs),
    /// Kalman-filter a message file or a pseudorange file into a track CSV.
    Filter(FilterArgs),
    /// Report per-axis sigma and 2DRMS for raw and filtered tracks.
    Eval(EvalArgs),
    /// Render a message file (and optional filtered track) as KML.
    Kml(KmlArgs),
    /// Run the monitoring station.
    Station(StationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Traj {
    Static,
    Line,
    Circle,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "static", env = "VTRACK_TRAJ")]
    traj: Traj,
    #[arg(long, default_value_t = 600, env = "VTRACK_EPOCHS")]
    epochs: usize,
    /// Pseudorange noise sigma; derived from --target-2drms-m and the HDOP when unset.
    #[arg(long, env = "VTRACK_PR_SIGMA_M")]
    pr_sigma_m: Option<f64>,
    #[arg(long, default_value_t = 43.0, env = "VTRACK_TARGET_2DRMS_M")]
    target_2drms_m: f64,
    #[arg(long, default_value_t = 0, env = "VTRACK_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 8, env = "VTRACK_SATELLITES")]
    satellites: usize,
    #[arg(long, default_value = "SIM-1", env = "VTRACK_VEHICLE")]
    vehicle: String,
    #[arg(long, default_value_t = 31.9539, allow_negative_numbers = true)]
    lat: f64,
    #[arg(long, default_value_t = 35.9106, allow_negative_numbers = true)]
    lon: f64,
    #[arg(long, default_value_t = 780.0, allow_negative_numbers = true)]
    alt: f64,
    #[arg(long, default_value_t = 40.0)]
    speed_kmh: f64,
    /// Heading for --traj line.
    #[arg(long, default_value_t = 45.0)]
    heading_deg: f64,
    /// Radius for --traj circle.
    #[arg(long, default_value_t = 300.0)]
    radius_m: f64,
    #[arg(long, default_value_t = 1000.0, allow_negative_numbers = true)]
    clock_offset_m: f64,
    #[arg(long, default_value_t = 1.0)]
    clock_walk_m: f64,
    /// Multipath burst bias; 0 disables bursts.
    #[arg(long, default_value_t = 0.0)]
    multipath_m: f64,
    #[arg(long)]
    out_messages: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
    #[arg(long)]
    out_pseudoranges: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterKind {
    Position,
    Pseudorange,
}

#[derive(Debug, Args)]
struct FilterParams {
    /// Position mode: per-epoch process noise (m).
    #[arg(long, default_value_t = 2.0, env = "VTRACK_Q_M")]
    q_m: f64,
    /// Position mode: measurement noise of a reported fix (m).
    #[arg(long, default_value_t = 15.0, env = "VTRACK_R_M")]
    r_m: f64,
    /// Pseudorange mode: per-epoch position process noise (m).
    #[arg(long, default_value_t = 2.0, env = "VTRACK_Q_POS_M")]
    q_pos_m: f64,
    /// Pseudorange mode: per-epoch clock process noise (m).
    #[arg(long, default_value_t = 5.0, env = "VTRACK_Q_CLK_M")]
    q_clk_m: f64,
    /// Pseudorange mode: pseudorange measurement sigma (m).
    #[arg(long, default_value_t = 15.0, env = "VTRACK_PR_SIGMA_M")]
    pr_sigma_m: f64,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(
        long,
        value_enum,
        default_value = "position",
        env = "VTRACK_FILTER_MODE"
    )]
    mode: FilterKind,
    /// Message file (position mode).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Pseudorange CSV (pseudorange mode).
    #[arg(long)]
    pseudoranges: Option<PathBuf>,
    /// Only use messages from this vehicle.
    #[arg(long)]
    vehicle: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: FilterParams,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Message file or track CSV.
    #[arg(long)]
    raw: PathBuf,
    /// Message file or track CSV.
    #[arg(long)]
    filtered: PathBuf,
    /// Truth CSV; reports are mean-referenced without it.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write the reports as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KmlArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Vehicle to render; optional when the file holds a single vehicle.
    #[arg(long)]
    vehicle: Option<String>,
    /// Filtered track CSV, matched to messages by epoch (line number).
    #[arg(long)]
    filtered: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StationFilter {
    Off,
    Position,
    Pseudorange,
}

#[derive(Debug, Args)]
struct StationArgs {
    /// file:PATH, stdin or tcp:PORT.
    #[arg(long, default_value = "stdin", env = "VTRACK_INPUT")]
    input: InputSource,
    #[arg(long, env = "VTRACK_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "position", env = "VTRACK_FILTER")]
    filter: StationFilter,
    /// Pseudorange CSV side channel for --filter pseudorange.
    #[arg(long, env = "VTRACK_PSEUDORANGES")]
    pseudoranges: Option<PathBuf>,
    #[arg(long, default_value_t = vtrack_core::station::DEFAULT_KML_EVERY_N, env = "VTRACK_KML_EVERY_N")]
    kml_every_n: usize,
    #[command(flatten)]
    params: FilterParams,
}

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    AllRejected,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();

    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Decode(a) => commands::decode(a),
        Command::Filter(a) => commands::filter(a),
        Command::Eval(a) => commands::eval(a),
        Command::Kml(a) => commands::kml(a),
        Command::Station(a) => commands::station(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::AllRejected) => {
            eprintln!("error: every input message was rejected");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
