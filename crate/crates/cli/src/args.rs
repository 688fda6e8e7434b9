use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tourkit::data::{DEFAULT_MAP_RADIUS_M, DEFAULT_TIME_GAP_S};
use tourkit::ranking::DEFAULT_C;
use tourkit::route::Algorithm;
use tourkit::transition::DEFAULT_EPSILON;

#[derive(Debug, Parser)]
#[command(name = "tourkit", version, about = "Recommend POI trajectories from ranked POIs and learned transitions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and report its size.
    Ingest(IngestArgs),
    /// Fit every model and write a bundle.
    Train(TrainArgs),
    /// Recommend one route from a bundle.
    Recommend(RecommendArgs),
    /// Leave-one-out evaluation of one or more algorithms.
    Evaluate(EvaluateArgs),
    /// Choose the ranking/transition trade-off on two folds.
    Tune(TuneArgs),
    /// Write a synthetic dataset with planted transitions.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// POI table (poiID,poiName,lat,lon,category).
    #[arg(long)]
    pub pois: PathBuf,
    /// Visit records (userID,trajID,poiID,arrivalTime,departureTime).
    #[arg(long, required_unless_present = "photos", conflicts_with = "photos")]
    pub trajectories: Option<PathBuf>,
    /// Geotagged photos (userID,timestamp,lat,lon), mapped onto POIs.
    #[arg(long)]
    pub photos: Option<PathBuf>,
    /// Photos farther than this from every POI are dropped.
    #[arg(long, default_value_t = DEFAULT_MAP_RADIUS_M)]
    pub map_radius_m: f64,
    /// A gap longer than this between visits starts a new trajectory.
    #[arg(long, default_value_t = DEFAULT_TIME_GAP_S)]
    pub time_gap_s: i64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// rankSVM regularisation.
    #[arg(long = "C", default_value_t = DEFAULT_C)]
    pub c: f64,
    /// Additive smoothing of transition counts.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Where to write the stats JSON (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the assembled trajectories as a visits CSV.
    #[arg(long)]
    pub write_trajectories: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Bundle destination.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: tourkit::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub start: u32,
    #[arg(long)]
    pub end: u32,
    /// Total number of POIs, endpoints included.
    #[arg(long)]
    pub length: usize,
    #[arg(long, value_parser = parse_algorithm, default_value = "Rank+MarkovPath")]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Dataset to check the bundle fingerprint against.
    #[arg(long, requires = "trajectories")]
    pub pois: Option<PathBuf>,
    #[arg(long, requires = "pois")]
    pub trajectories: Option<PathBuf>,
    /// Use the bundle even if it was trained on a different dataset.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated algorithm names, or `all`.
    #[arg(long, default_value = "all")]
    pub algorithms: String,
    /// Trade-off for Rank+Markov and Rank+MarkovPath (ignored with --tune).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Tune the trade-off on two folds, each evaluating the other.
    #[arg(long)]
    pub tune: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Directory for results.csv and summary.json (summary to stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated grid; defaults to 0.0, 0.1, ..., 1.0.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub n_pois: usize,
    #[arg(long, default_value_t = 200)]
    pub n_trajectories: usize,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    /// Directory receiving pois.csv and trajectories.csv.
    #[arg(long)]
    pub out: PathBuf,
}
