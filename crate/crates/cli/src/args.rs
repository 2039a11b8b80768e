use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "surfspline", version, about = "Splines on triangulated surfaces")]
pub struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a mesh and write it as OFF with a chart CSV and a summary.
    MeshGen(MeshGenArgs),
    /// Place observation nodes with a maximin Latin hypercube design.
    Design(DesignArgs),
    /// Predict at every mesh node from observations.
    Predict(PredictArgs),
    /// Estimate anisotropy parameters by maximum likelihood.
    Fit(FitArgs),
    /// Compare FEM splines with the classical spherical kernel.
    Compare(CompareArgs),
    /// Time FEM and classical predictions over a range of sample sizes.
    Bench(BenchArgs),
}

/// Mesh source shared by most commands.
#[derive(Debug, Args, Default)]
pub struct MeshArgs {
    /// `sphere:R`, `icosphere:K`, `sphere-grid:STEP`, `cylinder:NTxNZ[:ZMIN:ZMAX[:RADIUS]]` or `file:PATH.off`.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Chart CSV for `file:` meshes.
    #[arg(long)]
    pub chart: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshGenArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Icosphere with `--refinement` halvings.
    #[arg(long, conflicts_with_all = ["cylinder", "sphere_grid"])]
    pub sphere: bool,
    #[arg(long, default_value_t = 3)]
    pub refinement: u32,
    /// Latitude-longitude sphere with this step in degrees.
    #[arg(long)]
    pub sphere_grid: Option<f64>,
    #[arg(long)]
    pub cylinder: bool,
    #[arg(long, default_value_t = 70)]
    pub ntheta: usize,
    #[arg(long, default_value_t = 115)]
    pub nz: usize,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.0)]
    pub z_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub z_max: f64,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// `cos(2 theta + phi + pi/4) sin^2 theta` in spherical chart coordinates.
    Sphere,
    /// `exp(-3/4 |P (cos theta, z/z_max)|^2)` in cylindrical chart coordinates.
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snap {
    Chord,
    Chart,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Number of observation nodes.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Distance used when snapping design points to nodes.
    #[arg(long, value_enum)]
    pub snap: Option<Snap>,
    /// Fill values from an analytical function; zeros otherwise.
    #[arg(long, value_enum)]
    pub truth: Option<Truth>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

/// Options shared by the commands that build a spline model.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Observation CSV (`node_index,value` or `x,y,z,value`).
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// `isotropic`, `constant:DELTA,RHO1,RHO2` or `file:PATH.csv`.
    #[arg(long)]
    pub metric: Option<String>,
    /// Noise standard deviation; 0 interpolates node observations.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Override the automatically chosen alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Analytical function to score predictions against.
    #[arg(long, value_enum)]
    pub truth: Option<Truth>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_evaluations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Estimate tau jointly with the anisotropy.
    #[arg(long)]
    pub estimate_tau: bool,
    /// Lower and upper bound on the scalings, e.g. `0.05,20`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub rho_bounds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Kernel truncation order.
    #[arg(long)]
    pub truncation: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Sample sizes, comma separated. Defaults to 10..2000 log-spaced.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Noise used by both methods.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Repetitions per size; the fastest is reported.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}
