use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ruinkit", version, about = "Exact exit distributions of killed reversible chains")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Where the model comes from: a generator (`--model`), a JSON document
/// (`--input`, `-` for stdin), or stdin when neither is given.
#[derive(Debug, Clone, Args)]
pub struct ModelSource {
    /// line, line-lazy, box, triangle or punctured-cube; a trailing digit sets
    /// the dimension (box3, punctured-cube2).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "N", id = "size")]
    pub size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a model and print its graph and domain JSON.
    Model {
        kind: String,
        #[arg(long = "N", id = "size")]
        size: usize,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        margin: Option<usize>,
    },
    /// Exit distribution from one starting point.
    Exit {
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        start: Start,
        /// Finite horizon: exit within `t` steps.
        #[arg(long)]
        t: Option<usize>,
        /// Report dangling half-edges instead of boundary vertices.
        #[arg(long)]
        extended: bool,
        #[arg(long, value_enum, default_value_t = Route::Green)]
        route: Route,
    },
    /// Top eigenvalues of the killed kernel and the Perron eigenfunction.
    Eigen {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, default_value_t = 1)]
        top: usize,
        /// Print every requested eigenfunction, not only the top one.
        #[arg(long)]
        full: bool,
    },
    /// The Doob-transformed chain: measure and transition probabilities.
    Doob {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Run an invariant suite and fail on the first violation.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        source: ModelSource,
        /// Harnack radii (default 1,2).
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<usize>>,
    },
    /// Monte Carlo estimate of exit statistics.
    Simulate {
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        start: Start,
        /// Number of runs; scientific notation such as 1e6 is accepted.
        #[arg(long, default_value = "100000", value_parser = parse_count)]
        samples: u64,
        #[arg(long, value_enum, default_value_t = RecordArg::ExitPoint)]
        record: RecordArg,
        /// Step cap per run (default ⌈100·T_U⌉, or 1000·N² for first elimination).
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Summary of a model: sizes, depth, Perron pair and identities.
    Report {
        #[command(flatten)]
        source: ModelSource,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Start {
    /// Starting point by coordinates, e.g. 3,3.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub from: Option<Vec<i64>>,
    /// Starting point by vertex id.
    #[arg(long, conflicts_with = "from")]
    pub from_id: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Green,
    Spectral,
    Doob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Doob,
    Estimate,
    Harnack,
    Heatkernel,
    Carleson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecordArg {
    ExitPoint,
    ExitHalfEdge,
    FirstElimination,
    ExitTime,
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("{s:?} is not a nonnegative integer count")),
    }
}
