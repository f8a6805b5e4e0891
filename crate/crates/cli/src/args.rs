use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "sadsac",
    version,
    about = "Species abundance and accumulation analysis with mixed Poisson partition processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where the frequency of frequencies comes from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// FoF CSV (`k,count`, optional `# t0=` comment).
    #[arg(long, value_name = "PATH", conflicts_with = "dataset")]
    pub fof: Option<PathBuf>,
    /// Bundled dataset: swine, accident, tomato or bird.
    #[arg(long, value_name = "NAME")]
    pub dataset: Option<String>,
    /// Survey length; overrides the file's `# t0=` line.
    #[arg(long, value_name = "F")]
    pub t0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model family fitted to the data.
    #[arg(long, value_name = "NAME")]
    pub family: Option<String>,
    /// Use these parameters instead of fitting: inline JSON or a JSON file,
    /// e.g. `{"family":"ldr1","a":14.696,"b":0.044,"c":0.772}`.
    #[arg(long, value_name = "JSON|PATH")]
    pub params: Option<String>,
}

#[derive(Debug, Args)]
pub struct BootArgs {
    /// Number of bootstrap replicates.
    #[arg(long = "B", value_name = "N", default_value_t = 2999)]
    pub b: usize,
    #[arg(long, value_name = "F", default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_name = "N")]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum likelihood fit of one or more families.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated families, e.g. `ldr1,rdr1`.
        #[arg(long, value_name = "LIST", required = true)]
        family: String,
        /// Fit ρ-appearance records instead of a FoF.
        #[arg(long = "rho-data", value_name = "PATH", conflicts_with_all = ["fof", "dataset"])]
        rho_data: Option<PathBuf>,
        /// Number of optimizer starts.
        #[arg(long, value_name = "N")]
        starts: Option<usize>,
    },
    /// Pearson chi-square goodness of fit of a fitted family.
    Gof {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Nonparametric diagnostic curve with pointwise bands.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        /// d1d2, d2d3, poisson, geometric, logseries, powerlaw or loglog.
        #[arg(long, value_name = "NAME")]
        plot: String,
        /// Number of grid points on (0, t0].
        #[arg(long, value_name = "N", default_value_t = 200)]
        points: usize,
        /// Normal quantile of the bands.
        #[arg(long, value_name = "F", default_value_t = 1.96)]
        z: f64,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
    /// Chao1, the slope estimators, E*(D) and the truncated-Poisson test.
    Richness {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Hill numbers of a fitted or given model.
    Hill {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated orders.
        #[arg(long, value_name = "LIST", default_value = "0,1,2")]
        q: String,
    },
    /// Parametric bootstrap interval (smallest interval among order statistics).
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        /// `hill:Q[,Q...]`, `e_star` or `unseen`.
        #[arg(long, value_name = "TARGET")]
        target: String,
        /// Family refitted for Hill targets.
        #[arg(long, value_name = "NAME")]
        family: Option<String>,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Simulate a survey from a model, or ρ-appearance data from a FoF.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "N")]
        seed: u64,
        /// `rho=K` (or `rho=K1,K2` with `--replicates`).
        #[arg(long, value_name = "rho=K")]
        design: Option<String>,
        /// Run the ρ-design experiment with this many replicates per ρ.
        #[arg(long, value_name = "N")]
        replicates: Option<usize>,
        /// Emit the full realization as JSON instead of a FoF CSV.
        #[arg(long)]
        realization: bool,
        /// Write the CSV here instead of standard output.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Extrapolate the accumulation curve beyond (or interpolate within) t0.
    Extrapolate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated times; `inf` gives the limiting richness.
        #[arg(long, value_name = "LIST")]
        t: String,
        /// Also evaluate a fitted family.
        #[arg(long, value_name = "NAME")]
        family: Option<String>,
    },
    /// Fit a model to a binned species accumulation curve.
    Sacfit {
        /// Binned SAC CSV (`t,cum_species`).
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// power, logseries, geometric or ldr1.
        #[arg(long, value_name = "NAME")]
        family: String,
        #[arg(long, value_name = "NAME", default_value = "mle")]
        method: String,
        /// Comma-separated times at which to report the fitted curve.
        #[arg(long, value_name = "LIST")]
        t: Option<String>,
    },
    /// Extrapolation experiment comparing MLE with curve fitting.
    Sacexp {
        /// B (power law), C (log-series) or D (geometric).
        #[arg(long, value_name = "NAME")]
        table: String,
        #[arg(long, value_name = "N", default_value_t = 500)]
        replicates: usize,
        #[arg(long, value_name = "N")]
        seed: u64,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Print a bundled dataset as FoF CSV.
    Dataset {
        /// swine, accident, tomato or bird.
        name: String,
    },
}
