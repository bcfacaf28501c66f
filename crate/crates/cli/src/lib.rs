//! Command-line front end: experiment loading, the analysis commands and
//! report rendering.

pub mod commands;
pub mod error;
pub mod input;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};
pub use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Always,
    Never,
}

impl From<CorrectionArg> for bisys::Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Always => bisys::Correction::Always,
            CorrectionArg::Never => bisys::Correction::Never,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bisys",
    version,
    about = "Analyse two-valued input-output systems run over two-level factorial designs"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

/// An experiment file and an optional design override.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// CSV (factor columns, then n11,n12,n21,n22) or JSON experiment file.
    pub input: PathBuf,

    /// Design JSON; defaults to `<stem>.design.json` next to a CSV input,
    /// then to the full factorial over the CSV factor columns.
    #[arg(long)]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-run SN ratios and the single-df ANOVA of the SN ratios.
    SnAnova {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Model terms, comma separated (default: every main effect).
        #[arg(long, value_delimiter = ',')]
        terms: Vec<String>,
        /// Terms pooled into the residual, comma separated.
        #[arg(long, value_delimiter = ',')]
        pool: Vec<String>,
        #[arg(long, value_enum, default_value_t = CorrectionArg::Always)]
        correction: CorrectionArg,
        /// Round the SN ratios to this many decimals before the ANOVA.
        #[arg(long)]
        eta_decimals: Option<usize>,
        /// Level for the significant-term note.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Likelihood-ratio test between nested odds-ratio models.
    LrTest {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Null formula in slash notation, e.g. `A/B/C`.
        #[arg(long)]
        null: String,
        /// Alternative formula, e.g. `AC/B`.
        #[arg(long)]
        alt: String,
        /// Cross-check both fits with iterative proportional fitting.
        #[arg(long, value_enum, default_value_t = Switch::On)]
        oracle: Switch,
    },
    /// Fit one odds-ratio model.
    Fit {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        oracle: Switch,
    },
    /// Defining relation, resolution and alias classes of a design.
    Alias {
        /// Design JSON or experiment file.
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<String>,
        /// Generators such as `D=ABC`, comma separated.
        #[arg(long, value_delimiter = ',')]
        generators: Vec<String>,
        /// Highest effect order listed (default: all).
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Log-linear counterparts of factor models (default: every hierarchical class).
    Correspond {
        formulas: Vec<String>,
        /// Base factor names (default A,B,C).
        #[arg(long, value_delimiter = ',')]
        factors: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        generators: Vec<String>,
        /// Design JSON; overrides --factors/--generators.
        #[arg(long)]
        design: Option<PathBuf>,
    },
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<Report> {
    commands::dispatch(&cli.command)
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Json => report.to_json() + "\n",
    }
}
