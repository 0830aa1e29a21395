//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcbr_core::retrieval::EngineKind;

#[derive(Debug, Parser)]
#[command(
    name = "qcbr",
    version,
    about = "Build, validate and query packed case-base images of function-implementation variants"
)]
pub struct Cli {
    /// Similarity engine for retrieval-style commands.
    #[arg(long, global = true, value_enum, default_value_t = EngineArg::Float)]
    pub engine: EngineArg,

    /// Seed for commands that generate data.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    /// f64 reference arithmetic.
    Float,
    /// 16-bit fixed-point datapath (Q16 similarities, Q15 weights).
    Fixed,
}

impl From<EngineArg> for EngineKind {
    fn from(a: EngineArg) -> Self {
        match a {
            EngineArg::Float => EngineKind::FloatReference,
            EngineArg::Fixed => EngineKind::FixedQ16,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a text source file and write a packed image.
    Build {
        /// Source file in the line-based text format.
        source: PathBuf,
        /// Output path for the packed image (.qcb).
        #[arg(short, long)]
        out: PathBuf,
    },

    /// Check a packed image (.qcb) or a text source file.
    Validate { path: PathBuf },

    /// Print the effective range table of a source file.
    Ranges { source: PathBuf },

    /// Write a randomly generated source file and report its packed size.
    Gen {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        shape: GenShape,
        /// Number of requests to generate alongside the case-base.
        #[arg(long, default_value_t = 1)]
        requests: u16,
    },

    /// Rank the implementations of an image against a request.
    Retrieve {
        /// Packed case-base image (.qcb).
        image: PathBuf,
        /// Request file: .qrq packed binary, or text source with one request.
        request: Option<PathBuf>,
        /// Inline request in source syntax, `;` separating lines.
        #[arg(long, conflicts_with = "request")]
        inline: Option<String>,
        /// Keep at most this many results.
        #[arg(short, long, default_value_t = usize::MAX, hide_default_value = true)]
        n: usize,
        /// Reject results whose similarity is below this value.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Rescale request weights to sum 1 instead of requiring it.
        #[arg(long)]
        normalize: bool,
    },

    /// Retrieve, then pick the best implementation that fits a resource
    /// snapshot.
    Allocate {
        image: PathBuf,
        request: Option<PathBuf>,
        #[arg(long, conflicts_with = "request")]
        inline: Option<String>,
        /// Snapshot file: `capacity <class> <units>` and
        /// `demand <type_id> <impl_id> <class> <units>` lines.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(short, long, default_value_t = usize::MAX, hide_default_value = true)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long)]
        normalize: bool,
    },

    /// Run both engines against a brute-force reference over random
    /// instances and check their agreement properties.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[command(flatten)]
        shape: GenShape,
    },
}

/// Shape parameters for generated case-bases. The defaults describe the
/// worst-case provisioning target: 15 function types, 6 implementations
/// each, 10 attributes per implementation. `oracle-check` reads them as
/// per-trial upper bounds instead of exact sizes.
#[derive(Debug, Args)]
pub struct GenShape {
    #[arg(long, default_value_t = 15)]
    pub types: u16,
    #[arg(long, default_value_t = 6)]
    pub impls: u16,
    #[arg(long, default_value_t = 10)]
    pub attrs: u16,
    /// Total distinct attribute ids to draw from; wider than `attrs` so
    /// some requested attributes are missing from some implementations.
    #[arg(long)]
    pub pool: Option<u16>,
    /// Largest generated attribute value.
    #[arg(long, default_value_t = 1024)]
    pub value_bound: u16,
}
