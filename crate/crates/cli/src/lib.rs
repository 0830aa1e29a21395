//! Command-line front end over `qcbr-core`: build, validate and pack
//! case-base libraries, generate random ones, run retrievals and
//! allocations, and cross-check both similarity engines against a
//! brute-force reference.

pub mod args;
pub mod commands;
pub mod gen;
pub mod oracle;
pub mod snapshot;

use clap::Parser;

/// Process exit classes. Every command terminates with exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// Unreadable, unparsable or invalid input data.
    DataError,
    /// Bad command line or nonsensical parameters.
    UsageError,
    /// A checked internal property did not hold.
    InternalError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::DataError => 1,
            ExitStatus::UsageError => 2,
            ExitStatus::InternalError => 3,
        }
    }
}

/// Error carrier for command implementations; the variant picks the exit
/// class, the message goes to stderr.
#[derive(Debug)]
pub enum CmdError {
    Data(String),
    Usage(String),
    Internal(String),
}

impl CmdError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CmdError::Data(_) => ExitStatus::DataError,
            CmdError::Usage(_) => ExitStatus::UsageError,
            CmdError::Internal(_) => ExitStatus::InternalError,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Data(m) | CmdError::Usage(m) | CmdError::Internal(m) => m,
        }
    }
}

pub fn run<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitStatus::Success,
                _ => ExitStatus::UsageError,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.status()
        }
    }
}
