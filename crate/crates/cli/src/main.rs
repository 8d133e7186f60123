//! `locality`: every experiment behind one binary.
//!
//! Each subcommand reads an optional key=value config file, applies command-line
//! overrides on top, rejects unknown keys, and writes a CSV (default) or JSON report.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 audit violation,
//! 3 incomplete distributed run.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "locality",
    version,
    about = "Local hidden-variable models, Bell/CHSH tests, path integrals and a distributed locality harness"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// key=value config file; command-line flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trial count (per setting pair or per grid point)
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Extra config override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Instruction-set model: agreement P(A=B) per setting relation against the 5/9 bound
    Mermin(MerminArgs),
    /// Clock model: correlation E(a,b) = 1 - 2|a-b|/pi and agreement on differing settings
    Clock(ClockArgs),
    /// CHSH combination S = E(a,b) + E(a',b) + E(a',b') - E(a,b') against |S| <= 2
    Chsh(ChshArgs),
    /// Bell inequality |E(a,b) - E(a,b')| <= 2 +/- [E(a',b') + E(a',b)]
    Bell(BellArgs),
    /// Time-sliced propagator <v|exp(-iHt)|u> against its closed form
    Propagate(PropagateArgs),
    /// Two-sided interferometer scan of E(delta_a, delta_b) beside the fringe (1 + cos(phi_a + phi_b))/2
    Rt(RtArgs),
    /// Serve one measurement wing of a distributed run
    Wing(WingArgs),
    /// Drive a distributed run: send the same lambda to both wings each trial
    Source(SourceArgs),
    /// Audit a run log for cross-wing leakage, lambda mismatch and ordering
    Audit(AuditArgs),
    /// Quantum predictions: singlet E = -cos(a-b), agreement 1/2, CHSH, fringe
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// mermin or clock
    #[arg(long)]
    pub model: Option<String>,
    /// aligned or anti_aligned
    #[arg(long)]
    pub b_convention: Option<String>,
    /// Quadrature points for the clock model
    #[arg(long)]
    pub grid_n: Option<u64>,
}

#[derive(Args, Debug)]
pub struct MerminArgs {
    /// uniform, nonconstant, or point:XYZ (e.g. point:RRG); alternative to p[XYZ] keys
    #[arg(long)]
    pub distribution: Option<String>,
    #[arg(long)]
    pub b_convention: Option<String>,
}

#[derive(Args, Debug)]
pub struct ClockArgs {
    #[arg(long)]
    pub b_convention: Option<String>,
    #[arg(long)]
    pub grid_n: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ChshArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Exact evaluation (the default unless --n is given)
    #[arg(long)]
    pub exact: bool,
    /// Use the singlet prediction instead of a model
    #[arg(long)]
    pub oracle: bool,
    /// a,a',b,b' as radians or discrete tokens i0,i1,i2
    #[arg(long)]
    pub angles: Option<String>,
    /// Maximize |S| over this many random angle quadruples instead
    #[arg(long)]
    pub random: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BellArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub oracle: bool,
    /// a,a',b,b'
    #[arg(long)]
    pub angles: Option<String>,
    /// Check given exact correlations E(a,b),E(a,b'),E(a',b'),E(a',b) instead
    #[arg(long)]
    pub values: Option<String>,
}

#[derive(Args, Debug)]
pub struct PropagateArgs {
    /// free or harmonic
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Comma-separated slice counts
    #[arg(long)]
    pub slices: Option<String>,
    /// Comma-separated grid sizes
    #[arg(long)]
    pub points: Option<String>,
}

#[derive(Args, Debug)]
pub struct RtArgs {
    /// Number of equally spaced phases per side
    #[arg(long)]
    pub phase_steps: Option<u64>,
}

#[derive(Args, Debug)]
pub struct WingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// A or B
    #[arg(long)]
    pub wing: Option<String>,
    /// Address to listen on; port 0 picks a free port
    #[arg(long)]
    pub listen: Option<String>,
    /// Fixed setting (i0, i1, i2 or radians) or random:<seed>
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Args, Debug)]
pub struct SourceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub wing_a: Option<String>,
    #[arg(long)]
    pub wing_b: Option<String>,
    /// Run log destination
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    pub logfile: PathBuf,
    /// Print the merged correlation table instead of the violation list
    #[arg(long)]
    pub merge: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// singlet, mermin, chsh or rt
    #[arg(long)]
    pub kind: Option<String>,
    /// Comma-separated angles: two for singlet and rt, four for chsh
    #[arg(long)]
    pub angles: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
