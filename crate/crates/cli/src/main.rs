mod commands;
mod exit;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Interleaving-free differentiable architecture search in L-chain spaces.
#[derive(Parser, Debug)]
#[command(name = "ifnas", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Run directory; defaults to `$IFNAS_RUN_ROOT/<command>-<input hash>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Also write SVG charts of gate trajectories.
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact number of architectures in an L-chain space.
    Count(CountArgs),
    /// Full search: warm-up, interleaving-free loops, pruning to a budget.
    Search(SearchArgs),
    /// Candidate-competition experiment with k interfering connections.
    Figure1(Figure1Args),
    /// Random-search baseline architectures.
    Random(RandomArgs),
    /// Lists interleaved pairs of an architecture or mask file.
    Audit(AuditArgs),
    /// Renders an architecture as Graphviz DOT.
    Export(ExportArgs),
    /// Dumps the sub-supernet mask of one group.
    Mask(MaskArgs),
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long = "L", value_name = "L")]
    pub max_len: Option<usize>,
    /// Comma-separated node counts, one per stage.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub formula: Option<FormulaArg>,
    /// TOML file with `L`, `stages` and optionally `formula`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormulaArg {
    Literal,
    Prose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, required_unless_present = "resume")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub if_sampling: Option<Toggle>,
    #[arg(long)]
    pub budget: Option<u64>,
    /// Continue from a checkpoint written by `--checkpoint`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write `checkpoint.json` after every loop.
    #[arg(long)]
    pub checkpoint: bool,
}

#[derive(Args, Debug)]
pub struct Figure1Args {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=3))]
    pub k: Option<u64>,
    /// Number of consecutive seeds starting at the configured seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the seed fan-out.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RandomArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub one_input_per_node: bool,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Architecture or mask JSON.
    pub file: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Architecture JSON.
    pub file: PathBuf,
    /// Graphviz DOT output (the only format).
    #[arg(long, required = true)]
    pub dot: bool,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Group label λ in 1..=L.
    #[arg(long)]
    pub group: usize,
    /// Search config whose space to use.
    #[arg(long, conflicts_with_all = ["max_len", "nodes"])]
    pub config: Option<PathBuf>,
    #[arg(long = "L", value_name = "L")]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit::code_for(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
