//! Command-line driver: file formats, reports and grid rendering on top of
//! the `mechkit` library.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub mod commands;
pub mod format;
pub mod render;

use commands::{Family, Report, SearchArgs};
use format::{Instance, MechanismSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] mechkit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_resource() => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Grid,
    Machine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Naive,
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CompareArg {
    None,
    #[value(name = "local_dictatorships")]
    LocalDictatorships,
    Gsd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    #[value(name = "local_dictatorships")]
    LocalDictatorships,
    Gsd,
}

#[derive(Debug, Parser)]
#[command(name = "mechkit", version, about = "Constrained allocation mechanisms: build, check, search")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: OutputFormat,

    /// With machine output, also write the human report to stderr.
    #[arg(long, global = true)]
    pub quiet_split: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InstanceArg {
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Never-feasible objects, blocks and the block-diagonal grid for a pair of agents.
    Decompose {
        #[command(flatten)]
        instance: InstanceArg,
        /// Two agents `i,j` with i < j.
        #[arg(long, default_value = "0,1")]
        pair: String,
    },
    /// Check a mechanism against a list of axioms.
    Check {
        #[command(flatten)]
        instance: InstanceArg,
        #[arg(long)]
        mechanism: PathBuf,
        /// Comma-separated: sp, gsp, weak-gsp, pe, pe-image, nonbossy,
        /// maskin, maskin-strict, irrelevant, mutually-best.
        #[arg(long)]
        axioms: String,
        #[arg(long, value_enum, default_value = "fast")]
        engine: EngineArg,
    },
    /// Enumerate every mechanism satisfying the axioms.
    Search {
        #[command(flatten)]
        instance: InstanceArg,
        /// Comma-separated: sp, gsp, pe, pe-image, surjective.
        #[arg(long)]
        axioms: String,
        #[arg(long, value_enum, default_value = "none")]
        compare: CompareArg,
        #[arg(long, env = "MECHKIT_BUDGET_NODES")]
        budget_nodes: Option<u64>,
        #[arg(long)]
        budget_seconds: Option<u64>,
        /// Refuse constraints with more profiles than this.
        #[arg(long)]
        max_profiles: Option<usize>,
        #[arg(long)]
        show_tables: bool,
        /// Write each mechanism found as a table file.
        #[arg(long)]
        write_dir: Option<PathBuf>,
    },
    /// Evaluate a mechanism at one profile.
    Run {
        #[command(flatten)]
        instance: InstanceArg,
        #[arg(long)]
        mechanism: PathBuf,
        /// Rankings by object name, e.g. `a>b>c;c>b>a`.
        #[arg(long, allow_hyphen_values = true)]
        profile: String,
    },
    /// List a mechanism family, optionally writing one file per member.
    Enumerate {
        #[command(flatten)]
        instance: InstanceArg,
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        show_tables: bool,
        #[arg(long)]
        write_dir: Option<PathBuf>,
    },
}

/// What the process should print and return.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_instance(arg: &InstanceArg) -> Result<Instance, CliError> {
    Instance::parse(&read(&arg.instance)?).map_err(|e| at_path(&arg.instance, e))
}

fn load_mechanism(path: &Path, inst: &Instance) -> Result<MechanismSpec, CliError> {
    MechanismSpec::parse(&read(path)?, inst).map_err(|e| at_path(path, e))
}

fn at_path(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Parse { line, msg } => CliError::Usage(format!("{}:{line}: {msg}", path.display())),
        other => other,
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--pair: expected 'i,j', got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn dispatch(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Decompose { instance, pair } => {
            let inst = load_instance(instance)?;
            commands::decompose(&inst, parse_pair(pair)?, cli.format == OutputFormat::Grid)
        }
        Command::Check {
            instance,
            mechanism,
            axioms,
            engine,
        } => {
            let inst = load_instance(instance)?;
            let spec = load_mechanism(mechanism, &inst)?;
            let engine = match engine {
                EngineArg::Naive => mechkit::Engine::Naive,
                EngineArg::Fast => mechkit::Engine::Fast,
            };
            commands::check_cmd(&inst, &spec, &commands::parse_axioms(axioms)?, engine)
        }
        Command::Search {
            instance,
            axioms,
            compare,
            budget_nodes,
            budget_seconds,
            max_profiles,
            show_tables,
            write_dir,
        } => {
            let inst = load_instance(instance)?;
            let names: Vec<String> = axioms.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            let compare = match compare {
                CompareArg::None => None,
                CompareArg::LocalDictatorships => Some(Family::LocalDictatorships),
                CompareArg::Gsd => Some(Family::Gsd),
            };
            commands::search_cmd(
                &inst,
                &SearchArgs {
                    axioms: &names,
                    compare,
                    budget: commands::search_budget(*budget_nodes, *budget_seconds, *max_profiles),
                    show_tables: *show_tables,
                    write_dir: write_dir.as_deref(),
                },
            )
        }
        Command::Run {
            instance,
            mechanism,
            profile,
        } => {
            let inst = load_instance(instance)?;
            let spec = load_mechanism(mechanism, &inst)?;
            commands::run_cmd(&inst, &spec, profile)
        }
        Command::Enumerate {
            instance,
            family,
            show_tables,
            write_dir,
        } => {
            let inst = load_instance(instance)?;
            let family = match family {
                FamilyArg::LocalDictatorships => Family::LocalDictatorships,
                FamilyArg::Gsd => Family::Gsd,
            };
            commands::enumerate_cmd(&inst, family, *show_tables, write_dir.as_deref())
        }
    }
}

/// Parses `args` (program name first) and runs the command without
/// touching the process's own streams.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let code = e.exit_code();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    ..Default::default()
                }
            } else {
                Outcome {
                    code,
                    stderr: text,
                    ..Default::default()
                }
            };
        }
    };
    if let Some(t) = cli.threads {
        // The global pool can only be set once per process; later calls
        // keep the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let machine = cli.format == OutputFormat::Machine;
    match dispatch(&cli) {
        Ok(report) => {
            if machine {
                Outcome {
                    code: report.code,
                    stdout: format!("{}\n", serde_json::to_string_pretty(&report.json).expect("json")),
                    stderr: if cli.quiet_split { report.text } else { String::new() },
                }
            } else {
                Outcome {
                    code: report.code,
                    stdout: report.text,
                    stderr: String::new(),
                }
            }
        }
        Err(e) => {
            let code = e.exit_code();
            let msg = format!("error: {e}\n");
            if machine {
                let doc = json!({"error": e.to_string(), "exit_code": code});
                Outcome {
                    code,
                    stdout: format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")),
                    stderr: msg,
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: msg,
                }
            }
        }
    }
}
