//! Command-line front end for distributional LQR/LQG policy evaluation.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod output;
pub mod report;
pub mod tables;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use distlqr_core::rng::DEFAULT_SEED;

use crate::config::{load_config, Format, Mode, ScenarioConfig};
use crate::error::CliError;
use crate::output::Output;
use crate::report::Applicability;

pub const DEFAULT_OUT: &str = "out";

fn parse_seed(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed `{s}`: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "distlqr", version, about = "Return distributions and bounds for discounted LQR/LQG policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed; decimal or 0x-prefixed hex. Overrides the config.
    #[arg(long, global = true, value_name = "U64", value_parser = parse_seed)]
    pub seed: Option<u64>,

    /// Worker threads for sampling. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Output directory [default: config output.directory, else "out"].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Exit with status 3 when a bound does not apply to the instance.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Print the plan and artifact list without computing or writing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal gain and value matrix.
    Riccati,
    /// Return distribution in the mode named by the config.
    Evaluate,
    /// Rollout-based evaluation.
    Modelfree,
    /// Nominal vs perturbed return distributions.
    Perturb,
    /// Output-feedback evaluation through the augmented system.
    Lqg,
    /// Recompute the published tables.
    Tables {
        #[arg(value_enum, default_value = "all")]
        which: TableChoice,
    },
    /// Emit figure data.
    Figures {
        #[arg(value_enum, default_value = "all")]
        which: FigureChoice,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableChoice {
    Table1,
    Table2,
    Table3,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureChoice {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Riccati => "riccati",
            Command::Evaluate => "evaluate",
            Command::Modelfree => "modelfree",
            Command::Perturb => "perturb",
            Command::Lqg => "lqg",
            Command::Tables { .. } => "tables",
            Command::Figures { .. } => "figures",
        }
    }

    fn needs_config(&self) -> bool {
        !matches!(self, Command::Tables { .. } | Command::Figures { .. })
    }
}

/// State shared by a single invocation.
pub struct Session {
    pub seed: u64,
    pub out: Output,
    pub na: Applicability,
}

/// What a finished run leaves for the exit-code decision.
#[derive(Debug, Default)]
pub struct Outcome {
    pub not_applicable: Vec<String>,
    pub written: Vec<PathBuf>,
}

fn table_names(which: TableChoice) -> Vec<&'static str> {
    match which {
        TableChoice::Table1 => vec!["table1"],
        TableChoice::Table2 => vec!["table2"],
        TableChoice::Table3 => vec!["table3"],
        TableChoice::All => vec!["table1", "table2", "table3"],
    }
}

fn figure_artifacts(which: FigureChoice) -> Vec<String> {
    let fig1 = || {
        let mut v: Vec<String> = ["gaussian", "uniform", "bimodal"]
            .iter()
            .map(|l| format!("figures/fig1_{l}_histogram.csv"))
            .collect();
        v.push("figures/fig1_summary.csv".into());
        v
    };
    let fig2 = || {
        ["0.6", "0.8"]
            .iter()
            .flat_map(|g| [format!("figures/fig2_gamma{g}_ks.csv"), format!("figures/fig2_gamma{g}_edf.csv")])
            .collect::<Vec<_>>()
    };
    let fig3 = || {
        distlqr_core::scenarios::TABLE3
            .iter()
            .map(|r| format!("figures/fig3_gamma{}_eps{}_edf.csv", r.gamma, r.eps))
            .collect::<Vec<_>>()
    };
    let fig4 = || vec!["figures/fig4_lqg_ks.csv".to_string(), "figures/fig4_lqg_edf.csv".to_string()];
    match which {
        FigureChoice::Fig1 => fig1(),
        FigureChoice::Fig2 => fig2(),
        FigureChoice::Fig3 => fig3(),
        FigureChoice::Fig4 => fig4(),
        FigureChoice::All => [fig1(), fig2(), fig3(), fig4()].concat(),
    }
}

fn figure_list(which: FigureChoice) -> Vec<FigureChoice> {
    match which {
        FigureChoice::All => vec![FigureChoice::Fig1, FigureChoice::Fig2, FigureChoice::Fig3, FigureChoice::Fig4],
        one => vec![one],
    }
}

fn print_plan(cli: &Cli, cfg: Option<&ScenarioConfig>, seed: u64, out_dir: &std::path::Path) {
    let artifacts = match (cli.command, cfg) {
        (Command::Tables { which }, _) => table_names(which).iter().map(|t| format!("tables/{t}.csv")).collect(),
        (Command::Figures { which }, _) => figure_artifacts(which),
        (cmd, Some(cfg)) => commands::artifacts(cmd.name(), cfg),
        (_, None) => Vec::new(),
    };
    println!("plan: {}", cli.command.name());
    if let Some(cfg) = cfg {
        let ev = &cfg.evaluation;
        let mode = match cli.command {
            Command::Modelfree => Mode::Modelfree,
            Command::Lqg => Mode::Lqg,
            _ => ev.mode,
        };
        println!(
            "  mode {mode:?}, N = {}, T = {}, M = {}, delta = {}",
            ev.n_terms, ev.horizon, ev.samples, ev.delta
        );
    }
    println!("  seed {seed:#x}");
    if let Some(t) = cli.threads {
        println!("  threads {t}");
    }
    println!("  output directory {}", out_dir.display());
    for a in artifacts {
        println!("  would write {}", out_dir.join(a).display());
    }
}

/// Parses the config, resolves seed/threads/output, and runs the command.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = match (&cli.config, cli.command.needs_config()) {
        (Some(p), _) => Some(load_config(p)?),
        (None, true) => {
            return Err(CliError::config(format!("`{}` needs --config PATH", cli.command.name())));
        }
        (None, false) => None,
    };
    if let Some(cfg) = &cfg {
        // Validate before anything else so dry runs catch bad configs.
        cfg.build()?;
    }
    let seed = cli
        .seed
        .or_else(|| cfg.as_ref().and_then(|c| c.evaluation.seed))
        .unwrap_or(DEFAULT_SEED);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output.directory.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if cli.threads == Some(0) {
        return Err(CliError::config("--threads must be positive"));
    }
    if cli.dry_run {
        print_plan(cli, cfg.as_ref(), seed, &out_dir);
        return Ok(Outcome::default());
    }
    let formats = match (&cfg, cli.command) {
        (Some(c), cmd) if cmd.needs_config() => c.output.formats.clone(),
        _ => vec![Format::Csv, Format::Json],
    };
    let mut session = Session {
        seed,
        out: Output::new(out_dir, formats),
        na: Applicability::default(),
    };
    println!("seed {seed:#x}");
    let body = |session: &mut Session| execute(cli.command, cfg.as_ref(), session);
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("--threads: {e}")))?;
            pool.install(|| body(&mut session))?;
        }
        None => body(&mut session)?,
    }
    Ok(Outcome {
        not_applicable: session.na.skipped,
        written: session.out.written().to_vec(),
    })
}

fn execute(cmd: Command, cfg: Option<&ScenarioConfig>, session: &mut Session) -> Result<(), CliError> {
    let cfg_or = || cfg.ok_or_else(|| CliError::config("missing config"));
    match cmd {
        Command::Riccati => commands::riccati(session, cfg_or()?),
        Command::Evaluate => {
            let c = cfg_or()?;
            commands::evaluate(session, c, c.evaluation.mode)
        }
        Command::Modelfree => commands::evaluate(session, cfg_or()?, Mode::Modelfree),
        Command::Lqg => commands::evaluate(session, cfg_or()?, Mode::Lqg),
        Command::Perturb => commands::perturb(session, cfg_or()?),
        Command::Tables { which } => {
            for name in table_names(which) {
                let rows = match name {
                    "table1" => tables::table1(session.seed)?,
                    "table2" => tables::table2(session.seed)?,
                    _ => tables::table3(session.seed)?,
                };
                tables::print(&rows);
                tables::write(&mut session.out, name, &rows)?;
            }
            Ok(())
        }
        Command::Figures { which } => {
            for f in figure_list(which) {
                match f {
                    FigureChoice::Fig1 => figures::fig1(&mut session.out, session.seed)?,
                    FigureChoice::Fig2 => figures::fig2(&mut session.out, session.seed)?,
                    FigureChoice::Fig3 => figures::fig3(&mut session.out, session.seed)?,
                    FigureChoice::Fig4 => figures::fig4(&mut session.out, session.seed)?,
                    FigureChoice::All => unreachable!("expanded by figure_list"),
                }
            }
            Ok(())
        }
    }
}

/// Exit status for a finished run.
pub fn exit_code(result: &Result<Outcome, CliError>, strict: bool) -> i32 {
    match result {
        Err(e) => e.exit_code(),
        Ok(o) if strict && !o.not_applicable.is_empty() => 3,
        Ok(_) => 0,
    }
}
