//! Command-line front end: config parsing, figure presets and CSV output.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a
//! run or an output write fails.

mod config;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{
    format_config, parse_config, parse_config_str, parse_env, parse_groups, parse_q_init, parse_seeds, ConfigError,
    Settings, KEYS,
};
pub use output::{
    emit_metrics, emit_oracle, emit_p_matrix_trace, emit_q_trace, emit_summary, read_aggregate_csv, read_raw_csv,
    write_csv, OutputError, AGGREGATE_FILE, AGGREGATE_HEADER, AGGREGATE_UNDISCOUNTED_FILE, ORACLE_FILE, P_TRACE_FILE,
    P_TRACE_HEADER, Q_TRACE_FILE, RAW_FILE, RAW_HEADER, RAW_UNDISCOUNTED_FILE, SUMMARY_FILE,
};

use crate::experiment::{
    run_experiment, value_iteration_oracle, ExperimentConfig, ExperimentError, MetricsTable, ScenarioOptions,
    ScenarioTag, ORACLE_TOL,
};
use crate::federation::SchemeKind;

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] ExperimentError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Run(_) | CliError::Output(_) => 2,
        }
    }
}

/// Named presets reproducing the published experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Q-value traces of independent learners on GridWorld.
    Fig2,
    /// All schemes on GridWorld.
    Fig4,
    /// p-matrix evolution under Sampling on GridWorld.
    Fig5,
    Fig6a,
    Fig6b,
    Fig6c,
}

impl FigureId {
    pub const ALL: [FigureId; 6] =
        [FigureId::Fig2, FigureId::Fig4, FigureId::Fig5, FigureId::Fig6a, FigureId::Fig6b, FigureId::Fig6c];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6a => "fig6a",
            FigureId::Fig6b => "fig6b",
            FigureId::Fig6c => "fig6c",
        }
    }

    pub fn scenario(self) -> ScenarioTag {
        match self {
            FigureId::Fig2 | FigureId::Fig4 | FigureId::Fig5 => ScenarioTag::Gridworld,
            FigureId::Fig6a => ScenarioTag::FlHomogeneous,
            FigureId::Fig6b => ScenarioTag::FlRandomHetero,
            FigureId::Fig6c => ScenarioTag::FlStrongHetero,
        }
    }

    pub fn schemes(self) -> Vec<SchemeKind> {
        match self {
            FigureId::Fig2 => vec![SchemeKind::SelfOnly],
            FigureId::Fig5 => vec![SchemeKind::Sampling],
            _ => SchemeKind::ALL.to_vec(),
        }
    }

    /// One config per scheme, optionally restricted to the first `seeds` seeds.
    pub fn configs(self, seeds: Option<&[u64]>) -> Result<Vec<ExperimentConfig>, ExperimentError> {
        self.schemes()
            .into_iter()
            .map(|scheme| {
                let mut cfg = ExperimentConfig::preset(self.scenario(), scheme)?;
                if self == FigureId::Fig2 {
                    cfg.epsilon = 0.9;
                    cfg.trace_q = true;
                }
                if let Some(s) = seeds {
                    cfg.seeds = s.to_vec();
                }
                Ok(cfg)
            })
            .collect()
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        FigureId::ALL.into_iter().find(|f| f.name() == lower).ok_or_else(|| {
            let known: Vec<&str> = FigureId::ALL.iter().map(|f| f.name()).collect();
            CliError::Usage(format!("unknown figure '{s}' (expected one of {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "fedrl-sim", version, about = "Federated tabular Q-learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's scheme.
        #[arg(long)]
        scheme: Option<String>,
        /// Seed count `N`, range `a..b` or list `a,b,c`.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated rounds at which the p-matrix is captured.
        #[arg(long)]
        snapshot_rounds: Option<String>,
    },
    /// Run several schemes on one scenario, one subdirectory per scheme.
    Compare {
        #[arg(long)]
        scenario: String,
        /// Comma-separated scheme names.
        #[arg(long, default_value = "self,all,peers,sampling,screen,caesar")]
        schemes: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        /// Extra config entries, `KEY=VALUE`; repeatable.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Write the optimal Q-table of a built-in environment.
    Oracle {
        /// `gridworld-m1`, `gridworld-m2`, `toy-m1`, `toy-m2`, `map_easy`,
        /// `map_hard`, `map_random` or `frozenlake:ROWS`.
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
    },
    /// Produce the data behind one published figure.
    Figure {
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
    },
}

/// Runs `cfg` and writes its resolved config, metrics and traces to `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<MetricsTable, CliError> {
    eprintln!("{} / {}: {} seeds -> {}", cfg.scenario, cfg.scheme, cfg.seeds.len(), dir.display());
    let (table, _) = run_experiment::<f64>(cfg)?;
    output::ensure_dir(dir)?;
    output::write_text(&dir.join(CONFIG_FILE), &format_config(cfg))?;
    emit_metrics(&table, dir)?;
    emit_p_matrix_trace(&table.p_trace, dir)?;
    if cfg.trace_q {
        emit_q_trace(&table.q_trace, cfg, dir)?;
    }
    Ok(table)
}

fn run_all(cfgs: &[ExperimentConfig], dir: &Path) -> Result<Vec<MetricsTable>, CliError> {
    let tables = cfgs.iter().map(|c| run_to_dir(c, &dir.join(c.scheme.name()))).collect::<Result<Vec<_>, _>>()?;
    emit_summary(&tables, dir)?;
    Ok(tables)
}

fn parse_schemes(list: &str) -> Result<Vec<SchemeKind>, CliError> {
    let schemes = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<SchemeKind>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if schemes.is_empty() {
        return Err(CliError::Usage("no schemes given".into()));
    }
    Ok(schemes)
}

fn seed_list(v: &str) -> Result<Vec<u64>, CliError> {
    parse_seeds(v).map_err(|m| ConfigError::Invalid { key: "seeds".into(), msg: m }.into())
}

/// The optimal table of the named environment.
pub fn oracle_for(env: &str, gamma: f64) -> Result<crate::agent::QTable<f64>, CliError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CliError::Usage(format!("gamma = {gamma} must lie in (0, 1) for the oracle")));
    }
    let desc = parse_env(env, &ScenarioOptions::default()).map_err(CliError::Usage)?;
    let spec = desc.build::<f64>(gamma).map_err(|e| CliError::Usage(e.to_string()))?;
    value_iteration_oracle(&spec, ORACLE_TOL).map_err(|e| CliError::Run(ExperimentError::Config(e.to_string())))
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out, scheme, seeds, snapshot_rounds } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|source| ConfigError::Io { path: config.display().to_string(), source })?;
            let mut settings = Settings::parse(&text)?;
            for (key, value) in [("scheme", scheme), ("seeds", seeds), ("snapshot_rounds", snapshot_rounds)] {
                if let Some(v) = value {
                    settings.set(key, &v)?;
                }
            }
            run_to_dir(&settings.into_config()?, &out)?;
        }
        Command::Compare { scenario, schemes, out, seeds, set } => {
            let schemes = parse_schemes(&schemes)?;
            let mut settings = Settings::default();
            settings.set("scenario", &scenario)?;
            for pair in &set {
                settings.set_pair(pair)?;
            }
            if let Some(v) = seeds {
                settings.set("seeds", &v)?;
            }
            let cfgs = schemes
                .into_iter()
                .map(|k| {
                    let mut s = settings.clone();
                    s.set("scheme", k.name())?;
                    s.into_config()
                })
                .collect::<Result<Vec<_>, _>>()?;
            run_all(&cfgs, &out)?;
        }
        Command::Oracle { env, out, gamma } => {
            emit_oracle(&[oracle_for(&env, gamma)?], &out)?;
        }
        Command::Figure { figure, out, seeds } => {
            let id: FigureId = figure.parse()?;
            let seeds = seeds.map(|v| seed_list(&v)).transpose()?;
            let cfgs = id.configs(seeds.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
            match cfgs.as_slice() {
                [cfg] => {
                    run_to_dir(cfg, &out)?;
                    if id == FigureId::Fig2 {
                        let tables = cfg
                            .groups
                            .iter()
                            .map(|g| {
                                let spec = g.env.build::<f64>(cfg.gamma)?;
                                value_iteration_oracle(&spec, ORACLE_TOL)
                                    .map_err(|e| ExperimentError::Config(e.to_string()))
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        emit_oracle(&tables, &out.join(ORACLE_FILE))?;
                    }
                }
                many => {
                    run_all(many, &out)?;
                }
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(main_with_args(std::env::args_os()))
}
