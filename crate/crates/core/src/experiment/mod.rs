//! Multi-seed experiment configuration, execution and metrics.

mod metrics;
mod oracle;
mod runner;
mod scenario;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::agent::{AgentError, QInit};
use crate::env::EnvError;
use crate::federation::{FederationConfig, FederationError, SchemeKind};

pub use metrics::{aggregate_rows, fmt_sig, quantize, AggregateRow, MetricRow, MetricsTable, PSnapshot, QSnapshot};
pub use oracle::{
    bellman_backup, bellman_residual, value_iteration_capped, value_iteration_oracle, OracleError, ORACLE_MAX_ITERS,
    ORACLE_TOL,
};
pub use runner::{run_experiment, run_experiment_with_threads, run_seed, SeedRun, THREADS_ENV};
pub use scenario::{build_scenario, Assignment, EnvDesc, EnvGroup, ScenarioOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<ExperimentError>,
    },
}

/// Named environment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioTag {
    Gridworld,
    FlHomogeneous,
    FlRandomHetero,
    FlStrongHetero,
    Custom,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 5] = [
        ScenarioTag::Gridworld,
        ScenarioTag::FlHomogeneous,
        ScenarioTag::FlRandomHetero,
        ScenarioTag::FlStrongHetero,
        ScenarioTag::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioTag::Gridworld => "gridworld",
            ScenarioTag::FlHomogeneous => "fl_homogeneous",
            ScenarioTag::FlRandomHetero => "fl_random_hetero",
            ScenarioTag::FlStrongHetero => "fl_strong_hetero",
            ScenarioTag::Custom => "custom",
        }
    }

    pub fn is_frozenlake(self) -> bool {
        matches!(self, ScenarioTag::FlHomogeneous | ScenarioTag::FlRandomHetero | ScenarioTag::FlStrongHetero)
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioTag {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        ScenarioTag::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .ok_or_else(|| ExperimentError::Config(format!("unknown scenario '{s}'")))
    }
}

/// Everything needed to reproduce one experiment.
///
/// Hyperparameters are stored as `f64` and converted to the simulation
/// scalar when a seed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioTag,
    pub scheme: SchemeKind,
    /// Environment per group with its agent count; agents are numbered in
    /// group order.
    pub groups: Vec<EnvGroup>,
    pub total_steps: usize,
    pub fed: FederationConfig<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Initial values of non-terminal Q-table entries.
    pub q_init: QInit,
    pub seeds: Vec<u64>,
    /// Rounds (1-based) at which the p-matrix is captured; `None` picks five
    /// evenly spaced rounds including the first and last.
    pub snapshot_rounds: Option<Vec<usize>>,
    /// Capture every agent's Q-table at every round of the first seed.
    pub trace_q: bool,
}

pub const DEFAULT_AGENTS: usize = 20;
pub const DEFAULT_SEEDS: u64 = 30;
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Small random values break greedy ties differently per agent and state.
pub const DEFAULT_Q_INIT: QInit = QInit::Uniform { low: -0.01, high: 0.01 };

impl ExperimentConfig {
    /// Documented defaults for `scenario` with `scheme`.
    pub fn preset(scenario: ScenarioTag, scheme: SchemeKind) -> Result<Self, ExperimentError> {
        let opts = ScenarioOptions::default();
        let groups = build_scenario(scenario, DEFAULT_AGENTS, &opts)?;
        Ok(Self {
            scenario,
            scheme,
            groups,
            total_steps: 10_000,
            fed: FederationConfig::default(),
            epsilon: 0.1,
            alpha: DEFAULT_ALPHA,
            gamma: 0.95,
            q_init: DEFAULT_Q_INIT,
            seeds: (0..DEFAULT_SEEDS).collect(),
            snapshot_rounds: None,
            trace_q: false,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn rounds(&self) -> usize {
        self.total_steps / self.fed.h
    }

    /// Group id of every agent.
    pub fn assignment(&self) -> Assignment {
        Assignment::from_counts(self.groups.iter().map(|g| g.count))
    }

    /// Rounds at which the p-matrix is recorded.
    pub fn capture_rounds(&self) -> Vec<usize> {
        match &self.snapshot_rounds {
            Some(r) => r.clone(),
            None => default_capture_rounds(self.rounds(), 5),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.groups.is_empty() || self.n_agents() == 0 {
            return bad("at least one agent is required".into());
        }
        if self.groups.iter().any(|g| g.count == 0) {
            return bad("every group needs at least one agent".into());
        }
        self.fed.validate()?;
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon = {} outside [0, 1]", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} outside (0, 1]", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma = {} outside (0, 1]", self.gamma));
        }
        match self.q_init {
            QInit::Constant(v) if !v.is_finite() => return bad("q_init must be finite".into()),
            QInit::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                return bad(format!("q_init range [{low}, {high}) is invalid"))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        let shapes: Vec<(usize, usize)> = self.groups.iter().map(|g| g.env.shape()).collect::<Result<_, _>>()?;
        if shapes.windows(2).any(|w| w[0] != w[1]) {
            return bad("all environments must share state and action spaces".into());
        }
        if let Some(rounds) = &self.snapshot_rounds {
            if let Some(r) = rounds.iter().find(|r| **r == 0 || **r > self.rounds()) {
                return bad(format!("snapshot round {r} outside 1..={}", self.rounds()));
            }
        }
        Ok(())
    }
}

/// `count` evenly spaced rounds in `1..=rounds`, first and last included.
pub fn default_capture_rounds(rounds: usize, count: usize) -> Vec<usize> {
    if rounds == 0 {
        return Vec::new();
    }
    if count <= 1 || rounds == 1 {
        return vec![rounds];
    }
    let mut out: Vec<usize> =
        (0..count).map(|k| 1 + ((rounds - 1) as f64 * k as f64 / (count - 1) as f64).round() as usize).collect();
    out.dedup();
    out
}
