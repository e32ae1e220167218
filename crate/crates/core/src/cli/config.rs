//! `key=value` experiment configuration files.
//!
//! Tokens are separated by whitespace or newlines and `#` starts a comment
//! running to the end of the line. Every key is optional; unknown keys and
//! repeated keys are rejected.
//!
//! | key | value |
//! |-----|-------|
//! | `scheme` | `self`, `all`, `peers`, `sampling`, `screen`, `caesar` (default `caesar`) |
//! | `scenario` | `gridworld`, `fl_homogeneous`, `fl_random_hetero`, `fl_strong_hetero`, `custom` (default `gridworld`) |
//! | `n_agents` | agent count, split evenly over the two groups of a built-in scenario (default 20) |
//! | `total_steps`, `h`, `eval_episodes` | positive counts (defaults 10000, 100, 5) |
//! | `epsilon`, `alpha`, `gamma` | exploration rate, learning rate, discount |
//! | `beta`, `p0`, `delta`, `xi` | blending weight and p-matrix knobs |
//! | `seeds` | a count `30` (seeds `0..30`), a range `a..b` or a list `3,7,11` |
//! | `q_init` | a constant `0` or a uniform range `low..high` |
//! | `map_seed`, `slippery`, `step_limit` | FrozenLake map stream, dynamics and episode cap |
//! | `map_easy`, `map_hard` | map rows separated by `/`, e.g. `SFFF/FHFH/FFFH/HFFG` |
//! | `groups` | explicit environments, `ENV*COUNT` separated by commas |
//! | `snapshot_rounds` | rounds at which the p-matrix is captured |
//!
//! `ENV` is one of `gridworld-m1`, `gridworld-m2`, `toy-m1`, `toy-m2`,
//! `map_easy`, `map_hard`, `map_random` (the first 4-hole map drawn from
//! `map_seed`) or `frozenlake:ROWS`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::agent::QInit;
use crate::env::{generate_random_map, map_easy, map_hard, GridVariant, MapLayout};
use crate::experiment::{
    build_scenario, EnvDesc, EnvGroup, ExperimentConfig, ScenarioOptions, ScenarioTag, DEFAULT_AGENTS, DEFAULT_ALPHA,
    DEFAULT_Q_INIT, DEFAULT_SEEDS,
};
use crate::federation::{FederationConfig, SchemeKind};
use crate::rng::{stream, Purpose};

pub const KEYS: [&str; 21] = [
    "scheme",
    "scenario",
    "n_agents",
    "total_steps",
    "h",
    "epsilon",
    "alpha",
    "gamma",
    "beta",
    "p0",
    "delta",
    "xi",
    "eval_episodes",
    "seeds",
    "q_init",
    "map_seed",
    "slippery",
    "step_limit",
    "map_easy",
    "map_hard",
    "groups",
];

const EXTRA_KEYS: [&str; 1] = ["snapshot_rounds"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for '{key}': {msg}")]
    Invalid { key: String, msg: String },
    #[error("scenario 'custom' needs an explicit agent-to-environment assignment ('groups')")]
    MissingAssignment,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Rejected(String),
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

/// Raw `key → (line, value)` pairs before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (usize, String)>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            for token in content.split_whitespace() {
                let (key, value) = token
                    .split_once('=')
                    .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected key=value, found '{token}'") })?;
                let key = key.trim().to_ascii_lowercase();
                if !KEYS.contains(&key.as_str()) && !EXTRA_KEYS.contains(&key.as_str()) {
                    return Err(ConfigError::Parse { line, msg: format!("unknown key '{key}'") });
                }
                if value.is_empty() {
                    return Err(ConfigError::Parse { line, msg: format!("empty value for '{key}'") });
                }
                if out.values.contains_key(&key) {
                    return Err(ConfigError::Parse { line, msg: format!("duplicate key '{key}'") });
                }
                out.values.insert(key, (line, value.to_string()));
            }
        }
        Ok(out)
    }

    /// Sets or replaces `key`; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) && !EXTRA_KEYS.contains(&key.as_str()) {
            return Err(invalid(&key, "unknown key"));
        }
        self.values.insert(key, (0, value.trim().to_string()));
        Ok(())
    }

    /// Parses `KEY=VALUE`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| invalid(pair, "expected KEY=VALUE"))?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<V>().map_err(|e| invalid(key, format!("'{v}': {e}")))).transpose()
    }

    fn real(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, ConfigError> {
        let v = self.parsed::<f64>(key)?.unwrap_or(default);
        if !ok(v) {
            return Err(invalid(key, format!("{v} outside {range}")));
        }
        Ok(v)
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.parsed::<usize>(key)?.unwrap_or(default);
        if v < min {
            return Err(invalid(key, format!("{v} is below the minimum {min}")));
        }
        Ok(v)
    }

    fn layout(&self, key: &str, default: MapLayout) -> Result<MapLayout, ConfigError> {
        self.parsed::<MapLayout>(key).map(|m| m.unwrap_or(default))
    }

    /// Resolves every key against the documented defaults.
    pub fn into_config(self) -> Result<ExperimentConfig, ConfigError> {
        let scheme = self.parsed::<SchemeKind>("scheme")?.unwrap_or(SchemeKind::Caesar);
        let scenario = self.parsed::<ScenarioTag>("scenario")?.unwrap_or(ScenarioTag::Gridworld);
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let half_open = |v: f64| v > 0.0 && v <= 1.0;
        let fed = FederationConfig {
            h: self.count("h", 100, 1)?,
            beta: self.real("beta", 0.5, unit, "[0, 1]")?,
            p0: self.real("p0", 0.0, unit, "[0, 1]")?,
            delta: self.real("delta", 0.1, |v| v > 0.0 && v.is_finite(), "(0, inf)")?,
            xi: self.real("xi", 0.0, |v| v >= 0.0 && v.is_finite(), "[0, inf)")?,
            eval_episodes: self.count("eval_episodes", 5, 1)?,
        };
        let epsilon = self.real("epsilon", 0.1, unit, "[0, 1]")?;
        let alpha = self.real("alpha", DEFAULT_ALPHA, half_open, "(0, 1]")?;
        let gamma = self.real("gamma", 0.95, half_open, "(0, 1]")?;
        let total_steps = self.count("total_steps", 10_000, 1)?;
        let seeds = match self.get("seeds") {
            Some(v) => parse_seeds(v).map_err(|m| invalid("seeds", m))?,
            None => (0..DEFAULT_SEEDS).collect(),
        };
        let q_init = match self.get("q_init") {
            Some(v) => parse_q_init(v).map_err(|m| invalid("q_init", m))?,
            None => DEFAULT_Q_INIT,
        };
        let snapshot_rounds = match self.get("snapshot_rounds") {
            Some(v) => Some(parse_list::<usize>(v).map_err(|m| invalid("snapshot_rounds", m))?),
            None => None,
        };

        let opts = ScenarioOptions {
            map_seed: self.parsed::<u64>("map_seed")?.unwrap_or(0),
            slippery: self.parsed::<bool>("slippery")?.unwrap_or(false),
            step_limit: self.count("step_limit", ScenarioOptions::default().step_limit, 1)?,
            map_easy: self.layout("map_easy", map_easy())?,
            map_hard: self.layout("map_hard", map_hard())?,
        };
        let n_agents = self.parsed::<usize>("n_agents")?;
        let groups = match self.get("groups") {
            Some(v) => {
                let groups = parse_groups(v, &opts).map_err(|m| invalid("groups", m))?;
                let total: usize = groups.iter().map(|g| g.count).sum();
                if let Some(n) = n_agents.filter(|n| *n != total) {
                    return Err(invalid("n_agents", format!("{n} differs from the {total} agents listed in 'groups'")));
                }
                groups
            }
            None if scenario == ScenarioTag::Custom => return Err(ConfigError::MissingAssignment),
            None => {
                let n = n_agents.unwrap_or(DEFAULT_AGENTS);
                if n < 2 {
                    return Err(invalid("n_agents", format!("{n} is below the minimum 2")));
                }
                build_scenario(scenario, n, &opts).map_err(|e| ConfigError::Rejected(e.to_string()))?
            }
        };

        let cfg = ExperimentConfig {
            scenario,
            scheme,
            groups,
            total_steps,
            fed,
            epsilon,
            alpha,
            gamma,
            q_init,
            seeds,
            snapshot_rounds,
            trace_q: false,
        };
        cfg.validate().map_err(|e| ConfigError::Rejected(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    Settings::parse(text)?.into_config()
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text)
}

fn parse_list<V: std::str::FromStr>(v: &str) -> Result<Vec<V>, String>
where
    V::Err: std::fmt::Display,
{
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<V>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

/// `N` (seeds `0..N`), `a..b` or `a,b,c`.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let seeds = if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
        (a..b).collect()
    } else if v.contains(',') {
        parse_list(v)?
    } else {
        let n: u64 = v.trim().parse().map_err(|e| format!("'{v}': {e}"))?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(format!("'{v}' selects no seeds"));
    }
    Ok(seeds)
}

/// A constant or a `low..high` uniform range.
pub fn parse_q_init(v: &str) -> Result<QInit, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")).and_then(finite);
    match v.split_once("..") {
        Some((lo, hi)) => {
            let (low, high) = (num(lo)?, num(hi)?);
            if low > high {
                return Err(format!("empty range {low}..{high}"));
            }
            Ok(QInit::Uniform { low, high })
        }
        None => Ok(QInit::Constant(num(v)?)),
    }
}

fn finite(x: f64) -> Result<f64, String> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{x} is not finite"))
    }
}

/// One environment name; FrozenLake entries take their dynamics from `opts`.
pub fn parse_env(name: &str, opts: &ScenarioOptions) -> Result<EnvDesc, String> {
    let lake = |layout| EnvDesc::FrozenLake { layout, slippery: opts.slippery, step_limit: opts.step_limit };
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "gridworld-m1" => EnvDesc::Gridworld(GridVariant::M1),
        "gridworld-m2" => EnvDesc::Gridworld(GridVariant::M2),
        "toy-m1" => EnvDesc::DecisionToy(GridVariant::M1),
        "toy-m2" => EnvDesc::DecisionToy(GridVariant::M2),
        "map_easy" => lake(opts.map_easy.clone()),
        "map_hard" => lake(opts.map_hard.clone()),
        "map_random" => {
            lake(generate_random_map(4, 4, 4, &mut stream(opts.map_seed, 0, Purpose::Map)).map_err(|e| e.to_string())?)
        }
        _ => match name.trim().split_once(':') {
            Some((kind, rows)) if kind.eq_ignore_ascii_case("frozenlake") => {
                lake(rows.parse::<MapLayout>().map_err(|e| e.to_string())?)
            }
            _ => return Err(format!("unknown environment '{name}'")),
        },
    })
}

/// `ENV*COUNT,ENV*COUNT,...`
pub fn parse_groups(v: &str, opts: &ScenarioOptions) -> Result<Vec<EnvGroup>, String> {
    let groups = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (env, count) = item.rsplit_once('*').ok_or_else(|| format!("'{item}' is not ENV*COUNT"))?;
            let count: usize = count.trim().parse().map_err(|e| format!("'{count}': {e}"))?;
            if count == 0 {
                return Err(format!("'{item}' has no agents"));
            }
            Ok(EnvGroup { env: parse_env(env, opts)?, count })
        })
        .collect::<Result<Vec<_>, String>>()?;
    if groups.is_empty() {
        return Err("no groups listed".into());
    }
    Ok(groups)
}

fn env_token(env: &EnvDesc) -> String {
    match env {
        EnvDesc::Gridworld(GridVariant::M1) => "gridworld-m1".into(),
        EnvDesc::Gridworld(GridVariant::M2) => "gridworld-m2".into(),
        EnvDesc::DecisionToy(GridVariant::M1) => "toy-m1".into(),
        EnvDesc::DecisionToy(GridVariant::M2) => "toy-m2".into(),
        EnvDesc::FrozenLake { layout, .. } => format!("frozenlake:{}", layout.to_compact()),
    }
}

/// Writes `cfg` back in the file format with its environments listed
/// explicitly, so that parsing the result reproduces `cfg`.
///
/// FrozenLake dynamics are taken from the first FrozenLake group.
pub fn format_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("scheme", cfg.scheme.to_string());
    kv("scenario", cfg.scenario.to_string());
    kv("n_agents", cfg.n_agents().to_string());
    kv("total_steps", cfg.total_steps.to_string());
    kv("h", cfg.fed.h.to_string());
    kv("epsilon", cfg.epsilon.to_string());
    kv("alpha", cfg.alpha.to_string());
    kv("gamma", cfg.gamma.to_string());
    kv("beta", cfg.fed.beta.to_string());
    kv("p0", cfg.fed.p0.to_string());
    kv("delta", cfg.fed.delta.to_string());
    kv("xi", cfg.fed.xi.to_string());
    kv("eval_episodes", cfg.fed.eval_episodes.to_string());
    kv(
        "seeds",
        cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
            + if cfg.seeds.len() == 1 { "," } else { "" },
    );
    kv(
        "q_init",
        match cfg.q_init {
            QInit::Constant(v) => v.to_string(),
            QInit::Uniform { low, high } => format!("{low}..{high}"),
        },
    );
    if let Some(EnvDesc::FrozenLake { slippery, step_limit, .. }) =
        cfg.groups.iter().map(|g| &g.env).find(|e| matches!(e, EnvDesc::FrozenLake { .. }))
    {
        kv("slippery", slippery.to_string());
        kv("step_limit", step_limit.to_string());
    }
    kv("groups", cfg.groups.iter().map(|g| format!("{}*{}", env_token(&g.env), g.count)).collect::<Vec<_>>().join(","));
    if let Some(r) = &cfg.snapshot_rounds {
        kv("snapshot_rounds", r.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    }
    s
}
