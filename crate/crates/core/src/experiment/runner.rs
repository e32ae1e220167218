use std::sync::Arc;

use rayon::prelude::*;

use crate::agent::Agent;
use crate::federation::{federated_round, FederationConfig, PMatrix, RoundSnapshot};
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

use super::metrics::{aggregate_rows, quantize, MetricRow, MetricsTable, PSnapshot, QSnapshot};
use super::{ExperimentConfig, ExperimentError};

/// Caps the number of seeds simulated concurrently.
pub const THREADS_ENV: &str = "FEDRL_SIM_THREADS";

/// Output of a single seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    /// Sorted by `(round, agent)`.
    pub rows: Vec<MetricRow>,
    pub p_trace: Vec<PSnapshot>,
    pub q_trace: Vec<QSnapshot>,
    /// Final Q-table of every agent.
    pub final_tables: Vec<Vec<f64>>,
}

fn to_f64<T: Scalar>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Simulates one seed: `total_steps` local updates per agent with a
/// federated round every `h` steps.
pub fn run_seed<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, ExperimentError> {
    cfg.validate()?;
    let gamma = T::lit(cfg.gamma);
    let fed = FederationConfig::<T> {
        h: cfg.fed.h,
        beta: T::lit(cfg.fed.beta),
        p0: T::lit(cfg.fed.p0),
        delta: T::lit(cfg.fed.delta),
        xi: T::lit(cfg.fed.xi),
        eval_episodes: cfg.fed.eval_episodes,
    };
    let assignment = cfg.assignment();
    let specs = cfg.groups.iter().map(|g| g.env.build(gamma).map(Arc::new)).collect::<Result<Vec<_>, _>>()?;

    let mut agents = (0..cfg.n_agents())
        .map(|id| {
            let i = id as u64;
            let spec = specs[assignment.group_of(id)].clone();
            let q = cfg.q_init.table(&spec, &mut stream(seed, i, Purpose::Init));
            Agent::new(
                id,
                spec,
                q,
                T::lit(cfg.epsilon),
                T::lit(cfg.alpha),
                stream(seed, i, Purpose::Env),
                stream(seed, i, Purpose::Policy),
                stream(seed, i, Purpose::Eval),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = agents.len();
    let mut p = PMatrix::new(n, fed.p0);
    let mut snapshot = RoundSnapshot::capture(&agents);
    let capture = cfg.capture_rounds();
    let mut rows = Vec::with_capacity(cfg.rounds() * n);
    let mut p_trace = Vec::new();
    let mut q_trace = Vec::new();

    for t in 1..=cfg.total_steps {
        for agent in agents.iter_mut() {
            agent.local_update(gamma)?;
        }
        if t % fed.h != 0 {
            continue;
        }
        let round = t / fed.h;
        let mut server_rng = stream(seed, round as u64, Purpose::Server);
        let tele = federated_round(
            &mut agents,
            &mut p,
            &mut snapshot,
            cfg.scheme,
            &fed,
            gamma,
            Some(assignment.as_slice()),
            &mut server_rng,
        )?;
        for (agent, g) in tele.g.iter().enumerate() {
            rows.push(MetricRow {
                seed,
                round,
                step: t,
                agent,
                group: assignment.group_of(agent),
                g: quantize(g.discounted.as_f64()),
                g_undiscounted: quantize(g.undiscounted.as_f64()),
            });
        }
        if capture.contains(&round) {
            p_trace.push(PSnapshot { round, step: t, n, probs: to_f64(tele.p_prior.as_slice()) });
        }
        if cfg.trace_q {
            q_trace.push(QSnapshot { round, step: t, tables: agents.iter().map(|a| to_f64(a.q().values())).collect() });
        }
    }
    let final_tables = agents.iter().map(|a| to_f64(a.q().values())).collect();
    Ok(SeedRun { seed, rows, p_trace, q_trace, final_tables })
}

/// Runs every seed (in parallel, capped by `FEDRL_SIM_THREADS` when set) and
/// merges the results in ascending seed order.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<(MetricsTable, Vec<SeedRun>), ExperimentError> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    run_experiment_with_threads::<T>(cfg, threads)
}

pub fn run_experiment_with_threads<T: Scalar>(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<(MetricsTable, Vec<SeedRun>), ExperimentError> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let work = || {
        seeds
            .par_iter()
            .map(|&seed| run_seed::<T>(cfg, seed).map_err(|e| ExperimentError::Seed { seed, source: Box::new(e) }))
            .collect::<Result<Vec<_>, _>>()
    };
    let runs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok((merge(cfg, &runs), runs))
}

fn merge(cfg: &ExperimentConfig, runs: &[SeedRun]) -> MetricsTable {
    let rows: Vec<MetricRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let aggregates = aggregate_rows(&rows, |r| r.g);
    let aggregates_undiscounted = aggregate_rows(&rows, |r| r.g_undiscounted);
    let first = runs.first();
    MetricsTable {
        scheme: cfg.scheme,
        scenario: cfg.scenario,
        rows,
        aggregates,
        aggregates_undiscounted,
        p_trace: first.map(|r| r.p_trace.clone()).unwrap_or_default(),
        q_trace: first.map(|r| r.q_trace.clone()).unwrap_or_default(),
    }
}
