//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fedrl_sim::agent::{QInit, QTable};
use fedrl_sim::cli::{run_to_dir, FigureId, RAW_FILE};
use fedrl_sim::env::{build_decision_toy, GridVariant};
use fedrl_sim::experiment::{
    bellman_residual, run_experiment, run_seed, value_iteration_oracle, AggregateRow, ExperimentConfig, MetricsTable,
    ScenarioTag, SeedRun, ORACLE_TOL,
};
use fedrl_sim::federation::{
    aggregate, federated_round, federated_round_ordered, FederationConfig, PMatrix, RoundSnapshot, SchemeKind,
};
use fedrl_sim::rng::{stream, Purpose};
use rand::seq::SliceRandom;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Runs {
    tables: BTreeMap<SchemeKind, MetricsTable>,
    seeds: BTreeMap<SchemeKind, Vec<SeedRun>>,
}

impl Runs {
    fn new(scenario: ScenarioTag, schemes: &[SchemeKind]) -> Self {
        let mut tables = BTreeMap::new();
        let mut seeds = BTreeMap::new();
        for &k in schemes {
            let cfg = ExperimentConfig::preset(scenario, k).expect("preset");
            let (t, r) = run_experiment::<f64>(&cfg).expect("experiment");
            tables.insert(k, t);
            seeds.insert(k, r);
        }
        Self { tables, seeds }
    }

    fn last(&self, k: SchemeKind) -> &AggregateRow {
        self.tables[&k].final_aggregate().expect("rounds recorded")
    }

    fn last_undiscounted(&self, k: SchemeKind) -> &AggregateRow {
        self.tables[&k].final_aggregate_undiscounted().expect("rounds recorded")
    }

    fn summary(&self) -> String {
        self.tables
            .keys()
            .map(|k| format!("{k}={:.4}±{:.4}", self.last(*k).mean, self.last(*k).ci95))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn criterion_1() -> Check {
    let q1 = value_iteration_oracle(&build_decision_toy(GridVariant::M1, 0.95).unwrap(), ORACLE_TOL).unwrap();
    let q2 = value_iteration_oracle(&build_decision_toy(GridVariant::M2, 0.95).unwrap(), ORACLE_TOL).unwrap();
    ensure(q1.row(0) == [-1.0, 1.0], format!("Q1* = {:?}", q1.row(0)))?;
    ensure(q2.row(0) == [1.0, -1.0], format!("Q2* = {:?}", q2.row(0)))?;
    let avg = aggregate(&[q1, q2], &[0, 1]).unwrap().unwrap();
    ensure(avg.row(0) == [0.0, 0.0], format!("mean = {:?}", avg.row(0)))?;
    Ok("Q1*=(-1,1) Q2*=(1,-1) mean=(0,0)".into())
}

fn criterion_2() -> Check {
    let mut cfg = ExperimentConfig::preset(ScenarioTag::Gridworld, SchemeKind::SelfOnly).unwrap();
    cfg.epsilon = 0.9;
    let stars: Vec<QTable<f64>> = cfg
        .groups
        .iter()
        .map(|g| value_iteration_oracle(&g.env.build::<f64>(cfg.gamma).unwrap(), ORACLE_TOL).unwrap())
        .collect();
    let f = cfg.assignment();
    let (_, runs) = run_experiment::<f64>(&cfg).map_err(|e| e.to_string())?;
    let mut good = 0;
    let mut worst = 0.0f64;
    for run in &runs {
        let dist = run
            .final_tables
            .iter()
            .enumerate()
            .map(|(i, t)| t.iter().zip(stars[f.group_of(i)].values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        worst = worst.max(dist);
        good += usize::from(dist < 0.05);
    }
    let detail = format!("{good}/{} seeds within 0.05 (worst max-norm {worst:.4})", runs.len());
    ensure(good >= 28, detail.clone())?;
    Ok(detail)
}

fn criterion_3(runs: &Runs) -> Check {
    use SchemeKind::*;
    let g = |k| runs.last(k).mean;
    let peers = runs.last(Peers);
    let mut failures = vec![];
    if (g(Caesar) - peers.mean).abs() > peers.ci95 {
        failures.push("(a) caesar outside peers CI");
    }
    for (k, label) in [
        (Sampling, "(b) caesar <= sampling"),
        (Screen, "(b) caesar <= screen"),
        (All, "(b) caesar <= all"),
        (SelfOnly, "(b) caesar <= self"),
    ] {
        if g(Caesar) <= g(k) {
            failures.push(label);
        }
    }
    if g(Peers) <= g(All) {
        failures.push("(c) peers <= all");
    }
    let detail = runs.summary();
    ensure(failures.is_empty(), format!("{}: {detail}", failures.join(", ")))?;
    Ok(detail)
}

fn criterion_4(runs: &Runs) -> Check {
    let seeds = &runs.seeds[&SchemeKind::Sampling];
    let cfg = ExperimentConfig::preset(ScenarioTag::Gridworld, SchemeKind::Sampling).unwrap();
    let f = cfg.assignment();
    let non_peer_mean = |round: usize| -> Result<f64, String> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for run in seeds {
            let snap = run.p_trace.iter().find(|s| s.round == round).ok_or(format!("no capture at round {round}"))?;
            for i in 0..snap.n {
                for j in (0..snap.n).filter(|&j| !f.are_peers(i, j)) {
                    sum += snap.get(i, j);
                    count += 1;
                }
            }
        }
        Ok(sum / count as f64)
    };
    let first = non_peer_mean(1)?;
    let last = non_peer_mean(cfg.rounds())?;
    let detail = format!("non-peer p: round 1 = {first}, round {} = {last:.4}", cfg.rounds());
    ensure(first == cfg.fed.p0 && last < 0.1, detail.clone())?;
    Ok(detail)
}

fn criterion_5() -> Check {
    let runs = Runs::new(ScenarioTag::FlHomogeneous, &[SchemeKind::All, SchemeKind::Peers]);
    let (all, peers) = (runs.last(SchemeKind::All), runs.last(SchemeKind::Peers));
    let detail = runs.summary();
    ensure(all.mean >= peers.mean - peers.ci95, format!("all below peers band: {detail}"))?;
    Ok(detail)
}

fn criterion_6() -> Check {
    use SchemeKind::*;
    let runs = Runs::new(ScenarioTag::FlStrongHetero, &[SelfOnly, All, Peers, Screen, Caesar]);
    let g = |k| runs.last(k).mean;
    let screen_u = runs.last_undiscounted(Screen).mean;
    let peers = runs.last(Peers);
    let mut failures = vec![];
    if g(All) >= g(SelfOnly) {
        failures.push("(a) all >= self");
    }
    if !(0.35..=0.65).contains(&screen_u) {
        failures.push("(b) screen success outside [0.35, 0.65]");
    }
    if (g(Caesar) - peers.mean).abs() > peers.ci95 {
        failures.push("(c) caesar outside peers CI");
    }
    let detail = format!("{} screen_success={screen_u:.4}", runs.summary());
    ensure(failures.is_empty(), format!("{}: {detail}", failures.join(", ")))?;
    Ok(detail)
}

fn criterion_7() -> Check {
    let cfg = FigureId::Fig5.configs(None).unwrap().remove(0);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = vec![];
    for sub in ["first", "second"] {
        run_to_dir(&cfg, &dir.path().join(sub)).map_err(|e| e.to_string())?;
        files.push(std::fs::read(dir.path().join(sub).join(RAW_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], "raw.csv differs between identical runs")?;
    Ok(format!("fig5 raw.csv identical ({} bytes)", files[0].len()))
}

fn criterion_8() -> Check {
    let mut parts = vec![];

    let mut rng = stream(8, 0, Purpose::Server);
    let sequences = 100_000;
    for _ in 0..sequences {
        let n = rng.gen_range(2..6);
        let mut p = PMatrix::new(n, rng.gen_range(0.0..=1.0));
        let (delta, xi) = (rng.gen_range(0.01..0.5), rng.gen_range(0.0..0.2));
        let draw = |rng: &mut fedrl_sim::rng::SimRng| -> Vec<QTable<f64>> {
            (0..n).map(|_| QTable::from_values(2, 2, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect()
        };
        let mut old = draw(&mut rng);
        for _ in 0..rng.gen_range(1..6) {
            let now = draw(&mut rng);
            p.update(delta, xi, &old, &now).unwrap();
            for i in 0..n {
                ensure(p.get(i, i) == 1.0, "diagonal moved")?;
                for j in 0..n {
                    let v = p.get(i, j);
                    ensure(v == p.get(j, i) && (0.0..=1.0).contains(&v), format!("p[{i}][{j}] = {v}"))?;
                }
            }
            old = now;
        }
    }
    parts.push(format!("p-matrix ok over {sequences} sequences"));

    let mut checked = 0;
    for scenario in [ScenarioTag::Gridworld, ScenarioTag::FlStrongHetero] {
        for scheme in &SchemeKind::ALL[1..] {
            let mut cfg = ExperimentConfig::preset(scenario, *scheme).unwrap();
            cfg.total_steps = 2000;
            cfg.fed.beta = 1.0;
            let mut reference = cfg.clone();
            reference.scheme = SchemeKind::SelfOnly;
            for seed in 0..2 {
                let a = run_seed::<f64>(&cfg, seed).map_err(|e| e.to_string())?;
                let b = run_seed::<f64>(&reference, seed).map_err(|e| e.to_string())?;
                ensure(a == b, format!("beta=1 {scheme} on {scenario} diverges from self (seed {seed})"))?;
                checked += 1;
            }
        }
    }
    parts.push(format!("beta=1 == self in {checked} runs"));

    let (a, b) = common::gridworld_pair::<f64>();
    let groups: Vec<usize> = (0..8).map(|i| usize::from(i >= 4)).collect();
    let cfg = FederationConfig { p0: 0.5, ..FederationConfig::default() };
    for trial in 0..50u64 {
        let mut base = common::agents(&a, &b, 8, trial, QInit::Uniform { low: -0.1, high: 0.1 });
        for agent in base.iter_mut() {
            for _ in 0..200 {
                agent.local_update(0.95).unwrap();
            }
        }
        let scheme = SchemeKind::ALL[trial as usize % 6];
        let mut order: Vec<usize> = (0..8).collect();
        order.shuffle(&mut rng);
        let run = |order: Option<&[usize]>| {
            let mut agents = base.clone();
            let mut p = PMatrix::new(8, cfg.p0);
            let mut snap = RoundSnapshot::capture(&agents);
            let mut r = stream(trial, 1, Purpose::Server);
            federated_round_ordered(&mut agents, &mut p, &mut snap, scheme, &cfg, 0.95, Some(&groups), &mut r, order)
                .unwrap();
            agents.iter().map(|x| x.q().clone()).collect::<Vec<_>>()
        };
        ensure(run(None) == run(Some(&order)), format!("{scheme}: order changed the result (trial {trial})"))?;
    }
    parts.push("order-independent over 50 permutations".into());

    for scheme in [SchemeKind::Screen, SchemeKind::Caesar] {
        let mut agents = common::agents(&a, &a, 8, 0, QInit::Constant(0.3));
        let before: Vec<_> = agents.iter().map(|x| x.q().clone()).collect();
        let mut p = PMatrix::new(8, 1.0);
        let mut snap = RoundSnapshot::capture(&agents);
        let cfg = FederationConfig { beta: 0.0, ..FederationConfig::default() };
        let tele = federated_round(&mut agents, &mut p, &mut snap, scheme, &cfg, 0.95, None, &mut rng).unwrap();
        ensure(tele.subsets.iter().all(|s| s.is_empty()), format!("{scheme}: non-empty subset under equal g"))?;
        ensure(agents.iter().map(|x| x.q().clone()).eq(before), format!("{scheme}: tables changed"))?;
    }
    parts.push("empty subsets skipped".into());

    let mut worst = 0.0f64;
    for (name, spec) in common::builtin_mdps(0.95) {
        let q = value_iteration_oracle(&spec, ORACLE_TOL).map_err(|e| format!("{name}: {e}"))?;
        let r = bellman_residual(&spec, &q);
        ensure(r < ORACLE_TOL, format!("{name}: residual {r}"))?;
        worst = worst.max(r);
    }
    parts.push(format!("oracle residual <= {worst:.1e}"));
    Ok(parts.join("; "))
}

/// `prior` is time already spent on runs shared with other criteria.
fn report(id: &str, name: &str, limit: Duration, prior: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now() - prior;
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("exceeded {}s: {d}", limit.as_secs())),
        Err(e) => (false, e),
    };
    println!("{} {id} {name} [{:.1}s]: {detail}", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    ok
}

fn main() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let mut results = vec![
        report("1", "averaging counterexample", Duration::from_secs(1), Duration::ZERO, criterion_1),
        report("2", "self convergence to oracle", minutes(2), Duration::ZERO, criterion_2),
    ];
    let start = Instant::now();
    let grid = Runs::new(ScenarioTag::Gridworld, &SchemeKind::ALL);
    let shared = start.elapsed();
    results.push(report("3", "gridworld scheme ordering", minutes(10), shared, || criterion_3(&grid)));
    results.push(report("4", "sampling isolates non-peers", minutes(10), shared, || criterion_4(&grid)));
    results.push(report("5", "homogeneous frozenlake", minutes(10), Duration::ZERO, criterion_5));
    results.push(report("6", "strongly heterogeneous frozenlake", minutes(10), Duration::ZERO, criterion_6));
    results.push(report("7", "determinism", minutes(10), Duration::ZERO, criterion_7));
    results.push(report("8", "property suites", minutes(10), Duration::ZERO, criterion_8));
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
