#![allow(dead_code)]

use std::sync::Arc;

use fedrl_sim::agent::{Agent, QInit};
use fedrl_sim::env::{
    build_decision_toy, build_frozenlake, build_gridworld, generate_random_map, map_easy, map_hard, GridVariant,
    MdpSpec,
};
use fedrl_sim::rng::{stream, Purpose};
use fedrl_sim::Scalar;

/// Agents `0..n`, the first half on `a` and the rest on `b`.
pub fn agents<T: Scalar>(a: &Arc<MdpSpec<T>>, b: &Arc<MdpSpec<T>>, n: usize, seed: u64, init: QInit) -> Vec<Agent<T>> {
    (0..n)
        .map(|id| {
            let spec = if id < n - n / 2 { a.clone() } else { b.clone() };
            let i = id as u64;
            let q = init.table(&spec, &mut stream(seed, i, Purpose::Init));
            Agent::new(
                id,
                spec,
                q,
                T::lit(0.1),
                T::lit(0.5),
                stream(seed, i, Purpose::Env),
                stream(seed, i, Purpose::Policy),
                stream(seed, i, Purpose::Eval),
            )
            .unwrap()
        })
        .collect()
}

pub fn gridworld_pair<T: Scalar>() -> (Arc<MdpSpec<T>>, Arc<MdpSpec<T>>) {
    let g = T::lit(0.95);
    (Arc::new(build_gridworld(GridVariant::M1, g).unwrap()), Arc::new(build_gridworld(GridVariant::M2, g).unwrap()))
}

/// Every environment the crate can build, in both FrozenLake dynamics.
pub fn builtin_mdps(gamma: f64) -> Vec<(String, MdpSpec<f64>)> {
    let mut out = vec![];
    for v in [GridVariant::M1, GridVariant::M2] {
        out.push((format!("gridworld {v:?}"), build_gridworld(v, gamma).unwrap()));
        out.push((format!("toy {v:?}"), build_decision_toy(v, gamma).unwrap()));
    }
    let mut layouts = vec![("easy".to_string(), map_easy()), ("hard".to_string(), map_hard())];
    for seed in 0..4 {
        let m = generate_random_map(4, 4, 4, &mut stream(seed, 0, Purpose::Map)).unwrap();
        layouts.push((format!("random {seed}"), m));
    }
    for (name, layout) in layouts {
        for slippery in [false, true] {
            out.push((
                format!("frozenlake {name} slippery={slippery}"),
                build_frozenlake(&layout, 100, slippery, gamma).unwrap(),
            ));
        }
    }
    out
}
