use crate::env::{
    build_decision_toy, build_frozenlake, build_gridworld, generate_random_map, map_easy, map_hard, EnvError,
    GridVariant, MapLayout, MdpSpec, FROZENLAKE_ACTIONS,
};
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

use super::{ExperimentError, ScenarioTag};

pub(crate) const DEFAULT_STEP_LIMIT: usize = 100;
pub(crate) const RANDOM_MAP_HOLES: usize = 4;
pub(crate) const RANDOM_MAP_SIZE: usize = 4;

/// Recipe for one environment variant; built for a concrete scalar and
/// discount when a seed runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EnvDesc {
    Gridworld(GridVariant),
    DecisionToy(GridVariant),
    FrozenLake { layout: MapLayout, slippery: bool, step_limit: usize },
}

impl EnvDesc {
    pub fn build<T: Scalar>(&self, gamma: T) -> Result<MdpSpec<T>, EnvError> {
        match self {
            EnvDesc::Gridworld(v) => build_gridworld(*v, gamma),
            EnvDesc::DecisionToy(v) => build_decision_toy(*v, gamma),
            EnvDesc::FrozenLake { layout, slippery, step_limit } => {
                build_frozenlake(layout, *step_limit, *slippery, gamma)
            }
        }
    }

    /// `(n_states, n_actions)`
    pub fn shape(&self) -> Result<(usize, usize), EnvError> {
        Ok(match self {
            EnvDesc::Gridworld(_) => (11, 2),
            EnvDesc::DecisionToy(_) => (2, 2),
            EnvDesc::FrozenLake { layout, .. } => (layout.rows() * layout.cols(), FROZENLAKE_ACTIONS),
        })
    }

    pub fn label(&self) -> String {
        match self {
            EnvDesc::Gridworld(v) => format!("gridworld-{}", variant_name(*v)),
            EnvDesc::DecisionToy(v) => format!("toy-{}", variant_name(*v)),
            EnvDesc::FrozenLake { layout, .. } => format!("frozenlake:{}", layout.to_compact()),
        }
    }
}

fn variant_name(v: GridVariant) -> &'static str {
    match v {
        GridVariant::M1 => "m1",
        GridVariant::M2 => "m2",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvGroup {
    pub env: EnvDesc,
    pub count: usize,
}

/// Agent-to-group map; agents are numbered group by group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn from_counts(counts: impl IntoIterator<Item = usize>) -> Self {
        Self(counts.into_iter().enumerate().flat_map(|(g, c)| std::iter::repeat_n(g, c)).collect())
    }

    pub fn group_of(&self, agent: usize) -> usize {
        self.0[agent]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn are_peers(&self, i: usize, j: usize) -> bool {
        self.0[i] == self.0[j]
    }
}

/// Knobs for the FrozenLake scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    pub map_seed: u64,
    pub slippery: bool,
    pub step_limit: usize,
    pub map_easy: MapLayout,
    pub map_hard: MapLayout,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            map_seed: 0,
            slippery: false,
            step_limit: DEFAULT_STEP_LIMIT,
            map_easy: map_easy(),
            map_hard: map_hard(),
        }
    }
}

fn halves(n_agents: usize) -> (usize, usize) {
    let first = n_agents - n_agents / 2;
    (first, n_agents - first)
}

/// The two-group environment setup for `tag`. Random maps are drawn from the
/// map stream of `opts.map_seed`, so they are shared by every seed of an
/// experiment.
pub fn build_scenario(
    tag: ScenarioTag,
    n_agents: usize,
    opts: &ScenarioOptions,
) -> Result<Vec<EnvGroup>, ExperimentError> {
    if n_agents < 2 {
        return Err(ExperimentError::Config("built-in scenarios need at least two agents".into()));
    }
    let (a, b) = halves(n_agents);
    let lake = |layout: MapLayout| EnvDesc::FrozenLake { layout, slippery: opts.slippery, step_limit: opts.step_limit };
    let mut rng = stream(opts.map_seed, 0, Purpose::Map);
    let pair = match tag {
        ScenarioTag::Gridworld => (EnvDesc::Gridworld(GridVariant::M1), EnvDesc::Gridworld(GridVariant::M2)),
        ScenarioTag::FlHomogeneous => {
            let m = generate_random_map(RANDOM_MAP_SIZE, RANDOM_MAP_SIZE, RANDOM_MAP_HOLES, &mut rng)?;
            (lake(m.clone()), lake(m))
        }
        ScenarioTag::FlRandomHetero => {
            let m1 = generate_random_map(RANDOM_MAP_SIZE, RANDOM_MAP_SIZE, RANDOM_MAP_HOLES, &mut rng)?;
            let mut m2 = generate_random_map(RANDOM_MAP_SIZE, RANDOM_MAP_SIZE, RANDOM_MAP_HOLES, &mut rng)?;
            while m2 == m1 {
                m2 = generate_random_map(RANDOM_MAP_SIZE, RANDOM_MAP_SIZE, RANDOM_MAP_HOLES, &mut rng)?;
            }
            (lake(m1), lake(m2))
        }
        ScenarioTag::FlStrongHetero => (lake(opts.map_easy.clone()), lake(opts.map_hard.clone())),
        ScenarioTag::Custom => {
            return Err(ExperimentError::Config(
                "custom scenarios list their environments and groups explicitly".into(),
            ))
        }
    };
    Ok(vec![EnvGroup { env: pair.0, count: a }, EnvGroup { env: pair.1, count: b }])
}
