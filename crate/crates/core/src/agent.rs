//! Tabular Q-learning agents.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, EnvError, EnvInstance, MdpSpec, State};
use crate::rng::SimRng;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("evaluation needs at least one episode")]
    NoEvalEpisodes,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Dense action-value table indexed by `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, T::zero())
    }

    pub fn filled(n_states: usize, n_actions: usize, value: T) -> Self {
        Self { n_states, n_actions, values: vec![value; n_states * n_actions] }
    }

    /// Table from row-major `(state, action)` values.
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "value count must match table shape");
        Self { n_states, n_actions, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn get(&self, s: State, a: Action) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: State, a: Action, v: T) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: State) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn max_value(&self, s: State) -> T {
        self.row(s).iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape());
        self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max)
    }
}

/// `argmax_a q(s, a)`, lowest index on ties.
pub fn greedy_action<T: Scalar>(q: &QTable<T>, s: State) -> Action {
    let row = q.row(s);
    let mut best = 0;
    for (a, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = a;
        }
    }
    best
}

/// Epsilon-greedy: uniform random action with probability `epsilon`,
/// otherwise the greedy action.
pub fn select_action<T: Scalar>(q: &QTable<T>, s: State, epsilon: T, rng: &mut SimRng) -> Action {
    let u: f64 = rng.gen();
    if u < epsilon.as_f64() {
        rng.gen_range(0..q.n_actions())
    } else {
        greedy_action(q, s)
    }
}

/// One Q-learning backup on entry `(s, a)`. Terminal transitions bootstrap
/// from zero.
#[allow(clippy::too_many_arguments)]
pub fn q_update<T: Scalar>(
    q: &mut QTable<T>,
    s: State,
    a: Action,
    r: T,
    s_next: State,
    done: bool,
    alpha: T,
    gamma: T,
) {
    let bootstrap = if done { T::zero() } else { q.max_value(s_next) };
    let old = q.get(s, a);
    q.set(s, a, (T::one() - alpha) * old + alpha * (r + gamma * bootstrap));
}

/// How a fresh Q-table is filled. Terminal rows always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QInit {
    Constant(f64),
    /// Independent uniform draws from `[low, high)`.
    Uniform {
        low: f64,
        high: f64,
    },
}

impl Default for QInit {
    fn default() -> Self {
        QInit::Constant(0.0)
    }
}

impl QInit {
    pub fn table<T: Scalar>(&self, spec: &MdpSpec<T>, rng: &mut SimRng) -> QTable<T> {
        let mut q = QTable::new(spec.n_states(), spec.n_actions());
        for s in (0..spec.n_states()).filter(|&s| !spec.is_terminal(s)) {
            for a in 0..spec.n_actions() {
                let v = match *self {
                    QInit::Constant(v) => v,
                    QInit::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
                };
                q.set(s, a, T::lit(v));
            }
        }
        q
    }
}

/// Return of one greedy evaluation rollout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Performance<T> {
    /// `sum_t gamma^t r_t`
    pub discounted: T,
    /// `sum_t r_t`
    pub undiscounted: T,
}

/// Everything owned by one learner: its table, training environment and
/// exploration stream, plus an independent evaluation environment.
#[derive(Debug, Clone)]
pub struct Agent<T> {
    id: usize,
    q: QTable<T>,
    env: EnvInstance<T>,
    eval_env: EnvInstance<T>,
    policy_rng: SimRng,
    epsilon: T,
    alpha: T,
    episode_return: T,
    episode_return_log: Vec<(usize, T)>,
    total_steps: usize,
}

impl<T: Scalar> Agent<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        spec: Arc<MdpSpec<T>>,
        q: QTable<T>,
        epsilon: T,
        alpha: T,
        env_rng: SimRng,
        policy_rng: SimRng,
        eval_rng: SimRng,
    ) -> Result<Self, AgentError> {
        let e = epsilon.as_f64();
        if !(0.0..=1.0).contains(&e) {
            return Err(AgentError::InvalidEpsilon(e));
        }
        let a = alpha.as_f64();
        if !(a > 0.0 && a <= 1.0) {
            return Err(AgentError::InvalidAlpha(a));
        }
        if q.shape() != (spec.n_states(), spec.n_actions()) {
            return Err(AgentError::Env(EnvError::ShapeMismatch {
                expected: spec.n_states() * spec.n_actions(),
                actual: q.values().len(),
            }));
        }
        Ok(Self {
            id,
            q,
            env: EnvInstance::new(spec.clone(), env_rng),
            eval_env: EnvInstance::new(spec, eval_rng),
            policy_rng,
            epsilon,
            alpha,
            episode_return: T::zero(),
            episode_return_log: Vec::new(),
            total_steps: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn q(&self) -> &QTable<T> {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut QTable<T> {
        &mut self.q
    }

    pub fn env(&self) -> &EnvInstance<T> {
        &self.env
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// `(step at which the episode ended, undiscounted return)` per finished
    /// training episode.
    pub fn episode_return_log(&self) -> &[(usize, T)] {
        &self.episode_return_log
    }

    /// One environment interaction followed by one backup.
    pub fn local_update(&mut self, gamma: T) -> Result<(), AgentError> {
        if self.env.is_done() {
            self.env.reset();
            self.episode_return = T::zero();
        }
        let s = self.env.state();
        let a = select_action(&self.q, s, self.epsilon, &mut self.policy_rng);
        let tr = self.env.step(a)?;
        // a step-limit cut is not a terminal state, so it still bootstraps
        let terminal = self.env.spec().is_terminal(tr.next);
        q_update(&mut self.q, s, a, tr.reward, tr.next, terminal, self.alpha, gamma);
        self.total_steps += 1;
        self.episode_return = self.episode_return + tr.reward;
        if tr.done {
            self.episode_return_log.push((self.total_steps, self.episode_return));
        }
        Ok(())
    }

    /// Mean return of the greedy policy over `episodes` fresh rollouts in the
    /// evaluation environment. Training state is not touched.
    pub fn eval_local_performance(&mut self, episodes: usize, gamma: T) -> Result<Performance<T>, AgentError> {
        if episodes == 0 {
            return Err(AgentError::NoEvalEpisodes);
        }
        // deterministic dynamics under a greedy policy repeat the same rollout
        let runs = if self.eval_env.spec().is_deterministic() { 1 } else { episodes };
        let mut total = Performance::<T>::default();
        for _ in 0..runs {
            let p = greedy_rollout(&self.q, &mut self.eval_env, gamma)?;
            total.discounted = total.discounted + p.discounted;
            total.undiscounted = total.undiscounted + p.undiscounted;
        }
        let n = T::from_usize(runs).expect("episode count representable");
        Ok(Performance { discounted: total.discounted / n, undiscounted: total.undiscounted / n })
    }
}

/// Runs one episode of the greedy policy of `q` in `env`.
pub fn greedy_rollout<T: Scalar>(
    q: &QTable<T>,
    env: &mut EnvInstance<T>,
    gamma: T,
) -> Result<Performance<T>, EnvError> {
    let mut s = env.reset();
    let mut discount = T::one();
    let mut perf = Performance::default();
    loop {
        let tr = env.step(greedy_action(q, s))?;
        perf.discounted = perf.discounted + discount * tr.reward;
        perf.undiscounted = perf.undiscounted + tr.reward;
        discount = discount * gamma;
        s = tr.next;
        if tr.done {
            return Ok(perf);
        }
    }
}
