//! Tabular MDPs and the environment instances agents interact with.

mod frozenlake;
mod gridworld;

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::rng::SimRng;
use crate::scalar::Scalar;

pub use frozenlake::{
    build_frozenlake, generate_random_map, map_easy, map_hard, Cell, MapLayout, FROZENLAKE_ACTIONS, MAP_EASY, MAP_HARD,
};
pub use gridworld::{build_decision_toy, build_gridworld, gridworld_state, GridVariant, GRID_SAFETY_CAP};

pub type State = usize;
pub type Action = usize;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("transition row for state {state}, action {action} sums to {sum}")]
    TransitionNotNormalized { state: State, action: Action, sum: f64 },
    #[error("initial distribution sums to {0}")]
    InitialNotNormalized(f64),
    #[error("initial distribution puts mass on terminal state {0}")]
    InitialOnTerminal(State),
    #[error("terminal state {0} must self-loop with zero reward")]
    TerminalNotAbsorbing(State),
    #[error("state index {state} out of range (n_states = {n_states})")]
    StateOutOfRange { state: State, n_states: usize },
    #[error("non-finite reward at state {state}, action {action}")]
    NonFiniteReward { state: State, action: Action },
    #[error("expected {expected} entries, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("map layout: {0}")]
    Layout(String),
    #[error("no reachable map with {n_holes} holes on a {rows}x{cols} grid after {attempts} attempts")]
    InfeasibleMap { rows: usize, cols: usize, n_holes: usize, attempts: usize },
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("action {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: Action, n_actions: usize },
}

/// One possible result of taking an action: next state, its probability and
/// the reward collected on that transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome<T> {
    pub next: State,
    pub prob: T,
    pub reward: T,
}

/// Full dynamics of one tabular environment variant.
///
/// Rewards live on `(s, a, s')` triples; the expected reward `R(s, a)` is
/// recovered by [`MdpSpec::expected_reward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec<T> {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<Outcome<T>>>,
    terminal: Vec<bool>,
    initial: Vec<(State, T)>,
    gamma: T,
    step_limit: Option<usize>,
}

impl<T: Scalar> MdpSpec<T> {
    /// Builds a spec from dense `(state, action)`-major outcome rows and
    /// checks every structural invariant.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Vec<Outcome<T>>>,
        terminal: Vec<bool>,
        initial: Vec<(State, T)>,
        gamma: T,
        step_limit: Option<usize>,
    ) -> Result<Self, EnvError> {
        let g = gamma.as_f64();
        if !(g > 0.0 && g <= 1.0) {
            return Err(EnvError::InvalidGamma(g));
        }
        if transitions.len() != n_states * n_actions {
            return Err(EnvError::ShapeMismatch { expected: n_states * n_actions, actual: transitions.len() });
        }
        if terminal.len() != n_states {
            return Err(EnvError::ShapeMismatch { expected: n_states, actual: terminal.len() });
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transitions[s * n_actions + a];
                let mut sum = 0.0;
                for o in row {
                    if o.next >= n_states {
                        return Err(EnvError::StateOutOfRange { state: o.next, n_states });
                    }
                    if !o.reward.is_finite() {
                        return Err(EnvError::NonFiniteReward { state: s, action: a });
                    }
                    sum += o.prob.as_f64();
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(EnvError::TransitionNotNormalized { state: s, action: a, sum });
                }
                if terminal[s] && row.iter().any(|o| o.next != s || o.reward != T::zero()) {
                    return Err(EnvError::TerminalNotAbsorbing(s));
                }
            }
        }
        let mut mass = 0.0;
        for &(s, p) in &initial {
            if s >= n_states {
                return Err(EnvError::StateOutOfRange { state: s, n_states });
            }
            if terminal[s] && p > T::zero() {
                return Err(EnvError::InitialOnTerminal(s));
            }
            mass += p.as_f64();
        }
        if (mass - 1.0).abs() > PROB_TOL {
            return Err(EnvError::InitialNotNormalized(mass));
        }
        Ok(Self { n_states, n_actions, transitions, terminal, initial, gamma, step_limit })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn step_limit(&self) -> Option<usize> {
        self.step_limit
    }

    pub fn is_terminal(&self, s: State) -> bool {
        self.terminal[s]
    }

    pub fn initial_dist(&self) -> &[(State, T)] {
        &self.initial
    }

    pub fn outcomes(&self, s: State, a: Action) -> &[Outcome<T>] {
        &self.transitions[s * self.n_actions + a]
    }

    /// Reward of the `(s, a, s')` triple, summed over duplicate outcome entries.
    pub fn reward(&self, s: State, a: Action, next: State) -> T {
        self.outcomes(s, a).iter().filter(|o| o.next == next).map(|o| o.reward).fold(T::zero(), |x, y| x + y)
    }

    pub fn expected_reward(&self, s: State, a: Action) -> T {
        self.outcomes(s, a).iter().map(|o| o.prob * o.reward).sum()
    }

    /// True when every transition and the initial distribution are point masses.
    pub fn is_deterministic(&self) -> bool {
        self.initial.iter().filter(|(_, p)| *p > T::zero()).count() == 1
            && self.transitions.iter().all(|row| row.iter().filter(|o| o.prob > T::zero()).count() == 1)
    }

    /// Same spec with a different episode step limit.
    pub fn with_step_limit(mut self, step_limit: Option<usize>) -> Self {
        self.step_limit = step_limit;
        self
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(mut self, gamma: T) -> Result<Self, EnvError> {
        let g = gamma.as_f64();
        if !(g > 0.0 && g <= 1.0) {
            return Err(EnvError::InvalidGamma(g));
        }
        self.gamma = gamma;
        Ok(self)
    }
}

fn sample_index<T: Scalar, I: Iterator<Item = T>>(probs: I, rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        let p = p.as_f64();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// One step's result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub next: State,
    pub reward: T,
    pub done: bool,
}

/// A running instantiation of an [`MdpSpec`] with its own random stream.
#[derive(Debug, Clone)]
pub struct EnvInstance<T> {
    spec: Arc<MdpSpec<T>>,
    state: State,
    steps: usize,
    done: bool,
    rng: SimRng,
}

impl<T: Scalar> EnvInstance<T> {
    /// A fresh instance. The first episode starts on the first [`reset`](Self::reset).
    pub fn new(spec: Arc<MdpSpec<T>>, rng: SimRng) -> Self {
        let state = spec.initial.iter().find(|(_, p)| *p > T::zero()).map(|(s, _)| *s).unwrap_or(0);
        Self { spec, state, steps: 0, done: true, rng }
    }

    pub fn spec(&self) -> &Arc<MdpSpec<T>> {
        &self.spec
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn steps_in_episode(&self) -> usize {
        self.steps
    }

    /// Whether the current episode has ended (or none has started yet).
    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> State {
        let init = &self.spec.initial;
        let idx = if init.len() == 1 { 0 } else { sample_index(init.iter().map(|(_, p)| *p), &mut self.rng) };
        self.state = init[idx].0;
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn step(&mut self, action: Action) -> Result<Transition<T>, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action >= self.spec.n_actions {
            return Err(EnvError::ActionOutOfRange { action, n_actions: self.spec.n_actions });
        }
        let outcomes = self.spec.outcomes(self.state, action);
        // point masses consume no randomness
        let idx = if outcomes.len() == 1 { 0 } else { sample_index(outcomes.iter().map(|o| o.prob), &mut self.rng) };
        let o = outcomes[idx];
        self.state = o.next;
        self.steps += 1;
        let limit_hit = self.spec.step_limit.is_some_and(|l| self.steps >= l);
        self.done = self.spec.terminal[o.next] || limit_hit;
        Ok(Transition { next: o.next, reward: o.reward, done: self.done })
    }
}
