use super::{EnvError, MdpSpec, Outcome, State};
use crate::scalar::Scalar;

/// Episode cap for GridWorld. Greedy optimal episodes take at most 10 steps;
/// the cap only stops looping policies.
pub const GRID_SAFETY_CAP: usize = 1000;

const MIN_X: i64 = -5;
const MAX_X: i64 = 5;

/// The two reward variants of the 1-D GridWorld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridVariant {
    /// +1 for reaching 5 from 4, -1 for reaching -5 from -4.
    M1,
    /// Rewards of `M1` negated.
    M2,
}

/// State index of GridWorld position `x` in `-5..=5`.
pub fn gridworld_state(x: i64) -> State {
    assert!((MIN_X..=MAX_X).contains(&x), "gridworld position {x} out of range");
    (x - MIN_X) as State
}

/// 11 states (`-5..=5` at indices `0..=10`), two deterministic actions
/// (0 moves left, 1 moves right), start at 0, terminals at both ends.
pub fn build_gridworld<T: Scalar>(variant: GridVariant, gamma: T) -> Result<MdpSpec<T>, EnvError> {
    let n_states = (MAX_X - MIN_X + 1) as usize;
    let sign = match variant {
        GridVariant::M1 => T::one(),
        GridVariant::M2 => -T::one(),
    };
    let mut transitions = Vec::with_capacity(n_states * 2);
    let mut terminal = vec![false; n_states];
    for (s, slot) in terminal.iter_mut().enumerate() {
        let x = s as i64 + MIN_X;
        let is_terminal = x == MIN_X || x == MAX_X;
        *slot = is_terminal;
        for a in 0..2 {
            if is_terminal {
                transitions.push(vec![Outcome { next: s, prob: T::one(), reward: T::zero() }]);
                continue;
            }
            let nx = if a == 0 { x - 1 } else { x + 1 };
            let reward = match (x, nx) {
                (4, 5) => sign,
                (-4, -5) => -sign,
                _ => T::zero(),
            };
            transitions.push(vec![Outcome { next: gridworld_state(nx), prob: T::one(), reward }]);
        }
    }
    MdpSpec::new(n_states, 2, transitions, terminal, vec![(gridworld_state(0), T::one())], gamma, Some(GRID_SAFETY_CAP))
}

/// The single-decision pair: from `s0` both actions end the episode.
/// `M1` pays -1 for action 0 and +1 for action 1; `M2` swaps them.
pub fn build_decision_toy<T: Scalar>(variant: GridVariant, gamma: T) -> Result<MdpSpec<T>, EnvError> {
    let (r0, r1) = match variant {
        GridVariant::M1 => (-T::one(), T::one()),
        GridVariant::M2 => (T::one(), -T::one()),
    };
    let absorb = vec![Outcome { next: 1, prob: T::one(), reward: T::zero() }];
    let transitions = vec![
        vec![Outcome { next: 1, prob: T::one(), reward: r0 }],
        vec![Outcome { next: 1, prob: T::one(), reward: r1 }],
        absorb.clone(),
        absorb,
    ];
    MdpSpec::new(2, 2, transitions, vec![false, true], vec![(0, T::one())], gamma, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvInstance;
    use crate::rng::{stream, Purpose};
    use std::sync::Arc;

    fn m1() -> MdpSpec<f64> {
        build_gridworld(GridVariant::M1, 0.95).unwrap()
    }

    #[test]
    fn m1_rewards() {
        let spec = m1();
        assert_eq!(spec.n_states(), 11);
        assert_eq!(spec.n_actions(), 2);
        assert_eq!(spec.expected_reward(gridworld_state(4), 1), 1.0);
        assert_eq!(spec.expected_reward(gridworld_state(-4), 0), -1.0);
        assert_eq!(spec.expected_reward(gridworld_state(0), 0), 0.0);
        assert!(spec.is_terminal(gridworld_state(5)));
        assert!(spec.is_terminal(gridworld_state(-5)));
        assert!(spec.is_deterministic());
    }

    #[test]
    fn m2_negates_m1() {
        let a = m1();
        let b = build_gridworld(GridVariant::M2, 0.95).unwrap();
        assert_eq!(b.expected_reward(gridworld_state(4), 1), -1.0);
        for s in 0..11 {
            for act in 0..2 {
                for next in 0..11 {
                    assert_eq!(b.reward(s, act, next), -a.reward(s, act, next));
                }
            }
        }
    }

    #[test]
    fn episode_mechanics() {
        let spec = Arc::new(m1());
        let mut env = EnvInstance::new(spec, stream(1, 0, Purpose::Env));
        assert_eq!(env.reset(), gridworld_state(0));
        let tr = env.step(1).unwrap();
        assert_eq!((tr.next, tr.reward, tr.done), (gridworld_state(1), 0.0, false));
        for _ in 0..3 {
            env.step(1).unwrap();
        }
        assert_eq!(env.state(), gridworld_state(4));
        let tr = env.step(1).unwrap();
        assert_eq!((tr.next, tr.reward, tr.done), (gridworld_state(5), 1.0, true));
    }

    #[test]
    fn safety_cap_ends_looping_episodes() {
        let spec = Arc::new(m1());
        let mut env = EnvInstance::new(spec, stream(1, 0, Purpose::Env));
        env.reset();
        let mut last = None;
        for i in 0..GRID_SAFETY_CAP {
            last = Some(env.step(i % 2).unwrap());
        }
        assert!(last.unwrap().done);
    }

    #[test]
    fn decision_toy_is_single_step() {
        let spec = build_decision_toy::<f64>(GridVariant::M1, 0.9).unwrap();
        assert_eq!(spec.expected_reward(0, 0), -1.0);
        assert_eq!(spec.expected_reward(0, 1), 1.0);
        let spec2 = build_decision_toy::<f64>(GridVariant::M2, 0.9).unwrap();
        assert_eq!(spec2.expected_reward(0, 0), 1.0);
    }
}
