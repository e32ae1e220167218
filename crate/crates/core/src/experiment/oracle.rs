use thiserror::Error;

use crate::agent::QTable;
use crate::env::MdpSpec;
use crate::scalar::Scalar;

/// Default convergence tolerance for [`value_iteration_oracle`].
pub const ORACLE_TOL: f64 = 1e-10;
/// Sweep cap for [`value_iteration_oracle`].
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("value iteration did not converge within {iterations} sweeps (last change {last_change})")]
    NotConverged { iterations: usize, last_change: f64 },
}

/// One synchronous Bellman-optimality backup of `q` under `spec`.
/// Terminal rows are pinned to zero.
pub fn bellman_backup<T: Scalar>(spec: &MdpSpec<T>, q: &QTable<T>) -> QTable<T> {
    let gamma = spec.gamma();
    let mut next = QTable::new(spec.n_states(), spec.n_actions());
    for s in 0..spec.n_states() {
        if spec.is_terminal(s) {
            continue;
        }
        for a in 0..spec.n_actions() {
            let v: T = spec
                .outcomes(s, a)
                .iter()
                .map(|o| {
                    let future = if spec.is_terminal(o.next) { T::zero() } else { q.max_value(o.next) };
                    o.prob * (o.reward + gamma * future)
                })
                .sum();
            next.set(s, a, v);
        }
    }
    next
}

/// Max-norm change produced by one more backup; zero at the exact fixed point.
pub fn bellman_residual<T: Scalar>(spec: &MdpSpec<T>, q: &QTable<T>) -> T {
    bellman_backup(spec, q).max_abs_diff(q)
}

/// Optimal action values by value iteration, stopping once a sweep changes
/// no entry by `tol` or more.
pub fn value_iteration_oracle<T: Scalar>(spec: &MdpSpec<T>, tol: T) -> Result<QTable<T>, OracleError> {
    value_iteration_capped(spec, tol, ORACLE_MAX_ITERS)
}

pub fn value_iteration_capped<T: Scalar>(
    spec: &MdpSpec<T>,
    tol: T,
    max_iters: usize,
) -> Result<QTable<T>, OracleError> {
    let mut q = QTable::new(spec.n_states(), spec.n_actions());
    let mut change = T::infinity();
    for _ in 0..max_iters {
        let next = bellman_backup(spec, &q);
        change = next.max_abs_diff(&q);
        q = next;
        if change < tol {
            return Ok(q);
        }
    }
    Err(OracleError::NotConverged { iterations: max_iters, last_change: change.as_f64() })
}
