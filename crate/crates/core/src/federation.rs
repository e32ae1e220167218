//! Server side of federated Q-learning: peer-selection probabilities, the
//! subset-selection schemes, Q-table aggregation and blending.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::agent::{Agent, AgentError, Performance, QTable};
use crate::rng::SimRng;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum FederationError {
    #[error("q-table shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("scheme peers requires an agent-to-environment assignment")]
    MissingAssignment,
    #[error("scheme {0} requires local performance scores")]
    MissingPerformance(SchemeKind),
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("agent index {0} out of range")]
    AgentOutOfRange(usize),
    #[error("invalid federation parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown scheme '{0}'")]
    UnknownScheme(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Mean absolute entrywise difference of two tables.
pub fn dissimilarity<T: Scalar>(q: &QTable<T>, q2: &QTable<T>) -> Result<T, FederationError> {
    if q.shape() != q2.shape() {
        return Err(FederationError::ShapeMismatch(q.shape(), q2.shape()));
    }
    let sum: T = q.values().iter().zip(q2.values()).map(|(a, b)| (*a - *b).abs()).sum();
    Ok(sum / T::from_usize(q.values().len()).expect("table size representable"))
}

/// Symmetric matrix of peer-selection probabilities with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PMatrix<T> {
    n: usize,
    probs: Vec<T>,
}

impl<T: Scalar> PMatrix<T> {
    /// `p0` off the diagonal, 1 on it.
    pub fn new(n: usize, p0: T) -> Self {
        let mut probs = vec![p0; n * n];
        for i in 0..n {
            probs[i * n + i] = T::one();
        }
        Self { n, probs }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.probs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.probs[i * self.n..(i + 1) * self.n]
    }

    /// Sets `p_ij` and `p_ji`, clamped to `[0, 1]`. Diagonal writes are ignored.
    pub fn set_pair(&mut self, i: usize, j: usize, v: T) {
        if i == j {
            return;
        }
        let v = v.max(T::zero()).min(T::one());
        self.probs[i * self.n + j] = v;
        self.probs[j * self.n + i] = v;
    }

    /// Moves every off-diagonal pair up by `delta` when its dissimilarity fell
    /// by more than `xi` since `q_old`, otherwise down by `delta`.
    pub fn update(&mut self, delta: T, xi: T, q_old: &[QTable<T>], q_now: &[QTable<T>]) -> Result<(), FederationError> {
        for list in [q_old, q_now] {
            if list.len() != self.n {
                return Err(FederationError::LengthMismatch { expected: self.n, actual: list.len() });
            }
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let before = dissimilarity(&q_old[i], &q_old[j])?;
                let after = dissimilarity(&q_now[i], &q_now[j])?;
                let p = self.get(i, j);
                let next = if before - after > xi { (p + delta).min(T::one()) } else { (p - delta).max(T::zero()) };
                self.set_pair(i, j, next);
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }
}

/// Which agents each agent averages with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Only itself: independent learning.
    SelfOnly,
    /// Every agent.
    All,
    /// Agents assigned to the same environment (needs the assignment).
    Peers,
    /// Bernoulli draws from the agent's p-matrix row.
    Sampling,
    /// Agents with strictly better local performance.
    Screen,
    /// Sampling followed by the performance screen.
    Caesar,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::SelfOnly,
        SchemeKind::All,
        SchemeKind::Peers,
        SchemeKind::Sampling,
        SchemeKind::Screen,
        SchemeKind::Caesar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::SelfOnly => "self",
            SchemeKind::All => "all",
            SchemeKind::Peers => "peers",
            SchemeKind::Sampling => "sampling",
            SchemeKind::Screen => "screen",
            SchemeKind::Caesar => "caesar",
        }
    }

    fn screens(self) -> bool {
        matches!(self, SchemeKind::Screen | SchemeKind::Caesar)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = FederationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || (lower == "selfonly" && *k == SchemeKind::SelfOnly))
            .ok_or_else(|| FederationError::UnknownScheme(s.to_string()))
    }
}

/// Round cadence and the p-matrix and blending knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationConfig<T> {
    /// Local steps between federated rounds.
    pub h: usize,
    /// Weight kept on the agent's own table when blending.
    pub beta: T,
    pub p0: T,
    pub delta: T,
    pub xi: T,
    pub eval_episodes: usize,
}

impl<T: Scalar> Default for FederationConfig<T> {
    fn default() -> Self {
        Self { h: 100, beta: T::lit(0.5), p0: T::zero(), delta: T::lit(0.1), xi: T::zero(), eval_episodes: 5 }
    }
}

impl<T: Scalar> FederationConfig<T> {
    pub fn validate(&self) -> Result<(), FederationError> {
        let bad = |what: &str, v: T| Err(FederationError::InvalidParameter(format!("{what} = {v}")));
        if self.h == 0 {
            return Err(FederationError::InvalidParameter("h must be positive".into()));
        }
        if !(self.beta >= T::zero() && self.beta <= T::one()) {
            return bad("beta", self.beta);
        }
        if !(self.p0 >= T::zero() && self.p0 <= T::one()) {
            return bad("p0", self.p0);
        }
        if self.delta <= T::zero() || !self.delta.is_finite() {
            return bad("delta", self.delta);
        }
        if self.xi < T::zero() || !self.xi.is_finite() {
            return bad("xi", self.xi);
        }
        if self.eval_episodes == 0 {
            return Err(FederationError::InvalidParameter("eval_episodes must be positive".into()));
        }
        Ok(())
    }
}

/// The aggregation subset for agent `i`.
///
/// `groups` is the agent-to-environment assignment (only Peers reads it);
/// `g` holds local performance scores (Screen and Caesar read it). Sampling
/// and Caesar draw one uniform per candidate from `rng`.
pub fn select_subset<T: Scalar>(
    scheme: SchemeKind,
    i: usize,
    p: &PMatrix<T>,
    g: Option<&[T]>,
    groups: Option<&[usize]>,
    rng: &mut SimRng,
) -> Result<Vec<usize>, FederationError> {
    let n = p.len();
    if i >= n {
        return Err(FederationError::AgentOutOfRange(i));
    }
    let g = if scheme.screens() {
        let g = g.ok_or(FederationError::MissingPerformance(scheme))?;
        if g.len() != n {
            return Err(FederationError::LengthMismatch { expected: n, actual: g.len() });
        }
        Some(g)
    } else {
        None
    };
    let candidates: Vec<usize> = match scheme {
        SchemeKind::SelfOnly => vec![i],
        SchemeKind::All | SchemeKind::Screen => (0..n).collect(),
        SchemeKind::Peers => {
            let f = groups.ok_or(FederationError::MissingAssignment)?;
            if f.len() != n {
                return Err(FederationError::LengthMismatch { expected: n, actual: f.len() });
            }
            (0..n).filter(|&j| f[j] == f[i]).collect()
        }
        SchemeKind::Sampling | SchemeKind::Caesar => {
            let row = p.row(i);
            (0..n).filter(|&j| rng.gen::<f64>() < row[j].as_f64()).collect()
        }
    };
    Ok(match g {
        Some(g) => candidates.into_iter().filter(|&j| g[j] > g[i]).collect(),
        None => candidates,
    })
}

/// Entrywise mean over `subset`; `None` for an empty subset.
pub fn aggregate<T: Scalar>(qs: &[QTable<T>], subset: &[usize]) -> Result<Option<QTable<T>>, FederationError> {
    let Some(&first) = subset.first() else {
        return Ok(None);
    };
    let base = qs.get(first).ok_or(FederationError::AgentOutOfRange(first))?;
    let mut sum = base.clone();
    for &j in &subset[1..] {
        let q = qs.get(j).ok_or(FederationError::AgentOutOfRange(j))?;
        if q.shape() != sum.shape() {
            return Err(FederationError::ShapeMismatch(sum.shape(), q.shape()));
        }
        for (acc, v) in sum.values_mut().iter_mut().zip(q.values()) {
            *acc = *acc + *v;
        }
    }
    if subset.len() > 1 {
        let n = T::from_usize(subset.len()).expect("subset size representable");
        for v in sum.values_mut() {
            *v = *v / n;
        }
    }
    Ok(Some(sum))
}

/// `q_i <- beta * q_i + (1 - beta) * q_bar`
pub fn federated_update<T: Scalar>(q_i: &mut QTable<T>, q_bar: &QTable<T>, beta: T) -> Result<(), FederationError> {
    if q_i.shape() != q_bar.shape() {
        return Err(FederationError::ShapeMismatch(q_i.shape(), q_bar.shape()));
    }
    let keep = T::one() - beta;
    for (v, b) in q_i.values_mut().iter_mut().zip(q_bar.values()) {
        *v = beta * *v + keep * *b;
    }
    Ok(())
}

/// Tables as of the previous round boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot<T> {
    pub q_old: Vec<QTable<T>>,
    pub g: Vec<Performance<T>>,
}

impl<T: Scalar> RoundSnapshot<T> {
    pub fn capture(agents: &[Agent<T>]) -> Self {
        Self { q_old: agents.iter().map(|a| a.q().clone()).collect(), g: Vec::new() }
    }
}

/// What the server saw and decided in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTelemetry<T> {
    /// Local performance per agent, measured before aggregation.
    pub g: Vec<Performance<T>>,
    /// Aggregation subset chosen for each agent.
    pub subsets: Vec<Vec<usize>>,
    /// p-matrix as the round began, before its update.
    pub p_prior: PMatrix<T>,
    /// p-matrix after this round's update (the one used for sampling).
    pub p: PMatrix<T>,
}

/// One federated round: evaluate, update the p-matrix, then select,
/// aggregate and blend for every agent against a frozen copy of the
/// pre-round tables, and finally roll the snapshot forward.
#[allow(clippy::too_many_arguments)]
pub fn federated_round<T: Scalar>(
    agents: &mut [Agent<T>],
    p: &mut PMatrix<T>,
    snapshot: &mut RoundSnapshot<T>,
    scheme: SchemeKind,
    cfg: &FederationConfig<T>,
    gamma: T,
    groups: Option<&[usize]>,
    rng: &mut SimRng,
) -> Result<RoundTelemetry<T>, FederationError> {
    federated_round_ordered(agents, p, snapshot, scheme, cfg, gamma, groups, rng, None)
}

/// [`federated_round`] with an explicit order for the blending pass.
/// Subsets are always drawn in agent-index order so the server stream is
/// consumed identically; the order only changes when each blend is written.
#[allow(clippy::too_many_arguments)]
pub fn federated_round_ordered<T: Scalar>(
    agents: &mut [Agent<T>],
    p: &mut PMatrix<T>,
    snapshot: &mut RoundSnapshot<T>,
    scheme: SchemeKind,
    cfg: &FederationConfig<T>,
    gamma: T,
    groups: Option<&[usize]>,
    rng: &mut SimRng,
    order: Option<&[usize]>,
) -> Result<RoundTelemetry<T>, FederationError> {
    let n = agents.len();
    if snapshot.q_old.len() != n {
        return Err(FederationError::LengthMismatch { expected: n, actual: snapshot.q_old.len() });
    }
    let g =
        agents.iter_mut().map(|a| a.eval_local_performance(cfg.eval_episodes, gamma)).collect::<Result<Vec<_>, _>>()?;
    let frozen: Vec<QTable<T>> = agents.iter().map(|a| a.q().clone()).collect();
    let p_prior = p.clone();
    p.update(cfg.delta, cfg.xi, &snapshot.q_old, &frozen)?;

    let scores: Vec<T> = g.iter().map(|x| x.discounted).collect();
    let subsets =
        (0..n).map(|i| select_subset(scheme, i, p, Some(&scores), groups, rng)).collect::<Result<Vec<_>, _>>()?;
    let targets = subsets.iter().map(|s| aggregate(&frozen, s)).collect::<Result<Vec<_>, _>>()?;

    let default_order: Vec<usize> = (0..n).collect();
    for &i in order.unwrap_or(&default_order) {
        if let Some(q_bar) = &targets[i] {
            federated_update(agents[i].q_mut(), q_bar, cfg.beta)?;
        }
    }

    snapshot.q_old = agents.iter().map(|a| a.q().clone()).collect();
    snapshot.g = g.clone();
    Ok(RoundTelemetry { g, subsets, p_prior, p: p.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn t(vals: &[f64]) -> QTable<f64> {
        QTable::from_values(1, vals.len(), vals.to_vec())
    }

    #[test]
    fn dissimilarity_examples() {
        let q = t(&[-1.0, 1.0]);
        assert_eq!(dissimilarity(&q, &q).unwrap(), 0.0);
        assert_eq!(dissimilarity(&q, &t(&[1.0, -1.0])).unwrap(), 2.0);
        assert!(matches!(dissimilarity(&q, &t(&[1.0])), Err(FederationError::ShapeMismatch(..))));
    }

    fn pair(d_old: f64, d_now: f64) -> (Vec<QTable<f64>>, Vec<QTable<f64>>) {
        (vec![t(&[0.0]), t(&[d_old])], vec![t(&[0.0]), t(&[d_now])])
    }

    #[test]
    fn p_update_rule() {
        let mut p = PMatrix::new(2, 1.0);
        let (old, now) = pair(2.0, 1.5);
        p.update(0.1, 0.0, &old, &now).unwrap();
        assert_eq!(p.get(0, 1), 1.0);

        let mut p = PMatrix::new(2, 0.5);
        let (old, now) = pair(2.0, 2.0);
        p.update(0.1, 0.0, &old, &now).unwrap();
        assert_eq!(p.get(0, 1), 0.4);
        assert_eq!(p.get(1, 0), 0.4);

        let mut p = PMatrix::new(2, 0.5);
        let (old, now) = pair(2.0, 1.5);
        p.update(0.1, 0.0, &old, &now).unwrap();
        assert_eq!(p.get(0, 1), 0.6);
        assert_eq!(p.get(0, 0), 1.0);

        // decrease not exceeding xi counts as no progress
        let mut p = PMatrix::new(2, 0.5);
        p.update(0.1, 0.5, &old, &now).unwrap();
        assert_eq!(p.get(0, 1), 0.4);

        let mut p = PMatrix::new(3, 0.5);
        assert!(matches!(p.update(0.1, 0.0, &old, &now), Err(FederationError::LengthMismatch { .. })));
    }

    #[test]
    fn subset_rules() {
        let mut rng = stream(0, 0, Purpose::Server);
        let g = [1.0, 3.0, 2.0];
        let p = PMatrix::new(3, 0.0);
        let sel =
            |k, i, p: &PMatrix<f64>, rng: &mut SimRng| select_subset(k, i, p, Some(&g), Some(&[0, 1, 0]), rng).unwrap();
        assert_eq!(sel(SchemeKind::SelfOnly, 1, &p, &mut rng), vec![1]);
        assert_eq!(sel(SchemeKind::All, 1, &p, &mut rng), vec![0, 1, 2]);
        assert_eq!(sel(SchemeKind::Peers, 0, &p, &mut rng), vec![0, 2]);
        assert_eq!(sel(SchemeKind::Screen, 0, &p, &mut rng), vec![1, 2]);
        assert_eq!(sel(SchemeKind::Sampling, 2, &p, &mut rng), vec![2]);

        let mut p = PMatrix::new(3, 0.0);
        p.set_pair(0, 1, 1.0);
        assert_eq!(sel(SchemeKind::Sampling, 0, &p, &mut rng), vec![0, 1]);
        assert_eq!(sel(SchemeKind::Caesar, 0, &p, &mut rng), vec![1]);
        assert_eq!(sel(SchemeKind::Caesar, 1, &p, &mut rng), Vec::<usize>::new());
    }

    #[test]
    fn subset_errors() {
        let mut rng = stream(0, 0, Purpose::Server);
        let p = PMatrix::<f64>::new(2, 0.0);
        assert_eq!(
            select_subset(SchemeKind::Peers, 0, &p, None, None, &mut rng),
            Err(FederationError::MissingAssignment)
        );
        assert_eq!(
            select_subset(SchemeKind::Caesar, 0, &p, None, None, &mut rng),
            Err(FederationError::MissingPerformance(SchemeKind::Caesar))
        );
        assert_eq!(
            select_subset(SchemeKind::All, 2, &p, None, None, &mut rng),
            Err(FederationError::AgentOutOfRange(2))
        );
    }

    #[test]
    fn aggregate_examples() {
        let qs = vec![t(&[-1.0, 1.0]), t(&[1.0, -1.0])];
        assert_eq!(aggregate(&qs, &[0, 1]).unwrap(), Some(t(&[0.0, 0.0])));
        assert_eq!(aggregate(&qs, &[1]).unwrap(), Some(qs[1].clone()));
        assert_eq!(aggregate(&qs, &[]).unwrap(), None);
        let bad = vec![t(&[1.0]), t(&[1.0, 2.0])];
        assert!(matches!(aggregate(&bad, &[0, 1]), Err(FederationError::ShapeMismatch(..))));
    }

    #[test]
    fn blend_examples() {
        let mut q = t(&[2.0, 0.0]);
        federated_update(&mut q, &t(&[0.0, 2.0]), 0.5).unwrap();
        assert_eq!(q, t(&[1.0, 1.0]));
        let mut q = t(&[2.0, 0.0]);
        federated_update(&mut q, &t(&[7.0, 9.0]), 1.0).unwrap();
        assert_eq!(q, t(&[2.0, 0.0]));
        federated_update(&mut q, &t(&[7.0, 9.0]), 0.0).unwrap();
        assert_eq!(q, t(&[7.0, 9.0]));
    }

    #[test]
    fn scheme_names_parse() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert_eq!("CAESAR".parse::<SchemeKind>().unwrap(), SchemeKind::Caesar);
        assert!("median".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FederationConfig::<f64>::default().validate().is_ok());
        let bad = FederationConfig { beta: 1.5, ..FederationConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = FederationConfig { delta: 0.0, ..FederationConfig::<f64>::default() };
        assert!(bad.validate().is_err());
    }
}
