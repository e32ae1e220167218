use std::collections::BTreeMap;

use crate::federation::SchemeKind;

use super::ScenarioTag;

/// Significant digits used for every emitted floating-point value.
pub const SIG_DIGITS: usize = 10;

/// Formats `x` like C's `%.10g`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to the precision it is printed with, so re-parsed output
/// reproduces the in-memory value exactly.
pub fn quantize(x: f64) -> f64 {
    fmt_sig(x).parse().expect("formatted float parses")
}

/// Local performance of one agent at one round of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub seed: u64,
    /// 1-based round index.
    pub round: usize,
    /// Local step count at the round boundary.
    pub step: usize,
    pub agent: usize,
    pub group: usize,
    /// Discounted greedy return, quantized.
    pub g: f64,
    /// Undiscounted greedy return, quantized.
    pub g_undiscounted: f64,
}

/// Cross-seed summary for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub round: usize,
    pub step: usize,
    pub mean: f64,
    /// 1.96 standard errors of the per-seed agent means.
    pub ci95: f64,
}

/// p-matrix as it entered a round, before that round's update.
#[derive(Debug, Clone, PartialEq)]
pub struct PSnapshot {
    pub round: usize,
    pub step: usize,
    pub n: usize,
    pub probs: Vec<f64>,
}

impl PSnapshot {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }
}

/// Every agent's Q-table at a round boundary (after blending).
#[derive(Debug, Clone, PartialEq)]
pub struct QSnapshot {
    pub round: usize,
    pub step: usize,
    pub tables: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub scheme: SchemeKind,
    pub scenario: ScenarioTag,
    /// Sorted by `(seed, round, agent)`.
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<AggregateRow>,
    pub aggregates_undiscounted: Vec<AggregateRow>,
    /// p-matrix captures of the first seed.
    pub p_trace: Vec<PSnapshot>,
    /// Q-table captures of the first seed, when requested.
    pub q_trace: Vec<QSnapshot>,
}

impl MetricsTable {
    pub fn final_aggregate(&self) -> Option<&AggregateRow> {
        self.aggregates.last()
    }

    pub fn final_aggregate_undiscounted(&self) -> Option<&AggregateRow> {
        self.aggregates_undiscounted.last()
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    }
}

/// Per round: the mean over agents within each seed, then the mean and 95%
/// half-width over seeds. Rows must be sorted by `(seed, round, agent)`.
/// Results are quantized like every emitted value.
pub fn aggregate_rows(rows: &[MetricRow], value: impl Fn(&MetricRow) -> f64) -> Vec<AggregateRow> {
    // round -> (step, per-seed (seed, sum, count)) in seed order
    type SeedSums = Vec<(u64, f64, usize)>;
    let mut by_round: BTreeMap<usize, (usize, SeedSums)> = BTreeMap::new();
    for r in rows {
        let (_, seeds) = by_round.entry(r.round).or_insert((r.step, Vec::new()));
        match seeds.last_mut() {
            Some((seed, sum, count)) if *seed == r.seed => {
                *sum += value(r);
                *count += 1;
            }
            _ => seeds.push((r.seed, value(r), 1)),
        }
    }
    by_round
        .into_iter()
        .map(|(round, (step, seeds))| {
            let means: Vec<f64> = seeds.iter().map(|(_, sum, count)| sum / *count as f64).collect();
            let n = means.len() as f64;
            let mean = means.iter().sum::<f64>() / n;
            let ci95 = if means.len() > 1 {
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * var.sqrt() / n.sqrt()
            } else {
                0.0
            };
            AggregateRow { round, step, mean: quantize(mean), ci95: quantize(ci95) }
        })
        .collect()
}
