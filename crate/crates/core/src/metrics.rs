//! Convergence and adaptiveness measures, and cross-run aggregation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{QualityAssignment, VariantId};

/// z-value for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Default prominence for [`detect_bursts`], in units of ΔA.
pub const DEFAULT_BURST_PROMINENCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("round has no productions")]
    EmptyRound,
    #[error("series needs at least {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("aggregation needs at least 2 values, got {0}")]
    InsufficientData(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("entropy normalization needs at least 2 agents")]
    DegenerateNormalization,
}

/// Per-round measures of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: u32,
    pub entropy: f64,
    pub entropy_norm: f64,
    pub adaptiveness: f64,
    pub delta_adaptiveness: f64,
}

/// Shannon entropy in bits of the variant pool produced in one round.
pub fn entropy(productions: &[VariantId]) -> Result<f64, MetricsError> {
    if productions.is_empty() {
        return Err(MetricsError::EmptyRound);
    }
    let mut counts: HashMap<VariantId, u32> = HashMap::with_capacity(productions.len());
    for v in productions {
        *counts.entry(*v).or_default() += 1;
    }
    let mut counts: Vec<u32> = counts.into_values().collect();
    Ok(entropy_from_counts(&mut counts, productions.len()))
}

/// Entropy in bits from the nonzero variant counts of a pool of `total` items.
///
/// Counts are sorted first so the summation order, and thus the exact
/// result, does not depend on labels or agent order.
pub fn entropy_from_counts(counts: &mut [u32], total: usize) -> f64 {
    counts.sort_unstable();
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = f64::from(k) / n;
            -p * p.log2()
        })
        .sum();
    if h > 0.0 {
        h
    } else {
        0.0
    }
}

/// Entropy divided by its maximum, `log2(n_agents)`.
pub fn normalized_entropy(h: f64, n_agents: usize) -> Result<f64, MetricsError> {
    if n_agents < 2 {
        return Err(MetricsError::DegenerateNormalization);
    }
    Ok(h / (n_agents as f64).log2())
}

/// Fraction of the round's productions that are high-quality.
pub fn adaptiveness(productions: &[VariantId], quality: &QualityAssignment) -> Result<f64, MetricsError> {
    if productions.is_empty() {
        return Err(MetricsError::EmptyRound);
    }
    let hits = productions.iter().filter(|v| quality.is_high(**v)).count();
    Ok(hits as f64 / productions.len() as f64)
}

/// `ΔA(t) = A(t) - A(t-1)` for `t >= 1`; `a_series[0]` is `A(0)`.
pub fn delta_adaptiveness(a_series: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if a_series.len() < 2 {
        return Err(MetricsError::SeriesTooShort { needed: 2, got: a_series.len() });
    }
    Ok(a_series.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    /// First (1-based) round with H = 0.
    Round(u32),
    Censored,
}

impl Convergence {
    pub fn round(self) -> Option<u32> {
        match self {
            Convergence::Round(r) => Some(r),
            Convergence::Censored => None,
        }
    }

    pub fn reached_by(self, round: u32) -> bool {
        matches!(self, Convergence::Round(r) if r <= round)
    }
}

/// First round (1-based) at which entropy is exactly zero.
pub fn time_to_convergence(h_series: &[f64]) -> Convergence {
    h_series.iter().position(|&h| h == 0.0).map_or(Convergence::Censored, |i| Convergence::Round(i as u32 + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub ci95_half_width: f64,
    pub n: u64,
}

pub fn aggregate(values: &[f64]) -> Result<AggregateStats, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData(n));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    Ok(AggregateStats { mean, sd, ci95_half_width: Z_95 * sd / nf.sqrt(), n: n as u64 })
}

/// Combines group summaries as if all underlying values had been aggregated together.
pub fn pool_aggregates(groups: &[AggregateStats]) -> Result<AggregateStats, MetricsError> {
    let total: u64 = groups.iter().map(|g| g.n).sum();
    if total < 2 {
        return Err(MetricsError::InsufficientData(total as usize));
    }
    let nf = total as f64;
    let mean = groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / nf;
    let ss: f64 =
        groups.iter().map(|g| (g.n as f64 - 1.0) * g.sd * g.sd + g.n as f64 * (g.mean - mean) * (g.mean - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    Ok(AggregateStats { mean, sd, ci95_half_width: Z_95 * sd / nf.sqrt(), n: total })
}

/// Time-to-convergence summary: statistics over converged runs plus the censored count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceStats {
    pub converged: Option<AggregateStats>,
    pub converged_n: u64,
    pub censored_n: u64,
}

pub fn aggregate_convergence(results: &[Convergence]) -> ConvergenceStats {
    let rounds: Vec<f64> = results.iter().filter_map(|c| c.round()).map(f64::from).collect();
    ConvergenceStats {
        converged: aggregate(&rounds).ok(),
        converged_n: rounds.len() as u64,
        censored_n: (results.len() - rounds.len()) as u64,
    }
}

/// Rounds (1-based) where the series exceeds each existing neighbour by at least `prominence`.
pub fn detect_bursts(series: &[f64], prominence: f64) -> Result<Vec<usize>, MetricsError> {
    if series.len() < 3 {
        return Err(MetricsError::SeriesTooShort { needed: 3, got: series.len() });
    }
    let last = series.len() - 1;
    let peaks = (0..=last)
        .filter(|&i| {
            let left = i == 0 || series[i] - series[i - 1] >= prominence;
            let right = i == last || series[i] - series[i + 1] >= prominence;
            left && right
        })
        .map(|i| i + 1)
        .collect();
    Ok(peaks)
}

/// Per-round difference of two mean-entropy curves, in units of `log2(n_agents)`.
pub fn condition_gap(mean_h_a: &[f64], mean_h_b: &[f64], n_agents: usize) -> Result<Vec<f64>, MetricsError> {
    if mean_h_a.len() != mean_h_b.len() {
        return Err(MetricsError::LengthMismatch(mean_h_a.len(), mean_h_b.len()));
    }
    if n_agents < 2 {
        return Err(MetricsError::DegenerateNormalization);
    }
    let scale = (n_agents as f64).log2();
    Ok(mean_h_a.iter().zip(mean_h_b).map(|(a, b)| (a - b) / scale).collect())
}

/// Per-round stats for a run given its productions; `initial_adaptiveness` is `A(0)`.
pub fn round_stats(
    productions: &[Vec<VariantId>],
    quality: &QualityAssignment,
    initial_adaptiveness: f64,
) -> Result<Vec<RoundStats>, MetricsError> {
    let mut prev_a = initial_adaptiveness;
    let mut out = Vec::with_capacity(productions.len());
    for (i, round) in productions.iter().enumerate() {
        let h = entropy(round)?;
        let a = adaptiveness(round, quality)?;
        out.push(RoundStats {
            round: i as u32 + 1,
            entropy: h,
            entropy_norm: normalized_entropy(h, round.len())?,
            adaptiveness: a,
            delta_adaptiveness: a - prev_a,
        });
        prev_a = a;
    }
    Ok(out)
}
