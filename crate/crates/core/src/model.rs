//! Agent memory and the biased production rule.
//!
//! Each agent keeps a log of every variant it produced (ego entries) and
//! every variant its partners produced (allo entries). At production time
//! only the entries inside the memory window are visible. The production
//! distribution mixes three sources:
//!
//! * the windowed ego/allo frequency distributions, weighted by the
//!   coordination bias `c` (0 = only own productions, 1 = only partners');
//! * a content-bias term that routes `beta = b * d` of the mass to the
//!   high-quality variant, where `d` is 1 iff that variant is visible in
//!   the window;
//! * uniform mutation over the whole variant space with rate `mu`.
//!
//! `P(x) = (1 - mu) * [(1 - beta) * g(x) + beta * [x = q]] + mu / N`, with
//! `g(x) = (1 - c) * f_ego(x) + c * f_allo(x)`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into the closed variant space `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantId(pub u32);

impl VariantId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Ego,
    Allo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryEntry {
    pub round: u32,
    pub origin: Origin,
    pub variant: VariantId,
}

/// Number of past rounds an agent can draw on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryWindow {
    Rounds(u32),
    Unbounded,
}

impl MemoryWindow {
    /// Lowest round visible when producing at `current_round`.
    #[inline]
    fn first_visible(self, current_round: u32) -> u32 {
        match self {
            MemoryWindow::Rounds(m) => current_round.saturating_sub(m),
            MemoryWindow::Unbounded => 0,
        }
    }
}

impl fmt::Display for MemoryWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryWindow::Rounds(m) => write!(f, "{m}"),
            MemoryWindow::Unbounded => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for MemoryWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "unbounded" | "complete" => Ok(MemoryWindow::Unbounded),
            other => match other.parse::<u32>() {
                Ok(0) => Err("memory window must be at least 1 round".to_string()),
                Ok(m) => Ok(MemoryWindow::Rounds(m)),
                Err(_) => Err(format!("invalid memory window '{other}' (expected a positive integer or 'inf')")),
            },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("agent {agent} has no visible memory at round {round}")]
    EmptyMemory { agent: usize, round: u32 },
    #[error("agent {agent} already has entries for round {round}")]
    DuplicateRound { agent: usize, round: u32 },
    #[error("round {0} is not a valid interaction round")]
    InvalidRound(u32),
    #[error("variant {variant} outside variant space of size {n_variants}")]
    VariantOutOfRange { variant: u32, n_variants: usize },
    #[error("invalid production distribution: {0}")]
    InvalidDistribution(String),
}

/// Per-agent ordered log of productions.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory {
    agent_id: usize,
    entries: Vec<MemoryEntry>,
}

impl AgentMemory {
    /// Memory holding only the round-0 production of `initial`.
    pub fn seeded(agent_id: usize, initial: VariantId) -> Self {
        let mut entries = Vec::with_capacity(16);
        entries.push(MemoryEntry { round: 0, origin: Origin::Ego, variant: initial });
        AgentMemory { agent_id, entries }
    }

    /// Builds a memory from raw entries; they must be nondecreasing in round.
    pub fn from_entries(agent_id: usize, entries: Vec<MemoryEntry>) -> Result<Self, ModelError> {
        if entries.windows(2).any(|w| w[1].round < w[0].round) {
            return Err(ModelError::InvalidParams("memory entries must be nondecreasing in round".into()));
        }
        Ok(AgentMemory { agent_id, entries })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn last_round(&self) -> Option<u32> {
        self.entries.last().map(|e| e.round)
    }

    /// Entries visible at `current_round`, newest first.
    fn visible(&self, window: MemoryWindow, current_round: u32) -> impl Iterator<Item = &MemoryEntry> {
        let lo = window.first_visible(current_round);
        self.entries.iter().rev().skip_while(move |e| e.round >= current_round).take_while(move |e| e.round >= lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasParams {
    /// 0 = egocentric, 1 = allocentric, 0.5 = neutral.
    pub coordination_bias: f64,
    /// Sensitivity `b` to variant quality.
    pub content_sensitivity: f64,
    pub mutation_rate: f64,
    pub memory_window: MemoryWindow,
}

impl BiasParams {
    pub fn new(
        coordination_bias: f64,
        content_sensitivity: f64,
        mutation_rate: f64,
        memory_window: MemoryWindow,
    ) -> Result<Self, ModelError> {
        let params = BiasParams { coordination_bias, content_sensitivity, mutation_rate, memory_window };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.coordination_bias) {
            return Err(ModelError::InvalidParams("coordination bias must lie in [0,1]".into()));
        }
        if !unit(self.content_sensitivity) {
            return Err(ModelError::InvalidParams("content bias must lie in [0,1]".into()));
        }
        if !unit(self.mutation_rate) {
            return Err(ModelError::InvalidParams("mutation rate must lie in [0,1]".into()));
        }
        if self.memory_window == MemoryWindow::Rounds(0) {
            return Err(ModelError::InvalidParams("memory window must be at least 1 round".into()));
        }
        Ok(())
    }
}

/// Set of variants with quality `s = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityAssignment {
    high_quality: Vec<VariantId>,
}

impl QualityAssignment {
    pub fn single(variant: VariantId) -> Self {
        QualityAssignment { high_quality: vec![variant] }
    }

    pub fn from_set(variants: impl IntoIterator<Item = VariantId>) -> Self {
        let mut high_quality: Vec<_> = variants.into_iter().collect();
        high_quality.sort_unstable();
        high_quality.dedup();
        QualityAssignment { high_quality }
    }

    #[inline]
    pub fn quality(&self, v: VariantId) -> u8 {
        u8::from(self.is_high(v))
    }

    #[inline]
    pub fn is_high(&self, v: VariantId) -> bool {
        self.high_quality.contains(&v)
    }

    pub fn variants(&self) -> &[VariantId] {
        &self.high_quality
    }
}

/// Probability of producing each variant; entries sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionDistribution {
    probs: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl ProductionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::InvalidDistribution(format!("entry {p} outside [0,1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ModelError::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(ProductionDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, v: VariantId) -> f64 {
        self.probs.get(v.index()).copied().unwrap_or(0.0)
    }
}

/// Relative frequencies of `origin` entries whose round lies in
/// `[current_round - m, current_round - 1]`. Empty if nothing is visible.
pub fn partition_frequencies(
    memory: &AgentMemory,
    origin: Origin,
    window: MemoryWindow,
    current_round: u32,
) -> BTreeMap<VariantId, f64> {
    let mut counts: BTreeMap<VariantId, u32> = BTreeMap::new();
    let mut total = 0u32;
    for e in memory.visible(window, current_round).filter(|e| e.origin == origin) {
        *counts.entry(e.variant).or_default() += 1;
        total += 1;
    }
    counts.into_iter().map(|(v, k)| (v, f64::from(k) / f64::from(total))).collect()
}

/// Reusable count buffers for the allocation-free production path.
#[derive(Debug, Default, Clone)]
pub struct ProductionScratch {
    ego: Vec<u32>,
    allo: Vec<u32>,
}

impl ProductionScratch {
    pub fn new(n_variants: usize) -> Self {
        ProductionScratch { ego: vec![0; n_variants], allo: vec![0; n_variants] }
    }
}

/// Writes the production distribution for `memory` at `current_round` into `out`.
///
/// `out.len()` is the size of the variant space. Parameters are assumed
/// valid; [`production_distribution`] is the checked entry point.
pub fn fill_production_probs(
    memory: &AgentMemory,
    params: &BiasParams,
    quality: &QualityAssignment,
    current_round: u32,
    scratch: &mut ProductionScratch,
    out: &mut [f64],
) -> Result<(), ModelError> {
    let n = out.len();
    scratch.ego.clear();
    scratch.ego.resize(n, 0);
    scratch.allo.clear();
    scratch.allo.resize(n, 0);

    let (mut ego_total, mut allo_total) = (0u32, 0u32);
    for e in memory.visible(params.memory_window, current_round) {
        let idx = e.variant.index();
        if idx >= n {
            return Err(ModelError::VariantOutOfRange { variant: e.variant.0, n_variants: n });
        }
        match e.origin {
            Origin::Ego => {
                scratch.ego[idx] += 1;
                ego_total += 1;
            }
            Origin::Allo => {
                scratch.allo[idx] += 1;
                allo_total += 1;
            }
        }
    }

    // An empty partition hands its weight to the other one.
    let c = params.coordination_bias;
    let (w_ego, w_allo) = match (ego_total, allo_total) {
        (0, 0) => return Err(ModelError::EmptyMemory { agent: memory.agent_id, round: current_round }),
        (_, 0) => (1.0, 0.0),
        (0, _) => (0.0, 1.0),
        _ => (1.0 - c, c),
    };

    let present_hq = quality
        .variants()
        .iter()
        .filter(|q| q.index() < n && scratch.ego[q.index()] + scratch.allo[q.index()] > 0)
        .count();
    let beta = if present_hq > 0 { params.content_sensitivity } else { 0.0 };
    let beta_each = if present_hq > 0 { beta / present_hq as f64 } else { 0.0 };

    let mu = params.mutation_rate;
    let keep = 1.0 - mu;
    let flat = mu / n as f64;
    let ego_norm = if ego_total > 0 { w_ego / f64::from(ego_total) } else { 0.0 };
    let allo_norm = if allo_total > 0 { w_allo / f64::from(allo_total) } else { 0.0 };

    for (x, p) in out.iter_mut().enumerate() {
        let g = f64::from(scratch.ego[x]) * ego_norm + f64::from(scratch.allo[x]) * allo_norm;
        let visible_hq = scratch.ego[x] + scratch.allo[x] > 0 && quality.is_high(VariantId(x as u32));
        let content = if visible_hq { beta_each } else { 0.0 };
        *p = keep * ((1.0 - beta) * g + content) + flat;
    }
    Ok(())
}

/// Checked production distribution over `n_variants` variants.
pub fn production_distribution(
    memory: &AgentMemory,
    params: &BiasParams,
    quality: &QualityAssignment,
    n_variants: usize,
    current_round: u32,
) -> Result<ProductionDistribution, ModelError> {
    params.validate()?;
    if current_round == 0 {
        return Err(ModelError::InvalidRound(0));
    }
    if n_variants == 0 {
        return Err(ModelError::InvalidParams("variant space is empty".into()));
    }
    let mut probs = vec![0.0; n_variants];
    let mut scratch = ProductionScratch::new(n_variants);
    fill_production_probs(memory, params, quality, current_round, &mut scratch, &mut probs)?;
    Ok(ProductionDistribution { probs })
}

/// Inverse-CDF sampling from `probs`; consumes exactly one uniform `f64`.
pub fn sample_from_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> VariantId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return VariantId(i as u32);
            }
        }
    }
    // Rounding left the cumulative sum just below u.
    VariantId(last_nonzero as u32)
}

pub fn sample_variant<R: Rng + ?Sized>(dist: &ProductionDistribution, rng: &mut R) -> VariantId {
    sample_from_probs(&dist.probs, rng)
}

/// Stores both productions of a pairwise interaction in both memories.
pub fn record_interaction(
    mem_a: &mut AgentMemory,
    mem_b: &mut AgentMemory,
    prod_a: VariantId,
    prod_b: VariantId,
    round: u32,
) -> Result<(), ModelError> {
    if round == 0 {
        return Err(ModelError::InvalidRound(0));
    }
    for mem in [&*mem_a, &*mem_b] {
        if mem.last_round().is_some_and(|r| r >= round) {
            return Err(ModelError::DuplicateRound { agent: mem.agent_id, round });
        }
    }
    mem_a.entries.push(MemoryEntry { round, origin: Origin::Ego, variant: prod_a });
    mem_a.entries.push(MemoryEntry { round, origin: Origin::Allo, variant: prod_b });
    mem_b.entries.push(MemoryEntry { round, origin: Origin::Ego, variant: prod_b });
    mem_b.entries.push(MemoryEntry { round, origin: Origin::Allo, variant: prod_a });
    Ok(())
}
