//! Single runs, replicate batches and grid sweeps.
//!
//! Every random draw is keyed: the run seed comes from
//! `seed_derive(master_seed, point_index, replicate)`, and each agent's
//! production at round `t` uses its own generator seeded from
//! `(run_seed, agent, t)`. Results therefore do not depend on pair order,
//! thread count or scheduling.

use std::io;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{self, Convergence, MetricsError, RoundStats};
use crate::model::{
    fill_production_probs, record_interaction, sample_from_probs, AgentMemory, BiasParams, MemoryWindow, ModelError,
    ProductionScratch, QualityAssignment, VariantId,
};
use crate::output::{Metric, PointKey, RunRecord, SummaryRecord};
use crate::schedule::{builtin_schedule, ConnectivityKind, Schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("number of replicates must be at least 1")]
    InvalidReplicates,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("output failed at point {resume_from}: {source}")]
    Sink {
        #[source]
        source: io::Error,
        /// First point index that was not durably written.
        resume_from: usize,
    },
}

/// Which variant is high quality in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityMode {
    /// The initial variant of this (0-based) agent.
    FixedOwner(usize),
    /// A uniformly chosen agent's initial variant, drawn from the run seed.
    RandomOwnerPerRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub connectivity: ConnectivityKind,
    pub schedule: Arc<Schedule>,
    pub params: BiasParams,
    pub quality_mode: QualityMode,
}

impl ParameterPoint {
    pub fn builtin(
        connectivity: ConnectivityKind,
        n_agents: usize,
        params: BiasParams,
        quality_mode: QualityMode,
    ) -> Result<Self, EngineError> {
        let schedule = Arc::new(builtin_schedule(connectivity, n_agents)?);
        let point = ParameterPoint { connectivity, schedule, params, quality_mode };
        point.validate()?;
        Ok(point)
    }

    pub fn custom(schedule: Arc<Schedule>, params: BiasParams, quality_mode: QualityMode) -> Result<Self, EngineError> {
        let point = ParameterPoint { connectivity: ConnectivityKind::Custom, schedule, params, quality_mode };
        point.validate()?;
        Ok(point)
    }

    pub fn n_agents(&self) -> usize {
        self.schedule.n_agents()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.params.validate()?;
        let n = self.n_agents();
        if n < 2 {
            return Err(EngineError::InvalidConfig(format!("need at least 2 agents, got {n}")));
        }
        if self.schedule.is_empty() {
            return Err(EngineError::InvalidConfig("schedule has no rounds".into()));
        }
        let violations = crate::schedule::validate_schedule(&self.schedule, false);
        if !violations.is_empty() {
            return Err(ScheduleError::Validation(violations).into());
        }
        if let QualityMode::FixedOwner(owner) = self.quality_mode {
            if owner >= n {
                return Err(EngineError::InvalidConfig(format!("quality owner {} outside 1..={n}", owner + 1)));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> PointKey {
        PointKey {
            n_agents: self.n_agents(),
            connectivity: self.connectivity,
            content_bias: self.params.content_sensitivity,
            coordination_bias: self.params.coordination_bias,
            memory: self.params.memory_window,
            mutation_rate: self.params.mutation_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMode {
    /// One pass through the schedule (`N - 1` rounds for a complete round-robin).
    Complete,
    Fixed(u32),
    /// Cycle the schedule until the first round with H = 0, or `max_rounds`.
    UntilConvergence {
        max_rounds: u32,
    },
}

impl HorizonMode {
    pub const DEFAULT_MAX_ROUNDS: u32 = 200;

    pub fn until_convergence() -> Self {
        HorizonMode::UntilConvergence { max_rounds: Self::DEFAULT_MAX_ROUNDS }
    }

    fn max_rounds(self, schedule_len: usize) -> u32 {
        match self {
            HorizonMode::Complete => schedule_len as u32,
            HorizonMode::Fixed(r) => r,
            HorizonMode::UntilConvergence { max_rounds } => max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub point: ParameterPoint,
    pub horizon: HorizonMode,
    pub master_seed: u64,
}

impl SimulationConfig {
    pub fn new(point: ParameterPoint, horizon: HorizonMode, master_seed: u64) -> Self {
        SimulationConfig { point, horizon, master_seed }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.point.validate()?;
        match self.horizon {
            HorizonMode::Fixed(0) => Err(EngineError::InvalidConfig("horizon must be at least 1 round".into())),
            HorizonMode::UntilConvergence { max_rounds } if (max_rounds as usize) < self.point.schedule.len() => {
                Err(EngineError::InvalidConfig(format!(
                    "max_rounds {max_rounds} shorter than one schedule pass ({})",
                    self.point.schedule.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_seed: u64,
    /// 0-based agent whose initial variant is high quality.
    pub quality_owner: usize,
    /// `A(0)`.
    pub initial_adaptiveness: f64,
    /// `productions[t - 1][agent]` for rounds `t = 1..`.
    pub productions: Vec<Vec<VariantId>>,
    pub stats: Vec<RoundStats>,
    pub convergence: Convergence,
}

impl RunResult {
    pub fn rounds(&self) -> usize {
        self.productions.len()
    }

    pub fn quality(&self) -> QualityAssignment {
        QualityAssignment::single(VariantId(self.quality_owner as u32))
    }

    /// Recomputes the per-round stats from the productions alone.
    pub fn recompute_stats(&self) -> Result<Vec<RoundStats>, MetricsError> {
        metrics::round_stats(&self.productions, &self.quality(), self.initial_adaptiveness)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn mix3(salt: u64, a: u64, b: u64, c: u64) -> u64 {
    let h = mix64(a ^ salt);
    let h = mix64(h.wrapping_add(GOLDEN) ^ b);
    mix64(h.wrapping_add(GOLDEN) ^ c)
}

/// Run seed for replicate `replicate` of point `point_index`.
///
/// Three chained SplitMix64 finalizers over (master, point, replicate). For a
/// fixed (master, point) the map from replicate to seed is a bijection.
/// The constants are part of the output format and must not change.
pub fn seed_derive(master_seed: u64, point_index: u64, replicate_index: u64) -> u64 {
    mix3(0x243F_6A88_85A3_08D3, master_seed, point_index, replicate_index)
}

const OWNER_STREAM: u64 = u64::MAX;

/// Generator for one agent's production at one round.
pub fn agent_rng(run_seed: u64, agent: u64, round: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(mix3(0x1319_8A2E_0370_7344, run_seed, agent, round))
}

fn choose_owner(mode: QualityMode, n: usize, run_seed: u64) -> usize {
    match mode {
        QualityMode::FixedOwner(a) => a,
        QualityMode::RandomOwnerPerRun => agent_rng(run_seed, OWNER_STREAM, 0).random_range(0..n),
    }
}

fn two_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Entropy over a round's productions using a dense count buffer.
fn round_entropy(prods: &[VariantId], counts: &mut [u32], nonzero: &mut Vec<u32>) -> f64 {
    counts.iter_mut().for_each(|c| *c = 0);
    for v in prods {
        counts[v.index()] += 1;
    }
    nonzero.clear();
    nonzero.extend(counts.iter().copied().filter(|&c| c > 0));
    metrics::entropy_from_counts(nonzero, prods.len())
}

/// Runs one simulation. Agents produce synchronously from their memories as
/// of the end of the previous round, then every pair stores both productions.
pub fn run_simulation(config: &SimulationConfig, run_seed: u64) -> Result<RunResult, EngineError> {
    config.validate()?;
    let point = &config.point;
    let n = point.n_agents();
    let schedule = &point.schedule;
    let owner = choose_owner(point.quality_mode, n, run_seed);
    let quality = QualityAssignment::single(VariantId(owner as u32));
    let initial_adaptiveness = 1.0 / n as f64;

    let mut memories: Vec<AgentMemory> = (0..n).map(|i| AgentMemory::seeded(i, VariantId(i as u32))).collect();
    let max_rounds = config.horizon.max_rounds(schedule.len());
    let stop_on_convergence = matches!(config.horizon, HorizonMode::UntilConvergence { .. });

    let mut scratch = ProductionScratch::new(n);
    let mut probs = vec![0.0; n];
    let mut counts = vec![0u32; n];
    let mut nonzero = Vec::with_capacity(n);
    let log2n = (n as f64).log2();

    let mut productions = Vec::with_capacity(max_rounds as usize);
    let mut stats = Vec::with_capacity(max_rounds as usize);
    let mut prev_a = initial_adaptiveness;
    let mut convergence = Convergence::Censored;

    for round in 1..=max_rounds {
        let mut prods = Vec::with_capacity(n);
        for (agent, memory) in memories.iter().enumerate() {
            fill_production_probs(memory, &point.params, &quality, round, &mut scratch, &mut probs)?;
            let mut rng = agent_rng(run_seed, agent as u64, u64::from(round));
            prods.push(sample_from_probs(&probs, &mut rng));
        }
        for &(a, b) in schedule.matching_for_round(round).pairs() {
            let (mem_a, mem_b) = two_mut(&mut memories, a, b);
            record_interaction(mem_a, mem_b, prods[a], prods[b], round)?;
        }

        let h = round_entropy(&prods, &mut counts, &mut nonzero);
        let a = prods.iter().filter(|v| v.index() == owner).count() as f64 / n as f64;
        stats.push(RoundStats {
            round,
            entropy: h,
            entropy_norm: h / log2n,
            adaptiveness: a,
            delta_adaptiveness: a - prev_a,
        });
        prev_a = a;
        productions.push(prods);

        if h == 0.0 && convergence == Convergence::Censored {
            convergence = Convergence::Round(round);
            if stop_on_convergence {
                break;
            }
        }
    }

    Ok(RunResult { run_seed, quality_owner: owner, initial_adaptiveness, productions, stats, convergence })
}

/// Runs `n_runs` replicates of `config`; result `r` uses `seed_derive(master, point_index, r)`.
pub fn run_replicates(
    config: &SimulationConfig,
    point_index: u64,
    n_runs: usize,
) -> Result<Vec<RunResult>, EngineError> {
    if n_runs == 0 {
        return Err(EngineError::InvalidReplicates);
    }
    config.validate()?;
    (0..n_runs as u64)
        .into_par_iter()
        .map(|r| run_simulation(config, seed_derive(config.master_seed, point_index, r)))
        .collect()
}

/// Levels of every swept parameter; the sweep runs their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub population_sizes: Vec<usize>,
    pub connectivity: Vec<ConnectivityKind>,
    pub coordination_levels: Vec<f64>,
    pub content_levels: Vec<f64>,
    pub memory_levels: Vec<MemoryWindow>,
    pub mutation_rate: f64,
    pub replicates: usize,
    pub quality_mode: QualityMode,
    pub horizon: HorizonMode,
    /// Required when `connectivity` contains `Custom`.
    pub custom_schedule: Option<Arc<Schedule>>,
}

/// `0.0, 0.1, ..., 1.0`.
pub fn unit_levels() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

impl Default for SweepGrid {
    /// 11 coordination x 11 content x 4 memory x 3 connectivity levels for 8 agents.
    fn default() -> Self {
        SweepGrid {
            population_sizes: vec![8],
            connectivity: vec![ConnectivityKind::Early, ConnectivityKind::Mid, ConnectivityKind::Late],
            coordination_levels: unit_levels(),
            content_levels: unit_levels(),
            memory_levels: vec![
                MemoryWindow::Rounds(1),
                MemoryWindow::Rounds(3),
                MemoryWindow::Rounds(5),
                MemoryWindow::Unbounded,
            ],
            mutation_rate: 0.02,
            replicates: 1000,
            quality_mode: QualityMode::RandomOwnerPerRun,
            horizon: HorizonMode::Complete,
            custom_schedule: None,
        }
    }
}

impl SweepGrid {
    /// Enumerates points in order: population size, connectivity, coordination,
    /// content, memory. Mid connectivity is skipped for sizes other than 8.
    pub fn points(&self) -> Result<Vec<ParameterPoint>, EngineError> {
        let empty = [
            ("population_sizes", self.population_sizes.is_empty()),
            ("connectivity", self.connectivity.is_empty()),
            ("coordination_bias_levels", self.coordination_levels.is_empty()),
            ("content_bias_levels", self.content_levels.is_empty()),
            ("memory_levels", self.memory_levels.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(EngineError::InvalidConfig(format!("{name} must not be empty")));
        }
        if self.replicates == 0 {
            return Err(EngineError::InvalidReplicates);
        }
        let mut points = Vec::new();
        for &n in &self.population_sizes {
            for &kind in &self.connectivity {
                let schedule = match kind {
                    ConnectivityKind::Mid if n != 8 => continue,
                    ConnectivityKind::Custom => {
                        let s = self.custom_schedule.clone().ok_or_else(|| {
                            EngineError::InvalidConfig("custom connectivity requires a schedule file".into())
                        })?;
                        if s.n_agents() != n {
                            continue;
                        }
                        s
                    }
                    _ => Arc::new(builtin_schedule(kind, n)?),
                };
                for &c in &self.coordination_levels {
                    for &b in &self.content_levels {
                        for &m in &self.memory_levels {
                            let params = BiasParams::new(c, b, self.mutation_rate, m)?;
                            let point = ParameterPoint {
                                connectivity: kind,
                                schedule: Arc::clone(&schedule),
                                params,
                                quality_mode: self.quality_mode,
                            };
                            point.validate()?;
                            points.push(point);
                        }
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(EngineError::InvalidConfig("grid has no valid parameter combinations".into()));
        }
        Ok(points)
    }
}

/// Everything the sweep emits for one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutput {
    pub point_index: usize,
    /// Formatted run rows (no header); empty when the sink does not want them.
    pub run_rows: Vec<u8>,
    pub summaries: Vec<SummaryRecord>,
    pub convergence: SummaryRecord,
}

/// Ordered consumer of sweep output.
pub trait SweepSink {
    fn wants_run_rows(&self) -> bool {
        true
    }

    fn accept(&mut self, output: &PointOutput) -> io::Result<()>;
}

/// Collects outputs in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub include_runs: bool,
    pub outputs: Vec<PointOutput>,
}

impl SweepSink for MemorySink {
    fn wants_run_rows(&self) -> bool {
        self.include_runs
    }

    fn accept(&mut self, output: &PointOutput) -> io::Result<()> {
        self.outputs.push(output.clone());
        Ok(())
    }
}

#[derive(Default)]
pub struct SweepOptions<'a> {
    pub start_point: usize,
    /// Stop after this many points (the remainder can be resumed).
    pub max_points: Option<usize>,
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub total_points: usize,
    /// First point index not yet executed; equals `total_points` when done.
    pub next_point: usize,
    pub summaries: Vec<SummaryRecord>,
    pub convergence: Vec<SummaryRecord>,
}

impl SweepReport {
    pub fn is_complete(&self) -> bool {
        self.next_point >= self.total_points
    }
}

/// Run records for one run, in round order.
pub fn run_records<'a>(key: &PointKey, run_id: u64, result: &'a RunResult) -> impl Iterator<Item = RunRecord> + 'a {
    let key = *key;
    result.stats.iter().map(move |s| RunRecord {
        run_id,
        run_seed: result.run_seed,
        key,
        quality_owner: result.quality_owner,
        round: s.round,
        entropy: s.entropy,
        entropy_norm: s.entropy_norm,
        adaptiveness: s.adaptiveness,
        delta_adaptiveness: s.delta_adaptiveness,
        converged: result.convergence.reached_by(s.round),
    })
}

/// Per-round summaries (rounds with at least 2 runs) and the convergence summary.
pub fn summarize_point(point_index: usize, key: &PointKey, runs: &[RunResult]) -> (Vec<SummaryRecord>, SummaryRecord) {
    let max_round = runs.iter().map(RunResult::rounds).max().unwrap_or(0);
    let mut summaries = Vec::with_capacity(max_round * 4);
    for t in 0..max_round {
        let stats: Vec<&RoundStats> = runs.iter().filter_map(|r| r.stats.get(t)).collect();
        for metric in Metric::PER_ROUND {
            let values: Vec<f64> = stats.iter().map(|s| metric.of(s)).collect();
            if let Ok(agg) = metrics::aggregate(&values) {
                summaries.push(SummaryRecord::per_round(point_index, *key, t as u32 + 1, metric, agg));
            }
        }
    }
    let conv: Vec<Convergence> = runs.iter().map(|r| r.convergence).collect();
    let tc = metrics::aggregate_convergence(&conv);
    (summaries, SummaryRecord::convergence(point_index, *key, tc))
}

fn execute_point(
    point_index: usize,
    point: &ParameterPoint,
    grid: &SweepGrid,
    master_seed: u64,
    want_rows: bool,
) -> Result<PointOutput, EngineError> {
    let config = SimulationConfig::new(point.clone(), grid.horizon, master_seed);
    let runs = run_replicates(&config, point_index as u64, grid.replicates)?;
    let key = point.key();
    let run_rows = if want_rows {
        let base = (point_index * grid.replicates) as u64;
        let mut w = crate::output::RunWriter::new(Vec::with_capacity(runs.len() * 8 * 160), false);
        for (r, result) in runs.iter().enumerate() {
            for rec in run_records(&key, base + r as u64, result) {
                w.write(&rec).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
            }
        }
        w.into_inner().map_err(|e| EngineError::InvalidConfig(e.to_string()))?
    } else {
        Vec::new()
    };
    let (summaries, convergence) = summarize_point(point_index, &key, &runs);
    Ok(PointOutput { point_index, run_rows, summaries, convergence })
}

/// Executes the grid from `opts.start_point`, handing each point's output to
/// `sink` in point order. Points are computed in parallel batches.
pub fn sweep(
    grid: &SweepGrid,
    master_seed: u64,
    sink: &mut dyn SweepSink,
    opts: SweepOptions<'_>,
) -> Result<SweepReport, EngineError> {
    let points = grid.points()?;
    let total = points.len();
    let start = opts.start_point.min(total);
    let end = opts.max_points.map_or(total, |m| (start + m).min(total));
    let want_rows = sink.wants_run_rows();
    let batch = rayon::current_num_threads().max(1) * 4;

    let mut report =
        SweepReport { total_points: total, next_point: start, summaries: Vec::new(), convergence: Vec::new() };
    let mut idx = start;
    while idx < end {
        let upto = (idx + batch).min(end);
        let outputs: Vec<PointOutput> = (idx..upto)
            .into_par_iter()
            .map(|i| execute_point(i, &points[i], grid, master_seed, want_rows))
            .collect::<Result<_, _>>()?;
        for out in outputs {
            sink.accept(&out).map_err(|source| EngineError::Sink { source, resume_from: out.point_index })?;
            report.summaries.extend(out.summaries);
            report.convergence.push(out.convergence);
            report.next_point = out.point_index + 1;
            if let Some(progress) = opts.progress {
                progress(report.next_point, total);
            }
        }
        idx = upto;
    }
    Ok(report)
}
