//! Standalone SVG line charts of summary files.
//!
//! One panel per facet level, one line per connectivity condition, x = round,
//! y = pooled mean with 95% CI error bars. Parameters that are neither
//! faceted nor filtered are pooled. For ΔA charts, detected bursts are
//! circled. Output is a pure function of the input rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::{detect_bursts, pool_aggregates, AggregateStats, DEFAULT_BURST_PROMINENCE};
use crate::model::MemoryWindow;
use crate::output::{Metric, SummaryRecord};
use crate::schedule::ConnectivityKind;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("metric {0} has no per-round values to plot")]
    NotPerRound(&'static str),
    #[error("no summary rows match the requested metric and filters")]
    NoData,
    #[error("summary mixes population sizes {0:?}; pick one with --agents")]
    MixedPopulations(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Facet {
    ContentBias,
    CoordinationBias,
    Memory,
}

impl std::str::FromStr for Facet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "content_bias" | "b" => Ok(Facet::ContentBias),
            "coordination_bias" | "c" => Ok(Facet::CoordinationBias),
            "memory" | "m" => Ok(Facet::Memory),
            other => Err(format!("unknown facet '{other}' (expected content_bias, coordination_bias or memory)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub metric: Metric,
    pub facet: Facet,
    pub n_agents: Option<usize>,
    pub content_bias: Option<f64>,
    pub coordination_bias: Option<f64>,
    pub memory: Option<MemoryWindow>,
    pub burst_prominence: f64,
}

impl PlotOptions {
    pub fn new(metric: Metric) -> Self {
        PlotOptions {
            metric,
            facet: Facet::ContentBias,
            n_agents: None,
            content_bias: None,
            coordination_bias: None,
            memory: None,
            burst_prominence: DEFAULT_BURST_PROMINENCE,
        }
    }
}

/// Facet level, ordered numerically (unbounded memory last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Value(u64),
    Unbounded,
}

impl Level {
    fn label(self, facet: Facet) -> String {
        match (facet, self) {
            (_, Level::Unbounded) => "m = inf".into(),
            (Facet::Memory, Level::Value(m)) => format!("m = {m}"),
            (Facet::ContentBias, Level::Value(bits)) => format!("b = {}", trim(f64::from_bits(bits))),
            (Facet::CoordinationBias, Level::Value(bits)) => format!("c = {}", trim(f64::from_bits(bits))),
        }
    }
}

fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn level_of(s: &SummaryRecord, facet: Facet) -> Level {
    match facet {
        // Levels are in [0,1], so their bit patterns order like the values.
        Facet::ContentBias => Level::Value(s.key.content_bias.to_bits()),
        Facet::CoordinationBias => Level::Value(s.key.coordination_bias.to_bits()),
        Facet::Memory => match s.key.memory {
            MemoryWindow::Rounds(m) => Level::Value(u64::from(m)),
            MemoryWindow::Unbounded => Level::Unbounded,
        },
    }
}

/// Pooled series: facet level -> connectivity -> round -> stats.
type Series = BTreeMap<Level, BTreeMap<ConnectivityKind, BTreeMap<u32, AggregateStats>>>;

fn collect(rows: &[SummaryRecord], opts: &PlotOptions) -> Result<(Series, usize), PlotError> {
    if opts.metric == Metric::TimeToConvergence {
        return Err(PlotError::NotPerRound(opts.metric.as_str()));
    }
    let selected: Vec<&SummaryRecord> = rows
        .iter()
        .filter(|s| s.metric == opts.metric && s.round.is_some())
        .filter(|s| opts.n_agents.is_none_or(|n| s.key.n_agents == n))
        .filter(|s| opts.content_bias.is_none_or(|b| (s.key.content_bias - b).abs() < 1e-9))
        .filter(|s| opts.coordination_bias.is_none_or(|c| (s.key.coordination_bias - c).abs() < 1e-9))
        .filter(|s| opts.memory.is_none_or(|m| s.key.memory == m))
        .collect();
    if selected.is_empty() {
        return Err(PlotError::NoData);
    }
    let mut sizes: Vec<usize> = selected.iter().map(|s| s.key.n_agents).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() > 1 {
        return Err(PlotError::MixedPopulations(sizes));
    }

    let mut groups: BTreeMap<(Level, ConnectivityKind, u32), Vec<AggregateStats>> = BTreeMap::new();
    for s in selected {
        let agg = AggregateStats { mean: s.mean, sd: s.sd, ci95_half_width: s.ci95, n: s.n };
        groups.entry((level_of(s, opts.facet), s.key.connectivity, s.round.unwrap_or(0))).or_default().push(agg);
    }
    let mut series = Series::new();
    for ((level, kind, round), aggs) in groups {
        let pooled = pool_aggregates(&aggs).unwrap_or(aggs[0]);
        series.entry(level).or_default().entry(kind).or_default().insert(round, pooled);
    }
    Ok((series, sizes[0]))
}

fn color(kind: ConnectivityKind) -> &'static str {
    match kind {
        ConnectivityKind::Early => "#1b9e77",
        ConnectivityKind::Mid => "#d95f02",
        ConnectivityKind::Late => "#7570b3",
        ConnectivityKind::Custom => "#e7298a",
    }
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 36.0;
const HEADER_H: f64 = 56.0;
const COLUMNS: usize = 3;

fn y_range(metric: Metric, n_agents: usize, series: &Series) -> (f64, f64) {
    match metric {
        Metric::EntropyNorm | Metric::Adaptiveness => (0.0, 1.0),
        Metric::Entropy => (0.0, (n_agents as f64).log2()),
        _ => {
            let (mut lo, mut hi) = (0.0f64, 0.0f64);
            for by_kind in series.values() {
                for by_round in by_kind.values() {
                    for s in by_round.values() {
                        lo = lo.min(s.mean - s.ci95_half_width);
                        hi = hi.max(s.mean + s.ci95_half_width);
                    }
                }
            }
            let pad = ((hi - lo) * 0.05).max(1e-3);
            (lo - pad, hi + pad)
        }
    }
}

/// Renders the chart as an SVG document.
pub fn render_svg(rows: &[SummaryRecord], opts: &PlotOptions) -> Result<String, PlotError> {
    let (series, n_agents) = collect(rows, opts)?;
    let max_round = series
        .values()
        .flat_map(|k| k.values())
        .filter_map(|r| r.keys().next_back().copied())
        .max()
        .unwrap_or(1)
        .max(2);
    let (y_lo, y_hi) = y_range(opts.metric, n_agents, &series);
    let kinds: Vec<ConnectivityKind> = {
        let mut k: Vec<_> = series.values().flat_map(|m| m.keys().copied()).collect();
        k.sort();
        k.dedup();
        k
    };

    let cols = series.len().min(COLUMNS);
    let rows_n = series.len().div_ceil(COLUMNS);
    let width = cols as f64 * PANEL_W;
    let height = HEADER_H + rows_n as f64 * PANEL_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="8" y="18" font-size="14">{} by round, {} agents (mean, 95% CI)</text>"#,
        opts.metric.as_str(),
        n_agents
    );
    for (i, kind) in kinds.iter().enumerate() {
        let x = 8.0 + i as f64 * 90.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="38" x2="{:.1}" y2="38" stroke="{}" stroke-width="2"/><text x="{:.1}" y="42">{}</text>"#,
            x + 20.0,
            color(*kind),
            x + 24.0,
            kind
        );
    }

    for (p, (level, by_kind)) in series.iter().enumerate() {
        let ox = (p % COLUMNS) as f64 * PANEL_W;
        let oy = HEADER_H + (p / COLUMNS) as f64 * PANEL_H;
        let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
        let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
        let px = |round: u32| ox + MARGIN_L + (f64::from(round) - 1.0) / (f64::from(max_round) - 1.0) * plot_w;
        let py = |y: f64| oy + MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            ox + MARGIN_L,
            oy + 16.0,
            level.label(opts.facet)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444"/>"##,
            ox + MARGIN_L,
            oy + MARGIN_T
        );
        for k in 0..=4 {
            let y = y_lo + (y_hi - y_lo) * f64::from(k) / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
                ox + MARGIN_L - 4.0,
                py(y) + 4.0,
                y
            );
        }
        if y_lo < 0.0 && y_hi > 0.0 {
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#bbb" stroke-dasharray="3,3"/>"##,
                ox + MARGIN_L,
                py(0.0),
                ox + MARGIN_L + plot_w,
                py(0.0)
            );
        }
        let step = (max_round as usize).div_ceil(10).max(1);
        for r in (1..=max_round).step_by(step) {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#,
                px(r),
                oy + MARGIN_T + plot_h + 14.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
            ox + MARGIN_L + plot_w / 2.0,
            oy + PANEL_H - 6.0
        );

        for (kind, by_round) in by_kind {
            let c = color(*kind);
            let points: Vec<String> =
                by_round.iter().map(|(r, s)| format!("{:.1},{:.1}", px(*r), py(s.mean))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
            for (r, s) in by_round {
                let x = px(*r);
                let (y0, y1) = (py(s.mean - s.ci95_half_width), py(s.mean + s.ci95_half_width));
                let _ = writeln!(
                    svg,
                    r#"<path d="M{x:.1},{y0:.1}V{y1:.1}M{:.1},{y0:.1}H{:.1}M{:.1},{y1:.1}H{:.1}" stroke="{c}" fill="none"/>"#,
                    x - 3.0,
                    x + 3.0,
                    x - 3.0,
                    x + 3.0
                );
            }
            if opts.metric == Metric::DeltaAdaptiveness {
                let means: Vec<f64> = by_round.values().map(|s| s.mean).collect();
                let rounds: Vec<u32> = by_round.keys().copied().collect();
                if let Ok(peaks) = detect_bursts(&means, opts.burst_prominence) {
                    for i in peaks {
                        let r = rounds[i - 1];
                        let _ = writeln!(
                            svg,
                            r#"<circle class="burst" cx="{:.1}" cy="{:.1}" r="5" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                            px(r),
                            py(means[i - 1])
                        );
                    }
                }
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::PointKey;

    fn row(kind: ConnectivityKind, b: f64, m: MemoryWindow, round: u32, metric: Metric, mean: f64) -> SummaryRecord {
        SummaryRecord {
            point_index: 0,
            key: PointKey {
                n_agents: 8,
                connectivity: kind,
                content_bias: b,
                coordination_bias: 0.5,
                memory: m,
                mutation_rate: 0.02,
            },
            round: Some(round),
            metric,
            mean,
            sd: 0.1,
            ci95: 0.0062,
            n: 1000,
            censored_n: None,
        }
    }

    fn rows() -> Vec<SummaryRecord> {
        let late = [0.0, 0.125, 0.25, 0.0, 0.5, 0.0, 0.0];
        let early = [0.0, 0.125, 0.25, 0.5, 0.0, 0.0, 0.0];
        let mut out = vec![];
        for (kind, series) in [(ConnectivityKind::Early, early), (ConnectivityKind::Late, late)] {
            for b in [0.0, 0.8] {
                for m in [MemoryWindow::Rounds(1), MemoryWindow::Unbounded] {
                    for (i, v) in series.iter().enumerate() {
                        out.push(row(kind, b, m, i as u32 + 1, Metric::DeltaAdaptiveness, *v * b));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn one_panel_per_facet_level_and_bursts_marked() {
        let svg = render_svg(&rows(), &PlotOptions::new(Metric::DeltaAdaptiveness)).unwrap();
        assert_eq!(svg.matches(r#"<g class="panel">"#).count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 4);
        // b = 0.8: late has peaks at 3 and 5, early at 4.
        assert_eq!(svg.matches(r#"class="burst""#).count(), 3);
        assert!(svg.contains("b = 0.8"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let opts = PlotOptions { facet: Facet::Memory, ..PlotOptions::new(Metric::DeltaAdaptiveness) };
        assert_eq!(render_svg(&rows(), &opts).unwrap(), render_svg(&rows(), &opts).unwrap());
        assert!(render_svg(&rows(), &opts).unwrap().contains("m = inf"));
    }

    #[test]
    fn errors() {
        assert_eq!(render_svg(&rows(), &PlotOptions::new(Metric::Entropy)), Err(PlotError::NoData));
        assert_eq!(
            render_svg(&rows(), &PlotOptions::new(Metric::TimeToConvergence)),
            Err(PlotError::NotPerRound("time_to_convergence"))
        );
        let mut mixed = rows();
        mixed[0].key.n_agents = 16;
        assert_eq!(
            render_svg(&mixed, &PlotOptions::new(Metric::DeltaAdaptiveness)),
            Err(PlotError::MixedPopulations(vec![8, 16]))
        );
    }
}
