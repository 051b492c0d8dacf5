//! Pairing schedules: which agents meet in which round.
//!
//! A schedule is a list of perfect matchings. The built-in schedules are
//! complete round-robins (every pair meets exactly once in `N - 1` rounds)
//! that differ only in the *order* of the rounds, which controls how fast a
//! variant can potentially travel through the population.
//!
//! Agent ids are 0-based in memory and 1-based in files and reports.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectivityKind {
    Early,
    Mid,
    Late,
    Custom,
}

impl ConnectivityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectivityKind::Early => "early",
            ConnectivityKind::Mid => "mid",
            ConnectivityKind::Late => "late",
            ConnectivityKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ConnectivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConnectivityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "early" => Ok(ConnectivityKind::Early),
            "mid" | "middle" => Ok(ConnectivityKind::Mid),
            "late" => Ok(ConnectivityKind::Late),
            "custom" => Ok(ConnectivityKind::Custom),
            other => Err(format!("unknown connectivity '{other}' (expected early, mid, late or custom)")),
        }
    }
}

/// One round of pairings. Pair order and orientation are preserved as given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Matching { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    n_agents: usize,
    rounds: Vec<Matching>,
}

impl Schedule {
    /// Unvalidated constructor; see [`validate_schedule`].
    pub fn new(n_agents: usize, rounds: Vec<Matching>) -> Self {
        Schedule { n_agents, rounds }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn rounds(&self) -> &[Matching] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Matching used in 1-based simulation round `round`, cycling past the end.
    pub fn matching_for_round(&self, round: u32) -> &Matching {
        let idx = (round as usize - 1) % self.rounds.len();
        &self.rounds[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    OddAgentCount {
        n_agents: usize,
    },
    /// A round is not a perfect matching. Agent ids are 0-based.
    MatchingViolation {
        round: usize,
        missing: Vec<usize>,
        duplicated: Vec<usize>,
        out_of_range: Vec<usize>,
    },
    RepeatedPair {
        pair: (usize, usize),
        first_round: usize,
        round: usize,
    },
    MissingPairs {
        pairs: Vec<(usize, usize)>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[usize]| v.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join(",");
        match self {
            Violation::OddAgentCount { n_agents } => {
                write!(f, "OddAgentCount: {n_agents} agents cannot be perfectly matched")
            }
            Violation::MatchingViolation { round, missing, duplicated, out_of_range } => {
                write!(f, "MatchingViolation: round {round}")?;
                if !missing.is_empty() {
                    write!(f, " missing agents [{}]", ids(missing))?;
                }
                if !duplicated.is_empty() {
                    write!(f, " agents paired more than once [{}]", ids(duplicated))?;
                }
                if !out_of_range.is_empty() {
                    write!(f, " unknown agents [{}]", ids(out_of_range))?;
                }
                Ok(())
            }
            Violation::RepeatedPair { pair, first_round, round } => {
                write!(f, "RepeatedPair: {}-{} meets in rounds {first_round} and {round}", pair.0 + 1, pair.1 + 1)
            }
            Violation::MissingPairs { pairs } => {
                let listed: Vec<_> = pairs.iter().map(|(a, b)| format!("{}-{}", a + 1, b + 1)).collect();
                write!(f, "MissingPairs: {} pairs never meet [{}]", pairs.len(), listed.join(" "))
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("mid connectivity is only defined for 8 agents (got {0})")]
    UnsupportedKind(usize),
    #[error("custom connectivity has no built-in schedule; load one from a file")]
    CustomNotBuiltin,
    #[error("no built-in schedule for {0} agents (supported: 8, 16, 32)")]
    UnsupportedSize(usize),
    #[error("unknown agent {agent} (schedule has {n_agents} agents)")]
    UnknownAgent { agent: usize, n_agents: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid schedule: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Table = [[(usize, usize); 4]; 7];

const EARLY_8: Table = [
    [(1, 2), (3, 4), (5, 6), (7, 8)],
    [(1, 4), (3, 2), (5, 8), (7, 6)],
    [(1, 6), (3, 8), (5, 2), (7, 4)],
    [(1, 8), (3, 6), (5, 4), (7, 2)],
    [(1, 3), (2, 4), (5, 7), (6, 8)],
    [(1, 5), (2, 6), (3, 7), (4, 8)],
    [(1, 7), (2, 8), (3, 5), (4, 6)],
];

const MID_8: Table = [
    [(1, 2), (3, 4), (5, 6), (7, 8)],
    [(1, 4), (2, 7), (3, 6), (5, 8)],
    [(1, 6), (4, 7), (2, 5), (3, 8)],
    [(1, 5), (3, 7), (2, 6), (4, 8)],
    [(1, 7), (5, 3), (2, 8), (6, 4)],
    [(1, 8), (3, 2), (7, 6), (5, 4)],
    [(1, 3), (5, 7), (2, 4), (6, 8)],
];

const LATE_8: Table = [
    [(1, 2), (3, 4), (5, 6), (7, 8)],
    [(1, 4), (3, 2), (5, 8), (6, 7)],
    [(1, 3), (2, 4), (5, 7), (6, 8)],
    [(1, 5), (2, 6), (3, 7), (4, 8)],
    [(1, 6), (3, 8), (5, 2), (7, 4)],
    [(1, 7), (2, 8), (3, 5), (4, 6)],
    [(1, 8), (3, 6), (5, 4), (7, 2)],
];

fn from_table(table: &Table) -> Schedule {
    let rounds = table.iter().map(|row| Matching::new(row.iter().map(|&(a, b)| (a - 1, b - 1)).collect())).collect();
    Schedule::new(8, rounds)
}

/// Matching `t` of level `level` for `n` agents: within each block of size
/// `2^level`, lower-half position `i` meets upper-half position `(i + t) mod 2^(level-1)`.
fn level_matching(n: usize, level: u32, t: usize) -> Matching {
    let block = 1usize << level;
    let half = block / 2;
    let mut pairs = Vec::with_capacity(n / 2);
    for base in (0..n).step_by(block) {
        for i in 0..half {
            pairs.push((base + i, base + half + (i + t) % half));
        }
    }
    Matching::new(pairs)
}

/// Round-robin on `n = 2^k` agents built level by level.
///
/// Late order runs every level to completion before the next one, keeping
/// blocks isolated as long as possible. Early order takes the first matching
/// of every level up front so reachability doubles each round, then the rest
/// in ascending level order.
pub fn hierarchical_schedule(kind: ConnectivityKind, n: usize) -> Result<Schedule, ScheduleError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(ScheduleError::UnsupportedSize(n));
    }
    let levels = n.trailing_zeros();
    let mut rounds = Vec::with_capacity(n - 1);
    match kind {
        ConnectivityKind::Late => {
            for level in 1..=levels {
                for t in 0..1usize << (level - 1) {
                    rounds.push(level_matching(n, level, t));
                }
            }
        }
        ConnectivityKind::Early => {
            for level in 1..=levels {
                rounds.push(level_matching(n, level, 0));
            }
            for level in 1..=levels {
                for t in 1..1usize << (level - 1) {
                    rounds.push(level_matching(n, level, t));
                }
            }
        }
        ConnectivityKind::Mid => return Err(ScheduleError::UnsupportedKind(n)),
        ConnectivityKind::Custom => return Err(ScheduleError::CustomNotBuiltin),
    }
    Ok(Schedule::new(n, rounds))
}

/// Built-in schedule: the fixed 8-agent tables, or the level construction for 16 and 32.
pub fn builtin_schedule(kind: ConnectivityKind, n_agents: usize) -> Result<Schedule, ScheduleError> {
    if kind == ConnectivityKind::Custom {
        return Err(ScheduleError::CustomNotBuiltin);
    }
    if kind == ConnectivityKind::Mid && n_agents != 8 {
        return Err(ScheduleError::UnsupportedKind(n_agents));
    }
    match (kind, n_agents) {
        (ConnectivityKind::Early, 8) => Ok(from_table(&EARLY_8)),
        (ConnectivityKind::Mid, 8) => Ok(from_table(&MID_8)),
        (ConnectivityKind::Late, 8) => Ok(from_table(&LATE_8)),
        (_, 16 | 32) => hierarchical_schedule(kind, n_agents),
        _ => Err(ScheduleError::UnsupportedSize(n_agents)),
    }
}

#[inline]
fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Lists every way `s` fails to be a (complete) round-robin of perfect matchings.
pub fn validate_schedule(s: &Schedule, require_complete: bool) -> Vec<Violation> {
    let n = s.n_agents;
    let mut violations = Vec::new();
    if n % 2 == 1 {
        violations.push(Violation::OddAgentCount { n_agents: n });
    }
    let mut met: HashMap<(usize, usize), usize> = HashMap::new();
    let mut repeats = Vec::new();
    for (idx, m) in s.rounds.iter().enumerate() {
        let round = idx + 1;
        let mut seen = vec![0u32; n];
        let mut out_of_range = BTreeSet::new();
        for &(a, b) in &m.pairs {
            for x in [a, b] {
                if x < n {
                    seen[x] += 1;
                } else {
                    out_of_range.insert(x);
                }
            }
            if a == b || a >= n || b >= n {
                continue;
            }
            let key = pair_key(a, b);
            match met.get(&key) {
                Some(&first_round) => repeats.push(Violation::RepeatedPair { pair: key, first_round, round }),
                None => {
                    met.insert(key, round);
                }
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&x| seen[x] == 0).collect();
        let duplicated: Vec<usize> = (0..n).filter(|&x| seen[x] > 1).collect();
        if !missing.is_empty() || !duplicated.is_empty() || !out_of_range.is_empty() {
            violations.push(Violation::MatchingViolation {
                round,
                missing,
                duplicated,
                out_of_range: out_of_range.into_iter().collect(),
            });
        }
    }
    violations.extend(repeats);
    if require_complete {
        let pairs: Vec<_> =
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|p| !met.contains_key(p)).collect();
        if !pairs.is_empty() {
            violations.push(Violation::MissingPairs { pairs });
        }
    }
    violations
}

/// Size of the set of agents a variant from `source` could have reached after each round.
pub fn reachability_profile(s: &Schedule, source: usize) -> Result<Vec<usize>, ScheduleError> {
    if source >= s.n_agents {
        return Err(ScheduleError::UnknownAgent { agent: source, n_agents: s.n_agents });
    }
    let mut reached = vec![false; s.n_agents];
    reached[source] = true;
    let mut profile = Vec::with_capacity(s.rounds.len());
    for m in &s.rounds {
        let before = reached.clone();
        for &(a, b) in &m.pairs {
            if a < s.n_agents && b < s.n_agents && (before[a] || before[b]) {
                reached[a] = true;
                reached[b] = true;
            }
        }
        profile.push(reached.iter().filter(|&&r| r).count());
    }
    Ok(profile)
}

/// A schedule read from disk together with non-fatal findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedSchedule {
    pub schedule: Schedule,
    /// Set when the schedule is valid but not a complete round-robin.
    pub incomplete: Option<Violation>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct JsonSchedule {
    agents: usize,
    rounds: Vec<Vec<[usize; 2]>>,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> ScheduleError {
    ScheduleError::Parse { line, column, message: message.into() }
}

fn parse_json(text: &str) -> Result<Schedule, ScheduleError> {
    let doc: JsonSchedule = serde_json::from_str(text).map_err(|e| parse_error(e.line(), e.column(), e.to_string()))?;
    let mut rounds = Vec::with_capacity(doc.rounds.len());
    for (r, round) in doc.rounds.iter().enumerate() {
        let mut pairs = Vec::with_capacity(round.len());
        for &[a, b] in round {
            if a == 0 || b == 0 {
                return Err(parse_error(0, 0, format!("round {}: agent ids are 1-based", r + 1)));
            }
            pairs.push((a - 1, b - 1));
        }
        rounds.push(Matching::new(pairs));
    }
    Ok(Schedule::new(doc.agents, rounds))
}

fn parse_agent(token: &str, line: usize, column: usize) -> Result<usize, ScheduleError> {
    match token.parse::<usize>() {
        Ok(0) => Err(parse_error(line, column, "agent ids are 1-based")),
        Ok(a) => Ok(a - 1),
        Err(_) => Err(parse_error(line, column, format!("invalid agent id '{token}'"))),
    }
}

fn parse_text(text: &str) -> Result<Schedule, ScheduleError> {
    let mut n_agents = None;
    let mut rounds = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if n_agents.is_none() {
            let trimmed = content.trim();
            let column = content.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1;
            let value = trimmed
                .strip_prefix("agents")
                .map(str::trim_start)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| parse_error(line_no, column, "expected header 'agents=N'"))?;
            let n = value
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_error(line_no, column, format!("invalid agent count '{}'", value.trim())))?;
            n_agents = Some(n);
            continue;
        }
        let mut pairs = Vec::new();
        let mut offset = 0;
        for token in content.split_whitespace() {
            let start = content[offset..].find(token).map(|p| p + offset).unwrap_or(offset);
            offset = start + token.len();
            let column = raw[..start].chars().count() + 1;
            let (a, b) = token
                .split_once('-')
                .ok_or_else(|| parse_error(line_no, column, format!("expected pair 'a-b', found '{token}'")))?;
            let a = parse_agent(a, line_no, column)?;
            let b = parse_agent(b, line_no, column + token.find('-').unwrap_or(0) + 1)?;
            pairs.push((a, b));
        }
        rounds.push(Matching::new(pairs));
    }
    let n_agents = n_agents.ok_or_else(|| parse_error(1, 1, "missing header 'agents=N'"))?;
    Ok(Schedule::new(n_agents, rounds))
}

/// Parses a schedule in either the line format or the JSON format, without validation.
pub fn parse_schedule(text: &str) -> Result<Schedule, ScheduleError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

/// Parses and validates. Structural violations are errors; a valid but
/// incomplete round-robin is reported through [`LoadedSchedule::incomplete`].
pub fn parse_and_validate(text: &str) -> Result<LoadedSchedule, ScheduleError> {
    let schedule = parse_schedule(text)?;
    let mut violations = validate_schedule(&schedule, true);
    let incomplete = match violations.last() {
        Some(Violation::MissingPairs { .. }) => violations.pop(),
        _ => None,
    };
    if !violations.is_empty() {
        return Err(ScheduleError::Validation(violations));
    }
    if schedule.is_empty() {
        return Err(ScheduleError::Validation(vec![Violation::MissingPairs {
            pairs: (0..schedule.n_agents).flat_map(|a| (a + 1..schedule.n_agents).map(move |b| (a, b))).collect(),
        }]));
    }
    Ok(LoadedSchedule { schedule, incomplete })
}

pub fn load_schedule(path: impl AsRef<Path>) -> Result<LoadedSchedule, ScheduleError> {
    let text = fs::read_to_string(path)?;
    parse_and_validate(&text)
}

/// Line format: `agents=N` header, then one round per line.
pub fn to_text(s: &Schedule) -> String {
    let mut out = format!("agents={}\n", s.n_agents);
    for m in &s.rounds {
        let line: Vec<_> = m.pairs.iter().map(|(a, b)| format!("{}-{}", a + 1, b + 1)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn to_json(s: &Schedule) -> String {
    let doc = JsonSchedule {
        agents: s.n_agents,
        rounds: s.rounds.iter().map(|m| m.pairs.iter().map(|&(a, b)| [a + 1, b + 1]).collect()).collect(),
    };
    let mut out = serde_json::to_string(&doc).expect("schedule serializes");
    out.push('\n');
    out
}

/// Writes JSON when the path ends in `.json`, the line format otherwise.
pub fn export_schedule(s: &Schedule, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
    let path = path.as_ref();
    let body = if path.extension().is_some_and(|e| e == "json") { to_json(s) } else { to_text(s) };
    fs::write(path, body)?;
    Ok(())
}
