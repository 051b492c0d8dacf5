//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use connsim::model::{MemoryEntry, Origin};
use connsim::{MemoryWindow, VariantId};
use rand::Rng;

/// Brute-force evaluation of the production rule for a single high-quality
/// variant `q`. Returns `None` when nothing is visible.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_production(
    entries: &[MemoryEntry],
    c: f64,
    b: f64,
    mu: f64,
    window: MemoryWindow,
    q: u32,
    n_variants: usize,
    round: u32,
) -> Option<Vec<f64>> {
    let visible = |e: &MemoryEntry| {
        let lo = match window {
            MemoryWindow::Rounds(m) => i64::from(round) - i64::from(m),
            MemoryWindow::Unbounded => 0,
        };
        i64::from(e.round) >= lo && e.round < round
    };
    let mut ego = vec![0.0; n_variants];
    let mut allo = vec![0.0; n_variants];
    let (mut n_ego, mut n_allo) = (0.0, 0.0);
    for e in entries.iter().filter(|e| visible(e)) {
        match e.origin {
            Origin::Ego => {
                ego[e.variant.0 as usize] += 1.0;
                n_ego += 1.0;
            }
            Origin::Allo => {
                allo[e.variant.0 as usize] += 1.0;
                n_allo += 1.0;
            }
        }
    }
    if n_ego == 0.0 && n_allo == 0.0 {
        return None;
    }
    let d = if ego[q as usize] > 0.0 || allo[q as usize] > 0.0 { 1.0 } else { 0.0 };
    let beta = b * d;
    let mut out = Vec::with_capacity(n_variants);
    for x in 0..n_variants {
        let f_e = if n_ego > 0.0 { ego[x] / n_ego } else { 0.0 };
        let f_a = if n_allo > 0.0 { allo[x] / n_allo } else { 0.0 };
        let g = if n_ego == 0.0 {
            f_a
        } else if n_allo == 0.0 {
            f_e
        } else {
            (1.0 - c) * f_e + c * f_a
        };
        let hq = if x as u32 == q { 1.0 } else { 0.0 };
        out.push((1.0 - mu) * ((1.0 - beta) * g + beta * hq) + mu / n_variants as f64);
    }
    Some(out)
}

/// Random memory with rounds in `0..round`, nondecreasing.
pub fn random_entries<R: Rng>(rng: &mut R, n_variants: usize, round: u32) -> Vec<MemoryEntry> {
    let len = rng.random_range(0..24);
    let mut rounds: Vec<u32> = (0..len).map(|_| rng.random_range(0..round)).collect();
    rounds.sort_unstable();
    rounds
        .into_iter()
        .map(|r| MemoryEntry {
            round: r,
            origin: if rng.random_bool(0.5) { Origin::Ego } else { Origin::Allo },
            variant: VariantId(rng.random_range(0..n_variants as u32)),
        })
        .collect()
}

/// A bias level that is exactly 0 or 1 a quarter of the time.
pub fn random_unit<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    }
}

pub fn random_window<R: Rng>(rng: &mut R) -> MemoryWindow {
    if rng.random_bool(0.25) {
        MemoryWindow::Unbounded
    } else {
        MemoryWindow::Rounds(rng.random_range(1..7))
    }
}

/// Agents that could hold `source`'s variant after each round, by direct
/// simulation of who meets whom.
pub fn spread_oracle(pairs_per_round: &[Vec<(usize, usize)>], n: usize, source: usize) -> Vec<usize> {
    let mut holds = vec![false; n];
    holds[source] = true;
    let mut out = Vec::new();
    for pairs in pairs_per_round {
        let before = holds.clone();
        for &(a, b) in pairs {
            if before[a] || before[b] {
                holds[a] = true;
                holds[b] = true;
            }
        }
        out.push(holds.iter().filter(|&&h| h).count());
    }
    out
}
