use std::collections::HashSet;

use connsim::engine::agent_rng;
use connsim::seed_derive;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

#[test]
fn default_sweep_seeds_are_unique_and_balanced() {
    let mut seen = HashSet::with_capacity(1452 * 1000);
    let mut ones = 0u64;
    for point in 0..1452u64 {
        for r in 0..1000u64 {
            let s = seed_derive(1, point, r);
            assert!(seen.insert(s), "collision at point {point} replicate {r}");
            ones += s & 1;
        }
    }
    let frac = ones as f64 / seen.len() as f64;
    assert!((frac - 0.5).abs() <= 0.002, "low bit set in {frac} of seeds");
}

#[test]
fn adjacent_replicates_differ() {
    let mut rng = Pcg64Mcg::seed_from_u64(11);
    for _ in 0..1_000_000 {
        let s: u64 = rng.random();
        assert_ne!(seed_derive(s, 0, 0), seed_derive(s, 0, 1));
    }
}

#[test]
fn each_seed_bit_is_balanced() {
    let n = 200_000u64;
    let mut counts = [0u64; 64];
    for r in 0..n {
        let s = seed_derive(7, 3, r);
        for (bit, c) in counts.iter_mut().enumerate() {
            *c += (s >> bit) & 1;
        }
    }
    for (bit, &c) in counts.iter().enumerate() {
        let frac = c as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.005, "bit {bit}: {frac}");
    }
}

#[test]
fn agent_streams_are_distinct() {
    let mut first = HashSet::new();
    for agent in 0..32u64 {
        for round in 0..32u64 {
            assert!(first.insert(agent_rng(99, agent, round).random::<u64>()));
        }
    }
}
