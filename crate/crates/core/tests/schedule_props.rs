mod common;

use connsim::schedule::{
    builtin_schedule, parse_and_validate, parse_schedule, reachability_profile, to_json, to_text, validate_schedule,
    Matching, Schedule, Violation,
};
use connsim::ConnectivityKind::{self, Early, Late, Mid};
use proptest::prelude::*;

fn builtins() -> Vec<(ConnectivityKind, usize)> {
    vec![(Early, 8), (Mid, 8), (Late, 8), (Early, 16), (Late, 16), (Early, 32), (Late, 32)]
}

fn pairs_of(s: &Schedule) -> Vec<Vec<(usize, usize)>> {
    s.rounds().iter().map(|m| m.pairs().to_vec()).collect()
}

#[test]
fn builtins_are_complete_round_robins() {
    for (kind, n) in builtins() {
        let s = builtin_schedule(kind, n).unwrap();
        assert_eq!(s.len(), n - 1, "{kind} {n}");
        assert_eq!(validate_schedule(&s, true), Vec::<Violation>::new(), "{kind} {n}");
    }
}

#[test]
fn reachability_matches_direct_spread_for_every_source() {
    for (kind, n) in builtins() {
        let s = builtin_schedule(kind, n).unwrap();
        for src in 0..n {
            assert_eq!(reachability_profile(&s, src).unwrap(), common::spread_oracle(&pairs_of(&s), n, src));
        }
    }
}

#[test]
fn early_doubles_every_round_from_every_source() {
    for n in [8, 16, 32] {
        let s = builtin_schedule(Early, n).unwrap();
        for src in 0..n {
            let p = reachability_profile(&s, src).unwrap();
            for (t, &k) in p.iter().enumerate() {
                assert_eq!(k, (1usize << (t + 1)).min(n), "n={n} src={src} round {}", t + 1);
            }
        }
    }
}

#[test]
fn late_stays_inside_blocks() {
    for n in [8, 16, 32] {
        let s = builtin_schedule(Late, n).unwrap();
        for src in 0..n {
            let p = reachability_profile(&s, src).unwrap();
            // Levels 1..=j occupy rounds 1..=2^j - 1 and keep spread inside a block of 2^j.
            let mut level_end = 1usize;
            for j in 1..=n.trailing_zeros() {
                for &k in &p[..level_end] {
                    assert!(k <= 1usize << j, "n={n} src={src}");
                }
                assert_eq!(p[level_end - 1], 1usize << j);
                level_end = (level_end + 1) * 2 - 1;
            }
        }
    }
}

#[test]
fn profiles_do_not_depend_on_source() {
    for (kind, n) in builtins() {
        let s = builtin_schedule(kind, n).unwrap();
        let first = reachability_profile(&s, 0).unwrap();
        for src in 1..n {
            assert_eq!(reachability_profile(&s, src).unwrap(), first, "{kind} {n}");
        }
    }
}

#[test]
fn reference_profiles() {
    assert_eq!(reachability_profile(&builtin_schedule(Early, 8).unwrap(), 0).unwrap(), vec![2, 4, 8, 8, 8, 8, 8]);
    assert_eq!(reachability_profile(&builtin_schedule(Mid, 8).unwrap(), 0).unwrap()[2], 6);
    assert_eq!(reachability_profile(&builtin_schedule(Late, 8).unwrap(), 0).unwrap(), vec![2, 4, 4, 8, 8, 8, 8]);
}

/// Circle-method round robin on `n` (even) agents, relabelled by `perm`.
fn circle(n: usize, perm: &[usize]) -> Schedule {
    let rounds = (0..n - 1)
        .map(|r| {
            let mut seats: Vec<usize> = std::iter::once(n - 1).chain((0..n - 1).map(|i| (i + r) % (n - 1))).collect();
            seats.iter_mut().for_each(|s| *s = perm[*s]);
            Matching::new((0..n / 2).map(|i| (seats[i], seats[n - 1 - i])).collect())
        })
        .collect();
    Schedule::new(n, rounds)
}

fn valid_schedule() -> impl Strategy<Value = Schedule> {
    (1usize..7)
        .prop_flat_map(|half| Just((0..half * 2).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|perm| circle(perm.len(), &perm))
}

proptest! {
    #[test]
    fn circle_schedules_validate(s in valid_schedule()) {
        prop_assert!(validate_schedule(&s, true).is_empty());
    }

    #[test]
    fn text_and_json_round_trip(s in valid_schedule()) {
        prop_assert_eq!(&parse_schedule(&to_text(&s)).unwrap(), &s);
        prop_assert_eq!(&parse_schedule(&to_json(&s)).unwrap(), &s);
        prop_assert!(parse_and_validate(&to_text(&s)).unwrap().incomplete.is_none());
    }

    #[test]
    fn truncated_schedules_are_incomplete(s in valid_schedule(), keep in 1usize..5) {
        prop_assume!(s.len() > 1);
        let keep = keep.min(s.len() - 1);
        let cut = Schedule::new(s.n_agents(), s.rounds()[..keep].to_vec());
        let loaded = parse_and_validate(&to_text(&cut)).unwrap();
        prop_assert!(matches!(loaded.incomplete, Some(Violation::MissingPairs { .. })), "{:?}", loaded.incomplete);
    }

    #[test]
    fn swapping_a_partner_is_caught(s in valid_schedule(), round in 0usize..16) {
        prop_assume!(s.n_agents() >= 4);
        let round = round % s.len();
        let mut rounds = s.rounds().to_vec();
        let mut pairs = rounds[round].pairs().to_vec();
        pairs[0].1 = pairs[1].0;
        rounds[round] = Matching::new(pairs);
        let broken = Schedule::new(s.n_agents(), rounds);
        let found = validate_schedule(&broken, false);
        prop_assert!(found.iter().any(|v| matches!(v, Violation::MatchingViolation { .. })), "{:?}", found);
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_and_validate(&text);
    }
}
