#![no_main]

use connsim::schedule::{parse_and_validate, parse_schedule, reachability_profile, to_text, validate_schedule};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(s) = parse_schedule(data) {
        let _ = validate_schedule(&s, true);
        if s.n_agents() > 0 && s.n_agents() <= 4096 {
            let _ = reachability_profile(&s, 0);
        }
    }
    if let Ok(loaded) = parse_and_validate(data) {
        let again = parse_schedule(&to_text(&loaded.schedule)).expect("exported schedule parses");
        assert_eq!(again, loaded.schedule);
    }
});
