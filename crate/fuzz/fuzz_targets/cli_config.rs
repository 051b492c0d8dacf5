#![no_main]

use connsim::config::CliConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(config) = CliConfig::from_json_str(data) {
        let _ = config.fingerprint();
        if config.custom_schedule.is_none() {
            let _ = config.to_grid();
        }
    }
});
