#![no_main]

use connsim::output::{read_runs_from, write_runs_to};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_runs_from(data) {
        let bytes = write_runs_to(&records, Vec::new()).expect("in-memory write");
        let again = read_runs_from(bytes.as_slice()).expect("written runs parse");
        assert_eq!(again.len(), records.len());
    }
});
