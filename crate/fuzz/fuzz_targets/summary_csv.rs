#![no_main]

use connsim::output::{read_summary_from, write_summary_to, Metric};
use connsim::plot::{render_svg, PlotOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_summary_from(data) {
        let bytes = write_summary_to(&rows, Vec::new()).expect("in-memory write");
        let again = read_summary_from(bytes.as_slice()).expect("written summary parses");
        assert!(again.iter().zip(&rows).all(|(a, b)| a.same_as(b)));
        let _ = render_svg(&rows, &PlotOptions::new(Metric::DeltaAdaptiveness));
    }
});
