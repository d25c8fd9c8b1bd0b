#![no_main]

use libfuzzer_sys::fuzz_target;
use percolab::explorer::{export_points, parse_points};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(points) = parse_points(text) {
        let again = parse_points(&export_points(&points)).expect("exported points parse");
        assert_eq!(again.len(), points.len());
    }
});
