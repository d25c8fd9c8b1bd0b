#![no_main]

use libfuzzer_sys::fuzz_target;
use percolab::lattice::Shape;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(shape) = text.parse::<Shape>() {
        // records round-trip bit for bit
        let again: Shape = shape.to_string().parse().expect("formatted record parses");
        assert_eq!(again, shape);
    }
});
