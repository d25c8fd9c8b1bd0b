#![no_main]

use libfuzzer_sys::fuzz_target;
use percolab::loewner::DrivingSample;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(d) = DrivingSample::parse(text) {
        assert!(d.validate().is_ok());
        // export rounds to 12 digits, which may merge close times
        let _ = DrivingSample::parse(&d.export());
    }
});
