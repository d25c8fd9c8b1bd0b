#![no_main]

use libfuzzer_sys::fuzz_target;
use percolab::arms::ArmQuery;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = text.parse::<ArmQuery>() {
        assert!(q.validate().is_ok());
        let again: ArmQuery = q.to_string().parse().expect("formatted query parses");
        assert_eq!(again, q);
    }
});
