#![no_main]

use libfuzzer_sys::fuzz_target;
use percolab::sampler::Configuration;

fuzz_target!(|data: &[u8]| {
    // large regions only cost time
    if data.len() > 4096 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Configuration::parse_dump(text) {
        let again = Configuration::parse_dump(&c.dump()).expect("dump parses");
        assert_eq!(again, c);
        assert_eq!(Configuration::from_rle(c.region_arc(), &c.to_rle()).unwrap(), c);
    }
});
