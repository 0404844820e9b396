#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame::harness::format::OracleSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = OracleSpec::parse(text);
    }
});
