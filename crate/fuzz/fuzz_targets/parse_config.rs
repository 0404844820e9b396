#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use prefgame::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ExperimentConfig::parse(text, Path::new("base")) {
        c.validate().expect("parsed configs are valid");
    }
});
