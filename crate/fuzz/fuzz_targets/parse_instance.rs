#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame::harness::format::Instance;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(inst) = Instance::parse(text) {
        // anything accepted must survive its own serialization
        let again = Instance::parse(&inst.to_toml()).expect("written instance parses");
        assert_eq!(again, inst);
    }
});
