#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame::PreferenceDataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = PreferenceDataset::parse(text) {
        assert_eq!(PreferenceDataset::parse(&d.to_text()).expect("written dataset parses"), d);
    }
});
