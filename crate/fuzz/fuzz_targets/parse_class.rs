#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame::harness::format::ClassFile;
use prefgame::ActionSpace;

fuzz_target!(|data: &[u8]| {
    let Some((&shape, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    // first byte picks 1-4 prompts with 2-5 actions each
    let prompts = 1 + (shape & 3) as usize;
    let k = 2 + ((shape >> 2) & 3) as usize;
    let actions = ActionSpace::uniform(prompts, k).unwrap();
    let _ = ClassFile::parse(text, &actions);
});
