//! Every text entry point rejects malformed input with an error, never a panic.

use std::path::Path;

use proptest::prelude::*;

use prefgame::harness::format::{ClassFile, Instance, OracleSpec};
use prefgame::harness::ExperimentConfig;
use prefgame::{ActionSpace, PreferenceDataset};

const INSTANCE: &str = "eta = 1.0\n\n[[prompt]]\nweight = 1.0\nreference = [0.5, 0.5]\npreference = [0.25]\n";
const CLASS: &str = "truth = 0\n[[member]]\npreference = [[0.25]]\n";
const CONFIG: &str = "instance = \"i.toml\"\nclass = \"c.toml\"\noracle = \"class:0\"\n[online]\niterations = 2\nbatch_size = 10\n";

/// Arbitrary text plus single-character mutations of valid files.
fn texts(valid: &'static str) -> impl Strategy<Value = String> {
    prop_oneof![
        ".{0,200}",
        (0..valid.len(), any::<char>()).prop_map(move |(i, c)| {
            let mut s: Vec<char> = valid.chars().collect();
            s[i] = c;
            s.into_iter().collect()
        }),
        (0..valid.len()).prop_map(move |i| valid[..i].to_string()),
    ]
}

proptest! {
    #[test]
    fn instance_parser(s in texts(INSTANCE)) {
        let _ = Instance::parse(&s);
    }

    #[test]
    fn class_parser(s in texts(CLASS)) {
        let _ = ClassFile::parse(&s, &ActionSpace::uniform(1, 2).unwrap());
    }

    #[test]
    fn config_parser(s in texts(CONFIG)) {
        let _ = ExperimentConfig::parse(&s, Path::new("."));
    }

    #[test]
    fn oracle_spec_parser(s in ".{0,40}") {
        let _ = OracleSpec::parse(&s);
    }

    #[test]
    fn dataset_parser(s in ".{0,200}") {
        let _ = PreferenceDataset::parse(&s);
    }
}

#[test]
fn valid_seeds_parse() {
    Instance::parse(INSTANCE).unwrap();
    ClassFile::parse(CLASS, &ActionSpace::uniform(1, 2).unwrap()).unwrap();
    ExperimentConfig::parse(CONFIG, Path::new(".")).unwrap();
}
