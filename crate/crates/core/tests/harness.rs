use std::path::{Path, PathBuf};

use prefgame::harness::acceptance::{nash_certificate, symmetric_nash, Thresholds};
use prefgame::harness::format::{finite_class_to_toml, Instance};
use prefgame::harness::instances::rps_instance;
use prefgame::harness::{run_experiment, run_sweep, ExperimentConfig};
use prefgame::FiniteClass;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("prefgame-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn singleton_class_recovers_the_equilibrium() {
    let dir = scratch("singleton");
    let (cfg, p) = rps_instance(1.0).unwrap();
    std::fs::write(dir.join("rps.toml"), Instance { cfg, preference: Some(p.clone()) }.to_toml()).unwrap();
    let class = FiniteClass::new(vec![p]).unwrap().with_truth(0).unwrap();
    std::fs::write(dir.join("class.toml"), finite_class_to_toml(&class)).unwrap();
    let text = "instance = \"rps.toml\"\nclass = \"class.toml\"\noracle = \"instance\"\n\n[offline_vs]\nn = 100\n";
    let report = run_experiment(&ExperimentConfig::parse(text, &dir).unwrap()).unwrap();
    assert_eq!(report.errors, 0);
    assert_eq!(report.records.len(), 1);
    assert!(report.records[0].suboptimality.unwrap() < 1e-4);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_median_gap_decreases_with_sample_size() {
    let mut config = ExperimentConfig::load(&configs().join("theorem1_sweep.toml")).unwrap();
    config.output = None;
    let report = run_sweep(&config).unwrap();
    assert_eq!(report.errors, 0);
    let medians: Vec<f64> = report
        .summary
        .iter()
        .filter(|r| r.metric == "suboptimality")
        .map(|r| r.median.unwrap())
        .collect();
    assert_eq!(medians.len(), 3);
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    for row in report.summary.iter().filter(|r| r.metric == "suboptimality") {
        assert_eq!(row.count, 100);
        assert_eq!(row.bound_frequency, Some(1.0));
    }
}

#[test]
fn config_errors_surface_before_any_run() {
    let text = "instance = \"rps.toml\"\nclass = \"rps_class.toml\"\noracle = \"class:9\"\n\n[offline_vs]\nn = 10\n";
    let config = ExperimentConfig::parse(text, &configs()).unwrap();
    assert!(run_experiment(&config).is_err());
    let text = "instance = \"missing.toml\"\nclass = \"rps_class.toml\"\noracle = \"instance\"\n\n[offline_vs]\nn = 10\n";
    assert!(run_experiment(&ExperimentConfig::parse(text, &configs()).unwrap()).is_err());
}

#[test]
fn online_records_follow_replicate_order() {
    let config = ExperimentConfig::load(&configs().join("online.toml")).unwrap();
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.errors, 0);
    let seeds: Vec<u64> = report.records.iter().map(|r| r.seed).collect();
    let mut sorted = seeds.clone();
    sorted.sort();
    assert_eq!(seeds, sorted);
    // three iteration records and a summary per replicate
    assert_eq!(report.records.len(), 10 * 4);
    assert!(report.records.iter().filter(|r| r.kind == "summary").all(|r| r.selected.is_some()));
}

#[test]
fn tampered_tolerances_fail_the_certificates() {
    let t = Thresholds::tampered();
    assert!(!nash_certificate(&t).passed);
    assert!(!symmetric_nash(&t).passed);
    assert!(nash_certificate(&Thresholds::default()).passed);
}
