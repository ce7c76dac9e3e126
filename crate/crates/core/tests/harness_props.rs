use std::collections::HashSet;
use std::fs;

use lqg_core::harness::*;

fn small_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_grid(128);
    cfg.replicates = 3;
    cfg.base_seed = 11;
    cfg.scale_window = (0.02, 0.25);
    cfg.ball_radius_policy = BallRadiusPolicy::QuantileOfFrameDistance(0.3);
    cfg.output_dir = dir.join("out");
    cfg
}

fn json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string(x).unwrap()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(json(&a.records), json(&b.records));
    assert_eq!(json(&a.aggregates), json(&b.aggregates));
    assert_eq!(json(&a.spectrum), json(&b.spectrum));
    a.verify().unwrap();
}

#[test]
fn replicate_seeds_never_collide() {
    let mut seen = HashSet::with_capacity(1 << 21);
    for base in [0u64, 7, u64::MAX] {
        seen.clear();
        for i in 0..1_000_000u64 {
            assert!(seen.insert(mix_seed(base, i)), "collision at base {base}, index {i}");
        }
    }
}

#[test]
fn cache_hits_misses_and_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let cfg = small_config(tmp.path());
    assert!(cache_lookup_in(&cache, &cfg).is_none());
    let result = run_experiment(&cfg).unwrap();
    let path = cache_store_in(&cache, &result).unwrap();
    let hit = cache_lookup_in(&cache, &cfg).expect("hit");
    assert_eq!(json(&hit), json(&result));

    let mut moved = cfg.clone();
    moved.output_dir = tmp.path().join("elsewhere");
    assert!(cache_lookup_in(&cache, &moved).is_some());

    let mut other = cfg.clone();
    other.base_seed += 1;
    assert!(cache_lookup_in(&cache, &other).is_none());

    fs::write(&path, "{ not json").unwrap();
    assert!(cache_lookup_in(&cache, &cfg).is_none());

    // Tampered aggregates fail verification and count as a miss.
    let mut tampered = result.clone();
    tampered.aggregates[0].mean += 1.0;
    fs::write(&path, json(&tampered)).unwrap();
    assert!(cache_lookup_in(&cache, &cfg).is_none());

    let zero = run_experiment_with(&cfg, RunOptions { zero_field: true, diameter_sum: false }).unwrap();
    assert!(cache_store_in(&cache, &zero).is_err());
}

#[test]
fn emit_formats_and_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let result = run_experiment_with(&cfg, RunOptions { zero_field: false, diameter_sum: true }).unwrap();
    assert!(result.aggregate("diameter_sum_crossing").is_some());

    let written = emit(&result, &[OutputFormat::Json]).unwrap();
    assert_eq!(written.len(), 1);
    assert_eq!(fs::read_dir(&cfg.output_dir).unwrap().count(), 1);
    let back = load_summary(&written[0]).unwrap();
    assert_eq!(json(&back), json(&result));

    let written = emit(&result, &[OutputFormat::Csv, OutputFormat::Plot, OutputFormat::Csv]).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"replicates.csv".to_string()));
    assert!(names.contains(&"spectrum.csv".to_string()));
    let spectrum = fs::read_to_string(cfg.output_dir.join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().next(), Some(SPECTRUM_HEADER));
    let replicates = fs::read_to_string(cfg.output_dir.join("replicates.csv")).unwrap();
    assert_eq!(replicates.lines().count(), 1 + cfg.replicates);
    assert!(cfg.output_dir.join("plot").is_dir());
}

#[test]
fn summary_with_tampered_aggregates_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut result = run_experiment(&cfg).unwrap();
    let i = result.aggregates.iter().position(|a| a.quantity == "radius_s").unwrap();
    result.aggregates[i].stderr += 1e-3;
    let path = emit(&result, &[OutputFormat::Json]).unwrap().remove(0);
    assert!(matches!(load_summary(&path), Err(HarnessError::Inconsistent(_))));
}

#[test]
fn zero_field_baseline_on_tiny_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::for_grid(32);
    cfg.replicates = 1;
    cfg.output_dir = tmp.path().to_path_buf();
    // The default window [8δ, 1/4] is empty at n = 32; box counting needs a
    // window reaching below 8δ here.
    assert!(cfg.validate().is_err());
    cfg.scale_window = (0.0625 * 1.01, 0.5);
    cfg.ball_radius_policy = BallRadiusPolicy::QuantileOfFrameDistance(0.75);
    let res = run_experiment_with(&cfg, RunOptions { zero_field: true, diameter_sum: false }).unwrap();
    let r = &res.records[0];
    assert!(!r.truncated);
    let e = r.euclid.as_ref().unwrap().slope;
    assert!((e - 1.0).abs() < 0.35, "euclid {e}");
    if let Some(q) = &r.quantum {
        assert!((q.slope - 1.0).abs() < 0.35, "quantum {}", q.slope);
    }
}
