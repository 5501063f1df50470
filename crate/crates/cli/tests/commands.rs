use std::fs;
use std::path::{Path, PathBuf};

use approx::assert_abs_diff_eq;
use logifold_cli::bundle::Bundle;
use logifold_cli::commands::{
    cmd_entropy, cmd_route, cmd_simulate, cmd_sweep, cmd_validate, cmd_verify_laws, BundleOptions, EntropyOptions,
    RouteOptions, SimulateOptions, SweepOptions,
};
use logifold_cli::{CliError, Status};
use logifold_core::cores::default_grid;
use logifold_core::laws::LawScope;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bundle(name: &str) -> BundleOptions {
    BundleOptions {
        bundle: fixture(name),
        epsilon_floor: None,
    }
}

fn entropy(name: &str) -> Value {
    let opts = EntropyOptions {
        bundle: bundle(name),
        ..EntropyOptions::default()
    };
    cmd_entropy(&opts).unwrap().report.results
}

fn sweep(name: &str, target: f64) -> Value {
    let opts = SweepOptions {
        bundle: bundle(name),
        grid: default_grid(),
        target_accuracy: target,
        tau: None,
    };
    cmd_sweep(&opts).unwrap().report.results
}

fn route_opts(name: &str) -> RouteOptions {
    RouteOptions {
        bundle: bundle(name),
        taus: Vec::new(),
        grid: default_grid(),
        target_accuracy: 0.95,
        trigger_delta: 0.2,
        batch: None,
    }
}

/// Writes a bundle of two identical one-hot models.
fn strict_bundle(dir: &Path) {
    fs::write(
        dir.join("manifest.toml"),
        "label_universe = [\"a\", \"b\"]\n\n[[models]]\nid = \"p\"\ntarget = [\"a\", \"b\"]\npredictions = \"p.csv\"\n\n\
         [[models]]\nid = \"q\"\ntarget = [\"a\", \"b\"]\npredictions = \"p.csv\"\n",
    )
    .unwrap();
    fs::write(dir.join("p.csv"), "sample_id,p_a,p_b\nx,1,0\ny,0,1\n").unwrap();
}

#[test]
fn validate_reports_zero_violations_on_fixtures() {
    for name in ["two_point", "labeled"] {
        let outcome = cmd_validate(&fixture(name)).unwrap();
        assert_eq!(outcome.status, Status::Success);
        assert_eq!(outcome.report.results["violations"], Value::Array(vec![]));
    }
}

#[test]
fn two_point_entropies_match_the_hand_formula() {
    let r = entropy("two_point");
    let h = |i: usize| r["samples"][i]["entropy"].as_f64().unwrap();
    // -(0.6 log2 0.6 + 0.4 log2 0.4) and the ordered-pair mean for (0.95, 0.05) / (0.25, 0.75).
    assert_abs_diff_eq!(h(0), 0.970951, epsilon = 1e-6);
    assert_abs_diff_eq!(h(1), 1.569593, epsilon = 1e-6);
    assert!(h(1) > h(0));
    assert_eq!(r["truth_cross_entropy"], Value::Null);
    assert_eq!(r["pairs"].as_array().unwrap().len(), 2);
}

#[test]
fn strict_identical_bundle_has_zero_total() {
    let dir = tempfile::tempdir().unwrap();
    strict_bundle(dir.path());
    let opts = EntropyOptions {
        bundle: BundleOptions {
            bundle: dir.path().to_owned(),
            epsilon_floor: None,
        },
        include_complement: true,
        require_truth: false,
    };
    let r = cmd_entropy(&opts).unwrap().report.results;
    assert_eq!(r["total_entropy"].as_f64(), Some(0.0));
    assert_eq!(r["infinite_samples"], Value::Array(vec![]));
}

#[test]
fn disagreeing_one_hots_are_flagged_infinite() {
    let dir = tempfile::tempdir().unwrap();
    strict_bundle(dir.path());
    fs::write(dir.path().join("q.csv"), "sample_id,p_a,p_b\nx,0,1\ny,0,1\n").unwrap();
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        manifest.replace("id = \"q\"\ntarget = [\"a\", \"b\"]\npredictions = \"p.csv\"", "id = \"q\"\ntarget = [\"a\", \"b\"]\npredictions = \"q.csv\""),
    )
    .unwrap();
    let mut opts = EntropyOptions {
        bundle: BundleOptions {
            bundle: dir.path().to_owned(),
            epsilon_floor: None,
        },
        ..EntropyOptions::default()
    };
    let r = cmd_entropy(&opts).unwrap().report.results;
    assert_eq!(r["samples"][0]["entropy"], "+inf");
    assert_eq!(r["samples"][0]["infinite"], true);
    assert_eq!(r["infinite_samples"], serde_json::json!(["x"]));
    assert_eq!(r["total_entropy"], "+inf");

    opts.bundle.epsilon_floor = Some(1e-12);
    let floored = cmd_entropy(&opts).unwrap().report.results;
    assert!(floored["samples"][0]["entropy"].as_f64().unwrap().is_finite());
}

#[test]
fn truth_request_on_unlabeled_bundle_is_a_no_labels_error() {
    let opts = EntropyOptions {
        bundle: bundle("two_point"),
        include_complement: false,
        require_truth: true,
    };
    let err = cmd_entropy(&opts).unwrap_err();
    assert!(matches!(err, CliError::NoLabels));
    assert!(err.to_string().starts_with("no-labels"));
    assert_eq!(err.status(), Status::Validation);
}

#[test]
fn labeled_entropy_reports_truth_terms() {
    let r = entropy("labeled");
    assert!(r["truth_cross_entropy"]["with_complement"].as_f64().unwrap() > 0.0);
    assert!(r["samples"][5]["truth_cross_entropy"].as_f64().is_some());
}

#[test]
fn sweep_endpoints_and_monotone_coverage() {
    let r = sweep("labeled", 0.95);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 141);
    assert_eq!(rows[0]["core_coverage"].as_f64(), Some(0.0));
    assert_eq!(rows[140]["core_coverage"].as_f64(), Some(1.0));
    let coverage: Vec<f64> = rows.iter().map(|row| row["core_coverage"].as_f64().unwrap()).collect();
    assert!(coverage.windows(2).all(|w| w[0] <= w[1]));
    assert!(r["selected_tau"].as_f64().is_some());
}

#[test]
fn unreachable_target_signals_annihilation() {
    let r = sweep("labeled", 1.01);
    assert_eq!(r["selected_tau"], Value::Null);
    assert_eq!(r["annihilate"], true);
}

#[test]
fn sweep_without_labels_is_a_no_labels_error() {
    let opts = SweepOptions {
        bundle: bundle("two_point"),
        grid: default_grid(),
        target_accuracy: 0.9,
        tau: None,
    };
    assert!(matches!(cmd_sweep(&opts), Err(CliError::NoLabels)));
}

#[test]
fn evaluated_threshold_matches_its_sweep_row() {
    let mut opts = SweepOptions {
        bundle: bundle("labeled"),
        grid: default_grid(),
        target_accuracy: 0.95,
        tau: None,
    };
    let selected = cmd_sweep(&opts).unwrap().report.results["selected_tau"].as_f64().unwrap();
    opts.tau = Some(selected);
    let r = cmd_sweep(&opts).unwrap().report.results;
    let row = r["rows"].as_array().unwrap().iter().find(|row| row["tau"].as_f64() == Some(selected)).unwrap();
    assert_eq!(&r["evaluated"], row);
}

#[test]
fn single_generation_route_passes_the_average_through() {
    let opts = route_opts("two_point");
    let r = cmd_route(&opts).unwrap().report.results;
    let e = Bundle::load(&fixture("two_point")).unwrap().ensemble("e").unwrap();
    for (i, row) in r["samples"].as_array().unwrap().iter().enumerate() {
        assert_eq!(row["generation"], 0);
        let avg = e.average_at(i);
        for label in ["a", "b"] {
            assert_eq!(row["prediction"][label].as_f64(), Some(avg.prob(label)));
        }
    }
    assert_eq!(r["accuracy"], Value::Null);
}

#[test]
fn routing_accounting_identity_holds() {
    let r = cmd_route(&route_opts("labeled")).unwrap().report.results;
    assert!(r["accounting_residual"].as_f64().unwrap().abs() <= 1e-12);
    let gens = r["generations"].as_array().unwrap();
    let handled: u64 = gens.iter().map(|g| g["handled"].as_u64().unwrap()).sum();
    assert_eq!(handled, 6);
    let coverage: f64 = gens.iter().map(|g| g["coverage"].as_f64().unwrap()).sum();
    assert_abs_diff_eq!(coverage, 1.0, epsilon = 1e-12);
}

#[test]
fn explicit_thresholds_route_everything_to_the_last_generation() {
    let mut opts = route_opts("labeled");
    opts.taus = vec![0.0];
    let r = cmd_route(&opts).unwrap().report.results;
    assert!(r["samples"].as_array().unwrap().iter().all(|s| s["generation"] == 1));
    assert_eq!(r["generations"][0]["threshold_source"], "flag");

    opts.taus = vec![0.5, 0.5, 0.5];
    assert!(matches!(cmd_route(&opts), Err(CliError::Invalid(_))));
}

#[test]
fn route_honours_a_batch_file() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.txt");
    fs::write(&batch, "sample_id\ns2\ns5\n").unwrap();
    let mut opts = route_opts("labeled");
    opts.batch = Some(batch.clone());
    let r = cmd_route(&opts).unwrap().report.results;
    assert_eq!(r["samples"].as_array().unwrap().len(), 2);

    fs::write(&batch, "\n").unwrap();
    let err = cmd_route(&opts).unwrap_err();
    assert!(matches!(err, CliError::NoData));
    assert!(err.to_string().starts_with("no-data"));
}

#[test]
fn verify_laws_default_run_passes_and_is_reproducible() {
    let a = cmd_verify_laws(LawScope::All, 0, 100).unwrap();
    assert_eq!(a.status, Status::Success);
    assert_eq!(a.report.results["passed"], true);
    let b = cmd_verify_laws(LawScope::All, 0, 100).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.seed, Some(0));
}

#[test]
fn verify_laws_rejects_zero_trials() {
    let err = cmd_verify_laws(LawScope::All, 0, 0).err().unwrap();
    assert_eq!(err.status(), Status::Validation);
}

#[test]
fn reports_are_deterministic() {
    let a = cmd_route(&route_opts("labeled")).unwrap().report.to_json();
    let b = cmd_route(&route_opts("labeled")).unwrap().report.to_json();
    assert_eq!(a, b);
}

fn small_simulation(out: &Path, seed: u64) -> SimulateOptions {
    let dir = out.join("config");
    fs::create_dir_all(&dir).unwrap();
    let config = dir.join("small.toml");
    fs::write(
        &config,
        "[scenario]\ntrain_per_env = 60\nvalidation_per_env = 60\ntest_per_env = 60\nbase_models = 2\n\
         specialists = 2\nout_of_core_models = 2\nbase_epochs = 30\nspecialist_epochs = 20\nout_of_core_epochs = 30\n\n\
         [learning]\nsamples = 30\nmodels = 2\n",
    )
    .unwrap();
    SimulateOptions {
        config: Some(config),
        seed: Some(seed),
        out: out.join("run"),
        ..SimulateOptions::default()
    }
}

#[test]
fn simulate_writes_artifacts_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cmd_simulate(&small_simulation(a.path(), 7)).unwrap();
    cmd_simulate(&small_simulation(b.path(), 7)).unwrap();
    assert_eq!(first.status, Status::Success);
    assert_eq!(first.report.seed, Some(7));
    for file in [
        "report.json",
        "summary.json",
        "scenario_log.json",
        "learning_log.json",
        "config.toml",
        "sweeps/union.csv",
    ] {
        let x = fs::read(a.path().join("run").join(file)).unwrap();
        let y = fs::read(b.path().join("run").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
    let other = tempfile::tempdir().unwrap();
    let third = cmd_simulate(&small_simulation(other.path(), 8)).unwrap();
    assert_ne!(first.report.config_hash, third.report.config_hash);
}

#[test]
fn simulate_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[scenario]\nbogus = 1\n").unwrap();
    let opts = SimulateOptions {
        config: Some(config),
        out: dir.path().join("run"),
        ..SimulateOptions::default()
    };
    assert!(matches!(cmd_simulate(&opts), Err(CliError::Invalid(_))));
}

#[test]
fn default_simulation_routes_better_than_the_naive_average() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SimulateOptions {
        out: dir.path().to_owned(),
        ..SimulateOptions::default()
    };
    let outcome = cmd_simulate(&opts).unwrap();
    assert_eq!(outcome.status, Status::Success);
    let comparisons = &outcome.report.results["summary"]["scenario"]["comparisons"];
    assert_eq!(comparisons["strong_coverage_drops_after_immunization"], true);
    assert!(comparisons["union_routed_gain_over_all_average"].as_f64().unwrap() >= 0.05);
    assert_eq!(comparisons["routed_memory_below_immunized"], true);
    assert_eq!(outcome.report.results["log_invariants_hold"], true);
}
