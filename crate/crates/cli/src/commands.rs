//! One function per subcommand. Each returns the report and the exit status
//! it implies; reading and writing of report files is left to the caller.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use logifold_core::cores::{self, SweepCurve, SweepRow};
use logifold_core::ensemble::pairwise_cross_entropy;
use logifold_core::laws::{verify_laws, LawReport, LawScope};
use logifold_core::lifelong::system::weighted_accuracy;
use logifold_core::lifelong::{
    derive_seed, evaluate_p, imm_route, memory_i, run_immunization_scenario, run_learning_process, separable_fixture,
    FeatureMap, FeatureTable, LearningLog, LearningSchedule, LogifoldSystem, ScenarioConfig, ScenarioLog, ToyLearner,
};
use logifold_core::simplex::argmax_label;
use logifold_core::{Dist, SampleSpace, SampleSubset};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bundle::Bundle;
use crate::report::{num, opt_num, Report};
use crate::{CliError, Result, Status};

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub status: Status,
}

impl Outcome {
    fn ok(report: Report) -> Self {
        Self {
            report,
            status: Status::Success,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BundleOptions {
    pub bundle: PathBuf,
    pub epsilon_floor: Option<f64>,
}

impl BundleOptions {
    fn load(&self) -> Result<(Bundle, String)> {
        let (bundle, fingerprint) = Bundle::load_with_fingerprint(&self.bundle)?;
        match self.epsilon_floor {
            None => Ok((bundle, fingerprint)),
            Some(eps) if eps > 0.0 && eps < 1.0 => Ok((bundle.floored(eps), fingerprint)),
            Some(eps) => Err(CliError::Invalid(format!("epsilon floor must lie in (0, 1), got {eps}"))),
        }
    }

    fn config(&self, fingerprint: &str) -> Value {
        json!({ "bundle": fingerprint, "epsilon_floor": self.epsilon_floor })
    }
}

/// Parses `lo:hi:step` or a comma-separated list of thresholds.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Invalid(format!("invalid grid `{spec}`"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if let [lo, hi, step] = spec.split(':').collect::<Vec<_>>()[..] {
        let (lo, hi, step) = (parse(lo)?, parse(hi)?, parse(step)?);
        if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=count).map(|i| lo + i as f64 * step).collect()
    } else {
        spec.split(',').map(parse).collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(CliError::Invalid(format!("grid `{spec}` must be nonempty and strictly increasing")));
    }
    Ok(grid)
}

pub fn cmd_validate(bundle: &Path) -> Result<Outcome> {
    let inspection = Bundle::inspect(bundle)?;
    let (samples, models, labeled) = match &inspection.bundle {
        Some(b) => (Some(b.space.len()), Some(b.models.len()), Some(b.space.has_truth())),
        None => (None, None, None),
    };
    let results = json!({
        "valid": inspection.violations.is_empty(),
        "samples": samples,
        "models": models,
        "labeled": labeled,
        "violations": inspection.violations,
    });
    let report = Report::new("validate", &json!({ "bundle": inspection.fingerprint }), None, results);
    let status = if inspection.violations.is_empty() {
        Status::Success
    } else {
        Status::Validation
    };
    Ok(Outcome { report, status })
}

#[derive(Debug, Clone, Default)]
pub struct EntropyOptions {
    pub bundle: BundleOptions,
    pub include_complement: bool,
    /// Fail instead of omitting truth terms when the bundle is unlabeled.
    pub require_truth: bool,
}

pub fn cmd_entropy(opts: &EntropyOptions) -> Result<Outcome> {
    let (bundle, fingerprint) = opts.bundle.load()?;
    let space = &bundle.space;
    if opts.require_truth && !space.has_truth() {
        return Err(CliError::NoLabels);
    }
    let e = bundle.ensemble("bundle")?;
    let mut samples = Vec::new();
    let mut infinite = Vec::new();
    for i in 0..space.len() {
        let p = e.pointwise_at(i);
        if p.entropy.is_infinite() {
            infinite.push(p.sample_id.clone());
        }
        let truth = if space.has_truth() && p.in_knowledge_domain {
            num(e.truth_entropy_at(i)?)
        } else {
            Value::Null
        };
        samples.push(json!({
            "sample_id": p.sample_id,
            "entropy": num(p.entropy),
            "covering": p.covering,
            "in_knowledge_domain": p.in_knowledge_domain,
            "infinite": p.entropy.is_infinite(),
            "truth_cross_entropy": truth,
        }));
    }
    let mut pairs = Vec::new();
    for left in e.members() {
        for right in e.members().iter().filter(|m| m.id() != left.id()) {
            pairs.push(json!({
                "left": left.id(),
                "right": right.id(),
                "cross_entropy": num(pairwise_cross_entropy(left, right)?),
            }));
        }
    }
    let truth = if space.has_truth() {
        json!({
            "with_complement": num(e.truth_total_cross_entropy(true)?),
            "without_complement": num(e.truth_total_cross_entropy(false)?),
        })
    } else {
        Value::Null
    };
    let results = json!({
        "samples": samples,
        "total_entropy": num(e.total_entropy(opts.include_complement)),
        "total_entropy_with_complement": num(e.total_entropy(true)),
        "total_entropy_without_complement": num(e.total_entropy(false)),
        "pairs": pairs,
        "truth_cross_entropy": truth,
        "infinite_samples": infinite,
    });
    let config = json!({
        "input": opts.bundle.config(&fingerprint),
        "include_complement": opts.include_complement,
        "require_truth": opts.require_truth,
    });
    Ok(Outcome::ok(Report::new("entropy", &config, None, results)))
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub bundle: BundleOptions,
    pub grid: Vec<f64>,
    pub target_accuracy: f64,
    pub tau: Option<f64>,
}

fn row_json(row: &SweepRow) -> Value {
    json!({
        "tau": num(row.tau),
        "core_coverage": num(row.core_coverage),
        "core_accuracy": opt_num(row.core_accuracy),
        "outcore_accuracy": opt_num(row.outcore_accuracy),
        "core_count": row.core_count,
    })
}

fn curve_json(curve: &SweepCurve) -> Value {
    Value::Array(curve.rows.iter().map(row_json).collect())
}

/// CSV form of a sweep curve; absent accuracies are empty cells.
pub fn curve_csv(curve: &SweepCurve) -> String {
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("tau,core_coverage,core_accuracy,outcore_accuracy,core_count\n");
    for r in &curve.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.tau,
            r.core_coverage,
            cell(r.core_accuracy),
            cell(r.outcore_accuracy),
            r.core_count
        ));
    }
    out
}

pub fn cmd_sweep(opts: &SweepOptions) -> Result<Outcome> {
    let (bundle, fingerprint) = opts.bundle.load()?;
    let e = bundle.ensemble("bundle")?;
    let curve = cores::threshold_sweep(&e, &opts.grid)?;
    let selected = cores::select_threshold(&curve, opts.target_accuracy)?;
    let evaluated = match opts.tau {
        Some(tau) => row_json(&cores::evaluate_threshold(&e, &bundle.space.full_subset(), tau)?),
        None => Value::Null,
    };
    let results = json!({
        "rows": curve_json(&curve),
        "target_accuracy": opts.target_accuracy,
        "selected_tau": opt_num(selected),
        "annihilate": selected.is_none(),
        "theoretical_bound": cores::theoretical_bound(bundle.space.universe().len()),
        "evaluated": evaluated,
    });
    let config = json!({
        "input": opts.bundle.config(&fingerprint),
        "grid": opts.grid,
        "target_accuracy": opts.target_accuracy,
        "tau": opts.tau,
    });
    Ok(Outcome::ok(Report::new("sweep", &config, None, results)))
}

#[derive(Debug, Clone)]
pub struct RouteOptions {
    pub bundle: BundleOptions,
    /// Thresholds of the first generations, in order.
    pub taus: Vec<f64>,
    pub grid: Vec<f64>,
    pub target_accuracy: f64,
    pub trigger_delta: f64,
    /// File of sample ids, one per line; the whole space when absent.
    pub batch: Option<PathBuf>,
}

fn read_batch(path: &Path, space: &SampleSpace) -> Result<(SampleSubset, String)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let ids: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != "sample_id")
        .collect();
    let subset = space.subset(ids)?;
    Ok((subset, text))
}

fn dist_json(d: &Dist) -> Value {
    let map: Map<String, Value> = d.support().iter().zip(d.probs()).map(|(l, &p)| (l.to_owned(), num(p))).collect();
    Value::Object(map)
}

pub fn cmd_route(opts: &RouteOptions) -> Result<Outcome> {
    let (bundle, fingerprint) = opts.bundle.load()?;
    let space = bundle.space.clone();
    let (batch, batch_text) = match &opts.batch {
        Some(path) => {
            let (b, text) = read_batch(path, &space)?;
            (b, Some(text))
        }
        None => (space.full_subset(), None),
    };
    if batch.is_empty() {
        return Err(CliError::NoData);
    }
    let groups = bundle.generations();
    if opts.taus.len() > groups.len() {
        return Err(CliError::Invalid(format!(
            "{} threshold(s) given for {} generation(s)",
            opts.taus.len(),
            groups.len()
        )));
    }
    let mut ensembles = groups
        .into_iter()
        .enumerate()
        .map(|(g, members)| logifold_core::Ensemble::new(format!("generation-{g}"), space.clone(), members));
    let first = ensembles.next().expect("at least one generation")?;
    let mut sys = LogifoldSystem::new(first, opts.trigger_delta, opts.target_accuracy)?;
    for e in ensembles {
        sys = sys.push_generation(e?)?;
    }
    let full = space.full_subset();
    let mut sources = Vec::new();
    for g in 0..sys.generations().len() {
        let source = if let Some(&tau) = opts.taus.get(g) {
            sys = sys.with_threshold(g, tau, &full)?;
            "flag"
        } else if space.has_truth() {
            sys = sys.select_threshold(g, &full, &full, &opts.grid)?.0;
            if sys.generation(g)?.threshold.is_some() {
                "selected"
            } else {
                "none"
            }
        } else {
            "none"
        };
        sources.push(source);
    }

    let mut samples = Vec::new();
    for i in batch.indices() {
        let routed = imm_route(&sys, i)?;
        let top = argmax_label(&routed.dist);
        let predicted = routed.dist.support().get(top.index).unwrap().to_owned();
        let mut row = json!({
            "sample_id": space.id(i),
            "generation": routed.generation,
            "prediction": dist_json(&routed.dist),
            "label": predicted,
            "tie": top.tie,
        });
        if space.has_truth() {
            let truth = space.truth_label(i)?;
            row["truth"] = json!(truth);
            row["correct"] = json!(truth == predicted);
        }
        samples.push(row);
    }

    let mass = space.measure(&batch)?;
    let partition = sys.routing_partition(&batch)?;
    let mut generations = Vec::new();
    let mut weighted = 0.0;
    for (g, handled) in &partition {
        let generation = sys.generation(*g)?;
        let coverage = space.measure(handled)? / mass;
        let accuracy = if space.has_truth() && !handled.is_empty() {
            let a = weighted_accuracy(&space, handled, |i| imm_route(&sys, i).map(|r| r.dist))?;
            weighted += coverage * a;
            Some(a)
        } else {
            None
        };
        generations.push(json!({
            "index": g,
            "models": generation.ensemble.members().iter().map(|m| m.id()).collect::<Vec<_>>(),
            "threshold": opt_num(generation.threshold),
            "threshold_source": sources[*g],
            "handled": handled.count(),
            "coverage": num(coverage),
            "accuracy": opt_num(accuracy),
        }));
    }
    let (accuracy, residual) = if space.has_truth() {
        let p = evaluate_p(&sys, &batch)?;
        (Some(p), Some(p - weighted))
    } else {
        (None, None)
    };
    let results = json!({
        "samples": samples,
        "generations": generations,
        "accuracy": opt_num(accuracy),
        "accounting_residual": opt_num(residual),
        "memory": num(memory_i(&sys, &batch)?),
    });
    let config = json!({
        "input": opts.bundle.config(&fingerprint),
        "taus": opts.taus,
        "grid": opts.grid,
        "target_accuracy": opts.target_accuracy,
        "trigger_delta": opts.trigger_delta,
        "batch": batch_text,
    });
    Ok(Outcome::ok(Report::new("route", &config, None, results)))
}

/// Learning-law run on the separable fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub samples: usize,
    pub models: usize,
    pub learning_rate: f64,
    pub schedule: LearningSchedule,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            samples: 90,
            models: 3,
            learning_rate: 1.0,
            schedule: LearningSchedule::default(),
        }
    }
}

/// Contents of the `simulate` config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: ScenarioConfig,
    pub learning: LearningConfig,
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub union_with_clean: Option<bool>,
    pub trigger_delta: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub out: PathBuf,
}

impl SimulateOptions {
    pub fn effective_config(&self) -> Result<SimulationConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
            }
            None => SimulationConfig::default(),
        };
        let s = &mut config.scenario;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(u) = self.union_with_clean {
            s.union_with_clean = u;
        }
        if let Some(d) = self.trigger_delta {
            s.trigger_delta = d;
        }
        if let Some(t) = self.target_accuracy {
            s.accuracy_target = t;
        }
        if let Some(g) = &self.grid {
            s.grid = g.clone();
        }
        s.validate()?;
        Ok(config)
    }
}

pub fn run_learning(config: &LearningConfig, seed: u64) -> Result<LearningLog> {
    if config.samples == 0 || config.models == 0 {
        return Err(CliError::Invalid("learning samples and models must be positive".into()));
    }
    let data = separable_fixture(config.samples, derive_seed(seed, 900));
    let labels = logifold_core::lifelong::class_labels(3);
    let space = Arc::new(
        SampleSpace::uniform(data.ids(), labels.clone())?.with_truth(data.samples.iter().map(|s| s.label.as_str()))?,
    );
    let features = FeatureTable::from_batches([&data]);
    let dim = data.samples[0].features.len();
    let learners = (0..config.models)
        .map(|k| {
            ToyLearner::new(
                dim,
                labels.clone(),
                FeatureMap::Identity,
                config.learning_rate,
                derive_seed(seed, 901 + k as u64),
            )
        })
        .collect::<logifold_core::Result<Vec<_>>>()?;
    Ok(run_learning_process(space, &features, learners, &config.schedule)?)
}

fn scenario_summary(log: &ScenarioLog) -> Value {
    let cells: Vec<Value> = log
        .fixed_threshold
        .cells
        .iter()
        .map(|c| {
            json!({
                "ensemble": c.ensemble,
                "environment": c.environment,
                "coverage": num(c.coverage),
                "core_accuracy": opt_num(c.core_accuracy),
            })
        })
        .collect();
    let environments: Vec<Value> = log
        .environments
        .iter()
        .map(|r| {
            json!({
                "environment": r.environment,
                "threshold": opt_num(r.threshold),
                "triggered": r.change.triggered,
                "spawned": r.spawned,
                "accuracy_base": num(r.accuracy_base),
                "accuracy_immunized": num(r.accuracy_immunized),
                "accuracy_all_average": num(r.accuracy_all_average),
                "accuracy_routed": num(r.accuracy_routed),
                "memory_immunized": num(r.memory_immunized),
                "memory_routed": num(r.memory_routed),
            })
        })
        .collect();
    let coverage = |ensemble: &str| log.fixed_threshold.cell(ensemble, "strong").map(|c| c.coverage);
    let union = log.environment("union");
    let noisy: Vec<_> = log.environments.iter().filter(|r| r.environment != "clean").collect();
    json!({
        "fixed_threshold_tau": num(log.fixed_threshold.tau),
        "detection_threshold": num(log.detection_threshold),
        "coverage_table": cells,
        "environments": environments,
        "comparisons": {
            "strong_coverage_drops_after_immunization": match (coverage("immunized"), coverage("base")) {
                (Some(u1), Some(u0)) => Some(u1 < u0),
                _ => None,
            },
            "union_routed_gain_over_all_average": union.map(|u| num(u.accuracy_routed - u.accuracy_all_average)),
            "routed_memory_below_immunized": noisy.iter().all(|r| r.memory_routed < r.memory_immunized),
        },
    })
}

fn learning_summary(log: &LearningLog) -> Value {
    let last = log.last();
    json!({
        "steps": log.records.len(),
        "stop": log.stop,
        "final_truth_cross_entropy": num(last.truth_cross_entropy),
        "final_total_entropy": num(last.total_entropy),
        "cross_entropy_strictly_decreasing": log.cross_entropy_strictly_decreasing(),
        "domain_nondecreasing": log.domain_nondecreasing(),
        "entropy_reaches_final_from_above": log.entropy_reaches_final_from_above(),
    })
}

/// Runs the learning process and the two-environment scenario and writes
/// logs, sweep tables and a summary under `opts.out`.
pub fn cmd_simulate(opts: &SimulateOptions) -> Result<Outcome> {
    let config = opts.effective_config()?;
    let seed = config.scenario.seed;
    let learning = run_learning(&config.learning, seed)?;
    let scenario = run_immunization_scenario(&config.scenario)?.log;

    let out = &opts.out;
    let write = |name: &str, contents: &str| -> Result<()> {
        let path = out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    };
    let config_toml = toml::to_string_pretty(&config)
        .map_err(|e| CliError::Invalid(format!("config does not serialize: {e}")))?;
    write("config.toml", &config_toml)?;
    write("scenario_log.json", &(scenario.to_json() + "\n"))?;
    write(
        "learning_log.json",
        &(serde_json::to_string_pretty(&learning).expect("log serializes") + "\n"),
    )?;
    let mut sweeps = Vec::new();
    for r in &scenario.environments {
        let name = format!("sweeps/{}.csv", r.environment);
        write(&name, &curve_csv(&r.sweep))?;
        sweeps.push(name);
    }
    let summary = json!({
        "learning": learning_summary(&learning),
        "scenario": scenario_summary(&scenario),
    });
    write(
        "summary.json",
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;

    let invariants_hold = learning.cross_entropy_strictly_decreasing() && learning.domain_nondecreasing();
    let results = json!({
        "summary": summary,
        "artifacts": {
            "config": "config.toml",
            "scenario_log": "scenario_log.json",
            "learning_log": "learning_log.json",
            "summary": "summary.json",
            "sweeps": sweeps,
        },
        "log_invariants_hold": invariants_hold,
    });
    let config_value = serde_json::to_value(&config).expect("config serializes");
    let report = Report::new("simulate", &config_value, Some(seed), results);
    write("report.json", &report.to_json())?;
    Ok(Outcome {
        report,
        status: if invariants_hold {
            Status::Success
        } else {
            Status::PropertyViolation
        },
    })
}

fn law_json(r: &LawReport) -> Value {
    json!({
        "law": r.law,
        "trials": r.trials,
        "violations": r.violations,
        "max_discrepancy": num(r.max_discrepancy),
        "checked_points": r.checked_points,
        "first_violation": r.first_violation,
        "passed": r.passed(),
    })
}

pub fn cmd_verify_laws(scope: LawScope, seed: u64, trials: usize) -> Result<Outcome> {
    let reports = verify_laws(scope, seed, trials)?;
    let passed = reports.iter().all(LawReport::passed);
    let results = json!({
        "passed": passed,
        "laws": reports.iter().map(law_json).collect::<Vec<_>>(),
    });
    let config = json!({ "scope": scope, "trials": trials });
    Ok(Outcome {
        report: Report::new("verify-laws", &config, Some(seed), results),
        status: if passed {
            Status::Success
        } else {
            Status::PropertyViolation
        },
    })
}
