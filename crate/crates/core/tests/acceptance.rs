//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::sync::Arc;
use std::time::{Duration, Instant};

use logifold_core::cores::{self, select_threshold, theoretical_bound, threshold_sweep};
use logifold_core::laws::{verify_laws, LawReport, LawScope};
use logifold_core::lifelong::{
    class_labels, run_immunization_scenario, run_learning_process, separable_fixture, FeatureMap, FeatureTable,
    LearningSchedule, ScenarioConfig, ToyLearner,
};
use logifold_core::simplex::{cross_entropy, Dist, LabelSet};
use logifold_core::{Ensemble, Model, SampleSpace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn laws_pass(reports: &[LawReport]) -> (bool, String) {
    let pass = reports.iter().all(LawReport::passed);
    let detail = reports
        .iter()
        .map(|r| {
            format!(
                "{}: {} trials, {} violations, max {:.2e}",
                r.law, r.trials, r.violations, r.max_discrepancy
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

fn ab() -> LabelSet {
    LabelSet::new(["a", "b"]).unwrap()
}

fn d(p: &[f64]) -> Dist {
    Dist::new(ab(), p.to_vec()).unwrap()
}

/// Independent pairwise formula: mean of -Σ y log2 g over ordered pairs.
fn hand_pointwise(preds: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for y in preds {
        for g in preds {
            s -= y[0] * g[0].log2() + y[1] * g[1].log2();
        }
    }
    s / (preds.len() * preds.len()) as f64
}

fn two_point_fixture() -> Outcome {
    let space = Arc::new(SampleSpace::uniform(["x1", "x2"], ab()).unwrap());
    let f1 = Model::new("f1", space.clone(), ab(), [("x1", d(&[0.6, 0.4])), ("x2", d(&[0.95, 0.05]))]).unwrap();
    let f2 = Model::new("f2", space.clone(), ab(), [("x1", d(&[0.6, 0.4])), ("x2", d(&[0.25, 0.75]))]).unwrap();
    let e = Ensemble::new("U", space, vec![f1, f2]).unwrap();
    let avg1 = e.average_function("x1").unwrap();
    let avg2 = e.average_function("x2").unwrap();
    let h1 = e.pointwise_entropy("x1").unwrap().entropy;
    let h2 = e.pointwise_entropy("x2").unwrap().entropy;
    let o1 = hand_pointwise(&[[0.6, 0.4], [0.6, 0.4]]);
    let o2 = hand_pointwise(&[[0.95, 0.05], [0.25, 0.75]]);
    let pass = avg1 == avg2
        && avg1.probs() == [0.6, 0.4]
        && (h1 - o1).abs() <= 1e-6
        && (h2 - o2).abs() <= 1e-6
        && (h1 - 0.970951).abs() <= 1e-6
        && (h2 - 1.569593).abs() <= 1e-6
        && h2 > h1;
    check(pass, format!("averages equal {:?}; H_x1 = {h1:.6}, H_x2 = {h2:.6}", avg1.probs()))
}

fn conservation() -> Outcome {
    let (pass, detail) = laws_pass(&verify_laws(LawScope::Conservation, 1, 100).unwrap());
    check(pass, detail)
}

fn strictness() -> Outcome {
    let (pass, detail) = laws_pass(&verify_laws(LawScope::Strictness, 2, 100).unwrap());
    check(pass, detail)
}

fn non_fuzzy() -> Outcome {
    let reports = verify_laws(LawScope::Cores, 3, 200).unwrap();
    let limit = reports.iter().find(|r| r.law.starts_with("non-fuzzy")).unwrap();
    check(
        limit.passed() && limit.checked_points > 0,
        format!(
            "{} ensembles, {} core samples checked, {} violations",
            limit.trials, limit.checked_points, limit.violations
        ),
    )
}

fn core_machinery() -> Outcome {
    let reports = verify_laws(LawScope::Cores, 4, 100).unwrap();
    let nesting = reports.iter().find(|r| r.law == "core nesting").unwrap();
    let mut monotone = true;
    let mut round_trip = true;
    let mut endpoints = true;
    for seed in 0..50u64 {
        let (e, _) = random_labeled_ensemble(seed);
        let curve = threshold_sweep(&e, &cores::default_grid()).unwrap();
        monotone &= curve.rows.windows(2).all(|w| w[0].core_coverage <= w[1].core_coverage);
        endpoints &= curve.rows[0].core_coverage == 0.0;
        for target in [0.5, 0.8, 0.95, 1.0] {
            if let Some(tau) = select_threshold(&curve, target).unwrap() {
                let row = cores::evaluate_threshold(&e, &e.space().full_subset(), tau).unwrap();
                round_trip &= Some(&row) == curve.row_at(tau) && row.core_accuracy.is_some_and(|a| a >= target);
            }
        }
    }
    let bound = theoretical_bound(10);
    let pass = nesting.passed() && monotone && round_trip && endpoints && (bound - 0.176091).abs() <= 1e-6;
    check(
        pass,
        format!(
            "nesting {} trials ok={}, coverage monotone={monotone}, round trip={round_trip}, bound(10) = {bound:.6}",
            nesting.trials,
            nesting.passed()
        ),
    )
}

/// Small labeled ensemble with varied agreement, for sweep checks.
fn random_labeled_ensemble(seed: u64) -> (Ensemble, u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let y = LabelSet::new(["a", "b", "c"]).unwrap();
    let n = 30;
    let truth: Vec<&str> = (0..n).map(|_| ["a", "b", "c"][rng.random_range(0..3)]).collect();
    let space = Arc::new(
        SampleSpace::uniform((0..n).map(|i| format!("x{i}")), y.clone())
            .unwrap()
            .with_truth(truth.iter().copied())
            .unwrap(),
    );
    let members = (0..3)
        .map(|k| {
            let table = (0..n)
                .map(|i| {
                    let sharp = rng.random_range(0.0..6.0);
                    let hit = rng.random::<f64>() < 0.8;
                    let label = if hit { y.index_of(truth[i]).unwrap() } else { rng.random_range(0..3) };
                    let mut logits = [0.0; 3];
                    logits[label] = sharp;
                    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
                    Some(Dist::new(y.clone(), logits.iter().map(|l| l.exp() / z).collect()).unwrap())
                })
                .collect();
            Model::from_table(format!("m{k}"), space.clone(), y.clone(), table).unwrap()
        })
        .collect();
    (Ensemble::new("E", space, members).unwrap(), seed)
}

fn learning_law() -> Outcome {
    let data = separable_fixture(90, 5);
    let labels = class_labels(3);
    let space = Arc::new(
        SampleSpace::uniform(data.ids(), labels.clone())
            .unwrap()
            .with_truth(data.samples.iter().map(|s| s.label.as_str()))
            .unwrap(),
    );
    let features = FeatureTable::from_batches([&data]);
    let learners = (0..3)
        .map(|s| ToyLearner::new(5, labels.clone(), FeatureMap::Identity, 1.0, s).unwrap())
        .collect();
    let log = run_learning_process(space, &features, learners, &LearningSchedule::default()).unwrap();
    let last = log.last();
    let pass = last.truth_cross_entropy < 0.01
        && last.total_entropy < 0.05
        && log.cross_entropy_strictly_decreasing()
        && log.domain_nondecreasing();
    check(
        pass,
        format!(
            "{} logged steps, final truth cross entropy {:.2e}, final total entropy {:.2e}",
            log.records.len(),
            last.truth_cross_entropy,
            last.total_entropy
        ),
    )
}

fn immunization() -> Outcome {
    let config = ScenarioConfig::default();
    let first = run_immunization_scenario(&config).unwrap().log;
    let second = run_immunization_scenario(&config).unwrap().log;
    let table = &first.fixed_threshold;
    let u0 = table.cell("base", "strong").unwrap().coverage;
    let u1 = table.cell("immunized", "strong").unwrap().coverage;
    let union = first.environment("union").unwrap();
    let gain = union.accuracy_routed - union.accuracy_all_average;
    let memory_ok = ["weak", "strong", "union"].iter().all(|env| {
        let r = first.environment(env).unwrap();
        r.memory_routed < r.memory_immunized
    });
    let identical = first.to_json() == second.to_json();
    let pass = u1 < u0 && gain >= 0.05 && memory_ok && identical;
    let memories = ["weak", "strong", "union"]
        .iter()
        .map(|env| {
            let r = first.environment(env).unwrap();
            format!("{env} {:.3}<{:.3}", r.memory_routed, r.memory_immunized)
        })
        .collect::<Vec<_>>()
        .join(", ");
    check(
        pass,
        format!(
            "(a) strong coverage immunized {u1:.3} < base {u0:.3}; (b) union routed {:.3} vs all-average {:.3}; (c) {memories}; (d) byte-identical={identical}",
            union.accuracy_routed, union.accuracy_all_average
        ),
    )
}

fn numerical_hygiene() -> Outcome {
    let gradient = verify_laws(LawScope::Gradient, 8, 50).unwrap();
    let gibbs = verify_laws(LawScope::Gibbs, 9, 1000).unwrap();
    let (laws_ok, detail) = laws_pass(&[gradient, gibbs].concat());

    let one_a = d(&[1.0, 0.0]);
    let one_b = d(&[0.0, 1.0]);
    let mut infinities = cross_entropy(&one_a, &one_b, 2).unwrap() == f64::INFINITY;
    infinities &= cross_entropy(&one_b, &one_a, 2).unwrap() == f64::INFINITY;
    infinities &= cross_entropy(&one_a, &d(&[0.5, 0.5]), 2).unwrap().is_finite();

    let space = Arc::new(SampleSpace::uniform(["x"], ab()).unwrap().with_truth(["a"]).unwrap());
    let zero_on_truth = Model::new("m", space.clone(), ab(), [("x", one_b.clone())]).unwrap();
    infinities &= zero_on_truth.truth_cross_entropy(true).unwrap() == f64::INFINITY;
    let narrow = LabelSet::new(["b"]).unwrap();
    let outside = Model::new("n", space.clone(), narrow.clone(), [("x", Dist::one_hot(narrow, "b").unwrap())]).unwrap();
    infinities &= outside.truth_cross_entropy(true).unwrap() == f64::INFINITY;
    let disagree = Ensemble::new(
        "E",
        space.clone(),
        vec![
            Model::new("p", space.clone(), ab(), [("x", one_a)]).unwrap(),
            Model::new("q", space.clone(), ab(), [("x", one_b)]).unwrap(),
        ],
    )
    .unwrap();
    let report = disagree.pointwise_entropy("x").unwrap();
    infinities &= report.entropy == f64::INFINITY && disagree.total_entropy(true) == f64::INFINITY;
    let finite_elsewhere = Ensemble::new(
        "F",
        space.clone(),
        vec![Model::new("r", space, ab(), [("x", d(&[0.3, 0.7]))]).unwrap()],
    )
    .unwrap()
    .total_entropy(true)
    .is_finite();
    check(
        laws_ok && infinities && finite_elsewhere,
        format!("{detail}; infinity cases flagged={infinities}"),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 8] = [
        ("1 two-point disagreement fixture", two_point_fixture, Duration::from_secs(1)),
        ("2 conservation laws", conservation, Duration::from_secs(5)),
        ("3 vanishing entropy", strictness, Duration::from_secs(5)),
        ("4 non-fuzzy limit", non_fuzzy, Duration::from_secs(10)),
        ("5 core machinery", core_machinery, Duration::MAX),
        ("6 learning-law shadow", learning_law, Duration::from_secs(30)),
        ("7 immunization scenario", immunization, Duration::from_secs(120)),
        ("8 numerical hygiene", numerical_hygiene, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < limit;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {}s)", limit.as_secs())
        };
        println!(
            "criterion {name}: {} [{:.2}s{budget}] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
