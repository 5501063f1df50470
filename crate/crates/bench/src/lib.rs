//! Deterministic fixtures for the benchmarks.

use std::sync::Arc;

use logifold_core::{Dist, Ensemble, LabelSet, Model, SampleSpace};

/// Pseudo-random value in `(0, 1)` from a pair of indices.
fn jitter(a: usize, b: usize) -> f64 {
    let x = ((a * 7919 + b * 104_729) as f64 * 0.618_033_988_749_895).fract();
    0.05 + 0.9 * x
}

/// `samples` uniform samples over `labels` classes, labeled round robin, with
/// `models` members that each skip every `models`-th sample.
pub fn ensemble(samples: usize, labels: usize, models: usize) -> Ensemble {
    let universe = LabelSet::new((0..labels).map(|i| format!("y{i}"))).unwrap();
    let ids: Vec<String> = (0..samples).map(|i| format!("x{i}")).collect();
    let truth: Vec<String> = (0..samples).map(|i| format!("y{}", i % labels)).collect();
    let space = Arc::new(
        SampleSpace::uniform(ids, universe.clone())
            .unwrap()
            .with_truth(truth)
            .unwrap(),
    );
    let members = (0..models)
        .map(|m| {
            let table = (0..samples)
                .map(|i| {
                    if models > 1 && i % models == m {
                        return None;
                    }
                    let mut raw: Vec<f64> = (0..labels).map(|a| jitter(i * models + m, a)).collect();
                    raw[i % labels] += 2.0;
                    let total: f64 = raw.iter().sum();
                    Some(Dist::new(universe.clone(), raw.iter().map(|v| v / total).collect()).unwrap())
                })
                .collect();
            Model::from_table(format!("m{m}"), space.clone(), universe.clone(), table).unwrap()
        })
        .collect();
    Ensemble::new("bench", space, members).unwrap()
}
