//! Randomized checks of the entropy identities.
//!
//! Each suite draws seeded random instances, evaluates an identity by two
//! independent routes and reports the worst discrepancy. The same suites back
//! the command-line `verify-laws` command and the acceptance tests.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cores::{compute_core, non_fuzzy_limit, theoretical_bound};
use crate::ensemble::Ensemble;
use crate::lifelong::derive_seed;
use crate::model::Model;
use crate::simplex::{self, Dist, LabelSet};
use crate::space::SampleSpace;
use crate::{Error, Result};

pub const CONSERVATION_TOLERANCE: f64 = 1e-9;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawScope {
    All,
    Conservation,
    Strictness,
    Cores,
    Gradient,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawReport {
    pub law: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest discrepancy seen, in the suite's own units.
    pub max_discrepancy: f64,
    /// Points that exercised the law beyond a vacuous pass.
    pub checked_points: usize,
    pub first_violation: Option<String>,
}

impl LawReport {
    fn new(law: &str, trials: usize) -> Self {
        Self {
            law: law.to_owned(),
            trials,
            violations: 0,
            max_discrepancy: 0.0,
            checked_points: 0,
            first_violation: None,
        }
    }

    fn record(&mut self, discrepancy: f64, ok: bool, describe: impl FnOnce() -> String) {
        if discrepancy.is_nan() || discrepancy > self.max_discrepancy {
            self.max_discrepancy = discrepancy;
        }
        if !ok {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs the suites selected by `scope` with `trials` instances each.
pub fn verify_laws(scope: LawScope, seed: u64, trials: usize) -> Result<Vec<LawReport>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let want = |s: LawScope| scope == LawScope::All || scope == s;
    let mut reports = Vec::new();
    if want(LawScope::Conservation) {
        reports.push(model_conservation(seed, trials)?);
        reports.push(ensemble_conservation(seed, trials)?);
    }
    if want(LawScope::Strictness) {
        reports.push(strictness_equivalence(seed, trials)?);
    }
    if want(LawScope::Cores) {
        reports.push(non_fuzzy_cores(seed, trials)?);
        reports.push(core_nesting(seed, trials)?);
    }
    if want(LawScope::Gradient) {
        reports.push(gradient_finite_differences(seed, trials)?);
    }
    if want(LawScope::Gibbs) {
        reports.push(gibbs_inequality(seed, trials)?);
    }
    Ok(reports)
}

fn rng_for(seed: u64, suite: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, suite))
}

fn universe(n: usize) -> LabelSet {
    LabelSet::new((0..n).map(|i| format!("y{i}"))).expect("distinct labels")
}

/// Interior distribution from normalized exponential draws.
pub fn random_interior(rng: &mut impl Rng, support: &LabelSet) -> Dist {
    let raw: Vec<f64> = (0..support.len())
        .map(|_| -rng.random::<f64>().max(1e-300).ln() + 1e-3)
        .collect();
    normalized(support, raw)
}

fn normalized(support: &LabelSet, raw: Vec<f64>) -> Dist {
    let sum: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
    let residue = 1.0 - probs.iter().sum::<f64>();
    let top = probs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > probs[b] { i } else { b });
    probs[top] += residue;
    Dist::new(support.clone(), probs).expect("normalized draw")
}

fn random_subset_labels(rng: &mut impl Rng, y: &LabelSet, min: usize) -> LabelSet {
    let mut labels: Vec<&str> = y.iter().collect();
    labels.shuffle(rng);
    let k = rng.random_range(min..=y.len());
    LabelSet::new(labels[..k].iter().copied()).unwrap()
}

/// Space with random weights and a truth labeling drawn from `truth_pool`.
fn random_space(rng: &mut impl Rng, n: usize, y: &LabelSet, truth_pool: &LabelSet) -> Arc<SampleSpace> {
    let ids: Vec<(String, f64)> = (0..n)
        .map(|i| (format!("x{i}"), rng.random_range(0.05..2.0)))
        .collect();
    let truth: Vec<String> = (0..n)
        .map(|_| truth_pool.get(rng.random_range(0..truth_pool.len())).unwrap().to_owned())
        .collect();
    Arc::new(SampleSpace::new(ids, y.clone()).unwrap().with_truth(truth).unwrap())
}

fn random_model(
    rng: &mut impl Rng,
    id: &str,
    space: &Arc<SampleSpace>,
    target: &LabelSet,
    domain_rate: f64,
) -> Model {
    let table = (0..space.len())
        .map(|_| (rng.random::<f64>() < domain_rate).then(|| random_interior(rng, target)))
        .collect();
    Model::from_table(id, space.clone(), target.clone(), table).unwrap()
}

fn model_conservation(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 1);
    let mut report = LawReport::new("conservation (single model)", trials);
    for t in 0..trials {
        let y = universe(rng.random_range(2..=6));
        let target = random_subset_labels(&mut rng, &y, 2);
        let n = rng.random_range(1..=20);
        let space = random_space(&mut rng, n, &y, &target);
        let m = random_model(&mut rng, "m", &space, &target, 0.8);
        let c = m.conservation(rng.random())?;
        let r = c.residual().abs();
        report.checked_points += m.domain().count();
        report.record(r, r <= CONSERVATION_TOLERANCE, || format!("trial {t}: residual {r:e}"));
    }
    Ok(report)
}

fn ensemble_conservation(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 2);
    let mut report = LawReport::new("conservation (3-model ensemble)", trials);
    for t in 0..trials {
        let y = universe(rng.random_range(2..=6));
        let target = random_subset_labels(&mut rng, &y, 2);
        let n = rng.random_range(1..=20);
        let space = random_space(&mut rng, n, &y, &target);
        let members = (0..3)
            .map(|k| random_model(&mut rng, &format!("m{k}"), &space, &target, 0.7))
            .collect();
        let e = Ensemble::new("E", space, members)?;
        let c = e.conservation(rng.random())?;
        let r = c.residual().abs();
        report.checked_points += e.knowledge_domain().count();
        report.record(r, r <= CONSERVATION_TOLERANCE, || format!("trial {t}: residual {r:e}"));
    }
    Ok(report)
}

#[derive(Clone, Copy)]
enum StrictCase {
    Positive,
    Uncovered,
    Fuzzy,
    Disagree,
    Random,
}

fn one_hot_in(target: &LabelSet, label: &str) -> Dist {
    Dist::one_hot(target.clone(), label).unwrap()
}

/// Target containing `label`, sometimes smaller than the universe.
fn target_with(rng: &mut impl Rng, y: &LabelSet, label: &str) -> LabelSet {
    let mut t = random_subset_labels(rng, y, 1);
    if !t.contains(label) {
        t = t.union(&LabelSet::new([label]).unwrap());
    }
    t
}

fn strict_instance(rng: &mut impl Rng, case: StrictCase) -> Ensemble {
    let y = universe(rng.random_range(2..=5));
    let n = rng.random_range(1..=20);
    let space = random_space(rng, n, &y, &y);
    let k = rng.random_range(1..=4);
    let labels: Vec<String> = (0..n)
        .map(|_| y.get(rng.random_range(0..y.len())).unwrap().to_owned())
        .collect();
    let mut tables: Vec<Vec<Option<Dist>>> = vec![vec![None; n]; k];
    let mut targets = Vec::with_capacity(k);
    for table in tables.iter_mut() {
        let target = y.clone();
        for (i, row) in table.iter_mut().enumerate() {
            if rng.random::<f64>() < 0.6 {
                *row = Some(one_hot_in(&target, &labels[i]));
            }
        }
        targets.push(target);
    }
    for (i, label) in labels.iter().enumerate() {
        if tables.iter().all(|t| t[i].is_none()) {
            let l = rng.random_range(0..k);
            tables[l][i] = Some(one_hot_in(&targets[l], label));
        }
    }
    let victim = rng.random_range(0..n);
    match case {
        StrictCase::Positive => {}
        StrictCase::Uncovered => tables.iter_mut().for_each(|t| t[victim] = None),
        StrictCase::Fuzzy => {
            let l = (0..k).find(|&l| tables[l][victim].is_some()).unwrap();
            tables[l][victim] = Some(random_interior(rng, &targets[l]));
        }
        StrictCase::Disagree => {
            let other = y.iter().find(|l| *l != labels[victim]).unwrap().to_owned();
            if k == 1 || tables.iter().filter(|t| t[victim].is_some()).count() < 2 {
                // make sure two models see the sample
                for (l, t) in tables.iter_mut().enumerate().take(2.min(k)) {
                    t[victim] = Some(one_hot_in(&targets[l], &labels[victim]));
                }
            }
            if k == 1 {
                tables[0][victim] = Some(random_interior(rng, &targets[0]));
            } else {
                let l = (0..k).rev().find(|&l| tables[l][victim].is_some()).unwrap();
                tables[l][victim] = Some(one_hot_in(&targets[l], &other));
            }
        }
        StrictCase::Random => {
            for (l, t) in tables.iter_mut().enumerate() {
                for row in t.iter_mut() {
                    match rng.random_range(0..4) {
                        0 => *row = None,
                        1 => {
                            let label = y.get(rng.random_range(0..y.len())).unwrap();
                            *row = Some(one_hot_in(&targets[l], label));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    // narrow some targets while keeping every prediction inside them
    let members = tables
        .into_iter()
        .zip(targets)
        .enumerate()
        .map(|(l, (table, target))| {
            let used: Vec<&str> = table
                .iter()
                .flatten()
                .flat_map(|d| d.support().iter().zip(d.probs()).filter(|(_, &p)| p > 0.0).map(|(s, _)| s))
                .collect();
            let narrow = match used.first() {
                Some(first) if rng.random::<bool>() => {
                    let mut t = target_with(rng, &y, first);
                    for u in &used {
                        if !t.contains(u) {
                            t = t.union(&LabelSet::new([*u]).unwrap());
                        }
                    }
                    t
                }
                _ => target,
            };
            let table = table
                .into_iter()
                .map(|row| row.map(|d| simplex::restrict(&d, &narrow).unwrap()))
                .collect();
            Model::from_table(format!("m{l}"), space.clone(), narrow, table).unwrap()
        })
        .collect();
    Ensemble::new("E", space, members).unwrap()
}

fn strictness_equivalence(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 3);
    let mut report = LawReport::new("vanishing entropy iff cover and agree", trials);
    let cases = [
        StrictCase::Positive,
        StrictCase::Uncovered,
        StrictCase::Fuzzy,
        StrictCase::Disagree,
        StrictCase::Random,
    ];
    for t in 0..trials {
        let case = cases[t % cases.len()];
        let e = strict_instance(&mut rng, case);
        let zero = e.total_entropy(true) == 0.0;
        let strict = e.strictness().strict;
        let expected = match case {
            StrictCase::Positive => Some(true),
            StrictCase::Random => None,
            _ => Some(false),
        };
        let ok = zero == strict && expected.map_or(true, |x| x == strict);
        report.checked_points += e.space().len();
        report.record(if ok { 0.0 } else { 1.0 }, ok, || {
            format!("trial {t}: zero entropy {zero}, cover-and-agree {strict}, expected {expected:?}")
        });
    }
    Ok(report)
}

/// Prediction concentrated on `label`, tied between two labels, or diffuse.
fn concentrated(rng: &mut impl Rng, y: &LabelSet, label: usize) -> Dist {
    let n = y.len();
    let mode = rng.random_range(0..10);
    let mut probs = vec![0.0; n];
    if mode < 7 {
        let spill = 10f64.powf(rng.random_range(-5.0..-0.5));
        let noise = random_interior(rng, y);
        for (a, p) in probs.iter_mut().enumerate() {
            *p = spill * noise.probs()[a];
        }
        probs[label] += 1.0 - spill;
    } else if mode < 9 {
        let other = (label + rng.random_range(1..n)) % n;
        let spill = 10f64.powf(rng.random_range(-5.0..-1.0));
        let rest = if n > 2 { spill / (n - 2) as f64 } else { 0.0 };
        probs.iter_mut().for_each(|p| *p = rest);
        let half = if n > 2 { (1.0 - spill) / 2.0 } else { 0.5 };
        probs[label] = half;
        probs[other] = half;
    } else {
        return random_interior(rng, y);
    }
    normalized(y, probs)
}

fn random_core_ensemble(rng: &mut impl Rng, max_models: usize) -> Ensemble {
    let y = universe(rng.random_range(2..=10));
    let n = rng.random_range(1..=20);
    let space = random_space(rng, n, &y, &y);
    let k = rng.random_range(1..=max_models);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..y.len())).collect();
    let members = (0..k)
        .map(|l| {
            let table = labels
                .iter()
                .map(|&c| {
                    (rng.random::<f64>() < 0.9).then(|| {
                        let c = if rng.random::<f64>() < 0.15 {
                            rng.random_range(0..y.len())
                        } else {
                            c
                        };
                        concentrated(rng, &y, c)
                    })
                })
                .collect();
            Model::from_table(format!("m{l}"), space.clone(), y.clone(), table).unwrap()
        })
        .collect();
    Ensemble::new("E", space, members).unwrap()
}

fn non_fuzzy_cores(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 4);
    let mut report = LawReport::new("non-fuzzy limit below the bound", trials);
    for t in 0..trials {
        let e = random_core_ensemble(&mut rng, 3);
        let p = 0.9 * theoretical_bound(e.universe().len());
        let core = compute_core(&e, p);
        report.checked_points += core.members.count();
        let outcome = non_fuzzy_limit(&e, p, false);
        let ok = outcome.is_ok();
        report.record(if ok { 0.0 } else { 1.0 }, ok, || format!("trial {t}: {}", outcome.unwrap_err()));
    }
    Ok(report)
}

fn core_nesting(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 5);
    let mut report = LawReport::new("core nesting", trials);
    for t in 0..trials {
        let e = random_core_ensemble(&mut rng, 4);
        let mut ps: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.5)).collect();
        ps.sort_by(f64::total_cmp);
        let cores: Vec<_> = ps.iter().map(|&p| compute_core(&e, p)).collect();
        let ok = cores
            .windows(2)
            .all(|w| w[0].members.is_subset_of(&w[1].members) && w[0].coverage <= w[1].coverage);
        report.checked_points += cores.last().unwrap().members.count();
        report.record(if ok { 0.0 } else { 1.0 }, ok, || format!("trial {t}: thresholds {ps:?}"));
    }
    Ok(report)
}

/// Random tangent direction: entries summing to zero.
fn random_tangent(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.iter().map(|v| v - mean).collect()
}

fn gradient_finite_differences(seed: u64, trials: usize) -> Result<LawReport> {
    const STEP: f64 = 1e-5;
    let mut rng = rng_for(seed, 6);
    let mut report = LawReport::new("entropy gradient vs central differences", trials);
    for t in 0..trials {
        let n = rng.random_range(2..=8);
        let support = universe(n);
        let base = rng.random_range(2..=10);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let d = normalized(&support, raw);
        let v = random_tangent(&mut rng, n);
        let grad = simplex::entropy_gradient(&d, base)?;
        let analytic: f64 = grad.iter().zip(&v).map(|(g, v)| g * v).sum();
        let shifted = |s: f64| -> Result<f64> {
            let probs: Vec<f64> = d.probs().iter().zip(&v).map(|(p, v)| p + s * v).collect();
            simplex::shannon_entropy(&Dist::new(support.clone(), probs)?, base)
        };
        let numeric = (shifted(STEP)? - shifted(-STEP)?) / (2.0 * STEP);
        let via_cross = simplex::cross_entropy_linear(&v, &d, base)?;
        let err = (numeric - analytic).abs() / analytic.abs().max(1.0);
        let identity = (via_cross - analytic).abs() / analytic.abs().max(1.0);
        let worst = err.max(identity);
        report.checked_points += 1;
        report.record(worst, worst <= GRADIENT_TOLERANCE, || {
            format!("trial {t}: analytic {analytic}, numeric {numeric}, cross-entropy form {via_cross}")
        });
    }
    Ok(report)
}

fn gibbs_inequality(seed: u64, trials: usize) -> Result<LawReport> {
    let mut rng = rng_for(seed, 7);
    let mut report = LawReport::new("Gibbs inequality", trials);
    for t in 0..trials {
        let n = rng.random_range(2..=8);
        let support = universe(n);
        let base = rng.random_range(2..=10);
        let mut y = random_interior(&mut rng, &support);
        if rng.random::<bool>() {
            let mut probs = y.probs().to_vec();
            probs[rng.random_range(0..n)] = 0.0;
            y = normalized(&support, probs);
        }
        let g = random_interior(&mut rng, &support);
        let h = simplex::cross_entropy(&y, &g, base)?;
        let entropy = simplex::shannon_entropy(&y, base)?;
        let self_gap = (simplex::cross_entropy(&y, &y, base)? - entropy).abs();
        let gap = entropy - h;
        report.checked_points += 1;
        let ok = gap <= 1e-12 && self_gap <= 1e-12;
        report.record(gap.max(self_gap), ok, || {
            format!("trial {t}: h(y,g) = {h} < H(y) = {entropy}")
        });
    }
    Ok(report)
}
