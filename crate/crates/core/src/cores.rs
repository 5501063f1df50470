//! Cores of ensembles and entropy-threshold selection.
//!
//! The core `C_p(U) = { x : H_x(U) < p }` is a strict sublevel set of the
//! pointwise ensemble entropy, so cores nest as `p` grows. Below
//! [`theoretical_bound`] the covering models of a core sample are expected
//! to share a unique argmax. This holds for small ensembles but can fail
//! once many models cover a point; [`non_fuzzy_limit`] checks it and reports
//! any point where it fails.

use std::cmp::Ordering;

use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::simplex;
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

/// `min{2/|Y|, log_{|Y|}(3/2)}`.
pub fn theoretical_bound(universe_size: usize) -> f64 {
    let y = universe_size as f64;
    (2.0 / y).min(1.5f64.ln() / y.ln())
}

/// Default sweep grid `{0, 0.01, …, 1.4}`.
pub fn default_grid() -> Vec<f64> {
    (0..=140).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreResult {
    pub threshold: f64,
    pub members: SampleSubset,
    /// Measure of the core as a fraction of the total mass.
    pub coverage: f64,
    pub theoretical_bound: f64,
    pub within_bound: bool,
}

/// Core of `e` at threshold `p` over the whole space.
pub fn compute_core(e: &Ensemble, p: f64) -> CoreResult {
    compute_core_over(e, p, &e.space().full_subset()).expect("own subset")
}

/// Core of `e` at threshold `p`; coverage is measured within `batch`.
pub fn compute_core_over(e: &Ensemble, p: f64, batch: &SampleSubset) -> Result<CoreResult> {
    let space = e.space();
    space.check(batch)?;
    let bound = theoretical_bound(space.universe().len());
    let within_bound = p < bound;
    if !within_bound {
        log::warn!("core threshold {p} is not below the non-fuzzy bound {bound:.6}");
    }
    let members = space.subset_where(|i| batch.contains(i) && e.entropy_at(i) < p);
    let coverage = fraction(space, &members, batch);
    Ok(CoreResult {
        threshold: p,
        members,
        coverage,
        theoretical_bound: bound,
        within_bound,
    })
}

fn fraction(space: &SampleSpace, part: &SampleSubset, whole: &SampleSubset) -> f64 {
    let whole_mass = space.measure(whole).expect("own subset");
    if whole_mass == 0.0 {
        return 0.0;
    }
    space.measure(part).expect("own subset") / whole_mass
}

/// Labels of the non-fuzzy limit on a core.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonFuzzyLimit {
    /// `(sample_id, label)` for every labeled core sample, in space order.
    pub labels: Vec<(String, String)>,
    /// Core samples where uniqueness or agreement failed (override mode only).
    pub flagged: Vec<(String, String)>,
}

/// Common argmax labeling on the core `C_p(e)`.
///
/// Below the bound a tie or a disagreement is an error. With `allow_any_threshold`
/// the bound is not enforced, failures are collected in
/// [`NonFuzzyLimit::flagged`] and the majority argmax is returned.
pub fn non_fuzzy_limit(e: &Ensemble, p: f64, allow_any_threshold: bool) -> Result<NonFuzzyLimit> {
    let space = e.space();
    let universe = space.universe();
    let bound = theoretical_bound(universe.len());
    if !allow_any_threshold && p >= bound {
        return Err(Error::BoundViolated {
            threshold: p,
            bound,
        });
    }
    let mut out = NonFuzzyLimit::default();
    for i in 0..space.len() {
        if e.entropy_at(i).partial_cmp(&p) != Some(Ordering::Less) {
            continue;
        }
        let id = space.id(i);
        let mut votes = vec![0usize; universe.len()];
        let mut problem: Option<String> = None;
        for m in e.covering(i) {
            let d = m.prediction(i).unwrap();
            let arg = simplex::argmax_label(d);
            let label = d.support().get(arg.index).unwrap();
            votes[universe.index_of(label).unwrap()] += 1;
            if arg.tie && problem.is_none() {
                problem = Some(format!("model `{}` has no unique argmax", m.id()));
            }
        }
        let total: usize = votes.iter().sum();
        if total == 0 {
            out.flagged.push((id.to_owned(), "no covering model".to_owned()));
            continue;
        }
        let winner = votes
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > votes[best] { j } else { best });
        if problem.is_none() && votes[winner] != total {
            problem = Some("covering models disagree on the argmax".to_owned());
        }
        if let Some(reason) = problem {
            if !allow_any_threshold {
                return Err(Error::NonFuzzyViolation {
                    sample: id.to_owned(),
                    reason,
                });
            }
            out.flagged.push((id.to_owned(), reason));
        }
        out.labels
            .push((id.to_owned(), universe.get(winner).unwrap().to_owned()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub core_coverage: f64,
    /// `None` when the core is empty.
    pub core_accuracy: Option<f64>,
    /// `None` when the core is everything.
    pub outcore_accuracy: Option<f64>,
    pub core_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub rows: Vec<SweepRow>,
}

/// Per-sample quantities a sweep needs, computed once.
struct SweepInputs<'a> {
    space: &'a SampleSpace,
    batch: Vec<usize>,
    entropy: Vec<f64>,
    correct: Vec<bool>,
}

impl<'a> SweepInputs<'a> {
    fn new(e: &'a Ensemble, batch: &SampleSubset) -> Result<Self> {
        let space = e.space();
        space.check(batch)?;
        let batch: Vec<usize> = batch.indices().collect();
        let mut entropy = Vec::with_capacity(batch.len());
        let mut correct = Vec::with_capacity(batch.len());
        for &i in &batch {
            entropy.push(e.entropy_at(i));
            let predicted = simplex::argmax_label(&e.average_at(i)).index;
            correct.push(predicted == space.truth_index(i)?);
        }
        Ok(Self {
            space,
            batch,
            entropy,
            correct,
        })
    }

    fn row(&self, tau: f64) -> SweepRow {
        let mut core_w = Vec::new();
        let mut core_hit = Vec::new();
        let mut out_w = Vec::new();
        let mut out_hit = Vec::new();
        for (k, &i) in self.batch.iter().enumerate() {
            let (w, hit) = if self.entropy[k] < tau {
                (&mut core_w, &mut core_hit)
            } else {
                (&mut out_w, &mut out_hit)
            };
            w.push((1.0, i));
            hit.push((if self.correct[k] { 1.0 } else { 0.0 }, i));
        }
        let core_count = core_w.len();
        let core_mass = self.space.weighted_sum(core_w);
        let out_mass = self.space.weighted_sum(out_w);
        let accuracy = |hits: Vec<(f64, usize)>, mass: f64, n: usize| {
            (n > 0).then(|| self.space.weighted_sum(hits) / mass)
        };
        let out_count = self.batch.len() - core_count;
        let total = core_mass + out_mass;
        SweepRow {
            tau,
            core_coverage: if total > 0.0 { core_mass / total } else { 0.0 },
            core_accuracy: accuracy(core_hit, core_mass, core_count),
            outcore_accuracy: accuracy(out_hit, out_mass, out_count),
            core_count,
        }
    }
}

/// Coverage and probability-average accuracy on and off the core for each
/// threshold of `grid`, over the whole space.
pub fn threshold_sweep(e: &Ensemble, grid: &[f64]) -> Result<SweepCurve> {
    threshold_sweep_over(e, &e.space().full_subset(), grid)
}

/// [`threshold_sweep`] restricted to the samples of `batch`.
pub fn threshold_sweep_over(e: &Ensemble, batch: &SampleSubset, grid: &[f64]) -> Result<SweepCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    if grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(Error::InvalidConfig(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    let inputs = SweepInputs::new(e, batch)?;
    Ok(SweepCurve {
        rows: grid.iter().map(|&tau| inputs.row(tau)).collect(),
    })
}

/// Single sweep row at `tau`; identical to the corresponding row of a sweep.
pub fn evaluate_threshold(e: &Ensemble, batch: &SampleSubset, tau: f64) -> Result<SweepRow> {
    Ok(SweepInputs::new(e, batch)?.row(tau))
}

/// Largest grid threshold whose core accuracy reaches `target`.
///
/// `None` means no threshold qualifies, the signal to annihilate a generation.
pub fn select_threshold(curve: &SweepCurve, target: f64) -> Result<Option<f64>> {
    if curve.rows.is_empty() {
        return Err(Error::EmptyCurve);
    }
    if target.is_nan() || target <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "accuracy target must be positive, got {target}"
        )));
    }
    Ok(curve
        .rows
        .iter()
        .filter(|r| r.core_accuracy.is_some_and(|a| a >= target))
        .map(|r| r.tau)
        .fold(None, |best: Option<f64>, tau| {
            Some(best.map_or(tau, |b| b.max(tau)))
        }))
}

impl SweepCurve {
    pub fn row_at(&self, tau: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.tau == tau)
    }
}
