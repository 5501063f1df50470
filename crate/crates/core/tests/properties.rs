use std::sync::Arc;

use logifold_core::cores::{self, compute_core, evaluate_threshold, select_threshold, threshold_sweep};
use logifold_core::ensemble::pair_cross_entropy;
use logifold_core::simplex::{cross_entropy, embed, entropy_gradient, shannon_entropy};
use logifold_core::{Dist, Ensemble, LabelSet, Model, SampleSpace};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(1.0)
}

fn labels(n: usize) -> LabelSet {
    LabelSet::new((0..n).map(|i| format!("y{i}"))).unwrap()
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn dist(support: LabelSet, raw: &[f64]) -> Dist {
    Dist::new(support, normalize(raw)).unwrap()
}

fn interior(max_len: usize) -> impl Strategy<Value = Dist> {
    (2..=max_len)
        .prop_flat_map(|n| prop::collection::vec(0.001f64..1.0, n))
        .prop_map(|raw| dist(labels(raw.len()), &raw))
}

fn interior_pair(max_len: usize) -> impl Strategy<Value = (Dist, Dist)> {
    (2..=max_len)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.001f64..1.0, n),
                prop::collection::vec(0.001f64..1.0, n),
            )
        })
        .prop_map(|(a, b)| (dist(labels(a.len()), &a), dist(labels(b.len()), &b)))
}

/// Raw material for a random ensemble; turned into real objects by [`build`].
#[derive(Debug, Clone)]
struct Plan {
    universe: usize,
    weights: Vec<f64>,
    truth: Vec<usize>,
    members: Vec<MemberPlan>,
}

#[derive(Debug, Clone)]
struct MemberPlan {
    target: Vec<bool>,
    domain: Vec<bool>,
    raw: Vec<Vec<f64>>,
    sharp: Vec<Option<usize>>,
}

fn member(universe: usize, samples: usize, full_target: bool) -> impl Strategy<Value = MemberPlan> {
    (
        prop::collection::vec(any::<bool>(), universe),
        prop::collection::vec(any::<bool>(), samples),
        prop::collection::vec(prop::collection::vec(0.001f64..1.0, universe), samples),
        prop::collection::vec(prop::option::weighted(0.2, 0..universe), samples),
    )
        .prop_map(move |(mut target, domain, raw, sharp)| {
            if full_target {
                target = vec![true; universe];
            } else if !target.iter().any(|&t| t) {
                target[0] = true;
            }
            MemberPlan {
                target,
                domain,
                raw,
                sharp,
            }
        })
}

fn plan(full_target: bool, max_members: usize) -> impl Strategy<Value = Plan> {
    (2usize..=5, 1usize..=6, 1usize..=max_members).prop_flat_map(move |(universe, samples, k)| {
        (
            prop::collection::vec(0.05f64..2.0, samples),
            prop::collection::vec(0..universe, samples),
            prop::collection::vec(member(universe, samples, full_target), k),
        )
            .prop_map(move |(weights, truth, members)| Plan {
                universe,
                weights,
                truth,
                members,
            })
    })
}

fn build_space(p: &Plan) -> Arc<SampleSpace> {
    let universe = labels(p.universe);
    let truth: Vec<String> = p.truth.iter().map(|&t| format!("y{t}")).collect();
    let samples = p.weights.iter().enumerate().map(|(i, &w)| (format!("x{i}"), w));
    Arc::new(
        SampleSpace::new(samples, universe)
            .unwrap()
            .with_truth(truth)
            .unwrap(),
    )
}

fn build_member(space: &Arc<SampleSpace>, id: usize, m: &MemberPlan, interior_only: bool) -> Model {
    let universe = space.universe();
    let kept: Vec<usize> = (0..universe.len()).filter(|&a| m.target[a]).collect();
    let target = LabelSet::new(kept.iter().map(|&a| universe.get(a).unwrap().to_owned())).unwrap();
    let table = (0..space.len())
        .map(|i| {
            if !m.domain[i] {
                return None;
            }
            let sharp = m.sharp[i].filter(|s| !interior_only && m.target[*s]);
            let probs: Vec<f64> = match sharp {
                Some(s) => kept.iter().map(|&a| if a == s { 1.0 } else { 0.0 }).collect(),
                None => normalize(&kept.iter().map(|&a| m.raw[i][a]).collect::<Vec<_>>()),
            };
            Some(Dist::new(target.clone(), probs).unwrap())
        })
        .collect();
    Model::from_table(format!("m{id}"), space.clone(), target, table).unwrap()
}

fn build(p: &Plan, interior_only: bool) -> Ensemble {
    let space = build_space(p);
    let members = p
        .members
        .iter()
        .enumerate()
        .map(|(id, m)| build_member(&space, id, m, interior_only))
        .collect();
    Ensemble::new("u", space, members).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn entropy_lies_in_unit_interval(d in interior(8)) {
        let h = shannon_entropy(&d, d.len()).unwrap();
        prop_assert!((-TOL..=1.0 + TOL).contains(&h));
    }

    #[test]
    fn one_hot_and_uniform_reach_the_ends(n in 2usize..10, hot in 0usize..10) {
        let support = labels(n);
        let label = format!("y{}", hot % n);
        let one_hot = Dist::one_hot(support.clone(), &label).unwrap();
        prop_assert!(shannon_entropy(&one_hot, n).unwrap().abs() <= TOL);
        let uniform = Dist::uniform(support);
        prop_assert!((shannon_entropy(&uniform, n).unwrap() - 1.0).abs() <= TOL);
    }

    #[test]
    fn gibbs_inequality((y, g) in interior_pair(6)) {
        let base = y.len();
        let h = shannon_entropy(&y, base).unwrap();
        prop_assert!(cross_entropy(&y, &g, base).unwrap() >= h - TOL);
        prop_assert!((cross_entropy(&y, &y, base).unwrap() - h).abs() <= TOL);
    }

    #[test]
    fn gradient_matches_central_differences(d in interior(6), dir_raw in prop::collection::vec(-1.0f64..1.0, 6)) {
        let n = d.len();
        let mean: f64 = dir_raw[..n].iter().sum::<f64>() / n as f64;
        let dir: Vec<f64> = dir_raw[..n].iter().map(|v| v - mean).collect();
        let step = 1e-6;
        let shifted = |sign: f64| -> Option<f64> {
            let probs: Vec<f64> = d.probs().iter().zip(&dir).map(|(p, v)| p + sign * step * v).collect();
            if probs.iter().any(|&p| p <= 0.0) {
                return None;
            }
            Dist::new(d.support().clone(), probs).ok().map(|q| shannon_entropy(&q, n).unwrap())
        };
        if let (Some(plus), Some(minus)) = (shifted(1.0), shifted(-1.0)) {
            let fd = (plus - minus) / (2.0 * step);
            let grad = entropy_gradient(&d, n).unwrap();
            let an: f64 = grad.iter().zip(&dir).map(|(g, v)| g * v).sum();
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn embedding_preserves_entropy(d in interior(5), extra in 1usize..4, base in 2usize..12) {
        let target = labels(d.len() + extra);
        let e = embed(&d, &target).unwrap();
        let before = shannon_entropy(&d, base).unwrap();
        let after = shannon_entropy(&e, base).unwrap();
        prop_assert!((before - after).abs() <= TOL);
    }

    #[test]
    fn measure_is_finitely_additive(p in plan(false, 1), split in prop::collection::vec(0usize..3, 6)) {
        let space = build_space(&p);
        let parts: Vec<_> = (0..3)
            .map(|k| space.subset_where(|i| split[i] == k))
            .collect();
        let sum: f64 = parts.iter().map(|s| space.measure(s).unwrap()).sum();
        prop_assert!((sum - space.total_mass()).abs() <= 1e-12);
        let joined = parts[0].union(&parts[1]);
        let lhs = space.measure(&joined).unwrap();
        let rhs = space.measure(&parts[0]).unwrap() + space.measure(&parts[1]).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn halving_a_weight_halves_its_contribution(p in plan(false, 3), pick in 0usize..6) {
        let full = build(&p, false);
        let idx = pick % p.weights.len();
        let mut halved = p.clone();
        halved.weights[idx] /= 2.0;
        let half = build(&halved, false);
        let h = full.entropy_at(idx);
        let total = full.total_entropy(true);
        let expected = if total.is_infinite() { total } else { total - p.weights[idx] * h / 2.0 };
        prop_assert!(close(half.total_entropy(true), expected, TOL));
    }

    #[test]
    fn pointwise_entropy_is_bounded_and_permutation_invariant(p in plan(false, 4), shift in 0usize..4) {
        let e = build(&p, false);
        let mut rotated = e.members().to_vec();
        let len = rotated.len();
        rotated.rotate_left(shift % len);
        rotated.reverse();
        let r = Ensemble::new("r", e.space().clone(), rotated).unwrap();
        for i in 0..e.space().len() {
            let h = e.entropy_at(i);
            prop_assert!(h >= -TOL);
            prop_assert!(close(h, r.entropy_at(i), 1e-12));
        }
    }

    #[test]
    fn single_member_matches_its_model(p in plan(false, 1)) {
        let e = build(&p, false);
        let model = &e.members()[0];
        prop_assert!(close(e.total_entropy(false), model.total_entropy(false), TOL));
    }

    #[test]
    fn per_point_identity_for_common_targets(p in plan(true, 4)) {
        let e = build(&p, true);
        for i in 0..e.space().len() {
            let preds: Vec<&Dist> = e.covering(i).map(|m| m.prediction(i).unwrap()).collect();
            if preds.is_empty() {
                continue;
            }
            let avg = e.average_at(i);
            let lhs: f64 = preds.iter().map(|g| pair_cross_entropy(&avg, g)).sum::<f64>() / preds.len() as f64;
            prop_assert!((lhs - e.entropy_at(i)).abs() <= TOL);
        }
    }

    #[test]
    fn ensemble_conservation_holds_on_interior_common_targets(p in plan(true, 4)) {
        let e = build(&p, true);
        prop_assert!(e.conservation_residual().unwrap().abs() <= TOL);
    }

    #[test]
    fn model_conservation_holds_on_interior_predictions(p in plan(true, 1)) {
        let e = build(&p, true);
        prop_assert!(e.members()[0].conservation_residual().unwrap().abs() <= TOL);
    }

    #[test]
    fn strictness_matches_zero_total_entropy(p in plan(false, 3)) {
        let e = build(&p, false);
        let strict = e.strictness().strict;
        prop_assert_eq!(strict, e.total_entropy(true) == 0.0);
    }

    #[test]
    fn cores_are_nested(p in plan(false, 3), a in 0.0f64..1.5, b in 0.0f64..1.5) {
        let e = build(&p, false);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = compute_core(&e, lo);
        let large = compute_core(&e, hi);
        prop_assert!(small.members.is_subset_of(&large.members));
        prop_assert!(small.coverage <= large.coverage);
    }

    #[test]
    fn selected_threshold_reproduces_its_row(p in plan(false, 3), target in 0.05f64..1.0) {
        let e = build(&p, false);
        let grid = cores::default_grid();
        let curve = threshold_sweep(&e, &grid).unwrap();
        if let Some(tau) = select_threshold(&curve, target).unwrap() {
            let row = evaluate_threshold(&e, &e.space().full_subset(), tau).unwrap();
            prop_assert_eq!(curve.row_at(tau).unwrap(), &row);
            prop_assert!(row.core_accuracy.unwrap() >= target);
        }
    }

    #[test]
    fn coverage_is_monotone_along_a_sweep(p in plan(false, 3)) {
        let e = build(&p, false);
        let curve = threshold_sweep(&e, &cores::default_grid()).unwrap();
        for w in curve.rows.windows(2) {
            prop_assert!(w[0].core_coverage <= w[1].core_coverage);
        }
    }
}
