mod common;

use std::collections::HashSet;

use common::*;
use isegen_core::select::{speedup_curve, AREA_QUANTUM};
use isegen_core::{greedy_select, knapsack_select, CandidateClass, Limits, Metric};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value(c: &CandidateClass) -> i128 {
    if c.instances[0].gain <= 0 {
        0
    } else {
        c.total_gain()
    }
}

fn best_subset(classes: &[CandidateClass], budget: f64) -> i128 {
    let n = classes.len();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let mut area = 0.0;
        let mut v = 0;
        for (i, c) in classes.iter().enumerate() {
            if mask >> i & 1 == 1 {
                area += c.area;
                v += value(c);
            }
        }
        if area <= budget + 1e-9 {
            best = best.max(v);
        }
    }
    best
}

fn disjoint_claims(classes: &[CandidateClass], sel: &isegen_core::Selection) -> bool {
    let mut seen = HashSet::new();
    for s in &sel.steps {
        let c = classes.iter().find(|c| c.id == s.class_id).unwrap();
        for &i in &s.instances {
            let inst = &c.instances[i];
            for &v in &inst.nodes {
                if !seen.insert((inst.block_label.clone(), v)) {
                    return false;
                }
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn knapsack_is_optimal(seed in any::<u64>(), n in 0usize..=15, budget in 0u32..4000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = disjoint_classes(&mut rng, n);
        let budget = budget as f64 * AREA_QUANTUM;
        let sel = knapsack_select(&classes, budget).unwrap();
        prop_assert_eq!(sel.total_gain, best_subset(&classes, budget));
        prop_assert!(sel.total_area <= budget + 1e-9);
    }

    #[test]
    fn greedy_picks_survive_frequency_scaling(seed in any::<u64>(), n in 1usize..=15, k in 2u64..20, recompute in any::<bool>(), per_area in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = overlapping_classes(&mut rng, n);
        let mut scaled = classes.clone();
        for c in &mut scaled {
            for i in &mut c.instances {
                i.freq *= k;
            }
        }
        let metric = if per_area { Metric::GainPerArea } else { Metric::Gain };
        let a = greedy_select(&classes, metric, Limits::default(), recompute).unwrap();
        let b = greedy_select(&scaled, metric, Limits::default(), recompute).unwrap();
        prop_assert_eq!(a.class_ids(), b.class_ids());
    }

    #[test]
    fn per_area_picks_survive_area_scaling(seed in any::<u64>(), n in 1usize..=15, k in prop_oneof![Just(0.25), Just(0.5), Just(3.0), Just(7.5), Just(10.0)], recompute in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = overlapping_classes(&mut rng, n);
        let mut scaled = classes.clone();
        for c in &mut scaled {
            c.area *= k;
        }
        let a = greedy_select(&classes, Metric::GainPerArea, Limits::default(), recompute).unwrap();
        let b = greedy_select(&scaled, Metric::GainPerArea, Limits::default(), recompute).unwrap();
        prop_assert_eq!(a.class_ids(), b.class_ids());
    }

    #[test]
    fn greedy_respects_budget_and_overlap(seed in any::<u64>(), n in 1usize..=20, budget in 0u32..3000, recompute in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = overlapping_classes(&mut rng, n);
        let limits = Limits { max_classes: None, area_budget: Some(budget as f64 * AREA_QUANTUM) };
        for metric in [Metric::Gain, Metric::GainPerArea] {
            let sel = greedy_select(&classes, metric, limits, recompute).unwrap();
            prop_assert!(sel.total_area <= budget as f64 * AREA_QUANTUM + 1e-9);
            prop_assert!(disjoint_claims(&classes, &sel));
        }
        let sel = knapsack_select(&classes, budget as f64 * AREA_QUANTUM).unwrap();
        prop_assert!(disjoint_claims(&classes, &sel));
    }

    #[test]
    fn recomputed_priorities_never_rise(seed in any::<u64>(), n in 1usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = overlapping_classes(&mut rng, n);
        let sel = greedy_select(&classes, Metric::Gain, Limits::default(), true).unwrap();
        for w in sel.steps.windows(2) {
            prop_assert!(w[0].priority >= w[1].priority);
        }
    }

    #[test]
    fn curves_rise_monotonically(seed in any::<u64>(), n in 1usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = overlapping_classes(&mut rng, n);
        let sel = greedy_select(&classes, Metric::GainPerArea, Limits::default(), true).unwrap();
        let base = (sel.total_gain as u64) * 2 + 1;
        let curve = speedup_curve(&sel, base).unwrap();
        let mut last = 1.0;
        for r in &curve.rows {
            prop_assert!(r.speedup >= last);
            last = r.speedup;
        }
        prop_assert!(curve.step95 <= curve.rows.len());
        if let Some(r) = curve.rows.get(curve.step95.saturating_sub(1)) {
            prop_assert!(r.speedup >= 0.95 * curve.final_speedup() - 1e-12);
        }
    }
}

#[test]
fn knapsack_prefers_two_small_over_one_large() {
    let classes = vec![
        class(0, 1.0, 10, vec![("A".into(), vec![0], 10)]),
        class(1, 0.5, 6, vec![("B".into(), vec![0], 10)]),
        class(2, 0.5, 6, vec![("C".into(), vec![0], 10)]),
    ];
    let sel = knapsack_select(&classes, 1.0).unwrap();
    assert_eq!(sel.class_ids(), vec![1, 2]);
    let greedy = greedy_select(&classes, Metric::Gain, Limits { max_classes: None, area_budget: Some(1.0) }, true).unwrap();
    assert_eq!(greedy.class_ids(), vec![0]);
}
