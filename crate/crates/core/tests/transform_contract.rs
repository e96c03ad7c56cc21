mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use rulepatch::rules::Rule;
use rulepatch::transform::{apply_transformation, diff_function};

const NO_ADD: [Edit; 3] = [Edit::Value, Edit::Operator, Edit::Delete];
const POINTS: usize = 4_000;

fn case_from(seed: u64) -> (EditCase, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = random_edit_case(&mut rng, &NO_ADD, POINTS);
    (case, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn label_kept_edits_hold_both_ways(seed in any::<u64>()) {
        let (case, mut rng) = case_from(seed);
        prop_assume!(!case.label_changed());
        let t = transformation_for(&case);
        let bad = contract_violations(&case, &t, &enumerate(&case.schema), &mut rng);
        prop_assert!(bad.is_empty(), "{} -> {}: {} violations, first {:?}",
            case.r.clause, case.r_prime.clause, bad.len(), bad.first());
    }

    #[test]
    fn label_changed_edits_hold_forward(seed in any::<u64>()) {
        let (case, mut rng) = case_from(seed);
        prop_assume!(case.label_changed());
        let t = transformation_for(&case);
        let bad: Vec<_> = contract_violations(&case, &t, &enumerate(&case.schema), &mut rng)
            .into_iter()
            .filter(|v| v.direction == Direction::Forward)
            .collect();
        prop_assert!(bad.is_empty(), "{} -> {}: first {:?}",
            case.r.clause, case.r_prime.clause, bad.first());
    }

    #[test]
    fn label_changed_single_variable_reverse_on_shared(seed in any::<u64>()) {
        let (case, mut rng) = case_from(seed);
        prop_assume!(case.label_changed());
        let diff = diff_function(&case.r.clause, &case.r_prime.clause);
        let touched: HashSet<&String> = diff.map_1.keys().chain(diff.map_2.keys()).collect();
        prop_assume!(touched.len() == 1);
        let shared: Vec<_> = case.r.clause.conditions().iter()
            .filter(|c| case.r_prime.clause.conditions().contains(c))
            .collect();
        let points: Vec<_> = enumerate(&case.schema).into_iter()
            .filter(|x| shared.iter().all(|c| c.evaluate(x)))
            .collect();
        let t = transformation_for(&case);
        let bad = contract_violations(&case, &t, &points, &mut rng);
        prop_assert!(bad.is_empty(), "{} -> {}: first {:?}",
            case.r.clause, case.r_prime.clause, bad.first());
    }

    #[test]
    fn untouched_variables_never_change(seed in any::<u64>()) {
        let (case, mut rng) = case_from(seed);
        let t = transformation_for(&case);
        let diff = diff_function(&case.r.clause, &case.r_prime.clause);
        for x in enumerate(&case.schema).iter().take(500) {
            let t_x = apply_transformation(x, &t, &mut rng);
            for (i, f) in case.schema.features().iter().enumerate() {
                if !diff.map_1.contains_key(&f.name) {
                    prop_assert_eq!(x.get(i), t_x.get(i), "feature {}", f.name);
                }
            }
        }
    }

    #[test]
    fn relabel_only_is_identity(seed in any::<u64>()) {
        let (case, _) = case_from(seed);
        let flipped = Rule::new(case.r.clause.clone(), case.r.label.other());
        let relabel = EditCase { r_prime: flipped, ..case };
        prop_assert!(transformation_for(&relabel).is_identity());
    }

    #[test]
    fn applying_leaves_input_alone(seed in any::<u64>()) {
        let (case, mut rng) = case_from(seed);
        let t = transformation_for(&case);
        for x in enumerate(&case.schema).iter().take(200) {
            let before = x.clone();
            let _ = apply_transformation(x, &t, &mut rng);
            prop_assert_eq!(&before, x);
        }
    }
}

#[test]
fn added_literals_can_break_the_contract() {
    // x only constrained by e' through the added literal: nothing moves it.
    let mut found = false;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_edit_case(&mut rng, &[Edit::Add], POINTS);
        if case.label_changed() {
            continue;
        }
        let t = transformation_for(&case);
        if !contract_violations(&case, &t, &enumerate(&case.schema), &mut rng).is_empty() {
            found = true;
            break;
        }
    }
    assert!(found);
}
