mod common;

use chainforge_core::engine::{expected_profit, Prepared};
use chainforge_core::{sample, Model, RecourseStage, Strategy};
use common::{random_spec, stage_values, Shape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaps(seed: u64) -> (f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng, Shape::default());
    let set = sample(&spec.uncertainty, Strategy::LatinHypercube { n: 8 }, seed).unwrap();
    let model = Model::new(spec.clone()).unwrap();
    let q: Vec<f64> = spec
        .produced
        .iter()
        .map(|_| rng.random_range(0.0..40.0))
        .collect();
    let s2 = Prepared::with_stage(&model, &set, RecourseStage::MappingAfterSupply).unwrap();
    let e2_policy = expected_profit(&model, &s2.policy(&q), &set).unwrap();
    let (e3, e2, fixed) = stage_values(&spec, &set, &q);
    (e3, e2, e2_policy, fixed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn later_mapping_never_hurts(seed in any::<u64>()) {
        let (e3, e2, e2_policy, fixed) = gaps(seed);
        let tol = 1e-7 * e3.abs().max(1.0);
        prop_assert!(e3 >= e2 - tol, "stage 3 {} < stage 2 {}", e3, e2);
        prop_assert!(e2 >= fixed - tol, "stage 2 {} < fixed {}", e2, fixed);
        prop_assert!((e2 - e2_policy).abs() <= tol, "objective {} vs policy {}", e2, e2_policy);
    }
}

#[test]
fn stages_agree_without_demand_uncertainty() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut spec = random_spec(&mut rng, Shape::default());
    spec.uncertainty.demand.clear();
    let set = sample(&spec.uncertainty, Strategy::LatinHypercube { n: 16 }, 2).unwrap();
    let model = Model::new(spec.clone()).unwrap();
    let q = vec![10.0; spec.produced.len()];
    let e3 = Prepared::with_stage(&model, &set, RecourseStage::MappingAfterSupplyAndDemand)
        .unwrap()
        .objective(&q);
    let e2 = Prepared::with_stage(&model, &set, RecourseStage::MappingAfterSupply)
        .unwrap()
        .objective(&q);
    assert!((e3 - e2).abs() <= 1e-9 * e3.abs().max(1.0));
}
