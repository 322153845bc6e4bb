mod common;

use chainforge_core::recourse::RecourseModel;
use chainforge_core::MarketSpec;
use common::{brute_force_recourse, demand_values, lp_oracle_mismatch};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_dominates_integer_optimum(seed in any::<u64>()) {
        prop_assert_eq!(lp_oracle_mismatch(seed, false), Ok(()));
    }

    #[test]
    fn lp_is_integral_for_unit_mappings(seed in any::<u64>()) {
        prop_assert_eq!(lp_oracle_mismatch(seed, true), Ok(()));
    }
}

#[test]
fn composition_lp_can_beat_integers() {
    // Two units of p0 per d0, three obtained: the LP builds 1.5.
    let spec: MarketSpec = MarketSpec {
        produced: vec![chainforge_core::ProducedGood {
            id: "p0".into(),
            unit_cost: 0.0,
            nre: 0.0,
            yield_rate: 1.0,
            supplier_id: "s".into(),
        }],
        demanded: vec![chainforge_core::DemandedGood {
            id: "d0".into(),
            base_demand: 5.0,
            unit_benefit: 4.0,
            unit_shortage_cost: 0.0,
            salvage_value: 0.0,
            demand_curve: None,
        }],
        mappings: vec![chainforge_core::Mapping::new(
            "m",
            &[("p0", 2.0)],
            "d0",
            0.0,
        )],
        ..Default::default()
    };
    let model = RecourseModel::new(&spec);
    let v = demand_values(&spec, &[5.0]);
    let lp = model.solve_segment_lp(&v, &[3.0]);
    let (_, bf) = brute_force_recourse(&spec, &[3.0], &[5.0]);
    assert!((lp.value - 6.0).abs() < 1e-9);
    assert_eq!(bf, 4.0);
}
