mod common;

use chainforge_core::chipcost::CostModel;
use chainforge_core::engine::Prepared;
use chainforge_core::market::build_baseline;
use chainforge_core::{
    constrained_rerun, optimize, sample, DemandedGood, Distribution, Mapping, MarketSpec, Model,
    OptimizerConfig, ProducedGood, RecourseStage, Strategy,
};
use common::{random_spec, Shape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objective(spec: &MarketSpec, set: &chainforge_core::ScenarioSet, q: &[f64]) -> f64 {
    let model = Model::new(spec.clone()).unwrap();
    Prepared::new(&model, set).unwrap().objective(q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn profit_is_homogeneous_in_money(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, Shape { curves: true, ..Shape::default() });
        let set = sample(&spec.uncertainty, Strategy::MonteCarlo { n: 6 }, seed).unwrap();
        let q: Vec<f64> = spec.produced.iter().map(|_| rng.random_range(0.0..30.0)).collect();
        let mut scaled = spec.clone();
        scaled.scale_money(k);
        let (a, b) = (objective(&spec, &set, &q), objective(&scaled, &set, &q));
        prop_assert!((b - k * a).abs() <= 1e-8 * (k * a).abs().max(1.0), "{} vs {}", b, k * a);
    }

    #[test]
    fn profit_scales_with_market_size(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, Shape::default());
        let set = sample(&spec.uncertainty, Strategy::MonteCarlo { n: 6 }, seed).unwrap();
        let q: Vec<f64> = spec.produced.iter().map(|_| rng.random_range(0.1..30.0)).collect();
        let mut big = spec.clone();
        for d in &mut big.demanded {
            d.base_demand *= k;
        }
        for g in &mut big.produced {
            g.nre *= k;
        }
        let kq: Vec<f64> = q.iter().map(|x| x * k).collect();
        let (a, b) = (objective(&spec, &set, &q), objective(&big, &set, &kq));
        prop_assert!((b - k * a).abs() <= 1e-8 * (k * a).abs().max(1.0), "{} vs {}", b, k * a);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, Shape::default());
        for strategy in [
            Strategy::MonteCarlo { n: 5 },
            Strategy::LatinHypercube { n: 5 },
            Strategy::StratifiedEquiProbable { n: 3 },
        ] {
            let a = sample(&spec.uncertainty, strategy, seed).unwrap();
            let b = sample(&spec.uncertainty, strategy, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let w: f64 = a.scenarios.iter().map(|s| s.weight).sum();
            prop_assert!((w - 1.0).abs() < 1e-12);
            prop_assert!(a.scenarios.iter().flat_map(|s| s.supply.iter().chain(&s.demand)).all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn optimizer_finds_the_sample_newsvendor_optimum(
        c in 0.1f64..5.0,
        margin in 0.5f64..15.0,
        s in 0.0f64..5.0,
        salvage_share in 0.0f64..0.5,
        y in 0.5f64..=1.0,
        sigma in 0.05f64..0.5,
        nre in 0.0f64..400.0,
        seed in 0u64..1000,
    ) {
        let b = c / y + margin;
        let spec = MarketSpec {
            produced: vec![ProducedGood {
                id: "a".into(),
                unit_cost: c,
                nre,
                yield_rate: y,
                supplier_id: "s".into(),
            }],
            demanded: vec![DemandedGood {
                id: "a".into(),
                base_demand: 100.0,
                unit_benefit: b,
                unit_shortage_cost: s,
                salvage_value: salvage_share * c,
                demand_curve: None,
            }],
            mappings: vec![Mapping::identity("a")],
            uncertainty: chainforge_core::UncertaintyConfig {
                demand: [("a".to_string(), Distribution::normal(sigma))].into(),
                ..Default::default()
            },
            ..Default::default()
        };
        let set = sample(&spec.uncertainty, Strategy::LatinHypercube { n: 64 }, seed).unwrap();
        let demands: Vec<f64> = set.scenarios.iter().map(|sc| 100.0 * sc.demand[0]).collect();
        // Profit is piecewise linear in the built quantity with kinks at the
        // sampled demands, so the optimum is at zero or one of them.
        let profit = |x: f64| -> f64 {
            let fixed = if x > 0.0 { nre } else { 0.0 };
            set.scenarios.iter().zip(&demands).map(|(sc, &d)| {
                let sold = d.min(x);
                sc.weight * (b * sold - s * (d - sold) + salvage_share * c * (x - sold) - c * x / y)
            }).sum::<f64>() - fixed
        };
        let best = demands.iter().copied().chain([0.0]).map(profit).fold(f64::NEG_INFINITY, f64::max);
        let r = optimize(&spec, &set, &OptimizerConfig::default()).unwrap();
        prop_assert!((r.expected_profit - best).abs() <= 1e-6 * best.abs().max(1.0),
            "optimizer {} oracle {}", r.expected_profit, best);
    }
}

#[test]
fn tighter_caps_never_raise_profit() {
    let mut spec = build_baseline(&[16, 8, 4], &CostModel::default()).unwrap();
    for s in spec
        .suppliers()
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
    {
        spec.uncertainty.supply.insert(s, Distribution::normal(0.2));
    }
    let set = sample(&spec.uncertainty, Strategy::LatinHypercube { n: 32 }, 1).unwrap();
    let cfg = OptimizerConfig::default();
    let mut last = f64::NEG_INFINITY;
    for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let r = constrained_rerun(&spec, &set, &cfg, f, &["16c"]).unwrap();
        assert!(
            r.expected_profit >= last - 1e-6 * last.abs(),
            "factor {f}: {} < {last}",
            r.expected_profit
        );
        last = r.expected_profit;
    }
    let free = optimize(&spec, &set, &cfg).unwrap();
    assert!((free.expected_profit - last).abs() <= 1e-6 * last.abs());
}

#[test]
fn certain_market_orders_demand_over_yield() {
    let spec = build_baseline(&[16, 8, 4], &CostModel::default()).unwrap();
    let set = sample(&spec.uncertainty, Strategy::Exhaustive, 0).unwrap();
    let r = optimize(&spec, &set, &OptimizerConfig::default()).unwrap();
    for (g, q) in spec.produced.iter().zip(&r.policy.order_qty) {
        let d = spec
            .demanded
            .iter()
            .find(|d| d.id == g.id)
            .unwrap()
            .base_demand;
        let want = d / g.yield_rate;
        assert!((q - want).abs() <= 1e-3 * want, "{}: {q} vs {want}", g.id);
    }
    let staged = MarketSpec {
        recourse_stage: RecourseStage::MappingAfterSupplyAndDemand,
        ..spec.clone()
    };
    let r3 = optimize(&staged, &set, &OptimizerConfig::default()).unwrap();
    assert!((r3.expected_profit - r.expected_profit).abs() <= 1e-9 * r.expected_profit.abs());
}
