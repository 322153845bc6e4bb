use std::path::PathBuf;

use chainforge::experiments::{
    lambda_table, run, ExperimentPlan, Intervention, RunOptions, ShockSide, SweepAxis,
};
use chainforge::Config;
use chainforge_core::{Lambda, Strategy};

fn shipped() -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    Config::load(&path).unwrap()
}

fn small(mut plan: ExperimentPlan, n: usize) -> ExperimentPlan {
    plan.strategy = Some(Strategy::LatinHypercube { n });
    plan
}

#[test]
fn shipped_config_is_valid_and_uses_defaults() {
    let cfg = shipped();
    assert!(cfg.experiments.len() >= 10);
    assert_eq!(cfg.chipcost, Config::default().chipcost);
    assert_eq!(cfg.optimizer, Config::default().optimizer);
}

#[test]
fn zero_sigma_baseline_has_undefined_lambda() {
    let plan = ExperimentPlan::new("b", SweepAxis::SupplySigma, &[0.0]);
    let r = run(&plan, &Config::default(), &RunOptions::default()).unwrap();
    assert_eq!(r.points[0].lambda, Some(Lambda::Undefined));
    assert_eq!(r.points[0].scenarios, 1);
}

#[test]
fn zero_shock_matches_the_certain_baseline() {
    let mut plan = ExperimentPlan::new("s", SweepAxis::ShockFactor, &[0.0]);
    plan.targets = vec!["16c".into()];
    plan.shock_side = ShockSide::Supply;
    let r = run(&plan, &Config::default(), &RunOptions::default()).unwrap();
    let p = &r.points[0];
    assert!(
        (p.mean().unwrap() - r.zero_uncertainty_baseline).abs()
            <= 1e-9 * r.zero_uncertainty_baseline
    );
}

#[test]
fn baseline_against_itself_recovers_nothing() {
    let cfg = Config::default();
    let plan = small(
        ExperimentPlan::new("b", SweepAxis::DemandSigma, &[0.12, 0.36]),
        64,
    );
    let a = run(&plan, &cfg, &RunOptions::default()).unwrap();
    let rows = lambda_table(&a, &a).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.lambda == Lambda::Value(0.0)));
    let other = small(ExperimentPlan::new("c", SweepAxis::SupplySigma, &[0.12]), 8);
    let b = run(&other, &cfg, &RunOptions::default()).unwrap();
    assert!(lambda_table(&a, &b).is_err());
}

#[test]
fn demand_uncertainty_costs_about_half_the_profit() {
    let plan = ExperimentPlan::new("d", SweepAxis::DemandSigma, &[0.36]);
    let r = run(&plan, &Config::default(), &RunOptions::default()).unwrap();
    let drop = 1.0 - r.points[0].mean().unwrap() / r.zero_uncertainty_baseline;
    assert!((0.40..=0.65).contains(&drop), "drop {drop}");
}

#[test]
fn just_in_time_composition_dominates_at_every_point() {
    let cfg = Config::default();
    let values = [0.12, 0.24, 0.36];
    let staged = small(
        ExperimentPlan::new("c2", SweepAxis::DemandSigma, &values)
            .with(&[Intervention::Composition]),
        128,
    );
    let jit = small(
        ExperimentPlan::new("c3", SweepAxis::DemandSigma, &values)
            .with(&[Intervention::Composition, Intervention::JustInTime]),
        128,
    );
    let a = run(&staged, &cfg, &RunOptions::default()).unwrap();
    let b = run(&jit, &cfg, &RunOptions::default()).unwrap();
    for (x, y) in a.points.iter().zip(&b.points) {
        let (m2, m3) = (x.mean().unwrap(), y.mean().unwrap());
        assert!(
            m3 >= m2 - 0.005 * m2.abs(),
            "sigma {}: {m3} < {m2}",
            x.parameter
        );
    }
}

#[test]
fn failed_points_are_recorded_and_the_rest_continue() {
    // Three demand axes with a huge stratified grid only fail once they are random.
    let mut plan = ExperimentPlan::new("grid", SweepAxis::DemandSigma, &[0.0, 0.2]);
    plan.strategy = Some(Strategy::StratifiedEquiProbable { n: 100_000 });
    let r = run(&plan, &Config::default(), &RunOptions::default()).unwrap();
    assert_eq!(r.points.len(), 2);
    assert!(r.points[0].error.is_none());
    assert_eq!(r.failures(), 1);
    assert!(r.points[1].error.as_deref().unwrap().contains("scenarios"));
}

#[test]
fn seeds_multiply_rows() {
    let mut plan = small(
        ExperimentPlan::new("s", SweepAxis::SupplySigma, &[0.1, 0.2]),
        16,
    );
    plan.seeds = vec![3, 4, 5];
    let r = run(&plan, &Config::default(), &RunOptions::default()).unwrap();
    let keys: Vec<(f64, u64)> = r.points.iter().map(|p| (p.parameter, p.seed)).collect();
    assert_eq!(
        keys,
        vec![(0.1, 3), (0.1, 4), (0.1, 5), (0.2, 3), (0.2, 4), (0.2, 5)]
    );
    let one = run(
        &plan,
        &Config::default(),
        &RunOptions {
            seed: Some(4),
            dump_lp: false,
        },
    )
    .unwrap();
    assert_eq!(one.points.len(), 2);
    assert_eq!(one.points[0].mean(), r.points[1].mean());
}
