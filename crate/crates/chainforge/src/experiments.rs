//! Declarative sweeps: build a market per sweep point, sample scenarios,
//! optimize orders, and compare against the no-intervention baseline.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use chainforge_core::engine::policy_report;
use chainforge_core::market::{
    add_adaptation, add_composition, add_dispersion, add_market_mechanism, build_baseline,
    build_multi_isa, clone_id, DispersionMode, INTERPOSER_GOOD,
};
use chainforge_core::order::TracePoint;
use chainforge_core::uncertainty::Correlation;
use chainforge_core::{
    constrained_rerun, optimize, sample, BaselineRef, Distribution, Lambda, MarketSpec, Model,
    OptimizationResult, ProfitReport, RecourseStage, Strategy,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("market: {0}")]
    Market(#[from] chainforge_core::market::MarketError),
    #[error("cost model: {0}")]
    Cost(#[from] chainforge_core::chipcost::CostError),
    #[error("sampling: {0}")]
    Sample(#[from] chainforge_core::uncertainty::SampleError),
    #[error("optimizer: {0}")]
    Optimize(#[from] chainforge_core::order::OptimizeError),
    #[error("engine: {0}")]
    Engine(#[from] chainforge_core::engine::EngineError),
    #[error("plan {plan}: {message}")]
    Plan { plan: String, message: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    Composition,
    Adaptation,
    DispersionUnique,
    DispersionTwo,
    /// Map after demand is known.
    JustInTime,
    MarketMechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SupplySigma,
    DemandSigma,
    BothSigma,
    /// Cap the target goods at `s` times their unconstrained orders.
    ConstraintFactor,
    /// Probability that supply (or demand) of the target goods is zero.
    ShockFactor,
    /// Salvage value as a multiple of the matching produced good's unit cost.
    SalvageFactor,
    /// Cap interposer orders at `s` times their unconstrained orders.
    InterposerConstraint,
    /// Share of NRE the second supplier reuses.
    NreReuse,
    /// Pearson correlation between every pair of demand multipliers.
    DemandPcc,
    MultiIsaCostScale,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SupplySigma => "supply_sigma",
            SweepAxis::DemandSigma => "demand_sigma",
            SweepAxis::BothSigma => "both_sigma",
            SweepAxis::ConstraintFactor => "constraint_factor",
            SweepAxis::ShockFactor => "shock_factor",
            SweepAxis::SalvageFactor => "salvage_factor",
            SweepAxis::InterposerConstraint => "interposer_constraint",
            SweepAxis::NreReuse => "nre_reuse",
            SweepAxis::DemandPcc => "demand_pcc",
            SweepAxis::MultiIsaCostScale => "multi_isa_cost_scale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMarket {
    /// One chip per configured core count.
    #[default]
    Chips,
    /// Two single-ISA chips; the multi-ISA chip is the intervention.
    MultiIsa,
    /// The explicit market under `[market.custom]`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockSide {
    #[default]
    Supply,
    Demand,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    #[serde(default)]
    pub base: BaseMarket,
    #[serde(default)]
    pub interventions: Vec<Intervention>,
    pub axis: SweepAxis,
    /// Sweep values, ascending.
    pub values: Vec<f64>,
    /// Supply sigma when the axis does not set it.
    #[serde(default)]
    pub supply_sigma: f64,
    /// Demand sigma when the axis does not set it.
    #[serde(default)]
    pub demand_sigma: f64,
    /// Goods hit by constraint and shock axes. Constraints default to all
    /// produced goods.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub shock_side: ShockSide,
    #[serde(default = "one")]
    pub nre_share: f64,
    #[serde(default)]
    pub demand_pcc: f64,
    #[serde(default = "one")]
    pub cost_scale: f64,
    /// Scenario seeds; empty means the sampling seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Overrides the sampling strategy.
    #[serde(default)]
    pub strategy: Option<Strategy>,
}

impl ExperimentPlan {
    pub fn new(name: &str, axis: SweepAxis, values: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            base: BaseMarket::Chips,
            interventions: Vec::new(),
            axis,
            values: values.to_vec(),
            supply_sigma: 0.0,
            demand_sigma: 0.0,
            targets: Vec::new(),
            shock_side: ShockSide::Supply,
            nre_share: 1.0,
            demand_pcc: 0.0,
            cost_scale: 1.0,
            seeds: Vec::new(),
            strategy: None,
        }
    }

    pub fn with(mut self, interventions: &[Intervention]) -> Self {
        self.interventions = interventions.to_vec();
        self
    }

    /// Problems with the plan, as `field: message` strings.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.is_empty() {
            out.push("name: must not be empty".to_string());
        }
        if self.values.is_empty() {
            out.push("values: must not be empty".to_string());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            out.push("values: must be finite".to_string());
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            out.push("values: must be sorted ascending".to_string());
        }
        let has = |i| self.interventions.contains(&i);
        if has(Intervention::DispersionUnique) && has(Intervention::DispersionTwo) {
            out.push("interventions: dispersion_two excludes dispersion_unique".to_string());
        }
        let range = |lo: f64, hi: f64| self.values.iter().all(|v| (lo..=hi).contains(v));
        match self.axis {
            SweepAxis::SupplySigma | SweepAxis::DemandSigma | SweepAxis::BothSigma => {
                if !range(0.0, f64::INFINITY) {
                    out.push("values: sigma must be >= 0".to_string());
                }
            }
            SweepAxis::ConstraintFactor
            | SweepAxis::ShockFactor
            | SweepAxis::InterposerConstraint
            | SweepAxis::NreReuse => {
                if !range(0.0, 1.0) {
                    out.push(format!("values: {} must lie in [0, 1]", self.axis.name()));
                }
            }
            SweepAxis::SalvageFactor | SweepAxis::MultiIsaCostScale => {
                if !range(0.0, f64::INFINITY) {
                    out.push(format!("values: {} must be >= 0", self.axis.name()));
                }
            }
            SweepAxis::DemandPcc => {
                if !range(-1.0, 1.0) {
                    out.push("values: demand_pcc must lie in [-1, 1]".to_string());
                }
            }
        }
        if self.axis == SweepAxis::ShockFactor && self.targets.is_empty() {
            out.push("targets: shock_factor needs at least one target good".to_string());
        }
        if self.axis == SweepAxis::InterposerConstraint && !has(Intervention::Composition) {
            out.push("interventions: interposer_constraint needs composition".to_string());
        }
        if self.axis == SweepAxis::MultiIsaCostScale && self.base != BaseMarket::MultiIsa {
            out.push("base: multi_isa_cost_scale needs base = \"multi_isa\"".to_string());
        }
        if self.supply_sigma < 0.0 || self.demand_sigma < 0.0 {
            out.push("supply_sigma/demand_sigma: must be >= 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.nre_share) {
            out.push("nre_share: must lie in [0, 1]".to_string());
        }
        if !(-1.0..=1.0).contains(&self.demand_pcc) {
            out.push("demand_pcc: must lie in [-1, 1]".to_string());
        }
        out
    }
}

/// Every parameter a sweep point can set.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    supply_sigma: f64,
    demand_sigma: f64,
    pcc: f64,
    shock: f64,
    salvage: f64,
    nre_share: f64,
    cost_scale: f64,
    /// Order cap factor and whether it targets the interposer.
    cap: Option<(f64, bool)>,
}

impl Point {
    fn of(plan: &ExperimentPlan, v: f64) -> Self {
        let mut p = Point {
            supply_sigma: plan.supply_sigma,
            demand_sigma: plan.demand_sigma,
            pcc: plan.demand_pcc,
            shock: 0.0,
            salvage: 0.0,
            nre_share: plan.nre_share,
            cost_scale: plan.cost_scale,
            cap: None,
        };
        match plan.axis {
            SweepAxis::SupplySigma => p.supply_sigma = v,
            SweepAxis::DemandSigma => p.demand_sigma = v,
            SweepAxis::BothSigma => {
                p.supply_sigma = v;
                p.demand_sigma = v;
            }
            SweepAxis::ConstraintFactor => p.cap = Some((v, false)),
            SweepAxis::InterposerConstraint => p.cap = Some((v, true)),
            SweepAxis::ShockFactor => p.shock = v,
            SweepAxis::SalvageFactor => p.salvage = v,
            SweepAxis::NreReuse => p.nre_share = v,
            SweepAxis::DemandPcc => p.pcc = v,
            SweepAxis::MultiIsaCostScale => p.cost_scale = v,
        }
        p
    }

    /// The same structure with every source of uncertainty and every
    /// perturbation removed.
    fn clean(self) -> Self {
        Point {
            supply_sigma: 0.0,
            demand_sigma: 0.0,
            pcc: 0.0,
            shock: 0.0,
            salvage: 0.0,
            cap: None,
            ..self
        }
    }
}

fn plan_error(plan: &ExperimentPlan, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Plan {
        plan: plan.name.clone(),
        message: message.into(),
    }
}

/// Market for one sweep point, with or without the plan's interventions.
pub fn build_spec(
    plan: &ExperimentPlan,
    cfg: &Config,
    value: f64,
    with_interventions: bool,
) -> Result<MarketSpec, ExperimentError> {
    build_point(plan, cfg, Point::of(plan, value), with_interventions)
}

fn build_point(
    plan: &ExperimentPlan,
    cfg: &Config,
    p: Point,
    with_interventions: bool,
) -> Result<MarketSpec, ExperimentError> {
    let costs = &cfg.chipcost;
    let mut spec = match plan.base {
        BaseMarket::Chips => build_baseline(&cfg.market.cores, costs)?,
        BaseMarket::MultiIsa => {
            let mut s = build_multi_isa(cfg.market.multi_isa_cores, costs, p.cost_scale)?;
            if !with_interventions {
                s.produced.retain(|g| g.id != "multi");
                s.mappings.retain(|m| !m.inputs.contains_key("multi"));
            }
            s
        }
        BaseMarket::Custom => cfg
            .market
            .custom
            .clone()
            .ok_or_else(|| plan_error(plan, "base = \"custom\" needs [market.custom]"))?,
    };

    // Uncertainty. A custom market keeps its own unless the point sets sigma.
    let keep_custom = plan.base == BaseMarket::Custom;
    if !keep_custom || p.supply_sigma > 0.0 {
        spec.uncertainty.supply.clear();
        if p.supply_sigma > 0.0 {
            let suppliers: Vec<String> = spec.suppliers().iter().map(|s| s.to_string()).collect();
            for s in suppliers {
                spec.uncertainty
                    .supply
                    .insert(s, Distribution::normal(p.supply_sigma));
            }
        }
    }
    if !keep_custom || p.demand_sigma > 0.0 {
        spec.uncertainty.demand.clear();
        spec.uncertainty.demand_correlation = None;
        if p.demand_sigma > 0.0 {
            for d in &spec.demanded {
                if d.base_demand > 0.0 {
                    spec.uncertainty
                        .demand
                        .insert(d.id.clone(), Distribution::normal(p.demand_sigma));
                }
            }
        }
    }
    if p.pcc != 0.0 && spec.uncertainty.demand.len() > 1 {
        let goods: Vec<String> = spec.uncertainty.demand.keys().cloned().collect();
        let n = goods.len();
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { p.pcc }).collect())
            .collect();
        spec.uncertainty.demand_correlation = Some(Correlation { goods, matrix });
    }

    if p.salvage > 0.0 {
        for d in &mut spec.demanded {
            if let Some(g) = spec.produced.iter().find(|g| g.id == d.id) {
                d.salvage_value = p.salvage * g.unit_cost;
            }
        }
    }

    if plan.axis == SweepAxis::ShockFactor {
        for t in &plan.targets {
            match plan.shock_side {
                ShockSide::Supply => {
                    let g = spec
                        .produced
                        .iter_mut()
                        .find(|g| &g.id == t)
                        .ok_or_else(|| {
                            plan_error(plan, format!("shock target {t} is not produced"))
                        })?;
                    let sid = format!("{t}-shock");
                    g.supplier_id = sid.clone();
                    spec.uncertainty
                        .supply
                        .insert(sid, Distribution::Shock { prob: p.shock });
                }
                ShockSide::Demand => {
                    if spec.demanded_index(t).is_none() {
                        return Err(plan_error(
                            plan,
                            format!("shock target {t} is not demanded"),
                        ));
                    }
                    spec.uncertainty
                        .demand
                        .insert(t.clone(), Distribution::Shock { prob: p.shock });
                }
            }
        }
        let used: Vec<String> = spec
            .produced
            .iter()
            .map(|g| g.supplier_id.clone())
            .collect();
        spec.uncertainty.supply.retain(|k, _| used.contains(k));
    }

    if with_interventions {
        let has = |i| plan.interventions.contains(&i);
        if has(Intervention::Composition) {
            let as_good =
                cfg.market.interposer_as_good || plan.axis == SweepAxis::InterposerConstraint;
            spec = add_composition(spec, costs.interposer_cost_16()?, as_good)?;
        }
        if has(Intervention::Adaptation) {
            spec = add_adaptation(spec)?;
        }
        if has(Intervention::DispersionUnique) {
            spec = add_dispersion(spec, DispersionMode::UniquePerGood, p.nre_share)?;
        }
        if has(Intervention::DispersionTwo) {
            spec = add_dispersion(spec, DispersionMode::TwoSuppliersAll, p.nre_share)?;
        }
        if has(Intervention::MarketMechanism) {
            spec = add_market_mechanism(spec);
        }
        // Core disabling happens at sale time, once demand is known.
        if has(Intervention::JustInTime) || has(Intervention::Adaptation) {
            spec.recourse_stage = RecourseStage::MappingAfterSupplyAndDemand;
        }
    }
    Ok(spec.ensure_valid()?)
}

/// Produced goods a cap applies to in `spec`.
fn cap_targets(plan: &ExperimentPlan, spec: &MarketSpec, interposer: bool) -> Vec<String> {
    if interposer {
        return spec
            .produced_index(INTERPOSER_GOOD)
            .map(|_| vec![INTERPOSER_GOOD.to_string()])
            .unwrap_or_default();
    }
    if plan.targets.is_empty() {
        return spec.produced.iter().map(|g| g.id.clone()).collect();
    }
    let mut out = Vec::new();
    for t in &plan.targets {
        if spec.produced_index(t).is_some() {
            out.push(t.clone());
        } else {
            for side in ['A', 'B'] {
                let c = clone_id(t, side);
                if spec.produced_index(&c).is_some() {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Everything one optimization produced.
pub struct Solved {
    pub spec: MarketSpec,
    pub result: OptimizationResult,
    pub report: ProfitReport,
    pub scenarios: usize,
    pub lp_dump: Option<String>,
}

fn solve_point(
    plan: &ExperimentPlan,
    cfg: &Config,
    p: Point,
    with_interventions: bool,
    strategy: Strategy,
    seed: u64,
    dump_lp: bool,
) -> Result<Solved, ExperimentError> {
    let spec = build_point(plan, cfg, p, with_interventions)?;
    let set = sample(&spec.uncertainty, strategy, seed)?;
    let result = match p.cap {
        Some((s, interposer)) => {
            let targets = cap_targets(plan, &spec, interposer);
            let refs: Vec<&str> = targets.iter().map(|s| s.as_str()).collect();
            constrained_rerun(&spec, &set, &cfg.optimizer, s, &refs)?
        }
        None => optimize(&spec, &set, &cfg.optimizer)?,
    };
    let model = Model::new(spec.clone())?;
    let report = policy_report(&model, &result.policy, &set, None)?;
    let lp_dump = dump_lp.then(|| first_scenario_lp(&model, &set, &result));
    Ok(Solved {
        spec,
        result,
        report,
        scenarios: set.len(),
        lp_dump,
    })
}

/// The recourse LP of the first scenario at the optimal orders, in CPLEX
/// LP format.
fn first_scenario_lp(
    model: &Model,
    set: &chainforge_core::ScenarioSet,
    result: &OptimizationResult,
) -> String {
    let s = &set.scenarios[0];
    let values = model.scenario_values(s);
    let obtained = model.obtained(&result.policy.order_qty, s);
    let (lp, names, _) = model.recourse().segment_lp(&values, &obtained);
    lp.to_lp_format(Some(&names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub parameter: f64,
    pub seed: u64,
    pub scenarios: usize,
    pub expected_profit: f64,
    pub baseline_mean: Option<f64>,
    pub lambda: Option<Lambda>,
    /// Lambda with the intervention's zero-uncertainty gain removed.
    pub lambda_normalized: Option<Lambda>,
    pub report: Option<ProfitReport>,
    pub order_qty: Vec<(String, f64)>,
    pub ordered_goods: Vec<String>,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub trace: Vec<TracePoint>,
    pub error: Option<String>,
}

impl PointResult {
    fn failed(parameter: f64, seed: u64, e: ExperimentError) -> Self {
        PointResult {
            parameter,
            seed,
            scenarios: 0,
            expected_profit: f64::NAN,
            baseline_mean: None,
            lambda: None,
            lambda_normalized: None,
            report: None,
            order_qty: Vec::new(),
            ordered_goods: Vec::new(),
            evaluations: 0,
            budget_exhausted: false,
            trace: Vec::new(),
            error: Some(e.to_string()),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.mean)
    }

    pub fn std(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub axis: SweepAxis,
    pub interventions: Vec<Intervention>,
    pub strategy: Strategy,
    /// Baseline mean profit with no uncertainty.
    pub zero_uncertainty_baseline: f64,
    /// Intervention mean profit with no uncertainty, per sweep value.
    pub zero_uncertainty_intervention: Vec<(f64, f64)>,
    pub points: Vec<PointResult>,
    pub wall_time_s: f64,
    /// Recourse LPs of the first scenario, one per point, when requested.
    #[serde(skip)]
    pub lp_dumps: Vec<(String, String)>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    /// The first point at `parameter`.
    pub fn point(&self, parameter: f64) -> Option<&PointResult> {
        self.points.iter().find(|p| p.parameter == parameter)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the plan's seeds with this one.
    pub seed: Option<u64>,
    pub dump_lp: bool,
}

/// Run a plan. Points run in parallel on the current rayon pool; results
/// come back in (value, seed) order and do not depend on the pool size.
pub fn run(
    plan: &ExperimentPlan,
    cfg: &Config,
    opts: &RunOptions,
) -> Result<SweepResult, ExperimentError> {
    let problems = plan.problems();
    if !problems.is_empty() {
        return Err(plan_error(plan, problems.join("; ")));
    }
    let start = Instant::now();
    let strategy = plan.strategy.unwrap_or(cfg.sampling.strategy);
    let seeds: Vec<u64> = match opts.seed {
        Some(s) => vec![s],
        None if plan.seeds.is_empty() => vec![cfg.sampling.seed],
        None => plan.seeds.clone(),
    };
    // With a multi-ISA base the multi chip is itself the intervention.
    let intervened = !plan.interventions.is_empty() || plan.base == BaseMarket::MultiIsa;

    let clean = Point::of(plan, plan.values[0]).clean();
    let b0 = solve_point(plan, cfg, clean, false, Strategy::Exhaustive, 0, false)?
        .result
        .expected_profit;
    // The intervention's zero-uncertainty profit can depend on structural
    // sweep values, so compute it per distinct value.
    let mut distinct: Vec<f64> = plan.values.clone();
    distinct.dedup();
    let c0: Vec<(f64, f64)> = if intervened {
        distinct
            .par_iter()
            .map(|&v| {
                let p = Point::of(plan, v).clean();
                solve_point(plan, cfg, p, true, Strategy::Exhaustive, 0, false)
                    .map(|s| (v, s.result.expected_profit))
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        distinct.iter().map(|&v| (v, b0)).collect()
    };
    let c0_of = |v: f64| c0.iter().find(|(x, _)| *x == v).map(|c| c.1).unwrap_or(b0);

    let tasks: Vec<(f64, u64)> = plan
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let outcomes: Vec<(PointResult, Option<String>)> = tasks
        .par_iter()
        .map(|&(v, seed)| {
            let p = Point::of(plan, v);
            let main = solve_point(plan, cfg, p, true, strategy, seed, opts.dump_lp);
            let base = if intervened {
                solve_point(plan, cfg, p, false, strategy, seed, false).map(|b| Some(b.report.mean))
            } else {
                Ok(None)
            };
            match (main, base) {
                (Ok(m), Ok(b)) => {
                    let baseline_mean = b.unwrap_or(m.report.mean);
                    let bref = BaselineRef {
                        mean: baseline_mean,
                        zero_uncertainty_mean: b0,
                    };
                    let lambda = Lambda::compute(m.report.mean, bref);
                    let lambda_normalized = Lambda::compute(m.report.mean - (c0_of(v) - b0), bref);
                    let mut report = m.report;
                    report.lambda = Some(lambda);
                    let order_qty = m
                        .spec
                        .produced
                        .iter()
                        .zip(&m.result.policy.order_qty)
                        .map(|(g, &q)| (g.id.clone(), q))
                        .collect();
                    (
                        PointResult {
                            parameter: v,
                            seed,
                            scenarios: m.scenarios,
                            expected_profit: m.result.expected_profit,
                            baseline_mean: Some(baseline_mean),
                            lambda: Some(lambda),
                            lambda_normalized: Some(lambda_normalized),
                            report: Some(report),
                            order_qty,
                            ordered_goods: m.result.ordered_goods,
                            evaluations: m.result.evaluations,
                            budget_exhausted: m.result.budget_exhausted,
                            trace: m.result.trace,
                            error: None,
                        },
                        m.lp_dump,
                    )
                }
                (Err(e), _) | (_, Err(e)) => (PointResult::failed(v, seed, e), None),
            }
        })
        .collect();

    let mut points = Vec::with_capacity(outcomes.len());
    let mut lp_dumps = Vec::new();
    for (k, (p, lp)) in outcomes.into_iter().enumerate() {
        if let Some(lp) = lp {
            lp_dumps.push((format!("{}_{k}.lp", plan.name), lp));
        }
        points.push(p);
    }
    Ok(SweepResult {
        name: plan.name.clone(),
        axis: plan.axis,
        interventions: plan.interventions.clone(),
        strategy,
        zero_uncertainty_baseline: b0,
        zero_uncertainty_intervention: c0,
        points,
        wall_time_s: start.elapsed().as_secs_f64(),
        lp_dumps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub parameter: f64,
    pub seed: u64,
    pub lambda: Lambda,
}

/// Lambda of `results` against a separately run `baseline` on the same axis.
pub fn lambda_table(
    results: &SweepResult,
    baseline: &SweepResult,
) -> Result<Vec<LambdaRow>, ExperimentError> {
    let mismatch = |m: String| ExperimentError::Plan {
        plan: results.name.clone(),
        message: m,
    };
    if results.axis != baseline.axis {
        return Err(mismatch(format!(
            "axis {} does not match baseline axis {}",
            results.axis.name(),
            baseline.axis.name()
        )));
    }
    let mut out = Vec::new();
    for p in &results.points {
        let b = baseline
            .points
            .iter()
            .find(|b| b.parameter == p.parameter && b.seed == p.seed)
            .ok_or_else(|| {
                mismatch(format!(
                    "baseline has no point {} seed {}",
                    p.parameter, p.seed
                ))
            })?;
        let (Some(i), Some(bm)) = (p.mean(), b.mean()) else {
            continue;
        };
        out.push(LambdaRow {
            parameter: p.parameter,
            seed: p.seed,
            lambda: Lambda::compute(
                i,
                BaselineRef {
                    mean: bm,
                    zero_uncertainty_mean: baseline.zero_uncertainty_baseline,
                },
            ),
        });
    }
    Ok(out)
}

/// Order-share columns across all points, in first-appearance order.
pub fn share_columns(result: &SweepResult) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for p in &result.points {
        for (g, _) in &p.order_qty {
            if !cols.contains(g) {
                cols.push(g.clone());
            }
        }
    }
    cols
}

/// Per-good share lookup of one point.
pub fn shares_of(p: &PointResult) -> BTreeMap<&str, f64> {
    p.report
        .as_ref()
        .map(|r| {
            r.order_shares
                .iter()
                .map(|(g, s)| (g.as_str(), *s))
                .collect()
        })
        .unwrap_or_default()
}
