//! Scenario accounting, expected profit and report statistics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{MarketSpec, RecourseStage, Violation};
use crate::math::sqrt;
use crate::recourse::{demand_value, ConcavePwl, RecourseModel};
use crate::uncertainty::{Scenario, ScenarioSet};
use crate::{ORDER_EPSILON, USAGE_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid spec: {}", .0.iter().map(|v| alloc::format!("{v}")).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<Violation>),
    #[error("mapping usage draws {used} units of {good} but only {obtained} were obtained")]
    InfeasibleUsage {
        good: String,
        used: f64,
        obtained: f64,
    },
    #[error("scenario axes do not match the spec's uncertainty config")]
    AxesMismatch,
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("policy has no mapping usage for scenario {0}")]
    MissingUsage(usize),
}

/// A validated spec with ids resolved to indices.
#[derive(Debug, Clone)]
pub struct Model {
    spec: MarketSpec,
    recourse: RecourseModel,
    supply_axes: Vec<String>,
    demand_axes: Vec<String>,
    supply_axis: Vec<Option<usize>>,
    demand_axis: Vec<Option<usize>>,
}

impl Model {
    pub fn new(spec: MarketSpec) -> Result<Self, EngineError> {
        let violations = spec.validate();
        if !violations.is_empty() {
            return Err(EngineError::InvalidSpec(violations));
        }
        let supply_axes: Vec<String> = spec.uncertainty.supply.keys().cloned().collect();
        let demand_axes: Vec<String> = spec.uncertainty.demand.keys().cloned().collect();
        let supply_axis = spec
            .produced
            .iter()
            .map(|g| supply_axes.iter().position(|a| *a == g.supplier_id))
            .collect();
        let demand_axis = spec
            .demanded
            .iter()
            .map(|d| demand_axes.iter().position(|a| *a == d.id))
            .collect();
        Ok(Self {
            recourse: RecourseModel::new(&spec),
            spec,
            supply_axes,
            demand_axes,
            supply_axis,
            demand_axis,
        })
    }

    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    pub fn recourse(&self) -> &RecourseModel {
        &self.recourse
    }

    pub fn num_produced(&self) -> usize {
        self.spec.produced.len()
    }

    pub fn num_demanded(&self) -> usize {
        self.spec.demanded.len()
    }

    pub fn num_mappings(&self) -> usize {
        self.spec.mappings.len()
    }

    pub fn check_set(&self, set: &ScenarioSet) -> Result<(), EngineError> {
        if set.supply_axes != self.supply_axes || set.demand_axes != self.demand_axes {
            return Err(EngineError::AxesMismatch);
        }
        Ok(())
    }

    pub fn received(&self, q: &[f64], s: &Scenario) -> Vec<f64> {
        q.iter()
            .zip(&self.supply_axis)
            .map(|(&q, a)| q * a.map_or(1.0, |k| s.supply[k]))
            .collect()
    }

    pub fn obtained(&self, q: &[f64], s: &Scenario) -> Vec<f64> {
        self.received(q, s)
            .iter()
            .zip(&self.spec.produced)
            .map(|(r, g)| r * g.yield_rate)
            .collect()
    }

    pub fn demanded(&self, s: &Scenario) -> Vec<f64> {
        self.spec
            .demanded
            .iter()
            .zip(&self.demand_axis)
            .map(|(d, a)| d.base_demand * a.map_or(1.0, |k| s.demand[k]))
            .collect()
    }

    /// Production cost: paid on received units plus NRE of every ordered good.
    pub fn production_cost(&self, q: &[f64], s: &Scenario) -> f64 {
        let recv = self.received(q, s);
        let mut c = 0.0;
        for (i, g) in self.spec.produced.iter().enumerate() {
            c += recv[i] * g.unit_cost;
        }
        for (i, g) in self.spec.produced.iter().enumerate() {
            if q[i] > ORDER_EPSILON {
                c += g.nre;
            }
        }
        c
    }

    /// Per-good value functions for one scenario's realized demand.
    pub fn scenario_values(&self, s: &Scenario) -> Vec<ConcavePwl> {
        self.spec
            .demanded
            .iter()
            .zip(self.demanded(s))
            .map(|(g, d)| demand_value(g, d))
            .collect()
    }
}

/// Stage-1 orders plus mapping usage for every scenario of a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub order_qty: Vec<f64>,
    pub ordered: Vec<bool>,
    /// `usage[s][j]`: uses of mapping `j` in scenario `s`.
    pub usage: Vec<Vec<f64>>,
}

impl DecisionPolicy {
    /// Orders with the tiny-quantity cleanup applied: anything at or below
    /// the order epsilon becomes exactly zero and not ordered.
    pub fn from_orders(order_qty: &[f64], usage: Vec<Vec<f64>>) -> Self {
        let q: Vec<f64> = order_qty
            .iter()
            .map(|&x| if x > ORDER_EPSILON { x } else { 0.0 })
            .collect();
        Self {
            ordered: q.iter().map(|&x| x > 0.0).collect(),
            order_qty: q,
            usage,
        }
    }

    /// Fraction of the total order placed on each good.
    pub fn order_shares(&self) -> Vec<f64> {
        let total: f64 = self.order_qty.iter().sum();
        self.order_qty
            .iter()
            .map(|&q| if total > 0.0 { q / total } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub received: Vec<f64>,
    pub obtained: Vec<f64>,
    pub used: Vec<f64>,
    pub built: Vec<f64>,
    pub demanded: Vec<f64>,
    pub sold: Vec<f64>,
    pub tc_prod: f64,
    pub tc_map: f64,
    pub tc_ben: f64,
    pub tc_short: f64,
    pub tc_salv: f64,
    pub profit: f64,
}

/// Profit of one scenario under fixed orders and mapping usage.
pub fn evaluate_scenario(
    model: &Model,
    order_qty: &[f64],
    usage: &[f64],
    scenario: &Scenario,
) -> Result<ProfitBreakdown, EngineError> {
    let spec = &model.spec;
    if order_qty.len() != spec.produced.len() {
        return Err(EngineError::Length {
            what: "order_qty",
            got: order_qty.len(),
            expected: spec.produced.len(),
        });
    }
    if usage.len() != spec.mappings.len() {
        return Err(EngineError::Length {
            what: "usage",
            got: usage.len(),
            expected: spec.mappings.len(),
        });
    }
    let received = model.received(order_qty, scenario);
    let obtained: Vec<f64> = received
        .iter()
        .zip(&spec.produced)
        .map(|(r, g)| r * g.yield_rate)
        .collect();
    let used = model.recourse.used(usage);
    for (i, g) in spec.produced.iter().enumerate() {
        if used[i] - obtained[i] > USAGE_TOLERANCE * obtained[i].abs().max(1.0) {
            return Err(EngineError::InfeasibleUsage {
                good: g.id.clone(),
                used: used[i],
                obtained: obtained[i],
            });
        }
    }
    let built = model.recourse.built(usage);
    let demanded = model.demanded(scenario);
    let sold: Vec<f64> = demanded
        .iter()
        .zip(&built)
        .map(|(d, b)| d.min(*b))
        .collect();

    let mut tc_prod = 0.0;
    for (i, g) in spec.produced.iter().enumerate() {
        tc_prod += received[i] * g.unit_cost;
    }
    for (i, g) in spec.produced.iter().enumerate() {
        if order_qty[i] > ORDER_EPSILON {
            tc_prod += g.nre;
        }
    }
    let tc_map: f64 = spec
        .mappings
        .iter()
        .zip(usage)
        .map(|(m, u)| m.cost_per_use * u)
        .sum();
    let mut tc_ben = 0.0;
    let mut tc_short = 0.0;
    let mut tc_salv = 0.0;
    for (d, g) in spec.demanded.iter().enumerate() {
        let price = match g.demand_curve {
            Some(c) => c.price(sold[d], demanded[d]),
            None => g.unit_benefit,
        };
        tc_ben += price * sold[d];
        tc_short += g.unit_shortage_cost * (demanded[d] - sold[d]);
        tc_salv += g.salvage_value * (built[d] - sold[d]);
    }
    let profit = tc_ben + tc_salv - tc_prod - tc_map - tc_short;
    Ok(ProfitBreakdown {
        received,
        obtained,
        used,
        built,
        demanded,
        sold,
        tc_prod,
        tc_map,
        tc_ben,
        tc_short,
        tc_salv,
        profit,
    })
}

/// Per-scenario profits of a policy, in scenario order.
pub fn scenario_profits(
    model: &Model,
    policy: &DecisionPolicy,
    set: &ScenarioSet,
) -> Result<Vec<f64>, EngineError> {
    model.check_set(set)?;
    if policy.usage.len() < set.len() {
        return Err(EngineError::MissingUsage(policy.usage.len()));
    }
    let results = map_indexed(set.len(), |s| {
        evaluate_scenario(
            model,
            &policy.order_qty,
            &policy.usage[s],
            &set.scenarios[s],
        )
        .map(|b| b.profit)
    });
    results.into_iter().collect()
}

/// Probability-weighted profit, accumulated in scenario order.
pub fn expected_profit(
    model: &Model,
    policy: &DecisionPolicy,
    set: &ScenarioSet,
) -> Result<f64, EngineError> {
    let profits = scenario_profits(model, policy, set)?;
    Ok(profits
        .iter()
        .zip(&set.scenarios)
        .map(|(p, s)| p * s.weight)
        .sum())
}

/// Evaluate `f` on `0..n`, in parallel when enabled; output is in index
/// order either way.
pub(crate) fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 16 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// A scenario set bound to a model, with demand value functions built once
/// so that many candidate orders can be scored quickly.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    model: &'a Model,
    set: &'a ScenarioSet,
    stage: RecourseStage,
    groups: Vec<Range<usize>>,
    group_weight: Vec<f64>,
    /// Stage 3: one entry per scenario. Stage 2: one entry per group.
    values: Vec<Vec<ConcavePwl>>,
}

impl<'a> Prepared<'a> {
    pub fn new(model: &'a Model, set: &'a ScenarioSet) -> Result<Self, EngineError> {
        Self::with_stage(model, set, model.spec.recourse_stage)
    }

    pub fn with_stage(
        model: &'a Model,
        set: &'a ScenarioSet,
        stage: RecourseStage,
    ) -> Result<Self, EngineError> {
        model.check_set(set)?;
        let groups = set.supply_groups();
        let group_weight: Vec<f64> = groups
            .iter()
            .map(|g| set.scenarios[g.clone()].iter().map(|s| s.weight).sum())
            .collect();
        let values = match stage {
            RecourseStage::MappingAfterSupplyAndDemand => set
                .scenarios
                .iter()
                .map(|s| model.scenario_values(s))
                .collect(),
            RecourseStage::MappingAfterSupply => groups
                .iter()
                .zip(&group_weight)
                .map(|(g, &gw)| {
                    let per: Vec<Vec<ConcavePwl>> = set.scenarios[g.clone()]
                        .iter()
                        .map(|s| model.scenario_values(s))
                        .collect();
                    (0..model.num_demanded())
                        .map(|d| {
                            ConcavePwl::weighted_sum(
                                set.scenarios[g.clone()]
                                    .iter()
                                    .zip(&per)
                                    .map(|(s, v)| (s.weight / gw, &v[d])),
                            )
                        })
                        .collect()
                })
                .collect(),
        };
        Ok(Self {
            model,
            set,
            stage,
            groups,
            group_weight,
            values,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn set(&self) -> &ScenarioSet {
        self.set
    }

    pub fn stage(&self) -> RecourseStage {
        self.stage
    }

    /// Expected profit of orders `q` with optimal recourse.
    pub fn objective(&self, q: &[f64]) -> f64 {
        let parts = match self.stage {
            RecourseStage::MappingAfterSupplyAndDemand => map_indexed(self.set.len(), |s| {
                let sc = &self.set.scenarios[s];
                let obtained = self.model.obtained(q, sc);
                let r = self.model.recourse.solve(&self.values[s], &obtained);
                sc.weight * (r.value - self.model.production_cost(q, sc))
            }),
            RecourseStage::MappingAfterSupply => map_indexed(self.groups.len(), |g| {
                let sc = &self.set.scenarios[self.groups[g].start];
                let obtained = self.model.obtained(q, sc);
                let r = self.model.recourse.solve(&self.values[g], &obtained);
                self.group_weight[g] * (r.value - self.model.production_cost(q, sc))
            }),
        };
        parts.iter().sum()
    }

    /// Optimal mapping usage for every scenario under orders `q`.
    pub fn usage(&self, q: &[f64]) -> Vec<Vec<f64>> {
        match self.stage {
            RecourseStage::MappingAfterSupplyAndDemand => map_indexed(self.set.len(), |s| {
                let obtained = self.model.obtained(q, &self.set.scenarios[s]);
                self.model.recourse.solve(&self.values[s], &obtained).usage
            }),
            RecourseStage::MappingAfterSupply => {
                let per_group = map_indexed(self.groups.len(), |g| {
                    let obtained = self
                        .model
                        .obtained(q, &self.set.scenarios[self.groups[g].start]);
                    self.model.recourse.solve(&self.values[g], &obtained).usage
                });
                let mut out = Vec::with_capacity(self.set.len());
                for (g, range) in self.groups.iter().enumerate() {
                    for _ in range.clone() {
                        out.push(per_group[g].clone());
                    }
                }
                out
            }
        }
    }

    pub fn policy(&self, q: &[f64]) -> DecisionPolicy {
        let clean = DecisionPolicy::from_orders(q, Vec::new());
        let usage = self.usage(&clean.order_qty);
        DecisionPolicy { usage, ..clean }
    }
}

/// Reference values for the loss-recovery percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRef {
    /// Baseline mean profit under the same uncertainty.
    pub mean: f64,
    /// Baseline mean profit with all uncertainty removed.
    pub zero_uncertainty_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Lambda {
    Value(f64),
    /// Baseline loses nothing to uncertainty, so there is nothing to recover.
    Undefined,
}

impl Lambda {
    /// `100 (I - B) / (B0 - B)`.
    pub fn compute(intervention_mean: f64, baseline: BaselineRef) -> Self {
        let den = baseline.zero_uncertainty_mean - baseline.mean;
        if den.abs() <= 1e-9 * baseline.zero_uncertainty_mean.abs() || den == 0.0 {
            Lambda::Undefined
        } else {
            Lambda::Value(100.0 * (intervention_mean - baseline.mean) / den)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Lambda::Value(v) => Some(*v),
            Lambda::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitReport {
    pub profits: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
    pub order_shares: Vec<(String, f64)>,
    pub lambda: Option<Lambda>,
}

/// Summary statistics of weighted scenario profits.
///
/// Quartiles use linear interpolation between order statistics when the
/// weights are uniform and the weighted inverse distribution otherwise.
/// Outliers lie beyond 1.5 IQR from the quartiles.
pub fn report(profits: &[f64], weights: &[f64], baseline: Option<BaselineRef>) -> ProfitReport {
    assert!(!profits.is_empty() && profits.len() == weights.len());
    let total: f64 = weights.iter().sum();
    let mean: f64 = profits.iter().zip(weights).map(|(p, w)| p * w).sum::<f64>() / total;
    let var: f64 = profits
        .iter()
        .zip(weights)
        .map(|(p, w)| w * (p - mean) * (p - mean))
        .sum::<f64>()
        / total;
    let mut order: Vec<usize> = (0..profits.len()).collect();
    order.sort_by(|&a, &b| profits[a].total_cmp(&profits[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| profits[i]).collect();
    let uniform = weights
        .iter()
        .all(|&w| (w - weights[0]).abs() <= 1e-12 * weights[0].abs());
    let quantile = |p: f64| -> f64 {
        if uniform {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        } else {
            let target = p * total;
            let mut cum = 0.0;
            for (k, &i) in order.iter().enumerate() {
                cum += weights[i];
                if (cum - target).abs() <= 1e-12 * total && k + 1 < sorted.len() {
                    return 0.5 * (sorted[k] + sorted[k + 1]);
                }
                if cum >= target {
                    return sorted[k];
                }
            }
            sorted[sorted.len() - 1]
        }
    };
    let (q1, median, q3) = (quantile(0.25), quantile(0.5), quantile(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    ProfitReport {
        profits: profits.to_vec(),
        weights: weights.to_vec(),
        mean,
        std: sqrt(var.max(0.0)),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        outliers: sorted
            .iter()
            .copied()
            .filter(|&p| p < lo || p > hi)
            .collect(),
        order_shares: Vec::new(),
        lambda: baseline.map(|b| Lambda::compute(mean, b)),
    }
}

impl ProfitReport {
    pub fn with_order_shares(mut self, spec: &MarketSpec, policy: &DecisionPolicy) -> Self {
        self.order_shares = spec
            .produced
            .iter()
            .zip(policy.order_shares())
            .map(|(g, s)| (g.id.clone(), s))
            .collect();
        self
    }
}

/// Expected profit and report of a policy on a scenario set.
pub fn policy_report(
    model: &Model,
    policy: &DecisionPolicy,
    set: &ScenarioSet,
    baseline: Option<BaselineRef>,
) -> Result<ProfitReport, EngineError> {
    let profits = scenario_profits(model, policy, set)?;
    let weights: Vec<f64> = set.scenarios.iter().map(|s| s.weight).collect();
    Ok(report(&profits, &weights, baseline).with_order_shares(model.spec(), policy))
}

/// Zero usage on every mapping for `n` scenarios.
pub fn idle_usage(model: &Model, n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; model.num_mappings()]; n]
}
