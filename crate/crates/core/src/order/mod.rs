//! Stage-1 search over order quantities and order indicators.
//!
//! The same scenario set scores every candidate (common random numbers), so
//! the search is over a deterministic function. Goods tied by an equality
//! constraint share one variable. Fixed charges are handled exactly by
//! enumerating which equality classes are ordered at all and running a
//! Nelder-Mead search (with restarts and a compass polish) inside each
//! subset; simulated annealing is the alternative for larger specs.

pub mod anneal;
pub mod nelder_mead;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{expected_profit, DecisionPolicy, EngineError, Model, Prepared};
use crate::market::{MarketSpec, OrderConstraint};
use crate::uncertainty::ScenarioSet;
use crate::ORDER_EPSILON;

pub use anneal::AnnealSchedule;
use nelder_mead::{compass, nelder_mead, NmOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("constraint set is infeasible: {0}")]
    InfeasibleConstraints(String),
    #[error("{0} independent order classes exceed the subset enumeration limit of {1}")]
    TooManyClasses(usize, usize),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("profit is unbounded: salvage of {output} exceeds the cost of building it through mapping {mapping}")]
    Unbounded { mapping: String, output: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    /// Enumerate ordered subsets, Nelder-Mead inside each.
    #[default]
    SubsetNelderMead,
    SimulatedAnnealing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub method: SearchMethod,
    /// Nelder-Mead restarts from the incumbent after the first run.
    pub restarts: usize,
    /// Evaluation budget of one Nelder-Mead run.
    pub max_evals: usize,
    /// Convergence tolerance on scaled order quantities.
    pub xtol: f64,
    pub anneal: AnnealSchedule,
    pub seed: u64,
    pub max_subset_classes: usize,
    /// Warm start, one quantity per produced good.
    pub initial: Option<Vec<f64>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: SearchMethod::SubsetNelderMead,
            restarts: 1,
            max_evals: 400,
            xtol: 1e-7,
            anneal: AnnealSchedule::default(),
            seed: 0,
            max_subset_classes: 12,
            initial: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.into()));
        if self.max_evals == 0 {
            return bad("max_evals must be positive");
        }
        if !(self.xtol > 0.0) {
            return bad("xtol must be positive");
        }
        let a = &self.anneal;
        if !(a.cooling > 0.0 && a.cooling < 1.0) {
            return bad("anneal.cooling must lie in (0, 1)");
        }
        if a.steps == 0
            || !(a.t0 >= 0.0)
            || !(a.step_size > 0.0)
            || !(0.0..=1.0).contains(&a.flip_prob)
        {
            return bad(
                "anneal schedule needs steps > 0, t0 >= 0, step_size > 0, flip_prob in [0, 1]",
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluation: usize,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub policy: DecisionPolicy,
    /// Exact re-evaluation of `policy` on the scenario set.
    pub expected_profit: f64,
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub method: SearchMethod,
    pub seed: u64,
    pub scenario_seed: u64,
    /// Produced goods with a positive order.
    pub ordered_goods: Vec<String>,
}

/// Goods forced to equal order quantities, with their caps and scales.
#[derive(Debug, Clone)]
struct Classes {
    members: Vec<Vec<usize>>,
    cap: Vec<f64>,
    scale: Vec<f64>,
    center: Vec<f64>,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

impl Classes {
    fn new(spec: &MarketSpec) -> Result<Self, OptimizeError> {
        let n = spec.produced.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut cap = vec![f64::INFINITY; n];
        for c in &spec.constraints {
            match c {
                OrderConstraint::OrderEquality { goods } => {
                    let idx: Vec<usize> = goods
                        .iter()
                        .filter_map(|g| spec.produced_index(g))
                        .collect();
                    for w in idx.windows(2) {
                        let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
                OrderConstraint::SupplyCap { good, cap: c } => {
                    if let Some(i) = spec.produced_index(good) {
                        cap[i] = cap[i].min(*c);
                    }
                }
                OrderConstraint::SupplyCapFactor {
                    good,
                    factor,
                    reference,
                } => {
                    let r = reference.ok_or_else(|| {
                        OptimizeError::InfeasibleConstraints(format!(
                            "cap factor on {good} has no reference order"
                        ))
                    })?;
                    if let Some(i) = spec.produced_index(good) {
                        cap[i] = cap[i].min(factor * r);
                    }
                }
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            match roots.iter().position(|&x| x == r) {
                Some(k) => members[k].push(i),
                None => {
                    roots.push(r);
                    members.push(vec![i]);
                }
            }
        }
        let (reach, own) = reach(spec);
        let mut out = Classes {
            members: Vec::new(),
            cap: Vec::new(),
            scale: Vec::new(),
            center: Vec::new(),
        };
        for m in members {
            let size = m.len() as f64;
            let cap_c = m.iter().map(|&i| cap[i]).fold(f64::INFINITY, f64::min);
            if !(cap_c >= 0.0) {
                return Err(OptimizeError::InfeasibleConstraints(format!(
                    "cap {cap_c} on {}",
                    spec.produced[m[0]].id
                )));
            }
            let scale = m.iter().map(|&i| reach[i]).fold(0.0, f64::max) / size;
            let center = m.iter().map(|&i| own[i]).sum::<f64>() / size / size;
            let scale = if scale > 0.0 { scale } else { 1.0 };
            out.members.push(m);
            out.cap.push(cap_c);
            out.scale.push(scale);
            out.center.push(if center > 0.0 {
                center.min(cap_c)
            } else {
                scale.min(cap_c)
            });
        }
        Ok(out)
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn orders(&self, n_goods: usize, class_q: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; n_goods];
        for (c, m) in self.members.iter().enumerate() {
            for &i in m {
                q[i] = class_q[c];
            }
        }
        q
    }
}

/// Per good: the most it could usefully be ordered (every demand served
/// from it alone) and the zero-uncertainty order for its own demand.
/// A mapping whose output salvages for more than the obtained inputs and
/// the mapping cost make every extra order profitable, unless an input is
/// capped.
fn salvage_arbitrage(spec: &MarketSpec) -> Option<OptimizeError> {
    let capped = |g: &str| {
        spec.constraints.iter().any(|c| match c {
            OrderConstraint::SupplyCap { good, .. }
            | OrderConstraint::SupplyCapFactor { good, .. } => good == g,
            OrderConstraint::OrderEquality { .. } => false,
        })
    };
    spec.mappings.iter().find_map(|m| {
        let salvage = spec
            .demanded
            .iter()
            .find(|d| d.id == m.output)?
            .salvage_value;
        let mut cost = m.cost_per_use;
        for (g, &n) in &m.inputs {
            if capped(g) {
                return None;
            }
            let p = &spec.produced[spec.produced_index(g)?];
            cost += n * p.unit_cost / p.yield_rate;
        }
        (salvage > cost).then(|| OptimizeError::Unbounded {
            mapping: m.id.clone(),
            output: m.output.clone(),
        })
    })
}

fn reach(spec: &MarketSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.produced.len();
    let mut reach = vec![0.0; n];
    let mut own = vec![0.0; n];
    for (i, g) in spec.produced.iter().enumerate() {
        for (d, dem) in spec.demanded.iter().enumerate() {
            let mut best: f64 = 0.0;
            for m in spec
                .mappings
                .iter()
                .filter(|m| spec.demanded_index(&m.output) == Some(d))
            {
                if let Some(&count) = m.inputs.get(&g.id) {
                    best = best.max(count * dem.base_demand);
                    if m.inputs.len() == 1 && count == 1.0 && m.output == g.id {
                        own[i] = dem.base_demand / g.yield_rate;
                    }
                }
            }
            reach[i] += best / g.yield_rate;
        }
    }
    (reach, own)
}

struct Search<'a> {
    prep: &'a Prepared<'a>,
    classes: &'a Classes,
    n_goods: usize,
    evals: usize,
    best: f64,
    trace: Vec<TracePoint>,
}

impl Search<'_> {
    /// Expected profit of class quantities, clamped to `[0, cap]`.
    fn profit(&mut self, class_q: &[f64]) -> f64 {
        let q = self.classes.orders(self.n_goods, class_q);
        let v = self.prep.objective(&q);
        self.evals += 1;
        if v > self.best {
            self.best = v;
            self.trace.push(TracePoint {
                evaluation: self.evals,
                incumbent: v,
            });
        }
        v
    }

    fn clamp(&self, c: usize, x: f64) -> f64 {
        (x * self.classes.scale[c]).clamp(0.0, self.classes.cap[c])
    }
}

/// Best orders for `spec` on `set`.
pub fn optimize(
    spec: &MarketSpec,
    set: &ScenarioSet,
    config: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    config.validate()?;
    if let Some(e) = salvage_arbitrage(spec) {
        return Err(e);
    }
    let needs_reference = spec.constraints.iter().any(|c| {
        matches!(
            c,
            OrderConstraint::SupplyCapFactor {
                reference: None,
                ..
            }
        )
    });
    if needs_reference {
        let mut free = spec.clone();
        free.constraints
            .retain(|c| !matches!(c, OrderConstraint::SupplyCapFactor { .. }));
        let unc = optimize(&free, set, config)?;
        let mut resolved = spec.clone();
        for c in &mut resolved.constraints {
            if let OrderConstraint::SupplyCapFactor {
                good, reference, ..
            } = c
            {
                if reference.is_none() {
                    let i = spec.produced_index(good).expect("validated spec");
                    *reference = Some(unc.policy.order_qty[i]);
                }
            }
        }
        let mut warm = config.clone();
        warm.initial = Some(unc.policy.order_qty.clone());
        return optimize(&resolved, set, &warm);
    }

    let model = Model::new(spec.clone())?;
    let prep = Prepared::new(&model, set)?;
    let classes = Classes::new(spec)?;
    let n_goods = spec.produced.len();
    let mut search = Search {
        prep: &prep,
        classes: &classes,
        n_goods,
        evals: 0,
        best: f64::NEG_INFINITY,
        trace: Vec::new(),
    };

    let warm: Option<Vec<f64>> = config.initial.as_ref().map(|q| {
        (0..classes.len())
            .map(|c| {
                let v = classes.members[c]
                    .iter()
                    .map(|&i| q.get(i).copied().unwrap_or(0.0))
                    .sum::<f64>()
                    / classes.members[c].len() as f64;
                v.clamp(0.0, classes.cap[c])
            })
            .collect()
    });

    let (class_q, exhausted) = match config.method {
        SearchMethod::SubsetNelderMead => subset_search(&mut search, config, warm.as_deref())?,
        SearchMethod::SimulatedAnnealing => anneal_search(&mut search, config, warm.as_deref()),
    };

    let q = classes.orders(n_goods, &class_q);
    let policy = prep.policy(&q);
    let exact = expected_profit(&model, &policy, set)?;
    let ordered_goods = spec
        .produced
        .iter()
        .zip(&policy.ordered)
        .filter(|(_, &o)| o)
        .map(|(g, _)| g.id.clone())
        .collect();
    Ok(OptimizationResult {
        policy,
        expected_profit: exact,
        trace: search.trace,
        evaluations: search.evals,
        budget_exhausted: exhausted,
        method: config.method,
        seed: config.seed,
        scenario_seed: set.seed,
        ordered_goods,
    })
}

fn subset_search(
    search: &mut Search<'_>,
    config: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, bool), OptimizeError> {
    let classes = search.classes;
    let nc = classes.len();
    if nc > config.max_subset_classes {
        return Err(OptimizeError::TooManyClasses(nc, config.max_subset_classes));
    }
    let opts = NmOptions {
        max_evals: config.max_evals,
        xtol: config.xtol,
        ftol: 1e-12,
    };
    let mut exhausted = false;
    // (profit, number ordered, mask, class quantities)
    let mut best: Option<(f64, usize, u64, Vec<f64>)> = None;
    for mask in 0u64..(1u64 << nc) {
        let active: Vec<usize> = (0..nc)
            .filter(|&c| mask >> c & 1 == 1 && classes.cap[c] > ORDER_EPSILON)
            .collect();
        if active.len() != mask.count_ones() as usize {
            continue;
        }
        let to_q = |s: &Search<'_>, x: &[f64]| {
            let mut q = vec![0.0; nc];
            for (k, &c) in active.iter().enumerate() {
                q[c] = s.clamp(c, x[k]);
            }
            q
        };
        let (x, f) = if active.is_empty() {
            (Vec::new(), search.profit(&vec![0.0; nc]))
        } else {
            let x0: Vec<f64> = active
                .iter()
                .map(|&c| match warm {
                    Some(w) if w[c] > ORDER_EPSILON => w[c] / classes.scale[c],
                    _ => classes.center[c] / classes.scale[c],
                })
                .collect();
            let mut obj = |x: &[f64]| {
                let q = to_q(search, x);
                -search.profit(&q)
            };
            let step: Vec<f64> = x0.iter().map(|&v| 0.2 * v.max(0.05)).collect();
            let mut r = nelder_mead(&mut obj, &x0, &step, opts);
            exhausted |= !r.converged;
            for _ in 0..config.restarts {
                let step: Vec<f64> = r.x.iter().map(|&v| 0.1 * v.abs().max(0.05)).collect();
                let again = nelder_mead(&mut obj, &r.x, &step, opts);
                exhausted |= !again.converged;
                if again.f <= r.f {
                    r = again;
                }
            }
            let polish = compass(
                &mut obj,
                &r.x,
                r.f,
                0.02,
                config.xtol * 0.1,
                60 * active.len().max(1) * 4,
            );
            let x: Vec<f64> = to_q(search, &polish.x);
            (x, -polish.f)
        };
        // Normalize: a class inside the subset with a vanishing order is not ordered.
        let q: Vec<f64> = x
            .iter()
            .map(|&v| if v > ORDER_EPSILON { v } else { 0.0 })
            .collect();
        let q = if active.is_empty() { vec![0.0; nc] } else { q };
        let count = q.iter().filter(|&&v| v > 0.0).count();
        let key_mask: u64 = (0..nc).filter(|&c| q[c] > 0.0).fold(0, |m, c| m | 1 << c);
        let better = match &best {
            None => true,
            Some((bf, bn, bm, _)) => {
                let tol = 1e-9 * bf.abs().max(1.0);
                if f > bf + tol {
                    true
                } else if f >= bf - tol {
                    count < *bn || (count == *bn && lexicographically_first(key_mask, *bm, nc))
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((f, count, key_mask, q));
        }
    }
    let (_, _, _, q) = best.expect("at least the empty subset is evaluated");
    Ok((q, exhausted))
}

/// Compare subsets as sorted index lists.
fn lexicographically_first(a: u64, b: u64, n: usize) -> bool {
    let la: Vec<usize> = (0..n).filter(|&c| a >> c & 1 == 1).collect();
    let lb: Vec<usize> = (0..n).filter(|&c| b >> c & 1 == 1).collect();
    la < lb
}

fn anneal_search(
    search: &mut Search<'_>,
    config: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> (Vec<f64>, bool) {
    let classes = search.classes;
    let nc = classes.len();
    let x0: Vec<f64> = (0..nc)
        .map(|c| match warm {
            Some(w) => w[c] / classes.scale[c],
            None => classes.center[c] / classes.scale[c],
        })
        .collect();
    let on0: Vec<bool> = x0.iter().map(|&x| x > 0.0).collect();
    let upper: Vec<f64> = (0..nc)
        .map(|c| (classes.cap[c] / classes.scale[c]).min(1e6))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut obj = |on: &[bool], x: &[f64]| {
        let q: Vec<f64> = (0..nc)
            .map(|c| if on[c] { search.clamp(c, x[c]) } else { 0.0 })
            .collect();
        -search.profit(&q)
    };
    let r = anneal::anneal(&mut obj, &on0, &x0, &upper, config.anneal, &mut rng);
    // Polish the quantities of the classes annealing left on.
    let active: Vec<usize> = (0..nc).filter(|&c| r.on[c]).collect();
    let mut sub = |x: &[f64]| {
        let mut on = vec![false; nc];
        let mut full = vec![0.0; nc];
        for (k, &c) in active.iter().enumerate() {
            on[c] = true;
            full[c] = x[k];
        }
        obj(&on, &full)
    };
    let xa: Vec<f64> = active.iter().map(|&c| r.x[c]).collect();
    let p = compass(
        &mut sub,
        &xa,
        r.f,
        0.02,
        config.xtol * 0.1,
        400 * active.len().max(1),
    );
    let mut q = vec![0.0; nc];
    for (k, &c) in active.iter().enumerate() {
        let v = search.clamp(c, p.x[k]);
        q[c] = if v > ORDER_EPSILON { v } else { 0.0 };
    }
    (q, false)
}

/// Solve without caps, then cap `goods` at `factor` times their
/// unconstrained orders and solve again from the clamped orders.
pub fn constrained_rerun(
    spec: &MarketSpec,
    set: &ScenarioSet,
    config: &OptimizerConfig,
    factor: f64,
    goods: &[&str],
) -> Result<OptimizationResult, OptimizeError> {
    if !(0.0..=1.0).contains(&factor) {
        return Err(OptimizeError::Config(format!(
            "factor {factor} must lie in [0, 1]"
        )));
    }
    let unc = optimize(spec, set, config)?;
    let mut capped = spec.clone();
    let mut warm = unc.policy.order_qty.clone();
    for g in goods {
        let i = spec
            .produced_index(g)
            .ok_or_else(|| OptimizeError::Config(format!("unknown produced good {g}")))?;
        capped.constraints.push(OrderConstraint::SupplyCapFactor {
            good: (*g).into(),
            factor,
            reference: Some(unc.policy.order_qty[i]),
        });
        warm[i] *= factor;
    }
    let mut cfg = config.clone();
    cfg.initial = Some(warm);
    optimize(&capped, set, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{DemandedGood, Mapping, ProducedGood};
    use crate::uncertainty::{sample, Strategy};

    fn one_good(nre: f64) -> MarketSpec {
        MarketSpec {
            produced: vec![ProducedGood {
                id: "a".into(),
                unit_cost: 1.0,
                nre,
                yield_rate: 1.0,
                supplier_id: "s".into(),
            }],
            demanded: vec![DemandedGood {
                id: "a".into(),
                base_demand: 100.0,
                unit_benefit: 2.0,
                unit_shortage_cost: 2.0,
                salvage_value: 0.0,
                demand_curve: None,
            }],
            mappings: vec![Mapping::identity("a")],
            ..Default::default()
        }
    }

    #[test]
    fn newsvendor_hand_cases() {
        for (nre, expect) in [(10.0, 90.0), (150.0, -50.0)] {
            let spec = one_good(nre);
            let set = sample(&spec.uncertainty, Strategy::Exhaustive, 0).unwrap();
            let r = optimize(&spec, &set, &OptimizerConfig::default()).unwrap();
            assert!(
                (r.policy.order_qty[0] - 100.0).abs() < 1e-3,
                "{:?}",
                r.policy.order_qty
            );
            assert!((r.expected_profit - expect).abs() < 1e-3);
        }
    }

    #[test]
    fn anneal_matches_enumeration() {
        let spec = one_good(10.0);
        let set = sample(&spec.uncertainty, Strategy::Exhaustive, 0).unwrap();
        let cfg = OptimizerConfig {
            method: SearchMethod::SimulatedAnnealing,
            ..Default::default()
        };
        let r = optimize(&spec, &set, &cfg).unwrap();
        assert!(
            (r.expected_profit - 90.0).abs() < 0.5,
            "{}",
            r.expected_profit
        );
    }

    #[test]
    fn salvage_above_cost_is_unbounded() {
        let mut spec = one_good(10.0);
        let c = spec.produced[0].unit_cost / spec.produced[0].yield_rate;
        spec.demanded[0].salvage_value = 1.5 * c;
        let set = sample(&spec.uncertainty, Strategy::Exhaustive, 0).unwrap();
        let err = optimize(&spec, &set, &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, OptimizeError::Unbounded { .. }), "{err}");
        spec.constraints.push(OrderConstraint::SupplyCap {
            good: "a".into(),
            cap: 500.0,
        });
        let r = optimize(&spec, &set, &OptimizerConfig::default()).unwrap();
        assert!(
            (r.policy.order_qty[0] - 500.0).abs() < 1e-3,
            "{:?}",
            r.policy.order_qty
        );
    }

    #[test]
    fn cap_factor_bounds_orders() {
        let spec = one_good(10.0);
        let set = sample(&spec.uncertainty, Strategy::Exhaustive, 0).unwrap();
        let cfg = OptimizerConfig::default();
        let full = constrained_rerun(&spec, &set, &cfg, 1.0, &["a"]).unwrap();
        assert!((full.expected_profit - 90.0).abs() < 1e-3);
        let zero = constrained_rerun(&spec, &set, &cfg, 0.0, &["a"]).unwrap();
        assert_eq!(zero.policy.order_qty, vec![0.0]);
        assert_eq!(zero.expected_profit, -200.0);
        let mut lazy = spec.clone();
        lazy.constraints.push(OrderConstraint::SupplyCapFactor {
            good: "a".into(),
            factor: 0.5,
            reference: None,
        });
        let half = optimize(&lazy, &set, &cfg).unwrap();
        assert!((half.policy.order_qty[0] - 50.0).abs() < 1e-3);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        cfg.anneal.cooling = 1.0;
        assert!(cfg.validate().is_err());
        cfg.anneal.cooling = 0.9;
        cfg.max_evals = 0;
        assert!(cfg.validate().is_err());
    }
}
