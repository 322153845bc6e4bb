//! Market specification and the builders for the intervention mapping sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chipcost::{CostError, CostModel};
use crate::uncertainty::UncertaintyConfig;

/// Supplier shared by every good the baseline orders.
pub const DEFAULT_SUPPLIER: &str = "foundry";
/// Produced good standing in for interposers when they are modeled as a good.
pub const INTERPOSER_GOOD: &str = "interposer";
/// Supplier of the interposer good.
pub const INTERPOSER_SUPPLIER: &str = "interposer-fab";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducedGood {
    pub id: String,
    pub unit_cost: f64,
    pub nre: f64,
    pub yield_rate: f64,
    pub supplier_id: String,
}

/// Linear inverse demand: price = elasticity * (sold - demand) + base_price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandCurve {
    pub elasticity: f64,
    pub base_price: f64,
}

impl DemandCurve {
    /// Curve whose revenue peaks at `base_demand` units sold at `base_price`.
    pub fn calibrated(base_price: f64, base_demand: f64) -> Self {
        Self {
            elasticity: -base_price / base_demand,
            base_price,
        }
    }

    pub fn price(&self, sold: f64, demand: f64) -> f64 {
        self.elasticity * (sold - demand) + self.base_price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandedGood {
    pub id: String,
    pub base_demand: f64,
    pub unit_benefit: f64,
    pub unit_shortage_cost: f64,
    #[serde(default)]
    pub salvage_value: f64,
    #[serde(default)]
    pub demand_curve: Option<DemandCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mapping {
    pub id: String,
    /// Produced good id to units consumed per use.
    pub inputs: BTreeMap<String, f64>,
    pub output: String,
    #[serde(default)]
    pub cost_per_use: f64,
}

impl Mapping {
    pub fn identity(good: &str) -> Self {
        Self {
            id: format!("{good}->{good}"),
            inputs: BTreeMap::from([(good.to_string(), 1.0)]),
            output: good.to_string(),
            cost_per_use: 0.0,
        }
    }

    pub fn new(
        id: impl Into<String>,
        inputs: &[(&str, f64)],
        output: &str,
        cost_per_use: f64,
    ) -> Self {
        Self {
            id: id.into(),
            inputs: inputs.iter().map(|(g, n)| (g.to_string(), *n)).collect(),
            output: output.to_string(),
            cost_per_use,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderConstraint {
    SupplyCap {
        good: String,
        cap: f64,
    },
    /// `q <= factor * reference`; without a reference the optimizer first
    /// solves the unconstrained problem and uses its order for this good.
    SupplyCapFactor {
        good: String,
        factor: f64,
        #[serde(default)]
        reference: Option<f64>,
    },
    OrderEquality {
        goods: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecourseStage {
    /// Mapping usage is chosen once supply is known (stage 2).
    #[default]
    MappingAfterSupply,
    /// Mapping usage is chosen once supply and demand are known (stage 3).
    MappingAfterSupplyAndDemand,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub produced: Vec<ProducedGood>,
    pub demanded: Vec<DemandedGood>,
    #[serde(default)]
    pub mappings: Vec<Mapping>,
    #[serde(default)]
    pub constraints: Vec<OrderConstraint>,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub recourse_stage: RecourseStage,
}

/// One invariant violation, with a path to the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("core counts must be non-empty")]
    NoCores,
    #[error("duplicate core count {0}")]
    DuplicateCores(u32),
    #[error("spec has no good {0}")]
    MissingGood(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid spec: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Every invariant violation in `spec`; empty means valid.
pub fn validate(spec: &MarketSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, message: String| out.push(Violation { path, message });

    let mut produced_ids = BTreeSet::new();
    for (i, g) in spec.produced.iter().enumerate() {
        let p = format!("produced[{i}]({})", g.id);
        if !produced_ids.insert(g.id.as_str()) {
            push(format!("{p}.id"), "duplicate produced good id".into());
        }
        if !nonneg(g.unit_cost) {
            push(
                format!("{p}.unit_cost"),
                format!("{} must be >= 0", g.unit_cost),
            );
        }
        if !nonneg(g.nre) {
            push(format!("{p}.nre"), format!("{} must be >= 0", g.nre));
        }
        if !(g.yield_rate > 0.0 && g.yield_rate <= 1.0) {
            push(
                format!("{p}.yield_rate"),
                format!("{} must lie in (0, 1]", g.yield_rate),
            );
        }
    }

    let mut demanded_ids = BTreeSet::new();
    for (i, d) in spec.demanded.iter().enumerate() {
        let p = format!("demanded[{i}]({})", d.id);
        if !demanded_ids.insert(d.id.as_str()) {
            push(format!("{p}.id"), "duplicate demanded good id".into());
        }
        if !nonneg(d.base_demand) {
            push(
                format!("{p}.base_demand"),
                format!("{} must be >= 0", d.base_demand),
            );
        }
        if !nonneg(d.unit_benefit) {
            push(
                format!("{p}.unit_benefit"),
                format!("{} must be >= 0", d.unit_benefit),
            );
        }
        if !nonneg(d.unit_shortage_cost) {
            push(
                format!("{p}.unit_shortage_cost"),
                format!("{} must be >= 0", d.unit_shortage_cost),
            );
        }
        if !(nonneg(d.salvage_value)
            && (d.salvage_value == 0.0 || d.salvage_value < d.unit_benefit))
        {
            push(
                format!("{p}.salvage_value"),
                format!("{} must lie in [0, unit_benefit)", d.salvage_value),
            );
        }
        if let Some(c) = d.demand_curve {
            if !(c.elasticity.is_finite() && c.elasticity <= 0.0) {
                push(
                    format!("{p}.demand_curve.elasticity"),
                    format!("{} must be <= 0", c.elasticity),
                );
            }
            if !nonneg(c.base_price) {
                push(
                    format!("{p}.demand_curve.base_price"),
                    format!("{} must be >= 0", c.base_price),
                );
            }
        }
    }

    let mut mapping_ids = BTreeSet::new();
    for (j, m) in spec.mappings.iter().enumerate() {
        let p = format!("mappings[{j}]({})", m.id);
        if !mapping_ids.insert(m.id.as_str()) {
            push(format!("{p}.id"), "duplicate mapping id".into());
        }
        if !m.inputs.values().any(|&n| n > 0.0) {
            push(
                format!("{p}.inputs"),
                "needs at least one input with a positive count".into(),
            );
        }
        for (g, &n) in &m.inputs {
            if !produced_ids.contains(g.as_str()) {
                push(format!("{p}.inputs.{g}"), "unknown produced good".into());
            }
            if !nonneg(n) {
                push(format!("{p}.inputs.{g}"), format!("count {n} must be >= 0"));
            }
        }
        if !demanded_ids.contains(m.output.as_str()) {
            push(
                format!("{p}.output"),
                format!("unknown demanded good {}", m.output),
            );
        }
        if !nonneg(m.cost_per_use) {
            push(
                format!("{p}.cost_per_use"),
                format!("{} must be >= 0", m.cost_per_use),
            );
        }
    }

    for (k, c) in spec.constraints.iter().enumerate() {
        let p = format!("constraints[{k}]");
        match c {
            OrderConstraint::SupplyCap { good, cap } => {
                if !produced_ids.contains(good.as_str()) {
                    push(format!("{p}.good"), format!("unknown produced good {good}"));
                }
                if !nonneg(*cap) {
                    push(format!("{p}.cap"), format!("{cap} must be >= 0"));
                }
            }
            OrderConstraint::SupplyCapFactor {
                good,
                factor,
                reference,
            } => {
                if !produced_ids.contains(good.as_str()) {
                    push(format!("{p}.good"), format!("unknown produced good {good}"));
                }
                if !(0.0..=1.0).contains(factor) {
                    push(
                        format!("{p}.factor"),
                        format!("{factor} must lie in [0, 1]"),
                    );
                }
                if let Some(r) = reference {
                    if !nonneg(*r) {
                        push(format!("{p}.reference"), format!("{r} must be >= 0"));
                    }
                }
            }
            OrderConstraint::OrderEquality { goods } => {
                if goods.len() < 2 {
                    push(format!("{p}.goods"), "needs at least two goods".into());
                }
                for g in goods {
                    if !produced_ids.contains(g.as_str()) {
                        push(format!("{p}.goods"), format!("unknown produced good {g}"));
                    }
                }
            }
        }
    }

    if let Err(e) = spec.uncertainty.validate() {
        push("uncertainty".into(), e.to_string());
    }
    out
}

impl MarketSpec {
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn ensure_valid(self) -> Result<Self, MarketError> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(MarketError::Invalid(v))
        }
    }

    pub fn produced_index(&self, id: &str) -> Option<usize> {
        self.produced.iter().position(|g| g.id == id)
    }

    pub fn demanded_index(&self, id: &str) -> Option<usize> {
        self.demanded.iter().position(|d| d.id == id)
    }

    fn require_produced(&self, ids: &[&str]) -> Result<(), MarketError> {
        for id in ids {
            if self.produced_index(id).is_none() {
                return Err(MarketError::MissingGood(id.to_string()));
            }
        }
        Ok(())
    }

    fn require_demanded(&self, ids: &[&str]) -> Result<(), MarketError> {
        for id in ids {
            if self.demanded_index(id).is_none() {
                return Err(MarketError::MissingGood(id.to_string()));
            }
        }
        Ok(())
    }

    /// Add a mapping unless one with the same id exists.
    pub fn add_mapping(&mut self, m: Mapping) {
        if !self.mappings.iter().any(|x| x.id == m.id) {
            self.mappings.push(m);
        }
    }

    /// Multiply every monetary parameter by `k`.
    pub fn scale_money(&mut self, k: f64) {
        for g in &mut self.produced {
            g.unit_cost *= k;
            g.nre *= k;
        }
        for d in &mut self.demanded {
            d.unit_benefit *= k;
            d.unit_shortage_cost *= k;
            d.salvage_value *= k;
            if let Some(c) = &mut d.demand_curve {
                c.elasticity *= k;
                c.base_price *= k;
            }
        }
        for m in &mut self.mappings {
            m.cost_per_use *= k;
        }
    }

    /// Ids of produced goods sharing the single supply draw of `supplier`.
    pub fn goods_of_supplier(&self, supplier: &str) -> Vec<&str> {
        self.produced
            .iter()
            .filter(|g| g.supplier_id == supplier)
            .map(|g| g.id.as_str())
            .collect()
    }

    /// Distinct supplier ids in first-appearance order.
    pub fn suppliers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for g in &self.produced {
            if !out.contains(&g.supplier_id.as_str()) {
                out.push(&g.supplier_id);
            }
        }
        out
    }
}

pub fn core_id(cores: u32) -> String {
    format!("{cores}c")
}

/// One produced and one demanded good per core count, linked by identity
/// mappings, all from a single supplier.
pub fn build_baseline(core_counts: &[u32], costs: &CostModel) -> Result<MarketSpec, MarketError> {
    if core_counts.is_empty() {
        return Err(MarketError::NoCores);
    }
    let mut seen = BTreeSet::new();
    for &c in core_counts {
        if !seen.insert(c) {
            return Err(MarketError::DuplicateCores(c));
        }
    }
    let mut spec = MarketSpec::default();
    for &c in core_counts {
        let e = costs.economics(c)?;
        let id = core_id(c);
        spec.produced.push(ProducedGood {
            id: id.clone(),
            unit_cost: e.unit_cost,
            nre: e.nre,
            yield_rate: e.yield_rate,
            supplier_id: DEFAULT_SUPPLIER.to_string(),
        });
        spec.demanded.push(DemandedGood {
            id: id.clone(),
            base_demand: e.base_demand,
            unit_benefit: e.unit_benefit,
            unit_shortage_cost: e.shortage_cost,
            salvage_value: 0.0,
            demand_curve: None,
        });
        spec.mappings.push(Mapping::identity(&id));
    }
    Ok(spec)
}

/// Chiplet composition into 16- and 8-core products.
///
/// With `interposer_as_good`, interposers become a produced good sized for
/// one 8-core footprint: 16-core compositions consume two, the 8-core
/// composition one, and the mappings themselves cost nothing.
pub fn add_composition(
    mut spec: MarketSpec,
    interposer_cost_16: f64,
    interposer_as_good: bool,
) -> Result<MarketSpec, MarketError> {
    spec.require_produced(&["8c", "4c"])?;
    spec.require_demanded(&["16c", "8c"])?;
    let (g16, g8) = if interposer_as_good {
        if spec.produced_index(INTERPOSER_GOOD).is_none() {
            spec.produced.push(ProducedGood {
                id: INTERPOSER_GOOD.to_string(),
                unit_cost: interposer_cost_16 / 2.0,
                nre: 0.0,
                yield_rate: 1.0,
                supplier_id: INTERPOSER_SUPPLIER.to_string(),
            });
        }
        (0.0, 0.0)
    } else {
        (interposer_cost_16, interposer_cost_16 / 2.0)
    };
    let ip = |n: f64| -> Vec<(&str, f64)> {
        if interposer_as_good {
            vec![(INTERPOSER_GOOD, n)]
        } else {
            Vec::new()
        }
    };
    let with = |base: &[(&'static str, f64)], n: f64| -> Vec<(&'static str, f64)> {
        let mut v = base.to_vec();
        v.extend(ip(n));
        v
    };
    spec.add_mapping(Mapping::new(
        "2x8c->16c",
        &with(&[("8c", 2.0)], 2.0),
        "16c",
        g16,
    ));
    spec.add_mapping(Mapping::new(
        "4x4c->16c",
        &with(&[("4c", 4.0)], 2.0),
        "16c",
        g16,
    ));
    spec.add_mapping(Mapping::new(
        "8c+2x4c->16c",
        &with(&[("8c", 1.0), ("4c", 2.0)], 2.0),
        "16c",
        g16,
    ));
    spec.add_mapping(Mapping::new(
        "2x4c->8c",
        &with(&[("4c", 2.0)], 1.0),
        "8c",
        g8,
    ));
    Ok(spec)
}

/// Core disabling: larger chips sold as smaller ones at no mapping cost.
pub fn add_adaptation(mut spec: MarketSpec) -> Result<MarketSpec, MarketError> {
    spec.require_produced(&["16c", "8c"])?;
    spec.require_demanded(&["8c", "4c"])?;
    spec.add_mapping(Mapping::new("16c->8c", &[("16c", 1.0)], "8c", 0.0));
    spec.add_mapping(Mapping::new("16c->4c", &[("16c", 1.0)], "4c", 0.0));
    spec.add_mapping(Mapping::new("8c->4c", &[("8c", 1.0)], "4c", 0.0));
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionMode {
    /// Every produced good gets its own supplier.
    UniquePerGood,
    /// Every produced good is ordered in equal amounts from two suppliers.
    TwoSuppliersAll,
}

pub fn clone_id(id: &str, side: char) -> String {
    format!("{id}@{side}")
}

/// Spread supply risk across independent suppliers.
///
/// New suppliers inherit the distribution of the supplier they replace.
/// In two-supplier mode each mapping is duplicated once over the A clones
/// and once over the B clones, and supply caps are split evenly.
pub fn add_dispersion(
    mut spec: MarketSpec,
    mode: DispersionMode,
    nre_share: f64,
) -> Result<MarketSpec, MarketError> {
    let supply_dist =
        |spec: &MarketSpec, supplier: &str| spec.uncertainty.supply.get(supplier).cloned();
    match mode {
        DispersionMode::UniquePerGood => {
            let mut new = Vec::new();
            for g in &mut spec.produced {
                let sid = format!("sup-{}", g.id);
                let old = core::mem::replace(&mut g.supplier_id, sid.clone());
                new.push((sid, old));
            }
            for (sid, old) in new {
                if let Some(d) = supply_dist(&spec, &old) {
                    spec.uncertainty.supply.insert(sid, d);
                }
            }
            prune_suppliers(&mut spec);
        }
        DispersionMode::TwoSuppliersAll => {
            let originals = core::mem::take(&mut spec.produced);
            let mut inherited = Vec::new();
            for g in &originals {
                for side in ['A', 'B'] {
                    let mut c = g.clone();
                    c.id = clone_id(&g.id, side);
                    c.supplier_id = format!("{}/{side}", g.supplier_id);
                    if side == 'B' {
                        c.nre *= 1.0 - nre_share;
                    }
                    inherited.push((c.supplier_id.clone(), g.supplier_id.clone()));
                    spec.produced.push(c);
                }
                spec.constraints.push(OrderConstraint::OrderEquality {
                    goods: vec![clone_id(&g.id, 'A'), clone_id(&g.id, 'B')],
                });
            }
            for (sid, old) in inherited {
                if let Some(d) = supply_dist(&spec, &old) {
                    spec.uncertainty.supply.insert(sid, d);
                }
            }
            let mappings = core::mem::take(&mut spec.mappings);
            for side in ['A', 'B'] {
                for m in &mappings {
                    spec.mappings.push(Mapping {
                        id: clone_id(&m.id, side),
                        inputs: m
                            .inputs
                            .iter()
                            .map(|(g, n)| (clone_id(g, side), *n))
                            .collect(),
                        output: m.output.clone(),
                        cost_per_use: m.cost_per_use,
                    });
                }
            }
            let constraints = core::mem::take(&mut spec.constraints);
            for c in constraints {
                match c {
                    OrderConstraint::SupplyCap { good, cap } if !good.contains('@') => {
                        for side in ['A', 'B'] {
                            spec.constraints.push(OrderConstraint::SupplyCap {
                                good: clone_id(&good, side),
                                cap: cap / 2.0,
                            });
                        }
                    }
                    OrderConstraint::SupplyCapFactor {
                        good,
                        factor,
                        reference,
                    } if !good.contains('@') => {
                        for side in ['A', 'B'] {
                            spec.constraints.push(OrderConstraint::SupplyCapFactor {
                                good: clone_id(&good, side),
                                factor,
                                reference: reference.map(|r| r / 2.0),
                            });
                        }
                    }
                    other => spec.constraints.push(other),
                }
            }
            prune_suppliers(&mut spec);
        }
    }
    Ok(spec)
}

/// Drop supply distributions no good refers to any more.
fn prune_suppliers(spec: &mut MarketSpec) {
    let used: BTreeSet<String> = spec
        .produced
        .iter()
        .map(|g| g.supplier_id.clone())
        .collect();
    spec.uncertainty.supply.retain(|k, _| used.contains(k));
}

/// Give every demanded good a linear demand curve through its base demand
/// and unit benefit.
pub fn add_market_mechanism(mut spec: MarketSpec) -> MarketSpec {
    for d in &mut spec.demanded {
        if d.base_demand > 0.0 {
            d.demand_curve = Some(DemandCurve::calibrated(d.unit_benefit, d.base_demand));
        }
    }
    spec
}

/// Two single-ISA chips and one multi-ISA chip that serves either demand.
/// The multi-ISA chip costs `cost_scale` times a single-ISA chip in both
/// unit cost and NRE.
pub fn build_multi_isa(
    cores: u32,
    costs: &CostModel,
    cost_scale: f64,
) -> Result<MarketSpec, MarketError> {
    let e = costs.economics(cores)?;
    let good = |id: &str, k: f64| ProducedGood {
        id: id.to_string(),
        unit_cost: e.unit_cost * k,
        nre: e.nre * k,
        yield_rate: e.yield_rate,
        supplier_id: DEFAULT_SUPPLIER.to_string(),
    };
    let demand = |id: &str| DemandedGood {
        id: id.to_string(),
        base_demand: e.base_demand,
        unit_benefit: e.unit_benefit,
        unit_shortage_cost: e.shortage_cost,
        salvage_value: 0.0,
        demand_curve: None,
    };
    let mut spec = MarketSpec {
        produced: vec![
            good("isa1", 1.0),
            good("isa2", 1.0),
            good("multi", cost_scale),
        ],
        demanded: vec![demand("isa1"), demand("isa2")],
        recourse_stage: RecourseStage::MappingAfterSupplyAndDemand,
        ..Default::default()
    };
    spec.mappings.push(Mapping::identity("isa1"));
    spec.mappings.push(Mapping::identity("isa2"));
    spec.mappings
        .push(Mapping::new("multi->isa1", &[("multi", 1.0)], "isa1", 0.0));
    spec.mappings
        .push(Mapping::new("multi->isa2", &[("multi", 1.0)], "isa2", 0.0));
    spec.ensure_valid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::Distribution;

    fn baseline() -> MarketSpec {
        build_baseline(&[16, 8, 4], &CostModel::default()).unwrap()
    }

    #[test]
    fn baseline_shape_and_validity() {
        let spec = baseline();
        assert_eq!(spec.produced.len(), 3);
        assert_eq!(spec.demanded.len(), 3);
        assert_eq!(spec.mappings.len(), 3);
        assert!(spec.mappings.iter().all(|m| m.cost_per_use == 0.0));
        assert!(validate(&spec).is_empty());
        let one = build_baseline(&[16], &CostModel::default()).unwrap();
        assert_eq!(
            (one.produced.len(), one.demanded.len(), one.mappings.len()),
            (1, 1, 1)
        );
        assert_eq!(
            build_baseline(&[8, 8], &CostModel::default()),
            Err(MarketError::DuplicateCores(8))
        );
    }

    #[test]
    fn zero_yield_is_one_violation() {
        let mut spec = baseline();
        spec.produced[1].yield_rate = 0.0;
        let v = validate(&spec);
        assert_eq!(v.len(), 1);
        assert!(v[0].path.contains("8c") && v[0].path.contains("yield_rate"));
    }

    #[test]
    fn unknown_mapping_input_is_one_violation() {
        let mut spec = baseline();
        spec.mappings
            .push(Mapping::new("x", &[("2c", 1.0)], "4c", 0.0));
        let v = validate(&spec);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].path.contains("inputs.2c"));
    }

    #[test]
    fn composition_adds_four_mappings() {
        let spec = add_composition(baseline(), 0.03, false).unwrap();
        assert_eq!(spec.mappings.len(), 7);
        let g = |id: &str| {
            spec.mappings
                .iter()
                .find(|m| m.id == id)
                .unwrap()
                .cost_per_use
        };
        assert_eq!(g("2x4c->8c"), 0.5 * g("2x8c->16c"));
        assert!(validate(&spec).is_empty());
        let free = add_composition(baseline(), 0.0, false).unwrap();
        assert!(free.mappings.iter().all(|m| m.cost_per_use == 0.0));
        let with_good = add_composition(baseline(), 0.03, true).unwrap();
        assert_eq!(with_good.produced.len(), 4);
        assert!(validate(&with_good).is_empty());
    }

    #[test]
    fn adaptation_is_idempotent() {
        let once = add_adaptation(baseline()).unwrap();
        assert_eq!(once.mappings.len(), 6);
        let twice = add_adaptation(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn two_supplier_dispersion_shape() {
        let mut base = baseline();
        base.uncertainty
            .supply
            .insert(DEFAULT_SUPPLIER.into(), Distribution::normal(0.36));
        let spec = add_dispersion(base.clone(), DispersionMode::TwoSuppliersAll, 1.0).unwrap();
        assert_eq!(spec.produced.len(), 6);
        assert_eq!(spec.mappings.len(), 6);
        let eq = spec
            .constraints
            .iter()
            .filter(|c| matches!(c, OrderConstraint::OrderEquality { .. }))
            .count();
        assert_eq!(eq, 3);
        assert!(validate(&spec).is_empty());
        assert_eq!(spec.uncertainty.supply.len(), 2);
        let nre = |s: &MarketSpec, id: &str| s.produced[s.produced_index(id).unwrap()].nre;
        assert_eq!(nre(&spec, "16c@B"), 0.0);
        let keep = add_dispersion(base.clone(), DispersionMode::TwoSuppliersAll, 0.0).unwrap();
        assert_eq!(nre(&keep, "16c@B"), nre(&base, "16c"));
    }

    #[test]
    fn unique_dispersion_splits_suppliers() {
        let mut base = baseline();
        base.uncertainty
            .supply
            .insert(DEFAULT_SUPPLIER.into(), Distribution::normal(0.2));
        let spec = add_dispersion(base, DispersionMode::UniquePerGood, 0.0).unwrap();
        assert_eq!(spec.suppliers().len(), 3);
        assert_eq!(spec.uncertainty.supply.len(), 3);
        assert!(validate(&spec).is_empty());
    }

    #[test]
    fn builders_contain_baseline_mappings() {
        let base = baseline();
        for spec in [
            add_composition(base.clone(), 0.03, false).unwrap(),
            add_adaptation(base.clone()).unwrap(),
        ] {
            for m in &base.mappings {
                assert!(spec.mappings.contains(m));
            }
        }
    }

    #[test]
    fn calibrated_curve_peaks_at_base_demand() {
        let c = DemandCurve::calibrated(0.3, 100.0);
        let rev = |s: f64| s * c.price(s, 100.0);
        assert!(rev(100.0) > rev(99.0) && rev(100.0) > rev(101.0));
        assert_eq!(c.price(100.0, 100.0), 0.3);
    }
}
