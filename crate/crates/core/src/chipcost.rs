//! Die cost model: dies per wafer, clustered-defect yield, recurring and
//! non-recurring cost, unit cost, unit benefit and interposer cost.
//!
//! All money is normalized to the cost of a 45 nm logic wafer: a raw wafer
//! cost of 24300 with a normalizer of 10000 is 2.43 normalized units.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{floor, powf, sqrt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("die area {area} mm^2 does not fit a wafer of radius {radius} mm")]
    Domain { radius: f64, area: f64 },
    #[error("die of area {area} mm^2 has no good dies per wafer")]
    ZeroGoodDies { area: f64 },
    #[error("order quantity must be positive, got {0}")]
    NonPositiveOrder(f64),
    #[error("base demand must be positive, got {0}")]
    NonPositiveDemand(f64),
}

/// Physical description of one die for the yield model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DieSpec {
    /// Die area in mm^2.
    pub area: f64,
    /// Vulnerable layers: one device layer plus twelve metal layers.
    #[serde(default = "default_layers")]
    pub n_layers: f64,
    #[serde(default = "default_frac_wire")]
    pub frac_crit_wire: f64,
    #[serde(default = "default_frac_logic")]
    pub frac_crit_logic: f64,
    /// Defect clustering factor.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defects per mm^2.
    pub defect_density: f64,
}

fn default_layers() -> f64 {
    13.0
}
fn default_frac_wire() -> f64 {
    0.2625
}
fn default_frac_logic() -> f64 {
    0.75
}
fn default_alpha() -> f64 {
    1.0
}

impl DieSpec {
    pub fn new(area: f64, defect_density: f64) -> Self {
        Self {
            area,
            n_layers: default_layers(),
            frac_crit_wire: default_frac_wire(),
            frac_crit_logic: default_frac_logic(),
            alpha: default_alpha(),
            defect_density,
        }
    }

    /// Aggregate critical area; wire and logic fractions are summed and
    /// capped at the full die.
    pub fn critical_area(&self) -> f64 {
        self.area * (self.frac_crit_wire + self.frac_crit_logic).min(1.0)
    }
}

/// Wafer and cost-table constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Wafer radius in mm (150 for a 300 mm wafer).
    pub wafer_radius: f64,
    /// Recurring cost of one logic wafer, before normalization.
    pub re_wafer_cost: f64,
    /// Divisor that normalizes raw costs to 45 nm wafer cost.
    pub cost_normalizer: f64,
    /// Area-dependent NRE design cost, normalized money per mm^2.
    pub nre_design_cost_per_mm2: f64,
    /// One mask set per design, normalized money.
    pub nre_mask_set_cost: f64,
    /// Units ordered.
    pub order: f64,
    /// Drop the NRE term from unit cost (sensitivity runs).
    pub re_only_unit_cost: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            wafer_radius: 150.0,
            re_wafer_cost: 24300.0,
            cost_normalizer: 10000.0,
            nre_design_cost_per_mm2: 10700.0,
            nre_mask_set_cost: 50000.0,
            order: 1e8,
            re_only_unit_cost: false,
        }
    }
}

impl CostParams {
    pub fn normalized_wafer_cost(&self) -> f64 {
        self.re_wafer_cost / self.cost_normalizer
    }
}

/// `floor(pi * (R - sqrt(A))^2 / A)`.
pub fn dies_per_wafer(radius: f64, area: f64) -> Result<u64, CostError> {
    if !(area > 0.0) || !(radius > sqrt(area)) {
        return Err(CostError::Domain { radius, area });
    }
    let edge = radius - sqrt(area);
    Ok(floor(PI * edge * edge / area) as u64)
}

/// `(1 + D0 / n * A_crit / alpha)^-alpha`.
pub fn die_yield(die: &DieSpec) -> f64 {
    let defects = die.defect_density / die.n_layers * die.critical_area();
    powf(1.0 + defects / die.alpha, -die.alpha)
}

/// Good dies per wafer after yield loss.
pub fn good_dies_per_wafer(die: &DieSpec, params: &CostParams) -> Result<f64, CostError> {
    let good = dies_per_wafer(params.wafer_radius, die.area)? as f64 * die_yield(die);
    if good <= 0.0 {
        return Err(CostError::ZeroGoodDies { area: die.area });
    }
    Ok(good)
}

/// Recurring cost of an order: wafers needed times wafer cost.
pub fn re_cost(die: &DieSpec, params: &CostParams) -> Result<f64, CostError> {
    if !(params.order > 0.0) {
        return Err(CostError::NonPositiveOrder(params.order));
    }
    Ok(params.order / good_dies_per_wafer(die, params)? * params.normalized_wafer_cost())
}

/// Area-scaled design cost plus one mask set.
pub fn nre(die: &DieSpec, params: &CostParams) -> f64 {
    params.nre_design_cost_per_mm2 * die.area + params.nre_mask_set_cost
}

/// `2 * (RE_cost + NRE_cost) / order`.
pub fn unit_cost(die: &DieSpec, params: &CostParams) -> Result<f64, CostError> {
    let re = re_cost(die, params)?;
    let nre = if params.re_only_unit_cost {
        0.0
    } else {
        nre(die, params)
    };
    Ok(2.0 * (re + nre) / params.order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitEconomics {
    pub unit_benefit: f64,
    pub shortage_cost: f64,
}

/// 50% gross margin over unit cost plus amortized NRE; shortage cost equals
/// unit benefit.
pub fn unit_benefit(
    unit_cost: f64,
    nre: f64,
    base_demand: f64,
) -> Result<UnitEconomics, CostError> {
    if !(base_demand > 0.0) {
        return Err(CostError::NonPositiveDemand(base_demand));
    }
    let unit_benefit = 2.0 * (unit_cost + nre / base_demand);
    Ok(UnitEconomics {
        unit_benefit,
        shortage_cost: unit_benefit,
    })
}

/// Interposer wafer constants. Interposer cost is derived with the same
/// unit-cost formula as logic dies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterposerParams {
    pub wafer_cost: f64,
    pub defect_density: f64,
    pub nre_design_cost_per_mm2: f64,
    pub nre_mask_set_cost: f64,
}

impl Default for InterposerParams {
    fn default() -> Self {
        Self {
            wafer_cost: 14500.0,
            defect_density: 0.0,
            nre_design_cost_per_mm2: 0.0,
            nre_mask_set_cost: 600000.0,
        }
    }
}

/// Economic parameters of one produced/demanded good pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodEconomics {
    pub cores: u32,
    pub area: f64,
    pub yield_rate: f64,
    pub unit_cost: f64,
    pub nre: f64,
    pub unit_benefit: f64,
    pub shortage_cost: f64,
    pub base_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionCheck {
    pub monolithic_cost: f64,
    pub chiplet_unit_cost: f64,
    pub interposer_cost: f64,
    pub composed_cost: f64,
    pub ratio: f64,
}

/// Everything needed to turn core counts into market parameters.
///
/// Die area scales linearly with core count. The shipped defaults reproduce
/// normalized unit costs near 0.12 / 0.05 / 0.024 for 16/8/4-core dies at an
/// order of 1e8 and a 32-core monolithic die about 1.71x as expensive as four
/// composed 8-core chiplets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub area_per_core: f64,
    pub defect_density: f64,
    pub n_layers: f64,
    pub frac_crit_wire: f64,
    pub frac_crit_logic: f64,
    pub alpha: f64,
    pub params: CostParams,
    pub interposer: InterposerParams,
    pub base_demand: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            area_per_core: 20.0,
            defect_density: 0.0175,
            n_layers: default_layers(),
            frac_crit_wire: default_frac_wire(),
            frac_crit_logic: default_frac_logic(),
            alpha: default_alpha(),
            params: CostParams::default(),
            interposer: InterposerParams::default(),
            base_demand: 1e8,
        }
    }
}

impl CostModel {
    pub fn die(&self, cores: u32) -> DieSpec {
        self.die_of_area(self.area_per_core * cores as f64)
    }

    pub fn die_of_area(&self, area: f64) -> DieSpec {
        DieSpec {
            area,
            n_layers: self.n_layers,
            frac_crit_wire: self.frac_crit_wire,
            frac_crit_logic: self.frac_crit_logic,
            alpha: self.alpha,
            defect_density: self.defect_density,
        }
    }

    pub fn params_with_order(&self, order: f64) -> CostParams {
        CostParams {
            order,
            ..self.params
        }
    }

    pub fn economics(&self, cores: u32) -> Result<GoodEconomics, CostError> {
        self.economics_of_area(cores, self.area_per_core * cores as f64)
    }

    pub fn economics_of_area(&self, cores: u32, area: f64) -> Result<GoodEconomics, CostError> {
        let die = self.die_of_area(area);
        let unit_cost = unit_cost(&die, &self.params)?;
        let nre = nre(&die, &self.params);
        let ue = unit_benefit(unit_cost, nre, self.base_demand)?;
        Ok(GoodEconomics {
            cores,
            area,
            yield_rate: die_yield(&die),
            unit_cost,
            nre,
            unit_benefit: ue.unit_benefit,
            shortage_cost: ue.shortage_cost,
            base_demand: self.base_demand,
        })
    }

    /// Per-unit cost of an interposer of `area` mm^2 at `order` units.
    pub fn interposer_cost(&self, area: f64, order: f64) -> Result<f64, CostError> {
        let ip = &self.interposer;
        let die = DieSpec {
            defect_density: ip.defect_density,
            ..self.die_of_area(area)
        };
        let params = CostParams {
            re_wafer_cost: ip.wafer_cost,
            nre_design_cost_per_mm2: ip.nre_design_cost_per_mm2,
            nre_mask_set_cost: ip.nre_mask_set_cost,
            order,
            re_only_unit_cost: false,
            ..self.params
        };
        unit_cost(&die, &params)
    }

    /// Interposer cost of a composed 16-core package at the configured order.
    pub fn interposer_cost_16(&self) -> Result<f64, CostError> {
        self.interposer_cost(self.area_per_core * 16.0, self.params.order)
    }

    /// Cost of a monolithic 32-core die over the cost of a 32-core package
    /// made of four 8-core chiplets on an interposer of the full area.
    ///
    /// Chiplets are ordered at four times the package order, so the chiplet
    /// design's NRE is spread over all four.
    pub fn composition_validation(&self) -> Result<CompositionCheck, CostError> {
        let order = self.params.order;
        let monolithic_cost = unit_cost(&self.die(32), &self.params)?;
        let chiplet_unit_cost = unit_cost(&self.die(8), &self.params_with_order(4.0 * order))?;
        let interposer_cost = self.interposer_cost(self.area_per_core * 32.0, order)?;
        let composed_cost = 4.0 * chiplet_unit_cost + interposer_cost;
        Ok(CompositionCheck {
            monolithic_cost,
            chiplet_unit_cost,
            interposer_cost,
            composed_cost,
            ratio: monolithic_cost / composed_cost,
        })
    }

    /// Unit economics for a list of core counts, in the given order.
    pub fn calibration_table(&self, cores: &[u32]) -> Result<Vec<GoodEconomics>, CostError> {
        cores.iter().map(|&c| self.economics(c)).collect()
    }
}
