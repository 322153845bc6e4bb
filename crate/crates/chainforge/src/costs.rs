//! Calibration check of the cost model against reference unit costs.

use chainforge_core::chipcost::{CostError, CostModel, GoodEconomics};

/// Reference unit costs of 16-, 8- and 4-core dies at the default order.
pub const REFERENCE_UNIT_COSTS: [(u32, f64); 3] = [(16, 0.12), (8, 0.05), (4, 0.024)];
pub const UNIT_COST_TOLERANCE: f64 = 0.15;
pub const REFERENCE_RATIO: f64 = 1.71;
pub const RATIO_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub economics: GoodEconomics,
    pub reference: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub rows: Vec<CostRow>,
    pub ratio: f64,
    pub ratio_ok: bool,
}

impl Calibration {
    pub fn passed(&self) -> bool {
        self.ratio_ok && self.rows.iter().all(|r| r.ok)
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![format!(
            "{:>5} {:>9} {:>7} {:>10} {:>10} {:>10} {:>9}  status",
            "cores", "area_mm2", "yield", "unit_cost", "reference", "nre", "benefit"
        )];
        for r in &self.rows {
            let e = &r.economics;
            out.push(format!(
                "{:>5} {:>9.1} {:>7.4} {:>10.5} {:>10.4} {:>10.3e} {:>9.5}  {}",
                e.cores,
                e.area,
                e.yield_rate,
                e.unit_cost,
                r.reference,
                e.nre,
                e.unit_benefit,
                if r.ok { "ok" } else { "OUT OF RANGE" }
            ));
        }
        out.push(format!(
            "32-core monolithic / composed cost ratio: {:.4} (reference {} +/- {})  {}",
            self.ratio,
            REFERENCE_RATIO,
            RATIO_TOLERANCE,
            if self.ratio_ok { "ok" } else { "OUT OF RANGE" }
        ));
        out
    }
}

pub fn calibrate(model: &CostModel) -> Result<Calibration, CostError> {
    let mut rows = Vec::new();
    for (cores, reference) in REFERENCE_UNIT_COSTS {
        let economics = model.economics(cores)?;
        let ok = (economics.unit_cost - reference).abs() <= UNIT_COST_TOLERANCE * reference;
        rows.push(CostRow {
            economics,
            reference,
            ok,
        });
    }
    let ratio = model.composition_validation()?.ratio;
    Ok(Calibration {
        rows,
        ratio,
        ratio_ok: (ratio - REFERENCE_RATIO).abs() <= RATIO_TOLERANCE,
    })
}
