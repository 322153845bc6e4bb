//! Analytic solutions of small scenarios, used to cross-check the engine.
//!
//! * Substitution: one demand served by a direct good or by a substitute.
//! * Flexible good ("goop"): two demands whose total `k` is known but whose
//!   split is uniform over `0..=k`, served by dedicated goods or by one
//!   flexible good that adapts to either at cost `t`.
//! * Programmability: `k` Bernoulli demands served by `k` ASICs or by one
//!   programmable part.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{DemandedGood, Mapping, MarketSpec, ProducedGood, RecourseStage};
use crate::math::sqrt;
use crate::uncertainty::{Distribution, Scenario, ScenarioSet, Strategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("break-even demand is undefined when c1 == c2 ({0})")]
    EqualUnitCosts(f64),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionScenario {
    /// Unit benefit of the demanded good.
    pub r: f64,
    /// Mapping cost of either good into the demand.
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    pub n1: f64,
    pub n2: f64,
    pub zd: f64,
}

impl SubstitutionScenario {
    pub fn validate(&self) -> Result<(), ClosedFormError> {
        let all = [self.r, self.t, self.c1, self.c2, self.n1, self.n2, self.zd];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(ClosedFormError::Invalid(format!(
                "negative or non-finite field in {self:?}"
            )))
        }
    }

    /// Profit of serving the whole demand with good 1 or 2.
    pub fn profit(&self, good: u8) -> f64 {
        let (c, n) = if good == 1 {
            (self.c1, self.n1)
        } else {
            (self.c2, self.n2)
        };
        (self.r - c - self.t) * self.zd - n
    }
}

/// True iff building the substitute strictly beats building the direct good.
pub fn prefer_substitute(s: &SubstitutionScenario) -> bool {
    (s.c2 + s.t - s.r) * s.zd + s.n2 < (s.c1 + s.t - s.r) * s.zd + s.n1
}

/// Demand at which both choices earn the same profit.
pub fn break_even_demand(n1: f64, n2: f64, c1: f64, c2: f64) -> Result<f64, ClosedFormError> {
    if c1 == c2 {
        return Err(ClosedFormError::EqualUnitCosts(c1));
    }
    Ok((n1 - n2) / (c2 - c1))
}

/// Deterministic two-producer market for the substitution scenario. The
/// shortage cost equals the benefit, so serving the demand always pays.
pub fn substitution_spec(s: &SubstitutionScenario) -> MarketSpec {
    let good = |id: &str, c: f64, n: f64| ProducedGood {
        id: id.into(),
        unit_cost: c,
        nre: n,
        yield_rate: 1.0,
        supplier_id: "foundry".into(),
    };
    MarketSpec {
        produced: vec![good("p1", s.c1, s.n1), good("p2", s.c2, s.n2)],
        demanded: vec![DemandedGood {
            id: "d".into(),
            base_demand: s.zd,
            unit_benefit: s.r,
            unit_shortage_cost: s.r,
            salvage_value: 0.0,
            demand_curve: None,
        }],
        mappings: vec![
            Mapping::new("p1->d", &[("p1", 1.0)], "d", s.t),
            Mapping::new("p2->d", &[("p2", 1.0)], "d", s.t),
        ],
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoopScenario {
    /// Known total demand.
    pub k: u32,
    /// Unit cost of every produced good.
    pub c: f64,
    /// Unit shortage cost.
    pub g: f64,
    /// Cost of adapting the flexible good to either demand.
    pub t: f64,
    /// Unit benefit; zero gives the pure cost-minimization setting.
    #[serde(default)]
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoopRule {
    /// Exhaustive evaluation over all integer plans and all splits.
    Enumeration,
    /// The inequality `g * t <= k` as literally stated.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoopPlan {
    /// Orders of the two dedicated goods and the flexible good.
    pub orders: [u32; 3],
    pub expected_profit: f64,
}

/// Expected profit of `orders` over the `k + 1` equally likely splits.
pub fn goop_expected_profit(s: &GoopScenario, orders: [f64; 3]) -> f64 {
    let k = s.k as f64;
    let cover = s.r + s.g > s.t;
    let mut total = 0.0;
    for z1 in 0..=s.k {
        let z = [z1 as f64, k - z1 as f64];
        let direct = [orders[0].min(z[0]), orders[1].min(z[1])];
        let gap = (z[0] - direct[0]) + (z[1] - direct[1]);
        let flex = if cover { orders[2].min(gap) } else { 0.0 };
        let sold = direct[0] + direct[1] + flex;
        total += s.r * sold - s.t * flex - s.g * (k - sold);
    }
    total / (k + 1.0) - s.c * (orders[0] + orders[1] + orders[2])
}

/// Best integer plan with every order in `0..=k`. Ties keep the first plan
/// in lexicographic order.
pub fn goop_optimal(s: &GoopScenario) -> GoopPlan {
    let mut best = GoopPlan {
        orders: [0, 0, 0],
        expected_profit: f64::NEG_INFINITY,
    };
    for a in 0..=s.k {
        for b in 0..=s.k {
            for f in 0..=s.k {
                let v = goop_expected_profit(s, [a as f64, b as f64, f as f64]);
                if v > best.expected_profit + 1e-12 * v.abs().max(1.0) {
                    best = GoopPlan {
                        orders: [a, b, f],
                        expected_profit: v,
                    };
                }
            }
        }
    }
    best
}

/// Best plan that orders only the flexible good (at least one unit).
pub fn goop_best_flexible(s: &GoopScenario) -> GoopPlan {
    (1..=s.k.max(1))
        .map(|f| GoopPlan {
            orders: [0, 0, f],
            expected_profit: goop_expected_profit(s, [0.0, 0.0, f as f64]),
        })
        .fold(None, |acc: Option<GoopPlan>, p| match acc {
            Some(a) if a.expected_profit >= p.expected_profit => Some(a),
            _ => Some(p),
        })
        .expect("at least one flexible plan")
}

/// Whether building only the flexible good is (weakly) optimal.
pub fn goop_threshold(s: &GoopScenario, rule: GoopRule) -> bool {
    match rule {
        GoopRule::Literal => s.g * s.t <= s.k as f64,
        GoopRule::Enumeration => {
            let best = goop_optimal(s).expected_profit;
            goop_best_flexible(s).expected_profit >= best - 1e-9 * best.abs().max(1.0)
        }
    }
}

/// Engine encoding of the flexible-good scenario: a market with mapping
/// after demand is known, plus its exact `k + 1` point scenario set.
pub fn goop_spec(s: &GoopScenario) -> (MarketSpec, ScenarioSet) {
    let half = (s.k as f64 / 2.0).max(0.5);
    let good = |id: &str| ProducedGood {
        id: id.into(),
        unit_cost: s.c,
        nre: 0.0,
        yield_rate: 1.0,
        supplier_id: "foundry".into(),
    };
    let demand = |id: &str| DemandedGood {
        id: id.into(),
        base_demand: half,
        unit_benefit: s.r,
        unit_shortage_cost: s.g,
        salvage_value: 0.0,
        demand_curve: None,
    };
    // The split is not a sampling distribution; these entries only declare
    // the demand axes, the set below replaces their draws.
    let mut dem = BTreeMap::new();
    dem.insert("d1".into(), Distribution::normal(0.5));
    dem.insert("d2".into(), Distribution::normal(0.5));
    let spec = MarketSpec {
        produced: vec![good("p1"), good("p2"), good("p3")],
        demanded: vec![demand("d1"), demand("d2")],
        mappings: vec![
            Mapping::new("p1->d1", &[("p1", 1.0)], "d1", 0.0),
            Mapping::new("p2->d2", &[("p2", 1.0)], "d2", 0.0),
            Mapping::new("p3->d1", &[("p3", 1.0)], "d1", s.t),
            Mapping::new("p3->d2", &[("p3", 1.0)], "d2", s.t),
        ],
        uncertainty: crate::uncertainty::UncertaintyConfig {
            demand: dem,
            ..Default::default()
        },
        recourse_stage: RecourseStage::MappingAfterSupplyAndDemand,
        ..Default::default()
    };
    let w = 1.0 / (s.k as f64 + 1.0);
    let scenarios = (0..=s.k)
        .map(|z1| Scenario {
            supply: Vec::new(),
            demand: vec![z1 as f64 / half, (s.k - z1) as f64 / half],
            weight: w,
            supply_index: 0,
        })
        .collect();
    let set = ScenarioSet {
        supply_axes: Vec::new(),
        demand_axes: vec!["d1".into(), "d2".into()],
        scenarios,
        supply_points: 1,
        seed: 0,
        strategy: Strategy::Exhaustive,
        rng: String::from("none"),
    };
    (spec, set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgrammabilityScenario {
    /// Number of demanded ASIC designs.
    pub k: u32,
    /// Units per demand when it materializes.
    pub m: f64,
    /// Probability that each demand materializes.
    pub p: f64,
    /// Margin `r - c` per unit sold.
    pub margin: f64,
    /// Salvage per unit left over.
    pub h: f64,
    pub n_asic: f64,
    pub n_prog: f64,
}

impl ProgrammabilityScenario {
    pub fn validate(&self) -> Result<(), ClosedFormError> {
        if self.k == 0 || !(0.0..=1.0).contains(&self.p) || !(self.m >= 0.0) {
            return Err(ClosedFormError::Invalid(format!(
                "need k >= 1, p in [0, 1], m >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Slope of the expected profit of one ASIC in its order.
    pub fn asic_slope(&self) -> f64 {
        self.margin * self.p + self.h * (1.0 - self.p)
    }

    /// `k p m R - n`, the expected profit at `x = k p m` as derived by
    /// replacing demand by its mean inside the min/max terms. It equals
    /// the exact value when demand is certain and otherwise bounds it from
    /// above (Jensen), by `(R - h) E[(x - S)^+]`.
    pub fn mean_demand_profit(&self) -> f64 {
        self.k as f64 * self.p * self.m * self.margin - self.n_prog
    }

    /// Smallest `k` with `k > n / (p m R)`.
    pub fn threshold_k(&self) -> f64 {
        self.n_prog / (self.p * self.m * self.margin)
    }

    fn realized(&self, x: f64, demand: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        x.min(demand) * self.margin + (x - demand).max(0.0) * self.h - self.n_prog
    }
}

/// Expected profit of ASICs ordered at `x` (one entry per design); designs
/// with `x_i = 0` are not built and contribute zero.
pub fn asic_expected_profit(s: &ProgrammabilityScenario, x: &[f64]) -> f64 {
    x.iter()
        .map(|&xi| {
            if xi > 0.0 {
                xi * s.asic_slope() - s.n_asic
            } else {
                0.0
            }
        })
        .sum()
}

/// ASIC profit at the best orders: each design is built to `m` or not at all.
pub fn asic_optimal_profit(s: &ProgrammabilityScenario) -> f64 {
    s.k as f64 * (s.m * s.asic_slope() - s.n_asic).max(0.0)
}

fn binomial_pmf(k: u32, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; k as usize + 1];
    let mut coef = 1.0;
    for j in 0..=k {
        if j > 0 {
            coef = coef * (k - j + 1) as f64 / j as f64;
        }
        pmf[j as usize] =
            coef * crate::math::powf(p, j as f64) * crate::math::powf(1.0 - p, (k - j) as f64);
    }
    pmf
}

/// Exact expected profit of the programmable part ordered at `x`.
pub fn programmable_expected_profit(s: &ProgrammabilityScenario, x: f64) -> f64 {
    binomial_pmf(s.k, s.p)
        .iter()
        .enumerate()
        .map(|(j, w)| w * s.realized(x, j as f64 * s.m))
        .sum()
}

/// The same expectation by enumerating all `2^k` demand outcomes.
pub fn programmable_enumerated(
    s: &ProgrammabilityScenario,
    x: f64,
) -> Result<f64, ClosedFormError> {
    if s.k > 24 {
        return Err(ClosedFormError::Invalid(format!(
            "2^{} outcomes is too many to enumerate",
            s.k
        )));
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << s.k) {
        let hits = mask.count_ones();
        let w =
            crate::math::powf(s.p, hits as f64) * crate::math::powf(1.0 - s.p, (s.k - hits) as f64);
        total += w * s.realized(x, hits as f64 * s.m);
    }
    Ok(total)
}

/// Monte Carlo estimate `(mean, standard error)` with `n` draws.
pub fn programmable_monte_carlo(
    s: &ProgrammabilityScenario,
    x: f64,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let hits = (0..s.k).filter(|_| rng.random::<f64>() < s.p).count();
        let v = s.realized(x, hits as f64 * s.m);
        sum += v;
        sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    (mean, sqrt(var / nf))
}

/// Best order of the programmable part. Expected profit is concave and
/// piecewise linear in `x > 0` with kinks at multiples of `m`, so the
/// optimum is `0` or one of those multiples.
pub fn programmable_optimal(s: &ProgrammabilityScenario) -> (f64, f64) {
    (0..=s.k)
        .map(|j| {
            let x = j as f64 * s.m;
            (x, programmable_expected_profit(s, x))
        })
        .fold(
            (0.0, 0.0),
            |best, c| if c.1 > best.1 + 1e-12 { c } else { best },
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(zd: f64) -> SubstitutionScenario {
        SubstitutionScenario {
            r: 5.0,
            t: 0.0,
            c1: 1.0,
            c2: 2.0,
            n1: 100.0,
            n2: 40.0,
            zd,
        }
    }

    #[test]
    fn substitution_examples() {
        let sym = SubstitutionScenario {
            c2: 1.0,
            n2: 100.0,
            ..sub(30.0)
        };
        assert!(!prefer_substitute(&sym));
        assert!(prefer_substitute(&sub(30.0)));
        assert!(!prefer_substitute(&sub(100.0)));
        assert_eq!(break_even_demand(100.0, 40.0, 1.0, 2.0).unwrap(), 60.0);
        assert_eq!(break_even_demand(7.0, 7.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(break_even_demand(1.0, 2.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn break_even_matches_profit_equality() {
        // Independent check: scan demand and find where the profit order flips.
        let mut flip = None;
        for z in 0..200 {
            let s = sub(z as f64);
            if s.profit(1) > s.profit(2) && flip.is_none() {
                flip = Some(z);
            }
        }
        assert_eq!(flip, Some(61));
        assert!((sub(60.0).profit(1) - sub(60.0).profit(2)).abs() < 1e-12);
    }

    #[test]
    fn goop_trivial_cases() {
        for k in 1..6 {
            let free = GoopScenario {
                k,
                c: 1.0,
                g: 3.0,
                t: 0.0,
                r: 0.0,
            };
            assert!(goop_threshold(&free, GoopRule::Enumeration));
            let relaxed = GoopScenario {
                k,
                c: 1.0,
                g: 0.0,
                t: 0.5,
                r: 0.0,
            };
            assert!(!goop_threshold(&relaxed, GoopRule::Enumeration));
        }
    }

    #[test]
    fn goop_k4_by_hand() {
        // k = 4: splits (0,4) .. (4,0). Dedicated (4,4,0) never runs short,
        // costing 8c; flexible (0,0,4) costs 4c + 4t. Mixed plans pay
        // shortage on some splits. With c = 1, g = 10 flexible wins iff
        // 4t < 4 among these two, and (2,2,2) costs 6 + 2t E[gap] where
        // gap = |z1 - 2| averages 6/5.
        let s = GoopScenario {
            k: 4,
            c: 1.0,
            g: 10.0,
            t: 0.5,
            r: 0.0,
        };
        let flex = goop_expected_profit(&s, [0.0, 0.0, 4.0]);
        assert!((flex - (-4.0 - 4.0 * 0.5)).abs() < 1e-12);
        assert!((goop_expected_profit(&s, [4.0, 4.0, 0.0]) + 8.0).abs() < 1e-12);
        let mixed = goop_expected_profit(&s, [2.0, 2.0, 2.0]);
        assert!((mixed - (-6.0 - 0.5 * 6.0 / 5.0)).abs() < 1e-12);
        assert!(goop_optimal(&s).expected_profit >= mixed);
    }

    #[test]
    fn goop_literal_flag() {
        let s = GoopScenario {
            k: 4,
            c: 1.0,
            g: 10.0,
            t: 0.5,
            r: 0.0,
        };
        assert!(!goop_threshold(&s, GoopRule::Literal));
        assert!(goop_threshold(
            &GoopScenario { t: 0.4, ..s },
            GoopRule::Literal
        ));
    }

    fn prog(k: u32) -> ProgrammabilityScenario {
        ProgrammabilityScenario {
            k,
            m: 10.0,
            p: 0.3,
            margin: 1.0,
            h: 0.0,
            n_asic: 3.0,
            n_prog: 12.0,
        }
    }

    #[test]
    fn asic_zero_slope_is_not_built() {
        let s = ProgrammabilityScenario {
            margin: 0.0,
            h: 0.0,
            ..prog(3)
        };
        assert_eq!(asic_expected_profit(&s, &[5.0]), -3.0);
        assert_eq!(asic_optimal_profit(&s), 0.0);
    }

    #[test]
    fn programmable_enumeration_matches_binomial() {
        for k in 1..=12 {
            let s = prog(k);
            for x in [0.0, 5.0, k as f64 * 3.0, k as f64 * 10.0] {
                let a = programmable_expected_profit(&s, x);
                let b = programmable_enumerated(&s, x).unwrap();
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{k} {x}: {a} {b}");
            }
        }
    }

    #[test]
    fn mean_demand_point_is_upper_bound() {
        let s = prog(10);
        let x = s.k as f64 * s.p * s.m;
        let exact = programmable_expected_profit(&s, x);
        assert!(exact <= s.mean_demand_profit() + 1e-12);
        let certain = ProgrammabilityScenario { p: 1.0, ..s };
        let x = certain.k as f64 * certain.m;
        assert!(
            (programmable_expected_profit(&certain, x) - certain.mean_demand_profit()).abs()
                < 1e-12
        );
    }

    #[test]
    fn monte_carlo_within_three_stderr() {
        let s = prog(8);
        let x = 25.0;
        let (mean, se) = programmable_monte_carlo(&s, x, 100_000, 11);
        let exact = programmable_expected_profit(&s, x);
        assert!((mean - exact).abs() < 3.0 * se, "{mean} {exact} {se}");
    }
}
