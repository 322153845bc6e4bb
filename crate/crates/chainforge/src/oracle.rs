//! Closed-form oracles checked against the full optimizer.

use std::collections::BTreeMap;

use chainforge_core::closed_form::{
    asic_optimal_profit, break_even_demand, goop_optimal, goop_spec, goop_threshold,
    prefer_substitute, programmable_enumerated, programmable_expected_profit,
    programmable_monte_carlo, programmable_optimal, substitution_spec, GoopRule, GoopScenario,
    ProgrammabilityScenario, SubstitutionScenario,
};
use chainforge_core::{
    optimize, sample, DemandedGood, Distribution, Mapping, MarketSpec, OptimizerConfig,
    ProducedGood, RecourseStage, ScenarioSet, Strategy,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubstitutionOracle {
    pub r: f64,
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    pub n1: f64,
    pub n2: f64,
    /// Demand grid the engine is run on.
    pub zd_grid: Vec<f64>,
}

impl Default for SubstitutionOracle {
    fn default() -> Self {
        Self {
            r: 5.0,
            t: 0.0,
            c1: 1.0,
            c2: 2.0,
            n1: 100.0,
            n2: 40.0,
            zd_grid: (2..=25).map(|i| 5.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoopOracle {
    pub k: u32,
    pub c: f64,
    pub g: f64,
    pub r: f64,
    /// Adaptation costs the engine is run on.
    pub t_grid: Vec<f64>,
}

impl Default for GoopOracle {
    fn default() -> Self {
        Self {
            k: 4,
            c: 1.0,
            g: 3.0,
            r: 0.0,
            t_grid: (0..=20).map(|i| 0.15 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProgrammabilityOracle {
    pub m: f64,
    pub p: f64,
    pub margin: f64,
    pub h: f64,
    pub n_asic: f64,
    pub n_prog: f64,
    /// Largest `k` checked by full enumeration of demand outcomes.
    pub max_k: u32,
    pub mc_draws: usize,
    pub mc_seed: u64,
    /// Largest `k` encoded as a market and run through the optimizer.
    pub engine_k_max: u32,
    /// Programmable NRE values the engine is run on.
    pub n_prog_grid: Vec<f64>,
}

impl Default for ProgrammabilityOracle {
    fn default() -> Self {
        Self {
            m: 10.0,
            p: 0.3,
            margin: 1.0,
            h: 0.0,
            n_asic: 3.0,
            n_prog: 12.0,
            max_k: 12,
            mc_draws: 100_000,
            mc_seed: 7,
            engine_k_max: 3,
            n_prog_grid: (0..=23).map(|i| 0.5 + 0.5 * i as f64).collect(),
        }
    }
}

impl ProgrammabilityOracle {
    fn scenario(&self, k: u32) -> ProgrammabilityScenario {
        ProgrammabilityScenario {
            k,
            m: self.m,
            p: self.p,
            margin: self.margin,
            h: self.h,
            n_asic: self.n_asic,
            n_prog: self.n_prog,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub substitution: SubstitutionOracle,
    pub goop: GoopOracle,
    pub programmability: ProgrammabilityOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl OracleCheck {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(name: &str, reason: String) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Skipped(reason),
            detail: String::new(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn line(&self) -> String {
        match &self.status {
            Status::Pass => format!("PASS {:<28} {}", self.name, self.detail),
            Status::Fail => format!("FAIL {:<28} {}", self.name, self.detail),
            Status::Skipped(r) => format!("SKIP {:<28} {}", self.name, r),
        }
    }
}

/// Grid points whose decision differs from the reference and that are not
/// within one grid step of a reference decision change.
fn unexcused<T: PartialEq + Copy>(
    grid: &[f64],
    expected: &[T],
    got: &[T],
    boundaries: &[f64],
) -> Vec<f64> {
    let step = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut flips: Vec<f64> = boundaries.to_vec();
    for i in 1..grid.len() {
        if expected[i] != expected[i - 1] {
            flips.push(0.5 * (grid[i] + grid[i - 1]));
        }
    }
    grid.iter()
        .zip(expected.iter().zip(got))
        .filter(|(_, (e, g))| e != g)
        .map(|(&x, _)| x)
        .filter(|x| !flips.iter().any(|b| (x - b).abs() <= step + 1e-12))
        .collect()
}

fn deterministic_set(spec: &MarketSpec) -> Option<ScenarioSet> {
    sample(&spec.uncertainty, Strategy::Exhaustive, 0).ok()
}

/// `0` orders nothing, `1`/`2` the direct good or the substitute, `3` both.
fn substitution_choice(spec: &MarketSpec, opt: &OptimizerConfig) -> Option<u8> {
    let set = deterministic_set(spec)?;
    let r = optimize(spec, &set, opt).ok()?;
    let has = |g: &str| r.ordered_goods.iter().any(|x| x == g);
    Some(match (has("p1"), has("p2")) {
        (false, false) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (true, true) => 3,
    })
}

fn substitution_checks(o: &SubstitutionOracle, opt: &OptimizerConfig, out: &mut Vec<OracleCheck>) {
    let z_eq = match break_even_demand(o.n1, o.n2, o.c1, o.c2) {
        Ok(z) => z,
        Err(e) => {
            out.push(OracleCheck::skipped("break_even_formula", e.to_string()));
            out.push(OracleCheck::skipped("break_even_engine", e.to_string()));
            return;
        }
    };
    let base = SubstitutionScenario {
        r: o.r,
        t: o.t,
        c1: o.c1,
        c2: o.c2,
        n1: o.n1,
        n2: o.n2,
        zd: 0.0,
    };
    // Profit equality at the formula's demand, and the analytic preference
    // on either side of it.
    let at = SubstitutionScenario { zd: z_eq, ..base };
    let gap = (at.profit(1) - at.profit(2)).abs();
    // profit2 - profit1 = (c1 - c2)(Zd - Z=), so the preference flips sign there.
    let delta = 1.0_f64.max(0.01 * z_eq.abs());
    let consistent = [z_eq - delta, z_eq + delta].iter().all(|&zd| {
        zd < 0.0
            || prefer_substitute(&SubstitutionScenario { zd, ..base })
                == ((o.c2 - o.c1) * (zd - z_eq) < 0.0)
    });
    out.push(OracleCheck::new(
        "break_even_formula",
        gap <= 1e-9 * (1.0 + at.profit(1).abs()) && consistent,
        format!("Z= = {z_eq}, profit gap at Z= = {gap:.3e}"),
    ));

    let grid = &o.zd_grid;
    if grid.len() < 2 {
        out.push(OracleCheck::skipped(
            "break_even_engine",
            "zd_grid needs two points".into(),
        ));
        return;
    }
    // Analytic choice including the option of not ordering, in which case
    // shortage costs r per unit.
    let expected: Vec<u8> = grid
        .iter()
        .map(|&zd| {
            let s = SubstitutionScenario { zd, ..base };
            let none = -o.r * zd;
            let (p1, p2) = (s.profit(1), s.profit(2));
            if none >= p1 && none >= p2 {
                0
            } else if prefer_substitute(&s) {
                2
            } else {
                1
            }
        })
        .collect();
    let got: Vec<u8> = grid
        .iter()
        .map(|&zd| {
            substitution_choice(
                &substitution_spec(&SubstitutionScenario { zd, ..base }),
                opt,
            )
            .unwrap_or(u8::MAX)
        })
        .collect();
    let bad = unexcused(grid, &expected, &got, &[z_eq]);
    let engine_flip = grid
        .iter()
        .zip(&got)
        .find(|(_, &g)| g == 1)
        .map(|(z, _)| *z);
    out.push(OracleCheck::new(
        "break_even_engine",
        bad.is_empty(),
        format!(
            "{} grid points, engine switches to the direct good at Z = {}, formula {z_eq}; unexcused mismatches {bad:?}",
            grid.len(),
            engine_flip.map_or("never".to_string(), |z| z.to_string())
        ),
    ));
}

fn goop_scenario(o: &GoopOracle, t: f64) -> GoopScenario {
    GoopScenario {
        k: o.k,
        c: o.c,
        g: o.g,
        t,
        r: o.r,
    }
}

fn goop_checks(o: &GoopOracle, opt: &OptimizerConfig, out: &mut Vec<OracleCheck>) {
    if o.k == 0 || o.t_grid.len() < 2 {
        out.push(OracleCheck::skipped(
            "goop_engine",
            "needs k >= 1 and two grid points".into(),
        ));
        return;
    }
    let expected: Vec<bool> = o
        .t_grid
        .iter()
        .map(|&t| {
            let plan = goop_optimal(&goop_scenario(o, t));
            plan.orders[0] == 0 && plan.orders[1] == 0 && plan.orders[2] > 0
        })
        .collect();
    let got: Vec<bool> = o
        .t_grid
        .iter()
        .map(|&t| {
            let (spec, set) = goop_spec(&goop_scenario(o, t));
            optimize(&spec, &set, opt)
                .map(|r| r.ordered_goods == ["p3"])
                .unwrap_or(false)
        })
        .collect();
    let bad = unexcused(&o.t_grid, &expected, &got, &[]);
    out.push(OracleCheck::new(
        "goop_engine",
        bad.is_empty(),
        format!(
            "k = {}, {} values of t, flexible-only optimal for {} of them; unexcused mismatches {bad:?}",
            o.k,
            o.t_grid.len(),
            expected.iter().filter(|&&e| e).count()
        ),
    ));

    let free = goop_threshold(&goop_scenario(o, 0.0), GoopRule::Enumeration);
    let relaxed = GoopScenario {
        g: 0.0,
        ..goop_scenario(o, o.t_grid[1])
    };
    let no_pressure = !goop_threshold(&relaxed, GoopRule::Enumeration);
    let needs = o.g > o.c;
    out.push(OracleCheck::new(
        "goop_limits",
        (free || !needs) && no_pressure,
        format!(
            "t = 0 flexible weakly optimal: {free}; g = 0 flexible optimal: {}",
            !no_pressure
        ),
    ));

    let disagreements: Vec<String> = o
        .t_grid
        .iter()
        .copied()
        .filter(|&t| {
            let s = goop_scenario(o, t);
            goop_threshold(&s, GoopRule::Literal) != goop_threshold(&s, GoopRule::Enumeration)
        })
        .map(|t| format!("{t:.3}"))
        .collect();
    out.push(OracleCheck::new(
        "goop_literal_rule",
        true,
        format!("g*t <= k disagrees with enumeration at t in {disagreements:?}"),
    ));
}

/// Market with one programmable good serving `k` Bernoulli demands, and its
/// exact scenario set.
pub fn programmable_spec(s: &ProgrammabilityScenario) -> MarketSpec {
    let mut demand = BTreeMap::new();
    let mut spec = MarketSpec {
        produced: vec![ProducedGood {
            id: "prog".into(),
            unit_cost: 0.0,
            nre: s.n_prog,
            yield_rate: 1.0,
            supplier_id: "foundry".into(),
        }],
        recourse_stage: RecourseStage::MappingAfterSupplyAndDemand,
        ..Default::default()
    };
    for i in 0..s.k {
        let id = format!("asic{i}");
        spec.demanded.push(DemandedGood {
            id: id.clone(),
            base_demand: s.m,
            unit_benefit: s.margin,
            unit_shortage_cost: 0.0,
            salvage_value: 0.0,
            demand_curve: None,
        });
        spec.mappings.push(Mapping::new(
            format!("prog->{id}"),
            &[("prog", 1.0)],
            &id,
            0.0,
        ));
        demand.insert(id, Distribution::Shock { prob: 1.0 - s.p });
    }
    spec.uncertainty.demand = demand;
    spec
}

fn programmability_checks(
    o: &ProgrammabilityOracle,
    opt: &OptimizerConfig,
    out: &mut Vec<OracleCheck>,
) {
    let base = o.scenario(1);
    if let Err(e) = base.validate() {
        out.push(OracleCheck::skipped(
            "programmability_threshold",
            e.to_string(),
        ));
        return;
    }
    if !(o.p * o.m * o.margin > 0.0) {
        out.push(OracleCheck::skipped(
            "programmability_threshold",
            "p m R must be positive for the threshold k > n/(pmR)".into(),
        ));
        return;
    }
    let threshold = base.threshold_k();
    let mut bad = Vec::new();
    let mut max_diff: f64 = 0.0;
    for k in 1..=o.max_k.min(20) {
        let s = o.scenario(k);
        // Build-all order: the least favorable order that still serves every
        // outcome, enumerated over all 2^k outcomes.
        let all = match programmable_enumerated(&s, k as f64 * s.m) {
            Ok(v) => v,
            Err(e) => {
                bad.push(format!("k={k}: {e}"));
                continue;
            }
        };
        max_diff = max_diff.max((all - programmable_expected_profit(&s, k as f64 * s.m)).abs());
        let (_, best) = programmable_optimal(&s);
        if (k as f64) > threshold && !(all > 0.0 && best > 0.0) {
            bad.push(format!("k={k}: profit {best} not positive above threshold"));
        }
        // Without salvage, R E[min(x, S)] - n <= kpmR - n, so below the
        // threshold nothing is worth building.
        if (k as f64) < threshold && s.h == 0.0 && best > 0.0 {
            bad.push(format!("k={k}: profit {best} positive below threshold"));
        }
    }
    let asic = asic_optimal_profit(&base);
    out.push(OracleCheck::new(
        "programmability_threshold",
        bad.is_empty() && max_diff < 1e-9 * (1.0 + o.n_prog.abs()),
        format!(
            "n/(pmR) = {threshold}, k <= {}, ASIC optimum per design {asic}, enumeration vs binomial max diff {max_diff:.2e} {bad:?}",
            o.max_k
        ),
    ));

    let k = o.max_k.clamp(1, 12);
    let s = o.scenario(k);
    let x = k as f64 * s.p * s.m;
    let exact = programmable_expected_profit(&s, x);
    let (mean, se) = programmable_monte_carlo(&s, x, o.mc_draws.max(2), o.mc_seed);
    out.push(OracleCheck::new(
        "programmability_monte_carlo",
        (mean - exact).abs() <= 3.0 * se + 1e-12,
        format!(
            "k = {k}, x = kpm: exact {exact:.6}, Monte Carlo {mean:.6} +- {se:.6}, mean-demand value kpmR - n = {:.6}",
            s.mean_demand_profit()
        ),
    ));

    let grid = &o.n_prog_grid;
    if grid.len() < 2 || o.engine_k_max == 0 {
        out.push(OracleCheck::skipped(
            "programmability_engine",
            "needs two grid points and engine_k_max >= 1".into(),
        ));
        return;
    }
    let mut bad = Vec::new();
    for k in 1..=o.engine_k_max.min(6) {
        let at = |n: f64| ProgrammabilityScenario {
            n_prog: n,
            h: 0.0,
            ..o.scenario(k)
        };
        let expected: Vec<bool> = grid
            .iter()
            .map(|&n| programmable_optimal(&at(n)).0 > 0.0)
            .collect();
        let got: Vec<bool> = grid
            .iter()
            .map(|&n| {
                let spec = programmable_spec(&at(n));
                deterministic_set(&spec)
                    .and_then(|set| optimize(&spec, &set, opt).ok())
                    .is_some_and(|r| !r.ordered_goods.is_empty())
            })
            .collect();
        for x in unexcused(grid, &expected, &got, &[]) {
            bad.push((k, x));
        }
    }
    out.push(OracleCheck::new(
        "programmability_engine",
        bad.is_empty(),
        format!(
            "k <= {}, {} NRE values each; unexcused mismatches (k, n) {bad:?}",
            o.engine_k_max,
            grid.len()
        ),
    ));
}

/// Run every oracle.
pub fn run_oracles(cfg: &OracleConfig, opt: &OptimizerConfig) -> Vec<OracleCheck> {
    let mut out = Vec::new();
    substitution_checks(&cfg.substitution, opt, &mut out);
    goop_checks(&cfg.goop, opt, &mut out);
    programmability_checks(&cfg.programmability, opt, &mut out);
    out
}
