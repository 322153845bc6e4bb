//! Random small markets shared by the integration tests.
#![allow(dead_code)]

use chainforge_core::engine::evaluate_scenario;
use chainforge_core::recourse::{demand_value, ConcavePwl, RecourseModel};
use chainforge_core::uncertainty::Scenario;
use chainforge_core::{
    sample, DemandCurve, DemandedGood, Distribution, Mapping, MarketSpec, Model, ProducedGood,
    Strategy,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_produced: usize,
    pub max_demanded: usize,
    pub max_mappings: usize,
    /// Integer costs, demands and input counts.
    pub integer: bool,
    /// Only single-input, unit-count mappings.
    pub unit_mappings: bool,
    pub curves: bool,
    pub sigma: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_produced: 3,
            max_demanded: 3,
            max_mappings: 4,
            integer: false,
            unit_mappings: false,
            curves: false,
            sigma: 0.3,
        }
    }
}

fn draw(rng: &mut impl RngCore, lo: f64, hi: f64, integer: bool) -> f64 {
    if integer {
        rng.random_range(lo as i64..=hi as i64) as f64
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn random_spec(rng: &mut impl RngCore, shape: Shape) -> MarketSpec {
    let int = shape.integer;
    let np = rng.random_range(1..=shape.max_produced);
    let nd = rng.random_range(1..=shape.max_demanded);
    let produced: Vec<ProducedGood> = (0..np)
        .map(|i| ProducedGood {
            id: format!("p{i}"),
            unit_cost: draw(rng, 0.0, 5.0, int),
            nre: if rng.random_bool(0.5) {
                0.0
            } else {
                draw(rng, 0.0, 20.0, int)
            },
            yield_rate: if int {
                1.0
            } else {
                rng.random_range(0.5..=1.0)
            },
            supplier_id: format!("s{}", rng.random_range(0..2)),
        })
        .collect();
    let demanded: Vec<DemandedGood> = (0..nd)
        .map(|d| {
            let unit_benefit = draw(rng, 1.0, 20.0, int);
            let salvage_value = if rng.random_bool(0.3) {
                (unit_benefit * 0.5).floor().max(0.0)
            } else {
                0.0
            };
            let base_demand = draw(rng, 1.0, 20.0, int);
            DemandedGood {
                id: format!("d{d}"),
                base_demand,
                unit_benefit,
                unit_shortage_cost: draw(rng, 0.0, 10.0, int),
                salvage_value,
                demand_curve: (shape.curves && rng.random_bool(0.3))
                    .then(|| DemandCurve::calibrated(unit_benefit, base_demand)),
            }
        })
        .collect();
    let nm = rng.random_range(1..=shape.max_mappings);
    let mut mappings = Vec::new();
    for j in 0..nm {
        let out = rng.random_range(0..nd);
        let first = rng.random_range(0..np);
        let mut inputs = vec![(format!("p{first}"), 1.0)];
        if !shape.unit_mappings {
            inputs[0].1 = rng.random_range(1..=3) as f64;
            if np > 1 && rng.random_bool(0.4) {
                let second = (first + 1 + rng.random_range(0..np - 1)) % np;
                inputs.push((format!("p{second}"), rng.random_range(1..=3) as f64));
            }
        }
        let refs: Vec<(&str, f64)> = inputs.iter().map(|(g, n)| (g.as_str(), *n)).collect();
        mappings.push(Mapping::new(
            format!("m{j}"),
            &refs,
            &format!("d{out}"),
            draw(rng, 0.0, 2.0, int),
        ));
    }
    // Salvage stays below the cheapest way to build each good, otherwise
    // orders would be unbounded.
    let mut demanded = demanded;
    for d in &mut demanded {
        let cheapest = mappings
            .iter()
            .filter(|m| m.output == d.id)
            .map(|m| {
                m.cost_per_use
                    + m.inputs
                        .iter()
                        .map(|(g, n)| {
                            let p = produced.iter().find(|p| &p.id == g).unwrap();
                            n * p.unit_cost / p.yield_rate
                        })
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        if d.salvage_value >= cheapest {
            d.salvage_value = 0.9 * cheapest;
        }
    }
    let mut spec = MarketSpec {
        produced,
        demanded,
        mappings,
        ..Default::default()
    };
    if shape.sigma > 0.0 {
        for g in &spec.produced {
            spec.uncertainty
                .supply
                .insert(g.supplier_id.clone(), Distribution::normal(shape.sigma));
        }
        for d in &spec.demanded {
            spec.uncertainty
                .demand
                .insert(d.id.clone(), Distribution::normal(shape.sigma));
        }
    }
    spec.ensure_valid().expect("generated spec is valid")
}

/// Profit terms recomputed straight from the spec.
pub struct Terms {
    pub ben: f64,
    pub salv: f64,
    pub prod: f64,
    pub map: f64,
    pub short: f64,
}

pub fn profit_terms(
    spec: &MarketSpec,
    supply_axes: &[String],
    demand_axes: &[String],
    q: &[f64],
    usage: &[f64],
    s: &Scenario,
) -> Terms {
    let supply_of = |g: usize| {
        supply_axes
            .iter()
            .position(|a| *a == spec.produced[g].supplier_id)
            .map_or(1.0, |k| s.supply[k])
    };
    let mut prod = 0.0;
    for (i, g) in spec.produced.iter().enumerate() {
        prod += q[i] * supply_of(i) * g.unit_cost;
        if q[i] > 0.0 {
            prod += g.nre;
        }
    }
    let mut built = vec![0.0; spec.demanded.len()];
    let mut map = 0.0;
    for (m, &u) in spec.mappings.iter().zip(usage) {
        let d = spec.demanded.iter().position(|d| d.id == m.output).unwrap();
        built[d] += u;
        map += u * m.cost_per_use;
    }
    let (mut ben, mut salv, mut short) = (0.0, 0.0, 0.0);
    for (d, g) in spec.demanded.iter().enumerate() {
        let mult = demand_axes
            .iter()
            .position(|a| *a == g.id)
            .map_or(1.0, |k| s.demand[k]);
        let demand = g.base_demand * mult;
        let sold = demand.min(built[d]);
        let price = g.demand_curve.map_or(g.unit_benefit, |c| {
            c.elasticity * (sold - demand) + c.base_price
        });
        ben += price * sold;
        short += g.unit_shortage_cost * (demand - sold);
        salv += g.salvage_value * (built[d] - sold);
    }
    Terms {
        ben,
        salv,
        prod,
        map,
        short,
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Random feasible usage: each mapping gets a random share of what its
/// inputs have left.
pub fn random_usage(spec: &MarketSpec, obtained: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut left = obtained.to_vec();
    spec.mappings
        .iter()
        .map(|m| {
            let cap = m
                .inputs
                .iter()
                .map(|(g, &n)| left[spec.produced.iter().position(|p| &p.id == g).unwrap()] / n)
                .fold(f64::INFINITY, f64::min);
            let u = cap.max(0.0) * rng.random_range(0.0..=1.0);
            for (g, &n) in &m.inputs {
                let i = spec.produced.iter().position(|p| &p.id == g).unwrap();
                left[i] = (left[i] - u * n).max(0.0);
            }
            u
        })
        .collect()
}

/// Recourse value excluding production cost: benefit plus salvage minus
/// shortage and mapping cost, for linear demand.
pub fn recourse_value(spec: &MarketSpec, usage: &[f64], demanded: &[f64]) -> f64 {
    let mut built = vec![0.0; spec.demanded.len()];
    let mut value = 0.0;
    for (m, &u) in spec.mappings.iter().zip(usage) {
        let d = spec.demanded.iter().position(|d| d.id == m.output).unwrap();
        built[d] += u;
        value -= u * m.cost_per_use;
    }
    for (d, g) in spec.demanded.iter().enumerate() {
        let sold = demanded[d].min(built[d]);
        value += g.unit_benefit * sold - g.unit_shortage_cost * (demanded[d] - sold)
            + g.salvage_value * (built[d] - sold);
    }
    value
}

/// Uses of each produced good by `usage`.
pub fn consumption(spec: &MarketSpec, usage: &[f64]) -> Vec<f64> {
    let mut used = vec![0.0; spec.produced.len()];
    for (m, &u) in spec.mappings.iter().zip(usage) {
        for (g, &n) in &m.inputs {
            used[spec.produced.iter().position(|p| &p.id == g).unwrap()] += n * u;
        }
    }
    used
}

/// Best integer usage by exhaustive enumeration, with each mapping bounded
/// by what is left after the mappings before it.
pub fn brute_force_recourse(
    spec: &MarketSpec,
    obtained: &[f64],
    demanded: &[f64],
) -> (Vec<f64>, f64) {
    fn go(
        spec: &MarketSpec,
        j: usize,
        left: &mut Vec<f64>,
        usage: &mut Vec<f64>,
        demanded: &[f64],
        best: &mut (Vec<f64>, f64),
    ) {
        if j == spec.mappings.len() {
            let v = recourse_value(spec, usage, demanded);
            if v > best.1 {
                *best = (usage.clone(), v);
            }
            return;
        }
        let idx: Vec<(usize, f64)> = spec.mappings[j]
            .inputs
            .iter()
            .map(|(g, &n)| (spec.produced.iter().position(|p| &p.id == g).unwrap(), n))
            .collect();
        let cap = idx
            .iter()
            .map(|&(i, n)| (left[i] / n + 1e-9).floor())
            .fold(f64::INFINITY, f64::min) as usize;
        for u in 0..=cap {
            for &(i, n) in &idx {
                left[i] -= n * u as f64;
            }
            usage[j] = u as f64;
            go(spec, j + 1, left, usage, demanded, best);
            for &(i, n) in &idx {
                left[i] += n * u as f64;
            }
        }
        usage[j] = 0.0;
    }
    let mut best = (vec![0.0; spec.mappings.len()], f64::NEG_INFINITY);
    let mut left = obtained.to_vec();
    let mut usage = vec![0.0; spec.mappings.len()];
    go(spec, 0, &mut left, &mut usage, demanded, &mut best);
    best
}

/// Expected profit of orders `q` when mapping usage is fixed in advance at
/// the usage that is optimal for mean supply and demand. In scenarios where
/// that usage needs more than was obtained it is scaled down to fit.
pub fn fixed_usage_profit(spec: &MarketSpec, set: &chainforge_core::ScenarioSet, q: &[f64]) -> f64 {
    use chainforge_core::recourse::optimal_usage_stage3;
    let model = Model::new(spec.clone()).unwrap();
    let mean_obtained: Vec<f64> = spec
        .produced
        .iter()
        .zip(q)
        .map(|(g, q)| q * g.yield_rate)
        .collect();
    let mean_demand: Vec<f64> = spec.demanded.iter().map(|d| d.base_demand).collect();
    let (fixed, _) = optimal_usage_stage3(spec, &mean_obtained, &mean_demand);
    let used = consumption(spec, &fixed);
    set.scenarios
        .iter()
        .map(|s| {
            let obtained = model.obtained(q, s);
            let f = used
                .iter()
                .zip(&obtained)
                .filter(|(u, _)| **u > 0.0)
                .map(|(u, o)| o / u)
                .fold(1.0, f64::min);
            let usage: Vec<f64> = fixed.iter().map(|u| u * f).collect();
            s.weight * evaluate_scenario(&model, q, &usage, s).unwrap().profit
        })
        .sum()
}

/// Compare engine profit terms with `profit_terms` on random triples.
pub fn accounting_mismatch(seed: u64, triples: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape {
        curves: true,
        ..Shape::default()
    };
    let spec = random_spec(&mut rng, shape);
    let set = sample(&spec.uncertainty, Strategy::MonteCarlo { n: 1 }, seed).unwrap();
    let model = Model::new(spec.clone()).unwrap();
    for _ in 0..triples {
        let mut s = set.scenarios[0].clone();
        for m in s.supply.iter_mut().chain(s.demand.iter_mut()) {
            *m = if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..2.0)
            };
        }
        let q: Vec<f64> = spec
            .produced
            .iter()
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..40.0)
                }
            })
            .collect();
        let obtained = model.obtained(&q, &s);
        let usage = random_usage(&spec, &obtained, &mut rng);
        let b = evaluate_scenario(&model, &q, &usage, &s).map_err(|e| e.to_string())?;
        let t = profit_terms(&spec, &set.supply_axes, &set.demand_axes, &q, &usage, &s);
        let pairs = [
            ("tc_ben", b.tc_ben, t.ben),
            ("tc_salv", b.tc_salv, t.salv),
            ("tc_prod", b.tc_prod, t.prod),
            ("tc_map", b.tc_map, t.map),
            ("tc_short", b.tc_short, t.short),
            (
                "profit",
                b.profit,
                t.ben + t.salv - t.prod - t.map - t.short,
            ),
        ];
        for (name, got, want) in pairs {
            if !close(got, want) {
                return Err(format!("{name}: engine {got} oracle {want} (seed {seed})"));
            }
        }
    }
    Ok(())
}

pub fn integer_instance(seed: u64, unit_mappings: bool) -> (MarketSpec, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape {
        integer: true,
        unit_mappings,
        sigma: 0.0,
        ..Shape::default()
    };
    let spec = random_spec(&mut rng, shape);
    let obtained = spec
        .produced
        .iter()
        .map(|_| rng.random_range(0..=20) as f64)
        .collect();
    let demanded = spec.demanded.iter().map(|d| d.base_demand).collect();
    (spec, obtained, demanded)
}

pub fn demand_values(spec: &MarketSpec, demanded: &[f64]) -> Vec<ConcavePwl> {
    spec.demanded
        .iter()
        .zip(demanded)
        .map(|(g, &d)| demand_value(g, d))
        .collect()
}

pub fn feasible(spec: &MarketSpec, usage: &[f64], obtained: &[f64]) -> bool {
    usage.iter().all(|&u| u >= -1e-9)
        && consumption(spec, usage)
            .iter()
            .zip(obtained)
            .all(|(u, o)| *u <= o + 1e-6 * (1.0 + o))
}

/// LP recourse against the integer optimum on one random instance.
pub fn lp_oracle_mismatch(seed: u64, unit_mappings: bool) -> Result<(), String> {
    let (spec, obtained, demanded) = integer_instance(seed, unit_mappings);
    let model = RecourseModel::new(&spec);
    let v = demand_values(&spec, &demanded);
    let (_, bf) = brute_force_recourse(&spec, &obtained, &demanded);
    let tol = 1e-6 * bf.abs().max(1.0);
    let mut solutions = vec![("segment_lp", model.solve_segment_lp(&v, &obtained))];
    solutions.push(("kelley", model.solve_kelley(&v, &obtained)));
    if model.is_decoupled() {
        solutions.push(("greedy", model.solve_greedy(&v, &obtained)));
    }
    for (name, sol) in solutions {
        if !feasible(&spec, &sol.usage, &obtained) {
            return Err(format!(
                "{name}: infeasible usage {:?} (seed {seed})",
                sol.usage
            ));
        }
        let recomputed = recourse_value(&spec, &sol.usage, &demanded);
        if (recomputed - sol.value).abs() > tol {
            return Err(format!(
                "{name}: reported {} recomputed {recomputed}",
                sol.value
            ));
        }
        if sol.value < bf - tol {
            return Err(format!(
                "{name}: {} below integer optimum {bf} (seed {seed})",
                sol.value
            ));
        }
        if unit_mappings && (sol.value - bf).abs() > tol {
            return Err(format!(
                "{name}: {} differs from integer optimum {bf} (seed {seed})",
                sol.value
            ));
        }
    }
    Ok(())
}

/// Expected profit of orders `q` with stage-3 recourse, stage-2 recourse and
/// fixed usage, on the same scenarios.
pub fn stage_values(
    spec: &MarketSpec,
    set: &chainforge_core::ScenarioSet,
    q: &[f64],
) -> (f64, f64, f64) {
    use chainforge_core::engine::Prepared;
    use chainforge_core::RecourseStage;
    let model = Model::new(spec.clone()).unwrap();
    let e3 = Prepared::with_stage(&model, set, RecourseStage::MappingAfterSupplyAndDemand)
        .unwrap()
        .objective(q);
    let e2 = Prepared::with_stage(&model, set, RecourseStage::MappingAfterSupply)
        .unwrap()
        .objective(q);
    (e3, e2, fixed_usage_profit(spec, set, q))
}
