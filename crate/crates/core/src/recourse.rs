//! Optimal mapping usage once supply (and possibly demand) is known.
//!
//! For a fixed amount built of a demanded good, the best accounting outcome
//! sells `min(built, demand)`, so the value of building `B` units is a
//! concave piecewise-linear function of `B`. Stage 3 uses that function for
//! the realized demand; stage 2 uses its probability-weighted sum over the
//! demand samples of one supply realization. Either way the problem is
//!
//! ```text
//! maximize  sum_d V_d(B_d) - gamma . U
//! s.t.      sum_j U_j M_ij <= obtained_i,   B_d = sum_{j -> d} U_j,   U >= 0
//! ```
//!
//! solved by a greedy fill when every produced good feeds one mapping, by a
//! segment LP when the value functions have few breakpoints, and by Kelley
//! cutting planes otherwise.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::lp::{solve_lp, LpProblem, LpStatus, Relation};
use crate::market::{DemandedGood, MarketSpec};

/// Secant segments used to linearize a demand curve's revenue.
pub const CURVE_SEGMENTS: usize = 16;
/// Above this many breakpoints in total, cutting planes replace the segment LP.
pub const DIRECT_LP_MAX_BREAKS: usize = 48;
const KELLEY_MAX_ITERS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecourseError {
    #[error("brute-force grid has {0} points, more than 1e6")]
    GridTooLarge(f64),
    #[error("grid step must be positive")]
    BadStep,
    #[error("demand sample list is empty")]
    NoSamples,
}

/// Concave piecewise-linear function on `[0, inf)`.
///
/// `slopes[k]` holds on `[breaks[k-1], breaks[k])`, with `breaks[-1] = 0` and
/// the last slope continuing to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavePwl {
    pub value0: f64,
    pub breaks: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl ConcavePwl {
    pub fn constant(value0: f64, slope: f64) -> Self {
        Self {
            value0,
            breaks: Vec::new(),
            slopes: vec![slope],
        }
    }

    /// Index of the segment containing `x` (right-continuous).
    fn segment(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x)
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut v = self.value0;
        let mut left = 0.0;
        for (k, &b) in self.breaks.iter().enumerate() {
            if x <= b {
                return v + self.slopes[k] * (x - left);
            }
            v += self.slopes[k] * (b - left);
            left = b;
        }
        v + self.slopes[self.slopes.len() - 1] * (x - left)
    }

    pub fn slope_right(&self, x: f64) -> f64 {
        self.slopes[self.segment(x)]
    }

    pub fn slope_left(&self, x: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b < x);
        self.slopes[k]
    }

    /// Weighted sum of concave functions, merging their breakpoints.
    pub fn weighted_sum<'a>(parts: impl IntoIterator<Item = (f64, &'a ConcavePwl)>) -> Self {
        let mut value0 = 0.0;
        let mut slope0 = 0.0;
        let mut events: Vec<(f64, f64)> = Vec::new();
        for (w, f) in parts {
            value0 += w * f.value0;
            slope0 += w * f.slopes[0];
            for (k, &b) in f.breaks.iter().enumerate() {
                events.push((b, w * (f.slopes[k + 1] - f.slopes[k])));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = Vec::new();
        let mut slopes = vec![slope0];
        let mut s = slope0;
        let mut i = 0;
        while i < events.len() {
            let x = events[i].0;
            let mut delta = 0.0;
            while i < events.len() && events[i].0 == x {
                delta += events[i].1;
                i += 1;
            }
            s += delta;
            breaks.push(x);
            slopes.push(s);
        }
        Self {
            value0,
            breaks,
            slopes,
        }
    }
}

/// Value of building `B` units of `good` when `demand` units are demanded,
/// excluding production cost.
pub fn demand_value(good: &DemandedGood, demand: f64) -> ConcavePwl {
    let h = good.salvage_value;
    let usc = good.unit_shortage_cost;
    let value0 = -usc * demand;
    if demand <= 0.0 {
        return ConcavePwl::constant(value0, h);
    }
    match good.demand_curve {
        None => ConcavePwl {
            value0,
            breaks: vec![demand],
            slopes: vec![good.unit_benefit + usc, h],
        },
        Some(c) => {
            let g = |s: f64| s * c.price(s, demand) + usc * s;
            let k = CURVE_SEGMENTS;
            let mut breaks = Vec::with_capacity(k);
            let mut slopes = Vec::with_capacity(k + 1);
            let mut prev = 0.0;
            for i in 1..=k {
                let x = demand * i as f64 / k as f64;
                slopes.push((g(x) - g(prev)) / (x - prev));
                breaks.push(x);
                prev = x;
            }
            let last = slopes[k - 1];
            slopes.push(h.min(last));
            ConcavePwl {
                value0,
                breaks,
                slopes,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MapInfo {
    inputs: Vec<(usize, f64)>,
    output: usize,
    cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Greedy,
    SegmentLp,
    Kelley,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseSolution {
    pub usage: Vec<f64>,
    /// `sum_d V_d(B_d) - gamma . U` at the returned usage.
    pub value: f64,
    pub method: Method,
}

/// Index form of the mapping structure of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseModel {
    n_prod: usize,
    n_dem: usize,
    maps: Vec<MapInfo>,
    /// Mappings per demanded good, cheapest first.
    by_demand: Vec<Vec<usize>>,
    decoupled: bool,
}

impl RecourseModel {
    /// Compile a spec; ids must resolve (run `validate` first).
    pub fn new(spec: &MarketSpec) -> Self {
        let n_prod = spec.produced.len();
        let n_dem = spec.demanded.len();
        let maps: Vec<MapInfo> = spec
            .mappings
            .iter()
            .map(|m| MapInfo {
                inputs: m
                    .inputs
                    .iter()
                    .filter(|(_, &n)| n > 0.0)
                    .map(|(g, &n)| (spec.produced_index(g).expect("validated spec"), n))
                    .collect(),
                output: spec.demanded_index(&m.output).expect("validated spec"),
                cost: m.cost_per_use,
            })
            .collect();
        let mut by_demand = vec![Vec::new(); n_dem];
        for (j, m) in maps.iter().enumerate() {
            by_demand[m.output].push(j);
        }
        for list in &mut by_demand {
            list.sort_by(|&a, &b| maps[a].cost.total_cmp(&maps[b].cost).then(a.cmp(&b)));
        }
        let mut uses = vec![0usize; n_prod];
        for m in &maps {
            for &(i, _) in &m.inputs {
                uses[i] += 1;
            }
        }
        let decoupled = maps.iter().all(|m| m.inputs.len() == 1) && uses.iter().all(|&u| u <= 1);
        Self {
            n_prod,
            n_dem,
            maps,
            by_demand,
            decoupled,
        }
    }

    pub fn num_mappings(&self) -> usize {
        self.maps.len()
    }

    pub fn is_decoupled(&self) -> bool {
        self.decoupled
    }

    pub fn built(&self, usage: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dem];
        for (m, &u) in self.maps.iter().zip(usage) {
            b[m.output] += u;
        }
        b
    }

    pub fn used(&self, usage: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_prod];
        for (m, &u) in self.maps.iter().zip(usage) {
            for &(i, n) in &m.inputs {
                c[i] += n * u;
            }
        }
        c
    }

    /// Objective at a usage vector.
    pub fn objective(&self, values: &[ConcavePwl], usage: &[f64]) -> f64 {
        let built = self.built(usage);
        let gain: f64 = values.iter().zip(&built).map(|(v, &b)| v.value(b)).sum();
        let cost: f64 = self.maps.iter().zip(usage).map(|(m, &u)| m.cost * u).sum();
        gain - cost
    }

    /// Most uses of mapping `j` the obtained goods allow on their own.
    fn cap(&self, j: usize, obtained: &[f64]) -> f64 {
        self.maps[j]
            .inputs
            .iter()
            .map(|&(i, n)| obtained[i].max(0.0) / n)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, values: &[ConcavePwl], obtained: &[f64]) -> RecourseSolution {
        if self.decoupled {
            return self.solve_greedy(values, obtained);
        }
        let breaks: usize = values.iter().map(|v| v.breaks.len()).sum();
        if breaks <= DIRECT_LP_MAX_BREAKS {
            self.solve_segment_lp(values, obtained)
        } else {
            self.solve_kelley(values, obtained)
        }
    }

    /// Exact when each produced good feeds at most one single-input mapping:
    /// each demand is filled from its cheapest mappings while the marginal
    /// value exceeds the mapping cost.
    pub fn solve_greedy(&self, values: &[ConcavePwl], obtained: &[f64]) -> RecourseSolution {
        assert!(
            self.decoupled,
            "greedy recourse needs a decoupled mapping set"
        );
        let mut usage = vec![0.0; self.maps.len()];
        for (d, list) in self.by_demand.iter().enumerate() {
            let v = &values[d];
            let mut b = 0.0;
            'maps: for &j in list {
                let mut remaining = self.cap(j, obtained);
                while remaining > 0.0 {
                    let k = v.segment(b);
                    if v.slopes[k] <= self.maps[j].cost {
                        break 'maps;
                    }
                    let (step, next) = match v.breaks.get(k) {
                        Some(&nb) if nb - b <= remaining => (nb - b, nb),
                        _ => (remaining, b + remaining),
                    };
                    usage[j] += step;
                    remaining -= step;
                    b = next;
                }
            }
        }
        let value = self.objective(values, &usage);
        RecourseSolution {
            usage,
            value,
            method: Method::Greedy,
        }
    }

    fn scale(values: &[ConcavePwl], obtained: &[f64]) -> f64 {
        let mut s: f64 = 1.0;
        for &o in obtained {
            s = s.max(o);
        }
        for v in values {
            for &b in &v.breaks {
                s = s.max(b);
            }
        }
        s
    }

    /// Segment LP in units scaled by the largest quantity involved.
    pub fn segment_lp(
        &self,
        values: &[ConcavePwl],
        obtained: &[f64],
    ) -> (LpProblem, Vec<String>, f64) {
        let sc = Self::scale(values, obtained);
        let nj = self.maps.len();
        let mut names: Vec<String> = (0..nj).map(|j| format!("u{j}")).collect();
        let mut objective: Vec<f64> = self.maps.iter().map(|m| -m.cost).collect();
        let mut seg_of: Vec<Vec<usize>> = vec![Vec::new(); self.n_dem];
        let mut upper = vec![f64::INFINITY; nj];
        for (d, v) in values.iter().enumerate() {
            let mut left = 0.0;
            for (k, &s) in v.slopes.iter().enumerate() {
                if s <= 0.0 {
                    break;
                }
                let right = v.breaks.get(k).copied().unwrap_or(f64::INFINITY);
                seg_of[d].push(objective.len());
                objective.push(s);
                upper.push((right - left) / sc);
                names.push(format!("w{d}_{k}"));
                left = right;
            }
        }
        let nv = objective.len();
        let mut p = LpProblem::new(objective);
        p.upper = upper;
        for i in 0..self.n_prod {
            let mut row = vec![0.0; nv];
            let mut any = false;
            for (j, m) in self.maps.iter().enumerate() {
                for &(g, n) in &m.inputs {
                    if g == i {
                        row[j] += n;
                        any = true;
                    }
                }
            }
            if any {
                p.add_row(row, Relation::Le, obtained[i].max(0.0) / sc);
            }
        }
        for d in 0..self.n_dem {
            if seg_of[d].is_empty() {
                continue;
            }
            let mut row = vec![0.0; nv];
            for &s in &seg_of[d] {
                row[s] = 1.0;
            }
            for &j in &self.by_demand[d] {
                row[j] = -1.0;
            }
            p.add_row(row, Relation::Le, 0.0);
        }
        (p, names, sc)
    }

    pub fn solve_segment_lp(&self, values: &[ConcavePwl], obtained: &[f64]) -> RecourseSolution {
        let (p, _, sc) = self.segment_lp(values, obtained);
        let sol = solve_lp(&p);
        let usage = if sol.status == LpStatus::Optimal {
            let nj = self.maps.len();
            let mut u: Vec<f64> = sol.x[..nj].iter().map(|&x| x.max(0.0) * sc).collect();
            // Trim building that the segments did not absorb.
            let mut filled = vec![0.0; self.n_dem];
            let mut col = nj;
            for (d, v) in values.iter().enumerate() {
                for &s in &v.slopes {
                    if s <= 0.0 {
                        break;
                    }
                    filled[d] += sol.x[col].max(0.0) * sc;
                    col += 1;
                }
            }
            let built = self.built(&u);
            for d in 0..self.n_dem {
                if built[d] > filled[d] && built[d] > 0.0 {
                    let f = filled[d] / built[d];
                    for &j in &self.by_demand[d] {
                        u[j] *= f;
                    }
                }
            }
            self.clamp_to_obtained(&mut u, obtained);
            u
        } else {
            vec![0.0; self.maps.len()]
        };
        let value = self.objective(values, &usage);
        RecourseSolution {
            usage,
            value,
            method: Method::SegmentLp,
        }
    }

    /// Kelley's cutting-plane method on the hypograph of each value function.
    pub fn solve_kelley(&self, values: &[ConcavePwl], obtained: &[f64]) -> RecourseSolution {
        let sc = Self::scale(values, obtained);
        let nj = self.maps.len();
        let nv = nj + self.n_dem;
        let mut objective: Vec<f64> = self.maps.iter().map(|m| -m.cost).collect();
        objective.extend(core::iter::repeat_n(1.0, self.n_dem));
        let mut p = LpProblem::new(objective);
        for d in 0..self.n_dem {
            p.lower[nj + d] = f64::NEG_INFINITY;
        }
        for i in 0..self.n_prod {
            let mut row = vec![0.0; nv];
            let mut any = false;
            for (j, m) in self.maps.iter().enumerate() {
                for &(g, n) in &m.inputs {
                    if g == i {
                        row[j] += n;
                        any = true;
                    }
                }
            }
            if any {
                p.add_row(row, Relation::Le, obtained[i].max(0.0) / sc);
            }
        }
        // t_d in scaled money: V_d(sc * b) - V_d(0), divided by sc.
        let scaled = |d: usize, b: f64| (values[d].value(b * sc) - values[d].value0) / sc;
        let add_cut = |p: &mut LpProblem, d: usize, b: f64, slope: f64| {
            let mut row = vec![0.0; nv];
            row[nj + d] = 1.0;
            for &j in &self.by_demand[d] {
                row[j] = -slope;
            }
            p.add_row(row, Relation::Le, scaled(d, b) - slope * b);
        };
        for d in 0..self.n_dem {
            add_cut(&mut p, d, 0.0, values[d].slope_right(0.0));
            let bmax: f64 = self.by_demand[d]
                .iter()
                .map(|&j| self.cap(j, obtained))
                .sum::<f64>()
                / sc;
            if bmax > 0.0 && bmax.is_finite() {
                add_cut(&mut p, d, bmax, values[d].slope_left(bmax * sc));
            }
        }
        let mut usage = vec![0.0; nj];
        for _ in 0..KELLEY_MAX_ITERS {
            let sol = solve_lp(&p);
            if sol.status != LpStatus::Optimal {
                break;
            }
            usage = sol.x[..nj].iter().map(|&x| x.max(0.0)).collect();
            let built = self.built(&usage);
            let mut added = false;
            for d in 0..self.n_dem {
                let t = sol.x[nj + d];
                let actual = scaled(d, built[d]);
                if t > actual + 1e-11 * (1.0 + actual.abs()) {
                    let b = built[d];
                    let sr = values[d].slope_right(b * sc);
                    let sl = values[d].slope_left(b * sc);
                    add_cut(&mut p, d, b, sr);
                    if sl != sr {
                        add_cut(&mut p, d, b, sl);
                    }
                    added = true;
                }
            }
            if !added {
                break;
            }
        }
        let mut u: Vec<f64> = usage.iter().map(|&x| x * sc).collect();
        self.clamp_to_obtained(&mut u, obtained);
        let value = self.objective(values, &u);
        RecourseSolution {
            usage: u,
            value,
            method: Method::Kelley,
        }
    }

    /// Scale usage down so no produced good is overdrawn by rounding.
    fn clamp_to_obtained(&self, usage: &mut [f64], obtained: &[f64]) {
        let used = self.used(usage);
        let mut f: f64 = 1.0;
        for i in 0..self.n_prod {
            if used[i] > obtained[i].max(0.0) && used[i] > 0.0 {
                f = f.min(obtained[i].max(0.0) / used[i]);
            }
        }
        if f < 1.0 {
            for u in usage.iter_mut() {
                *u *= f;
            }
        }
    }
}

/// Stage-3 recourse: best usage for known obtained and demanded units.
/// Returns the usage and the scenario profit excluding production cost.
pub fn optimal_usage_stage3(
    spec: &MarketSpec,
    obtained: &[f64],
    demanded: &[f64],
) -> (Vec<f64>, f64) {
    let model = RecourseModel::new(spec);
    let values: Vec<ConcavePwl> = spec
        .demanded
        .iter()
        .zip(demanded)
        .map(|(g, &d)| demand_value(g, d))
        .collect();
    let s = model.solve(&values, obtained);
    (s.usage, s.value)
}

/// Value functions of a stage-2 problem: per demanded good, the weighted
/// sum over demand samples.
pub fn stage2_values(spec: &MarketSpec, samples: &[(f64, Vec<f64>)]) -> Vec<ConcavePwl> {
    (0..spec.demanded.len())
        .map(|d| {
            let parts: Vec<ConcavePwl> = samples
                .iter()
                .map(|(_, dem)| demand_value(&spec.demanded[d], dem[d]))
                .collect();
            ConcavePwl::weighted_sum(samples.iter().map(|s| s.0).zip(parts.iter()))
        })
        .collect()
}

/// Stage-2 recourse: one usage for all weighted demand samples. Returns the
/// usage and the expected profit excluding production cost.
pub fn optimal_usage_stage2(
    spec: &MarketSpec,
    obtained: &[f64],
    samples: &[(f64, Vec<f64>)],
) -> Result<(Vec<f64>, f64), RecourseError> {
    if samples.is_empty() {
        return Err(RecourseError::NoSamples);
    }
    let model = RecourseModel::new(spec);
    let s = model.solve(&stage2_values(spec, samples), obtained);
    Ok((s.usage, s.value))
}

/// Stage-2 recourse written out with one sold variable per good and sample,
/// as a single LP. Linear demand only; used to cross-check the solvers.
pub fn stage2_reference_lp(
    spec: &MarketSpec,
    obtained: &[f64],
    samples: &[(f64, Vec<f64>)],
) -> Result<(Vec<f64>, f64), RecourseError> {
    if samples.is_empty() {
        return Err(RecourseError::NoSamples);
    }
    let model = RecourseModel::new(spec);
    let nj = model.maps.len();
    let nd = spec.demanded.len();
    let nk = samples.len();
    let total_w: f64 = samples.iter().map(|s| s.0).sum();
    let sc = samples
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .chain(obtained.iter().copied())
        .fold(1.0, f64::max);
    let nv = nj + nd * nk;
    let mut obj = vec![0.0; nv];
    let mut constant = 0.0;
    for (j, m) in model.maps.iter().enumerate() {
        obj[j] = -m.cost + spec.demanded[m.output].salvage_value * total_w;
    }
    for (k, (w, dem)) in samples.iter().enumerate() {
        for d in 0..nd {
            let g = &spec.demanded[d];
            obj[nj + k * nd + d] = w * (g.unit_benefit + g.unit_shortage_cost - g.salvage_value);
            constant -= w * g.unit_shortage_cost * dem[d];
        }
    }
    let mut p = LpProblem::new(obj);
    for (k, (_, dem)) in samples.iter().enumerate() {
        for d in 0..nd {
            p.upper[nj + k * nd + d] = dem[d].max(0.0) / sc;
        }
    }
    for i in 0..spec.produced.len() {
        let mut row = vec![0.0; nv];
        for (j, m) in model.maps.iter().enumerate() {
            for &(g, n) in &m.inputs {
                if g == i {
                    row[j] += n;
                }
            }
        }
        p.add_row(row, Relation::Le, obtained[i].max(0.0) / sc);
    }
    for k in 0..nk {
        for d in 0..nd {
            let mut row = vec![0.0; nv];
            row[nj + k * nd + d] = 1.0;
            for &j in &model.by_demand[d] {
                row[j] = -1.0;
            }
            p.add_row(row, Relation::Le, 0.0);
        }
    }
    let sol = solve_lp(&p);
    let usage: Vec<f64> = sol.x[..nj].iter().map(|&x| x.max(0.0) * sc).collect();
    Ok((usage, sol.objective * sc / total_w + constant / total_w))
}

/// Exhaustive search over usage on a grid of `step`. Test oracle.
pub fn brute_force_usage(
    spec: &MarketSpec,
    obtained: &[f64],
    demanded: &[f64],
    step: f64,
) -> Result<(Vec<f64>, f64), RecourseError> {
    if !(step > 0.0) {
        return Err(RecourseError::BadStep);
    }
    let model = RecourseModel::new(spec);
    let counts: Vec<usize> = (0..model.maps.len())
        .map(|j| {
            let c = model.cap(j, obtained);
            if c.is_finite() {
                crate::math::floor(c / step + 1e-9) as usize + 1
            } else {
                1
            }
        })
        .collect();
    let points: f64 = counts.iter().map(|&c| c as f64).product();
    if points > 1e6 {
        return Err(RecourseError::GridTooLarge(points));
    }
    let values: Vec<ConcavePwl> = spec
        .demanded
        .iter()
        .zip(demanded)
        .map(|(g, &d)| demand_value(g, d))
        .collect();
    let nj = counts.len();
    let mut idx = vec![0usize; nj];
    let mut best = (vec![0.0; nj], f64::NEG_INFINITY);
    loop {
        let u: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
        let used = model.used(&u);
        if used
            .iter()
            .zip(obtained)
            .all(|(a, b)| *a <= b + 1e-9 * (1.0 + b.abs()))
        {
            let v = model.objective(&values, &u);
            if v > best.1 {
                best = (u, v);
            }
        }
        let mut k = 0;
        loop {
            if k == nj {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Mapping, ProducedGood};

    fn good(id: &str, ben: f64) -> DemandedGood {
        DemandedGood {
            id: id.into(),
            base_demand: 1.0,
            unit_benefit: ben,
            unit_shortage_cost: ben,
            salvage_value: 0.0,
            demand_curve: None,
        }
    }

    fn produced(id: &str) -> ProducedGood {
        ProducedGood {
            id: id.into(),
            unit_cost: 1.0,
            nre: 0.0,
            yield_rate: 1.0,
            supplier_id: "s".into(),
        }
    }

    fn adapt_spec() -> MarketSpec {
        MarketSpec {
            produced: vec![produced("16c")],
            demanded: vec![good("16c", 2.0), good("8c", 2.0)],
            mappings: vec![
                Mapping::identity("16c"),
                Mapping::new("16c->8c", &[("16c", 1.0)], "8c", 0.0),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn pwl_value_and_sum() {
        let a = ConcavePwl {
            value0: -2.0,
            breaks: vec![1.0],
            slopes: vec![4.0, 0.5],
        };
        assert_eq!(a.value(0.5), 0.0);
        assert_eq!(a.value(3.0), 3.0);
        assert_eq!(a.slope_right(1.0), 0.5);
        assert_eq!(a.slope_left(1.0), 4.0);
        let b = ConcavePwl {
            value0: 0.0,
            breaks: vec![2.0],
            slopes: vec![1.0, 0.0],
        };
        let s = ConcavePwl::weighted_sum([(0.5, &a), (0.5, &b)]);
        for x in [0.0, 0.3, 1.0, 1.7, 2.0, 5.0] {
            assert!((s.value(x) - 0.5 * (a.value(x) + b.value(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptation_example() {
        let (u, v) = optimal_usage_stage3(&adapt_spec(), &[2.0], &[1.0, 2.0]);
        assert!(
            (u[0] - 1.0).abs() < 1e-9 && (u[1] - 1.0).abs() < 1e-9,
            "{u:?}"
        );
        // Two sold at 2 each, one 8-core unit short at 2.
        assert!((v - (4.0 - 2.0)).abs() < 1e-9);
        let (bu, bv) = brute_force_usage(&adapt_spec(), &[2.0], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(bv, v);
        assert_eq!(bu.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn no_mappings_is_pure_shortage() {
        let mut spec = adapt_spec();
        spec.mappings.clear();
        let (u, v) = optimal_usage_stage3(&spec, &[5.0], &[1.0, 2.0]);
        assert!(u.is_empty());
        assert_eq!(v, -6.0);
    }

    #[test]
    fn zero_obtained_zero_usage() {
        let (u, _) = optimal_usage_stage3(&adapt_spec(), &[0.0], &[1.0, 2.0]);
        assert_eq!(u, vec![0.0, 0.0]);
        let (bu, _) = brute_force_usage(&adapt_spec(), &[0.0], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(bu, vec![0.0, 0.0]);
    }

    #[test]
    fn stage2_two_samples_grid() {
        let b = 10.0;
        let spec = MarketSpec {
            produced: vec![produced("a")],
            demanded: vec![good("a", 1.0)],
            mappings: vec![Mapping::identity("a")],
            ..Default::default()
        };
        let samples = vec![(0.5, vec![0.0]), (0.5, vec![2.0 * b])];
        let (u, v) = optimal_usage_stage2(&spec, &[4.0 * b], &samples).unwrap();
        let grid = |built: f64| {
            samples
                .iter()
                .map(|(w, d)| w * demand_value(&spec.demanded[0], d[0]).value(built))
                .sum::<f64>()
        };
        let best = [0.0, b, 2.0 * b]
            .into_iter()
            .map(grid)
            .fold(f64::MIN, f64::max);
        assert!((v - best).abs() < 1e-9);
        assert!((u[0] - 2.0 * b).abs() < 1e-9);
        let (_, r) = stage2_reference_lp(&spec, &[4.0 * b], &samples).unwrap();
        assert!((r - v).abs() < 1e-9);
    }

    #[test]
    fn solvers_agree_on_shared_inputs() {
        let spec = MarketSpec {
            produced: vec![produced("x"), produced("y")],
            demanded: vec![good("p", 3.0), good("q", 2.0)],
            mappings: vec![
                Mapping::new("x->p", &[("x", 1.0)], "p", 0.1),
                Mapping::new("x+y->p", &[("x", 1.0), ("y", 2.0)], "p", 0.0),
                Mapping::new("y->q", &[("y", 1.0)], "q", 0.2),
                Mapping::new("x->q", &[("x", 1.0)], "q", 0.0),
            ],
            ..Default::default()
        };
        let model = RecourseModel::new(&spec);
        assert!(!model.is_decoupled());
        let samples: Vec<(f64, Vec<f64>)> = (0..60)
            .map(|k| {
                (
                    1.0 + (k % 3) as f64,
                    vec![(k * 7 % 13) as f64, (k * 5 % 11) as f64],
                )
            })
            .collect();
        let w: f64 = samples.iter().map(|s| s.0).sum();
        let norm: Vec<(f64, Vec<f64>)> = samples.iter().map(|(a, b)| (a / w, b.clone())).collect();
        let values = stage2_values(&spec, &norm);
        let obtained = [9.0, 8.0];
        let a = model.solve_segment_lp(&values, &obtained);
        let b = model.solve_kelley(&values, &obtained);
        let (_, r) = stage2_reference_lp(&spec, &obtained, &norm).unwrap();
        assert!((a.value - b.value).abs() < 1e-8, "{} {}", a.value, b.value);
        assert!((a.value - r).abs() < 1e-8, "{} {}", a.value, r);
    }

    #[test]
    fn greedy_matches_lp_when_decoupled() {
        let spec = MarketSpec {
            produced: vec![produced("a"), produced("b"), produced("c")],
            demanded: vec![good("p", 3.0), good("q", 1.0)],
            mappings: vec![
                Mapping::new("a->p", &[("a", 2.0)], "p", 0.5),
                Mapping::new("b->p", &[("b", 1.0)], "p", 0.1),
                Mapping::new("c->q", &[("c", 1.0)], "q", 2.5),
            ],
            ..Default::default()
        };
        let model = RecourseModel::new(&spec);
        assert!(model.is_decoupled());
        for dem in [[0.0, 0.0], [3.0, 1.0], [10.0, 4.0], [2.5, 7.0]] {
            let values: Vec<_> = spec
                .demanded
                .iter()
                .zip(dem)
                .map(|(g, d)| demand_value(g, d))
                .collect();
            let obtained = [5.0, 1.5, 3.0];
            let g = model.solve_greedy(&values, &obtained);
            let l = model.solve_segment_lp(&values, &obtained);
            assert!(
                (g.value - l.value).abs() < 1e-9,
                "{dem:?}: {} {}",
                g.value,
                l.value
            );
        }
    }
}
