//! Supply and demand multiplier distributions and scenario sampling.
//!
//! A scenario set is the product of a supply block and a demand block, in
//! lexicographic (supply point, demand point) order. Every scenario remembers
//! which supply point it came from so that stage-2 recourse can share one
//! mapping decision across all demand outcomes of a supply realization.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{cholesky_psd, normal_cdf, normal_pdf, normal_quantile};

/// Name of the generator recorded in scenario metadata.
pub const RNG_NAME: &str =
    "ChaCha8Rng (rand_chacha 0.9), seed_from_u64, stream 0 = supply, 1 = demand";

/// Largest number of scenarios any strategy may produce.
pub const MAX_SCENARIOS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid distribution for {axis}: {reason}")]
    InvalidDistribution { axis: String, reason: String },
    #[error("exhaustive sampling needs finite support, but {axis} is continuous")]
    ContinuousSupport { axis: String },
    #[error("demand correlation matrix is invalid: {0}")]
    InvalidCorrelation(String),
    #[error("strategy {0} does not support correlated demand")]
    CorrelationUnsupported(&'static str),
    #[error("sample count must be positive")]
    EmptySample,
    #[error("strategy would produce {0} scenarios, more than the limit")]
    TooManyScenarios(usize),
    #[error("unknown axis {0}")]
    UnknownAxis(String),
}

/// Distribution of a multiplicative factor on base supply or demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Deterministic {
        value: f64,
    },
    /// Mean one, standard deviation `std`, negative draws clamped to zero.
    Normal {
        std: f64,
    },
    /// Zero with probability `prob`, one otherwise.
    Shock {
        prob: f64,
    },
    Scaled {
        inner: Box<Distribution>,
        factor: f64,
    },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Deterministic { value: 1.0 }
    }
}

impl Distribution {
    pub fn normal(std: f64) -> Self {
        Distribution::Normal { std }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Distribution::Deterministic { value } if !(value.is_finite() && *value >= 0.0) => Err(
                format!("deterministic value {value} must be finite and >= 0"),
            ),
            Distribution::Normal { std } if !(std.is_finite() && *std >= 0.0) => {
                Err(format!("std {std} must be finite and >= 0"))
            }
            Distribution::Shock { prob } if !(0.0..=1.0).contains(prob) => {
                Err(format!("shock probability {prob} must lie in [0, 1]"))
            }
            Distribution::Scaled { factor, .. } if !(factor.is_finite() && *factor >= 0.0) => {
                Err(format!("scale factor {factor} must be finite and >= 0"))
            }
            Distribution::Scaled { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    /// True when the multiplier takes a single value with probability one.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Distribution::Deterministic { .. } => true,
            Distribution::Normal { std } => *std == 0.0,
            Distribution::Shock { prob } => *prob == 0.0 || *prob == 1.0,
            Distribution::Scaled { inner, factor } => *factor == 0.0 || inner.is_deterministic(),
        }
    }

    /// Inverse distribution function.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Normal { std } => {
                if *std == 0.0 {
                    1.0
                } else {
                    (1.0 + std * normal_quantile(u)).max(0.0)
                }
            }
            Distribution::Shock { prob } => {
                if u < *prob {
                    0.0
                } else {
                    1.0
                }
            }
            Distribution::Scaled { inner, factor } => factor * inner.quantile(u),
        }
    }

    /// Conditional mean over the probability cell `[lo, hi)`.
    pub fn cell_centroid(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Normal { std } => {
                if *std == 0.0 {
                    return 1.0;
                }
                let a = normal_quantile(lo).max(-1.0 / std);
                let b = normal_quantile(hi);
                if b <= a {
                    return 0.0;
                }
                let (pa, pb) = (pdf_or_zero(a), pdf_or_zero(b));
                let mass = normal_cdf(b) - normal_cdf(a);
                ((mass + std * (pa - pb)) / (hi - lo)).max(0.0)
            }
            Distribution::Shock { prob } => {
                let cut = prob.clamp(lo, hi);
                (hi - cut) / (hi - lo)
            }
            Distribution::Scaled { inner, factor } => factor * inner.cell_centroid(lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        self.moments().1
    }

    /// Exact mean and variance, including the clamp at zero.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Distribution::Deterministic { value } => (*value, 0.0),
            Distribution::Normal { std } => {
                if *std == 0.0 {
                    return (1.0, 0.0);
                }
                let z0 = -1.0 / std;
                let tail = 1.0 - normal_cdf(z0);
                let dens = normal_pdf(z0);
                let m1 = tail + std * dens;
                let m2 = tail + 2.0 * std * dens + std * std * (z0 * dens + tail);
                (m1, (m2 - m1 * m1).max(0.0))
            }
            Distribution::Shock { prob } => (1.0 - prob, prob * (1.0 - prob)),
            Distribution::Scaled { inner, factor } => {
                let (m, v) = inner.moments();
                (factor * m, factor * factor * v)
            }
        }
    }

    /// Finite support as `(value, probability)` pairs with positive mass, or
    /// `None` for a continuous distribution.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Distribution::Deterministic { value } => Some(vec![(*value, 1.0)]),
            Distribution::Normal { std } if *std == 0.0 => Some(vec![(1.0, 1.0)]),
            Distribution::Normal { .. } => None,
            Distribution::Shock { prob } => Some(
                [(0.0, *prob), (1.0, 1.0 - prob)]
                    .into_iter()
                    .filter(|&(_, p)| p > 0.0)
                    .collect(),
            ),
            Distribution::Scaled { inner, factor } => inner
                .support()
                .map(|s| s.into_iter().map(|(v, p)| (factor * v, p)).collect()),
        }
    }
}

fn pdf_or_zero(z: f64) -> f64 {
    if z.is_finite() {
        normal_pdf(z)
    } else {
        0.0
    }
}

/// Pearson correlation between the demand multipliers of the listed goods,
/// imposed through a Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    pub goods: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl Correlation {
    /// Two goods with correlation `rho`.
    pub fn pair(a: &str, b: &str, rho: f64) -> Self {
        Self {
            goods: vec![a.to_string(), b.to_string()],
            matrix: vec![vec![1.0, rho], vec![rho, 1.0]],
        }
    }

    fn cholesky(&self) -> Result<Vec<f64>, SampleError> {
        let n = self.goods.len();
        let bad = |m: String| Err(SampleError::InvalidCorrelation(m));
        if self.matrix.len() != n || self.matrix.iter().any(|r| r.len() != n) {
            return bad(format!("matrix must be {n}x{n}"));
        }
        for i in 0..n {
            if (self.matrix[i][i] - 1.0).abs() > 1e-12 {
                return bad(format!("diagonal entry {i} is not 1"));
            }
            for j in 0..n {
                let v = self.matrix[i][j];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return bad(format!("entry ({i},{j}) = {v} is outside [-1, 1]"));
                }
                if (v - self.matrix[j][i]).abs() > 1e-12 {
                    return bad(format!("entries ({i},{j}) and ({j},{i}) differ"));
                }
            }
        }
        cholesky_psd(&self.matrix, 1e-10)
            .map_or_else(|| bad("matrix is not positive semidefinite".into()), Ok)
    }
}

/// Distributions of every uncertain quantity.
///
/// Supply multipliers are keyed by supplier: every good from one supplier
/// sees the same draw. Demand multipliers are keyed by demanded good and are
/// independent unless a correlation is given. Keys that are absent mean a
/// multiplier of exactly one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    #[serde(default)]
    pub supply: BTreeMap<String, Distribution>,
    #[serde(default)]
    pub demand: BTreeMap<String, Distribution>,
    #[serde(default)]
    pub demand_correlation: Option<Correlation>,
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        for (axis, d) in self.supply.iter().chain(self.demand.iter()) {
            d.validate()
                .map_err(|reason| SampleError::InvalidDistribution {
                    axis: axis.clone(),
                    reason,
                })?;
        }
        if let Some(corr) = &self.demand_correlation {
            for g in &corr.goods {
                if !self.demand.contains_key(g) {
                    return Err(SampleError::InvalidCorrelation(format!(
                        "{g} has no demand distribution"
                    )));
                }
            }
            let mut sorted = corr.goods.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != corr.goods.len() {
                return Err(SampleError::InvalidCorrelation("duplicate goods".into()));
            }
            corr.cholesky()?;
        }
        Ok(())
    }

    /// Drop all randomness: every distribution is replaced by its mean.
    pub fn at_mean(&self) -> Self {
        let det = |m: &BTreeMap<String, Distribution>| {
            m.iter()
                .map(|(k, d)| (k.clone(), Distribution::Deterministic { value: d.mean() }))
                .collect()
        };
        Self {
            supply: det(&self.supply),
            demand: det(&self.demand),
            demand_correlation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// `n` independent draws per random block.
    MonteCarlo { n: usize },
    /// `n` equal-probability cells per random axis, full product, centroids.
    StratifiedEquiProbable { n: usize },
    /// `n` points per random block, one per cell on every axis, randomly
    /// paired across axes.
    LatinHypercube { n: usize },
    /// Full joint support of finite distributions with exact probabilities.
    Exhaustive,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::MonteCarlo { .. } => "monte_carlo",
            Strategy::StratifiedEquiProbable { .. } => "stratified_equi_probable",
            Strategy::LatinHypercube { .. } => "latin_hypercube",
            Strategy::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// One multiplier per supply axis of the owning set.
    pub supply: Vec<f64>,
    /// One multiplier per demand axis of the owning set.
    pub demand: Vec<f64>,
    pub weight: f64,
    /// Index of the supply point this scenario belongs to.
    pub supply_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub supply_axes: Vec<String>,
    pub demand_axes: Vec<String>,
    pub scenarios: Vec<Scenario>,
    pub supply_points: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub rng: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis<'a> {
    Supply(&'a str),
    Demand(&'a str),
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Scenario indices grouped by supply point, in order.
    pub fn supply_groups(&self) -> Vec<core::ops::Range<usize>> {
        let mut groups = Vec::with_capacity(self.supply_points);
        let mut start = 0;
        for i in 1..=self.scenarios.len() {
            if i == self.scenarios.len()
                || self.scenarios[i].supply_index != self.scenarios[start].supply_index
            {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    /// Values of one axis across scenarios.
    pub fn axis_values(&self, axis: Axis<'_>) -> Result<Vec<f64>, SampleError> {
        let (names, pick): (&[String], fn(&Scenario, usize) -> f64) = match axis {
            Axis::Supply(_) => (&self.supply_axes, |s, i| s.supply[i]),
            Axis::Demand(_) => (&self.demand_axes, |s, i| s.demand[i]),
        };
        let id = match axis {
            Axis::Supply(id) | Axis::Demand(id) => id,
        };
        let k = names
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| SampleError::UnknownAxis(id.to_string()))?;
        Ok(self.scenarios.iter().map(|s| pick(s, k)).collect())
    }

    /// Weighted mean and variance of one multiplier.
    pub fn moments(&self, axis: Axis<'_>) -> Result<(f64, f64), SampleError> {
        let values = self.axis_values(axis)?;
        let mean: f64 = values
            .iter()
            .zip(&self.scenarios)
            .map(|(v, s)| v * s.weight)
            .sum();
        let var = values
            .iter()
            .zip(&self.scenarios)
            .map(|(v, s)| s.weight * (v - mean) * (v - mean))
            .sum();
        Ok((mean, var))
    }
}

/// Weighted points of one block: multipliers per axis plus probability.
type Block = Vec<(Vec<f64>, f64)>;

/// Draw a scenario set. A pure function of its arguments.
pub fn sample(
    config: &UncertaintyConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<ScenarioSet, SampleError> {
    config.validate()?;
    match strategy {
        Strategy::MonteCarlo { n }
        | Strategy::StratifiedEquiProbable { n }
        | Strategy::LatinHypercube { n }
            if n == 0 =>
        {
            return Err(SampleError::EmptySample)
        }
        _ => {}
    }
    let supply_axes: Vec<String> = config.supply.keys().cloned().collect();
    let demand_axes: Vec<String> = config.demand.keys().cloned().collect();
    let supply_dists: Vec<&Distribution> = config.supply.values().collect();
    let demand_dists: Vec<&Distribution> = config.demand.values().collect();

    let copula = match &config.demand_correlation {
        None => None,
        Some(corr) => {
            let idx: Vec<usize> = corr
                .goods
                .iter()
                .map(|g| {
                    demand_axes
                        .iter()
                        .position(|a| a == g)
                        .unwrap_or(usize::MAX)
                })
                .collect();
            Some(Copula {
                idx,
                chol: corr.cholesky()?,
            })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let supply = block(&supply_axes, &supply_dists, None, strategy, &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let demand = block(
        &demand_axes,
        &demand_dists,
        copula.as_ref(),
        strategy,
        &mut rng,
    )?;

    let total = supply.len().saturating_mul(demand.len());
    if total > MAX_SCENARIOS {
        return Err(SampleError::TooManyScenarios(total));
    }
    let mut scenarios = Vec::with_capacity(total);
    for (si, (sv, sw)) in supply.iter().enumerate() {
        for (dv, dw) in &demand {
            scenarios.push(Scenario {
                supply: sv.clone(),
                demand: dv.clone(),
                weight: sw * dw,
                supply_index: si,
            });
        }
    }
    let sum: f64 = scenarios.iter().map(|s| s.weight).sum();
    for s in &mut scenarios {
        s.weight /= sum;
    }
    Ok(ScenarioSet {
        supply_axes,
        demand_axes,
        scenarios,
        supply_points: supply.len(),
        seed,
        strategy,
        rng: RNG_NAME.to_string(),
    })
}

struct Copula {
    /// Positions of the correlated goods among the demand axes.
    idx: Vec<usize>,
    chol: Vec<f64>,
}

impl Copula {
    /// Correlate the standard normal scores of the copula axes in place.
    fn apply(&self, z: &mut [f64]) {
        let n = self.idx.len();
        let raw: Vec<f64> = self.idx.iter().map(|&i| z[i]).collect();
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += self.chol[r * n + c] * raw[c];
            }
            z[self.idx[r]] = acc;
        }
    }

    fn covers(&self, axis: usize) -> bool {
        self.idx.contains(&axis)
    }
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn block(
    axes: &[String],
    dists: &[&Distribution],
    copula: Option<&Copula>,
    strategy: Strategy,
    rng: &mut ChaCha8Rng,
) -> Result<Block, SampleError> {
    let fixed: Vec<f64> = dists.iter().map(|d| d.mean()).collect();
    let random: Vec<usize> = (0..dists.len())
        .filter(|&i| !dists[i].is_deterministic())
        .collect();
    let copula = copula.filter(|c| random.iter().any(|&a| c.covers(a)));

    if let Strategy::Exhaustive = strategy {
        if copula.is_some() {
            return Err(SampleError::CorrelationUnsupported("exhaustive"));
        }
        let mut points: Block = vec![(fixed.clone(), 1.0)];
        for &a in &random {
            let support = dists[a]
                .support()
                .ok_or_else(|| SampleError::ContinuousSupport {
                    axis: axes[a].clone(),
                })?;
            let mut next = Vec::with_capacity(points.len() * support.len());
            for (p, w) in &points {
                for &(v, pv) in &support {
                    let mut q = p.clone();
                    q[a] = v;
                    next.push((q, w * pv));
                }
            }
            if next.len() > MAX_SCENARIOS {
                return Err(SampleError::TooManyScenarios(next.len()));
            }
            points = next;
        }
        return Ok(points);
    }
    if random.is_empty() {
        return Ok(vec![(fixed, 1.0)]);
    }

    match strategy {
        Strategy::MonteCarlo { n } => {
            let w = 1.0 / n as f64;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut p = fixed.clone();
                match copula {
                    None => {
                        for &a in &random {
                            p[a] = dists[a].quantile(uniform_open(rng));
                        }
                    }
                    Some(c) => {
                        let mut z = vec![0.0; dists.len()];
                        for &a in &random {
                            z[a] = normal_quantile(uniform_open(rng));
                        }
                        c.apply(&mut z);
                        for &a in &random {
                            p[a] = dists[a].quantile(normal_cdf(z[a]));
                        }
                    }
                }
                out.push((p, w));
            }
            Ok(out)
        }
        Strategy::StratifiedEquiProbable { n } => {
            if copula.is_some() {
                return Err(SampleError::CorrelationUnsupported(
                    "stratified_equi_probable",
                ));
            }
            let total = (0..random.len()).try_fold(1usize, |acc, _| acc.checked_mul(n));
            match total {
                Some(t) if t <= MAX_SCENARIOS => {}
                _ => return Err(SampleError::TooManyScenarios(total.unwrap_or(usize::MAX))),
            }
            let centroids: Vec<Vec<f64>> = random
                .iter()
                .map(|&a| cell_centroids(dists[a], n))
                .collect();
            let mut points: Block = vec![(fixed, 1.0)];
            let w = 1.0 / n as f64;
            for (k, &a) in random.iter().enumerate() {
                let mut next = Vec::with_capacity(points.len() * n);
                for (p, pw) in &points {
                    for &c in &centroids[k] {
                        let mut q = p.clone();
                        q[a] = c;
                        next.push((q, pw * w));
                    }
                }
                points = next;
            }
            Ok(points)
        }
        Strategy::LatinHypercube { n } => {
            let perms: Vec<Vec<usize>> = random
                .iter()
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(rng);
                    p
                })
                .collect();
            let centroids: Vec<Vec<f64>> = random
                .iter()
                .map(|&a| cell_centroids(dists[a], n))
                .collect();
            let w = 1.0 / n as f64;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                let mut p = fixed.clone();
                match copula {
                    None => {
                        for (r, &a) in random.iter().enumerate() {
                            p[a] = centroids[r][perms[r][k]];
                        }
                    }
                    Some(c) => {
                        let mut z = vec![0.0; dists.len()];
                        for (r, &a) in random.iter().enumerate() {
                            z[a] = normal_quantile((perms[r][k] as f64 + 0.5) / n as f64);
                        }
                        c.apply(&mut z);
                        for (r, &a) in random.iter().enumerate() {
                            p[a] = if c.covers(a) {
                                dists[a].quantile(normal_cdf(z[a]))
                            } else {
                                centroids[r][perms[r][k]]
                            };
                        }
                    }
                }
                out.push((p, w));
            }
            Ok(out)
        }
        Strategy::Exhaustive => unreachable!(),
    }
}

fn cell_centroids(d: &Distribution, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| d.cell_centroid(i as f64 / n as f64, (i + 1) as f64 / n as f64))
        .collect()
}
