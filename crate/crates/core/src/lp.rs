//! Dense two-phase primal simplex.
//!
//! Entering columns follow Dantzig's rule until a run of degenerate pivots
//! is seen, after which Bland's smallest-index rule takes over for the rest
//! of the solve, which rules out cycling. Leaving rows break ratio ties by
//! the smallest basic variable index. Pivoting is fully deterministic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost optimality tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Maximize `objective . x` subject to the rows and `lower <= x <= upper`.
/// Lower bounds may be `-inf` (the variable is then split) and upper bounds
/// may be `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot limit hit; only possible through numerical trouble.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpProblem {
    /// `n` non-negative, unbounded-above variables with the given objective.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Largest violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match r.relation {
                Relation::Le => lhs - r.rhs,
                Relation::Ge => r.rhs - lhs,
                Relation::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (i, &xi) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - xi).max(xi - self.upper[i]);
        }
        worst
    }

    /// CPLEX LP text for cross-checking with external solvers.
    pub fn to_lp_format(&self, names: Option<&[String]>) -> String {
        let name = |i: usize| match names {
            Some(n) => sanitize(&n[i]),
            None => format!("x{i}"),
        };
        let term_list = |coeffs: &[f64]| {
            let mut s = String::new();
            for (i, &c) in coeffs.iter().enumerate() {
                if c != 0.0 {
                    let sign = if c < 0.0 { "-" } else { "+" };
                    let _ = write!(s, " {sign} {} {}", c.abs(), name(i));
                }
            }
            if s.is_empty() {
                s.push_str(" 0 x0");
            }
            s
        };
        let mut out = String::from("\\ generated by chainforge\nMaximize\n obj:");
        out.push_str(&term_list(&self.objective));
        out.push_str("\nSubject To\n");
        for (k, r) in self.rows.iter().enumerate() {
            let rel = match r.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " c{k}:{} {rel} {}", term_list(&r.coeffs), r.rhs);
        }
        out.push_str("Bounds\n");
        for i in 0..self.num_vars() {
            let (l, u) = (self.lower[i], self.upper[i]);
            let lo = if l == f64::NEG_INFINITY {
                String::from("-inf")
            } else {
                format!("{l}")
            };
            if u == f64::INFINITY {
                let _ = writeln!(out, " {} >= {lo}", name(i));
            } else {
                let _ = writeln!(out, " {lo} <= {} <= {u}", name(i));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Tableau {
    width: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
    m: usize,
    bland: bool,
    degenerate: usize,
    pivots: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.a[pr * w + pc];
        for c in 0..w {
            self.a[pr * w + c] *= inv;
        }
        self.a[pr * w + pc] = 1.0;
        let (head, rest) = self.a.split_at_mut(pr * w);
        let (prow, tail) = rest.split_at_mut(w);
        for row in head.chunks_exact_mut(w).chain(tail.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// One simplex iteration on the objective row `m` over columns `< ncols`.
    fn step(&mut self, ncols: usize) -> Step {
        let obj = self.m;
        let mut enter = None;
        if self.bland {
            enter = (0..ncols).find(|&c| self.at(obj, c) < -OPTIMALITY_TOL);
        } else {
            let mut best = -OPTIMALITY_TOL;
            for c in 0..ncols {
                let v = self.at(obj, c);
                if v < best {
                    best = v;
                    enter = Some(c);
                }
            }
        }
        let Some(pc) = enter else {
            return Step::Optimal;
        };
        let rhs = self.rhs_col();
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let v = self.at(r, pc);
            if v > PIVOT_TOL {
                let ratio = self.at(r, rhs).max(0.0) / v;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12
                            || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((pr, ratio)) = leave else {
            return Step::Unbounded;
        };
        if ratio <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate >= DEGENERATE_RUN {
                self.bland = true;
            }
        } else {
            self.degenerate = 0;
        }
        self.pivot(pr, pc);
        Step::Pivoted
    }

    fn run(&mut self, ncols: usize, limit: usize) -> LpStatus {
        loop {
            if self.pivots >= limit {
                return LpStatus::IterationLimit;
            }
            match self.step(ncols) {
                Step::Optimal => return LpStatus::Optimal,
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Pivoted => {}
            }
        }
    }
}

/// Column transform from original variables to non-negative tableau columns.
enum ColMap {
    /// x = lower + y
    Shift(f64),
    /// x = upper - y
    Flip(f64),
    /// x = y+ - y-
    Split,
}

/// Solve with the dense two-phase simplex.
pub fn solve_lp(p: &LpProblem) -> LpSolution {
    let n = p.num_vars();
    let infeasible = || LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; n],
        objective: f64::NAN,
    };
    for i in 0..n {
        if p.lower[i] > p.upper[i] {
            return infeasible();
        }
    }

    // Columns of the structural part.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut col_of = Vec::with_capacity(n);
    for i in 0..n {
        col_of.push(ncols);
        if p.lower[i].is_finite() {
            maps.push(ColMap::Shift(p.lower[i]));
            ncols += 1;
        } else if p.upper[i].is_finite() {
            maps.push(ColMap::Flip(p.upper[i]));
            ncols += 1;
        } else {
            maps.push(ColMap::Split);
            ncols += 2;
        }
    }

    // Rows in transformed variables: (coeffs over structural columns, relation, rhs).
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(p.rows.len() + n);
    let transform = |coeffs: &[f64], rhs: f64| {
        let mut out = vec![0.0; ncols];
        let mut rhs = rhs;
        for i in 0..n {
            let a = coeffs[i];
            if a == 0.0 {
                continue;
            }
            match maps[i] {
                ColMap::Shift(l) => {
                    out[col_of[i]] = a;
                    rhs -= a * l;
                }
                ColMap::Flip(u) => {
                    out[col_of[i]] = -a;
                    rhs -= a * u;
                }
                ColMap::Split => {
                    out[col_of[i]] = a;
                    out[col_of[i] + 1] = -a;
                }
            }
        }
        (out, rhs)
    };
    for r in &p.rows {
        let (c, rhs) = transform(&r.coeffs, r.rhs);
        rows.push((c, r.relation, rhs));
    }
    for i in 0..n {
        if let ColMap::Shift(l) = maps[i] {
            if p.upper[i].is_finite() {
                let mut c = vec![0.0; ncols];
                c[col_of[i]] = 1.0;
                rows.push((c, Relation::Le, p.upper[i] - l));
            }
        }
    }
    for row in &mut rows {
        if row.2 < 0.0 {
            for v in &mut row.0 {
                *v = -*v;
            }
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = ncols + n_slack;
    let width = art_start + n_art + 1;
    let mut t = Tableau {
        width,
        a: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
        m,
        bland: false,
        degenerate: 0,
        pivots: 0,
    };
    let rhs = width - 1;
    let (mut s, mut art) = (ncols, art_start);
    for (r, (coeffs, rel, b)) in rows.iter().enumerate() {
        t.a[r * width..r * width + ncols].copy_from_slice(coeffs);
        t.a[r * width + rhs] = *b;
        match rel {
            Relation::Le => {
                t.a[r * width + s] = 1.0;
                t.basis[r] = s;
                s += 1;
            }
            Relation::Ge => {
                t.a[r * width + s] = -1.0;
                s += 1;
                t.a[r * width + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
            Relation::Eq => {
                t.a[r * width + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            }
        }
    }
    let limit = 50 * (m + width) + 1000;

    if n_art > 0 {
        // Phase 1: maximize -sum(artificials).
        for r in 0..m {
            if t.basis[r] >= art_start {
                for c in 0..width {
                    let v = t.a[r * width + c];
                    t.a[m * width + c] -= v;
                }
            }
        }
        for c in art_start..art_start + n_art {
            t.a[m * width + c] = 0.0;
        }
        match t.run(art_start + n_art, limit) {
            LpStatus::Optimal => {}
            LpStatus::IterationLimit => {
                return LpSolution {
                    status: LpStatus::IterationLimit,
                    ..infeasible()
                }
            }
            _ => return infeasible(),
        }
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if t.a[m * width + rhs] < -FEASIBILITY_TOL * scale {
            return infeasible();
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| t.at(r, c).abs() > 1e-9) {
                    t.pivot(r, c);
                }
            }
        }
    }

    // Phase 2 objective row: reduced costs = -c for the initial basis, then
    // priced out against the current basis.
    let mut cost = vec![0.0; width];
    for i in 0..n {
        let c = p.objective[i];
        match maps[i] {
            ColMap::Shift(_) => cost[col_of[i]] = c,
            ColMap::Flip(_) => cost[col_of[i]] = -c,
            ColMap::Split => {
                cost[col_of[i]] = c;
                cost[col_of[i] + 1] = -c;
            }
        }
    }
    for c in 0..width {
        t.a[m * width + c] = -cost[c];
    }
    t.a[m * width + rhs] = 0.0;
    for r in 0..m {
        let cb = cost[t.basis[r]];
        if cb != 0.0 {
            for c in 0..width {
                let v = t.a[r * width + c];
                t.a[m * width + c] += cb * v;
            }
        }
    }
    for c in art_start..width - 1 {
        t.a[m * width + c] = 0.0;
    }
    t.degenerate = 0;
    let status = t.run(art_start, limit);
    if status != LpStatus::Optimal {
        return LpSolution {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
        };
    }

    let mut y = vec![0.0; width];
    for r in 0..m {
        y[t.basis[r]] = t.at(r, rhs).max(0.0);
    }
    let x: Vec<f64> = (0..n)
        .map(|i| match maps[i] {
            ColMap::Shift(l) => (l + y[col_of[i]]).min(p.upper[i]),
            ColMap::Flip(u) => u - y[col_of[i]],
            ColMap::Split => y[col_of[i]] - y[col_of[i] + 1],
        })
        .collect();
    let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut p = LpProblem::new(vec![1.0]);
        p.add_row(vec![1.0], Relation::Le, 5.0);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![5.0]);
        assert_eq!(s.objective, 5.0);
    }

    #[test]
    fn degenerate_tie_objective_unique() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.add_row(vec![1.0, 1.0], Relation::Le, 1.0);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_constraint_vertex() {
        let mut p = LpProblem::new(vec![3.0, 2.0]);
        p.add_row(vec![1.0, 1.0], Relation::Le, 4.0);
        p.add_row(vec![1.0, 3.0], Relation::Le, 6.0);
        let s = solve_lp(&p);
        assert_eq!(s.x, vec![4.0, 0.0]);
        assert_eq!(s.objective, 12.0);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = LpProblem::new(vec![1.0]);
        p.add_row(vec![1.0], Relation::Ge, 3.0);
        p.add_row(vec![1.0], Relation::Le, 2.0);
        assert_eq!(solve_lp(&p).status, LpStatus::Infeasible);
        let mut q = LpProblem::new(vec![1.0, -1.0]);
        q.add_row(vec![1.0, -1.0], Relation::Ge, 1.0);
        assert_eq!(solve_lp(&q).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_bounds_and_free_variables() {
        // max -|x - 2| written with a free x: x - t <= 2, -x - t <= -2, max -t.
        let mut p = LpProblem::new(vec![0.0, -1.0]);
        p.lower[0] = f64::NEG_INFINITY;
        p.add_row(vec![1.0, -1.0], Relation::Le, 2.0);
        p.add_row(vec![-1.0, -1.0], Relation::Le, -2.0);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && s.objective.abs() < 1e-12);

        let mut q = LpProblem::new(vec![1.0, 1.0]);
        q.lower = vec![1.0, -3.0];
        q.upper = vec![2.0, 5.0];
        q.add_row(vec![1.0, 1.0], Relation::Eq, 3.0);
        let s = solve_lp(&q);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!(q.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn lp_format_lists_rows_and_bounds() {
        let mut p = LpProblem::new(vec![3.0, -2.0]);
        p.upper[1] = 4.0;
        p.add_row(vec![1.0, 1.0], Relation::Le, 4.0);
        let text = p.to_lp_format(None);
        assert!(text.contains("Maximize\n obj: + 3 x0 - 2 x1"));
        assert!(text.contains(" c0: + 1 x0 + 1 x1 <= 4"));
        assert!(text.contains(" 0 <= x1 <= 4"));
        assert!(text.ends_with("End\n"));
    }
}
