//! A self-contained dense linear-program solver for small bounded problems.
//!
//! Minimizes or maximizes a linear objective subject to two-sided linear
//! constraints `lo <= a.x <= hi` and finite per-variable boxes. The solver is
//! a bounded-variable primal simplex with Bland's rule, so it terminates
//! deterministically; problem sizes here are tiny (~100 variables, ~50 rows)
//! and determinism matters more than speed.
//!
//! Each row is scaled to unit max-norm before solving; gains spanning
//! 1e-12..1 otherwise wreck the pivot tolerances.

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// One two-sided row constraint `lo <= coeffs . x <= hi`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, hi: f64) -> Constraint {
        Constraint {
            coeffs,
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    pub fn ge(coeffs: Vec<f64>, lo: f64) -> Constraint {
        Constraint {
            coeffs,
            lo,
            hi: f64::INFINITY,
        }
    }

    pub fn range(coeffs: Vec<f64>, lo: f64, hi: f64) -> Constraint {
        Constraint { coeffs, lo, hi }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Per-variable [lo, hi]; both ends must be finite.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(Error::Lp(format!(
                "dimension mismatch: {} objective terms, {} boxes",
                n,
                self.bounds.len()
            )));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Lp(format!("variable {i} has invalid box [{lo}, {hi}]")));
            }
        }
        for (j, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::Lp(format!(
                    "dimension mismatch: constraint {j} has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
            if c.lo > c.hi {
                return Err(Error::Lp(format!(
                    "constraint {j} has empty range [{}, {}]",
                    c.lo, c.hi
                )));
            }
        }
        Ok(())
    }

    /// Textual dump of the instance for external cross-checking.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Min => "min",
            Sense::Max => "max",
        };
        let _ = writeln!(s, "{sense} c.x with {} vars", self.num_vars());
        let _ = writeln!(s, "c = {:?}", self.objective);
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            let _ = writeln!(s, "x[{i}] in [{lo}, {hi}]");
        }
        for (j, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(s, "row[{j}]: {} <= {:?} . x <= {}", c.lo, c.coeffs, c.hi);
        }
        s
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum AtBound {
    Lower,
    Upper,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Strategy {
    /// Dantzig entering with stability-preferring ratio pivots; falls back to
    /// Bland after a degenerate streak.
    Fast,
    /// Strict Bland's rule from the first pivot and frequent
    /// refactorization. Slower, used to retry after numerical breakdowns.
    Safe,
}

struct Simplex {
    m: usize,
    total: usize, // n structural + m slacks + m artificials
    cols: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    basis: Vec<usize>,
    basic_pos: Vec<Option<usize>>,
    nb_state: Vec<AtBound>,
    xb: Vec<f64>,
    binv: Vec<f64>, // m x m row-major
    tol: f64,
    pivot_tol: f64,
    pivots_since_refactor: usize,
    strategy: Strategy,
}

/// Threshold below which a refactorization declares the basis dependent.
const SINGULAR_TOL: f64 = 1e-11;

impl Simplex {
    fn value_of(&self, v: usize) -> f64 {
        if let Some(p) = self.basic_pos[v] {
            self.xb[p]
        } else {
            match self.nb_state[v] {
                AtBound::Lower => self.lb[v],
                AtBound::Upper => self.ub[v],
            }
        }
    }

    fn recompute_basics(&mut self) {
        // B xB = - N xN
        let mut rhs = vec![0.0; self.m];
        for v in 0..self.total {
            if self.basic_pos[v].is_none() {
                let val = self.value_of(v);
                if val != 0.0 {
                    for (k, a) in self.cols[v].iter().enumerate() {
                        rhs[k] -= a * val;
                    }
                }
            }
        }
        for i in 0..self.m {
            let mut s = 0.0;
            for k in 0..self.m {
                s += self.binv[i * self.m + k] * rhs[k];
            }
            self.xb[i] = s;
        }
    }

    fn refactor(&mut self) -> Result<()> {
        // Gauss-Jordan inverse of the basis matrix with complete pivoting;
        // basis columns span twelve orders of magnitude here and row-only
        // pivoting misreads the small ones as dependent.
        let m = self.m;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (i, &v) in self.basis.iter().enumerate() {
            for k in 0..m {
                aug[k * w + i] = self.cols[v][k];
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        let mut row_used = vec![false; m];
        let mut col_used = vec![false; m];
        let mut pivot_row_of_col = vec![0usize; m];
        for _ in 0..m {
            let (mut br, mut bc, mut bv) = (0usize, 0usize, 0.0f64);
            for r in 0..m {
                if row_used[r] {
                    continue;
                }
                for c in 0..m {
                    if col_used[c] {
                        continue;
                    }
                    let v = aug[r * w + c].abs();
                    if v > bv {
                        bv = v;
                        br = r;
                        bc = c;
                    }
                }
            }
            if bv < SINGULAR_TOL {
                return Err(Error::Lp("numerical breakdown: singular basis".into()));
            }
            row_used[br] = true;
            col_used[bc] = true;
            pivot_row_of_col[bc] = br;
            let d = aug[br * w + bc];
            for k in 0..w {
                aug[br * w + k] /= d;
            }
            for r in 0..m {
                if r != br {
                    let f = aug[r * w + bc];
                    if f != 0.0 {
                        for k in 0..w {
                            aug[r * w + k] -= f * aug[br * w + k];
                        }
                    }
                }
            }
        }
        for c in 0..m {
            let r = pivot_row_of_col[c];
            for k in 0..m {
                self.binv[c * m + k] = aug[r * w + m + k];
            }
        }
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    /// Optimality certificate: at a claimed optimum every nonbasic reduced
    /// cost must point away from the feasible direction, which is exactly the
    /// zero-gap condition of weak duality for the bounded simplex.
    #[cfg(debug_assertions)]
    fn assert_dual_signs(&self, cost: &[f64]) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &v) in self.basis.iter().enumerate() {
            let cb = cost[v];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[i * m + k];
                }
            }
        }
        for v in 0..self.total {
            if self.basic_pos[v].is_some() || self.lb[v] == self.ub[v] {
                continue;
            }
            let mut d = cost[v];
            for (k, a) in self.cols[v].iter().enumerate() {
                if *a != 0.0 {
                    d -= y[k] * a;
                }
            }
            let ok = match self.nb_state[v] {
                AtBound::Lower => d >= -10.0 * self.tol,
                AtBound::Upper => d <= 10.0 * self.tol,
            };
            debug_assert!(ok, "reduced cost sign violated at var {v}: {d}");
        }
    }

    /// Runs simplex iterations for the given cost vector. Returns Ok(true) on
    /// optimality, Ok(false) when unbounded.
    ///
    /// The entering rule is Dantzig (most negative reduced cost) with a
    /// stability-preferring ratio test; after a long streak of degenerate
    /// pivots it switches to strict Bland's rule, which cannot cycle.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool> {
        let m = self.m;
        let max_iter = 400 * (self.total + m) + 40_000;
        let refactor_period = match self.strategy {
            Strategy::Fast => 50,
            Strategy::Safe => 8,
        };
        let mut degenerate_streak = 0usize;
        let mut refreshed = false;
        for _iter in 0..max_iter {
            if self.pivots_since_refactor > refactor_period {
                self.refactor()?;
            }
            let bland = self.strategy == Strategy::Safe || degenerate_streak > 300;
            // y = cB^T B^-1
            let mut y = vec![0.0; m];
            for (i, &v) in self.basis.iter().enumerate() {
                let cb = cost[v];
                if cb != 0.0 {
                    for k in 0..m {
                        y[k] += cb * self.binv[i * m + k];
                    }
                }
            }
            let mut entering: Option<(usize, f64, f64)> = None; // var, dir, score
            for v in 0..self.total {
                if self.basic_pos[v].is_some() || self.lb[v] == self.ub[v] {
                    continue;
                }
                let mut d = cost[v];
                for (k, a) in self.cols[v].iter().enumerate() {
                    if *a != 0.0 {
                        d -= y[k] * a;
                    }
                }
                let (eligible, dir) = match self.nb_state[v] {
                    AtBound::Lower => (d < -self.tol, 1.0),
                    AtBound::Upper => (d > self.tol, -1.0),
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((v, dir, d.abs()));
                    break;
                }
                if entering.is_none_or(|(_, _, s)| d.abs() > s) {
                    entering = Some((v, dir, d.abs()));
                }
            }
            // Apparent optimality may be an artifact of a drifted basis
            // inverse; only a freshly refactored basis confirms it.
            let Some((e, dir, _)) = entering else {
                if refreshed {
                    return Ok(true);
                }
                self.refactor()?;
                refreshed = true;
                continue;
            };
            refreshed = false;
            // w = B^-1 a_e
            let mut w = vec![0.0; m];
            for i in 0..m {
                let mut s = 0.0;
                for (k, a) in self.cols[e].iter().enumerate() {
                    if *a != 0.0 {
                        s += self.binv[i * m + k] * a;
                    }
                }
                w[i] = s;
            }
            // ratio test: basic i moves by -dir*w_i*step
            let own_limit = self.ub[e] - self.lb[e]; // may be infinite
            let mut min_step = f64::INFINITY;
            let mut candidates: Vec<(usize, AtBound, f64, f64)> = Vec::new();
            for i in 0..m {
                let rate = -dir * w[i];
                if rate.abs() < self.pivot_tol {
                    continue;
                }
                let v = self.basis[i];
                let step = if rate < 0.0 {
                    if self.lb[v].is_finite() {
                        (self.xb[i] - self.lb[v]) / -rate
                    } else {
                        continue;
                    }
                } else if self.ub[v].is_finite() {
                    (self.ub[v] - self.xb[i]) / rate
                } else {
                    continue;
                };
                let step = step.max(0.0);
                let hit = if rate < 0.0 {
                    AtBound::Lower
                } else {
                    AtBound::Upper
                };
                candidates.push((i, hit, step, rate.abs()));
                min_step = min_step.min(step);
            }
            if own_limit <= min_step {
                if own_limit.is_infinite() {
                    return Ok(false); // unbounded ray
                }
                // bound flip of the entering variable, no basis change
                for i in 0..m {
                    self.xb[i] -= dir * w[i] * own_limit;
                }
                self.nb_state[e] = match self.nb_state[e] {
                    AtBound::Lower => AtBound::Upper,
                    AtBound::Upper => AtBound::Lower,
                };
                self.pivots_since_refactor += 1;
                degenerate_streak = 0;
                continue;
            }
            // Among candidates attaining the minimum step exactly, prefer the
            // largest pivot magnitude for stability; under Bland, the
            // smallest leaving variable index wins instead.
            let mut leaving: Option<(usize, AtBound)> = None;
            let mut best_score = -1.0;
            let mut best_var = usize::MAX;
            for &(i, hit, step, _rate_abs) in &candidates {
                if step > min_step {
                    continue;
                }
                if bland {
                    if self.basis[i] < best_var {
                        best_var = self.basis[i];
                        leaving = Some((i, hit));
                    }
                } else {
                    let score = w[i].abs();
                    if score > best_score {
                        best_score = score;
                        leaving = Some((i, hit));
                    }
                }
            }
            let Some((r, hit)) = leaving else {
                return Err(Error::Lp("ratio test found no pivot".into()));
            };
            let step = min_step;
            degenerate_streak = if step < 1e-13 {
                degenerate_streak + 1
            } else {
                0
            };
            let enter_val = self.value_of(e) + dir * step;
            for i in 0..m {
                self.xb[i] -= dir * w[i] * step;
            }
            let leave_var = self.basis[r];
            self.basic_pos[leave_var] = None;
            self.nb_state[leave_var] = hit;
            self.basis[r] = e;
            self.basic_pos[e] = Some(r);
            self.xb[r] = enter_val;
            // eta update of B^-1
            let wr = w[r];
            if wr.abs() < self.pivot_tol {
                return Err(Error::Lp("numerical breakdown: zero pivot".into()));
            }
            for k in 0..m {
                self.binv[r * m + k] /= wr;
            }
            for i in 0..m {
                if i != r {
                    let f = w[i];
                    if f != 0.0 {
                        for k in 0..m {
                            self.binv[i * m + k] -= f * self.binv[r * m + k];
                        }
                    }
                }
            }
            self.pivots_since_refactor += 1;
        }
        Err(Error::Lp("iteration limit exceeded".into()))
    }
}

/// Solves the program to the given tolerance (1e-9 is the usual choice).
///
/// A numerical breakdown under the default pivot strategy triggers one
/// deterministic retry under a conservative strategy before giving up.
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    match solve_with(lp, tol, Strategy::Fast) {
        Err(Error::Lp(_)) => solve_with(lp, tol, Strategy::Safe),
        r => r,
    }
}

fn solve_with(lp: &LinearProgram, tol: f64, strategy: Strategy) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.num_vars();
    let m = lp.constraints.len();

    // Presolve: a constraint side the variable boxes already imply can never
    // bind and is dropped; rows with no live side vanish entirely. The
    // estimation programs produce many such rows at long distances, and
    // removing them avoids needless degeneracy. Surviving rows are scaled to
    // unit max-norm.
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(m);
    for c in &lp.constraints {
        let (mut act_lo, mut act_hi) = (0.0f64, 0.0f64);
        for (i, &a) in c.coeffs.iter().enumerate() {
            let (bl, bh) = lp.bounds[i];
            act_lo += (a * bl).min(a * bh);
            act_hi += (a * bl).max(a * bh);
        }
        let lo = if c.lo.is_finite() && c.lo > act_lo { c.lo } else { f64::NEG_INFINITY };
        let hi = if c.hi.is_finite() && c.hi < act_hi { c.hi } else { f64::INFINITY };
        if !lo.is_finite() && !hi.is_finite() {
            continue;
        }
        let maxa = c.coeffs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let s = if maxa > 0.0 { 1.0 / maxa } else { 1.0 };
        rows.push((c.coeffs.iter().map(|v| v * s).collect(), lo * s, hi * s));
    }
    let m = rows.len();

    if m == 0 {
        // pure box problem
        let minimize = lp.sense == Sense::Min;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let c = lp.objective[i];
                let (lo, hi) = lp.bounds[i];
                if (c >= 0.0) == minimize {
                    lo
                } else {
                    hi
                }
            })
            .collect();
        let objective = dot(&lp.objective, &x);
        return Ok(LpSolution {
            status: Status::Optimal,
            objective,
            x,
        });
    }

    // Column equilibration: structural coefficients span many orders of
    // magnitude (photon-number products), which wrecks basis conditioning.
    // Variable i is rescaled so its largest coefficient has magnitude one.
    let mut col_scale = vec![1.0f64; n];
    for (i, sc) in col_scale.iter_mut().enumerate() {
        let maxa = rows
            .iter()
            .fold(0.0f64, |acc, row| acc.max(row.0[i].abs()));
        if maxa > 0.0 {
            *sc = maxa;
        }
    }

    let total = n + 2 * m;
    let mut cols = vec![vec![0.0; m]; total];
    let mut lb = vec![0.0; total];
    let mut ub = vec![0.0; total];
    for i in 0..n {
        for (j, row) in rows.iter().enumerate() {
            cols[i][j] = row.0[i] / col_scale[i];
        }
        lb[i] = lp.bounds[i].0 * col_scale[i];
        ub[i] = lp.bounds[i].1 * col_scale[i];
    }
    for j in 0..m {
        cols[n + j][j] = -1.0;
        lb[n + j] = rows[j].1;
        ub[n + j] = rows[j].2;
    }

    // Initial nonbasic point: structural vars at their lower bound, each
    // slack parked at its nearest finite bound; artificials absorb the
    // residual a.x - s of every row.
    let x0: Vec<f64> = (0..n).map(|i| lb[i]).collect();
    let mut basis = Vec::with_capacity(m);
    let mut xb = Vec::with_capacity(m);
    let mut binv = vec![0.0; m * m];
    let mut nb_state = vec![AtBound::Lower; total];
    for j in 0..m {
        let act: f64 = (0..n).map(|i| cols[i][j] * x0[i]).sum();
        let (lo, hi) = (rows[j].1, rows[j].2);
        let at = if !lo.is_finite() {
            AtBound::Upper
        } else if !hi.is_finite() || (act - lo).abs() <= (hi - act).abs() {
            AtBound::Lower
        } else {
            AtBound::Upper
        };
        nb_state[n + j] = at;
        let s0 = match at {
            AtBound::Lower => lo,
            AtBound::Upper => hi,
        };
        let r = act - s0;
        let a = n + m + j;
        // equation: a.x - s + col_t * t = 0 with t = |r| >= 0
        cols[a][j] = if r >= 0.0 { -1.0 } else { 1.0 };
        lb[a] = 0.0;
        ub[a] = f64::INFINITY;
        basis.push(a);
        xb.push(r.abs());
        binv[j * m + j] = if r >= 0.0 { -1.0 } else { 1.0 };
    }
    let mut basic_pos = vec![None; total];
    for (i, &v) in basis.iter().enumerate() {
        basic_pos[v] = Some(i);
    }

    let mut s = Simplex {
        m,
        total,
        cols,
        lb,
        ub,
        basis,
        basic_pos,
        nb_state,
        xb,
        binv,
        tol,
        pivot_tol: match strategy {
            Strategy::Fast => 1e-9,
            Strategy::Safe => 1e-7,
        },
        pivots_since_refactor: 0,
        strategy,
    };

    // Phase I: drive the artificials to zero.
    let mut cost1 = vec![0.0; total];
    for j in 0..m {
        cost1[n + m + j] = 1.0;
    }
    let finished = s.optimize(&cost1)?;
    debug_assert!(finished, "phase I cannot be unbounded");
    let infeas: f64 = (0..m)
        .map(|j| s.value_of(n + m + j))
        .sum();
    if infeas > tol.max(1e-9) * 10.0 * m as f64 {
        return Ok(LpSolution {
            status: Status::Infeasible,
            objective: f64::NAN,
            x: vec![0.0; n],
        });
    }
    // Freeze the artificials.
    for j in 0..m {
        s.ub[n + m + j] = 0.0;
        if s.basic_pos[n + m + j].is_none() {
            s.nb_state[n + m + j] = AtBound::Lower;
        }
    }

    // Phase II. Solver variables carry the column scaling, so the cost does
    // too: c.x = (c/cs) . (x*cs).
    let minimize = lp.sense == Sense::Min;
    let mut cost2 = vec![0.0; total];
    for i in 0..n {
        let c = lp.objective[i] / col_scale[i];
        cost2[i] = if minimize { c } else { -c };
    }
    let optimal = s.optimize(&cost2)?;
    #[cfg(debug_assertions)]
    if optimal {
        s.assert_dual_signs(&cost2);
    }
    let x: Vec<f64> = (0..n).map(|i| s.value_of(i) / col_scale[i]).collect();
    if !optimal {
        return Ok(LpSolution {
            status: Status::Unbounded,
            objective: if minimize {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            x,
        });
    }
    let objective = dot(&lp.objective, &x);

    #[cfg(debug_assertions)]
    verify_optimality(lp, &x, tol);

    Ok(LpSolution {
        status: Status::Optimal,
        objective,
        x,
    })
}

/// Primal feasibility check used as the weak-duality certificate in debug
/// builds: every optimal solution must satisfy all rows and boxes to within a
/// scaled tolerance.
#[cfg(debug_assertions)]
fn verify_optimality(lp: &LinearProgram, x: &[f64], tol: f64) {
    let slack_tol = (tol * 1e3).max(1e-7);
    for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
        debug_assert!(
            x[i] >= lo - slack_tol && x[i] <= hi + slack_tol,
            "box violated at {i}: {} not in [{lo}, {hi}]",
            x[i]
        );
    }
    for (j, c) in lp.constraints.iter().enumerate() {
        let act = dot(&c.coeffs, x);
        let scale = c.coeffs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        debug_assert!(
            act >= c.lo - slack_tol * scale && act <= c.hi + slack_tol * scale,
            "row {j} violated: {act} not in [{}, {}]",
            c.lo,
            c.hi
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Brute-force reference: enumerate candidate vertices as intersections of n
/// active hyperplanes (row bounds and box faces) and keep the best feasible
/// one. Exponential; intended for cross-checking instances with <= ~10
/// variables.
pub mod brute {
    use super::*;

    struct Plane {
        a: Vec<f64>,
        b: f64,
    }

    pub fn solve_by_vertex_enumeration(lp: &LinearProgram) -> Result<Option<(f64, Vec<f64>)>> {
        lp.check()?;
        let n = lp.num_vars();
        if n > 12 {
            return Err(Error::Lp("vertex enumeration limited to 12 variables".into()));
        }
        let mut planes = Vec::new();
        for c in &lp.constraints {
            if c.lo.is_finite() {
                planes.push(Plane {
                    a: c.coeffs.clone(),
                    b: c.lo,
                });
            }
            if c.hi.is_finite() {
                planes.push(Plane {
                    a: c.coeffs.clone(),
                    b: c.hi,
                });
            }
        }
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            planes.push(Plane {
                a: e.clone(),
                b: lp.bounds[i].0,
            });
            planes.push(Plane {
                a: e,
                b: lp.bounds[i].1,
            });
        }

        let minimize = lp.sense == Sense::Min;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut choice = vec![0usize; n];
        enumerate(&planes, n, 0, 0, &mut choice, &mut |sel| {
            if let Some(x) = solve_square(&planes, sel, n) {
                if feasible(lp, &x) {
                    let obj = dot(&lp.objective, &x);
                    let better = match &best {
                        None => true,
                        Some((b, _)) => {
                            if minimize {
                                obj < *b - 0.0
                            } else {
                                obj > *b + 0.0
                            }
                        }
                    };
                    if better {
                        best = Some((obj, x));
                    }
                }
            }
        });
        Ok(best)
    }

    fn enumerate(
        planes: &[Plane],
        n: usize,
        start: usize,
        depth: usize,
        choice: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if depth == n {
            f(choice);
            return;
        }
        for i in start..planes.len() {
            choice[depth] = i;
            enumerate(planes, n, i + 1, depth + 1, choice, f);
        }
    }

    fn solve_square(planes: &[Plane], sel: &[usize], n: usize) -> Option<Vec<f64>> {
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for (r, &pi) in sel.iter().enumerate() {
            for c in 0..n {
                a[r * n + c] = planes[pi].a[c];
            }
            b[r] = planes[pi].b;
        }
        // Gaussian elimination with partial pivoting
        for col in 0..n {
            let mut piv = col;
            let mut mx = a[col * n + col].abs();
            for r in col + 1..n {
                if a[r * n + col].abs() > mx {
                    mx = a[r * n + col].abs();
                    piv = r;
                }
            }
            if mx < 1e-9 {
                return None;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                b.swap(col, piv);
            }
            for r in col + 1..n {
                let f = a[r * n + col] / a[col * n + col];
                if f != 0.0 {
                    for k in col..n {
                        a[r * n + k] -= f * a[col * n + k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let mut s = b[r];
            for k in r + 1..n {
                s -= a[r * n + k] * x[k];
            }
            x[r] = s / a[r * n + r];
        }
        Some(x)
    }

    fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
        let tol = 1e-7;
        for (i, &(lo, hi)) in lp.bounds.iter().enumerate() {
            if x[i] < lo - tol || x[i] > hi + tol {
                return false;
            }
        }
        for c in &lp.constraints {
            let act = dot(&c.coeffs, x);
            let scale = c.coeffs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if act < c.lo - tol * scale || act > c.hi + tol * scale {
                return false;
            }
        }
        true
    }
}
