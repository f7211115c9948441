//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every row `i` gets a logical column `s_i` with `a_i·x − s_i = 0`, so the
//! row sense lives entirely in the logical's bounds and the all-logical
//! basis is always available. The tableau stores `B⁻¹·[A | −I]`; basic
//! values satisfy `x_B = −T_N·x_N`.
//!
//! Phase 1 minimizes the sum of bound violations of the basic variables
//! from whatever basis is current, which is what lets branch-and-bound
//! re-optimize after bound changes without starting over.

use std::time::Instant;

use super::model::{ConstraintSense, MixedIntegerModel};

const NONE: usize = usize::MAX;

/// Internal primal feasibility tolerance (relative to `1 + |bound|`).
const PRIMAL_TOL: f64 = 1e-9;
/// Bound relaxation used by the Harris ratio test.
const HARRIS_TOL: f64 = 5e-10;
/// Entries smaller than this are flushed to zero in the pivot row.
const DROP_TOL: f64 = 1e-13;
const REINVERT_EVERY: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    IterationLimit,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column resting at its current value.
    Free,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SimplexParams {
    pub pivot_tol: f64,
    pub stall_threshold: usize,
    pub max_iterations: u64,
}

impl Default for SimplexParams {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            stall_threshold: 50,
            max_iterations: u64::MAX,
        }
    }
}

struct Candidate {
    row: usize,
    to_upper: bool,
    ratio: f64,
    alpha: f64,
}

enum Step {
    Flip(f64),
    Pivot { t: f64, row: usize, to_upper: bool },
    Unbounded,
}

#[derive(Clone)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
    tab: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    state: Vec<ColState>,
    d: Vec<f64>,
    dual_tol: f64,
    params: SimplexParams,
    pub pivots: u64,
    since_reinvert: usize,
    scratch: Vec<(usize, f64)>,
}

impl Simplex {
    /// Builds the engine for `model` with integrality ignored.
    pub fn new(model: &MixedIntegerModel, params: SimplexParams) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let ncols = n + m;
        let mut cost = vec![0.0; ncols];
        for &(v, c) in &model.objective.terms {
            cost[v.0] += c;
        }
        let mut lo = Vec::with_capacity(ncols);
        let mut hi = Vec::with_capacity(ncols);
        for v in &model.variables {
            lo.push(v.lower);
            hi.push(v.upper);
        }
        let rows: Vec<Vec<(usize, f64)>> = model
            .constraints
            .iter()
            .map(|c| c.coeffs.iter().map(|&(v, a)| (v.0, a)).collect())
            .collect();
        for c in &model.constraints {
            let (l, h) = match c.sense {
                ConstraintSense::Le => (f64::NEG_INFINITY, c.rhs),
                ConstraintSense::Ge => (c.rhs, f64::INFINITY),
                ConstraintSense::Eq => (c.rhs, c.rhs),
            };
            lo.push(l);
            hi.push(h);
        }
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let mut s = Self {
            m,
            n,
            ncols,
            rows,
            tab: vec![0.0; m * ncols],
            cost,
            lo,
            hi,
            x: vec![0.0; ncols],
            basis: (n..ncols).collect(),
            row_of: vec![NONE; ncols],
            state: vec![ColState::Lower; ncols],
            d: vec![0.0; ncols],
            dual_tol: 1e-9 * cmax,
            params,
            pivots: 0,
            since_reinvert: 0,
            scratch: Vec::new(),
        };
        for j in 0..n {
            s.state[j] = s.resting_state(j);
            s.x[j] = s.resting_value(j);
        }
        for i in 0..m {
            s.row_of[n + i] = i;
            s.state[n + i] = ColState::Basic;
        }
        s.reinvert();
        s
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        self.cost[..self.n]
            .iter()
            .zip(&self.x[..self.n])
            .map(|(c, x)| c * x)
            .sum()
    }

    fn resting_state(&self, j: usize) -> ColState {
        if self.lo[j].is_finite() {
            ColState::Lower
        } else if self.hi[j].is_finite() {
            ColState::Upper
        } else {
            ColState::Free
        }
    }

    fn resting_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::Lower => self.lo[j],
            ColState::Upper => self.hi[j],
            ColState::Free => 0.0,
            ColState::Basic => self.x[j],
        }
    }

    /// Changes a structural column's bounds, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        if self.lo[j] == lo && self.hi[j] == hi {
            return;
        }
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.state[j] == ColState::Basic {
            return;
        }
        let old = self.x[j];
        let keep_upper = self.state[j] == ColState::Upper && hi.is_finite();
        self.state[j] = if keep_upper {
            ColState::Upper
        } else {
            self.resting_state(j)
        };
        let new = match self.state[j] {
            ColState::Free => old,
            _ => self.resting_value(j),
        };
        let delta = new - old;
        if delta != 0.0 {
            self.x[j] = new;
            for i in 0..self.m {
                let t = self.tab[i * self.ncols + j];
                if t != 0.0 {
                    self.x[self.basis[i]] -= t * delta;
                }
            }
        }
    }

    fn infeasibility(&self, i: usize) -> f64 {
        let b = self.basis[i];
        let v = self.x[b];
        if v < self.lo[b] - PRIMAL_TOL * (1.0 + self.lo[b].abs()) {
            -1.0
        } else if v > self.hi[b] + PRIMAL_TOL * (1.0 + self.hi[b].abs()) {
            1.0
        } else {
            0.0
        }
    }

    fn can_increase(&self, j: usize) -> bool {
        match self.state[j] {
            ColState::Lower => self.hi[j] > self.lo[j],
            ColState::Free => true,
            _ => false,
        }
    }

    fn can_decrease(&self, j: usize) -> bool {
        match self.state[j] {
            ColState::Upper => self.lo[j] < self.hi[j],
            ColState::Free => true,
            _ => false,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn price(&self, dvec: &[f64], tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = tol;
        for j in 0..self.ncols {
            if self.state[j] == ColState::Basic {
                continue;
            }
            let dj = dvec[j];
            let dir = if dj < -tol && self.can_increase(j) {
                1.0
            } else if dj > tol && self.can_decrease(j) {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Step {
        let pivot_tol = self.params.pivot_tol;
        let mut cands: Vec<Candidate> = Vec::new();
        let mut t_relaxed = f64::INFINITY;
        for i in 0..self.m {
            let alpha = -self.tab[i * self.ncols + q] * dir;
            if alpha.abs() <= pivot_tol {
                continue;
            }
            let b = self.basis[i];
            let v = self.x[b];
            let (lo, hi) = (self.lo[b], self.hi[b]);
            let below = v < lo - PRIMAL_TOL * (1.0 + lo.abs());
            let above = v > hi + PRIMAL_TOL * (1.0 + hi.abs());
            let (bound, to_upper) = if alpha > 0.0 {
                if phase1 && below {
                    (lo, false)
                } else if phase1 && above {
                    continue;
                } else if hi.is_finite() {
                    (hi, true)
                } else {
                    continue;
                }
            } else if phase1 && above {
                (hi, true)
            } else if phase1 && below {
                continue;
            } else if lo.is_finite() {
                (lo, false)
            } else {
                continue;
            };
            let slack = HARRIS_TOL * (1.0 + bound.abs());
            let relaxed = if alpha > 0.0 {
                (bound + slack - v) / alpha
            } else {
                (bound - slack - v) / alpha
            };
            t_relaxed = t_relaxed.min(relaxed.max(0.0));
            cands.push(Candidate {
                row: i,
                to_upper,
                ratio: ((bound - v) / alpha).max(0.0),
                alpha,
            });
        }
        let range = self.hi[q] - self.lo[q];
        if range.is_finite() && range <= t_relaxed {
            return Step::Flip(range);
        }
        if cands.is_empty() {
            return Step::Unbounded;
        }
        let chosen = if bland {
            let tmin = cands.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.ratio <= tmin + 1e-12)
                .min_by_key(|c| self.basis[c.row])
        } else {
            cands
                .iter()
                .filter(|c| c.ratio <= t_relaxed)
                .max_by(|a, b| {
                    a.alpha
                        .abs()
                        .partial_cmp(&b.alpha.abs())
                        .unwrap()
                        .then(b.row.cmp(&a.row))
                })
        };
        match chosen {
            Some(c) => Step::Pivot {
                t: c.ratio,
                row: c.row,
                to_upper: c.to_upper,
            },
            None => {
                // Every ratio exceeded the relaxed bound; fall back to the
                // smallest exact ratio.
                let c = cands
                    .iter()
                    .min_by(|a, b| a.ratio.partial_cmp(&b.ratio).unwrap())
                    .unwrap();
                Step::Pivot {
                    t: c.ratio,
                    row: c.row,
                    to_upper: c.to_upper,
                }
            }
        }
    }

    fn move_entering(&mut self, q: usize, dir: f64, t: f64) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for i in 0..self.m {
            let tq = self.tab[i * self.ncols + q];
            if tq != 0.0 {
                self.x[self.basis[i]] -= tq * dir * t;
            }
        }
    }

    /// Gauss-Jordan step on the tableau only; leaves the normalized pivot
    /// row's nonzeros in `scratch`.
    fn eliminate(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let inv = 1.0 / self.tab[r * nc + q];
        self.scratch.clear();
        {
            let row = &mut self.tab[r * nc..(r + 1) * nc];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        self.scratch.push((j, *v));
                    }
                }
            }
            row[q] = 1.0;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let base = i * nc;
            for &(j, v) in &self.scratch {
                self.tab[base + j] -= f * v;
            }
            self.tab[base + q] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        self.eliminate(r, q);
        let f = self.d[q];
        if f != 0.0 {
            for &(j, v) in &self.scratch {
                self.d[j] -= f * v;
            }
        }
        self.d[q] = 0.0;

        let leaving = self.basis[r];
        self.row_of[leaving] = NONE;
        self.basis[r] = q;
        self.row_of[q] = r;
        self.state[q] = ColState::Basic;
        self.pivots += 1;
        self.since_reinvert += 1;
    }

    /// Rebuilds the tableau, basic values, and reduced costs from the
    /// original rows and the current basis. Structural columns that turn out
    /// to be dependent are swapped for logicals.
    pub fn reinvert(&mut self) {
        let (m, n, nc) = (self.m, self.n, self.ncols);
        self.tab.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                self.tab[i * nc + j] += a;
            }
            self.tab[i * nc + n + i] = -1.0;
        }
        let mut cols: Vec<usize> = self.basis.clone();
        // Logicals first: their columns are still unit vectors.
        cols.sort_by_key(|&c| (c < n, c));
        let mut assigned = vec![NONE; m];
        let mut dropped: Vec<usize> = Vec::new();
        for &c in &cols {
            let mut best = (0.0f64, NONE);
            for (i, a) in assigned.iter().enumerate() {
                if *a == NONE {
                    let v = self.tab[i * nc + c].abs();
                    if v > best.0 {
                        best = (v, i);
                    }
                }
            }
            if best.0 < 1e-11 {
                dropped.push(c);
                continue;
            }
            assigned[best.1] = c;
            self.eliminate(best.1, c);
        }
        for c in dropped {
            self.state[c] = self.resting_state(c);
            self.x[c] = match self.state[c] {
                ColState::Free => 0.0,
                _ => self.resting_value(c),
            };
            let r = (0..m)
                .filter(|&i| assigned[i] == NONE)
                .max_by(|&a, &b| {
                    self.tab[a * nc + n + a]
                        .abs()
                        .partial_cmp(&self.tab[b * nc + n + b].abs())
                        .unwrap()
                })
                .expect("an unassigned row remains");
            assigned[r] = n + r;
            self.eliminate(r, n + r);
        }
        for j in 0..nc {
            self.row_of[j] = NONE;
        }
        for (r, &c) in assigned.iter().enumerate() {
            self.basis[r] = c;
            self.row_of[c] = r;
            self.state[c] = ColState::Basic;
        }
        for j in 0..nc {
            if self.state[j] == ColState::Basic && self.row_of[j] == NONE {
                self.state[j] = self.resting_state(j);
                self.x[j] = self.resting_value(j);
            }
        }
        self.since_reinvert = 0;
        self.recompute_primal();
        self.recompute_duals();
    }

    fn recompute_primal(&mut self) {
        let nc = self.ncols;
        for i in 0..self.m {
            let mut s = 0.0;
            let row = &self.tab[i * nc..(i + 1) * nc];
            for (j, &t) in row.iter().enumerate() {
                if t != 0.0 && self.state[j] != ColState::Basic {
                    s += t * self.x[j];
                }
            }
            self.x[self.basis[i]] = -s;
        }
    }

    fn recompute_duals(&mut self) {
        let nc = self.ncols;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.tab[i * nc..(i + 1) * nc];
            for (j, &t) in row.iter().enumerate() {
                if t != 0.0 {
                    self.d[j] -= cb * t;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn phase1_duals(&self, sigma: &[(usize, f64)]) -> Vec<f64> {
        let nc = self.ncols;
        let mut d1 = vec![0.0; nc];
        for &(i, s) in sigma {
            let row = &self.tab[i * nc..(i + 1) * nc];
            for (j, &t) in row.iter().enumerate() {
                if t != 0.0 {
                    d1[j] -= s * t;
                }
            }
        }
        for i in 0..self.m {
            d1[self.basis[i]] = 0.0;
        }
        d1
    }

    /// Largest |a_i·x − s_i| over all rows, from the original coefficients.
    fn row_residual(&self) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let act: f64 = row.iter().map(|&(j, a)| a * self.x[j]).sum();
                (act - self.x[self.n + i]).abs() / (1.0 + act.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Optimizes from the current basis.
    pub fn solve(&mut self, deadline: Option<Instant>) -> LpStatus {
        let mut iterations: u64 = 0;
        let mut stalled = 0usize;
        let mut recoveries = 0usize;
        loop {
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert();
            }
            iterations += 1;
            if iterations > self.params.max_iterations {
                return LpStatus::IterationLimit;
            }
            if iterations.is_multiple_of(64) {
                if let Some(dl) = deadline {
                    if Instant::now() >= dl {
                        return LpStatus::TimeLimit;
                    }
                }
            }

            let sigma: Vec<(usize, f64)> = (0..self.m)
                .filter_map(|i| {
                    let s = self.infeasibility(i);
                    (s != 0.0).then_some((i, s))
                })
                .collect();
            let phase1 = !sigma.is_empty();
            let bland = stalled >= self.params.stall_threshold;

            let entering = if phase1 {
                let d1 = self.phase1_duals(&sigma);
                self.price(&d1, 1e-9, bland)
            } else {
                self.price(&self.d, self.dual_tol, bland)
            };

            let Some((q, dir)) = entering else {
                // Infeasibility is only trusted on a fresh factorization;
                // optimality only when residuals show no drift.
                let suspect = if phase1 {
                    self.since_reinvert > 0
                } else {
                    self.row_residual() > 1e-9
                };
                if suspect {
                    recoveries += 1;
                    if recoveries > 5 {
                        return LpStatus::NumericalFailure;
                    }
                    self.reinvert();
                    continue;
                }
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };

            match self.ratio_test(q, dir, phase1, bland) {
                Step::Flip(t) => {
                    self.move_entering(q, dir, t);
                    self.state[q] = if dir > 0.0 {
                        ColState::Upper
                    } else {
                        ColState::Lower
                    };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    stalled = 0;
                }
                Step::Pivot { t, row, to_upper } => {
                    let leaving = self.basis[row];
                    self.move_entering(q, dir, t);
                    self.pivot(row, q);
                    self.state[leaving] = if to_upper {
                        ColState::Upper
                    } else {
                        ColState::Lower
                    };
                    self.x[leaving] = if to_upper {
                        self.hi[leaving]
                    } else {
                        self.lo[leaving]
                    };
                    if t <= 1e-12 {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                }
                Step::Unbounded => {
                    if phase1 {
                        recoveries += 1;
                        if recoveries > 5 {
                            return LpStatus::NumericalFailure;
                        }
                        self.reinvert();
                        continue;
                    }
                    return LpStatus::Unbounded;
                }
            }
        }
    }
}
