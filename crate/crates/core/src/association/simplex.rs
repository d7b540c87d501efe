//! Dense-tableau two-phase simplex for `min cᵀx  s.t.  Ax = b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule (lowest-index entering column, lowest-index
//! leaving basic variable on ratio ties), so the method terminates on
//! degenerate problems and is fully deterministic. Only basic solutions are
//! returned.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLp {
    /// Row-major `m x n` constraint matrix.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl DenseLp {
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cols(&self) -> usize {
        self.c.len()
    }

    /// Default iteration budget: ten times the tableau dimension.
    pub fn default_iteration_limit(&self) -> usize {
        10 * (self.rows() + self.cols()).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    rows: usize,
    /// Columns allowed to enter the basis.
    allowed: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        let elim = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(elim);
        after.chunks_mut(w).for_each(elim);
        self.basis[pr] = pc;
    }

    /// Run Bland pivots until optimal. Returns the number of pivots.
    fn optimize(&mut self, budget: &mut usize, used: &mut usize) -> Result<()> {
        let obj = self.obj_row();
        loop {
            let entering = (0..self.allowed).find(|&j| self.at(obj, j) < -PIVOT_EPS);
            let Some(pc) = entering else { return Ok(()) };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match best {
                        None => true,
                        Some((r, _, bv)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && self.basis[i] < bv),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, pr, _)) = best else {
                return Err(Error::Internal("unbounded linear program".into()));
            };
            if *budget == 0 {
                return Err(Error::SolverStall { iterations: *used });
            }
            *budget -= 1;
            *used += 1;
            self.pivot(pr, pc);
        }
    }
}

pub fn solve(lp: &DenseLp) -> Result<LpSolution> {
    solve_with_limit(lp, lp.default_iteration_limit())
}

pub fn solve_with_limit(lp: &DenseLp, max_iterations: usize) -> Result<LpSolution> {
    let m = lp.rows();
    let n = lp.cols();
    if lp.b.len() != m || lp.a.iter().any(|r| r.len() != n) {
        return Err(crate::error::dims("LP rows, rhs and cost vector disagree"));
    }
    if m == 0 {
        if lp.c.iter().any(|&c| c < 0.0) {
            return Err(Error::Internal("unbounded linear program".into()));
        }
        return Ok(LpSolution { x: vec![0.0; n], objective: 0.0, iterations: 0 });
    }

    let width = n + m + 1;
    let mut data = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let sign = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[i * width + j] = sign * lp.a[i][j];
        }
        data[i * width + n + i] = 1.0;
        data[i * width + width - 1] = sign * lp.b[i];
    }
    // Phase one: minimise the sum of artificials.
    for j in 0..n {
        data[m * width + j] = -(0..m).map(|i| data[i * width + j]).sum::<f64>();
    }
    data[m * width + width - 1] = -(0..m).map(|i| data[i * width + width - 1]).sum::<f64>();

    let mut t = Tableau { width, data, basis: (n..n + m).collect(), rows: m, allowed: n };
    let mut budget = max_iterations;
    let mut used = 0;
    t.optimize(&mut budget, &mut used)?;
    if -t.rhs(m) > FEAS_EPS {
        return Err(Error::Infeasible);
    }

    // Drive remaining artificials out of the basis; rows where that is
    // impossible are redundant and dropped.
    let mut i = 0;
    while i < t.rows {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.at(i, j).abs() > PIVOT_EPS) {
                t.pivot(i, j);
                i += 1;
            } else {
                let w = t.width;
                t.data.drain(i * w..(i + 1) * w);
                t.basis.remove(i);
                t.rows -= 1;
            }
        } else {
            i += 1;
        }
    }

    // Phase two objective row in canonical form.
    let obj = t.rows;
    let w = t.width;
    for j in 0..w {
        t.data[obj * w + j] = if j < n { lp.c[j] } else { 0.0 };
    }
    for r in 0..t.rows {
        let cb = lp.c[t.basis[r]];
        if cb != 0.0 {
            for j in 0..w {
                t.data[obj * w + j] -= cb * t.data[r * w + j];
            }
        }
    }
    t.optimize(&mut budget, &mut used)?;

    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, objective, iterations: used })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_problem() {
        // min -x - y  s.t. x + s1 = 2, y + s2 = 3, x + y + s3 = 4
        let lp = DenseLp {
            a: vec![vec![1.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0, 0.0, 1.0]],
            b: vec![2.0, 3.0, 4.0],
            c: vec![-1.0, -1.0, 0.0, 0.0, 0.0],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective + 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let lp = DenseLp { a: vec![vec![1.0, 1.0], vec![1.0, 1.0]], b: vec![1.0, 2.0], c: vec![1.0, 1.0] };
        assert!(matches!(solve(&lp), Err(Error::Infeasible)));
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let lp = DenseLp { a: vec![vec![1.0, 1.0], vec![2.0, 2.0]], b: vec![1.0, 2.0], c: vec![3.0, 1.0] };
        let s = solve(&lp).unwrap();
        assert_eq!(s.x, vec![0.0, 1.0]);
    }

    #[test]
    fn stall_reported() {
        let lp = DenseLp { a: vec![vec![1.0, 1.0]], b: vec![1.0], c: vec![1.0, -1.0] };
        assert!(matches!(solve_with_limit(&lp, 0), Err(Error::SolverStall { .. })));
    }

    #[test]
    fn negative_rhs_row_flipped() {
        let lp = DenseLp { a: vec![vec![-1.0, -1.0]], b: vec![-1.0], c: vec![2.0, 1.0] };
        let s = solve(&lp).unwrap();
        assert_eq!(s.x, vec![0.0, 1.0]);
        assert_eq!(s.objective, 1.0);
    }
}
