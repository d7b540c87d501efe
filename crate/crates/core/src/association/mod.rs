//! Association as a linear program over local hypotheses.
//!
//! Every hypothesis is one variable. Each real target contributes an equality
//! row (its hypotheses sum to one) and each real measurement contributes an
//! equality row (the hypotheses using it sum to one). The 0-1 version is the
//! exact multiple-hypothesis problem; dropping integrality gives the
//! randomized association whose optimum is a probability per hypothesis.

mod branch_bound;
mod init;
pub mod simplex;

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::hypothesis::LocalHypothesis;
use simplex::DenseLp;

pub use branch_bound::{solve_ip, solve_ip_with_budget, DEFAULT_NODE_BUDGET};
pub use init::{track_init_lp, InitCost, InitOptions};

/// Tolerance for constraint residuals and integrality.
pub const FEAS_TOL: f64 = 1e-8;
const INTEGRAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationProblem {
    pub hypotheses: Vec<LocalHypothesis>,
    pub num_targets: usize,
    pub num_models: usize,
    pub meas_counts: Vec<usize>,
}

impl AssociationProblem {
    pub fn new(
        hypotheses: Vec<LocalHypothesis>,
        num_targets: usize,
        num_models: usize,
        meas_counts: Vec<usize>,
    ) -> Result<Self> {
        let n = meas_counts.len();
        if n == 0 {
            return Err(invalid("window length must be at least one"));
        }
        for (k, h) in hypotheses.iter().enumerate() {
            if h.meas.len() != n || h.models.len() != n {
                return Err(invalid(format!("hypothesis {k} has the wrong window length")));
            }
            if h.target > num_targets {
                return Err(invalid(format!("hypothesis {k} names unknown target {}", h.target)));
            }
            if h.models.iter().any(|&s| s == 0 || s > num_models) {
                return Err(invalid(format!("hypothesis {k} has a model index out of range")));
            }
            if h.meas.iter().zip(&meas_counts).any(|(&r, &c)| r > c) {
                return Err(invalid(format!("hypothesis {k} has a measurement index out of range")));
            }
            if !h.cost.is_finite() {
                return Err(invalid(format!("hypothesis {k} has a non-finite cost")));
            }
        }
        Ok(Self { hypotheses, num_targets, num_models, meas_counts })
    }

    pub fn window(&self) -> usize {
        self.meas_counts.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowLabel {
    Target(usize),
    /// Scan position within the window (0-based) and 1-based measurement index.
    Measurement {
        scan: usize,
        index: usize,
    },
}

/// Sparse 0/1 equality system with unit right-hand sides.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationLp {
    pub costs: Vec<f64>,
    pub rows: Vec<Vec<usize>>,
    pub labels: Vec<RowLabel>,
}

impl AssociationLp {
    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn to_dense(&self) -> DenseLp {
        let n = self.num_vars();
        let a = self
            .rows
            .iter()
            .map(|cols| {
                let mut row = vec![0.0; n];
                for &j in cols {
                    row[j] = 1.0;
                }
                row
            })
            .collect();
        DenseLp { a, b: vec![1.0; self.rows.len()], c: self.costs.clone() }
    }

    /// Plain-text tableau: a cost header line, then one `coefficients = rhs`
    /// line per constraint.
    pub fn dump(&self) -> String {
        let dense = self.to_dense();
        let mut out = String::new();
        let _ = writeln!(out, "# vars {} rows {}", self.num_vars(), self.rows.len());
        let costs: Vec<String> = self.costs.iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(out, "costs {}", costs.join(" "));
        for (row, label) in dense.a.iter().zip(&self.labels) {
            let coeffs: Vec<String> = row.iter().map(|v| format!("{}", *v as u8)).collect();
            let tag = match label {
                RowLabel::Target(t) => format!("target {t}"),
                RowLabel::Measurement { scan, index } => format!("meas {scan}:{index}"),
            };
            let _ = writeln!(out, "{} = 1 # {tag}", coeffs.join(" "));
        }
        out
    }

    /// Read back a tableau written by [`dump`](Self::dump).
    pub fn parse_dump(text: &str) -> Result<DenseLp> {
        let mut c = None;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("costs") {
                let v: std::result::Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
                c = Some(v.map_err(|e| invalid(format!("bad cost: {e}")))?);
                continue;
            }
            let (lhs, rhs) = line.split_once('=').ok_or_else(|| invalid(format!("bad row: {line}")))?;
            let row: std::result::Result<Vec<f64>, _> = lhs.split_whitespace().map(str::parse).collect();
            a.push(row.map_err(|e| invalid(format!("bad coefficient: {e}")))?);
            b.push(rhs.trim().parse().map_err(|e| invalid(format!("bad rhs: {e}")))?);
        }
        let c = c.ok_or_else(|| invalid("missing cost header"))?;
        Ok(DenseLp { a, b, c })
    }
}

/// Constraint system of the relaxed problem.
pub fn build_lp(problem: &AssociationProblem) -> Result<AssociationLp> {
    let t = problem.num_targets;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); t];
    let mut labels: Vec<RowLabel> = (1..=t).map(RowLabel::Target).collect();
    let mut offsets = Vec::with_capacity(problem.window());
    for (scan, &count) in problem.meas_counts.iter().enumerate() {
        offsets.push(rows.len());
        for index in 1..=count {
            rows.push(Vec::new());
            labels.push(RowLabel::Measurement { scan, index });
        }
    }
    for (j, h) in problem.hypotheses.iter().enumerate() {
        if h.target > 0 {
            rows[h.target - 1].push(j);
        }
        for (scan, &r) in h.meas.iter().enumerate() {
            if r > 0 {
                rows[offsets[scan] + r - 1].push(j);
            }
        }
    }
    for (row, label) in rows.iter().zip(&labels) {
        if row.is_empty() {
            return Err(match *label {
                RowLabel::Target(t) => invalid(format!("target {t} has no hypothesis")),
                RowLabel::Measurement { scan, index } => Error::Uncovered { scan, measurement: index },
            });
        }
    }
    Ok(AssociationLp { costs: problem.hypotheses.iter().map(|h| h.cost).collect(), rows, labels })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationSolution {
    pub probs: Vec<f64>,
    pub objective: f64,
    pub is_integral: bool,
    /// False only when branch-and-bound ran out of nodes.
    pub optimal: bool,
    pub iterations: usize,
}

impl AssociationSolution {
    /// Largest equality-constraint violation.
    pub fn max_residual(&self, lp: &AssociationLp) -> f64 {
        lp.rows.iter().map(|cols| (cols.iter().map(|&j| self.probs[j]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn is_integral(x: &[f64]) -> bool {
    x.iter().all(|&v| v.abs() <= INTEGRAL_TOL || (v - 1.0).abs() <= INTEGRAL_TOL)
}

/// Outcome of fixing variables and propagating rows with a single free column.
pub(crate) struct Reduced {
    pub(crate) dense: DenseLp,
    pub(crate) free: Vec<usize>,
    pub(crate) fixed: Vec<Option<bool>>,
}

/// Apply `fixings`, then repeatedly fix the lone free variable of any row.
/// Returns `Err(Infeasible)` when a row can no longer be satisfied.
pub(crate) fn reduce(lp: &AssociationLp, fixings: &[Option<bool>]) -> Result<Reduced> {
    let n = lp.num_vars();
    let mut fixed = fixings.to_vec();
    let mut active = vec![true; lp.rows.len()];
    loop {
        let mut changed = false;
        for (i, cols) in lp.rows.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let ones = cols.iter().filter(|&&j| fixed[j] == Some(true)).count();
            let rhs = 1.0 - ones as f64;
            let free: Vec<usize> = cols.iter().copied().filter(|&j| fixed[j].is_none()).collect();
            if rhs < -0.5 {
                return Err(Error::Infeasible);
            }
            match free.len() {
                0 => {
                    if rhs > 0.5 {
                        return Err(Error::Infeasible);
                    }
                    active[i] = false;
                }
                1 => {
                    fixed[free[0]] = Some(rhs > 0.5);
                    active[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        pos[j] = k;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, cols) in lp.rows.iter().enumerate() {
        if !active[i] {
            continue;
        }
        let ones = cols.iter().filter(|&&j| fixed[j] == Some(true)).count();
        let mut row = vec![0.0; free.len()];
        for &j in cols {
            if pos[j] != usize::MAX {
                row[pos[j]] = 1.0;
            }
        }
        a.push(row);
        b.push(1.0 - ones as f64);
    }
    let c = free.iter().map(|&j| lp.costs[j]).collect();
    Ok(Reduced { dense: DenseLp { a, b, c }, free, fixed })
}

/// Relaxation with the given fixings; returns the full-length solution.
pub(crate) fn solve_relaxation(lp: &AssociationLp, fixings: &[Option<bool>]) -> Result<(Vec<f64>, usize)> {
    let red = reduce(lp, fixings)?;
    let sol = simplex::solve(&red.dense)?;
    let mut x: Vec<f64> = red.fixed.iter().map(|f| if *f == Some(true) { 1.0 } else { 0.0 }).collect();
    for (k, &j) in red.free.iter().enumerate() {
        x[j] = sol.x[k].clamp(0.0, 1.0);
    }
    Ok((x, sol.iterations))
}

fn objective(lp: &AssociationLp, x: &[f64]) -> f64 {
    x.iter().zip(&lp.costs).map(|(a, c)| a * c).sum()
}

/// Optimal basic solution of the relaxed problem.
pub fn solve_lp(lp: &AssociationLp) -> Result<AssociationSolution> {
    let (probs, iterations) = solve_relaxation(lp, &vec![None; lp.num_vars()])?;
    let sol = AssociationSolution {
        objective: objective(lp, &probs),
        is_integral: is_integral(&probs),
        optimal: true,
        iterations,
        probs,
    };
    let res = sol.max_residual(lp);
    if res > FEAS_TOL {
        return Err(Error::Internal(format!("constraint residual {res:e} after simplex")));
    }
    Ok(sol)
}

/// First-scan association and model probabilities per target.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// `assoc[τ-1][r]`, `r = 0..=R_1`; column 0 is the dummy measurement.
    pub assoc: Vec<Vec<f64>>,
    /// `model[τ-1][s-1]`.
    pub model: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn num_targets(&self) -> usize {
        self.assoc.len()
    }

    /// Probability that measurement `r` of the first scan came from no target.
    pub fn clutter_prob(&self, r: usize) -> f64 {
        1.0 - self.assoc.iter().map(|row| row[r]).sum::<f64>()
    }
}

pub fn marginals(problem: &AssociationProblem, solution: &AssociationSolution) -> Marginals {
    let t = problem.num_targets;
    let r1 = problem.meas_counts[0];
    let mut assoc = vec![vec![0.0; r1 + 1]; t];
    let mut model = vec![vec![0.0; problem.num_models]; t];
    for (h, &p) in problem.hypotheses.iter().zip(&solution.probs) {
        if h.target == 0 || p == 0.0 {
            continue;
        }
        assoc[h.target - 1][h.meas[0]] += p;
        model[h.target - 1][h.models[0] - 1] += p;
    }
    Marginals { assoc, model }
}

/// Sufficient condition under which the relaxation and the 0-1 problem share
/// their optimum: each target's selected hypothesis is its cheapest one and
/// every dummy-target hypothesis is free.
pub fn check_prop2(problem: &AssociationProblem, candidate: &AssociationSolution) -> bool {
    if !is_integral(&candidate.probs) {
        return false;
    }
    let mut best = vec![f64::INFINITY; problem.num_targets];
    for h in &problem.hypotheses {
        if h.target == 0 {
            if h.cost != 0.0 {
                return false;
            }
        } else {
            best[h.target - 1] = best[h.target - 1].min(h.cost);
        }
    }
    let mut selected = vec![0usize; problem.num_targets];
    for (h, &p) in problem.hypotheses.iter().zip(&candidate.probs) {
        if h.target > 0 && p > 0.5 {
            selected[h.target - 1] += 1;
            if h.cost > best[h.target - 1] {
                return false;
            }
        }
    }
    selected.iter().all(|&c| c == 1)
}
