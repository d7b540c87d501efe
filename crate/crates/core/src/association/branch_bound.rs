//! Depth-first branch-and-bound for the 0-1 association problem.

use super::{is_integral, objective, solve_relaxation, AssociationLp, AssociationSolution};
use crate::error::{Error, Result};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

pub fn solve_ip(lp: &AssociationLp) -> Result<AssociationSolution> {
    solve_ip_with_budget(lp, DEFAULT_NODE_BUDGET)
}

/// Exact 0-1 optimum. Branches on the most fractional variable and explores
/// its 1-branch first. When the node budget runs out the best incumbent is
/// returned with `optimal == false`.
pub fn solve_ip_with_budget(lp: &AssociationLp, node_budget: usize) -> Result<AssociationSolution> {
    let n = lp.num_vars();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut stack: Vec<Vec<Option<bool>>> = vec![vec![None; n]];
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut optimal = true;

    while let Some(fix) = stack.pop() {
        if nodes >= node_budget {
            optimal = false;
            break;
        }
        nodes += 1;
        let (x, it) = match solve_relaxation(lp, &fix) {
            Ok(v) => v,
            Err(Error::Infeasible) => continue,
            Err(e) => return Err(e),
        };
        iterations += it;
        let bound = objective(lp, &x);
        if let Some((best, _)) = &incumbent {
            if bound >= *best - 1e-9 {
                continue;
            }
        }
        match most_fractional(&x) {
            None => {
                let rounded: Vec<f64> = x.iter().map(|v| v.round()).collect();
                incumbent = Some((objective(lp, &rounded), rounded));
            }
            Some(j) => {
                let mut zero = fix.clone();
                zero[j] = Some(false);
                let mut one = fix;
                one[j] = Some(true);
                stack.push(zero);
                stack.push(one);
            }
        }
    }

    let (objective, probs) = incumbent.ok_or(Error::Infeasible)?;
    Ok(AssociationSolution { is_integral: is_integral(&probs), probs, objective, optimal, iterations })
}

/// Index of the variable closest to 0.5, lowest index on ties; `None` when
/// the point is integral.
fn most_fractional(x: &[f64]) -> Option<usize> {
    if is_integral(x) {
        return None;
    }
    let mut best: Option<(f64, usize)> = None;
    for (j, &v) in x.iter().enumerate() {
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac > 1e-9 && best.is_none_or(|(f, _)| frac > f + 1e-12) {
            best = Some((frac, j));
        }
    }
    best.map(|(_, j)| j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_fractional_picks_closest_to_half() {
        assert_eq!(most_fractional(&[0.0, 0.3, 0.5, 0.5, 1.0]), Some(2));
        assert_eq!(most_fractional(&[0.0, 1.0]), None);
    }

    #[test]
    fn zero_budget_reports_non_optimal() {
        let lp =
            AssociationLp { costs: vec![1.0], rows: vec![vec![0]], labels: vec![super::super::RowLabel::Target(1)] };
        assert!(matches!(solve_ip_with_budget(&lp, 0), Err(Error::Infeasible)));
        let s = solve_ip_with_budget(&lp, 1).unwrap();
        assert!(s.optimal);
        assert_eq!(s.probs, vec![1.0]);
    }
}
