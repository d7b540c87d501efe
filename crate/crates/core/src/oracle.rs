//! Slow reference implementations used to cross-check the production code.
//!
//! Nothing here shares code with the solvers it checks: LPs are solved by
//! enumerating basic solutions, 0-1 problems by exact-cover search, OSPA by
//! permutation search and the random-coefficient recursions by sampling.

use nalgebra::SVD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::association::simplex::DenseLp;
use crate::association::{AssociationLp, AssociationProblem};
use crate::dynamics::MeasVec;
use crate::evaluation::OspaParams;
use crate::hypothesis::LocalHypothesis;
use crate::linalg::{Mat, Vector};
use crate::rcmkf::{self, Belief, DiscreteMatrixDistribution, Realization};

const RANK_TOL: f64 = 1e-9;
/// Largest column count accepted by [`lp_by_vertices`].
pub const MAX_VERTEX_COLS: usize = 22;

fn rank(m: &Mat) -> usize {
    if m.is_empty() {
        return 0;
    }
    SVD::new(m.clone(), false, false).rank(RANK_TOL)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if idx[i] < n - r + i {
            idx[i] += 1;
            for j in i + 1..r {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum of `cᵀx` over `{Ax = b, x ≥ 0}` found by visiting every basic
/// feasible solution. `None` when infeasible or too large to enumerate.
pub fn lp_by_vertices(lp: &DenseLp) -> Option<(Vec<f64>, f64)> {
    let (m, n) = (lp.rows(), lp.cols());
    if n == 0 || n > MAX_VERTEX_COLS {
        return None;
    }
    let a = Mat::from_fn(m, n, |i, j| lp.a[i][j]);
    let b = Vector::from_column_slice(&lp.b);
    let r = rank(&a);
    if r == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let ab = a.select_columns(idx.iter());
        let svd = SVD::new(ab.clone(), true, true);
        if svd.rank(RANK_TOL) == r {
            if let Ok(xb) = svd.solve(&b, RANK_TOL) {
                let resid = (&ab * &xb - &b).amax();
                if resid <= 1e-9 && xb.iter().all(|&v| v >= -1e-9) {
                    let mut x = vec![0.0; n];
                    for (k, &j) in idx.iter().enumerate() {
                        x[j] = xb[k].max(0.0);
                    }
                    let obj: f64 = x.iter().zip(&lp.c).map(|(x, c)| x * c).sum();
                    if best.as_ref().is_none_or(|(_, o)| obj < *o) {
                        best = Some((x, obj));
                    }
                }
            }
        }
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    best
}

/// Cheapest 0-1 vector covering every row exactly once, by exact-cover search.
pub fn ip_exhaustive(lp: &AssociationLp) -> Option<(Vec<f64>, f64)> {
    let n = lp.num_vars();
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in lp.rows.iter().enumerate() {
        for &j in row {
            rows_of[j].push(i);
        }
    }
    let mut covered = vec![false; lp.rows.len()];
    let mut chosen = Vec::new();
    let mut best: Option<(Vec<usize>, f64)> = None;
    fn search(
        lp: &AssociationLp,
        rows_of: &[Vec<usize>],
        covered: &mut [bool],
        chosen: &mut Vec<usize>,
        cost: f64,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let Some(row) = covered.iter().position(|c| !c) else {
            if best.as_ref().is_none_or(|(_, b)| cost < *b) {
                *best = Some((chosen.clone(), cost));
            }
            return;
        };
        for &j in &lp.rows[row] {
            if rows_of[j].iter().any(|&i| covered[i]) {
                continue;
            }
            for &i in &rows_of[j] {
                covered[i] = true;
            }
            chosen.push(j);
            search(lp, rows_of, covered, chosen, cost + lp.costs[j], best);
            chosen.pop();
            for &i in &rows_of[j] {
                covered[i] = false;
            }
        }
    }
    search(lp, &rows_of, &mut covered, &mut chosen, 0.0, &mut best);
    best.map(|(sel, cost)| {
        let mut x = vec![0.0; n];
        for j in sel {
            x[j] = 1.0;
        }
        (x, cost)
    })
}

/// OSPA by trying every injection of the smaller set into the larger one.
pub fn ospa_brute_force(x: &[MeasVec], y: &[MeasVec], params: &OspaParams) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let (p, c) = (params.p, params.c);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |perm| {
        let s: f64 = (0..m).map(|i| (small[i] - large[perm[i]]).norm().min(c).powf(p)).sum();
        best = best.min(s);
    });
    ((best + c.powf(p) * (n - m) as f64) / n as f64).powf(1.0 / p)
}

fn permute(v: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Minimum-cost perfect matching by permutation search.
pub fn assignment_brute_force(cost: &Mat) -> f64 {
    let n = cost.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = if n == 0 { 0.0 } else { f64::INFINITY };
    permute(&mut perm, 0, &mut |perm| {
        best = best.min((0..n).map(|i| cost[(i, perm[i])]).sum());
    });
    best
}

/// One textbook Kalman predict-update cycle with an LU-based inverse.
pub fn kf_reference(x: &Vector, p: &Mat, f: &Mat, q: &Mat, h: &Mat, r: &Mat, z: &Vector) -> (Vector, Mat) {
    let xp = f * x;
    let pp = f * p * f.transpose() + q;
    let s = h * &pp * h.transpose() + r;
    let s_inv = s.lu().try_inverse().expect("innovation covariance is invertible");
    let k = &pp * h.transpose() * s_inv;
    let xu = &xp + &k * (z - h * &xp);
    let n = x.len();
    let pu = (Mat::identity(n, n) - &k * h) * &pp;
    (xu, pu)
}

/// Shape of a random association instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceShape {
    pub targets: usize,
    pub scans: usize,
    pub max_meas: usize,
    pub hyps_per_target: usize,
    pub models: usize,
    pub cost_lo: f64,
    pub cost_hi: f64,
}

impl InstanceShape {
    pub fn single_scan() -> Self {
        Self { targets: 3, scans: 1, max_meas: 4, hyps_per_target: 4, models: 2, cost_lo: -6.0, cost_hi: 2.0 }
    }

    pub fn two_scan() -> Self {
        Self { targets: 3, scans: 2, max_meas: 3, hyps_per_target: 4, models: 1, cost_lo: -8.0, cost_hi: 1.0 }
    }
}

fn hyp(target: usize, meas: Vec<usize>, models: Vec<usize>, cost: f64) -> LocalHypothesis {
    LocalHypothesis { target, models, meas, cost, likelihood_log: -cost }
}

fn dummies(counts: &[usize]) -> Vec<LocalHypothesis> {
    let n = counts.len();
    let mut out = Vec::new();
    for (s, &c) in counts.iter().enumerate() {
        for r in 1..=c {
            let mut meas = vec![0; n];
            meas[s] = r;
            out.push(hyp(0, meas, vec![1; n], 0.0));
        }
    }
    out
}

/// Random instance: each target has a full-miss hypothesis and
/// `hyps_per_target - 1` random ones, and every measurement has a clutter
/// (dummy-target) hypothesis of cost zero.
pub fn random_problem(rng: &mut ChaCha8Rng, shape: &InstanceShape) -> AssociationProblem {
    let n = shape.scans;
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=shape.max_meas)).collect();
    let mut hyps = Vec::new();
    for t in 1..=shape.targets {
        for k in 0..shape.hyps_per_target {
            let meas: Vec<usize> =
                if k == 0 { vec![0; n] } else { counts.iter().map(|&c| rng.random_range(0..=c)).collect() };
            let models = (0..n).map(|_| rng.random_range(1..=shape.models)).collect();
            hyps.push(hyp(t, meas, models, rng.random_range(shape.cost_lo..shape.cost_hi)));
        }
    }
    hyps.extend(dummies(&counts));
    AssociationProblem::new(hyps, shape.targets, shape.models, counts).expect("generated instance is valid")
}

/// Random instance in which every target's cheapest hypothesis is unique and
/// the cheapest hypotheses use pairwise distinct measurements. Returns the
/// problem and the 0-1 vector that picks those hypotheses plus clutter for
/// every remaining measurement.
pub fn prop2_problem(rng: &mut ChaCha8Rng, shape: &InstanceShape) -> (AssociationProblem, Vec<f64>) {
    let n = shape.scans;
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=shape.max_meas)).collect();
    let mut used: Vec<Vec<bool>> = counts.iter().map(|&c| vec![false; c + 1]).collect();
    let mut hyps = Vec::new();
    let mut selected = Vec::new();
    for t in 1..=shape.targets {
        let mut meas = vec![0; n];
        for (s, &c) in counts.iter().enumerate() {
            let free: Vec<usize> = (1..=c).filter(|&r| !used[s][r]).collect();
            if !free.is_empty() && rng.random_bool(0.7) {
                let r = free[rng.random_range(0..free.len())];
                used[s][r] = true;
                meas[s] = r;
            }
        }
        let mut own: Vec<LocalHypothesis> = (1..shape.hyps_per_target)
            .map(|_| {
                let m = counts.iter().map(|&c| rng.random_range(0..=c)).collect();
                let models = (0..n).map(|_| rng.random_range(1..=shape.models)).collect();
                hyp(t, m, models, rng.random_range(shape.cost_lo..shape.cost_hi))
            })
            .collect();
        own.push(hyp(t, vec![0; n], vec![1; n], rng.random_range(shape.cost_lo..shape.cost_hi)));
        let floor = own.iter().map(|h| h.cost).fold(f64::INFINITY, f64::min);
        let models = (0..n).map(|_| rng.random_range(1..=shape.models)).collect();
        let best = hyp(t, meas, models, floor - rng.random_range(0.1..2.0));
        let at = rng.random_range(0..=own.len());
        own.insert(at, best);
        selected.push(hyps.len() + at);
        hyps.extend(own);
    }
    let first_dummy = hyps.len();
    hyps.extend(dummies(&counts));
    let mut delta = vec![0.0; hyps.len()];
    for j in selected {
        delta[j] = 1.0;
    }
    let mut k = first_dummy;
    for (s, &c) in counts.iter().enumerate() {
        for &u in &used[s][1..=c] {
            if !u {
                delta[k] = 1.0;
            }
            k += 1;
        }
    }
    let problem =
        AssociationProblem::new(hyps, shape.targets, shape.models, counts).expect("generated instance is valid");
    (problem, delta)
}

/// Result of [`moment_check`].
#[derive(Clone, Debug)]
pub struct MomentCheck {
    /// Largest `|sample − recursion| / standard error` over steps, for the mean
    /// and the second moment.
    pub max_z: f64,
    /// Largest `|mean ṽ| / (σ/√M)` of the effective process noise
    /// `ṽ = w + (F − F̄)x` over steps.
    pub resid_mean_z: f64,
    /// Largest relative error of the effective process covariance.
    pub q_rel_err: f64,
    /// Relative error of the effective measurement covariance at the last step.
    pub r_rel_err: f64,
}

/// Sample a scalar system whose transition and measurement coefficients are
/// drawn from two-point distributions and compare the sample moments with the
/// deterministic recursions of [`rcmkf`].
pub fn moment_check(samples: usize, steps: usize, seed: u64) -> MomentCheck {
    let s = |v: f64| Mat::from_element(1, 1, v);
    let f_dist = DiscreteMatrixDistribution::new(vec![
        Realization { matrix: s(1.05), noise_cov: s(0.2), probability: 0.3 },
        Realization { matrix: s(0.7), noise_cov: s(0.05), probability: 0.7 },
    ])
    .expect("valid distribution");
    let h_dist = DiscreteMatrixDistribution::new(vec![
        Realization { matrix: s(1.0), noise_cov: s(0.5), probability: 0.8 },
        Realization { matrix: s(0.0), noise_cov: s(2.0), probability: 0.2 },
    ])
    .expect("valid distribution");
    let (x0_mean, x0_var) = (1.5f64, 0.4f64);
    let mut rng = crate::simulation::rng_for(seed, 0);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |rng: &mut ChaCha8Rng, d: &DiscreteMatrixDistribution| -> (f64, f64) {
        let u: f64 = rng.random();
        let rs = d.realizations();
        let pick = if u < rs[0].probability { &rs[0] } else { &rs[1] };
        (pick.matrix[(0, 0)], pick.noise_cov[(0, 0)])
    };

    let mut xs: Vec<f64> = (0..samples).map(|_| x0_mean + x0_var.sqrt() * std.sample(&mut rng)).collect();
    let mut belief = Belief::new(Vector::from_element(1, x0_mean), s(x0_var)).expect("scalar belief");
    let f_bar = rcmkf::mean_matrix(&f_dist)[(0, 0)];
    let (mut max_z, mut q_rel_err, mut resid_mean_z) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..steps {
        let q_tilde = rcmkf::effective_process_cov(&f_dist, &belief.second_moment).expect("dims")[(0, 0)];
        let (mut resid1, mut resid2) = (0.0, 0.0);
        for x in xs.iter_mut() {
            let (f, q) = draw(&mut rng, &f_dist);
            let next = f * *x + q.sqrt() * std.sample(&mut rng);
            let v = next - f_bar * *x;
            resid1 += v;
            resid2 += v * v;
            *x = next;
        }
        let m = samples as f64;
        let (mean_v, second_v) = (resid1 / m, resid2 / m);
        let sd_v = (second_v - mean_v * mean_v).max(0.0).sqrt();
        resid_mean_z = resid_mean_z.max(mean_v.abs() / (sd_v / m.sqrt()));
        q_rel_err = q_rel_err.max((second_v - q_tilde).abs() / q_tilde);
        belief = rcmkf::predict(&belief, &f_dist).expect("dims");
        let n = samples as f64;
        let m1 = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let se1 = ((xs.iter().map(|x| (x - m1).powi(2)).sum::<f64>() / (n - 1.0)) / n).sqrt();
        let se2 = ((xs.iter().map(|x| (x * x - m2).powi(2)).sum::<f64>() / (n - 1.0)) / n).sqrt();
        max_z = max_z.max((m1 - belief.mean[0]).abs() / se1).max((m2 - belief.second_moment[(0, 0)]).abs() / se2);
    }
    let h_bar = rcmkf::mean_matrix(&h_dist)[(0, 0)];
    let r_tilde = rcmkf::effective_meas_cov(&h_dist, &belief.second_moment).expect("dims")[(0, 0)];
    let mut resid2 = 0.0;
    for &x in &xs {
        let (h, r) = draw(&mut rng, &h_dist);
        let z = h * x + r.sqrt() * std.sample(&mut rng);
        resid2 += (z - h_bar * x).powi(2);
    }
    let r_rel_err = (resid2 / samples as f64 - r_tilde).abs() / r_tilde;
    MomentCheck { max_z, resid_mean_z, q_rel_err, r_rel_err }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::build_lp;
    use crate::simulation::rng_for;
    use nalgebra::Vector2;

    #[test]
    fn vertices_of_a_tiny_lp() {
        // min -x0 - 2x1 subject to x0 + x1 + x2 = 1.
        let lp = DenseLp { a: vec![vec![1.0, 1.0, 1.0]], b: vec![1.0], c: vec![-1.0, -2.0, 0.0] };
        let (x, obj) = lp_by_vertices(&lp).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 0.0]);
        assert_eq!(obj, -2.0);
    }

    #[test]
    fn infeasible_lp_has_no_vertex() {
        let lp = DenseLp { a: vec![vec![1.0, 1.0]], b: vec![-1.0], c: vec![0.0, 0.0] };
        assert!(lp_by_vertices(&lp).is_none());
    }

    #[test]
    fn constructed_delta_is_feasible() {
        let mut rng = rng_for(3, 0);
        for _ in 0..50 {
            let (p, delta) = prop2_problem(&mut rng, &InstanceShape::two_scan());
            let lp = build_lp(&p).unwrap();
            for row in &lp.rows {
                assert_eq!(row.iter().map(|&j| delta[j]).sum::<f64>(), 1.0);
            }
            let (_, best) = ip_exhaustive(&lp).unwrap();
            let mine: f64 = delta.iter().zip(&lp.costs).map(|(d, c)| d * c).sum();
            assert!((best - mine).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_ospa_hand_value() {
        let p = OspaParams { p: 1.0, c: 10.0 };
        let x = [Vector2::new(0.0, 0.0)];
        let y = [Vector2::new(3.0, 4.0), Vector2::new(100.0, 0.0)];
        assert!((ospa_brute_force(&x, &y, &p) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn brute_assignment() {
        let c = Mat::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        assert_eq!(assignment_brute_force(&c), 5.0);
    }

    #[test]
    fn kf_reference_scalar() {
        let one = Mat::identity(1, 1);
        let (x, p) =
            kf_reference(&Vector::zeros(1), &one, &one, &Mat::zeros(1, 1), &one, &one, &Vector::from_element(1, 2.0));
        assert_eq!(x[0], 1.0);
        assert_eq!(p[(0, 0)], 0.5);
    }
}
