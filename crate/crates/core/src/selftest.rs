//! Oracle suites run by `rmmht selftest`.

use std::fmt::Write as _;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::association::{build_lp, solve_ip, solve_lp};
use crate::dynamics::{cv_transition, position_measurement, process_noise, MeasVec};
use crate::evaluation::{ospa, OspaParams};
use crate::linalg::{Mat, Vector};
use crate::oracle::{self, InstanceShape};
use crate::rcmkf::{self, Belief, DiscreteMatrixDistribution};
use crate::simulation::rng_for;

pub const DEFAULT_SEED: u64 = 20240611;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed discrepancy, in the suite's own units.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn report(name: &'static str, tolerance: f64, errors: impl IntoIterator<Item = f64>) -> SuiteReport {
    let (mut cases, mut failures, mut worst) = (0, 0, 0.0f64);
    for e in errors {
        cases += 1;
        if !(e <= tolerance) {
            failures += 1;
        }
        worst = if e.is_nan() { f64::NAN } else { worst.max(e) };
    }
    SuiteReport { name, cases, failures, worst, tolerance }
}

/// Simplex optimum against the best basic feasible solution.
pub fn lp_suite(seed: u64, count: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 10);
    let shapes = [InstanceShape::single_scan(), InstanceShape::two_scan()];
    let errors = (0..count).map(|k| {
        let problem = oracle::random_problem(&mut rng, &shapes[k % 2]);
        let lp = build_lp(&problem).expect("generated instances are covered");
        let dense = lp.to_dense();
        match (solve_lp(&lp), oracle::lp_by_vertices(&dense)) {
            (Ok(s), Some((_, best))) => (s.objective - best).abs(),
            _ => f64::INFINITY,
        }
    });
    report("lp-vs-vertex", 1e-9, errors.collect::<Vec<_>>())
}

/// Branch-and-bound optimum against exact-cover enumeration.
pub fn ip_suite(seed: u64, count: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 11);
    let shape = InstanceShape { targets: 4, max_meas: 4, hyps_per_target: 6, ..InstanceShape::two_scan() };
    let errors = (0..count).map(|_| {
        let problem = oracle::random_problem(&mut rng, &shape);
        let lp = build_lp(&problem).expect("generated instances are covered");
        match (solve_ip(&lp), oracle::ip_exhaustive(&lp)) {
            (Ok(s), Some((_, best))) if s.is_integral && s.optimal => (s.objective - best).abs(),
            _ => f64::INFINITY,
        }
    });
    report("ip-vs-exhaustive", 1e-9, errors.collect::<Vec<_>>())
}

/// Random-coefficient filter with singleton distributions against a plain
/// Kalman filter, over random trajectories of `steps` steps.
pub fn kf_suite(seed: u64, trajectories: usize, steps: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 12);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let errors = (0..trajectories).map(|_| {
        let dt = rng.random_range(0.5..2.0);
        let f = cv_transition(dt).expect("dt > 0");
        let q = process_noise(rng.random_range(0.01..2.0), dt).expect("q >= 0");
        let meas = position_measurement(rng.random_range(0.5..3.0)).expect("sigma > 0");
        let f_dist = DiscreteMatrixDistribution::singleton(f.clone(), q.clone()).expect("singleton");
        let h_dist = DiscreteMatrixDistribution::singleton(meas.h.clone(), meas.r.clone()).expect("singleton");
        let mut x = Vector::from_fn(4, |_, _| normal.sample(&mut rng) * 5.0);
        let p0 = Mat::from_diagonal(&Vector::from_element(4, 10.0));
        let mut b = Belief::new(x.clone(), p0.clone()).expect("belief");
        let (mut km, mut kp) = (x.clone(), p0);
        let mut worst = 0.0f64;
        for _ in 0..steps {
            x = &f * &x + Vector::from_fn(4, |_, _| normal.sample(&mut rng) * 0.1);
            let z = &meas.h * &x + Vector::from_fn(2, |_, _| normal.sample(&mut rng) * meas.sigma());
            b = rcmkf::predict(&b, &f_dist).and_then(|p| rcmkf::update(&p, &h_dist, &z)).expect("filter step");
            (km, kp) = oracle::kf_reference(&km, &kp, &f, &q, &meas.h, &meas.r, &z);
            worst = worst.max((&b.mean - &km).amax()).max((&b.cov - &kp).amax());
        }
        worst
    });
    report("rcmkf-vs-kf", 1e-10, errors.collect::<Vec<_>>())
}

fn random_set(rng: &mut impl Rng, max: usize, scale: f64) -> Vec<MeasVec> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| Vector2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect()
}

/// Hungarian-based OSPA against permutation search.
pub fn ospa_suite(seed: u64, count: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 13);
    let params = OspaParams { p: 2.0, c: 100.0 };
    let errors = (0..count).map(|_| {
        let x = random_set(&mut rng, 5, 120.0);
        let y = random_set(&mut rng, 5, 120.0);
        (ospa(&x, &y, &params) - oracle::ospa_brute_force(&x, &y, &params)).abs()
    });
    report("ospa-vs-brute", 1e-12, errors.collect::<Vec<_>>())
}

/// Sample moments of a scalar random-coefficient system against the moment
/// recursion (in standard errors) and the effective covariances (relative).
pub fn moment_suite(seed: u64, samples: usize) -> Vec<SuiteReport> {
    let m = oracle::moment_check(samples, 10, seed);
    vec![
        report("mc-moments", 3.0, [m.max_z]),
        report("mc-noise-mean", 4.0, [m.resid_mean_z]),
        report("mc-effective-noise", 0.05, [m.q_rel_err, m.r_rel_err]),
    ]
}

pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    let mut out = vec![lp_suite(seed, 300), ip_suite(seed, 300), kf_suite(seed, 20, 100), ospa_suite(seed, 1000)];
    out.extend(moment_suite(seed, 100_000));
    out
}

pub fn table(reports: &[SuiteReport]) -> String {
    let mut s =
        format!("{:<20} {:>6} {:>8} {:>12} {:>10}  result\n", "suite", "cases", "failures", "worst", "tolerance");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>8} {:>12.3e} {:>10.1e}  {}",
            r.name,
            r.cases,
            r.failures,
            r.worst,
            r.tolerance,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for r in [lp_suite(1, 30), ip_suite(1, 30), kf_suite(1, 3, 50), ospa_suite(1, 100)] {
            assert!(r.passed(), "{r:?}");
            assert!(r.cases > 0);
        }
    }

    #[test]
    fn failures_are_counted() {
        let r = report("x", 1.0, [0.5, 2.0, f64::NAN]);
        assert_eq!((r.cases, r.failures), (3, 2));
        assert!(!r.passed());
        assert!(table(&[r]).contains("FAIL"));
    }
}
