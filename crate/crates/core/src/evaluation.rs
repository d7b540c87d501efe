//! OSPA distance, optimal assignment and the Monte Carlo harness.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::MeasVec;
use crate::error::{invalid, Result};
use crate::experiment::{run_replica, Algorithm, Experiment};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OspaParams {
    pub p: f64,
    pub c: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self { p: 2.0, c: 1000.0 }
    }
}

impl OspaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("OSPA order p must be >= 1, got {}", self.p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("OSPA cutoff c must be > 0, got {}", self.c)));
        }
        Ok(())
    }
}

/// Minimum-cost perfect matching on a square matrix (Hungarian method with
/// potentials, `O(n³)`). Returns `perm` with row `i` matched to column
/// `perm[i]`, and the total cost.
pub fn assignment_min_cost(cost: &Mat) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(invalid(format!("cost matrix is {}x{}, expected square", n, cost.ncols())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((perm, total))
}

/// OSPA distance of order `p` with cutoff `c`.
pub fn ospa(x: &[MeasVec], y: &[MeasVec], params: &OspaParams) -> f64 {
    // Equal sizes are ordered lexicographically so swapping the arguments
    // builds the same cost matrix and the value is exactly symmetric.
    let x_first = match x.len().cmp(&y.len()) {
        std::cmp::Ordering::Equal => {
            let key = |s: &[MeasVec]| s.iter().flat_map(|v| [v[0], v[1]]).collect::<Vec<f64>>();
            let (a, b) = (key(x), key(y));
            a.iter().zip(&b).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).is_none_or(|o| o.is_lt())
        }
        o => o.is_lt(),
    };
    let (small, large) = if x_first { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let (p, c) = (params.p, params.c);
    let cp = c.powf(p);
    let cost = Mat::from_fn(n, n, |i, j| if i < m { (small[i] - large[j]).norm().min(c).powf(p) } else { cp });
    let (_, total) = assignment_min_cost(&cost).expect("square finite cost");
    (total / n as f64).powf(1.0 / p).min(c)
}

/// Per-step OSPA and cardinalities of one replica of one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub algorithm: String,
    pub run: usize,
    pub steps: Vec<usize>,
    pub ospa: Vec<f64>,
    pub n_truth: Vec<usize>,
    pub n_tracks: Vec<usize>,
}

impl RunResult {
    pub fn time_mean(&self) -> f64 {
        if self.ospa.is_empty() {
            return 0.0;
        }
        self.ospa.iter().sum::<f64>() / self.ospa.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: usize,
    pub failures: usize,
    pub steps: Vec<usize>,
    /// Mean OSPA per step over successful replicas.
    pub mean_ospa: Vec<f64>,
    /// Time average of `mean_ospa`.
    pub time_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarlo {
    pub results: Vec<RunResult>,
    pub summaries: Vec<AlgorithmSummary>,
    /// `(algorithm, run, message)` for every failed replica.
    pub failures: Vec<(String, usize, String)>,
}

pub const OSPA_HEADER: &str = "algorithm,run,step,ospa,n_truth,n_tracks";
pub const SUMMARY_HEADER: &str = "algorithm,runs,failures,time_mean_ospa";
pub const MEAN_HEADER: &str = "algorithm,step,mean_ospa";

impl MonteCarlo {
    pub fn ospa_csv(&self) -> String {
        let mut s = String::from(OSPA_HEADER);
        s.push('\n');
        for r in &self.results {
            for i in 0..r.ospa.len() {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.6},{},{}",
                    r.algorithm, r.run, r.steps[i], r.ospa[i], r.n_truth[i], r.n_tracks[i]
                );
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for a in &self.summaries {
            let _ = writeln!(s, "{},{},{},{:.6}", a.algorithm, a.runs, a.failures, a.time_mean);
        }
        s
    }

    pub fn mean_csv(&self) -> String {
        let mut s = String::from(MEAN_HEADER);
        s.push('\n');
        for a in &self.summaries {
            for (k, m) in a.steps.iter().zip(&a.mean_ospa) {
                let _ = writeln!(s, "{},{k},{m:.6}", a.algorithm);
            }
        }
        s
    }

    pub fn summary(&self, algorithm: &str) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|a| a.algorithm == algorithm)
    }
}

/// Maximum allowed ratio of RMM-MHT to IMM-MHT-P1 time-mean OSPA.
pub const RMM_TO_P1_LIMIT: f64 = 1.15;

/// Relative standing of RMM-MHT and the three IMM-MHT variants.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderingCheck {
    /// Time-mean OSPA of `imm-mht-P1`, `-P2`, `-P3`.
    pub imm: [f64; 3],
    pub rmm: f64,
}

impl OrderingCheck {
    /// `None` unless all four algorithms are present.
    pub fn from_monte_carlo(mc: &MonteCarlo) -> Option<Self> {
        let get = |name: &str| mc.summary(name).map(|s| s.time_mean);
        Some(Self { imm: [get("imm-mht-P1")?, get("imm-mht-P2")?, get("imm-mht-P3")?], rmm: get("rmm-mht")? })
    }

    pub fn imm_nondecreasing(&self) -> bool {
        self.imm[0] <= self.imm[1] && self.imm[1] <= self.imm[2]
    }

    pub fn ratio(&self) -> f64 {
        self.rmm / self.imm[0]
    }

    pub fn rmm_close_to_best(&self) -> bool {
        self.ratio() <= RMM_TO_P1_LIMIT
    }
}

/// Cap the worker pool used by [`monte_carlo`]. Only the first call has an effect.
#[cfg(feature = "parallel")]
pub fn set_thread_cap(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_cap(_threads: usize) {}

fn map_jobs<T, F>(jobs: &[T], f: F) -> Vec<std::result::Result<RunResult, String>>
where
    T: Sync,
    F: Fn(&T) -> std::result::Result<RunResult, String> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(f).collect()
    }
}

/// Run `runs` replicas (seeds `seed + i`) of every algorithm. Replicas run in
/// parallel; aggregation follows run order, so output does not depend on
/// scheduling.
pub fn monte_carlo(exp: &Experiment, algorithms: &[Algorithm], runs: usize) -> Result<MonteCarlo> {
    if runs == 0 {
        return Err(invalid("runs must be at least 1"));
    }
    if algorithms.is_empty() {
        return Err(invalid("no algorithms selected"));
    }
    exp.ospa.validate()?;
    let jobs: Vec<(usize, usize)> = (0..runs).flat_map(|r| (0..algorithms.len()).map(move |a| (r, a))).collect();
    let outcomes = map_jobs(&jobs, |&(run, a)| run_replica(exp, &algorithms[a], run).map_err(|e| e.to_string()));

    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    for (a, algo) in algorithms.iter().enumerate() {
        let name = algo.name();
        let mine: Vec<_> = jobs.iter().zip(&outcomes).filter(|((_, k), _)| *k == a).collect();
        let mut ok: Vec<&RunResult> = Vec::new();
        for ((run, _), out) in &mine {
            match out {
                Ok(r) => ok.push(r),
                Err(e) => failures.push((name.clone(), *run, e.clone())),
            }
        }
        let steps = ok.first().map(|r| r.steps.clone()).unwrap_or_default();
        let mut mean = vec![0.0; steps.len()];
        for r in &ok {
            for (m, v) in mean.iter_mut().zip(&r.ospa) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= ok.len().max(1) as f64;
        }
        let time_mean = if mean.is_empty() { 0.0 } else { mean.iter().sum::<f64>() / mean.len() as f64 };
        summaries.push(AlgorithmSummary {
            algorithm: name,
            runs: ok.len(),
            failures: mine.len() - ok.len(),
            steps,
            mean_ospa: mean,
            time_mean,
        });
    }
    for (_, out) in jobs.iter().zip(outcomes) {
        if let Ok(r) = out {
            results.push(r);
        }
    }
    results.sort_by(|a, b| {
        let ia = algorithms.iter().position(|x| x.name() == a.algorithm);
        let ib = algorithms.iter().position(|x| x.name() == b.algorithm);
        ia.cmp(&ib).then(a.run.cmp(&b.run))
    });
    Ok(MonteCarlo { results, summaries, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    #[test]
    fn diagonal_zero_is_identity() {
        let c = Mat::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 5.0 });
        let (perm, total) = assignment_min_cost(&c).unwrap();
        assert_eq!(perm, vec![0, 1, 2, 3]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn two_by_two() {
        let c = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(assignment_min_cost(&c).unwrap(), (vec![0, 1], 2.0));
        assert!(assignment_min_cost(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn ospa_basics() {
        let p = OspaParams::default();
        let x = vec![Vector2::new(1.0, 2.0), Vector2::new(-5.0, 0.0)];
        assert_eq!(ospa(&x, &x, &p), 0.0);
        assert_eq!(ospa(&[], &[], &p), 0.0);
        assert_eq!(ospa(&[], &x, &p), p.c);
        let one = OspaParams { p: 1.0, c: 10.0 };
        assert_relative_eq!(ospa(&[Vector2::new(0.0, 0.0)], &[Vector2::new(3.0, 4.0)], &one), 5.0);
    }

    #[test]
    fn param_validation() {
        assert!(OspaParams { p: 0.5, c: 1.0 }.validate().is_err());
        assert!(OspaParams { p: 1.0, c: 0.0 }.validate().is_err());
    }
}
