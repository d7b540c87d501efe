//! Reference filters: the textbook Kalman filter, the IMM filter and an
//! IMM-MHT tracker that scores hypotheses with IMM mixture predictions and
//! solves the association exactly.

use serde::{Deserialize, Serialize};

use crate::association::{build_lp, solve_ip, AssociationProblem};
use crate::dynamics::{MeasVec, MeasurementModel, ModelSet};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{dummy_target_hypotheses, Innovation, LocalHypothesis, Scan, ScoringParams};
use crate::linalg::{symmetrize, Mat, Vector};
use crate::rcmkf::Belief;
use crate::tracker::{initiate_tracks, StepDiagnostics, StepOutput, TrackStatus, TrackerConfig};

const PROB_TOL: f64 = 1e-9;

pub fn kf_predict(mean: &Vector, cov: &Mat, f: &Mat, q: &Mat) -> Result<(Vector, Mat)> {
    let n = mean.len();
    if cov.shape() != (n, n) || f.shape() != (n, n) || q.shape() != (n, n) {
        return Err(invalid("kf_predict: dimension mismatch"));
    }
    Ok((f * mean, symmetrize(&(f * cov * f.transpose() + q))))
}

/// Measurement update. Fails when the innovation covariance is not positive
/// definite.
pub fn kf_update(mean: &Vector, cov: &Mat, h: &Mat, r: &Mat, z: &Vector) -> Result<(Vector, Mat)> {
    let n = mean.len();
    let m = z.len();
    if h.shape() != (m, n) || r.shape() != (m, m) || cov.shape() != (n, n) {
        return Err(invalid("kf_update: dimension mismatch"));
    }
    let s = symmetrize(&(h * cov * h.transpose() + r));
    let chol = s.cholesky().ok_or_else(|| invalid("singular innovation covariance"))?;
    let pht = cov * h.transpose();
    let k = chol.solve(&pht.transpose()).transpose();
    let mean = mean + &k * (z - h * mean);
    let cov = symmetrize(&((Mat::identity(n, n) - &k * h) * cov));
    Ok((mean, cov))
}

/// One predict-and-update cycle of the standard Kalman filter.
#[allow(clippy::too_many_arguments)]
pub fn kf_step(mean: &Vector, cov: &Mat, f: &Mat, q: &Mat, h: &Mat, r: &Mat, z: &Vector) -> Result<(Vector, Mat)> {
    let (x, p) = kf_predict(mean, cov, f, q)?;
    kf_update(&x, &p, h, r, z)
}

fn log_gaussian(innov: &Vector, s: &Mat) -> Result<f64> {
    let chol = s.clone().cholesky().ok_or_else(|| invalid("singular innovation covariance"))?;
    let sol = chol.solve(innov);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let m = innov.len() as f64;
    Ok(-0.5 * (innov.dot(&sol) + logdet + m * (2.0 * std::f64::consts::PI).ln()))
}

/// Row-stochastic mode transition matrix, `p[i][j] = P(mode j | mode i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(t: TransitionMatrix) -> Self {
        t.rows
    }
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("transition matrix is empty"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("transition matrix row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(invalid(format!("transition matrix row {i} has a negative or NaN entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(invalid(format!("transition matrix row {i} sums to {total}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn p1() -> Self {
        Self { rows: vec![vec![0.95, 0.05], vec![0.1, 0.9]] }
    }

    pub fn p2() -> Self {
        Self { rows: vec![vec![0.95, 0.05], vec![0.2, 0.8]] }
    }

    pub fn p3() -> Self {
        Self { rows: vec![vec![0.95, 0.05], vec![0.3, 0.7]] }
    }

    /// Predicted mode probabilities `c_j = Σ_i p_ij μ_i`.
    pub fn propagate(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n).map(|j| (0..n).map(|i| self.rows[i][j] * mu[i]).sum()).collect()
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.size();
        let mut mu = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let next = self.propagate(&mu);
            let diff = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            mu = next;
            if diff < 1e-15 {
                break;
            }
        }
        mu
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmBelief {
    pub means: Vec<Vector>,
    pub covs: Vec<Mat>,
    pub mu: Vec<f64>,
}

impl ImmBelief {
    /// Every mode starts from the same belief.
    pub fn new(mean: Vector, cov: Mat, mu: Vec<f64>) -> Result<Self> {
        let b = Self { means: vec![mean; mu.len()], covs: vec![symmetrize(&cov); mu.len()], mu };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.mu.len();
        if s == 0 || self.means.len() != s || self.covs.len() != s {
            return Err(invalid("IMM belief needs one mean and covariance per mode"));
        }
        if self.mu.iter().any(|&p| !(p >= 0.0)) || (self.mu.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(invalid("mode probabilities must form a simplex point"));
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        self.mu.len()
    }

    /// Moment-matched mean and covariance.
    pub fn combined(&self) -> (Vector, Mat) {
        moment_match(&self.means, &self.covs, &self.mu)
    }
}

fn moment_match(means: &[Vector], covs: &[Mat], w: &[f64]) -> (Vector, Mat) {
    let n = means[0].len();
    let mut mean = Vector::zeros(n);
    for (m, &p) in means.iter().zip(w) {
        mean += m * p;
    }
    let mut cov = Mat::zeros(n, n);
    for ((m, c), &p) in means.iter().zip(covs).zip(w) {
        let d = m - &mean;
        cov += (c + &d * d.transpose()) * p;
    }
    (mean, symmetrize(&cov))
}

fn check_modes(b: &ImmBelief, pij: &TransitionMatrix, models: &ModelSet) -> Result<()> {
    b.validate()?;
    if pij.size() != b.num_modes() || models.len() != b.num_modes() {
        return Err(invalid("IMM belief, transition matrix and model set disagree on the mode count"));
    }
    Ok(())
}

/// Interaction and mode-matched prediction. Returns the predicted per-mode
/// means and covariances and the predicted mode probabilities.
fn interact_predict(
    b: &ImmBelief,
    pij: &TransitionMatrix,
    models: &ModelSet,
) -> Result<(Vec<Vector>, Vec<Mat>, Vec<f64>)> {
    let s = b.num_modes();
    let c = pij.propagate(&b.mu);
    let mut means = Vec::with_capacity(s);
    let mut covs = Vec::with_capacity(s);
    for j in 0..s {
        let (m0, p0) = if c[j] > 0.0 {
            let w: Vec<f64> = (0..s).map(|i| pij.get(i, j) * b.mu[i] / c[j]).collect();
            moment_match(&b.means, &b.covs, &w)
        } else {
            (b.means[j].clone(), b.covs[j].clone())
        };
        let (m, p) = kf_predict(&m0, &p0, &models[j].f, &models[j].q)?;
        means.push(m);
        covs.push(p);
    }
    Ok((means, covs, c))
}

/// One IMM cycle. `z == None` is a missed detection: prediction only, with
/// the mode probabilities left as they were.
pub fn imm_step(
    b: &ImmBelief,
    pij: &TransitionMatrix,
    models: &ModelSet,
    meas_model: &MeasurementModel,
    z: Option<&MeasVec>,
) -> Result<ImmBelief> {
    check_modes(b, pij, models)?;
    let (means, covs, c) = interact_predict(b, pij, models)?;
    let Some(z) = z else {
        return Ok(ImmBelief { means, covs, mu: b.mu.clone() });
    };
    let zv = Vector::from_column_slice(z.as_slice());
    let (h, r) = (&meas_model.h, &meas_model.r);
    let s = b.num_modes();
    let mut out_means = Vec::with_capacity(s);
    let mut out_covs = Vec::with_capacity(s);
    let mut log_w = Vec::with_capacity(s);
    for j in 0..s {
        let innov = &zv - h * &means[j];
        let sj = symmetrize(&(h * &covs[j] * h.transpose() + r));
        let ll = log_gaussian(&innov, &sj)?;
        log_w.push(if c[j] > 0.0 { ll + c[j].ln() } else { f64::NEG_INFINITY });
        let (m, p) = kf_update(&means[j], &covs[j], h, r, &zv)?;
        out_means.push(m);
        out_covs.push(p);
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Internal("all IMM mode weights vanished".into()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(ImmBelief { means: out_means, covs: out_covs, mu: w.iter().map(|x| x / total).collect() })
}

/// Mixture-predicted measurement statistics over `steps` scans without updates.
pub fn imm_prediction_chain(
    b: &ImmBelief,
    pij: &TransitionMatrix,
    models: &ModelSet,
    meas_model: &MeasurementModel,
    steps: usize,
) -> Result<Vec<Innovation>> {
    check_modes(b, pij, models)?;
    let (h, r) = (&meas_model.h, &meas_model.r);
    let mut cur = b.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (means, covs, c) = interact_predict(&cur, pij, models)?;
        let zs: Vec<Vector> = means.iter().map(|m| h * m).collect();
        let ss: Vec<Mat> = covs.iter().map(|p| h * p * h.transpose() + r).collect();
        let (zhat, s) = moment_match(&zs, &ss, &c);
        out.push(Innovation::new(
            nalgebra::Vector2::new(zhat[0], zhat[1]),
            nalgebra::Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]),
        )?);
        cur = ImmBelief { means, covs, mu: c };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmTrack {
    pub id: usize,
    pub belief: ImmBelief,
    pub miss_count: usize,
    pub hit_streak: usize,
    pub status: TrackStatus,
}

impl ImmTrack {
    pub fn position(&self) -> MeasVec {
        let (m, _) = self.belief.combined();
        MeasVec::new(m[0], m[2])
    }
}

/// IMM-MHT: window hypotheses scored with IMM mixture predictions, exact 0-1
/// association, IMM update with the committed first-scan assignment.
#[derive(Clone, Debug)]
pub struct ImmMhtTracker {
    pub config: TrackerConfig,
    pub scoring: ScoringParams,
    pub models: ModelSet,
    pub meas_model: MeasurementModel,
    pub pij: TransitionMatrix,
    tracks: Vec<ImmTrack>,
    pending: Option<Scan>,
    next_id: usize,
}

impl ImmMhtTracker {
    pub fn new(
        config: TrackerConfig,
        scoring: ScoringParams,
        models: ModelSet,
        meas_model: MeasurementModel,
        pij: TransitionMatrix,
    ) -> Result<Self> {
        config.validate()?;
        scoring.validate()?;
        if pij.size() != models.len() {
            return Err(invalid("transition matrix size differs from the model count"));
        }
        Ok(Self { config, scoring, models, meas_model, pij, tracks: Vec::new(), pending: None, next_id: 1 })
    }

    /// New beliefs start every mode at the given state with uniform mode
    /// probabilities.
    fn make_belief(&self, b: &Belief) -> Result<ImmBelief> {
        let s = self.models.len();
        ImmBelief::new(b.mean.clone(), b.cov.clone(), vec![1.0 / s as f64; s])
    }

    pub fn seed_tracks(&mut self, beliefs: Vec<Belief>) -> Result<()> {
        for b in &beliefs {
            let belief = self.make_belief(b)?;
            self.push(belief, TrackStatus::Confirmed);
        }
        Ok(())
    }

    fn push(&mut self, belief: ImmBelief, status: TrackStatus) {
        self.tracks.push(ImmTrack { id: self.next_id, belief, miss_count: 0, hit_streak: 0, status });
        self.next_id += 1;
    }

    pub fn tracks(&self) -> &[ImmTrack] {
        &self.tracks
    }

    pub fn live_tracks(&self) -> impl Iterator<Item = &ImmTrack> {
        self.tracks.iter().filter(|t| t.status != TrackStatus::Terminated)
    }

    /// Process one window whose first scan is the next to commit. On error
    /// the tracker is unchanged.
    pub fn step(&mut self, window: &[Scan]) -> Result<StepOutput> {
        let first = window.first().ok_or_else(|| invalid("window needs at least one scan"))?;
        let live: Vec<usize> =
            (0..self.tracks.len()).filter(|&i| self.tracks[i].status != TrackStatus::Terminated).collect();
        let mut out = StepOutput::default();
        out.diagnostics.time_index = first.time_index;

        let mut assigned = vec![0usize; live.len()];
        if !live.is_empty() {
            let mut hyps = Vec::new();
            for (k, &i) in live.iter().enumerate() {
                let chain = imm_prediction_chain(
                    &self.tracks[i].belief,
                    &self.pij,
                    &self.models,
                    &self.meas_model,
                    window.len(),
                )?;
                let mut r = Vec::with_capacity(window.len());
                enumerate_window(&chain, window, &self.scoring, k + 1, 0, 0.0, &mut r, &mut hyps);
            }
            let total = hyps.len();
            hyps.extend(dummy_target_hypotheses(window));
            for h in hyps.iter_mut() {
                h.models = vec![1; window.len()];
            }
            let counts = window.iter().map(Scan::count).collect();
            let problem = AssociationProblem::new(hyps, live.len(), 1, counts)?;
            let lp = build_lp(&problem)?;
            if self.config.capture_lp {
                out.lp_dump = Some(lp.dump());
            }
            let sol = solve_ip(&lp)?;
            for (h, &p) in problem.hypotheses.iter().zip(&sol.probs) {
                if h.target > 0 && p > 0.5 {
                    assigned[h.target - 1] = h.meas[0];
                }
            }
            out.diagnostics = StepDiagnostics {
                time_index: first.time_index,
                objective: sol.objective,
                integral: sol.is_integral,
                hypotheses: total,
                lp_iterations: sol.iterations,
                fast_path: true,
                ..Default::default()
            };
        }

        let mut next: Vec<ImmTrack> = self.tracks.clone();
        let mut used = vec![false; first.count()];
        for (k, &i) in live.iter().enumerate() {
            let z = first.get(assigned[k]);
            if assigned[k] > 0 {
                used[assigned[k] - 1] = true;
            }
            let t = &mut next[i];
            t.belief = imm_step(&t.belief, &self.pij, &self.models, &self.meas_model, z)?;
            if z.is_some() {
                t.miss_count = 0;
                t.hit_streak += 1;
                if t.status == TrackStatus::Tentative && t.hit_streak >= self.config.confirm_hits {
                    t.status = TrackStatus::Confirmed;
                }
            } else {
                t.miss_count += 1;
                t.hit_streak = 0;
            }
            if t.miss_count > self.config.max_misses {
                t.status = TrackStatus::Terminated;
                out.diagnostics.terminations += 1;
            }
        }

        let rest: Vec<MeasVec> = first.measurements.iter().zip(&used).filter(|(_, &u)| !u).map(|(z, _)| *z).collect();
        let mut remaining = Scan::new(first.time_index, rest);
        let mut pending = self.pending.clone();
        let mut born = Vec::new();
        if self.config.births {
            if let Some(prev) = pending.take() {
                let (new, rest) =
                    initiate_tracks(&prev, &remaining, &self.config, &self.models, &self.meas_model, &self.scoring)?;
                for b in &new {
                    born.push(self.make_belief(b)?);
                }
                remaining = rest;
            }
        }
        self.tracks = next;
        out.diagnostics.births = born.len();
        for b in born {
            self.push(b, TrackStatus::Tentative);
        }
        self.pending = Some(remaining);
        out.diagnostics.active_tracks = self.live_tracks().count();
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_window(
    chain: &[Innovation],
    window: &[Scan],
    params: &ScoringParams,
    target: usize,
    depth: usize,
    log_l: f64,
    r: &mut Vec<usize>,
    out: &mut Vec<LocalHypothesis>,
) {
    if depth == window.len() {
        out.push(LocalHypothesis {
            target,
            models: vec![1; window.len()],
            meas: r.clone(),
            cost: -log_l,
            likelihood_log: log_l,
        });
        return;
    }
    let inn = &chain[depth];
    let scan = &window[depth];
    let gated = std::iter::once(0)
        .chain((1..=scan.count()).filter(|&ri| inn.mahalanobis(&scan.measurements[ri - 1]) <= params.gate_gamma));
    for ri in gated.collect::<Vec<_>>() {
        let term = match scan.get(ri) {
            None => params.miss_log(),
            Some(z) => params.detection_log(inn.log_density(z)),
        };
        r.push(ri);
        enumerate_window(chain, window, params, target, depth + 1, log_l + term, r, out);
        r.pop();
    }
}

/// Drive an IMM-MHT tracker over a scan sequence with a sliding window.
pub fn run_imm_mht(tracker: &mut ImmMhtTracker, scans: &[Scan]) -> Result<Vec<StepOutput>> {
    let n = tracker.config.window;
    (0..scans.len()).map(|t| tracker.step(&scans[t..(t + n).min(scans.len())])).collect()
}
