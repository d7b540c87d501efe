//! Randomized multiple-model MHT, one sliding-window step at a time.
//!
//! Each step enumerates local hypotheses over the window, solves the relaxed
//! association problem, turns the first-scan marginals into a stacked linear
//! system with random coefficient matrices and filters the stacked state of
//! all live tracks jointly. Cross-covariances created by shared measurements
//! are kept until a track is terminated.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::association::{build_lp, marginals, solve_lp, track_init_lp, AssociationProblem, InitOptions, Marginals};
use crate::dynamics::{MeasVec, MeasurementModel, ModelSet, MEAS_DIM, STATE_DIM};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{enumerate_hypotheses, Scan, ScoringParams, DEFAULT_CAP};
use crate::linalg::{inverse_sym, is_symmetric, Mat, Vector};
use crate::rcmkf::{
    effective_meas_cov, effective_process_cov, mean_matrix, predict_with, update_with_inverse, Belief,
    DiscreteMatrixDistribution, Realization,
};

const SNAP_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;

/// Joint belief over all live tracks: `X`, `P` and `E[XXᵀ]`, four rows per track.
pub type StackedBelief = Belief;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Terminated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: usize,
    /// Marginal of the stacked belief for this track.
    pub belief: Belief,
    pub miss_count: usize,
    pub hit_streak: usize,
    pub status: TrackStatus,
}

impl Track {
    pub fn position(&self) -> MeasVec {
        Vector2::new(self.belief.mean[0], self.belief.mean[2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Scans jointly considered before committing the first one (N).
    #[serde(skip)]
    pub window: usize,
    pub hypothesis_cap: usize,
    /// A scan counts as a miss when the dummy-measurement probability exceeds this.
    pub miss_threshold: f64,
    /// Consecutive misses tolerated before termination (N_l).
    pub max_misses: usize,
    /// Consecutive hits that promote a tentative track.
    pub confirm_hits: usize,
    #[serde(skip)]
    pub births: bool,
    /// Minimum initiation-LP probability for a tuple to start a track.
    pub birth_threshold: f64,
    /// Measurements whose total target probability is below this are
    /// offered to track initiation.
    pub unassigned_threshold: f64,
    pub birth_velocity_std: f64,
    pub init_cost: crate::association::InitCost,
    /// Scan period (s).
    #[serde(skip)]
    pub dt: f64,
    #[serde(skip)]
    pub capture_lp: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: 2,
            hypothesis_cap: DEFAULT_CAP,
            miss_threshold: 0.5,
            max_misses: 3,
            confirm_hits: 3,
            births: true,
            birth_threshold: 0.8,
            unassigned_threshold: 0.5,
            birth_velocity_std: 150.0,
            init_cost: crate::association::InitCost::NegLog,
            dt: 5.0,
            capture_lp: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("window must be at least 1"));
        }
        if self.hypothesis_cap == 0 {
            return Err(invalid("hypothesis_cap must be positive"));
        }
        for (name, v) in [
            ("miss_threshold", self.miss_threshold),
            ("birth_threshold", self.birth_threshold),
            ("unassigned_threshold", self.unassigned_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.birth_velocity_std > 0.0) {
            return Err(invalid("birth_velocity_std must be > 0"));
        }
        Ok(())
    }

    pub fn init_options(&self) -> InitOptions {
        InitOptions { velocity_std: self.birth_velocity_std, cost: self.init_cost }
    }
}

/// One measurement of the committed scan written as a random row of the
/// stacked measurement equation.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRow {
    /// 1-based index within the scan.
    pub index: usize,
    pub z: MeasVec,
    /// `(target slot, probability)` pairs, slots 0-based.
    pub targets: Vec<(usize, f64)>,
    /// Probability of the all-zero row (false alarm).
    pub clutter: f64,
    /// Distribution of the `2 × 4T` row block.
    pub dist: DiscreteMatrixDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackedSystem {
    /// Per-target transition distributions (`4 × 4`).
    pub transitions: Vec<DiscreteMatrixDistribution>,
    /// Measurement rows, exclusive ones first.
    pub rows: Vec<MeasurementRow>,
    pub num_exclusive: usize,
}

/// Partition of the committed scan for blockwise innovation inversion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FastPath {
    /// True when every associated measurement is exclusive.
    pub applicable: bool,
    /// `(measurement, target slot)` pairs with a certain, unshared origin.
    pub exclusive: Vec<(usize, usize)>,
    /// Associated measurements whose origin is uncertain.
    pub shared: Vec<usize>,
}

fn snap(p: f64) -> f64 {
    if p.abs() < SNAP_TOL {
        0.0
    } else if (p - 1.0).abs() < SNAP_TOL {
        1.0
    } else {
        p
    }
}

fn check_marginals(m: &Marginals) -> Result<()> {
    if m.model.len() != m.assoc.len() {
        return Err(Error::InconsistentMarginals("model and association rows differ".into()));
    }
    let width = m.assoc.first().map_or(0, Vec::len);
    for (t, row) in m.assoc.iter().enumerate() {
        if row.len() != width {
            return Err(Error::InconsistentMarginals(format!("association row {t} has wrong length")));
        }
        if row.iter().any(|&p| !(p >= -RESIDUAL_TOL) || p > 1.0 + RESIDUAL_TOL) {
            return Err(Error::InconsistentMarginals(format!("association row {t} leaves [0,1]")));
        }
    }
    Ok(())
}

pub fn fast_path_applicable(marginals: &Marginals) -> FastPath {
    let t = marginals.num_targets();
    let count = marginals.assoc.first().map_or(0, |row| row.len().saturating_sub(1));
    let mut used = vec![false; t];
    let mut out = FastPath::default();
    for r in 1..=count {
        let probs: Vec<(usize, f64)> =
            (0..t).map(|k| (k, snap(marginals.assoc[k][r]))).filter(|&(_, p)| p > 0.0).collect();
        match probs.as_slice() {
            [] => {}
            [(k, p)] if *p == 1.0 && !used[*k] => {
                used[*k] = true;
                out.exclusive.push((r, *k));
            }
            _ => out.shared.push(r),
        }
    }
    out.applicable = out.shared.is_empty();
    out
}

pub fn build_stacked_system(
    marginals: &Marginals,
    models: &ModelSet,
    meas_model: &MeasurementModel,
    scan: &Scan,
) -> Result<StackedSystem> {
    check_marginals(marginals)?;
    let t = marginals.num_targets();
    let n = STATE_DIM * t;

    let mut transitions = Vec::with_capacity(t);
    for (k, row) in marginals.model.iter().enumerate() {
        if row.len() != models.len() {
            return Err(Error::InconsistentMarginals(format!("model row {k} has wrong length")));
        }
        let probs: Vec<f64> = row.iter().map(|&p| snap(p)).collect();
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > RESIDUAL_TOL {
            return Err(Error::InconsistentMarginals(format!("model row {k} sums to {total}")));
        }
        let real = models
            .iter()
            .zip(&probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(m, &p)| Realization { matrix: m.f.clone(), noise_cov: m.q.clone(), probability: p / total })
            .collect();
        transitions.push(DiscreteMatrixDistribution::new(real)?);
    }

    if t > 0 && marginals.assoc[0].len() != scan.count() + 1 {
        return Err(Error::InconsistentMarginals("association width does not match the scan".into()));
    }
    let fast = fast_path_applicable(marginals);
    let order = fast.exclusive.iter().map(|&(r, _)| r).chain(fast.shared.iter().copied());
    let mut rows = Vec::new();
    for r in order {
        let targets: Vec<(usize, f64)> =
            (0..t).map(|k| (k, snap(marginals.assoc[k][r]))).filter(|&(_, p)| p > 0.0).collect();
        let total: f64 = targets.iter().map(|x| x.1).sum();
        let residual = 1.0 - total;
        if residual < -RESIDUAL_TOL {
            return Err(Error::InconsistentMarginals(format!("measurement {r} has target probability {total} > 1")));
        }
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        let clutter = snap(residual.max(0.0));
        let mut real = Vec::with_capacity(targets.len() + 1);
        let targets: Vec<(usize, f64)> = targets.into_iter().map(|(k, p)| (k, p * scale)).collect();
        for &(k, p) in &targets {
            let mut h = Mat::zeros(MEAS_DIM, n);
            h.view_mut((0, STATE_DIM * k), (MEAS_DIM, STATE_DIM)).copy_from(&meas_model.h);
            real.push(Realization { matrix: h, noise_cov: meas_model.r.clone(), probability: p });
        }
        if clutter > 0.0 {
            real.push(Realization {
                matrix: Mat::zeros(MEAS_DIM, n),
                noise_cov: meas_model.r.clone(),
                probability: clutter,
            });
        }
        let z = *scan.get(r).ok_or_else(|| Error::Internal(format!("measurement {r} missing")))?;
        rows.push(MeasurementRow { index: r, z, targets, clutter, dist: DiscreteMatrixDistribution::new(real)? });
    }
    Ok(StackedSystem { transitions, rows, num_exclusive: fast.exclusive.len() })
}

impl StackedSystem {
    pub fn num_targets(&self) -> usize {
        self.transitions.len()
    }

    pub fn mean_transition(&self) -> Mat {
        let n = STATE_DIM * self.num_targets();
        let mut f = Mat::zeros(n, n);
        for (k, d) in self.transitions.iter().enumerate() {
            f.view_mut((STATE_DIM * k, STATE_DIM * k), (STATE_DIM, STATE_DIM)).copy_from(&mean_matrix(d));
        }
        f
    }

    /// Block-diagonal `Q̃`; block τ depends only on block τ of `E[XXᵀ]`.
    pub fn effective_process_cov(&self, second_moment: &Mat) -> Result<Mat> {
        let n = STATE_DIM * self.num_targets();
        let mut q = Mat::zeros(n, n);
        for (k, d) in self.transitions.iter().enumerate() {
            let o = STATE_DIM * k;
            let exx = second_moment.view((o, o), (STATE_DIM, STATE_DIM)).into_owned();
            q.view_mut((o, o), (STATE_DIM, STATE_DIM)).copy_from(&effective_process_cov(d, &exx)?);
        }
        Ok(q)
    }

    pub fn mean_measurement(&self) -> Mat {
        let n = STATE_DIM * self.num_targets();
        let mut h = Mat::zeros(MEAS_DIM * self.rows.len(), n);
        for (i, row) in self.rows.iter().enumerate() {
            h.view_mut((MEAS_DIM * i, 0), (MEAS_DIM, n)).copy_from(&mean_matrix(&row.dist));
        }
        h
    }

    /// Block-diagonal `R̃`, one `2 × 2` block per measurement row.
    pub fn effective_meas_cov(&self, second_moment: &Mat) -> Result<Mat> {
        let m = MEAS_DIM * self.rows.len();
        let mut r = Mat::zeros(m, m);
        for (i, row) in self.rows.iter().enumerate() {
            let o = MEAS_DIM * i;
            r.view_mut((o, o), (MEAS_DIM, MEAS_DIM)).copy_from(&effective_meas_cov(&row.dist, second_moment)?);
        }
        Ok(r)
    }

    pub fn stacked_measurement(&self) -> Vector {
        Vector::from_iterator(MEAS_DIM * self.rows.len(), self.rows.iter().flat_map(|r| [r.z[0], r.z[1]]))
    }

    pub fn predict(&self, b: &StackedBelief) -> Result<StackedBelief> {
        if b.dim() != STATE_DIM * self.num_targets() {
            return Err(invalid("stacked belief does not match the number of targets"));
        }
        let q = self.effective_process_cov(&b.second_moment)?;
        predict_with(b, &self.mean_transition(), &q)
    }

    pub fn innovation_cov(&self, predicted: &StackedBelief) -> Result<Mat> {
        let h = self.mean_measurement();
        Ok(&h * &predicted.cov * h.transpose() + self.effective_meas_cov(&predicted.second_moment)?)
    }

    /// Measurement update of a predicted stacked belief.
    pub fn update(&self, predicted: &StackedBelief) -> Result<StackedBelief> {
        if self.rows.is_empty() {
            return Ok(predicted.clone());
        }
        let h = self.mean_measurement();
        let s = &h * &predicted.cov * h.transpose() + self.effective_meas_cov(&predicted.second_moment)?;
        if !is_symmetric(&s, 1e-9) {
            return Err(Error::Internal("innovation covariance is not symmetric".into()));
        }
        let s_inv = blockwise_inverse(&s, self.num_exclusive, MEAS_DIM).unwrap_or_else(|| inverse_sym(&s));
        Ok(update_with_inverse(predicted, &h, &s_inv, &self.stacked_measurement()))
    }
}

/// Inverse of a symmetric matrix whose leading `exclusive * m` rows form a
/// block-diagonal matrix of `m × m` blocks. The trailing part is handled
/// through its Schur complement. `None` when the leading part is not exactly
/// block diagonal.
pub fn blockwise_inverse(s: &Mat, exclusive: usize, m: usize) -> Option<Mat> {
    let n = s.nrows();
    let e = exclusive * m;
    if exclusive == 0 || e > n || !s.is_square() {
        return None;
    }
    for i in 0..exclusive {
        for j in 0..exclusive {
            if i != j && s.view((i * m, j * m), (m, m)).iter().any(|&v| v != 0.0) {
                return None;
            }
        }
    }
    let mut a_inv = Mat::zeros(e, e);
    for i in 0..exclusive {
        let blk = s.view((i * m, i * m), (m, m)).into_owned();
        a_inv.view_mut((i * m, i * m), (m, m)).copy_from(&inverse_sym(&blk));
    }
    if e == n {
        return Some(a_inv);
    }
    let k = n - e;
    let b = s.view((0, e), (e, k)).into_owned();
    let d = s.view((e, e), (k, k)).into_owned();
    let a_inv_b = &a_inv * &b;
    let schur_inv = inverse_sym(&(&d - b.transpose() * &a_inv_b));
    let upper_right = -(&a_inv_b * &schur_inv);
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (e, e)).copy_from(&(&a_inv - &upper_right * a_inv_b.transpose()));
    out.view_mut((0, e), (e, k)).copy_from(&upper_right);
    out.view_mut((e, 0), (k, e)).copy_from(&upper_right.transpose());
    out.view_mut((e, e), (k, k)).copy_from(&schur_inv);
    Some(out)
}

/// Two-point initialisation from consecutive positions `dt` seconds apart.
pub fn two_point_init(z1: &MeasVec, z2: &MeasVec, dt: f64, sigma: f64) -> Result<Belief> {
    if !(dt > 0.0) || !(sigma > 0.0) {
        return Err(invalid("two-point initialisation needs dt > 0 and sigma > 0"));
    }
    let s2 = sigma * sigma;
    let v2 = 2.0 * s2 / (dt * dt);
    let mean = Vector::from_vec(vec![z2[0], (z2[0] - z1[0]) / dt, z2[1], (z2[1] - z1[1]) / dt]);
    Belief::new(mean, Mat::from_diagonal(&Vector::from_vec(vec![s2, v2, s2, v2])))
}

/// Marginal belief of track slot `k`.
pub fn block(b: &StackedBelief, k: usize) -> Belief {
    let o = STATE_DIM * k;
    let d = STATE_DIM;
    Belief {
        mean: b.mean.rows(o, d).into_owned(),
        cov: b.cov.view((o, o), (d, d)).into_owned(),
        second_moment: b.second_moment.view((o, o), (d, d)).into_owned(),
    }
}

fn select_blocks(b: &StackedBelief, keep: &[usize]) -> StackedBelief {
    let d = STATE_DIM;
    let idx: Vec<usize> = keep.iter().flat_map(|&k| (d * k)..(d * k + d)).collect();
    let n = idx.len();
    Belief {
        mean: Vector::from_iterator(n, idx.iter().map(|&i| b.mean[i])),
        cov: Mat::from_fn(n, n, |i, j| b.cov[(idx[i], idx[j])]),
        second_moment: Mat::from_fn(n, n, |i, j| b.second_moment[(idx[i], idx[j])]),
    }
}

/// Append an independent track. The cross second moment is the product of
/// the means.
fn append_block(b: &StackedBelief, new: &Belief) -> StackedBelief {
    let n = b.dim();
    let d = new.dim();
    let mut mean = Vector::zeros(n + d);
    mean.rows_mut(0, n).copy_from(&b.mean);
    mean.rows_mut(n, d).copy_from(&new.mean);
    let mut cov = Mat::zeros(n + d, n + d);
    cov.view_mut((0, 0), (n, n)).copy_from(&b.cov);
    cov.view_mut((n, n), (d, d)).copy_from(&new.cov);
    let mut exx = Mat::zeros(n + d, n + d);
    exx.view_mut((0, 0), (n, n)).copy_from(&b.second_moment);
    exx.view_mut((n, n), (d, d)).copy_from(&new.second_moment);
    let cross = &b.mean * new.mean.transpose();
    exx.view_mut((0, n), (n, d)).copy_from(&cross);
    exx.view_mut((n, 0), (d, n)).copy_from(&cross.transpose());
    Belief { mean, cov, second_moment: exx }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub time_index: usize,
    pub objective: f64,
    pub integral: bool,
    pub hypotheses: usize,
    pub pruned: usize,
    pub shared: usize,
    pub fast_path: bool,
    pub lp_iterations: usize,
    pub active_tracks: usize,
    pub births: usize,
    pub terminations: usize,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str =
        "step,objective,integral,hypotheses,pruned,shared,fast_path,lp_iterations,active_tracks,births,terminations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9e},{},{},{},{},{},{},{},{},{}",
            self.time_index,
            self.objective,
            u8::from(self.integral),
            self.hypotheses,
            self.pruned,
            self.shared,
            u8::from(self.fast_path),
            self.lp_iterations,
            self.active_tracks,
            self.births,
            self.terminations
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutput {
    pub diagnostics: StepDiagnostics,
    /// Text form of the association LP when `capture_lp` is set.
    pub lp_dump: Option<String>,
}

/// Everything a step mutates, cloned up front so a failed step leaves the
/// tracker untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    /// Every track ever created, in creation order.
    pub tracks: Vec<Track>,
    /// Indices into `tracks` of live tracks, in stacked order.
    pub active: Vec<usize>,
    pub stacked: StackedBelief,
    /// Unclaimed measurements of the last committed scan.
    pub pending: Option<Scan>,
    pub next_id: usize,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            tracks: Vec::new(),
            active: Vec::new(),
            stacked: Belief { mean: Vector::zeros(0), cov: Mat::zeros(0, 0), second_moment: Mat::zeros(0, 0) },
            pending: None,
            next_id: 1,
        }
    }
}

impl TrackerState {
    fn add_track(&mut self, belief: Belief, status: TrackStatus) {
        self.stacked = append_block(&self.stacked, &belief);
        self.active.push(self.tracks.len());
        self.tracks.push(Track { id: self.next_id, belief, miss_count: 0, hit_streak: 0, status });
        self.next_id += 1;
    }

    fn refresh_beliefs(&mut self) {
        for (k, &i) in self.active.iter().enumerate() {
            self.tracks[i].belief = block(&self.stacked, k);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub scoring: ScoringParams,
    pub models: ModelSet,
    pub meas_model: MeasurementModel,
    state: TrackerState,
}

impl Tracker {
    pub fn new(
        config: TrackerConfig,
        scoring: ScoringParams,
        models: ModelSet,
        meas_model: MeasurementModel,
    ) -> Result<Self> {
        config.validate()?;
        scoring.validate()?;
        if models.is_empty() {
            return Err(invalid("model set is empty"));
        }
        Ok(Self { config, scoring, models, meas_model, state: TrackerState::default() })
    }

    /// Start confirmed tracks from known beliefs (four-dimensional each).
    pub fn seed_tracks(&mut self, beliefs: Vec<Belief>) -> Result<()> {
        for b in beliefs {
            if b.dim() != STATE_DIM {
                return Err(invalid("track beliefs must be four-dimensional"));
            }
            self.state.add_track(b, TrackStatus::Confirmed);
        }
        Ok(())
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn tracks(&self) -> &[Track] {
        &self.state.tracks
    }

    pub fn live_tracks(&self) -> impl Iterator<Item = &Track> {
        self.state.active.iter().map(|&i| &self.state.tracks[i])
    }

    pub fn stacked(&self) -> &StackedBelief {
        &self.state.stacked
    }

    /// Process one window whose first scan is the next to commit. On error
    /// the tracker state is unchanged.
    pub fn step(&mut self, window: &[Scan]) -> Result<StepOutput> {
        let first = window.first().ok_or_else(|| invalid("window needs at least one scan"))?;
        let mut next = self.state.clone();
        let mut out = StepOutput::default();
        out.diagnostics.time_index = first.time_index;
        let t = next.active.len();

        let marg = if t > 0 {
            let beliefs: Vec<Belief> = (0..t).map(|k| block(&next.stacked, k)).collect();
            let enumeration = enumerate_hypotheses(
                &beliefs,
                window,
                &self.models,
                &self.meas_model,
                &self.scoring,
                self.config.hypothesis_cap,
            )?;
            let counts = window.iter().map(Scan::count).collect();
            let problem = AssociationProblem::new(enumeration.hypotheses, t, self.models.len(), counts)?;
            let lp = build_lp(&problem)?;
            if self.config.capture_lp {
                out.lp_dump = Some(lp.dump());
            }
            let sol = solve_lp(&lp)?;
            let marg = marginals(&problem, &sol);
            let system = build_stacked_system(&marg, &self.models, &self.meas_model, first)?;
            let predicted = system.predict(&next.stacked)?;
            next.stacked = system.update(&predicted)?;
            let d = &mut out.diagnostics;
            d.objective = sol.objective;
            d.integral = sol.is_integral;
            d.hypotheses = problem.hypotheses.len();
            d.pruned = enumeration.pruned;
            d.shared = system.rows.len() - system.num_exclusive;
            d.fast_path = system.num_exclusive == system.rows.len();
            d.lp_iterations = sol.iterations;
            Some(marg)
        } else {
            None
        };

        let unassigned = unassigned_measurements(marg.as_ref(), first, self.config.unassigned_threshold);
        let (births, terminations) = self.manage_tracks(&mut next, marg.as_ref(), unassigned)?;
        next.refresh_beliefs();
        out.diagnostics.births = births;
        out.diagnostics.terminations = terminations;
        out.diagnostics.active_tracks = next.active.len();
        self.state = next;
        Ok(out)
    }

    /// Miss counting, confirmation, termination and births. Returns the
    /// number of births and terminations.
    pub fn manage_tracks(
        &self,
        state: &mut TrackerState,
        marg: Option<&Marginals>,
        unassigned: Scan,
    ) -> Result<(usize, usize)> {
        let cfg = &self.config;
        let mut keep = Vec::with_capacity(state.active.len());
        let mut terminations = 0;
        for (k, &i) in state.active.iter().enumerate() {
            let track = &mut state.tracks[i];
            let dummy = marg.map_or(1.0, |m| m.assoc[k][0]);
            if dummy > cfg.miss_threshold {
                track.miss_count += 1;
                track.hit_streak = 0;
            } else {
                track.miss_count = 0;
                track.hit_streak += 1;
                if track.status == TrackStatus::Tentative && track.hit_streak >= cfg.confirm_hits {
                    track.status = TrackStatus::Confirmed;
                }
            }
            if track.miss_count > cfg.max_misses {
                track.status = TrackStatus::Terminated;
                terminations += 1;
            } else {
                keep.push(k);
            }
        }
        if terminations > 0 {
            state.refresh_beliefs();
            state.stacked = select_blocks(&state.stacked, &keep);
            state.active = keep.iter().map(|&k| state.active[k]).collect();
        }

        let mut births = 0;
        let mut remaining = unassigned;
        if cfg.births {
            if let Some(prev) = state.pending.take() {
                let (new, rest) =
                    initiate_tracks(&prev, &remaining, cfg, &self.models, &self.meas_model, &self.scoring)?;
                births = new.len();
                for b in new {
                    state.add_track(b, TrackStatus::Tentative);
                }
                remaining = rest;
            }
        }
        state.pending = Some(remaining);
        Ok((births, terminations))
    }
}

/// Measurements of `scan` whose total target probability is below `threshold`,
/// in scan order.
pub fn unassigned_measurements(marg: Option<&Marginals>, scan: &Scan, threshold: f64) -> Scan {
    let kept = scan
        .measurements
        .iter()
        .enumerate()
        .filter(|(i, _)| marg.is_none_or(|m| 1.0 - m.clutter_prob(i + 1) < threshold))
        .map(|(_, z)| *z)
        .collect();
    Scan::new(scan.time_index, kept)
}

/// Run the initiation LP on two consecutive scans of unclaimed measurements.
/// Returns the new beliefs (at the time of `cur`) and the measurements of
/// `cur` that were not used.
pub fn initiate_tracks(
    prev: &Scan,
    cur: &Scan,
    cfg: &TrackerConfig,
    models: &ModelSet,
    meas_model: &MeasurementModel,
    scoring: &ScoringParams,
) -> Result<(Vec<Belief>, Scan)> {
    if prev.count() == 0 || cur.count() == 0 {
        return Ok((Vec::new(), cur.clone()));
    }
    let gap = cur.time_index.saturating_sub(prev.time_index).max(1) as f64;
    let dt = cfg.dt * gap;
    let pair = [prev.clone(), cur.clone()];
    let tuples = track_init_lp(&pair, models, meas_model, scoring, &cfg.init_options())?;
    let mut used = vec![false; cur.count()];
    let mut out = Vec::new();
    for (meas, p) in tuples {
        if p < cfg.birth_threshold || meas[0] == 0 || meas[1] == 0 {
            continue;
        }
        let z1 = prev.measurements[meas[0] - 1];
        let z2 = cur.measurements[meas[1] - 1];
        out.push(two_point_init(&z1, &z2, dt, meas_model.sigma())?);
        used[meas[1] - 1] = true;
    }
    let rest = cur.measurements.iter().zip(&used).filter(|(_, &u)| !u).map(|(z, _)| *z).collect();
    Ok((out, Scan::new(cur.time_index, rest)))
}

/// Drive a tracker over a scan sequence with a sliding window.
pub fn run_tracker(tracker: &mut Tracker, scans: &[Scan]) -> Result<Vec<StepOutput>> {
    let n = tracker.config.window;
    (0..scans.len()).map(|t| tracker.step(&scans[t..(t + n).min(scans.len())])).collect()
}
