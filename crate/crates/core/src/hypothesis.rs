//! N-scan local hypotheses: gating, likelihood scoring and enumeration.
//!
//! A local hypothesis `(τ, s, r)` pairs target `τ` (0 is the dummy target)
//! with one model index per scan (1-based) and one measurement index per scan
//! (0 is the dummy measurement). Its cost is the negative log likelihood.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::dynamics::{MeasVec, MeasurementModel, ModelSet};
use crate::error::{invalid, Result};
use crate::rcmkf::Belief;

/// Default per-track hypothesis cap.
pub const DEFAULT_CAP: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub time_index: usize,
    /// Real measurements; measurement index `r >= 1` lives at `measurements[r - 1]`.
    pub measurements: Vec<MeasVec>,
}

impl Scan {
    pub fn new(time_index: usize, measurements: Vec<MeasVec>) -> Self {
        Self { time_index, measurements }
    }

    /// Number of real measurements `R_n`.
    pub fn count(&self) -> usize {
        self.measurements.len()
    }

    /// Measurement `r` (1-based); `None` for the dummy index 0 or out of range.
    pub fn get(&self, r: usize) -> Option<&MeasVec> {
        r.checked_sub(1).and_then(|i| self.measurements.get(i))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalHypothesis {
    pub target: usize,
    pub models: Vec<usize>,
    pub meas: Vec<usize>,
    pub cost: f64,
    pub likelihood_log: f64,
}

impl LocalHypothesis {
    pub fn window(&self) -> usize {
        self.meas.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoringParams {
    pub p_d: f64,
    pub lambda_f: f64,
    pub lambda_v: f64,
    pub volume: f64,
    pub gate_gamma: f64,
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_d > 0.0 && self.p_d < 1.0) {
            return Err(invalid(format!("P_d must be in (0,1), got {}", self.p_d)));
        }
        if !(self.lambda_f > 0.0) {
            return Err(invalid("lambda_f must be > 0"));
        }
        if !(self.lambda_v > 0.0) {
            return Err(invalid("lambda_v must be > 0"));
        }
        if !(self.volume > 0.0) {
            return Err(invalid("surveillance volume must be > 0"));
        }
        if !(self.gate_gamma > 0.0) {
            return Err(invalid("gate threshold must be > 0"));
        }
        Ok(())
    }

    /// `log(1 - P_d)`: an existing track assigned the dummy measurement.
    pub fn miss_log(&self) -> f64 {
        (1.0 - self.p_d).ln()
    }

    /// `log(λ_v p_v / (λ_f p_f))` with `p_v = p_f = 1/V`.
    pub fn birth_log(&self) -> f64 {
        (self.lambda_v / self.lambda_f).ln()
    }

    /// `log(P_d N(z; ẑ, S) / (λ_f / V))` given the Gaussian log density.
    pub fn detection_log(&self, log_density: f64) -> f64 {
        self.p_d.ln() + log_density + self.volume.ln() - self.lambda_f.ln()
    }
}

/// Chi-square threshold with two degrees of freedom for the given
/// probability of excluding a target-originated measurement.
pub fn gate_threshold(exclusion_prob: f64) -> f64 {
    -2.0 * exclusion_prob.ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Innovation {
    pub z: Vector2<f64>,
    pub s: Matrix2<f64>,
    s_inv: Matrix2<f64>,
    log_norm: f64,
}

impl Innovation {
    pub fn new(z: Vector2<f64>, s: Matrix2<f64>) -> Result<Self> {
        let det = s.determinant();
        if !(det > 0.0) || !det.is_finite() || s[(0, 0)] <= 0.0 {
            return Err(invalid("innovation covariance is not positive definite"));
        }
        let s_inv = s.try_inverse().ok_or_else(|| invalid("singular innovation covariance"))?;
        let log_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        Ok(Self { z, s, s_inv, log_norm })
    }

    pub fn mahalanobis(&self, z: &MeasVec) -> f64 {
        let d = z - self.z;
        (d.transpose() * self.s_inv * d)[0]
    }

    pub fn log_density(&self, z: &MeasVec) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis(z)
    }
}

/// Indices of measurements inside the ellipsoidal gate, always starting
/// with the dummy index 0.
pub fn gate(predicted_z: &Vector2<f64>, s: &Matrix2<f64>, scan: &Scan, gamma: f64) -> Result<Vec<usize>> {
    let inn = Innovation::new(*predicted_z, *s)?;
    Ok(gate_innovation(&inn, scan, gamma))
}

pub(crate) fn gate_innovation(inn: &Innovation, scan: &Scan, gamma: f64) -> Vec<usize> {
    let mut out = vec![0];
    for (i, z) in scan.measurements.iter().enumerate() {
        if inn.mahalanobis(z) <= gamma {
            out.push(i + 1);
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ChainState {
    pub(crate) mean: Vector4<f64>,
    pub(crate) cov: Matrix4<f64>,
}

/// Fixed-size copies of the model matrices, used on the hot path.
#[derive(Clone, Debug)]
pub(crate) struct FixedModels {
    f: Vec<Matrix4<f64>>,
    q: Vec<Matrix4<f64>>,
    h: nalgebra::Matrix2x4<f64>,
    r: Matrix2<f64>,
}

impl FixedModels {
    pub(crate) fn num_models(&self) -> usize {
        self.f.len()
    }

    pub(crate) fn new(models: &ModelSet, meas: &MeasurementModel) -> Self {
        Self {
            f: models.iter().map(|m| m.f.fixed_view::<4, 4>(0, 0).into_owned()).collect(),
            q: models.iter().map(|m| m.q.fixed_view::<4, 4>(0, 0).into_owned()).collect(),
            h: meas.h.fixed_view::<2, 4>(0, 0).into_owned(),
            r: meas.r.fixed_view::<2, 2>(0, 0).into_owned(),
        }
    }

    pub(crate) fn advance(&self, st: &ChainState, model: usize) -> ChainState {
        let f = &self.f[model];
        ChainState { mean: f * st.mean, cov: f * st.cov * f.transpose() + self.q[model] }
    }

    pub(crate) fn innovation(&self, st: &ChainState) -> Result<Innovation> {
        let s = self.h * st.cov * self.h.transpose() + self.r;
        Innovation::new(self.h * st.mean, (s + s.transpose()) * 0.5)
    }
}

fn chain_start(track: &Belief) -> Result<ChainState> {
    if track.dim() != 4 {
        return Err(invalid("track beliefs must be four-dimensional"));
    }
    Ok(ChainState {
        mean: track.mean.fixed_rows::<4>(0).into_owned(),
        cov: track.cov.fixed_view::<4, 4>(0, 0).into_owned(),
    })
}

/// Pure-prediction chain `ẑ_n, S_n` for the model sequence `s` (1-based).
pub fn prediction_chain(
    track: &Belief,
    s: &[usize],
    models: &ModelSet,
    meas_model: &MeasurementModel,
) -> Result<Vec<Innovation>> {
    let fixed = FixedModels::new(models, meas_model);
    let mut st = chain_start(track)?;
    let mut out = Vec::with_capacity(s.len());
    for &m in s {
        if m == 0 || m > models.len() {
            return Err(invalid(format!("model index {m} out of range 1..={}", models.len())));
        }
        st = fixed.advance(&st, m - 1);
        out.push(fixed.innovation(&st)?);
    }
    Ok(out)
}

/// Log likelihood and cost of one local hypothesis. `track == None` is the
/// dummy target, whose cost is zero.
pub fn score_hypothesis(
    track: Option<&Belief>,
    s: &[usize],
    r: &[usize],
    scans: &[Scan],
    models: &ModelSet,
    meas_model: &MeasurementModel,
    params: &ScoringParams,
) -> Result<(f64, f64)> {
    if s.len() != r.len() || r.len() != scans.len() {
        return Err(invalid("model, measurement and scan vectors differ in length"));
    }
    for (n, (&ri, scan)) in r.iter().zip(scans).enumerate() {
        if ri > scan.count() {
            return Err(invalid(format!("measurement {ri} out of range in scan {n}")));
        }
    }
    let Some(track) = track else {
        return Ok((0.0, 0.0));
    };
    let chain = prediction_chain(track, s, models, meas_model)?;
    let mut log_l = 0.0;
    for ((inn, &ri), scan) in chain.iter().zip(r).zip(scans) {
        log_l += match scan.get(ri) {
            None => params.miss_log(),
            Some(z) => params.detection_log(inn.log_density(z)),
        };
    }
    Ok((log_l, -log_l))
}

#[derive(Clone, Debug, Default)]
pub struct Enumeration {
    pub hypotheses: Vec<LocalHypothesis>,
    /// Hypotheses dropped by the per-track cap.
    pub pruned: usize,
}

/// Enumerate gated local hypotheses for every track over the scan window,
/// followed by one zero-cost dummy-target hypothesis per real measurement.
///
/// Tracks are numbered from 1 in the order given.
pub fn enumerate_hypotheses(
    tracks: &[Belief],
    scans: &[Scan],
    models: &ModelSet,
    meas_model: &MeasurementModel,
    params: &ScoringParams,
    cap: usize,
) -> Result<Enumeration> {
    if scans.is_empty() {
        return Err(invalid("hypothesis window needs at least one scan"));
    }
    if cap == 0 {
        return Err(invalid("hypothesis cap must be positive"));
    }
    if models.is_empty() {
        return Err(invalid("model set is empty"));
    }
    let fixed = FixedModels::new(models, meas_model);
    let mut out = Enumeration::default();
    for (ti, track) in tracks.iter().enumerate() {
        let start = chain_start(track)?;
        let mut local = Vec::new();
        let mut s = Vec::with_capacity(scans.len());
        let mut r = Vec::with_capacity(scans.len());
        expand(&fixed, scans, params, ti + 1, &start, 0, 0.0, &mut s, &mut r, &mut local)?;
        out.pruned += apply_cap(&mut local, cap);
        out.hypotheses.extend(local);
    }
    out.hypotheses.extend(dummy_target_hypotheses(scans));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    fixed: &FixedModels,
    scans: &[Scan],
    params: &ScoringParams,
    target: usize,
    state: &ChainState,
    depth: usize,
    log_l: f64,
    s: &mut Vec<usize>,
    r: &mut Vec<usize>,
    out: &mut Vec<LocalHypothesis>,
) -> Result<()> {
    if depth == scans.len() {
        out.push(LocalHypothesis { target, models: s.clone(), meas: r.clone(), cost: -log_l, likelihood_log: log_l });
        return Ok(());
    }
    let scan = &scans[depth];
    for model in 0..fixed.num_models() {
        let next = fixed.advance(state, model);
        let inn = fixed.innovation(&next)?;
        s.push(model + 1);
        for ri in gate_innovation(&inn, scan, params.gate_gamma) {
            let term = match scan.get(ri) {
                None => params.miss_log(),
                Some(z) => params.detection_log(inn.log_density(z)),
            };
            r.push(ri);
            expand(fixed, scans, params, target, &next, depth + 1, log_l + term, s, r, out)?;
            r.pop();
        }
        s.pop();
    }
    Ok(())
}

/// Keep the `cap` cheapest hypotheses of one track (stable in generation
/// order), always retaining the first all-dummy hypothesis. Returns the
/// number dropped.
fn apply_cap(local: &mut Vec<LocalHypothesis>, cap: usize) -> usize {
    if local.len() <= cap {
        return 0;
    }
    let total = local.len();
    let all_dummy = local.iter().position(|h| h.meas.iter().all(|&r| r == 0));
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| local[a].cost.total_cmp(&local[b].cost).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(cap).collect();
    if let Some(d) = all_dummy {
        if !keep.contains(&d) {
            keep.pop();
            keep.push(d);
        }
    }
    keep.sort_unstable();
    let mut idx = 0;
    local.retain(|_| {
        let k = keep.binary_search(&idx).is_ok();
        idx += 1;
        k
    });
    total - local.len()
}

pub fn dummy_target_hypotheses(scans: &[Scan]) -> Vec<LocalHypothesis> {
    let n = scans.len();
    let mut out = Vec::new();
    for (si, scan) in scans.iter().enumerate() {
        for ri in 1..=scan.count() {
            let mut meas = vec![0; n];
            meas[si] = ri;
            out.push(LocalHypothesis { target: 0, models: vec![1; n], meas, cost: 0.0, likelihood_log: 0.0 });
        }
    }
    out
}
