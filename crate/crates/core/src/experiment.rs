//! Run configuration, algorithm selection and single-replica execution.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{imm_step, kf_predict, kf_update, ImmBelief, ImmMhtTracker, TransitionMatrix};
use crate::dynamics::{
    build_models, default_model_specs, position_measurement, MeasVec, MeasurementModel, ModelSet, ModelSpec,
};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{ospa, OspaParams, RunResult};
use crate::hypothesis::{gate_threshold, ScoringParams};
use crate::linalg::Vector;
use crate::rcmkf::Belief;
use crate::simulation::{region_for, rng_for, simulate, GroundTruth, Region, ScanSet, ScenarioConfig, INIT_STREAM};
use crate::tracker::{two_point_init, StepDiagnostics, TrackStatus, Tracker, TrackerConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Expected new targets per scan.
    pub lambda_v: f64,
    /// Probability that the gate rejects a target-originated measurement.
    pub gate_exclusion: f64,
    /// Overrides the scenario's detection probability for scoring.
    #[serde(rename = "P_d")]
    pub p_d: Option<f64>,
    /// Overrides the scenario's clutter rate for scoring.
    pub lambda_f: Option<f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { lambda_v: 1e-4, gate_exclusion: 1e-4, p_d: None, lambda_f: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario file, relative to the run config. Ignored when `scenario` is given.
    pub scenario_file: Option<PathBuf>,
    pub scenario: Option<ScenarioConfig>,
    pub algorithm: String,
    pub algorithms: Vec<String>,
    pub window: usize,
    /// Mode transition matrix for IMM variants without an explicit `:P1..3` suffix.
    pub transition: Vec<Vec<f64>>,
    pub ospa: OspaParams,
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub runs: usize,
    /// Start one confirmed track per target from its first two scans.
    pub truth_init: bool,
    /// Track births from unclaimed measurements; defaults to `!truth_init`.
    pub births: Option<bool>,
    /// 1-based model index used by `kf-oracle`.
    pub oracle_model: usize,
    pub models: Vec<ModelSpec>,
    pub tracker: TrackerConfig,
    pub scoring: ScoringConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario_file: None,
            scenario: None,
            algorithm: "rmm-mht".into(),
            algorithms: ["rmm-mht", "imm-mht:P1", "imm-mht:P2", "imm-mht:P3"].map(String::from).to_vec(),
            window: 2,
            transition: TransitionMatrix::p1().rows().to_vec(),
            ospa: OspaParams::default(),
            out: None,
            seed: None,
            runs: 100,
            truth_init: true,
            births: None,
            oracle_model: 2,
            models: default_model_specs(),
            tracker: TrackerConfig::default(),
            scoring: ScoringConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a run config; a relative `scenario_file` is resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.scenario.is_none() {
            if let Some(file) = &cfg.scenario_file {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
                cfg.scenario = Some(ScenarioConfig::from_toml(&text)?);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    /// Effective scenario, with the seed override applied.
    pub fn scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone().unwrap_or_default();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let scenario = self.scenario();
        scenario.validate()?;
        let mut tracker = self.tracker.clone();
        tracker.window = self.window;
        tracker.dt = scenario.dt;
        tracker.births = self.births.unwrap_or(!self.truth_init);
        tracker.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ospa.validate().map_err(|e| Error::Config(e.to_string()))?;
        let models = build_models(&self.models, scenario.dt).map_err(|e| Error::Config(e.to_string()))?;
        if self.oracle_model == 0 || self.oracle_model > models.len() {
            return Err(Error::Config(format!("oracle_model {} out of range", self.oracle_model)));
        }
        let transition = TransitionMatrix::new(self.transition.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.scoring;
        if !(s.gate_exclusion > 0.0 && s.gate_exclusion < 1.0) {
            return Err(Error::Config("gate_exclusion must lie in (0,1)".into()));
        }
        Ok(Experiment {
            meas_model: position_measurement(scenario.sigma_z)?,
            scenario,
            tracker,
            models,
            scoring: s.clone(),
            ospa: self.ospa,
            truth_init: self.truth_init,
            transition,
            oracle_model: self.oracle_model - 1,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Fully resolved, validated experiment settings.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub tracker: TrackerConfig,
    pub models: ModelSet,
    pub meas_model: MeasurementModel,
    pub scoring: ScoringConfig,
    pub ospa: OspaParams,
    pub truth_init: bool,
    pub transition: TransitionMatrix,
    /// 0-based.
    pub oracle_model: usize,
}

impl Experiment {
    pub fn scoring_params(&self, volume: f64) -> ScoringParams {
        let s = &self.scoring;
        ScoringParams {
            p_d: s.p_d.unwrap_or(self.scenario.p_d).min(1.0 - 1e-9),
            lambda_f: s.lambda_f.unwrap_or(self.scenario.lambda_f).max(1e-9),
            lambda_v: s.lambda_v,
            volume,
            gate_gamma: gate_threshold(s.gate_exclusion),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    RmmMht,
    ImmMht { label: String, pij: TransitionMatrix },
    Imm { label: String, pij: TransitionMatrix },
    KfOracle,
}

impl Algorithm {
    /// `rmm-mht`, `kf-oracle`, `imm-mht[:P1|P2|P3]`, `imm[:P1|P2|P3]`.
    /// Without a suffix the IMM variants use `default`.
    pub fn parse(s: &str, default: &TransitionMatrix) -> Result<Self> {
        let (base, suffix) = match s.split_once(':') {
            Some((b, x)) => (b, Some(x)),
            None => (s, None),
        };
        let pick = |suffix: Option<&str>| -> Result<(String, TransitionMatrix)> {
            match suffix {
                None => Ok((String::new(), default.clone())),
                Some("P1") => Ok(("-P1".into(), TransitionMatrix::p1())),
                Some("P2") => Ok(("-P2".into(), TransitionMatrix::p2())),
                Some("P3") => Ok(("-P3".into(), TransitionMatrix::p3())),
                Some(x) => Err(Error::Config(format!("unknown transition matrix `{x}` (use P1, P2 or P3)"))),
            }
        };
        match base {
            "rmm-mht" if suffix.is_none() => Ok(Self::RmmMht),
            "kf-oracle" if suffix.is_none() => Ok(Self::KfOracle),
            "imm-mht" => {
                let (label, pij) = pick(suffix)?;
                Ok(Self::ImmMht { label: format!("imm-mht{label}"), pij })
            }
            "imm" => {
                let (label, pij) = pick(suffix)?;
                Ok(Self::Imm { label: format!("imm{label}"), pij })
            }
            _ => Err(Error::Config(format!(
                "unknown algorithm `{s}` (expected rmm-mht, imm-mht[:Pk], imm[:Pk] or kf-oracle)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::RmmMht => "rmm-mht".into(),
            Self::KfOracle => "kf-oracle".into(),
            Self::ImmMht { label, .. } | Self::Imm { label, .. } => label.clone(),
        }
    }

    /// Filters that read the true measurement origins.
    pub fn needs_origins(&self) -> bool {
        matches!(self, Self::Imm { .. } | Self::KfOracle)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackEstimate {
    pub id: usize,
    pub status: TrackStatus,
    /// `[x, vx, y, vy]`.
    pub state: Vector,
}

impl TrackEstimate {
    pub fn position(&self) -> MeasVec {
        MeasVec::new(self.state[0], self.state[2])
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackOutput {
    /// `(step, live tracks after committing that step)`.
    pub estimates: Vec<(usize, Vec<TrackEstimate>)>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub lp_dumps: Vec<(usize, String)>,
}

pub const TRACKS_HEADER: &str = "step,track_id,status,x,y,vx,vy";

impl TrackOutput {
    pub fn tracks_csv(&self) -> String {
        let mut s = String::from(TRACKS_HEADER);
        s.push('\n');
        for (k, est) in &self.estimates {
            for e in est {
                let status = match e.status {
                    TrackStatus::Tentative => "tentative",
                    TrackStatus::Confirmed => "confirmed",
                    TrackStatus::Terminated => "terminated",
                };
                let x = &e.state;
                let _ = writeln!(s, "{k},{},{status},{:.6},{:.6},{:.6},{:.6}", e.id, x[0], x[2], x[1], x[3]);
            }
        }
        s
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(StepDiagnostics::CSV_HEADER);
        s.push('\n');
        for d in &self.diagnostics {
            s.push_str(&d.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Two-point starts for every target alive at steps 0 and 1: each uses the
/// target's own detection when present, otherwise an independent noisy
/// sample of its true position. The beliefs refer to step 1.
pub fn truth_aided_init(
    truth: &GroundTruth,
    scans: &ScanSet,
    sigma: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<(usize, Belief)>> {
    use rand_distr::{Distribution, Normal};
    if truth.len() < 2 || scans.scans.len() < 2 {
        return Err(invalid("truth-aided initialisation needs at least two steps"));
    }
    let mut rng = rng_for(seed, INIT_STREAM);
    let noise = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::new();
    for (id, _) in &truth.steps[0] {
        let Some(x1) = truth.state_of(1, *id) else { continue };
        let x0 = truth.state_of(0, *id).expect("listed at step 0");
        let mut pick = |step: usize, x: &crate::dynamics::StateVec| {
            scans
                .detection(step, *id)
                .unwrap_or_else(|| MeasVec::new(x[0] + noise.sample(&mut rng), x[2] + noise.sample(&mut rng)))
        };
        let z0 = pick(0, x0);
        let z1 = pick(1, x1);
        out.push((*id, two_point_init(&z0, &z1, dt, sigma)?));
    }
    Ok(out)
}

fn measurement_region(scans: &ScanSet) -> Option<Region> {
    let mut it = scans.scans.iter().flat_map(|s| s.measurements.iter());
    let z = it.next()?;
    let mut r = Region { x_min: z[0], x_max: z[0], y_min: z[1], y_max: z[1] };
    for z in it {
        r.x_min = r.x_min.min(z[0]);
        r.x_max = r.x_max.max(z[0]);
        r.y_min = r.y_min.min(z[1]);
        r.y_max = r.y_max.max(z[1]);
    }
    Some(r)
}

/// Surveillance volume used for scoring.
pub fn surveillance_volume(exp: &Experiment, truth: Option<&GroundTruth>, scans: &ScanSet) -> Result<f64> {
    let region = match (exp.scenario.region, truth) {
        (Some(r), _) => r,
        (None, Some(t)) => region_for(&exp.scenario, t)?,
        (None, None) => {
            let m = exp.scenario.region_margin;
            let r = measurement_region(scans).ok_or_else(|| invalid("no measurements to size the region"))?;
            Region { x_min: r.x_min - m, x_max: r.x_max + m, y_min: r.y_min - m, y_max: r.y_max + m }
        }
    };
    let v = region.area();
    if !(v > 0.0) {
        return Err(invalid("surveillance region has no area"));
    }
    Ok(v)
}

/// Run one algorithm over a scan sequence. `seed` drives the truth-aided
/// initialisation only.
pub fn run_algorithm(
    exp: &Experiment,
    algo: &Algorithm,
    truth: Option<&GroundTruth>,
    scans: &ScanSet,
    seed: u64,
) -> Result<TrackOutput> {
    let volume = surveillance_volume(exp, truth, scans)?;
    let scoring = exp.scoring_params(volume);
    let sigma = exp.scenario.sigma_z;
    let dt = exp.scenario.dt;
    let init = match truth {
        Some(t) if exp.truth_init => Some(truth_aided_init(t, scans, sigma, dt, seed)?),
        _ => None,
    };
    if algo.needs_origins() && init.is_none() {
        return Err(invalid(format!("{} needs ground truth and truth_init", algo.name())));
    }
    let start = if init.is_some() { 2 } else { 0 };
    let scans_v = &scans.scans;
    let n = exp.tracker.window;
    let window = |t: usize| &scans_v[t..(t + n).min(scans_v.len())];
    let mut out = TrackOutput::default();

    match algo {
        Algorithm::RmmMht => {
            let mut tr = Tracker::new(exp.tracker.clone(), scoring, exp.models.clone(), exp.meas_model.clone())?;
            if let Some(init) = &init {
                tr.seed_tracks(init.iter().map(|(_, b)| b.clone()).collect())?;
            }
            for t in start..scans_v.len() {
                let step = tr.step(window(t))?;
                record_lp(&mut out, t, step.lp_dump);
                out.diagnostics.push(step.diagnostics);
                let est = tr
                    .live_tracks()
                    .map(|k| TrackEstimate { id: k.id, status: k.status, state: k.belief.mean.clone() })
                    .collect();
                out.estimates.push((t, est));
            }
        }
        Algorithm::ImmMht { pij, .. } => {
            let mut tr = ImmMhtTracker::new(
                exp.tracker.clone(),
                scoring,
                exp.models.clone(),
                exp.meas_model.clone(),
                pij.clone(),
            )?;
            if let Some(init) = &init {
                tr.seed_tracks(init.iter().map(|(_, b)| b.clone()).collect())?;
            }
            for t in start..scans_v.len() {
                let step = tr.step(window(t))?;
                record_lp(&mut out, t, step.lp_dump);
                out.diagnostics.push(step.diagnostics);
                let est = tr
                    .live_tracks()
                    .map(|k| TrackEstimate { id: k.id, status: k.status, state: k.belief.combined().0 })
                    .collect();
                out.estimates.push((t, est));
            }
        }
        Algorithm::Imm { pij, .. } => {
            let init = init.expect("checked above");
            let s = exp.models.len();
            let mut beliefs: Vec<(usize, ImmBelief)> = init
                .iter()
                .map(|(id, b)| Ok((*id, ImmBelief::new(b.mean.clone(), b.cov.clone(), vec![1.0 / s as f64; s])?)))
                .collect::<Result<_>>()?;
            for t in start..scans_v.len() {
                for (id, b) in beliefs.iter_mut() {
                    let z = scans.detection(t, *id);
                    *b = imm_step(b, pij, &exp.models, &exp.meas_model, z.as_ref())?;
                }
                let est = beliefs
                    .iter()
                    .map(|(id, b)| TrackEstimate { id: *id, status: TrackStatus::Confirmed, state: b.combined().0 })
                    .collect();
                out.estimates.push((t, est));
            }
        }
        Algorithm::KfOracle => {
            let init = init.expect("checked above");
            let m = &exp.models[exp.oracle_model];
            let h = &exp.meas_model;
            let mut beliefs: Vec<_> = init.into_iter().map(|(id, b)| (id, b.mean, b.cov)).collect();
            for t in start..scans_v.len() {
                for (id, x, p) in beliefs.iter_mut() {
                    let (xp, pp) = kf_predict(x, p, &m.f, &m.q)?;
                    (*x, *p) = match scans.detection(t, *id) {
                        Some(z) => kf_update(&xp, &pp, &h.h, &h.r, &Vector::from_column_slice(z.as_slice()))?,
                        None => (xp, pp),
                    };
                }
                let est = beliefs
                    .iter()
                    .map(|(id, x, _)| TrackEstimate { id: *id, status: TrackStatus::Confirmed, state: x.clone() })
                    .collect();
                out.estimates.push((t, est));
            }
        }
    }
    Ok(out)
}

fn record_lp(out: &mut TrackOutput, t: usize, dump: Option<String>) {
    if let Some(d) = dump {
        out.lp_dumps.push((t, d));
    }
}

/// OSPA of confirmed-track positions against the truth at each recorded step.
pub fn score_output(
    output: &TrackOutput,
    truth: &GroundTruth,
    params: &OspaParams,
) -> (Vec<usize>, Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut steps = Vec::new();
    let mut values = Vec::new();
    let mut n_truth = Vec::new();
    let mut n_tracks = Vec::new();
    for (k, est) in &output.estimates {
        let x: Vec<MeasVec> = truth.steps[*k].iter().map(|(_, s)| MeasVec::new(s[0], s[2])).collect();
        let y: Vec<MeasVec> =
            est.iter().filter(|e| e.status == TrackStatus::Confirmed).map(TrackEstimate::position).collect();
        steps.push(*k);
        values.push(ospa(&x, &y, params));
        n_truth.push(x.len());
        n_tracks.push(y.len());
    }
    (steps, values, n_truth, n_tracks)
}

/// One Monte Carlo replica: simulate with seed `scenario.seed + run`, track,
/// score.
pub fn run_replica(exp: &Experiment, algo: &Algorithm, run: usize) -> Result<RunResult> {
    let mut scenario = exp.scenario.clone();
    scenario.seed = scenario.seed.wrapping_add(run as u64);
    let (truth, scans) = simulate(&scenario)?;
    let output = run_algorithm(exp, algo, Some(&truth), &scans, scenario.seed)?;
    let (steps, ospa, n_truth, n_tracks) = score_output(&output, &truth, &exp.ospa);
    Ok(RunResult { algorithm: algo.name(), run, steps, ospa, n_truth, n_tracks })
}

/// `# key: value` metadata lines for CSV outputs.
pub fn metadata(seed: u64, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut meta = vec![("version".to_string(), VERSION.to_string()), ("seed".to_string(), seed.to_string())];
    meta.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    meta
}

pub fn with_metadata(meta: &[(String, String)], body: &str) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        for (i, line) in v.lines().enumerate() {
            if i == 0 {
                let _ = writeln!(s, "# {k}: {line}");
            } else {
                let _ = writeln!(s, "#   {line}");
            }
        }
    }
    s.push_str(body);
    s
}
