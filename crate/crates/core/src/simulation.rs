//! Scenario ground truth, detections and Poisson clutter.

use std::fmt::Write as _;

use nalgebra::{Cholesky, Matrix4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ct_transition, cv_transition, process_noise, MeasVec, ModelKind, StateVec};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::Scan;

/// RNG streams derived from one replica seed.
pub const TRUTH_STREAM: u64 = 0;
pub const SCAN_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub kind: ModelKind,
    /// Number of scan periods.
    pub duration: usize,
    /// Turn rate (rad/s), CT only.
    #[serde(default)]
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scan period (s).
    pub dt: f64,
    pub segments: Vec<Segment>,
    /// Explicit `[x, vx, y, vy]` per target. When empty, `num_targets`
    /// targets start abreast at `start`, `spacing` metres apart in y.
    pub initial_states: Vec<[f64; 4]>,
    pub num_targets: usize,
    pub start: [f64; 4],
    pub spacing: f64,
    #[serde(rename = "P_d")]
    pub p_d: f64,
    pub lambda_f: f64,
    pub sigma_z: f64,
    /// Clutter region; defaults to the truth bounding box grown by `region_margin`.
    pub region: Option<Region>,
    pub region_margin: f64,
    pub seed: u64,
    /// Truth process-noise intensity (m²/s³); zero gives noiseless truth.
    pub truth_noise_q: f64,
}

pub const DEG: f64 = std::f64::consts::PI / 180.0;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 5.0,
            segments: vec![
                Segment { kind: ModelKind::Cv, duration: 20, omega: 0.0 },
                Segment { kind: ModelKind::Ct, duration: 18, omega: DEG },
                Segment { kind: ModelKind::Cv, duration: 12, omega: 0.0 },
                Segment { kind: ModelKind::Ct, duration: 6, omega: -3.0 * DEG },
                Segment { kind: ModelKind::Cv, duration: 14, omega: 0.0 },
            ],
            initial_states: Vec::new(),
            num_targets: 3,
            start: [0.0, -150.0, 0.0, 0.0],
            spacing: 1000.0,
            p_d: 0.9,
            lambda_f: 50.0,
            sigma_z: 400.0,
            region: None,
            region_margin: 2000.0,
            seed: 1,
            truth_noise_q: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.segments.is_empty() {
            return bad("at least one segment is required".into());
        }
        if let Some(i) = self.segments.iter().position(|s| s.duration == 0) {
            return bad(format!("segment {i} has zero duration"));
        }
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return bad(format!("P_d must lie in (0,1], got {}", self.p_d));
        }
        if !(self.lambda_f >= 0.0 && self.lambda_f.is_finite()) {
            return bad(format!("lambda_f must be >= 0, got {}", self.lambda_f));
        }
        if !(self.sigma_z > 0.0 && self.sigma_z.is_finite()) {
            return bad(format!("sigma_z must be > 0, got {}", self.sigma_z));
        }
        if !(self.truth_noise_q >= 0.0) {
            return bad("truth_noise_q must be >= 0".into());
        }
        if !(self.region_margin >= 0.0) {
            return bad("region_margin must be >= 0".into());
        }
        if let Some(r) = self.region {
            if !(r.area() > 0.0) || r.x_max <= r.x_min {
                return bad("region must have positive area".into());
            }
        }
        if self.initial_states.is_empty() && self.num_targets == 0 {
            return bad("scenario has no targets".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn initial(&self) -> Vec<StateVec> {
        if !self.initial_states.is_empty() {
            return self.initial_states.iter().map(|s| StateVec::from_row_slice(s)).collect();
        }
        (0..self.num_targets)
            .map(|k| {
                let s = self.start;
                StateVec::new(s[0], s[1], s[2] + k as f64 * self.spacing, s[3])
            })
            .collect()
    }
}

/// True states, one entry per step, each a list of `(target id, state)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub steps: Vec<Vec<(usize, StateVec)>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Axis-aligned bounding box of all true positions.
    pub fn bounding_box(&self) -> Option<Region> {
        let mut it = self.steps.iter().flatten().map(|(_, x)| (x[0], x[2]));
        let (x0, y0) = it.next()?;
        let mut r = Region { x_min: x0, x_max: x0, y_min: y0, y_max: y0 };
        for (x, y) in it {
            r.x_min = r.x_min.min(x);
            r.x_max = r.x_max.max(x);
            r.y_min = r.y_min.min(y);
            r.y_max = r.y_max.max(y);
        }
        Some(r)
    }

    pub fn state_of(&self, step: usize, id: usize) -> Option<&StateVec> {
        self.steps.get(step)?.iter().find(|(t, _)| *t == id).map(|(_, x)| x)
    }
}

/// Clutter region actually used for `cfg` and `truth`.
pub fn region_for(cfg: &ScenarioConfig, truth: &GroundTruth) -> Result<Region> {
    if let Some(r) = cfg.region {
        return Ok(r);
    }
    let b = truth.bounding_box().ok_or_else(|| invalid("empty ground truth has no region"))?;
    let m = cfg.region_margin;
    let r = Region { x_min: b.x_min - m, x_max: b.x_max + m, y_min: b.y_min - m, y_max: b.y_max + m };
    if !(r.area() > 0.0) {
        return Err(invalid("degenerate clutter region; set region or region_margin"));
    }
    Ok(r)
}

/// Propagate every target through the segment list. Step 0 holds the
/// initial states; the truth has `cfg.steps()` entries.
pub fn generate_truth(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, TRUTH_STREAM);
    let noise = if cfg.truth_noise_q > 0.0 {
        let q = process_noise(cfg.truth_noise_q, cfg.dt)?;
        let q4 = Matrix4::from_iterator(q.iter().copied());
        Some(Cholesky::new(q4).ok_or_else(|| Error::Internal("process noise not positive definite".into()))?)
    } else {
        None
    };
    let mut states = cfg.initial();
    let mut steps = Vec::with_capacity(cfg.steps());
    let mut transitions = Vec::with_capacity(cfg.steps());
    for seg in &cfg.segments {
        let f = match seg.kind {
            ModelKind::Cv => cv_transition(cfg.dt)?,
            ModelKind::Ct => ct_transition(seg.omega, cfg.dt)?,
        };
        let f4 = Matrix4::from_iterator(f.iter().copied());
        transitions.extend(std::iter::repeat_n(f4, seg.duration));
    }
    for (k, f) in transitions.iter().enumerate() {
        if k > 0 {
            for x in states.iter_mut() {
                *x = f * *x;
                if let Some(ch) = &noise {
                    let w = StateVec::from_fn(|_, _| StandardNormal.sample(&mut rng));
                    *x += ch.l() * w;
                }
            }
        }
        steps.push(states.iter().enumerate().map(|(i, x)| (i + 1, *x)).collect());
    }
    Ok(GroundTruth { steps })
}

/// Scans with the true origin of each measurement (`None` for clutter).
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSet {
    pub scans: Vec<Scan>,
    pub origins: Vec<Vec<Option<usize>>>,
}

impl ScanSet {
    /// Measurement of target `id` at `step`, if it was detected.
    pub fn detection(&self, step: usize, id: usize) -> Option<MeasVec> {
        let k = self.origins.get(step)?.iter().position(|o| *o == Some(id))?;
        Some(self.scans[step].measurements[k])
    }
}

pub fn generate_scans<R: Rng + ?Sized>(truth: &GroundTruth, cfg: &ScenarioConfig, rng: &mut R) -> Result<ScanSet> {
    if truth.is_empty() {
        return Err(invalid("ground truth is empty"));
    }
    cfg.validate()?;
    let region = region_for(cfg, truth)?;
    let noise = Normal::new(0.0, cfg.sigma_z).map_err(|e| invalid(e.to_string()))?;
    let clutter =
        if cfg.lambda_f > 0.0 { Some(Poisson::new(cfg.lambda_f).map_err(|e| invalid(e.to_string()))?) } else { None };
    let mut scans = Vec::with_capacity(truth.len());
    let mut origins = Vec::with_capacity(truth.len());
    for (k, live) in truth.steps.iter().enumerate() {
        let mut items: Vec<(MeasVec, Option<usize>)> = Vec::new();
        for (id, x) in live {
            if rng.random::<f64>() < cfg.p_d {
                let z = MeasVec::new(x[0] + noise.sample(rng), x[2] + noise.sample(rng));
                items.push((z, Some(*id)));
            }
        }
        let n_clutter = clutter.as_ref().map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..n_clutter {
            let z = MeasVec::new(
                rng.random_range(region.x_min..region.x_max),
                rng.random_range(region.y_min..region.y_max),
            );
            items.push((z, None));
        }
        items.shuffle(rng);
        scans.push(Scan::new(k, items.iter().map(|i| i.0).collect()));
        origins.push(items.into_iter().map(|i| i.1).collect());
    }
    Ok(ScanSet { scans, origins })
}

/// Truth and scans for one replica seed.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(GroundTruth, ScanSet)> {
    let truth = generate_truth(cfg)?;
    let scans = generate_scans(&truth, cfg, &mut rng_for(cfg.seed, SCAN_STREAM))?;
    Ok((truth, scans))
}

pub const TRUTH_HEADER: &str = "time,target_id,x,y,vx,vy";
pub const SCANS_HEADER: &str = "time,meas_id,x,y,origin";

fn meta_lines(meta: &[(String, String)]) -> String {
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
    s
}

pub fn truth_csv(truth: &GroundTruth, meta: &[(String, String)]) -> String {
    let mut s = meta_lines(meta);
    s.push_str(TRUTH_HEADER);
    s.push('\n');
    for (k, live) in truth.steps.iter().enumerate() {
        for (id, x) in live {
            let _ = writeln!(s, "{k},{id},{},{},{},{}", x[0], x[2], x[1], x[3]);
        }
    }
    s
}

pub fn scans_csv(set: &ScanSet, meta: &[(String, String)]) -> String {
    let mut s = meta_lines(meta);
    s.push_str(SCANS_HEADER);
    s.push('\n');
    for (scan, origin) in set.scans.iter().zip(&set.origins) {
        for (i, (z, o)) in scan.measurements.iter().zip(origin).enumerate() {
            let o = o.map_or(-1, |id| id as i64);
            let _ = writeln!(s, "{},{},{},{},{o}", scan.time_index, i + 1, z[0], z[1]);
        }
    }
    s
}

fn data_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(Error::Config(format!("expected CSV header `{header}`"))),
    }
    Ok(lines.map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols.get(i)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Config(format!("line {line}: bad or missing column {}", i + 1)))
}

/// Parse scans written by [`scans_csv`]. Time indices must start at 0 and be
/// nondecreasing; empty scans in between are filled in.
pub fn parse_scans_csv(text: &str) -> Result<ScanSet> {
    let mut set = ScanSet { scans: Vec::new(), origins: Vec::new() };
    for (line, cols) in data_lines(text, SCANS_HEADER)? {
        let t: usize = field(&cols, 0, line)?;
        let x: f64 = field(&cols, 2, line)?;
        let y: f64 = field(&cols, 3, line)?;
        let o: i64 = field(&cols, 4, line)?;
        if t + 1 < set.scans.len() {
            return Err(Error::Config(format!("line {line}: time index goes backwards")));
        }
        while set.scans.len() <= t {
            set.scans.push(Scan::new(set.scans.len(), Vec::new()));
            set.origins.push(Vec::new());
        }
        set.scans[t].measurements.push(MeasVec::new(x, y));
        set.origins[t].push(usize::try_from(o).ok());
    }
    Ok(set)
}

pub fn parse_truth_csv(text: &str) -> Result<GroundTruth> {
    let mut steps: Vec<Vec<(usize, StateVec)>> = Vec::new();
    for (line, cols) in data_lines(text, TRUTH_HEADER)? {
        let t: usize = field(&cols, 0, line)?;
        let id: usize = field(&cols, 1, line)?;
        let v: Vec<f64> = (2..6).map(|i| field(&cols, i, line)).collect::<Result<_>>()?;
        while steps.len() <= t {
            steps.push(Vec::new());
        }
        steps[t].push((id, StateVec::new(v[0], v[2], v[1], v[3])));
    }
    Ok(GroundTruth { steps })
}
