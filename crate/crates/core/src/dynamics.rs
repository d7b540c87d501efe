//! Linear motion and measurement models for a planar target.
//!
//! The state is ordered `[px, vx, py, vy]` (metres, metres per second).

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Mat;

pub type StateVec = Vector4<f64>;
pub type MeasVec = Vector2<f64>;

pub const STATE_DIM: usize = 4;
pub const MEAS_DIM: usize = 2;

/// Turn rates below this magnitude (rad/s) use the constant-velocity limit.
pub const SMALL_OMEGA: f64 = 1e-9;

pub fn cv_transition(dt: f64) -> Result<Mat> {
    if !dt.is_finite() {
        return Err(invalid(format!("non-finite dt {dt}")));
    }
    let mut f = Mat::identity(4, 4);
    f[(0, 1)] = dt;
    f[(2, 3)] = dt;
    Ok(f)
}

/// Coordinated-turn transition with turn rate `omega` (rad/s, positive is
/// counter-clockwise).
pub fn ct_transition(omega: f64, dt: f64) -> Result<Mat> {
    if !omega.is_finite() || !dt.is_finite() {
        return Err(invalid(format!("non-finite omega {omega} or dt {dt}")));
    }
    if dt < 0.0 {
        return Err(invalid(format!("negative dt {dt}")));
    }
    if omega.abs() < SMALL_OMEGA {
        return cv_transition(dt);
    }
    let (s, c) = (omega * dt).sin_cos();
    let a = s / omega;
    let b = (1.0 - c) / omega;
    #[rustfmt::skip]
    let f = Mat::from_row_slice(4, 4, &[
        1.0, a,   0.0, -b,
        0.0, c,   0.0, -s,
        0.0, b,   1.0,  a,
        0.0, s,   0.0,  c,
    ]);
    Ok(f)
}

/// Discretised white-noise-acceleration covariance with intensity `q`.
pub fn process_noise(q: f64, dt: f64) -> Result<Mat> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(invalid(format!("process noise intensity must be >= 0, got {q}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be > 0, got {dt}")));
    }
    let (d1, d2, d3) = (dt, dt * dt / 2.0, dt * dt * dt / 3.0);
    let mut m = Mat::zeros(4, 4);
    for base in [0, 2] {
        m[(base, base)] = q * d3;
        m[(base, base + 1)] = q * d2;
        m[(base + 1, base)] = q * d2;
        m[(base + 1, base + 1)] = q * d1;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    pub label: String,
    pub f: Mat,
    pub q: Mat,
}

impl MotionModel {
    pub fn new(label: impl Into<String>, f: Mat, q: Mat) -> Result<Self> {
        if f.shape() != (4, 4) || q.shape() != (4, 4) {
            return Err(invalid("motion model matrices must be 4x4"));
        }
        if !crate::linalg::is_symmetric(&q, 1e-12) || crate::linalg::min_eigenvalue(&q) < -1e-9 {
            return Err(invalid("process noise must be symmetric PSD"));
        }
        Ok(Self { label: label.into(), f, q })
    }

    pub fn cv(label: impl Into<String>, q: f64, dt: f64) -> Result<Self> {
        Self::new(label, cv_transition(dt)?, process_noise(q, dt)?)
    }

    pub fn ct(label: impl Into<String>, omega: f64, q: f64, dt: f64) -> Result<Self> {
        Self::new(label, ct_transition(omega, dt)?, process_noise(q, dt)?)
    }
}

pub type ModelSet = Vec<MotionModel>;

/// Declarative model description, as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub q: f64,
    #[serde(default)]
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Cv,
    Ct,
}

impl ModelSpec {
    pub fn build(&self, dt: f64) -> Result<MotionModel> {
        match self.kind {
            ModelKind::Cv => MotionModel::cv(format!("CV(q={})", self.q), self.q, dt),
            ModelKind::Ct => MotionModel::ct(format!("CT(w={},q={})", self.omega, self.q), self.omega, self.q, dt),
        }
    }
}

/// Two constant-velocity models, low (0.01) and high (4) noise intensity.
pub fn default_model_specs() -> Vec<ModelSpec> {
    vec![ModelSpec { kind: ModelKind::Cv, q: 0.01, omega: 0.0 }, ModelSpec { kind: ModelKind::Cv, q: 4.0, omega: 0.0 }]
}

pub fn build_models(specs: &[ModelSpec], dt: f64) -> Result<ModelSet> {
    if specs.is_empty() {
        return Err(invalid("model set is empty"));
    }
    specs.iter().map(|s| s.build(dt)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub h: Mat,
    pub r: Mat,
}

impl MeasurementModel {
    pub fn sigma(&self) -> f64 {
        self.r[(0, 0)].sqrt()
    }
}

/// Position-only sensor with isotropic noise of standard deviation `sigma` (m).
pub fn position_measurement(sigma: f64) -> Result<MeasurementModel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("measurement sigma must be > 0, got {sigma}")));
    }
    let mut h = Mat::zeros(2, 4);
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    Ok(MeasurementModel { h, r: Mat::identity(2, 2) * (sigma * sigma) })
}

pub fn position_of(x: &StateVec) -> MeasVec {
    MeasVec::new(x[0], x[2])
}
