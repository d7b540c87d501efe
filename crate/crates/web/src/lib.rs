//! Browser bindings: simulate and track a scenario, run a small Monte Carlo
//! comparison, and solve a random association instance both as an LP and as
//! a 0-1 program. Every entry point returns a JSON string.

use rmmht::association::{build_lp, marginals, solve_ip, solve_lp};
use rmmht::evaluation::monte_carlo;
use rmmht::experiment::{run_algorithm, score_output, Algorithm, RunConfig};
use rmmht::oracle::{random_problem, InstanceShape};
use rmmht::simulation::{rng_for, simulate};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest replica count accepted by [`monte_carlo_ospa`].
pub const MAX_RUNS: usize = 50;

#[derive(Serialize)]
struct TrackPoint {
    step: usize,
    id: usize,
    confirmed: bool,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct TrackingView {
    algorithm: String,
    truth: Vec<Vec<[f64; 2]>>,
    measurements: Vec<Vec<[f64; 2]>>,
    tracks: Vec<TrackPoint>,
    ospa_steps: Vec<usize>,
    ospa: Vec<f64>,
}

#[derive(Serialize)]
struct Curve {
    algorithm: String,
    steps: Vec<usize>,
    mean_ospa: Vec<f64>,
    time_mean: f64,
}

#[derive(Serialize)]
struct HypothesisView {
    target: usize,
    meas: Vec<usize>,
    cost: f64,
    lp: f64,
    ip: f64,
}

#[derive(Serialize)]
struct AssociationView {
    meas_counts: Vec<usize>,
    hypotheses: Vec<HypothesisView>,
    lp_objective: f64,
    ip_objective: f64,
    lp_integral: bool,
    /// Per target: probability of the miss, then of each first-scan measurement.
    first_scan_marginals: Vec<Vec<f64>>,
}

fn config(seed: u64, p_d: f64, lambda_f: f64) -> RunConfig {
    let mut cfg = RunConfig { seed: Some(seed), ..RunConfig::default() };
    let mut scenario = cfg.scenario();
    scenario.p_d = p_d;
    scenario.lambda_f = lambda_f;
    cfg.scenario = Some(scenario);
    cfg
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Simulate the preset with the given seed, detection probability and
/// clutter rate, then run one algorithm over it.
pub fn tracking_json(seed: u64, p_d: f64, lambda_f: f64, algorithm: &str) -> Result<String, String> {
    let cfg = config(seed, p_d, lambda_f);
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let algo = Algorithm::parse(algorithm, &exp.transition).map_err(|e| e.to_string())?;
    let (truth, scans) = simulate(&exp.scenario).map_err(|e| e.to_string())?;
    let out = run_algorithm(&exp, &algo, Some(&truth), &scans, exp.scenario.seed).map_err(|e| e.to_string())?;
    let (ospa_steps, ospa, _, _) = score_output(&out, &truth, &exp.ospa);
    let tracks = out
        .estimates
        .iter()
        .flat_map(|(step, est)| {
            est.iter().map(move |e| TrackPoint {
                step: *step,
                id: e.id,
                confirmed: e.status == rmmht::tracker::TrackStatus::Confirmed,
                x: e.state[0],
                y: e.state[2],
            })
        })
        .collect();
    to_json(&TrackingView {
        algorithm: algo.name(),
        truth: truth.steps.iter().map(|s| s.iter().map(|(_, x)| [x[0], x[2]]).collect()).collect(),
        measurements: scans.scans.iter().map(|s| s.measurements.iter().map(|z| [z[0], z[1]]).collect()).collect(),
        tracks,
        ospa_steps,
        ospa,
    })
}

/// Mean OSPA curves of RMM-MHT and the three IMM-MHT variants.
pub fn monte_carlo_json(runs: usize, seed: u64) -> Result<String, String> {
    if runs == 0 || runs > MAX_RUNS {
        return Err(format!("runs must lie in 1..={MAX_RUNS}"));
    }
    let cfg = RunConfig { seed: Some(seed), ..RunConfig::default() };
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let algos = cfg
        .algorithms
        .iter()
        .map(|a| Algorithm::parse(a, &exp.transition))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mc = monte_carlo(&exp, &algos, runs).map_err(|e| e.to_string())?;
    let curves: Vec<Curve> = mc
        .summaries
        .into_iter()
        .map(|s| Curve { algorithm: s.algorithm, steps: s.steps, mean_ospa: s.mean_ospa, time_mean: s.time_mean })
        .collect();
    to_json(&curves)
}

/// Random two-scan association instance solved by the LP relaxation and by
/// branch-and-bound.
pub fn association_json(seed: u64) -> Result<String, String> {
    let mut rng = rng_for(seed, 0);
    let problem = random_problem(&mut rng, &InstanceShape::two_scan());
    let lp = build_lp(&problem).map_err(|e| e.to_string())?;
    let relaxed = solve_lp(&lp).map_err(|e| e.to_string())?;
    let exact = solve_ip(&lp).map_err(|e| e.to_string())?;
    let hypotheses = problem
        .hypotheses
        .iter()
        .enumerate()
        .map(|(j, h)| HypothesisView {
            target: h.target,
            meas: h.meas.clone(),
            cost: h.cost,
            lp: relaxed.probs[j],
            ip: exact.probs[j],
        })
        .collect();
    to_json(&AssociationView {
        meas_counts: problem.meas_counts.clone(),
        hypotheses,
        lp_objective: relaxed.objective,
        ip_objective: exact.objective,
        lp_integral: relaxed.is_integral,
        first_scan_marginals: marginals(&problem, &relaxed).assoc,
    })
}

#[wasm_bindgen]
pub fn run_tracking(seed: u32, p_d: f64, lambda_f: f64, algorithm: &str) -> Result<String, JsValue> {
    tracking_json(seed.into(), p_d, lambda_f, algorithm).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn monte_carlo_ospa(runs: u32, seed: u32) -> Result<String, JsValue> {
    monte_carlo_json(runs as usize, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn association_demo(seed: u32) -> Result<String, JsValue> {
    association_json(seed.into()).map_err(|e| JsValue::from_str(&e))
}
