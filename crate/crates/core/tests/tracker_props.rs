use std::collections::BTreeSet;

use nalgebra::Vector2;
use proptest::prelude::*;
use rmmht::association::{build_lp, marginals, solve_lp, AssociationProblem};
use rmmht::baselines::kf_step;
use rmmht::dynamics::{build_models, default_model_specs, position_measurement, ModelKind, MotionModel};
use rmmht::experiment::{run_algorithm, Algorithm, RunConfig};
use rmmht::hypothesis::{gate_threshold, Scan, ScoringParams};
use rmmht::linalg::{min_eigenvalue, Mat, Vector};
use rmmht::oracle::{random_problem, InstanceShape};
use rmmht::rcmkf::Belief;
use rmmht::simulation::{rng_for, simulate, ScenarioConfig, Segment};
use rmmht::tracker::{build_stacked_system, Tracker, TrackerConfig};

fn scoring(lambda_f: f64) -> ScoringParams {
    ScoringParams { p_d: 0.9, lambda_f, lambda_v: 0.1, volume: 1e10, gate_gamma: gate_threshold(1e-4) }
}

fn straight(steps: usize, spacing: f64, p_d: f64, lambda_f: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        segments: vec![Segment { kind: ModelKind::Cv, duration: steps, omega: 0.0 }],
        spacing,
        p_d,
        lambda_f,
        seed,
        ..ScenarioConfig::default()
    }
}

fn start_belief(x: &rmmht::dynamics::StateVec) -> Belief {
    Belief::new(
        Vector::from_column_slice(x.as_slice()),
        Mat::from_diagonal(&Vector::from_vec(vec![1.6e5, 1.3e4, 1.6e5, 1.3e4])),
    )
    .unwrap()
}

/// With one model and well separated targets every association is certain,
/// so each block must follow its own Kalman filter.
#[test]
fn certain_association_reduces_to_kalman_filters() {
    let cfg = straight(70, 50_000.0, 1.0, 0.0, 3);
    let (truth, scans) = simulate(&cfg).unwrap();
    let model = MotionModel::cv("cv", 4.0, cfg.dt).unwrap();
    let h = position_measurement(cfg.sigma_z).unwrap();
    for window in [1, 2, 3] {
        let tc = TrackerConfig { births: false, window, ..TrackerConfig::default() };
        let mut tr = Tracker::new(tc, scoring(1e-6), vec![model.clone()], h.clone()).unwrap();
        let ids: Vec<usize> = truth.steps[0].iter().map(|(id, _)| *id).collect();
        let starts: Vec<Belief> = truth.steps[0].iter().map(|(_, x)| start_belief(x)).collect();
        tr.seed_tracks(starts.clone()).unwrap();
        let mut refs: Vec<(Vector, Mat)> = starts.into_iter().map(|b| (b.mean, b.cov)).collect();
        let s = &scans.scans;
        for k in 1..s.len() {
            let out = tr.step(&s[k..(k + window).min(s.len())]).unwrap();
            assert!(out.diagnostics.integral && out.diagnostics.fast_path, "step {k}");
            for (slot, id) in ids.iter().enumerate() {
                let z = scans.detection(k, *id).unwrap();
                let (x, p) = &refs[slot];
                refs[slot] =
                    kf_step(x, p, &model.f, &model.q, &h.h, &h.r, &Vector::from_column_slice(z.as_slice())).unwrap();
                let got = &tr.tracks()[slot].belief;
                let (x, p) = &refs[slot];
                assert!((&got.mean - x).amax() <= 1e-9, "window {window} step {k}");
                assert!((&got.cov - p).amax() <= 1e-9, "window {window} step {k}");
            }
        }
    }
}

/// Closely spaced targets in clutter, 200 steps: the joint covariance stays
/// symmetric positive semidefinite up to rounding relative to its size.
#[test]
fn stacked_covariance_stays_psd() {
    let cfg = straight(200, 800.0, 0.9, 20.0, 11);
    let (truth, scans) = simulate(&cfg).unwrap();
    let models = build_models(&default_model_specs(), cfg.dt).unwrap();
    let h = position_measurement(cfg.sigma_z).unwrap();
    let tc = TrackerConfig { births: false, max_misses: 1000, ..TrackerConfig::default() };
    let mut tr = Tracker::new(tc, scoring(20.0), models, h).unwrap();
    tr.seed_tracks(truth.steps[0].iter().map(|(_, x)| start_belief(x)).collect()).unwrap();
    let s = &scans.scans;
    for k in 1..s.len() {
        tr.step(&s[k..(k + 2).min(s.len())]).unwrap();
        assert_psd(&tr.stacked().cov, k);
    }
    assert_eq!(tr.live_tracks().count(), 3);
}

fn assert_psd(p: &Mat, k: usize) {
    let scale = p.amax().max(1.0);
    assert!((p - p.transpose()).amax() <= 1e-12 * scale, "step {k}");
    let lo = min_eigenvalue(p);
    assert!(lo >= -1e-8, "step {k}: min eigenvalue {lo}");
}

fn one_hot(width: usize, r: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[r] = 1.0;
    v
}

/// Association LPs on real scans are almost always integral, so drive the
/// stacked filter with mixtures of two random assignments instead: every
/// step then has measurements shared between tracks.
#[test]
fn stacked_covariance_stays_psd_under_shared_rows() {
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rmmht::association::Marginals;

    let cfg = straight(200, 800.0, 1.0, 0.0, 12);
    let (truth, scans) = simulate(&cfg).unwrap();
    let models = build_models(&default_model_specs(), cfg.dt).unwrap();
    let h = position_measurement(cfg.sigma_z).unwrap();
    let mut tr = Tracker::new(TrackerConfig::default(), scoring(1.0), models.clone(), h.clone()).unwrap();
    tr.seed_tracks(truth.steps[0].iter().map(|(_, x)| start_belief(x)).collect()).unwrap();
    let mut b = tr.stacked().clone();
    let mut rng = rng_for(5, 0);
    for (k, scan) in scans.scans.iter().enumerate().skip(1) {
        let m = scan.count();
        let mut perms = [(1..=m).collect::<Vec<usize>>(), (1..=m).collect()];
        perms[1].shuffle(&mut rng);
        let w: f64 = rng.random_range(0.05..0.95);
        let assoc = (0..3)
            .map(|t| {
                let (a, b) = (one_hot(m + 1, perms[0][t]), one_hot(m + 1, perms[1][t]));
                a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect()
            })
            .collect();
        let model = (0..3)
            .map(|_| {
                let u: f64 = rng.random();
                vec![u, 1.0 - u]
            })
            .collect();
        let sys = build_stacked_system(&Marginals { assoc, model }, &models, &h, scan).unwrap();
        b = sys.update(&sys.predict(&b).unwrap()).unwrap();
        assert_psd(&b.cov, k);
        assert_psd(&b.second_moment, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stacked_rows_are_distributions(seed in any::<u64>(), targets in 1usize..5) {
        let shape = InstanceShape { targets, ..InstanceShape::single_scan() };
        let problem: AssociationProblem = random_problem(&mut rng_for(seed, 0), &shape);
        let sol = solve_lp(&build_lp(&problem).unwrap()).unwrap();
        let marg = marginals(&problem, &sol);
        let models: Vec<MotionModel> =
            (0..shape.models).map(|i| MotionModel::cv(format!("m{i}"), 0.1 + i as f64, 5.0).unwrap()).collect();
        let scan = Scan::new(0, (0..problem.meas_counts[0]).map(|i| Vector2::new(i as f64, 0.0)).collect());
        let sys = build_stacked_system(&marg, &models, &position_measurement(400.0).unwrap(), &scan).unwrap();
        for d in sys.transitions.iter().chain(sys.rows.iter().map(|r| &r.dist)) {
            let total: f64 = d.realizations().iter().map(|r| r.probability).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(d.realizations().iter().all(|r| r.probability > 0.0));
        }
        let mut seen = BTreeSet::new();
        for (i, r) in sys.rows.iter().enumerate() {
            prop_assert!(seen.insert(r.index));
            prop_assert_eq!(i < sys.num_exclusive, r.targets.len() == 1 && r.clutter == 0.0 && r.targets[0].1 == 1.0);
        }
    }
}

#[test]
fn terminated_tracks_never_return_and_runs_repeat() {
    let cfg = RunConfig { seed: Some(4), truth_init: false, ..RunConfig::default() };
    let exp = cfg.resolve().unwrap();
    let (truth, scans) = simulate(&exp.scenario).unwrap();
    let a = run_algorithm(&exp, &Algorithm::RmmMht, Some(&truth), &scans, 4).unwrap();
    let b = run_algorithm(&exp, &Algorithm::RmmMht, Some(&truth), &scans, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.tracks_csv(), b.tracks_csv());

    let mut live = BTreeSet::new();
    let mut gone = BTreeSet::new();
    let mut max_id = 0;
    for (_, est) in &a.estimates {
        let now: BTreeSet<usize> = est.iter().map(|e| e.id).collect();
        assert!(now.is_disjoint(&gone));
        for id in now.difference(&live) {
            assert!(*id > max_id, "track ids are issued in increasing order");
            max_id = *id;
        }
        gone.extend(live.difference(&now).copied());
        live = now;
    }
    assert!(max_id > 0);
}
