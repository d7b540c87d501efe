use nalgebra::Vector2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rmmht::baselines::{imm_step, kf_step, run_imm_mht, ImmBelief, ImmMhtTracker, TransitionMatrix};
use rmmht::dynamics::{position_measurement, MotionModel};
use rmmht::hypothesis::{gate_threshold, Scan, ScoringParams};
use rmmht::linalg::{Mat, Vector};
use rmmht::rcmkf::Belief;
use rmmht::simulation::rng_for;

fn start() -> (Vector, Mat) {
    (Vector::from_vec(vec![0.0, -150.0, 0.0, 0.0]), Mat::from_diagonal(&Vector::from_vec(vec![1.6e5, 1e4, 1.6e5, 1e4])))
}

fn stochastic(rows: &[Vec<f64>]) -> TransitionMatrix {
    TransitionMatrix::new(
        rows.iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect(),
    )
    .unwrap()
}

/// Noisy positions along a straight line, with some missed detections.
fn measurements(seed: u64, n: usize, miss: f64) -> Vec<Option<Vector2<f64>>> {
    let mut rng = rng_for(seed, 0);
    let noise = Normal::new(0.0, 400.0).unwrap();
    (1..=n)
        .map(|k| {
            let z = Vector2::new(-750.0 * k as f64 + noise.sample(&mut rng), noise.sample(&mut rng));
            (rng.random::<f64>() >= miss).then_some(z)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mode_probabilities_stay_on_simplex(
        seed in any::<u64>(),
        rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 3),
        q in prop::collection::vec(0.001f64..20.0, 3),
    ) {
        let models: Vec<MotionModel> = q.iter().enumerate().map(|(i, &q)| MotionModel::cv(format!("m{i}"), q, 5.0).unwrap()).collect();
        let h = position_measurement(400.0).unwrap();
        let pij = stochastic(&rows);
        let (x0, p0) = start();
        let mut b = ImmBelief::new(x0, p0, vec![1.0 / 3.0; 3]).unwrap();
        for z in measurements(seed, 60, 0.2) {
            b = imm_step(&b, &pij, &models, &h, z.as_ref()).unwrap();
            prop_assert!(b.mu.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((b.mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_modes_reduce_to_kalman(seed in any::<u64>(), q in 0.01f64..10.0, mu0 in 0.0f64..1.0, which in 0usize..3) {
        let m = MotionModel::cv("m", q, 5.0).unwrap();
        let models = vec![m.clone(), m.clone()];
        let h = position_measurement(400.0).unwrap();
        let pij = [TransitionMatrix::p1(), TransitionMatrix::p2(), TransitionMatrix::p3()][which].clone();
        let (x0, p0) = start();
        let mut b = ImmBelief::new(x0.clone(), p0.clone(), vec![mu0, 1.0 - mu0]).unwrap();
        let (mut x, mut p) = (x0, p0);
        for z in measurements(seed, 50, 0.0) {
            let z = z.unwrap();
            b = imm_step(&b, &pij, &models, &h, Some(&z)).unwrap();
            (x, p) = kf_step(&x, &p, &m.f, &m.q, &h.h, &h.r, &Vector::from_column_slice(z.as_slice())).unwrap();
            let (cx, cp) = b.combined();
            prop_assert!((cx - &x).amax() <= 1e-9);
            prop_assert!((cp - &p).amax() <= 1e-9);
        }
    }
}

#[test]
fn single_model_single_target_tracker_is_kalman() {
    let m = MotionModel::cv("cv", 2.0, 5.0).unwrap();
    let h = position_measurement(400.0).unwrap();
    let scoring =
        ScoringParams { p_d: 0.9, lambda_f: 1e-6, lambda_v: 0.1, volume: 1e10, gate_gamma: gate_threshold(1e-4) };
    let zs: Vec<Vector2<f64>> = measurements(8, 60, 0.0).into_iter().map(Option::unwrap).collect();
    let scans: Vec<Scan> = zs.iter().enumerate().map(|(k, z)| Scan::new(k + 1, vec![*z])).collect();
    for window in [1, 2] {
        let cfg = rmmht::tracker::TrackerConfig { births: false, window, ..Default::default() };
        let mut tr = ImmMhtTracker::new(
            cfg,
            scoring,
            vec![m.clone()],
            h.clone(),
            TransitionMatrix::new(vec![vec![1.0]]).unwrap(),
        )
        .unwrap();
        let (x0, p0) = start();
        tr.seed_tracks(vec![Belief::new(x0.clone(), p0.clone()).unwrap()]).unwrap();
        run_imm_mht(&mut tr, &scans).unwrap();
        let (mut x, mut p) = (x0, p0);
        for z in &zs {
            (x, p) = kf_step(&x, &p, &m.f, &m.q, &h.h, &h.r, &Vector::from_column_slice(z.as_slice())).unwrap();
        }
        let (cx, cp) = tr.tracks()[0].belief.combined();
        assert!((cx - &x).amax() <= 1e-9, "window {window}");
        assert!((cp - &p).amax() <= 1e-9, "window {window}");
    }
}
