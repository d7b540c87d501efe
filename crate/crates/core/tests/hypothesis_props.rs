use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;
use rmmht::dynamics::{build_models, default_model_specs, position_measurement, MeasVec, ModelKind, ModelSpec};
use rmmht::hypothesis::{
    enumerate_hypotheses, gate, gate_threshold, prediction_chain, score_hypothesis, Scan, ScoringParams,
};
use rmmht::linalg::{Mat, Vector};
use rmmht::rcmkf::Belief;

fn params(gamma: f64) -> ScoringParams {
    ScoringParams { p_d: 0.9, lambda_f: 5.0, lambda_v: 0.1, volume: 1e8, gate_gamma: gamma }
}

fn belief(x: f64, y: f64, vx: f64, vy: f64) -> Belief {
    Belief::new(
        Vector::from_vec(vec![x, vx, y, vy]),
        Mat::from_diagonal(&Vector::from_vec(vec![1e4, 100.0, 1e4, 100.0])),
    )
    .unwrap()
}

fn scan(t: usize, pts: &[(f64, f64)]) -> Scan {
    Scan::new(t, pts.iter().map(|&(x, y)| MeasVec::new(x, y)).collect())
}

fn points(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1500.0f64..1500.0, -1500.0f64..1500.0), 0..=max)
}

proptest! {
    #[test]
    fn shrinking_the_gate_never_adds(pts in points(8), g1 in 0.1f64..30.0, g2 in 0.1f64..30.0) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let s = scan(0, &pts);
        let zhat = Vector2::new(10.0, -20.0);
        let cov = Matrix2::new(2.5e5, 3e4, 3e4, 1.5e5);
        let small = gate(&zhat, &cov, &s, lo).unwrap();
        let large = gate(&zhat, &cov, &s, hi).unwrap();
        prop_assert!(small.iter().all(|r| large.contains(r)));
        prop_assert_eq!(small[0], 0);
    }

    #[test]
    fn emitted_costs_are_negated_log_likelihoods(p1 in points(3), p2 in points(3)) {
        let models = build_models(&default_model_specs(), 5.0).unwrap();
        let meas = position_measurement(400.0).unwrap();
        let scans = [scan(0, &p1), scan(1, &p2)];
        let tracks = [belief(0.0, 0.0, 50.0, 0.0), belief(300.0, -200.0, 0.0, 40.0)];
        let pr = params(gate_threshold(1e-4));
        let e = enumerate_hypotheses(&tracks, &scans, &models, &meas, &pr, usize::MAX).unwrap();
        for h in &e.hypotheses {
            // Exact float equality; the dummy target's cost is 0 with log L = 0.
            prop_assert!(h.cost == -h.likelihood_log);
            if h.target > 0 {
                let (log_l, cost) =
                    score_hypothesis(Some(&tracks[h.target - 1]), &h.models, &h.meas, &scans, &models, &meas, &pr).unwrap();
                prop_assert_eq!(log_l.to_bits(), h.likelihood_log.to_bits());
                prop_assert_eq!(cost.to_bits(), h.cost.to_bits());
            }
        }
    }

    /// Brute force over every (model, measurement) tuple, keeping those whose
    /// every measurement passes the gate of its own prediction chain.
    #[test]
    fn enumeration_equals_filtered_brute_force(
        p1 in points(3),
        p2 in points(3),
        two_targets in prop::bool::ANY,
        two_models in prop::bool::ANY,
        two_scans in prop::bool::ANY,
    ) {
        let specs = if two_models {
            default_model_specs()
        } else {
            vec![ModelSpec { kind: ModelKind::Cv, q: 1.0, omega: 0.0 }]
        };
        let models = build_models(&specs, 5.0).unwrap();
        let meas = position_measurement(300.0).unwrap();
        let mut scans = vec![scan(0, &p1)];
        if two_scans {
            scans.push(scan(1, &p2));
        }
        let mut tracks = vec![belief(0.0, 0.0, 30.0, 0.0)];
        if two_targets {
            tracks.push(belief(-500.0, 400.0, 0.0, -30.0));
        }
        let pr = params(gate_threshold(1e-2));
        let got = enumerate_hypotheses(&tracks, &scans, &models, &meas, &pr, usize::MAX).unwrap();
        let mut got_map = BTreeMap::new();
        for h in &got.hypotheses {
            if h.target > 0 {
                got_map.insert((h.target, h.models.clone(), h.meas.clone()), h.cost);
            }
        }

        let n = scans.len();
        let mut want = BTreeMap::new();
        for (ti, track) in tracks.iter().enumerate() {
            let seqs: Vec<Vec<usize>> = if n == 1 {
                (1..=models.len()).map(|a| vec![a]).collect()
            } else {
                (1..=models.len()).flat_map(|a| (1..=models.len()).map(move |b| vec![a, b])).collect()
            };
            for s in seqs {
                let chain = prediction_chain(track, &s, &models, &meas).unwrap();
                let ranges: Vec<usize> = scans.iter().map(|sc| sc.count()).collect();
                let tuples: Vec<Vec<usize>> = if n == 1 {
                    (0..=ranges[0]).map(|a| vec![a]).collect()
                } else {
                    (0..=ranges[0]).flat_map(|a| (0..=ranges[1]).map(move |b| vec![a, b])).collect()
                };
                for r in tuples {
                    let gated = r.iter().zip(&scans).zip(&chain).all(|((&ri, sc), inn)| {
                        ri == 0 || inn.mahalanobis(&sc.measurements[ri - 1]) <= pr.gate_gamma
                    });
                    if gated {
                        let (_, cost) = score_hypothesis(Some(track), &s, &r, &scans, &models, &meas, &pr).unwrap();
                        want.insert((ti + 1, s.clone(), r), cost);
                    }
                }
            }
        }
        prop_assert_eq!(got_map.len(), want.len());
        for (k, c) in &want {
            let g = got_map.get(k);
            prop_assert!(g.is_some(), "missing {:?}", k);
            prop_assert!((g.unwrap() - c).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }
}

#[test]
fn single_step_chain_matches_kalman_innovation() {
    let models = build_models(&[ModelSpec { kind: ModelKind::Cv, q: 2.0, omega: 0.0 }], 5.0).unwrap();
    let meas = position_measurement(250.0).unwrap();
    let mut p = Mat::from_diagonal(&Vector::from_vec(vec![900.0, 40.0, 1600.0, 25.0]));
    p[(0, 1)] = 30.0;
    p[(1, 0)] = 30.0;
    let b = Belief::new(Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), p.clone()).unwrap();
    let chain = prediction_chain(&b, &[1], &models, &meas).unwrap();
    let m = &models[0];
    let s = &meas.h * (&m.f * &p * m.f.transpose() + &m.q) * meas.h.transpose() + &meas.r;
    for i in 0..2 {
        for j in 0..2 {
            assert!((chain[0].s[(i, j)] - s[(i, j)]).abs() <= 1e-9 * s.amax());
        }
    }
}
