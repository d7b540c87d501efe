//! New-track formation over scans of measurements no existing track claimed.

use nalgebra::{Matrix4, Vector4};

use super::{solve_lp, AssociationLp, RowLabel};
use crate::dynamics::{MeasurementModel, ModelSet};
use crate::error::{invalid, Result};
use crate::hypothesis::{gate_innovation, ChainState, FixedModels, Scan, ScoringParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitCost {
    /// `C_r = -log L_r`
    NegLog,
    /// `C_r = -L_r`
    NegLinear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    /// Prior standard deviation (m/s) of each velocity component of a
    /// freshly initiated track, used to score and gate its continuation.
    pub velocity_std: f64,
    pub cost: InitCost,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { velocity_std: 150.0, cost: InitCost::NegLog }
    }
}

struct Candidate {
    meas: Vec<usize>,
    log_l: f64,
}

/// Solve the track-initialisation LP and return every candidate tuple with
/// positive probability. Tuple entries are 1-based measurement indices per
/// scan, 0 when the scan contributes nothing.
pub fn track_init_lp(
    scans: &[Scan],
    models: &ModelSet,
    meas_model: &MeasurementModel,
    params: &ScoringParams,
    opts: &InitOptions,
) -> Result<Vec<(Vec<usize>, f64)>> {
    if scans.len() < 2 {
        return Err(invalid("track initialisation needs at least two scans"));
    }
    if models.is_empty() {
        return Err(invalid("model set is empty"));
    }
    let fixed = FixedModels::new(models, meas_model);
    let sigma2 = meas_model.r[(0, 0)];
    let v2 = opts.velocity_std * opts.velocity_std;

    let mut candidates = Vec::new();
    let mut prefix = Vec::with_capacity(scans.len());
    for (n, scan) in scans.iter().enumerate() {
        for (i, z) in scan.measurements.iter().enumerate() {
            prefix.clear();
            prefix.resize(n, 0);
            prefix.push(i + 1);
            let start = ChainState {
                mean: Vector4::new(z[0], 0.0, z[1], 0.0),
                cov: Matrix4::from_diagonal(&Vector4::new(sigma2, v2, sigma2, v2)),
            };
            let chains = vec![(start, params.birth_log())];
            extend(&fixed, scans, params, n + 1, chains, &mut prefix, &mut candidates)?;
        }
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let mut offsets = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut labels = Vec::new();
    for (scan, s) in scans.iter().enumerate() {
        offsets.push(rows.len());
        for index in 1..=s.count() {
            rows.push(Vec::new());
            labels.push(RowLabel::Measurement { scan, index });
        }
    }
    for (j, c) in candidates.iter().enumerate() {
        for (n, &r) in c.meas.iter().enumerate() {
            if r > 0 {
                rows[offsets[n] + r - 1].push(j);
            }
        }
    }
    let costs = candidates
        .iter()
        .map(|c| match opts.cost {
            InitCost::NegLog => -c.log_l,
            InitCost::NegLinear => -c.log_l.exp(),
        })
        .collect();
    let lp = AssociationLp { costs, rows, labels };
    let sol = solve_lp(&lp)?;
    Ok(candidates.into_iter().zip(sol.probs).filter(|(_, p)| *p > 1e-9).map(|(c, p)| (c.meas, p)).collect())
}

/// Extend a born tuple through the remaining scans. `chains` holds one
/// predicted state and accumulated log likelihood per model sequence.
fn extend(
    fixed: &FixedModels,
    scans: &[Scan],
    params: &ScoringParams,
    depth: usize,
    chains: Vec<(ChainState, f64)>,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Candidate>,
) -> Result<()> {
    if depth == scans.len() {
        let log_l = chains.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        out.push(Candidate { meas: prefix.clone(), log_l });
        return Ok(());
    }
    let scan = &scans[depth];
    let mut advanced = Vec::with_capacity(chains.len() * fixed.num_models());
    for (st, ll) in &chains {
        for m in 0..fixed.num_models() {
            let next = fixed.advance(st, m);
            let inn = fixed.innovation(&next)?;
            advanced.push((next, *ll, inn));
        }
    }
    let mut gated: Vec<usize> =
        advanced.iter().flat_map(|(_, _, inn)| gate_innovation(inn, scan, params.gate_gamma)).collect();
    gated.sort_unstable();
    gated.dedup();
    for r in gated {
        let next: Vec<(ChainState, f64)> = advanced
            .iter()
            .map(|(st, ll, inn)| {
                let term = match scan.get(r) {
                    None => params.miss_log(),
                    Some(z) => params.detection_log(inn.log_density(z)),
                };
                (*st, ll + term)
            })
            .collect();
        prefix.push(r);
        extend(fixed, scans, params, depth + 1, next, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{position_measurement, MotionModel};
    use crate::hypothesis::gate_threshold;
    use nalgebra::Vector2;

    fn setup() -> (ModelSet, MeasurementModel, ScoringParams) {
        let models = vec![MotionModel::cv("lo", 0.01, 5.0).unwrap(), MotionModel::cv("hi", 4.0, 5.0).unwrap()];
        let params =
            ScoringParams { p_d: 0.9, lambda_f: 50.0, lambda_v: 1e-4, volume: 1e9, gate_gamma: gate_threshold(1e-4) };
        (models, position_measurement(400.0).unwrap(), params)
    }

    #[test]
    fn single_pair_forms_track() {
        let (m, h, p) = setup();
        let scans = vec![Scan::new(0, vec![Vector2::new(0.0, 0.0)]), Scan::new(1, vec![Vector2::new(-600.0, 0.0)])];
        let out = track_init_lp(&scans, &m, &h, &p, &InitOptions::default()).unwrap();
        assert_eq!(out, vec![(vec![1, 1], 1.0)]);
    }

    #[test]
    fn disjoint_pairs() {
        let (m, h, p) = setup();
        let scans = vec![
            Scan::new(0, vec![Vector2::new(0.0, 0.0), Vector2::new(50_000.0, 0.0)]),
            Scan::new(1, vec![Vector2::new(50_500.0, 0.0), Vector2::new(-600.0, 0.0)]),
        ];
        let out = track_init_lp(&scans, &m, &h, &p, &InitOptions::default()).unwrap();
        assert_eq!(out, vec![(vec![1, 2], 1.0), (vec![2, 1], 1.0)]);
    }

    #[test]
    fn too_few_scans() {
        let (m, h, p) = setup();
        assert!(track_init_lp(&[Scan::new(0, vec![])], &m, &h, &p, &InitOptions::default()).is_err());
        let empty = vec![Scan::new(0, vec![]), Scan::new(1, vec![])];
        assert!(track_init_lp(&empty, &m, &h, &p, &InitOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn linear_cost_switch() {
        let (m, h, p) = setup();
        let scans = vec![Scan::new(0, vec![Vector2::new(0.0, 0.0)]), Scan::new(1, vec![Vector2::new(-600.0, 0.0)])];
        let opts = InitOptions { cost: InitCost::NegLinear, ..Default::default() };
        let out = track_init_lp(&scans, &m, &h, &p, &opts).unwrap();
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert!(total >= 1.0 - 1e-9);
    }
}
