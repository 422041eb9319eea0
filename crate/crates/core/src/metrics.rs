//! Evaluation against ground truth.

use serde::{Deserialize, Serialize};

use crate::engine::MapFeature;
use crate::geometry::{wrap_angle, Point2};
use crate::measurement_model::FeatureType;
use crate::{Error, Result};

/// Default radius for matching estimated to true features, meters.
pub const MATCH_RADIUS: f64 = 0.5;

fn check_runs<T>(est: &[Vec<T>], truth: &[T]) -> Result<()> {
    if est.is_empty() {
        return Err(Error::param("runs", "need at least one run"));
    }
    for run in est {
        if run.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: run.len(),
                right: truth.len(),
            });
        }
    }
    Ok(())
}

/// Per-step RMS position error over runs. `est[r][n]` is run `r` at step
/// `n`.
pub fn rmse_position(est: &[Vec<Point2>], truth: &[Point2]) -> Result<Vec<f64>> {
    check_runs(est, truth)?;
    let runs = est.len() as f64;
    Ok((0..truth.len())
        .map(|n| {
            (est.iter()
                .map(|r| r[n].distance(truth[n]).powi(2))
                .sum::<f64>()
                / runs)
                .sqrt()
        })
        .collect())
}

/// Per-step RMS of the wrapped orientation error, in degrees.
pub fn rmse_orientation(est: &[Vec<f64>], truth: &[f64]) -> Result<Vec<f64>> {
    check_runs(est, truth)?;
    let runs = est.len() as f64;
    Ok((0..truth.len())
        .map(|n| {
            let ms = est
                .iter()
                .map(|r| wrap_angle(r[n] - truth[n]).powi(2))
                .sum::<f64>()
                / runs;
            ms.sqrt().to_degrees()
        })
        .collect())
}

/// Mean of a per-step series over `from..=to` (clamped to the series).
pub fn mean_over(series: &[f64], from: usize, to: usize) -> f64 {
    let to = to.min(series.len().saturating_sub(1));
    if from > to {
        return f64::NAN;
    }
    series[from..=to].iter().sum::<f64>() / (to - from + 1) as f64
}

/// Position of an estimated feature under a given type hypothesis, falling
/// back to the reported position if that hypothesis has no particles.
fn position_as(f: &MapFeature, ty: FeatureType) -> Point2 {
    f.mode_pos[ty.index()].unwrap_or(f.pos)
}

/// Greedy nearest-neighbor matching of one map snapshot to the true
/// features. Estimated features are compared using their position under the
/// true feature's type, so that the match does not depend on the type
/// belief being evaluated. Returns, per true feature, the index of the
/// matched map entry.
pub fn match_features(
    map: &[MapFeature],
    truth: &[(Point2, FeatureType)],
    radius: f64,
) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (t, (tp, ty)) in truth.iter().enumerate() {
        for (i, f) in map.iter().enumerate() {
            let d = position_as(f, *ty).distance(*tp);
            if d <= radius {
                pairs.push((d, t, i));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; map.len()];
    for (_, t, i) in pairs {
        if out[t].is_none() && !used[i] {
            out[t] = Some(i);
            used[i] = true;
        }
    }
    out
}

/// Per true feature, per step: type PMF averaged over the runs in which the
/// feature was matched at that step; `None` where it was matched in no run.
/// `maps[r][n]` is the map of run `r` at step `n`.
pub fn mode_belief_trace(
    maps: &[Vec<Vec<MapFeature>>],
    truth: &[(Point2, FeatureType)],
    radius: f64,
) -> Result<Vec<Vec<Option<[f64; 2]>>>> {
    if !(radius > 0.0) {
        return Err(Error::param("match_radius", "must be > 0"));
    }
    let steps = maps.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut sums = vec![vec![([0.0, 0.0], 0usize); steps]; truth.len()];
    for run in maps {
        for (n, map) in run.iter().enumerate() {
            for (t, m) in match_features(map, truth, radius).into_iter().enumerate() {
                if let Some(i) = m {
                    let acc = &mut sums[t][n];
                    acc.0[0] += map[i].type_pmf[0];
                    acc.0[1] += map[i].type_pmf[1];
                    acc.1 += 1;
                }
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|per_step| {
            per_step
                .into_iter()
                .map(|(s, c)| (c > 0).then(|| [s[0] / c as f64, s[1] / c as f64]))
                .collect()
        })
        .collect())
}

/// Everything the evaluation reports about a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub pos_rmse: Vec<f64>,
    pub orient_rmse: Vec<f64>,
    pub mode_traces: Vec<Vec<Option<[f64; 2]>>>,
    /// `(step, feature id, p_exist)` whenever a feature is first reported.
    pub detection_log: Vec<(usize, u64, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn feat(id: u64, pos: Point2, pmf: [f64; 2]) -> MapFeature {
        MapFeature {
            id,
            pos,
            type_pmf: pmf,
            p_exist: 0.9,
            mode_pos: [Some(pos), Some(pos)],
            birth_time: 0,
        }
    }

    #[test]
    fn position_rmse_examples() {
        let truth = vec![Point2::new(1.0, 1.0), Point2::new(2.0, 0.0)];
        assert_eq!(
            rmse_position(&[truth.clone()], &truth).unwrap(),
            vec![0.0, 0.0]
        );
        let off: Vec<Point2> = truth.iter().map(|p| *p + Point2::new(3.0, 4.0)).collect();
        for v in rmse_position(&[off.clone(), off], &truth).unwrap() {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);
        }
        let one = vec![Point2::new(1.0, 2.0), Point2::new(2.0, 0.5)];
        let r = rmse_position(&[one], &truth).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.5, epsilon = 1e-15);
        assert!(rmse_position(&[vec![Point2::ORIGIN]], &truth).is_err());
    }

    #[test]
    fn orientation_rmse_examples() {
        assert_eq!(rmse_orientation(&[vec![0.3]], &[0.3]).unwrap(), vec![0.0]);
        let r = rmse_orientation(&[vec![PI]], &[-PI]).unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-9);
        let r = rmse_orientation(&[vec![1.0 + 5f64.to_radians()]], &[1.0]).unwrap();
        assert_abs_diff_eq!(r[0], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn mode_trace_examples() {
        let truth = vec![(Point2::new(6.0, 3.0), FeatureType::Ps)];
        let run_a = vec![vec![feat(2, Point2::new(6.1, 3.0), [0.2, 0.8])]];
        let t = mode_belief_trace(&[run_a.clone()], &truth, MATCH_RADIUS).unwrap();
        assert_eq!(t[0], vec![Some([0.2, 0.8])]);

        let never = vec![vec![feat(2, Point2::new(20.0, 3.0), [0.2, 0.8])]];
        let t = mode_belief_trace(&[never], &truth, MATCH_RADIUS).unwrap();
        assert_eq!(t[0], vec![None]);

        let r1 = vec![vec![feat(2, Point2::new(6.0, 3.0), [1.0, 0.0])]];
        let r2 = vec![vec![feat(7, Point2::new(6.0, 3.0), [0.0, 1.0])]];
        let t = mode_belief_trace(&[r1, r2], &truth, MATCH_RADIUS).unwrap();
        assert_eq!(t[0], vec![Some([0.5, 0.5])]);
        assert!(mode_belief_trace(&[run_a], &truth, 0.0).is_err());
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = vec![
            (Point2::new(0.0, 0.0), FeatureType::Va),
            (Point2::new(0.3, 0.0), FeatureType::Va),
        ];
        let map = vec![feat(5, Point2::new(0.1, 0.0), [1.0, 0.0])];
        assert_eq!(match_features(&map, &truth, 0.5), vec![Some(0), None]);
    }

    #[test]
    fn matching_uses_the_true_type_position() {
        let truth = vec![(Point2::new(6.0, 3.0), FeatureType::Ps)];
        let mut f = feat(3, Point2::new(0.0, -12.0), [0.9, 0.1]);
        f.mode_pos = [Some(Point2::new(0.0, -12.0)), Some(Point2::new(6.05, 3.0))];
        assert_eq!(match_features(&[f], &truth, 0.5), vec![Some(0)]);
    }

    #[test]
    fn mean_over_window() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean_over(&s, 1, 2), 2.5);
        assert_eq!(mean_over(&s, 2, 10), 3.5);
        assert!(mean_over(&s, 5, 6).is_nan());
    }

    proptest! {
        #[test]
        fn orientation_rmse_ignores_full_turns(a in -10.0..10.0f64, b in -10.0..10.0f64, k in -3i32..3) {
            let r1 = rmse_orientation(&[vec![a]], &[b]).unwrap()[0];
            let r2 = rmse_orientation(&[vec![a + k as f64 * 2.0 * PI]], &[b]).unwrap()[0];
            prop_assert!((r1 - r2).abs() < 1e-6);
        }

        #[test]
        fn trace_ignores_feature_ids(id in 2u64..1000) {
            let truth = vec![(Point2::new(6.0, 3.0), FeatureType::Ps)];
            let a = vec![vec![feat(2, Point2::new(6.0, 3.1), [0.3, 0.7])]];
            let b = vec![vec![feat(id, Point2::new(6.0, 3.1), [0.3, 0.7])]];
            prop_assert_eq!(
                mode_belief_trace(&[a], &truth, MATCH_RADIUS).unwrap(),
                mode_belief_trace(&[b], &truth, MATCH_RADIUS).unwrap()
            );
        }
    }
}
