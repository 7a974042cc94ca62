//! Central finite-difference check of analytic gradients.

use crate::error::Result;
use crate::scene::{Pose, Relation, SceneState};

use super::{Objective, ObjectiveConfig};

/// Absolute difference below which two derivatives are considered equal.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// `|a − n| / max(|a|, |n|)`, or 0 when the two agree to within `abs_floor`.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Compares the gradient returned by `f` at `x` with `(f(x+h) − f(x−h)) / 2h`.
///
/// The point should sit well away from clamp kinks, branch switches and
/// clipping degeneracies; there the analytic value is a one-sided derivative.
pub fn check_gradient<F>(f: F, x: &[f64], h: f64) -> GradientCheck
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x);
    assert_eq!(analytic.len(), x.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let numeric: Vec<f64> = (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe).0;
            probe[k] = x[k] - h;
            let down = f(&probe).0;
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect();
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n, ABSOLUTE_FLOOR))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (k, e)| if e > best.1 { (k, e) } else { best },
        );
    GradientCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    }
}

/// Gradient check of the full objective over every non-frozen `(x, y, θ)`.
pub fn check_total_gradient(
    state: &SceneState,
    relations: &[Relation],
    cfg: &ObjectiveConfig,
    h: f64,
) -> Result<GradientCheck> {
    let objective = Objective::new(state, relations, cfg)?;
    let base: Vec<Pose> = state.placed.iter().map(|a| a.pose).collect();
    let free: Vec<usize> = (0..base.len())
        .filter(|&i| !objective.is_frozen(i))
        .collect();
    let x0: Vec<f64> = free
        .iter()
        .flat_map(|&i| [base[i].x, base[i].y, base[i].theta])
        .collect();
    let f = |x: &[f64]| {
        let mut poses = base.clone();
        for (k, &i) in free.iter().enumerate() {
            // theta is deliberately not re-wrapped so that x ± h stays continuous
            poses[i].x = x[3 * k];
            poses[i].y = x[3 * k + 1];
            poses[i].theta = x[3 * k + 2];
        }
        let eval = objective.evaluate(&poses);
        let grad = free.iter().flat_map(|&i| eval.gradient[i]).collect();
        (eval.total, grad)
    };
    Ok(check_gradient(f, &x0, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{loss_align_with, loss_distance};
    use crate::scene::{AssetSpec, PlacedAsset, Room};

    fn pair(x: &[f64]) -> (PlacedAsset, PlacedAsset) {
        (
            PlacedAsset::new(
                AssetSpec::new("a", [0.6, 0.4, 0.8]),
                Pose {
                    x: x[0],
                    y: x[1],
                    z: 0.4,
                    theta: x[2],
                },
            ),
            PlacedAsset::new(
                AssetSpec::new("b", [0.6, 0.4, 0.8]),
                Pose {
                    x: x[3],
                    y: x[4],
                    z: 0.4,
                    theta: x[5],
                },
            ),
        )
    }

    fn flat(t: &crate::objectives::LossTerm) -> Vec<f64> {
        ["a", "b"].iter().flat_map(|id| t.grad_of(id)).collect()
    }

    #[test]
    fn align_with_matches_finite_differences() {
        let f = |x: &[f64]| {
            let (a, b) = pair(x);
            let t = loss_align_with(&a, &b, 0.4);
            (t.value, flat(&t))
        };
        let check = check_gradient(f, &[1.0, 2.0, 0.7, 3.0, 1.0, -1.9], 1e-5);
        assert!(check.max_rel_error < 1e-4, "{check:?}");
    }

    #[test]
    fn distance_dead_zone_is_flat() {
        let f = |x: &[f64]| {
            let (a, b) = pair(x);
            let t = loss_distance(&a, &b, 1.0, 2.0).unwrap();
            (t.value, flat(&t))
        };
        let check = check_gradient(f, &[0.0, 0.0, 0.0, 1.5, 0.0, 0.0], 1e-5);
        assert!(check.analytic.iter().all(|g| *g == 0.0));
        assert!(check.numeric.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn total_objective_check() {
        let mut s = SceneState::new(Room::new(5.0, 5.0, 3.0).unwrap());
        let (mut a, mut b) = pair(&[2.0, 2.0, 0.3, 2.35, 2.15, -0.5]);
        a.pose.z = 0.4;
        b.pose.z = 0.6;
        s.insert(a).unwrap();
        s.insert(b).unwrap();
        let rels = [Relation::point_towards("a", "b", 2.5).unwrap()];
        let check = check_total_gradient(&s, &rels, &ObjectiveConfig::default(), 1e-5).unwrap();
        assert!(check.max_rel_error < 1e-3, "{check:?}");
    }
}
