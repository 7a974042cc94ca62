//! Projected gradient descent over the free `(x, y, θ)` of a scene and
//! group-by-group placement.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{supported_z, Evaluation, Objective, ObjectiveConfig};
use crate::scene::{
    wrap_angle, AssetSpec, PlacedAsset, Pose, PoseRecord, Relation, Room, SceneProgram, SceneState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Step for x and y, meters per unit gradient.
    pub step_size_xy: f64,
    /// Step for θ, radians per unit gradient.
    pub step_size_theta: f64,
    pub project_every: usize,
    pub record_every: usize,
    /// Steps shrink linearly from the full size at the first iteration to this
    /// fraction of it at the last, which damps oscillation around kinks.
    pub final_step_fraction: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            step_size_xy: 0.01,
            step_size_theta: 0.05,
            project_every: 50,
            record_every: 100,
            final_step_fraction: 0.05,
        }
    }
}

impl OptimizerConfig {
    /// Multiplier applied to both step sizes at iteration `it` (1-based).
    pub fn step_scale(&self, it: usize) -> f64 {
        if self.iterations <= 1 {
            return 1.0;
        }
        let t = (it - 1) as f64 / (self.iterations - 1) as f64;
        1.0 - (1.0 - self.final_step_fraction) * t
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.step_size_xy > 0.0 && self.step_size_theta > 0.0) {
            return Err(Error::Config("step sizes must be > 0".into()));
        }
        if !(self.final_step_fraction > 0.0 && self.final_step_fraction <= 1.0) {
            return Err(Error::Config(
                "final_step_fraction must be in (0, 1]".into(),
            ));
        }
        if self.project_every == 0 || self.record_every == 0 {
            return Err(Error::Config(
                "project_every and record_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub total: f64,
    pub semantic: f64,
    pub physics: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    /// Strictly increasing iterations; iteration 0 is the projected initialization.
    pub checkpoints: Vec<Checkpoint>,
    /// Iteration whose poses were returned.
    pub best_iteration: usize,
    pub final_poses: BTreeMap<String, PoseRecord>,
    pub duration_ms: f64,
    /// Set when the run stopped early on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

impl OptimizationTrace {
    pub fn initial_total(&self) -> f64 {
        self.checkpoints[0].total
    }

    pub fn best_total(&self) -> f64 {
        self.checkpoints
            .iter()
            .find(|c| c.iteration == self.best_iteration)
            .map(|c| c.total)
            .unwrap_or(f64::NAN)
    }
}

/// Axis-aligned half extents of a footprint rotated by `theta`.
pub fn rotated_half_extents(dims: [f64; 3], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    let (hx, hy) = (dims[0] / 2.0, dims[1] / 2.0);
    [c.abs() * hx + s.abs() * hy, s.abs() * hx + c.abs() * hy]
}

/// Smallest translation that brings the rotated footprint's axis-aligned hull
/// inside the room. `θ` and `z` are untouched.
pub fn project_into_room(id: &str, pose: &Pose, dims: [f64; 3], room: &Room) -> Result<Pose> {
    let [ex, ey] = rotated_half_extents(dims, pose.theta);
    const FIT: f64 = 1e-12;
    if 2.0 * ex > room.width + FIT || 2.0 * ey > room.depth + FIT {
        return Err(Error::InfeasibleProjection { id: id.to_string() });
    }
    let clamp = |v: f64, half: f64, size: f64| {
        if 2.0 * half >= size {
            size / 2.0
        } else {
            v.clamp(half, size - half)
        }
    };
    Ok(Pose {
        x: clamp(pose.x, ex, room.width),
        y: clamp(pose.y, ey, room.depth),
        ..*pose
    })
}

/// Assigns `z` to every supported asset from its support's current pose.
/// Chains are resolved in dependency order; cycles are left untouched.
fn refresh_supported_z(poses: &mut [Pose], dims: &[[f64; 3]], support: &[Option<usize>]) {
    let n = poses.len();
    let mut done = vec![false; n];
    for _ in 0..n {
        let mut progressed = false;
        for i in 0..n {
            if done[i] {
                continue;
            }
            match support[i] {
                None => done[i] = true,
                Some(j) if done[j] || support[j].is_none() => {
                    poses[i].z = supported_z(&poses[j], dims[j], dims[i]);
                    done[i] = true;
                    progressed = true;
                }
                Some(_) => {}
            }
        }
        if !progressed {
            break;
        }
    }
}

struct Problem<'a> {
    objective: Objective,
    room: &'a Room,
    ids: Vec<String>,
    dims: Vec<[f64; 3]>,
    frozen: Vec<bool>,
    support: Vec<Option<usize>>,
}

impl Problem<'_> {
    fn project(&self, poses: &mut [Pose]) -> Result<()> {
        for (i, pose) in poses.iter_mut().enumerate() {
            if !self.frozen[i] {
                *pose = project_into_room(&self.ids[i], pose, self.dims[i], self.room)?;
            }
        }
        Ok(())
    }

    fn settle(&self, poses: &mut [Pose]) {
        refresh_supported_z(poses, &self.dims, &self.support);
    }

    fn evaluate(&self, poses: &[Pose]) -> Evaluation {
        self.objective.evaluate(poses)
    }
}

fn checkpoint(iteration: usize, e: &Evaluation) -> Checkpoint {
    Checkpoint {
        iteration,
        total: e.total,
        semantic: e.semantic,
        physics: e.physics,
    }
}

fn finite(e: &Evaluation) -> bool {
    e.total.is_finite() && e.gradient.iter().flatten().all(|g| g.is_finite())
}

/// Runs projected gradient descent and returns the state at the best
/// recorded checkpoint.
///
/// Every `on_top_of` relation marks its subject as supported by the target
/// (its `z` is then assigned, never optimized) and exempts the pair from the
/// collision term. Frozen assets never move.
pub fn optimize(
    state: &SceneState,
    relations: &[Relation],
    obj_cfg: &ObjectiveConfig,
    opt_cfg: &OptimizerConfig,
) -> Result<(SceneState, OptimizationTrace)> {
    opt_cfg.validate()?;
    let started = Instant::now();
    let mut state = state.clone();
    for rel in relations {
        if let Relation::OnTopOf { subject, target } = rel {
            if let Some(a) = state.get_mut(subject) {
                if !a.frozen {
                    a.support = Some(target.clone());
                }
            }
        }
    }
    let objective = Objective::new(&state, relations, obj_cfg)?;
    let ids: Vec<String> = state.ids().map(str::to_string).collect();
    let problem = Problem {
        objective,
        room: &state.room,
        dims: state.placed.iter().map(|a| a.spec.dims).collect(),
        frozen: state.placed.iter().map(|a| a.frozen).collect(),
        support: state
            .placed
            .iter()
            .map(|a| {
                a.support
                    .as_ref()
                    .and_then(|s| ids.iter().position(|x| x == s))
            })
            .collect(),
        ids,
    };

    let mut poses: Vec<Pose> = state.placed.iter().map(|a| a.pose).collect();
    problem.settle(&mut poses);
    problem.project(&mut poses)?;

    let initial = problem.evaluate(&poses);
    let mut checkpoints = vec![checkpoint(0, &initial)];
    let mut best = (0usize, initial.total, poses.clone());
    let mut aborted = None;

    let mut current = initial;
    for it in 1..=opt_cfg.iterations {
        if !finite(&current) {
            aborted = Some(format!(
                "{}",
                Error::NonFiniteLoss {
                    iteration: it - 1,
                    message: format!("total {}", current.total),
                }
            ));
            break;
        }
        let scale = opt_cfg.step_scale(it);
        let (step_xy, step_theta) = (
            scale * opt_cfg.step_size_xy,
            scale * opt_cfg.step_size_theta,
        );
        for (i, pose) in poses.iter_mut().enumerate() {
            if problem.frozen[i] {
                continue;
            }
            let g = current.gradient[i];
            pose.x -= step_xy * g[0];
            pose.y -= step_xy * g[1];
            pose.theta = wrap_angle(pose.theta - step_theta * g[2]);
        }
        problem.settle(&mut poses);
        let last = it == opt_cfg.iterations;
        if it % opt_cfg.project_every == 0 || last {
            problem.project(&mut poses)?;
        }
        current = problem.evaluate(&poses);
        if it % opt_cfg.record_every == 0 || last {
            // checkpoints are always taken on in-room poses
            let mut projected = poses.clone();
            problem.project(&mut projected)?;
            let eval = if projected == poses {
                current.clone()
            } else {
                problem.evaluate(&projected)
            };
            checkpoints.push(checkpoint(it, &eval));
            if eval.total.is_finite() && eval.total < best.1 {
                best = (it, eval.total, projected);
            }
        }
    }

    let (best_iteration, _, best_poses) = best;
    for (a, p) in state.placed.iter_mut().zip(&best_poses) {
        if !a.frozen {
            a.pose = *p;
        }
    }
    let trace = OptimizationTrace {
        checkpoints,
        best_iteration,
        final_poses: state
            .placed
            .iter()
            .map(|a| (a.id().to_string(), PoseRecord::from(a.pose)))
            .collect(),
        duration_ms: started.elapsed().as_secs_f64() * 1e3,
        aborted,
    };
    Ok((state, trace))
}

/// Adds the program's assets to the scene at their initial poses, unfrozen.
/// Assets already present are left alone; returns the ids that were added.
pub fn stage_group(
    state: &mut SceneState,
    program: &SceneProgram,
    inventory: &[AssetSpec],
) -> Result<Vec<String>> {
    let mut added = Vec::new();
    for (id, pose) in &program.poses {
        if state.get(id).is_some() {
            continue;
        }
        let spec = inventory
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Precondition(format!("asset `{id}` is not in the inventory")))?;
        state.insert(PlacedAsset::new(spec.clone(), *pose))?;
        added.push(id.clone());
    }
    Ok(added)
}

/// Places one decoded group: stages its assets, optimizes them with all
/// previously placed assets frozen, then freezes the group.
pub fn place_group(
    state: &SceneState,
    program: &SceneProgram,
    inventory: &[AssetSpec],
    obj_cfg: &ObjectiveConfig,
    opt_cfg: &OptimizerConfig,
) -> Result<(SceneState, OptimizationTrace)> {
    let mut staged = state.clone();
    staged.freeze_all();
    stage_group(&mut staged, program, inventory)?;
    let (mut placed, trace) = optimize(&staged, &program.relations, obj_cfg, opt_cfg)?;
    placed.freeze_all();
    Ok((placed, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{iou, IouMode, Obb3};
    use std::f64::consts::FRAC_PI_2;

    fn room4() -> Room {
        Room::new(4.0, 4.0, 3.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let dims = [1.0, 1.0, 1.0];
        let p = project_into_room("a", &Pose::new(0.2, 2.0, 0.5, 0.0), dims, &room4()).unwrap();
        assert_eq!((p.x, p.y), (0.5, 2.0));
        let inside = Pose::new(1.7, 2.2, 0.5, 0.4);
        assert_eq!(
            project_into_room("a", &inside, dims, &room4()).unwrap(),
            inside
        );
        assert!(matches!(
            project_into_room("big", &Pose::new(2.0, 2.0, 0.5, 0.0), [5.0, 5.0, 1.0], &room4()),
            Err(Error::InfeasibleProjection { id }) if id == "big"
        ));
        // rotation changes the hull: a 3×1 box fits a 2×4 room only when turned
        let narrow = Room::new(2.0, 4.0, 3.0).unwrap();
        assert!(project_into_room(
            "a",
            &Pose::new(1.0, 2.0, 0.5, 0.0),
            [3.0, 1.0, 1.0],
            &narrow
        )
        .is_err());
        assert!(project_into_room(
            "a",
            &Pose::new(1.0, 2.0, 0.5, FRAC_PI_2),
            [3.0, 1.0, 1.0],
            &narrow
        )
        .is_ok());
    }

    #[test]
    fn lone_asset_only_gets_projected() {
        let mut s = SceneState::new(room4());
        s.insert(PlacedAsset::new(
            AssetSpec::new("a", [1.0; 3]),
            Pose::new(-1.0, 2.0, 0.5, 0.3),
        ))
        .unwrap();
        let (out, trace) = optimize(
            &s,
            &[],
            &ObjectiveConfig::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        let p = out.placed[0].pose;
        let [ex, _] = rotated_half_extents([1.0; 3], 0.3);
        assert!((p.x - ex).abs() < 1e-12 && p.y == 2.0 && p.theta == 0.3);
        assert_eq!(trace.initial_total(), 0.0);
    }

    #[test]
    fn coincident_boxes_separate() {
        let mut s = SceneState::new(room4());
        for id in ["a", "b"] {
            s.insert(PlacedAsset::new(
                AssetSpec::new(id, [1.0; 3]),
                Pose::new(2.0, 2.0, 0.5, 0.0),
            ))
            .unwrap();
        }
        let (out, trace) = optimize(
            &s,
            &[],
            &ObjectiveConfig::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        let a = Obb3::from_pose(&out.placed[0].pose, &out.placed[0].spec);
        let b = Obb3::from_pose(&out.placed[1].pose, &out.placed[1].spec);
        assert!(iou(&a, &b, IouMode::Xyz) < 0.01);
        assert!(trace.best_total() <= trace.initial_total());
    }

    #[test]
    fn checkpoints_are_strictly_increasing() {
        let mut s = SceneState::new(room4());
        s.insert(PlacedAsset::new(
            AssetSpec::new("a", [1.0; 3]),
            Pose::new(2.0, 2.0, 0.5, 0.0),
        ))
        .unwrap();
        let cfg = OptimizerConfig {
            iterations: 250,
            ..OptimizerConfig::default()
        };
        let (_, trace) = optimize(&s, &[], &ObjectiveConfig::default(), &cfg).unwrap();
        let its: Vec<usize> = trace.checkpoints.iter().map(|c| c.iteration).collect();
        assert_eq!(its, vec![0, 100, 200, 250]);
    }

    #[test]
    fn supported_assets_follow_their_support() {
        let mut s = SceneState::new(room4());
        s.insert(
            PlacedAsset::new(
                AssetSpec::new("table", [1.0, 1.0, 0.75]),
                Pose::new(2.0, 2.0, 0.375, 0.0),
            )
            .frozen(),
        )
        .unwrap();
        s.insert(PlacedAsset::new(
            AssetSpec::new("lamp", [0.2, 0.2, 0.4]),
            Pose::new(2.9, 2.0, 0.2, 0.0),
        ))
        .unwrap();
        let rels = [Relation::on_top_of("lamp", "table").unwrap()];
        let (out, _) = optimize(
            &s,
            &rels,
            &ObjectiveConfig::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        let lamp = out.get("lamp").unwrap();
        assert!((lamp.pose.z - (0.75 + 0.2)).abs() < 1e-12);
        assert_eq!(out.get("table").unwrap().pose, s.get("table").unwrap().pose);
        // the lamp's footprint ends up on the table
        let (x, y) = (lamp.pose.x, lamp.pose.y);
        assert!((x - 2.0).abs() < 0.45 && (y - 2.0).abs() < 0.45, "{x} {y}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = SceneState::new(room4());
        let cfg = OptimizerConfig {
            iterations: 0,
            ..OptimizerConfig::default()
        };
        assert!(optimize(&s, &[], &ObjectiveConfig::default(), &cfg).is_err());
    }
}
