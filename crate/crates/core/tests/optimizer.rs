use std::f64::consts::PI;

use proptest::prelude::*;

use scenelayout::geometry::{iou, IouMode, Obb3};
use scenelayout::objectives::ObjectiveConfig;
use scenelayout::optimizer::{
    optimize, place_group, rotated_half_extents, OptimizationTrace, OptimizerConfig,
};
use scenelayout::{AssetSpec, PlacedAsset, Pose, Relation, Room, SceneProgram, SceneState, WallId};

fn box_iou(s: &SceneState, a: &str, b: &str) -> f64 {
    let obb = |id: &str| {
        let p = s.get(id).unwrap();
        Obb3::from_pose(&p.pose, &p.spec)
    };
    iou(&obb(a), &obb(b), IouMode::Xyz)
}

fn scene_strategy() -> impl Strategy<Value = (SceneState, Vec<Relation>)> {
    let asset = (
        0.3..4.7f64,
        0.3..3.7f64,
        -PI..PI,
        0.3..1.0f64,
        0.3..1.0f64,
        0.3..1.5f64,
    );
    (
        prop::collection::vec(asset, 2..6),
        prop::collection::vec((0usize..6, 0usize..6, 0usize..4, 0.0..1.5f64), 0..6),
    )
        .prop_map(|(assets, rels)| {
            let mut s = SceneState::new(Room::new(5.0, 4.0, 3.0).unwrap());
            for (k, (x, y, t, dx, dy, dz)) in assets.iter().enumerate() {
                let spec = AssetSpec::new(format!("a{k}"), [*dx, *dy, *dz]);
                s.insert(PlacedAsset::new(spec, Pose::new(*x, *y, dz / 2.0, *t)))
                    .unwrap();
            }
            let n = assets.len();
            let relations = rels
                .into_iter()
                .filter_map(|(i, j, kind, v)| {
                    let (i, j) = (i % n, j % n);
                    let (a, b) = (format!("a{i}"), format!("a{j}"));
                    match kind {
                        _ if i == j => Some(Relation::against_wall(a, WallId::ALL[kind])),
                        0 => Relation::distance(a, b, v, v + 0.5).ok(),
                        1 => Relation::align_with(a, b, v).ok(),
                        2 => Relation::point_towards(a, b, v).ok(),
                        _ => Some(Relation::against_wall(a, WallId::South)),
                    }
                })
                .collect();
            (s, relations)
        })
}

fn short() -> OptimizerConfig {
    OptimizerConfig {
        iterations: 200,
        record_every: 20,
        project_every: 10,
        ..OptimizerConfig::default()
    }
}

fn strip_timing(mut t: OptimizationTrace) -> OptimizationTrace {
    t.duration_ms = 0.0;
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn best_checkpoint_never_worse_than_initialization((state, relations) in scene_strategy()) {
        let (_, trace) = optimize(&state, &relations, &ObjectiveConfig::default(), &short()).unwrap();
        prop_assert!(trace.best_total() <= trace.initial_total());
        prop_assert!(trace.checkpoints.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }

    #[test]
    fn result_is_inside_the_room((state, relations) in scene_strategy()) {
        let (out, _) = optimize(&state, &relations, &ObjectiveConfig::default(), &short()).unwrap();
        for a in &out.placed {
            let [hx, hy] = rotated_half_extents(a.spec.dims, a.pose.theta);
            prop_assert!(a.pose.x - hx >= -1e-6 && a.pose.x + hx <= out.room.width + 1e-6);
            prop_assert!(a.pose.y - hy >= -1e-6 && a.pose.y + hy <= out.room.depth + 1e-6);
        }
    }

    #[test]
    fn runs_are_deterministic((state, relations) in scene_strategy()) {
        let cfg = ObjectiveConfig::default();
        let (s1, t1) = optimize(&state, &relations, &cfg, &short()).unwrap();
        let (s2, t2) = optimize(&state, &relations, &cfg, &short()).unwrap();
        prop_assert_eq!(s1, s2);
        prop_assert_eq!(strip_timing(t1), strip_timing(t2));
    }

    #[test]
    fn frozen_poses_are_untouched((state, relations) in scene_strategy()) {
        let mut frozen = state.clone();
        frozen.placed[0].frozen = true;
        let (out, _) = optimize(&frozen, &relations, &ObjectiveConfig::default(), &short()).unwrap();
        let (before, after) = (frozen.placed[0].pose, out.placed[0].pose);
        prop_assert_eq!(before.x.to_bits(), after.x.to_bits());
        prop_assert_eq!(before.y.to_bits(), after.y.to_bits());
        prop_assert_eq!(before.theta.to_bits(), after.theta.to_bits());
    }
}

fn chair_and_table(chair_y: f64) -> SceneState {
    let mut s = SceneState::new(Room::new(5.0, 5.0, 3.0).unwrap());
    s.insert(PlacedAsset::new(
        AssetSpec::new("table_0", [0.8, 0.8, 0.75]),
        Pose::new(2.5, 2.5, 0.375, 0.0),
    ))
    .unwrap();
    s.insert(PlacedAsset::new(
        AssetSpec::new("chair_0", [0.45, 0.45, 0.9]),
        Pose::new(2.5, chair_y, 0.45, PI / 2.0),
    ))
    .unwrap();
    s
}

fn chair_distance(s: &SceneState) -> f64 {
    let (c, t) = (
        s.get("chair_0").unwrap().pose,
        s.get("table_0").unwrap().pose,
    );
    ((c.x - t.x).powi(2) + (c.y - t.y).powi(2)).sqrt()
}

#[test]
fn distant_chair_is_pulled_into_range() {
    let rel = [Relation::distance("chair_0", "table_0", 0.4, 0.8).unwrap()];
    let (out, _) = optimize(
        &chair_and_table(0.9),
        &rel,
        &ObjectiveConfig::default(),
        &OptimizerConfig::default(),
    )
    .unwrap();
    let d = chair_distance(&out);
    assert!((0.38..=0.82).contains(&d), "distance {d}");
}

#[test]
fn saturated_distance_exerts_no_pull() {
    // 2 m from a [0.4, 0.8] range: the hinge is past its clamp at 1
    let rel = [Relation::distance("chair_0", "table_0", 0.4, 0.8).unwrap()];
    let start = chair_and_table(0.5);
    let (out, _) = optimize(
        &start,
        &rel,
        &ObjectiveConfig::default(),
        &OptimizerConfig::default(),
    )
    .unwrap();
    assert_eq!(chair_distance(&out), 2.0);
}

fn group(poses: &[(&str, Pose)], relations: Vec<Relation>) -> SceneProgram {
    SceneProgram {
        poses: poses.iter().map(|(id, p)| (id.to_string(), *p)).collect(),
        relations,
        group_label: None,
    }
}

#[test]
fn second_group_is_pushed_off_a_frozen_asset() {
    let inventory = vec![
        AssetSpec::new("bed_0", [2.0, 1.6, 0.5]),
        AssetSpec::new("desk_0", [0.6, 1.2, 0.75]),
    ];
    let cfg = (ObjectiveConfig::default(), OptimizerConfig::default());
    let empty = SceneState::new(Room::new(4.0, 4.0, 2.7).unwrap());
    let first = group(&[("bed_0", Pose::new(2.0, 2.0, 0.25, 0.0))], vec![]);
    let (s1, _) = place_group(&empty, &first, &inventory, &cfg.0, &cfg.1).unwrap();
    let second = group(&[("desk_0", Pose::new(2.9, 2.0, 0.375, 0.0))], vec![]);
    let (s2, _) = place_group(&s1, &second, &inventory, &cfg.0, &cfg.1).unwrap();
    assert!(box_iou(&s2, "bed_0", "desk_0") < 0.01);
    assert_eq!(s2.get("bed_0").unwrap().pose, s1.get("bed_0").unwrap().pose);
    assert!(s2.placed.iter().all(|a| a.frozen));
}

#[test]
fn lamp_moves_onto_a_frozen_table() {
    let inventory = vec![
        AssetSpec::new("table_0", [0.8, 0.8, 0.75]),
        AssetSpec::new("lamp_0", [0.25, 0.25, 0.45]),
    ];
    let cfg = (ObjectiveConfig::default(), OptimizerConfig::default());
    let empty = SceneState::new(Room::new(4.0, 4.0, 2.7).unwrap());
    let first = group(&[("table_0", Pose::new(2.0, 2.0, 0.375, 0.0))], vec![]);
    let (s1, _) = place_group(&empty, &first, &inventory, &cfg.0, &cfg.1).unwrap();
    let second = group(
        &[("lamp_0", Pose::new(2.3, 2.2, 1.0, 0.0))],
        vec![Relation::on_top_of("lamp_0", "table_0").unwrap()],
    );
    let (s2, _) = place_group(&s1, &second, &inventory, &cfg.0, &cfg.1).unwrap();
    let (lamp, table) = (s2.get("lamp_0").unwrap(), s2.get("table_0").unwrap());
    assert_eq!(table.pose, s1.get("table_0").unwrap().pose);
    assert!(
        (lamp.pose.z - (0.75 + 0.225)).abs() < 1e-9,
        "z = {}",
        lamp.pose.z
    );
    assert!((lamp.pose.x - 2.0).abs() < 0.3 && (lamp.pose.y - 2.0).abs() < 0.3);
}
