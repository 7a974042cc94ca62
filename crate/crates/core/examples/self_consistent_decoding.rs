//! Decoding keeps only relations that already hold at the proposed poses.
//! Here one distance is violated by the proposal and two orientational
//! relations compete for the same chair.
//!
//!     cargo run --example self_consistent_decoding

use scenelayout::decoder::{decode, DecoderConfig};
use scenelayout::{AssetSpec, Pose, Relation, Room, SceneProgram, SceneState, WallId};

fn main() -> anyhow::Result<()> {
    let inventory = vec![
        AssetSpec::new("desk_0", [0.6, 1.2, 0.75]),
        AssetSpec::new("chair_0", [0.5, 0.5, 0.9]),
        AssetSpec::new("shelf_0", [0.35, 0.9, 1.8]),
    ];
    let mut program = SceneProgram::default();
    program
        .poses
        .insert("desk_0".into(), Pose::from_degrees(0.3, 2.0, 0.375, 0.0));
    program
        .poses
        .insert("chair_0".into(), Pose::from_degrees(0.9, 2.0, 0.45, 180.0));
    program
        .poses
        .insert("shelf_0".into(), Pose::from_degrees(3.0, 3.8, 0.9, -90.0));
    program.relations = vec![
        Relation::against_wall("desk_0", WallId::West),
        Relation::distance("chair_0", "desk_0", 0.4, 0.8)?,
        Relation::point_towards("chair_0", "desk_0", 0.0)?,
        Relation::align_with("chair_0", "desk_0", 0.0)?,
        Relation::distance("shelf_0", "desk_0", 0.5, 1.0)?,
    ];

    let state = SceneState::new(Room::new(4.0, 4.0, 2.7)?);
    let (kept, report) = decode(&program, &state, &inventory, &DecoderConfig::default());
    println!("retained:");
    for v in &report.retained {
        println!(
            "  {:<48} loss {:.3}",
            v.relation.to_string(),
            v.initial_loss.unwrap_or(0.0)
        );
    }
    println!("dropped:");
    for v in &report.dropped {
        println!(
            "  {:<48} {:?} (loss {:.3})",
            v.relation.to_string(),
            v.verdict,
            v.initial_loss.unwrap_or(f64::NAN)
        );
    }
    println!(
        "{} of {} relations go to the optimizer",
        kept.relations.len(),
        program.relations.len()
    );
    Ok(())
}
