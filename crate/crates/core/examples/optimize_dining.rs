//! Optimizes the bundled dining fixture (a table against the south wall and
//! four chairs facing it) with every relation kept, and prints the trace.
//!
//!     cargo run --example optimize_dining

use std::collections::BTreeSet;
use std::path::PathBuf;

use scenelayout::dsl::{parse_program, ProgramText};
use scenelayout::eval::{score_scene, EvalConfig};
use scenelayout::objectives::ObjectiveConfig;
use scenelayout::optimizer::{optimize, OptimizerConfig};
use scenelayout::{load_inventory, load_room, PlacedAsset, SceneState, WallId};

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/dining");
    let room = load_room(dir.join("room.json"))?;
    let inventory = load_inventory(dir.join("inventory.json"))?;
    let source = std::fs::read_to_string(dir.join("dining.scene"))?;
    let known: BTreeSet<String> = inventory.iter().map(|a| a.id.clone()).collect();
    let (program, diags) = parse_program(&ProgramText::inline(source), &known, &WallId::ALL);
    for d in &diags {
        eprintln!("{d}");
    }

    let mut state = SceneState::new(room);
    for (id, pose) in &program.poses {
        let spec = inventory
            .iter()
            .find(|s| &s.id == id)
            .expect("fixture is consistent");
        state.insert(PlacedAsset::new(spec.clone(), *pose))?;
    }
    let (out, trace) = optimize(
        &state,
        &program.relations,
        &ObjectiveConfig::default(),
        &OptimizerConfig::default(),
    )?;

    println!("iteration  total     semantic  physics");
    for c in &trace.checkpoints {
        println!(
            "{:>9}  {:>8.4}  {:>8.4}  {:>8.4}",
            c.iteration, c.total, c.semantic, c.physics
        );
    }
    println!(
        "best iteration: {} ({:.1} ms)",
        trace.best_iteration, trace.duration_ms
    );
    for a in &out.placed {
        println!(
            "{:<8} x={:.3} y={:.3} rotation={:.1}",
            a.id(),
            a.pose.x,
            a.pose.y,
            a.pose.rotation_deg()
        );
    }
    let score = score_scene(&out, &EvalConfig::default());
    println!(
        "collision-free: {}, in-boundary: {}",
        score.collision_free, score.in_boundary
    );
    Ok(())
}
