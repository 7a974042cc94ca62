//! Writes the 12-scene synthetic suite used as an offline optimizer
//! benchmark: `fixtures/suite/scene_<k>/{room.json, inventory.json, program.scene}`.
//!
//!     cargo run --example generate_synthetic_suite [-- <out-dir> [<seed>]]
//!
//! Scenes grow from 6 to 50 assets. The same seed always yields the same
//! files.

#[path = "../tests/common/mod.rs"]
mod common;

use std::path::PathBuf;

use scenelayout::dsl::serialize_program;
use scenelayout::scene::save_inventory;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/suite"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);

    for k in 0..12 {
        let n = 6 + 4 * k;
        let scene = common::synthetic_scene(n, seed + k as u64);
        let dir = out.join(format!("scene_{k:02}"));
        std::fs::create_dir_all(&dir)?;
        std::fs::write(
            dir.join("room.json"),
            serde_json::to_string_pretty(&scene.room)? + "\n",
        )?;
        save_inventory(dir.join("inventory.json"), &scene.inventory)?;
        let mut program = scene.program;
        program.group_label = Some(format!("synthetic scene {k}, {n} assets"));
        std::fs::write(
            dir.join("program.scene"),
            serialize_program(&program).source,
        )?;
        println!(
            "{}: {n} assets, {} relations, room {:.2} x {:.2}",
            dir.display(),
            program.relations.len(),
            scene.room.width,
            scene.room.depth
        );
    }
    Ok(())
}
