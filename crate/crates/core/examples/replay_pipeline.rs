//! Runs the full generate pipeline on the bedroom fixture from its replay
//! cache, so no endpoint is needed, and prints the per-group outcome.
//!
//!     cargo run --release --example replay_pipeline -- [out-dir]

use std::path::PathBuf;

use scenelayout::cli::{cmd_generate, read_instruction, RunConfig, RunManifest};
use scenelayout::vlm::ReplayMode;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/bedroom");
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("scenelayout-bedroom"),
        PathBuf::from,
    );
    let manifest = RunManifest {
        config: RunConfig::default(),
        room: dir.join("room.json"),
        inventory: dir.join("inventory.json"),
        instruction: read_instruction(&format!("@{}", dir.join("instruction.txt").display()))?,
        mode: ReplayMode::replay(dir.join("cache")),
        out: out.clone(),
    };
    let report = cmd_generate(&manifest)?;
    for g in &report.groups {
        println!("group {}: {}", g.index, g.assets.join(", "));
        for d in &g.diagnostics {
            println!("    {d}");
        }
    }
    println!(
        "collision-free {}, in-boundary {}, {} network call(s), exit code {}",
        report.score.collision_free,
        report.score.in_boundary,
        report.network_attempts,
        report.exit_code
    );
    println!("outputs in {}", out.display());
    Ok(())
}
