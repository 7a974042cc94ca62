//! Scores the synthetic suite twice: at the jittered initial poses and
//! after optimization, and prints the collision-free and in-boundary rates.
//!
//!     cargo run --release --example evaluate_layout

use std::path::PathBuf;

use scenelayout::cli::{cmd_optimize, load_scene, RunConfig};
use scenelayout::eval::{score_suite, EvalConfig};
use scenelayout::{load_inventory, load_room};

fn main() -> anyhow::Result<()> {
    let suite = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/suite");
    let tmp = tempfile::tempdir()?;
    let mut initial = Vec::new();
    let mut optimized = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(&suite)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.sort();
    for dir in names {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let room = load_room(dir.join("room.json"))?;
        let inventory = load_inventory(dir.join("inventory.json"))?;
        let program = dir.join("program.scene");
        initial.push((name.clone(), load_scene(&program, room, &inventory)?));
        let (state, _) = cmd_optimize(
            &program,
            room,
            &inventory,
            &RunConfig::default(),
            &tmp.path().join(&name),
            None,
        )?;
        optimized.push((name, state));
    }

    let cfg = EvalConfig::default();
    for (label, scenes) in [("initial", &initial), ("optimized", &optimized)] {
        let report = score_suite(scenes, &cfg)?;
        println!(
            "{label:<10} scenes {}  CF {:>5.1}%  IB {:>5.1}%",
            report.scenes, report.cf_percent, report.ib_percent
        );
    }
    print!("\n{}", score_suite(&optimized, &cfg)?.to_csv());
    Ok(())
}
