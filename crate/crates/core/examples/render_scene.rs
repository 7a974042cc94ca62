//! Renders the dining fixture's initial poses as SVG and PNG, plus the
//! asset panel shown to the VLM.
//!
//!     cargo run --example render_scene -- [out-dir]

use std::path::PathBuf;

use scenelayout::cli::load_scene;
use scenelayout::render::{render_asset_panel, render_topdown, topdown_svg, RenderOptions};
use scenelayout::{load_inventory, load_room};

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/dining");
    let out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("scenelayout-render"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out)?;

    let room = load_room(dir.join("room.json"))?;
    let inventory = load_inventory(dir.join("inventory.json"))?;
    let state = load_scene(&dir.join("dining.scene"), room, &inventory)?;

    let svg = topdown_svg(&state, &RenderOptions::default())?;
    std::fs::write(out.join("dining.svg"), &svg)?;
    let png = render_topdown(&state, &RenderOptions::png())?;
    std::fs::write(out.join("dining.png"), &png)?;
    let panel = render_asset_panel(&inventory, &RenderOptions::png())?;
    std::fs::write(out.join("assets.png"), &panel)?;
    println!(
        "wrote dining.svg ({} bytes), dining.png ({} bytes), assets.png ({} bytes) to {}",
        svg.len(),
        png.len(),
        panel.len(),
        out.display()
    );
    Ok(())
}
