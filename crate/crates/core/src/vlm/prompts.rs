//! Prompt templates. The text lives in `prompts/*.txt`; placeholders are
//! written `{{name}}`.

use crate::scene::{AssetSpec, PlacedAsset, Room};

pub const GROUPING: &str = include_str!("../../prompts/grouping.v1.txt");
pub const LAYOUT: &str = include_str!("../../prompts/layout.v1.txt");
pub const JUDGE_POSITION: &str = include_str!("../../prompts/judge_position.v1.txt");
pub const JUDGE_ROTATION: &str = include_str!("../../prompts/judge_rotation.v1.txt");
pub const JUDGE_PSA: &str = include_str!("../../prompts/judge_psa.v1.txt");

/// Substitutes every `{{key}}`. Unknown placeholders are left as they are.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

pub fn asset_lines(assets: &[AssetSpec]) -> String {
    assets
        .iter()
        .map(|a| {
            let [depth, width, height] = a.dims;
            let desc = if a.description.is_empty() {
                "(no description)"
            } else {
                &a.description
            };
            format!("- {}: {desc}, {depth:.2} x {width:.2} x {height:.2}", a.id)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn placed_lines(placed: &[PlacedAsset]) -> String {
    if placed.is_empty() {
        return "(none)".into();
    }
    placed
        .iter()
        .map(|a| {
            let p = a.pose;
            format!(
                "- {}: x={:.2}, y={:.2}, z={:.2}, rotation={:.0}, {:.2} x {:.2} x {:.2}",
                a.id(),
                p.x,
                p.y,
                p.z,
                p.rotation_deg(),
                a.spec.dims[0],
                a.spec.dims[1],
                a.spec.dims[2]
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn room_vars(room: &Room) -> [(&'static str, String); 3] {
    [
        ("room_width", format!("{:.2}", room.width)),
        ("room_depth", format!("{:.2}", room.depth)),
        ("room_height", format!("{:.2}", room.height)),
    ]
}
