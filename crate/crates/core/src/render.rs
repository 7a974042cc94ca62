//! Schematic top-down renders and asset panels for visual prompting.
//!
//! SVG is produced directly as text; PNG is rasterized from it with an
//! embedded font, so both are byte-deterministic.

use std::fmt::Write;
use std::sync::Arc;

use resvg::{tiny_skia, usvg};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{corners, Obb2, Vec2};
use crate::scene::{AssetSpec, SceneState};

const FONT_FAMILY: &str = "DejaVu Sans";
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Svg,
    Png,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub pixels_per_meter: f64,
    pub grid_spacing: f64,
    pub show_labels: bool,
    pub show_arrows: bool,
    pub show_grid: bool,
    pub format: ImageFormat,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            pixels_per_meter: 80.0,
            grid_spacing: 2.0,
            show_labels: true,
            show_arrows: true,
            show_grid: true,
            format: ImageFormat::Svg,
        }
    }
}

impl RenderOptions {
    pub fn png() -> Self {
        Self {
            format: ImageFormat::Png,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixels_per_meter.is_finite() && self.pixels_per_meter > 0.0) {
            return Err(Error::Render(format!(
                "pixels_per_meter must be > 0, got {}",
                self.pixels_per_meter
            )));
        }
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return Err(Error::Render(format!(
                "grid_spacing must be > 0, got {}",
                self.grid_spacing
            )));
        }
        Ok(())
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Grid coordinate label: integers without decimals, otherwise two decimals.
fn coord(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// World to screen mapping; world +y points screen-up.
struct Frame {
    ppm: f64,
    depth: f64,
    origin: [f64; 2],
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.origin[0] + x * self.ppm,
            self.origin[1] + (self.depth - y) * self.ppm,
        )
    }
}

fn points(pts: impl IntoIterator<Item = (f64, f64)>) -> String {
    pts.into_iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Arrow from `from` to `to` in screen pixels: shaft plus filled head.
fn arrow(svg: &mut String, from: (f64, f64), to: (f64, f64), color: &str) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-9 {
        return;
    }
    let (ux, uy) = (dx / len, dy / len);
    let head = (len * 0.35).min(10.0);
    let base = (to.0 - ux * head, to.1 - uy * head);
    let (nx, ny) = (-uy * head * 0.5, ux * head * 0.5);
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
        from.0, from.1, base.0, base.1
    );
    let _ = writeln!(
        svg,
        r#"<polygon points="{}" fill="{color}"/>"#,
        points([to, (base.0 + nx, base.1 + ny), (base.0 - nx, base.1 - ny)])
    );
}

/// Top-down SVG of the room and every placed asset.
pub fn topdown_svg(state: &SceneState, opts: &RenderOptions) -> Result<String> {
    opts.validate()?;
    let room = state.room;
    room.validate().map_err(|e| Error::Render(e.to_string()))?;
    let ppm = opts.pixels_per_meter;
    let frame = Frame {
        ppm,
        depth: room.depth,
        origin: [MARGIN, MARGIN],
    };
    let width = room.width * ppm + 2.0 * MARGIN;
    let height = room.depth * ppm + 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}" font-family="{FONT_FAMILY}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- top-down view: world +x renders screen-right, world +y renders screen-up; {ppm:.2} px per meter -->"
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="white"/>"#
    );
    let (rx, ry) = frame.px(0.0, room.depth);
    let _ = writeln!(
        svg,
        r##"<rect x="{rx:.2}" y="{ry:.2}" width="{:.2}" height="{:.2}" fill="#f7f7f2" stroke="black" stroke-width="3"/>"##,
        room.width * ppm,
        room.depth * ppm
    );

    if opts.show_grid {
        let s = opts.grid_spacing;
        let nx = (room.width / s + 1e-9).floor() as usize;
        let ny = (room.depth / s + 1e-9).floor() as usize;
        let _ = writeln!(svg, r##"<g fill="#555555" font-size="11">"##);
        for i in 0..=nx {
            for j in 0..=ny {
                let (gx, gy) = (i as f64 * s, j as f64 * s);
                let (px, py) = frame.px(gx, gy);
                let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3"/>"#);
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}">({}, {})</text>"#,
                    px + 4.0,
                    py - 4.0,
                    coord(gx),
                    coord(gy)
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    // origin axes in the corner
    let o = frame.px(0.0, 0.0);
    let axis = 0.5 * ppm;
    arrow(
        &mut svg,
        (o.0 - 24.0, o.1 + 24.0),
        (o.0 - 24.0 + axis, o.1 + 24.0),
        "#d62728",
    );
    arrow(
        &mut svg,
        (o.0 - 24.0, o.1 + 24.0),
        (o.0 - 24.0, o.1 + 24.0 - axis),
        "#2ca02c",
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#d62728">+x</text>"##,
        o.0 - 20.0 + axis,
        o.1 + 28.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#2ca02c">+y</text>"##,
        o.0 - 30.0,
        o.1 + 14.0 - axis
    );

    for (k, asset) in state.placed.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let p = asset.pose;
        let fp = Obb2::new([p.x, p.y], asset.spec.half_extents(), p.theta);
        let poly = corners(&fp).map(|c| frame.px(c.x, c.y));
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="2"/>"#,
            points(poly)
        );
        let center = frame.px(p.x, p.y);
        if opts.show_arrows {
            let [hx, hy] = asset.spec.half_extents();
            let len = hx.max(hy) * 0.8 + 0.1;
            let f = p.facing();
            let tip = frame.px(p.x + f[0] * len, p.y + f[1] * len);
            arrow(&mut svg, center, tip, "black");
        }
        if opts.show_labels {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
                center.0,
                center.1 - 6.0,
                escape(asset.id())
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Top-down render in the requested format.
pub fn render_topdown(state: &SceneState, opts: &RenderOptions) -> Result<Vec<u8>> {
    let svg = topdown_svg(state, opts)?;
    match opts.format {
        ImageFormat::Svg => Ok(svg.into_bytes()),
        ImageFormat::Png => rasterize(&svg),
    }
}

const CARD_W: f64 = 220.0;
const CARD_H: f64 = 230.0;
const PER_ROW: usize = 4;

fn truncate(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        text.to_string()
    } else {
        let mut s: String = text.chars().take(max - 1).collect();
        s.push('…');
        s
    }
}

/// One card per asset in a row-major grid, four per row.
pub fn asset_panel_svg(assets: &[AssetSpec], opts: &RenderOptions) -> Result<String> {
    opts.validate()?;
    if assets.is_empty() {
        return Err(Error::Render("asset panel needs at least one asset".into()));
    }
    let cols = assets.len().min(PER_ROW);
    let rows = assets.len().div_ceil(PER_ROW);
    let width = cols as f64 * CARD_W;
    let height = rows as f64 * CARD_H;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}" font-family="{FONT_FAMILY}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- asset cards: footprint seen from above, arrow marks the front (+x at rotation 0) -->"
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="white"/>"#
    );
    for (k, spec) in assets.iter().enumerate() {
        let (cx, cy) = ((k % PER_ROW) as f64 * CARD_W, (k / PER_ROW) as f64 * CARD_H);
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#fafafa" stroke="#999999"/>"##,
            cx + 4.0,
            cy + 4.0,
            CARD_W - 8.0,
            CARD_H - 8.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" font-weight="bold">{}</text>"#,
            cx + 12.0,
            cy + 24.0,
            escape(&spec.id)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#444444">{}</text>"##,
            cx + 12.0,
            cy + 40.0,
            escape(&truncate(&spec.description, 34))
        );
        let [w, d, h] = spec.dims;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{w:.2} x {d:.2} x {h:.2} m</text>"#,
            cx + 12.0,
            cy + 56.0
        );
        // footprint box scaled to fit a 150 x 140 px area
        let scale = (150.0 / w).min(140.0 / d).min(opts.pixels_per_meter * 2.0);
        let center = (cx + CARD_W / 2.0, cy + 64.0 + 80.0);
        let (fw, fd) = (w * scale, d * scale);
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{fw:.2}" height="{fd:.2}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="2"/>"#,
            center.0 - fw / 2.0,
            center.1 - fd / 2.0
        );
        arrow(
            &mut svg,
            center,
            (center.0 + fw / 2.0 + 14.0, center.1),
            "black",
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_asset_panel(assets: &[AssetSpec], opts: &RenderOptions) -> Result<Vec<u8>> {
    let svg = asset_panel_svg(assets, opts)?;
    match opts.format {
        ImageFormat::Svg => Ok(svg.into_bytes()),
        ImageFormat::Png => rasterize(&svg),
    }
}

/// Rasterizes SVG to 8-bit RGBA PNG using only the embedded font.
pub fn rasterize(svg: &str) -> Result<Vec<u8>> {
    let mut db = usvg::fontdb::Database::new();
    db.load_font_data(dejavu::sans::regular().to_vec());
    db.load_font_data(dejavu::sans::bold().to_vec());
    let opt = usvg::Options {
        font_family: FONT_FAMILY.into(),
        fontdb: Arc::new(db),
        ..usvg::Options::default()
    };
    let tree = usvg::Tree::from_str(svg, &opt).map_err(|e| Error::Render(e.to_string()))?;
    let size = tree.size().to_int_size();
    let mut pixmap = tiny_skia::Pixmap::new(size.width(), size.height())
        .ok_or_else(|| Error::Render("empty image".into()))?;
    resvg::render(
        &tree,
        tiny_skia::Transform::identity(),
        &mut pixmap.as_mut(),
    );
    pixmap
        .encode_png()
        .map_err(|e| Error::Render(e.to_string()))
}

/// Pixel position of a world point in [`topdown_svg`] output.
pub fn world_to_pixel(state: &SceneState, opts: &RenderOptions, p: Vec2) -> (f64, f64) {
    Frame {
        ppm: opts.pixels_per_meter,
        depth: state.room.depth,
        origin: [MARGIN, MARGIN],
    }
    .px(p.x, p.y)
}
