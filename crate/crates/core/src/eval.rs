//! Physical plausibility metrics (collision-free, in-boundary) and
//! VLM-judged semantic scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{corners, iou, IouMode, Obb2, Obb3};
use crate::render::{render_topdown, RenderOptions};
use crate::scene::SceneState;
use crate::vlm::{prompts, ChatRequest, Part, Role, VlmClient};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Pairs with 3D IoU above this count as colliding.
    pub tolerance_iou: f64,
    /// Meters an asset may extend past the walls.
    pub slack: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance_iou: 0.01,
            slack: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Collision,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Two ids for a collision, one for an out-of-bounds asset.
    pub assets: Vec<String>,
    /// 3D IoU for collisions, protrusion in meters otherwise.
    pub measure: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgedScores {
    pub position: Option<u32>,
    pub rotation: Option<u32>,
    pub psa: Option<u32>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub collision_free: bool,
    pub in_boundary: bool,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judged: Option<JudgedScores>,
}

impl SceneScore {
    pub fn feasible(&self) -> bool {
        self.collision_free && self.in_boundary
    }
}

/// True iff no unordered pair, other than support-linked ones, has 3D IoU
/// above `tolerance_iou`.
pub fn collision_free(state: &SceneState, tolerance_iou: f64) -> (bool, Vec<Violation>) {
    let boxes: Vec<Obb3> = state
        .placed
        .iter()
        .map(|a| Obb3::from_pose(&a.pose, &a.spec))
        .collect();
    let mut violations = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let (a, b) = (state.placed[i].id(), state.placed[j].id());
            if state.supports_link(a, b) {
                continue;
            }
            let v = iou(&boxes[i], &boxes[j], IouMode::Xyz);
            if v > tolerance_iou {
                violations.push(Violation {
                    kind: ViolationKind::Collision,
                    assets: vec![a.to_string(), b.to_string()],
                    measure: v,
                });
            }
        }
    }
    (violations.is_empty(), violations)
}

/// Largest distance by which any footprint corner leaves the room rectangle.
pub fn protrusion(state: &SceneState, index: usize) -> f64 {
    let a = &state.placed[index];
    let fp = Obb2::new([a.pose.x, a.pose.y], a.spec.half_extents(), a.pose.theta);
    let room = state.room;
    corners(&fp)
        .iter()
        .map(|c| (-c.x).max(c.x - room.width).max(-c.y).max(c.y - room.depth))
        .fold(0.0, f64::max)
}

/// True iff every footprint lies within the room expanded by `slack`.
pub fn in_boundary(state: &SceneState, slack: f64) -> (bool, Vec<Violation>) {
    let violations: Vec<Violation> = (0..state.placed.len())
        .filter_map(|i| {
            let p = protrusion(state, i);
            (p > slack).then(|| Violation {
                kind: ViolationKind::OutOfBounds,
                assets: vec![state.placed[i].id().to_string()],
                measure: p,
            })
        })
        .collect();
    (violations.is_empty(), violations)
}

pub fn score_scene(state: &SceneState, cfg: &EvalConfig) -> SceneScore {
    let (cf, mut violations) = collision_free(state, cfg.tolerance_iou);
    let (ib, out) = in_boundary(state, cfg.slack);
    violations.extend(out);
    SceneScore {
        collision_free: cf,
        in_boundary: ib,
        violations,
        judged: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub name: String,
    pub score: SceneScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenes: usize,
    /// Percent of collision-free scenes, one decimal.
    pub cf_percent: f64,
    pub ib_percent: f64,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,collision_free,in_boundary,violations\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.name,
                r.score.collision_free,
                r.score.in_boundary,
                r.score.violations.len()
            ));
        }
        out
    }
}

fn percent(k: usize, n: usize) -> f64 {
    (1000.0 * k as f64 / n as f64).round() / 10.0
}

/// Per-scene scores plus CF% and IB% over the suite.
pub fn score_suite(scenes: &[(String, SceneState)], cfg: &EvalConfig) -> Result<SuiteReport> {
    if scenes.is_empty() {
        return Err(Error::Precondition("cannot score an empty suite".into()));
    }
    let rows: Vec<SuiteRow> = scenes
        .iter()
        .map(|(name, s)| SuiteRow {
            name: name.clone(),
            score: score_scene(s, cfg),
        })
        .collect();
    let n = rows.len();
    Ok(SuiteReport {
        scenes: n,
        cf_percent: percent(rows.iter().filter(|r| r.score.collision_free).count(), n),
        ib_percent: percent(rows.iter().filter(|r| r.score.in_boundary).count(), n),
        rows,
    })
}

/// First integer in `text`, if it lies in `0..=100`.
pub fn parse_score(text: &str) -> Option<u32> {
    let start = text.find(|c: char| c.is_ascii_digit())?;
    let digits: String = text[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse::<u32>().ok().filter(|v| *v <= 100)
}

fn pose_lines(state: &SceneState) -> String {
    state
        .placed
        .iter()
        .map(|a| {
            format!(
                "- {}: {:.2}, {:.2}, {:.0}",
                a.id(),
                a.pose.x,
                a.pose.y,
                a.pose.rotation_deg()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Judge request for one template: prompt text plus the top-down render.
pub fn judge_request(
    client: &VlmClient,
    template: &str,
    state: &SceneState,
    instruction: &str,
) -> Result<ChatRequest> {
    let room = prompts::room_vars(&state.room);
    let assets = pose_lines(state);
    let mut vars: Vec<(&str, &str)> = room.iter().map(|(k, v)| (*k, v.as_str())).collect();
    vars.push(("instruction", instruction));
    vars.push(("assets", &assets));
    let text = prompts::fill(template, &vars);
    let png = render_topdown(state, &RenderOptions::png())?;
    Ok(client
        .request()
        .message(Role::User, vec![Part::Text(text), Part::png(png)]))
}

/// Position, rotation and PSA scores from the judge. PSA is 0 without a
/// judge call when the scene is not collision-free and in-boundary.
pub fn judge_semantics(
    client: &VlmClient,
    state: &SceneState,
    instruction: &str,
    cfg: &EvalConfig,
) -> JudgedScores {
    let feasible = score_scene(state, cfg).feasible();
    let mut scores = JudgedScores::default();
    let ask = |name: &str, template: &str, diagnostics: &mut Vec<String>| -> Option<u32> {
        let response =
            judge_request(client, template, state, instruction).and_then(|r| client.complete(&r));
        match response {
            Err(e) => {
                diagnostics.push(format!("{name}: {e}"));
                None
            }
            Ok(text) => {
                let score = parse_score(&text);
                if score.is_none() {
                    diagnostics.push(format!(
                        "{name}: no score in judge output {:?}",
                        text.chars().take(80).collect::<String>()
                    ));
                }
                score
            }
        }
    };
    scores.position = ask("position", prompts::JUDGE_POSITION, &mut scores.diagnostics);
    scores.rotation = ask("rotation", prompts::JUDGE_ROTATION, &mut scores.diagnostics);
    scores.psa = if feasible {
        ask("psa", prompts::JUDGE_PSA, &mut scores.diagnostics)
    } else {
        Some(0)
    };
    for d in &scores.diagnostics {
        log::warn!("judge {d}");
    }
    scores
}
