//! Domain types shared across the crate: assets, poses, rooms, relations,
//! scene programs and the placement state, plus inventory and room loading.
//!
//! Lengths are meters everywhere. Angles are radians in memory and degrees in
//! every file format; the conversion happens at the (de)serialization edge.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π, π)`.
///
/// Values already inside the interval are returned untouched, which keeps the
/// function exactly idempotent.
pub fn normalize_theta(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite(format!("angle {theta}")));
    }
    if (-PI..PI).contains(&theta) {
        return Ok(theta);
    }
    let mut r = (theta + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    Ok(r)
}

pub(crate) fn wrap_angle(theta: f64) -> f64 {
    normalize_theta(theta).unwrap_or(theta)
}

/// `true` when `id` matches `[a-z][a-z0-9_]*`.
pub fn is_valid_id(id: &str) -> bool {
    let mut chars = id.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Placement {
    pub on_floor: bool,
    pub on_wall: bool,
    pub on_ceiling: bool,
    pub on_object: bool,
}

/// An annotated asset. `dims` is `(depth_x, width_y, height_z)` of the
/// bounding box with the asset facing `+x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub dims: [f64; 3],
    #[serde(default)]
    pub placement: Placement,
}

impl AssetSpec {
    pub fn new(id: impl Into<String>, dims: [f64; 3]) -> Self {
        Self {
            id: id.into(),
            description: String::new(),
            dims,
            placement: Placement {
                on_floor: true,
                ..Placement::default()
            },
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn height(&self) -> f64 {
        self.dims[2]
    }

    pub fn half_extents(&self) -> [f64; 2] {
        [self.dims[0] / 2.0, self.dims[1] / 2.0]
    }

    pub fn validate(&self) -> Result<()> {
        if !is_valid_id(&self.id) {
            return Err(Error::InvalidAsset {
                id: self.id.clone(),
                message: "id must match [a-z][a-z0-9_]*".into(),
            });
        }
        if self.dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidAsset {
                id: self.id.clone(),
                message: format!("dims must be positive, got {:?}", self.dims),
            });
        }
        Ok(())
    }
}

/// Centroid position and yaw of an asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
}

impl Pose {
    /// Builds a pose, wrapping `theta` into `[-π, π)`.
    pub fn new(x: f64, y: f64, z: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            z,
            theta: wrap_angle(theta),
        }
    }

    pub fn from_degrees(x: f64, y: f64, z: f64, rotation_deg: f64) -> Self {
        Self::new(x, y, z, rotation_deg.to_radians())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }

    /// Facing direction `(cos θ, sin θ)`.
    pub fn facing(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    /// Rotation in degrees, in `(-180, 180]` so that a half turn prints as 180.
    pub fn rotation_deg(&self) -> f64 {
        let d = self.theta.to_degrees();
        if d <= -180.0 {
            d + 360.0
        } else {
            d
        }
    }
}

/// External representation of a pose: degrees instead of radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub rotation_deg: f64,
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            rotation_deg: p.rotation_deg(),
        }
    }
}

impl From<PoseRecord> for Pose {
    fn from(r: PoseRecord) -> Self {
        Pose::from_degrees(r.x, r.y, r.z, r.rotation_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WallId {
    #[serde(rename = "wall_south")]
    South,
    #[serde(rename = "wall_east")]
    East,
    #[serde(rename = "wall_north")]
    North,
    #[serde(rename = "wall_west")]
    West,
}

impl WallId {
    pub const ALL: [WallId; 4] = [WallId::South, WallId::East, WallId::North, WallId::West];

    pub fn as_str(self) -> &'static str {
        match self {
            WallId::South => "wall_south",
            WallId::East => "wall_east",
            WallId::North => "wall_north",
            WallId::West => "wall_west",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        WallId::ALL.into_iter().find(|w| w.as_str() == s)
    }
}

impl fmt::Display for WallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub id: WallId,
    pub segment: [[f64; 2]; 2],
    /// Inward-pointing unit normal.
    pub normal: [f64; 2],
}

/// Rectangular room with interior `[0, width] × [0, depth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Room {
    pub fn new(width: f64, depth: f64, height: f64) -> Result<Self> {
        let room = Self {
            width,
            depth,
            height,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("depth", self.depth),
            ("height", self.height),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidRoom(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The four walls, counterclockwise starting at the south wall (`y = 0`).
    pub fn walls(&self) -> [Wall; 4] {
        WallId::ALL.map(|id| self.wall(id))
    }

    pub fn wall(&self, id: WallId) -> Wall {
        let (w, d) = (self.width, self.depth);
        let (segment, normal) = match id {
            WallId::South => ([[0.0, 0.0], [w, 0.0]], [0.0, 1.0]),
            WallId::East => ([[w, 0.0], [w, d]], [-1.0, 0.0]),
            WallId::North => ([[w, d], [0.0, d]], [0.0, -1.0]),
            WallId::West => ([[0.0, d], [0.0, 0.0]], [1.0, 0.0]),
        };
        Wall {
            id,
            segment,
            normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Distance,
    OnTopOf,
    AlignWith,
    PointTowards,
    AgainstWall,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Distance => "distance",
            RelationKind::OnTopOf => "on_top_of",
            RelationKind::AlignWith => "align_with",
            RelationKind::PointTowards => "point_towards",
            RelationKind::AgainstWall => "against_wall",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RelationKind::Distance,
            RelationKind::OnTopOf,
            RelationKind::AlignWith,
            RelationKind::PointTowards,
            RelationKind::AgainstWall,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn is_orientational(self) -> bool {
        matches!(self, RelationKind::AlignWith | RelationKind::PointTowards)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One spatial relation. Angles are radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relation {
    Distance {
        subject: String,
        target: String,
        min: f64,
        max: f64,
    },
    OnTopOf {
        subject: String,
        target: String,
    },
    AlignWith {
        subject: String,
        target: String,
        angle: f64,
    },
    PointTowards {
        subject: String,
        target: String,
        angle: f64,
    },
    AgainstWall {
        subject: String,
        wall: WallId,
    },
}

impl Relation {
    pub fn distance(
        subject: impl Into<String>,
        target: impl Into<String>,
        min: f64,
        max: f64,
    ) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min < 0.0 || min > max {
            return Err(Error::RelationParams(format!(
                "distance range [{min}, {max}] must satisfy 0 <= min <= max"
            )));
        }
        Self::checked(Relation::Distance {
            subject: subject.into(),
            target: target.into(),
            min,
            max,
        })
    }

    pub fn on_top_of(subject: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        Self::checked(Relation::OnTopOf {
            subject: subject.into(),
            target: target.into(),
        })
    }

    pub fn align_with(
        subject: impl Into<String>,
        target: impl Into<String>,
        angle: f64,
    ) -> Result<Self> {
        Self::checked(Relation::AlignWith {
            subject: subject.into(),
            target: target.into(),
            angle: normalize_theta(angle)?,
        })
    }

    pub fn point_towards(
        subject: impl Into<String>,
        target: impl Into<String>,
        angle: f64,
    ) -> Result<Self> {
        Self::checked(Relation::PointTowards {
            subject: subject.into(),
            target: target.into(),
            angle: normalize_theta(angle)?,
        })
    }

    pub fn against_wall(subject: impl Into<String>, wall: WallId) -> Self {
        Relation::AgainstWall {
            subject: subject.into(),
            wall,
        }
    }

    fn checked(rel: Self) -> Result<Self> {
        if let Some(target) = rel.target_asset() {
            if target == rel.subject() {
                return Err(Error::RelationParams(format!(
                    "{} relates `{}` to itself",
                    rel.kind(),
                    target
                )));
            }
        }
        Ok(rel)
    }

    pub fn kind(&self) -> RelationKind {
        match self {
            Relation::Distance { .. } => RelationKind::Distance,
            Relation::OnTopOf { .. } => RelationKind::OnTopOf,
            Relation::AlignWith { .. } => RelationKind::AlignWith,
            Relation::PointTowards { .. } => RelationKind::PointTowards,
            Relation::AgainstWall { .. } => RelationKind::AgainstWall,
        }
    }

    pub fn subject(&self) -> &str {
        match self {
            Relation::Distance { subject, .. }
            | Relation::OnTopOf { subject, .. }
            | Relation::AlignWith { subject, .. }
            | Relation::PointTowards { subject, .. }
            | Relation::AgainstWall { subject, .. } => subject,
        }
    }

    /// The target asset id, or `None` for wall relations.
    pub fn target_asset(&self) -> Option<&str> {
        match self {
            Relation::Distance { target, .. }
            | Relation::OnTopOf { target, .. }
            | Relation::AlignWith { target, .. }
            | Relation::PointTowards { target, .. } => Some(target),
            Relation::AgainstWall { .. } => None,
        }
    }

    pub fn asset_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.subject()).chain(self.target_asset())
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Distance {
                subject,
                target,
                min,
                max,
            } => write!(f, "distance({subject}, {target}, min={min}, max={max})"),
            Relation::OnTopOf { subject, target } => write!(f, "on_top_of({subject}, {target})"),
            Relation::AlignWith {
                subject,
                target,
                angle,
            } => write!(
                f,
                "align_with({subject}, {target}, angle={})",
                angle.to_degrees()
            ),
            Relation::PointTowards {
                subject,
                target,
                angle,
            } => write!(
                f,
                "point_towards({subject}, {target}, angle={})",
                angle.to_degrees()
            ),
            Relation::AgainstWall { subject, wall } => write!(f, "against_wall({subject}, {wall})"),
        }
    }
}

/// Initial pose estimates plus relations for one group of assets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneProgram {
    pub poses: BTreeMap<String, Pose>,
    pub relations: Vec<Relation>,
    pub group_label: Option<String>,
}

impl SceneProgram {
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty() && self.relations.is_empty()
    }
}

/// An asset in the scene together with its current pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedAsset {
    pub spec: AssetSpec,
    pub pose: Pose,
    /// Frozen assets keep their pose during optimization but still collide.
    pub frozen: bool,
    /// Supporting asset when this one rests on top of another.
    pub support: Option<String>,
}

impl PlacedAsset {
    pub fn new(spec: AssetSpec, pose: Pose) -> Self {
        Self {
            spec,
            pose,
            frozen: false,
            support: None,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub room: Room,
    /// Insertion-ordered; ids are unique when built through [`SceneState::insert`].
    pub placed: Vec<PlacedAsset>,
}

impl SceneState {
    pub fn new(room: Room) -> Self {
        Self {
            room,
            placed: Vec::new(),
        }
    }

    pub fn insert(&mut self, asset: PlacedAsset) -> Result<()> {
        if self.get(asset.id()).is_some() {
            return Err(Error::DuplicateId(asset.id().to_string()));
        }
        self.placed.push(asset);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PlacedAsset> {
        self.placed.iter().find(|a| a.spec.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut PlacedAsset> {
        self.placed.iter_mut().find(|a| a.spec.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.placed.iter().map(|a| a.id())
    }

    pub fn len(&self) -> usize {
        self.placed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placed.is_empty()
    }

    /// Whether `a` and `b` are linked by a support (on-top-of) relation.
    pub fn supports_link(&self, a: &str, b: &str) -> bool {
        let rests_on = |x: &str, y: &str| {
            self.get(x)
                .and_then(|p| p.support.as_deref())
                .is_some_and(|s| s == y)
        };
        rests_on(a, b) || rests_on(b, a)
    }

    pub fn freeze_all(&mut self) {
        for a in &mut self.placed {
            a.frozen = true;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneDiagnostic {
    pub asset: Option<String>,
    pub message: String,
}

impl fmt::Display for SceneDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.asset {
            Some(id) => write!(f, "{id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks the state invariants; an empty result means the state is valid.
pub fn validate_scene(state: &SceneState) -> Vec<SceneDiagnostic> {
    let mut out = Vec::new();
    if let Err(e) = state.room.validate() {
        out.push(SceneDiagnostic {
            asset: None,
            message: e.to_string(),
        });
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for a in &state.placed {
        let id = a.id();
        if !seen.insert(id) {
            if reported.insert(id) {
                out.push(SceneDiagnostic {
                    asset: Some(id.to_string()),
                    message: "id used by more than one asset".into(),
                });
            }
            continue;
        }
        if let Err(e) = a.spec.validate() {
            out.push(SceneDiagnostic {
                asset: Some(id.to_string()),
                message: e.to_string(),
            });
        }
        if !a.pose.is_finite() {
            out.push(SceneDiagnostic {
                asset: Some(id.to_string()),
                message: format!("non-finite pose {:?}", a.pose),
            });
        }
    }
    for a in &state.placed {
        if let Some(s) = &a.support {
            if state.get(s).is_none() {
                out.push(SceneDiagnostic {
                    asset: Some(a.id().to_string()),
                    message: format!("rests on unknown asset `{s}`"),
                });
            }
        }
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates an inventory JSON document.
pub fn parse_inventory(text: &str, origin: &Path) -> Result<Vec<AssetSpec>> {
    let assets: Vec<AssetSpec> = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    let mut seen = HashSet::new();
    for a in &assets {
        a.validate()?;
        if !seen.insert(a.id.as_str()) {
            return Err(Error::DuplicateId(a.id.clone()));
        }
    }
    Ok(assets)
}

pub fn load_inventory(path: impl AsRef<Path>) -> Result<Vec<AssetSpec>> {
    let path = path.as_ref();
    parse_inventory(&read_text(path)?, path)
}

pub fn save_inventory(path: impl AsRef<Path>, assets: &[AssetSpec]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(assets)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_room(path: impl AsRef<Path>) -> Result<Room> {
    let path = path.as_ref();
    let room: Room = serde_json::from_str(&read_text(path)?).map_err(|e| json_error(path, e))?;
    room.validate()?;
    Ok(room)
}
