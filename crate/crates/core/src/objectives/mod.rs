//! Differentiable relation losses, the pairwise DIoU physics term and the
//! assembled objective over the free pose variables `(x, y, θ)`.
//!
//! Each loss has one generic body (`*_value`) evaluated with `f64` for values
//! and with [`Dual<6>`] for gradients; the six seeded variables are
//! `(x_i, y_i, θ_i, x_j, y_j, θ_j)`. `z` is never a variable: supported
//! assets get their height assigned directly.

pub mod gradcheck;

pub use gradcheck::{check_gradient, check_total_gradient, relative_error, GradientCheck};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::geometry::{
    self, corners, diou, overlap_penalty, point_segment_distance, IouMode, Obb2, Obb3, Vec2,
};
use crate::scene::{PlacedAsset, Pose, Relation, Room, SceneState, Wall};

type D6 = Dual<6>;

/// Offset used to take the one-sided derivative when two footprints share
/// the same center, where the DIoU is stationary by symmetry.
const COINCIDENT_PROBE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub physics_weight: f64,
    pub semantic_weight: f64,
    /// Physics pairs contribute only while their 3D IoU is positive.
    pub collision_gate: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            physics_weight: 1.0,
            semantic_weight: 1.0,
            collision_gate: true,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("physics_weight", self.physics_weight),
            ("semantic_weight", self.semantic_weight),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated loss with its gradient per non-frozen asset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTerm {
    pub label: String,
    pub value: f64,
    /// `(∂/∂x, ∂/∂y, ∂/∂θ)` per asset id.
    pub gradient: BTreeMap<String, [f64; 3]>,
}

impl LossTerm {
    fn from_pair(label: String, a: &PlacedAsset, b: Option<&PlacedAsset>, v: PairValue) -> Self {
        let mut gradient = BTreeMap::new();
        if !a.frozen {
            gradient.insert(a.id().to_string(), v.grad[0]);
        }
        if let Some(b) = b {
            if !b.frozen {
                let entry = gradient.entry(b.id().to_string()).or_insert([0.0; 3]);
                for (e, g) in entry.iter_mut().zip(v.grad[1]) {
                    *e += g;
                }
            }
        }
        Self {
            label,
            value: v.value,
            gradient,
        }
    }

    pub fn grad_of(&self, id: &str) -> [f64; 3] {
        self.gradient.get(id).copied().unwrap_or([0.0; 3])
    }
}

/// Pose variables for one asset; `z` is a constant.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoseVar<S> {
    pub x: S,
    pub y: S,
    pub theta: S,
    pub z: f64,
}

impl<S: Scalar> PoseVar<S> {
    fn position(&self) -> Vec2<S> {
        Vec2::new(self.x, self.y)
    }

    fn facing(&self) -> Vec2<S> {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    fn obb(&self, dims: [f64; 3]) -> Obb3<S> {
        Obb3 {
            footprint: Obb2 {
                center: self.position(),
                half_extents: [dims[0] / 2.0, dims[1] / 2.0],
                theta: self.theta,
            },
            z_min: self.z - dims[2] / 2.0,
            z_max: self.z + dims[2] / 2.0,
        }
    }
}

impl From<&Pose> for PoseVar<f64> {
    fn from(p: &Pose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            theta: p.theta,
            z: p.z,
        }
    }
}

fn seed(p: &Pose, offset: usize) -> PoseVar<D6> {
    PoseVar {
        x: D6::variable(p.x, offset),
        y: D6::variable(p.y, offset + 1),
        theta: D6::variable(p.theta, offset + 2),
        z: p.z,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PairValue {
    pub value: f64,
    pub grad: [[f64; 3]; 2],
}

impl From<D6> for PairValue {
    fn from(d: D6) -> Self {
        Self {
            value: d.v,
            grad: [[d.d[0], d.d[1], d.d[2]], [d.d[3], d.d[4], d.d[5]]],
        }
    }
}

fn eval_pair(pi: &Pose, pj: &Pose, f: impl Fn(&PoseVar<D6>, &PoseVar<D6>) -> D6) -> PairValue {
    f(&seed(pi, 0), &seed(pj, 3)).into()
}

// ---------------------------------------------------------------------------
// loss bodies

/// `clamp(max(d_min − d, d − d_max), 0, 1)` on the xy centroid distance.
pub(crate) fn distance_value<S: Scalar>(a: &PoseVar<S>, b: &PoseVar<S>, min: f64, max: f64) -> S {
    let d = a.position().sub(b.position()).norm();
    let below = S::cst(min) - d;
    let above = d - max;
    below.max(above).clamp(0.0, 1.0)
}

/// Negated footprint DIoU: attracts the subject's footprint onto the support's.
pub(crate) fn on_top_of_value<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>) -> S {
    -diou(a, b, IouMode::Xy)
}

/// `None` when the two positions coincide.
pub(crate) fn point_towards_value<S: Scalar>(
    a: &PoseVar<S>,
    b: &PoseVar<S>,
    angle: f64,
) -> Option<S> {
    let delta = b.position().sub(a.position());
    let len = delta.norm();
    if len.val() <= 1e-6 {
        return None;
    }
    let u = delta.scale(S::cst(1.0) / len);
    let (s, c) = angle.sin_cos();
    let dir = Vec2::new(u.x * c - u.y * s, u.x * s + u.y * c);
    let cosine = a.facing().dot(dir);
    Some(if cosine.val() > 0.0 {
        S::cst(0.0)
    } else {
        S::cst(1.0) - cosine
    })
}

/// `1 − cos(θ_i − (θ_j + φ))`.
pub(crate) fn align_with_value<S: Scalar>(a: &PoseVar<S>, b: &PoseVar<S>, angle: f64) -> S {
    S::cst(1.0) - (a.theta - b.theta - angle).cos()
}

/// Clamped corner-to-wall distances plus the facing term `1 − v·n`.
pub(crate) fn against_wall_value<S: Scalar>(a: &PoseVar<S>, dims: [f64; 3], wall: &Wall) -> S {
    let seg = wall.segment.map(|p| Vec2::from_f64(p[0], p[1]));
    let fp = a.obb(dims).footprint;
    let mut acc = S::cst(0.0);
    for c in corners(&fp) {
        acc += point_segment_distance(c, seg).clamp(0.0, 1.0);
    }
    let n = Vec2::from_f64(wall.normal[0], wall.normal[1]);
    acc + (S::cst(1.0) - a.facing().dot(n))
}

fn physics_gate_open(a: &Obb3<f64>, b: &Obb3<f64>) -> bool {
    geometry::iou(a, b, IouMode::Xyz) > 0.0
}

/// Physics term for one pair. Exempt pairs must be filtered by the caller.
///
/// Gated: the overlap penalty, which stays positive while the boxes intersect
/// so separating them never raises the loss. Ungated: raw DIoU.
pub(crate) fn physics_pair_value(
    pi: &Pose,
    di: [f64; 3],
    pj: &Pose,
    dj: [f64; 3],
    gate: bool,
) -> PairValue {
    let bi = PoseVar::from(pi).obb(di);
    let bj = PoseVar::from(pj).obb(dj);
    if gate && !physics_gate_open(&bi, &bj) {
        return PairValue::default();
    }
    let metric = |a: &Obb3<D6>, b: &Obb3<D6>| {
        if gate {
            overlap_penalty(a, b, IouMode::Xyz)
        } else {
            diou(a, b, IouMode::Xyz)
        }
    };
    let f = |a: &PoseVar<D6>, b: &PoseVar<D6>| metric(&a.obb(di), &b.obb(dj));
    let dx = pi.x - pj.x;
    let dy = pi.y - pj.y;
    if dx * dx + dy * dy < 1e-24 {
        let mut probe = *pj;
        probe.x += COINCIDENT_PROBE;
        let mut out = eval_pair(pi, &probe, f);
        out.value = if gate {
            overlap_penalty(&bi, &bj, IouMode::Xyz)
        } else {
            diou(&bi, &bj, IouMode::Xyz)
        };
        out
    } else {
        eval_pair(pi, pj, f)
    }
}

// ---------------------------------------------------------------------------
// public per-relation API

pub fn loss_distance(a: &PlacedAsset, b: &PlacedAsset, d_min: f64, d_max: f64) -> Result<LossTerm> {
    if !(d_min >= 0.0 && d_min <= d_max && d_max.is_finite()) {
        return Err(Error::RelationParams(format!(
            "distance range [{d_min}, {d_max}] must satisfy 0 <= min <= max"
        )));
    }
    let v = eval_pair(&a.pose, &b.pose, |x, y| distance_value(x, y, d_min, d_max));
    Ok(LossTerm::from_pair(
        format!("distance({}, {})", a.id(), b.id()),
        a,
        Some(b),
        v,
    ))
}

/// Returns the loss and the `z` to assign to `a` so that it rests on `b`.
pub fn loss_on_top_of(a: &PlacedAsset, b: &PlacedAsset) -> (LossTerm, f64) {
    let (da, db) = (a.spec.dims, b.spec.dims);
    let v = eval_pair(&a.pose, &b.pose, |x, y| {
        on_top_of_value(&x.obb(da), &y.obb(db))
    });
    let z = supported_z(&b.pose, db, da);
    (
        LossTerm::from_pair(format!("on_top_of({}, {})", a.id(), b.id()), a, Some(b), v),
        z,
    )
}

pub(crate) fn supported_z(support: &Pose, support_dims: [f64; 3], dims: [f64; 3]) -> f64 {
    support.z + support_dims[2] / 2.0 + dims[2] / 2.0
}

pub fn loss_point_towards(a: &PlacedAsset, b: &PlacedAsset, phi: f64) -> Result<LossTerm> {
    let degenerate = || Error::DegenerateDirection {
        subject: a.id().to_string(),
        target: b.id().to_string(),
    };
    point_towards_value(&PoseVar::from(&a.pose), &PoseVar::from(&b.pose), phi)
        .ok_or_else(degenerate)?;
    let d =
        point_towards_value(&seed(&a.pose, 0), &seed(&b.pose, 3), phi).ok_or_else(degenerate)?;
    Ok(LossTerm::from_pair(
        format!("point_towards({}, {})", a.id(), b.id()),
        a,
        Some(b),
        d.into(),
    ))
}

pub fn loss_align_with(a: &PlacedAsset, b: &PlacedAsset, phi: f64) -> LossTerm {
    let v = eval_pair(&a.pose, &b.pose, |x, y| align_with_value(x, y, phi));
    LossTerm::from_pair(format!("align_with({}, {})", a.id(), b.id()), a, Some(b), v)
}

pub fn loss_against_wall(a: &PlacedAsset, wall: &Wall) -> LossTerm {
    let dims = a.spec.dims;
    let v = eval_pair(&a.pose, &a.pose, |x, _| against_wall_value(x, dims, wall));
    LossTerm::from_pair(format!("against_wall({}, {})", a.id(), wall.id), a, None, v)
}

/// Gated 3D DIoU between two assets. Pairs linked by a support relation are
/// exempt and contribute nothing.
pub fn loss_physics_pair(a: &PlacedAsset, b: &PlacedAsset, cfg: &ObjectiveConfig) -> LossTerm {
    let label = format!("physics({}, {})", a.id(), b.id());
    let linked = a.support.as_deref() == Some(b.id()) || b.support.as_deref() == Some(a.id());
    let v = if linked {
        PairValue::default()
    } else {
        physics_pair_value(
            &a.pose,
            a.spec.dims,
            &b.pose,
            b.spec.dims,
            cfg.collision_gate,
        )
    };
    LossTerm::from_pair(label, a, Some(b), v)
}

/// Relation loss without gradients. `lookup` resolves an asset id to its pose
/// and dims. Returns `Ok(None)` for a degenerate point_towards.
pub fn relation_value(
    rel: &Relation,
    room: &Room,
    lookup: impl Fn(&str) -> Option<(Pose, [f64; 3])>,
) -> Result<Option<f64>> {
    let resolve = |id: &str| {
        lookup(id).ok_or_else(|| Error::UnresolvedAsset {
            relation: rel.to_string(),
            id: id.to_string(),
        })
    };
    let (pa, da) = resolve(rel.subject())?;
    let a = PoseVar::from(&pa);
    let target = match rel.target_asset() {
        Some(t) => {
            let (p, d) = resolve(t)?;
            Some((PoseVar::from(&p), d))
        }
        None => None,
    };
    Ok(match (rel, target) {
        (Relation::Distance { min, max, .. }, Some((b, _))) => {
            Some(distance_value(&a, &b, *min, *max))
        }
        (Relation::OnTopOf { .. }, Some((b, db))) => Some(on_top_of_value(&a.obb(da), &b.obb(db))),
        (Relation::AlignWith { angle, .. }, Some((b, _))) => Some(align_with_value(&a, &b, *angle)),
        (Relation::PointTowards { angle, .. }, Some((b, _))) => point_towards_value(&a, &b, *angle),
        (Relation::AgainstWall { wall, .. }, None) => {
            Some(against_wall_value(&a, da, &room.wall(*wall)))
        }
        _ => unreachable!("relation arity is fixed by its kind"),
    })
}

// ---------------------------------------------------------------------------
// assembled objective

#[derive(Debug, Clone)]
enum Term {
    Distance {
        i: usize,
        j: usize,
        min: f64,
        max: f64,
    },
    OnTopOf {
        i: usize,
        j: usize,
    },
    AlignWith {
        i: usize,
        j: usize,
        angle: f64,
    },
    PointTowards {
        i: usize,
        j: usize,
        angle: f64,
    },
    AgainstWall {
        i: usize,
        wall: Wall,
    },
}

/// Objective compiled against a scene: relation endpoints resolved to indices.
#[derive(Debug, Clone)]
pub struct Objective {
    ids: Vec<String>,
    dims: Vec<[f64; 3]>,
    frozen: Vec<bool>,
    terms: Vec<Term>,
    exempt: HashSet<(usize, usize)>,
    cfg: ObjectiveConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub semantic: f64,
    pub physics: f64,
    /// Indexed like the scene's `placed` list; zero for frozen assets.
    pub gradient: Vec<[f64; 3]>,
}

impl Objective {
    pub fn new(state: &SceneState, relations: &[Relation], cfg: &ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        let ids: Vec<String> = state.ids().map(str::to_string).collect();
        let index = |rel: &Relation, id: &str| {
            ids.iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::UnresolvedAsset {
                    relation: rel.to_string(),
                    id: id.to_string(),
                })
        };
        let mut terms = Vec::with_capacity(relations.len());
        let mut exempt = HashSet::new();
        for rel in relations {
            let i = index(rel, rel.subject())?;
            let j = match rel.target_asset() {
                Some(t) => Some(index(rel, t)?),
                None => None,
            };
            terms.push(match rel {
                Relation::Distance { min, max, .. } => Term::Distance {
                    i,
                    j: j.unwrap(),
                    min: *min,
                    max: *max,
                },
                Relation::OnTopOf { .. } => {
                    let j = j.unwrap();
                    exempt.insert((i.min(j), i.max(j)));
                    Term::OnTopOf { i, j }
                }
                Relation::AlignWith { angle, .. } => Term::AlignWith {
                    i,
                    j: j.unwrap(),
                    angle: *angle,
                },
                Relation::PointTowards { angle, .. } => Term::PointTowards {
                    i,
                    j: j.unwrap(),
                    angle: *angle,
                },
                Relation::AgainstWall { wall, .. } => Term::AgainstWall {
                    i,
                    wall: state.room.wall(*wall),
                },
            });
        }
        for (i, a) in state.placed.iter().enumerate() {
            if let Some(s) = &a.support {
                if let Some(j) = ids.iter().position(|x| x == s) {
                    exempt.insert((i.min(j), i.max(j)));
                }
            }
        }
        Ok(Self {
            ids,
            dims: state.placed.iter().map(|a| a.spec.dims).collect(),
            frozen: state.placed.iter().map(|a| a.frozen).collect(),
            terms,
            exempt,
            cfg: *cfg,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    fn accumulate(&self, grad: &mut [[f64; 3]], i: usize, j: usize, v: &PairValue, w: f64) {
        for (slot, g) in [(i, v.grad[0]), (j, v.grad[1])] {
            if !self.frozen[slot] {
                for k in 0..3 {
                    grad[slot][k] += w * g[k];
                }
            }
        }
    }

    /// Loss and gradient at `poses` (one per asset, same order as the scene).
    pub fn evaluate(&self, poses: &[Pose]) -> Evaluation {
        assert_eq!(poses.len(), self.ids.len(), "pose count mismatch");
        let n = poses.len();
        let mut grad = vec![[0.0; 3]; n];
        let ws = self.cfg.semantic_weight;
        let wp = self.cfg.physics_weight;

        let mut semantic = 0.0;
        for term in &self.terms {
            let (i, j, v) = match *term {
                Term::Distance { i, j, min, max } => (
                    i,
                    j,
                    eval_pair(&poses[i], &poses[j], |a, b| distance_value(a, b, min, max)),
                ),
                Term::OnTopOf { i, j } => {
                    let (di, dj) = (self.dims[i], self.dims[j]);
                    (
                        i,
                        j,
                        eval_pair(&poses[i], &poses[j], |a, b| {
                            on_top_of_value(&a.obb(di), &b.obb(dj))
                        }),
                    )
                }
                Term::AlignWith { i, j, angle } => (
                    i,
                    j,
                    eval_pair(&poses[i], &poses[j], |a, b| align_with_value(a, b, angle)),
                ),
                Term::PointTowards { i, j, angle } => {
                    match point_towards_value(&seed(&poses[i], 0), &seed(&poses[j], 3), angle) {
                        Some(d) => (i, j, d.into()),
                        None => continue,
                    }
                }
                Term::AgainstWall { i, ref wall } => {
                    let dims = self.dims[i];
                    let mut v = eval_pair(&poses[i], &poses[i], |a, _| {
                        against_wall_value(a, dims, wall)
                    });
                    v.grad[1] = [0.0; 3];
                    (i, i, v)
                }
            };
            semantic += v.value;
            self.accumulate(&mut grad, i, j, &v, ws);
        }

        let mut physics = 0.0;
        let boxes: Vec<Obb3<f64>> = poses
            .iter()
            .zip(&self.dims)
            .map(|(p, d)| PoseVar::from(p).obb(*d))
            .collect();
        let aabbs: Vec<[f64; 4]> = boxes.iter().map(|b| b.footprint.aabb()).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.frozen[i] && self.frozen[j] {
                    continue;
                }
                if self.exempt.contains(&(i, j)) {
                    continue;
                }
                if self.cfg.collision_gate {
                    let (a, b) = (aabbs[i], aabbs[j]);
                    if a[2] < b[0] || b[2] < a[0] || a[3] < b[1] || b[3] < a[1] {
                        continue;
                    }
                    if boxes[i].z_max.min(boxes[j].z_max) <= boxes[i].z_min.max(boxes[j].z_min) {
                        continue;
                    }
                }
                let v = physics_pair_value(
                    &poses[i],
                    self.dims[i],
                    &poses[j],
                    self.dims[j],
                    self.cfg.collision_gate,
                );
                if v.value == 0.0 && v.grad == [[0.0; 3]; 2] {
                    continue;
                }
                physics += v.value;
                self.accumulate(&mut grad, i, j, &v, wp);
            }
        }

        Evaluation {
            total: ws * semantic + wp * physics,
            semantic,
            physics,
            gradient: grad,
        }
    }
}

/// Total objective of a scene and its gradient keyed by non-frozen asset id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalLoss {
    pub total: f64,
    pub semantic: f64,
    pub physics: f64,
    pub gradient: BTreeMap<String, [f64; 3]>,
}

pub fn total_loss(
    state: &SceneState,
    relations: &[Relation],
    cfg: &ObjectiveConfig,
) -> Result<TotalLoss> {
    let objective = Objective::new(state, relations, cfg)?;
    let poses: Vec<Pose> = state.placed.iter().map(|a| a.pose).collect();
    let eval = objective.evaluate(&poses);
    let gradient = state
        .placed
        .iter()
        .zip(eval.gradient)
        .filter(|(a, _)| !a.frozen)
        .map(|(a, g)| (a.id().to_string(), g))
        .collect();
    Ok(TotalLoss {
        total: eval.total,
        semantic: eval.semantic,
        physics: eval.physics,
        gradient,
    })
}
