//! Differentiable indoor scene layout.
//!
//! A scene program (initial pose estimates plus spatial relations, usually
//! emitted by a vision-language model) is turned into a physically plausible
//! layout in three steps:
//!
//! 1. [`decoder`] keeps only the relations that the initial poses already
//!    satisfy, plus every `on_top_of`, and at most one orientational relation
//!    per asset.
//! 2. [`objectives`] turns the surviving relations and a pairwise 3D DIoU
//!    collision term into a differentiable objective over `(x, y, θ)`.
//! 3. [`optimizer`] runs projected gradient descent, group by group, keeping
//!    every footprint inside the room.
//!
//! [`dsl`] parses and prints the textual program format, [`render`] draws the
//! annotated top-down views, [`vlm`] talks to a chat-completions endpoint with
//! record/replay caching, [`eval`] computes the collision-free and in-boundary
//! metrics and [`cli`] wires everything into the `scenelayout` binary.

pub mod autodiff;
pub mod cli;
pub mod decoder;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod objectives;
pub mod optimizer;
pub mod render;
pub mod scene;
pub mod vlm;

pub use error::{Error, Result};
pub use scene::{
    load_inventory, load_room, normalize_theta, validate_scene, AssetSpec, PlacedAsset, Placement,
    Pose, Relation, RelationKind, Room, SceneProgram, SceneState, Wall, WallId,
};
