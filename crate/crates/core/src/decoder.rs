//! Self-consistent decoding of a proposed scene program.
//!
//! A relation survives only if its loss, evaluated at the program's own
//! initial poses, is within the per-kind threshold. `on_top_of` relations are
//! exempt from that test. Afterwards each asset keeps at most one
//! orientational relation (`align_with` or `point_towards`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::objectives::relation_value;
use crate::scene::{AssetSpec, Pose, Relation, RelationKind, SceneProgram, SceneState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Loss threshold per relation kind. `on_top_of` is never thresholded.
    pub epsilon: BTreeMap<RelationKind, f64>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            epsilon: BTreeMap::from([
                (RelationKind::Distance, 0.05),
                (RelationKind::AlignWith, 0.10),
                (RelationKind::PointTowards, 0.10),
                (RelationKind::AgainstWall, 0.50),
            ]),
        }
    }
}

impl DecoderConfig {
    pub fn threshold(&self, kind: RelationKind) -> Option<f64> {
        if kind == RelationKind::OnTopOf {
            return None;
        }
        self.epsilon
            .get(&kind)
            .copied()
            .or_else(|| Self::default().epsilon.get(&kind).copied())
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (kind, eps) in &self.epsilon {
            if !eps.is_finite() || *eps < 0.0 {
                return Err(Error::Config(format!(
                    "epsilon for {kind} must be >= 0, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    /// `on_top_of` relations bypass the threshold test.
    Exempt,
    AboveThreshold,
    UnknownAsset,
    DegenerateDirection,
    /// Another orientational relation on the same subject had a lower loss.
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationVerdict {
    pub relation: Relation,
    pub verdict: Verdict,
    pub initial_loss: Option<f64>,
    pub threshold: Option<f64>,
    pub message: Option<String>,
}

/// Audit record of one decoding pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecodeReport {
    pub retained: Vec<RelationVerdict>,
    pub dropped: Vec<RelationVerdict>,
}

impl DecodeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Looks up initial poses (program first, then already placed assets) and
/// dims (placed assets first, then the inventory).
struct Resolver<'a> {
    program: &'a SceneProgram,
    state: &'a SceneState,
    inventory: &'a [AssetSpec],
}

impl Resolver<'_> {
    fn lookup(&self, id: &str) -> Option<(Pose, [f64; 3])> {
        let placed = self.state.get(id);
        let pose = self
            .program
            .poses
            .get(id)
            .copied()
            .or(placed.map(|a| a.pose))?;
        let dims = placed
            .map(|a| a.spec.dims)
            .or_else(|| self.inventory.iter().find(|s| s.id == id).map(|s| s.dims))?;
        Some((pose, dims))
    }

    fn initial_loss(&self, rel: &Relation) -> Result<Option<f64>, Error> {
        relation_value(rel, &self.state.room, |id| self.lookup(id))
    }
}

/// Keeps the relations whose loss at the initial poses is within threshold.
pub fn filter_self_consistent(
    program: &SceneProgram,
    state: &SceneState,
    inventory: &[AssetSpec],
    cfg: &DecoderConfig,
) -> (SceneProgram, DecodeReport) {
    let resolver = Resolver {
        program,
        state,
        inventory,
    };
    let mut report = DecodeReport::default();
    let mut kept = Vec::new();
    for rel in &program.relations {
        let threshold = cfg.threshold(rel.kind());
        let verdict = |verdict, initial_loss, message| RelationVerdict {
            relation: rel.clone(),
            verdict,
            initial_loss,
            threshold,
            message,
        };
        match resolver.initial_loss(rel) {
            Err(e) => {
                log::warn!("dropping {rel}: {e}");
                report
                    .dropped
                    .push(verdict(Verdict::UnknownAsset, None, Some(e.to_string())));
            }
            Ok(None) => {
                report.dropped.push(verdict(
                    Verdict::DegenerateDirection,
                    None,
                    Some("subject and target share a position".into()),
                ));
            }
            Ok(Some(loss)) => match threshold {
                None => {
                    kept.push(rel.clone());
                    report
                        .retained
                        .push(verdict(Verdict::Exempt, Some(loss), None));
                }
                Some(eps) if loss <= eps => {
                    kept.push(rel.clone());
                    report
                        .retained
                        .push(verdict(Verdict::Satisfied, Some(loss), None));
                }
                Some(_) => {
                    report
                        .dropped
                        .push(verdict(Verdict::AboveThreshold, Some(loss), None));
                }
            },
        }
    }
    let out = SceneProgram {
        poses: program.poses.clone(),
        relations: kept,
        group_label: program.group_label.clone(),
    };
    (out, report)
}

/// Keeps at most one orientational relation per subject: the one with the
/// lowest initial loss, earliest declaration winning ties.
pub fn dedupe_orientational(
    program: &SceneProgram,
    state: &SceneState,
    inventory: &[AssetSpec],
) -> (SceneProgram, Vec<RelationVerdict>) {
    let resolver = Resolver {
        program,
        state,
        inventory,
    };
    let losses: Vec<f64> = program
        .relations
        .iter()
        .map(|r| match resolver.initial_loss(r) {
            Ok(Some(v)) => v,
            _ => f64::INFINITY,
        })
        .collect();
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, rel) in program.relations.iter().enumerate() {
        if !rel.kind().is_orientational() {
            continue;
        }
        best.entry(rel.subject())
            .and_modify(|b| {
                if losses[k] < losses[*b] {
                    *b = k;
                }
            })
            .or_insert(k);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (k, rel) in program.relations.iter().enumerate() {
        if rel.kind().is_orientational() && best.get(rel.subject()) != Some(&k) {
            let winner = &program.relations[best[rel.subject()]];
            dropped.push(RelationVerdict {
                relation: rel.clone(),
                verdict: Verdict::Superseded,
                initial_loss: losses[k].is_finite().then_some(losses[k]),
                threshold: None,
                message: Some(format!("kept {winner} instead")),
            });
        } else {
            kept.push(rel.clone());
        }
    }
    let out = SceneProgram {
        poses: program.poses.clone(),
        relations: kept,
        group_label: program.group_label.clone(),
    };
    (out, dropped)
}

/// Threshold filtering followed by orientational deduplication.
pub fn decode(
    program: &SceneProgram,
    state: &SceneState,
    inventory: &[AssetSpec],
    cfg: &DecoderConfig,
) -> (SceneProgram, DecodeReport) {
    let (filtered, mut report) = filter_self_consistent(program, state, inventory, cfg);
    let (deduped, superseded) = dedupe_orientational(&filtered, state, inventory);
    report
        .retained
        .retain(|v| !superseded.iter().any(|s| s.relation == v.relation));
    report.dropped.extend(superseded);
    (deduped, report)
}
