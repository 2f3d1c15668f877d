//! The four-layer nested scene graph: Target, Level, Pose and Feature layers,
//! each held as a [`LocalGraph`] stored inside the attributes of a node one
//! layer above. There are no inter-layer edges; layer transitions happen
//! through the parent copies ("layer frontier nodes") each nested graph keeps.
//!
//! The [`Lsg`] owns the Target layer, a monotone id counter shared by every
//! layer, and an event log of node/edge insertions stamped with simulation
//! time. Inspections are assembled with an [`InspectionBuilder`] and attached
//! atomically by [`Lsg::promote_to_inspected`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, Point3, Polygon2, Pose6};
use crate::graph::{Edge, EdgeAttr, GraphError, GraphNode, LocalGraph, NodeId, ParentRef};

/// Default neighborhood radius for duplicate suppression, meters.
pub const DEFAULT_D_VALID_M: f64 = 5.0;
/// Radius within which a re-sighting reuses an existing node's label. Only
/// needs to cover the detector's position noise (well under a meter), so it
/// is much tighter than the pruning radius; distinct physical targets are
/// never this close.
pub const LABEL_MERGE_RADIUS_M: f64 = 1.5;
/// Default dilation margin around an inspected target's bounding polygon when
/// deciding Target-layer traversal edges, meters.
pub const DEFAULT_TRAVERSAL_MARGIN_M: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("unknown target {0}")]
    UnknownTarget(NodeId),
    #[error("target {0} is already inspected")]
    AlreadyInspected(NodeId),
    #[error("unknown level {0}")]
    UnknownLevel(NodeId),
    #[error("unknown pose {0}")]
    UnknownPose(NodeId),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("nested graph parent mismatch: expected {expected}, got {got}")]
    WrongParent { expected: NodeId, got: NodeId },
    #[error("document parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid document: {0}")]
    Invalid(String),
}

/// The four abstraction layers, in nesting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Target,
    Level,
    Pose,
    Feature,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [
        LayerKind::Target,
        LayerKind::Level,
        LayerKind::Pose,
        LayerKind::Feature,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Target => "target",
            LayerKind::Level => "level",
            LayerKind::Pose => "pose",
            LayerKind::Feature => "feature",
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw detector output attached to a target at registration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub confidence: f64,
    pub mask_area_px: f64,
    pub image_ref: String,
    pub image_w: u32,
    pub image_h: u32,
}

impl Detection {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(SceneError::InvalidDetection(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if self.mask_area_px < 0.0 || !self.mask_area_px.is_finite() {
            return Err(SceneError::InvalidDetection(
                "negative or non-finite mask area".into(),
            ));
        }
        let frame = f64::from(self.image_w) * f64::from(self.image_h);
        if self.mask_area_px > frame {
            return Err(SceneError::InvalidDetection(format!(
                "mask area {} exceeds frame {}",
                self.mask_area_px, frame
            )));
        }
        Ok(())
    }
}

/// A segmented part of a target, nested under the view pose it was seen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNode {
    pub id: NodeId,
    pub label: String,
    pub position: Point3,
    pub class_label: String,
    pub confidence: f64,
    pub mask_area_px: f64,
}

impl GraphNode for FeatureNode {
    fn id(&self) -> NodeId {
        self.id
    }
    fn position(&self) -> Point3 {
        self.position
    }
    fn label(&self) -> &str {
        &self.label
    }
}

/// A commanded inspection view pose with its observed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseNode {
    pub id: NodeId,
    pub label: String,
    pub pose: Pose6,
    pub image_ref: String,
    pub features: LocalGraph<FeatureNode>,
}

impl GraphNode for PoseNode {
    fn id(&self) -> NodeId {
        self.id
    }
    fn position(&self) -> Point3 {
        self.pose.position
    }
    fn label(&self) -> &str {
        &self.label
    }
}

/// One level of inspection around a target, anchored at its entry view pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelNode {
    pub id: NodeId,
    pub label: String,
    pub index: u32,
    pub position: Point3,
    pub poses: LocalGraph<PoseNode>,
}

impl GraphNode for LevelNode {
    fn id(&self) -> NodeId {
        self.id
    }
    fn position(&self) -> Point3 {
        self.position
    }
    fn label(&self) -> &str {
        &self.label
    }
}

/// Lifecycle of a target: detected during exploration, inspected once the
/// nested hierarchy has been built. Only inspected targets carry a bounding
/// polygon and a Level-layer graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TargetState {
    Detected,
    Inspected {
        polygon: Polygon2,
        levels: LocalGraph<LevelNode>,
    },
}

/// A semantic target registered in the Target layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetNode {
    pub id: NodeId,
    pub label: String,
    pub est_position: Point3,
    pub detection: Detection,
    pub utility: Option<f64>,
    #[serde(flatten)]
    pub state: TargetState,
}

impl TargetNode {
    pub fn is_inspected(&self) -> bool {
        matches!(self.state, TargetState::Inspected { .. })
    }

    pub fn polygon(&self) -> Option<&Polygon2> {
        match &self.state {
            TargetState::Inspected { polygon, .. } => Some(polygon),
            TargetState::Detected => None,
        }
    }

    pub fn levels(&self) -> Option<&LocalGraph<LevelNode>> {
        match &self.state {
            TargetState::Inspected { levels, .. } => Some(levels),
            TargetState::Detected => None,
        }
    }
}

impl GraphNode for TargetNode {
    fn id(&self) -> NodeId {
        self.id
    }
    fn position(&self) -> Point3 {
        self.est_position
    }
    fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    NodeAdded { id: NodeId },
    NodeRemoved { id: NodeId },
    EdgeAdded { a: NodeId, b: NodeId },
    EdgeRemoved { a: NodeId, b: NodeId },
}

/// One structural mutation, stamped with simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsgEvent {
    pub t: f64,
    pub layer: LayerKind,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Per-layer cumulative (order, size) including parent copies, matching the
/// convention that every non-empty local graph counts its parent copy as a
/// node. Empty nested graphs (no children yet) contribute nothing; the
/// Target-layer root graph always counts since the robot node is real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    rows: [(usize, usize); 4],
}

impl LayerMetrics {
    pub fn get(&self, layer: LayerKind) -> (usize, usize) {
        self.rows[layer as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = (LayerKind, usize, usize)> + '_ {
        LayerKind::ALL.iter().map(move |l| {
            let (o, s) = self.rows[*l as usize];
            (*l, o, s)
        })
    }
}

/// Flat node emitted by the graph union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatNode {
    pub id: NodeId,
    pub layer: LayerKind,
    pub label: String,
    pub position: Point3,
}

/// Result of merging all local graphs: parent copies are reconciled onto the
/// original node they reference, the edge multiset is preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatGraph {
    pub nodes: Vec<FlatNode>,
    pub edges: Vec<Edge>,
}

impl FlatGraph {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }
    pub fn size(&self) -> usize {
        self.edges.len()
    }
}

/// Document version written by [`Lsg::to_json`].
pub const LSG_DOC_VERSION: u32 = 1;

/// The layered semantic graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lsg {
    version: u32,
    robot_start: Pose6,
    robot_pose: Pose6,
    robot_id: NodeId,
    targets: LocalGraph<TargetNode>,
    next_id: u64,
    sim_time: f64,
    class_counters: BTreeMap<String, u32>,
    events: Vec<LsgEvent>,
}

impl Lsg {
    /// Fresh graph holding only the robot parent node at the given pose.
    pub fn new(robot_pose: Pose6) -> Self {
        let robot_id = NodeId(0);
        let mut lsg = Self {
            version: LSG_DOC_VERSION,
            robot_start: robot_pose,
            robot_pose,
            robot_id,
            targets: LocalGraph::new(ParentRef {
                id: robot_id,
                label: "base".to_string(),
                position: robot_pose.position,
            }),
            next_id: 1,
            sim_time: 0.0,
            class_counters: BTreeMap::new(),
            events: Vec::new(),
        };
        lsg.log(LayerKind::Target, EventKind::NodeAdded { id: robot_id });
        lsg
    }

    pub fn robot_id(&self) -> NodeId {
        self.robot_id
    }

    pub fn robot_start(&self) -> Pose6 {
        self.robot_start
    }

    pub fn robot_pose(&self) -> Pose6 {
        self.robot_pose
    }

    pub fn set_robot_pose(&mut self, pose: Pose6) {
        self.robot_pose = pose;
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    /// Advance the simulation clock used for event stamping (monotone).
    pub fn set_sim_time(&mut self, t: f64) {
        if t > self.sim_time {
            self.sim_time = t;
        }
    }

    pub fn targets(&self) -> &LocalGraph<TargetNode> {
        &self.targets
    }

    pub fn target(&self, id: NodeId) -> Option<&TargetNode> {
        self.targets.child(id)
    }

    pub fn detected(&self) -> impl Iterator<Item = &TargetNode> {
        self.targets.children().iter().filter(|t| !t.is_inspected())
    }

    pub fn inspected(&self) -> impl Iterator<Item = &TargetNode> {
        self.targets.children().iter().filter(|t| t.is_inspected())
    }

    pub fn find_target_by_label(&self, label: &str) -> Option<&TargetNode> {
        self.targets
            .children()
            .iter()
            .find(|t| t.label.eq_ignore_ascii_case(label))
    }

    pub fn events(&self) -> &[LsgEvent] {
        &self.events
    }

    pub(crate) fn alloc_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    pub(crate) fn log(&mut self, layer: LayerKind, kind: EventKind) {
        self.events.push(LsgEvent {
            t: self.sim_time,
            layer,
            kind,
        });
    }

    /// Register a freshly detected semantic target. A symbolic edge to the
    /// robot parent node is added. Re-sightings of an already registered
    /// object (same class within [`LABEL_MERGE_RADIUS_M`], or inside an
    /// inspected polygon of the same class) reuse its label so class-indexed
    /// labels stay stable across pruning.
    pub fn register_detected(
        &mut self,
        detection: Detection,
        est_position: Point3,
    ) -> Result<NodeId, SceneError> {
        detection.validate()?;
        if !est_position.is_finite() {
            return Err(SceneError::InvalidDetection(
                "non-finite estimated position".into(),
            ));
        }
        let label = self.resolve_label(&detection.class_label, est_position);
        let id = self.alloc_id();
        self.targets.add_child(TargetNode {
            id,
            label,
            est_position,
            detection,
            utility: None,
            state: TargetState::Detected,
        })?;
        self.log(LayerKind::Target, EventKind::NodeAdded { id });
        self.targets
            .add_edge(self.robot_id, id, EdgeAttr::Symbolic)?;
        self.log(
            LayerKind::Target,
            EventKind::EdgeAdded {
                a: self.robot_id,
                b: id,
            },
        );
        Ok(id)
    }

    fn resolve_label(&mut self, class_label: &str, est_position: Point3) -> String {
        // Inspected same-class target whose polygon contains the estimate.
        for t in self.targets.children() {
            if t.detection.class_label == class_label {
                if let Some(poly) = t.polygon() {
                    if poly.contains(est_position) {
                        return t.label.clone();
                    }
                }
            }
        }
        // Nearest detected same-class node inside the merge radius.
        let mut best: Option<(f64, &TargetNode)> = None;
        for t in self.targets.children() {
            if t.is_inspected() || t.detection.class_label != class_label {
                continue;
            }
            let d = euclidean(t.est_position, est_position);
            if d <= LABEL_MERGE_RADIUS_M && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, t));
            }
        }
        if let Some((_, t)) = best {
            return t.label.clone();
        }
        let counter = self
            .class_counters
            .entry(class_label.to_string())
            .or_insert(0);
        let label = format!("{class_label}-{counter}");
        *counter += 1;
        label
    }

    /// Duplicate suppression over the Target layer. Two passes:
    /// 1. any two detected nodes within `d_valid` of each other lose the one
    ///    with the lexicographically smaller (confidence, mask area), ties
    ///    resolved by removing the larger id;
    /// 2. any detected node whose estimate lies inside an inspected target's
    ///    bounding polygon is removed.
    ///
    /// Candidates are visited in ascending id order, so removal is
    /// deterministic; re-running immediately removes nothing.
    pub fn prune_targets(&mut self, d_valid: f64) -> Vec<NodeId> {
        let mut removed: BTreeSet<NodeId> = BTreeSet::new();

        let detected: Vec<(NodeId, Point3, f64, f64)> = self
            .targets
            .children()
            .iter()
            .filter(|t| !t.is_inspected())
            .map(|t| {
                (
                    t.id,
                    t.est_position,
                    t.detection.confidence,
                    t.detection.mask_area_px,
                )
            })
            .collect();

        for i in 0..detected.len() {
            for j in (i + 1)..detected.len() {
                let (ia, pa, ca, ma) = detected[i];
                let (ib, pb, cb, mb) = detected[j];
                if removed.contains(&ia) || removed.contains(&ib) {
                    continue;
                }
                if euclidean(pa, pb) <= d_valid {
                    let loser = match ca.total_cmp(&cb).then(ma.total_cmp(&mb)) {
                        std::cmp::Ordering::Less => ia,
                        std::cmp::Ordering::Greater => ib,
                        std::cmp::Ordering::Equal => ia.max(ib),
                    };
                    removed.insert(loser);
                }
            }
        }

        let polygons: Vec<Polygon2> = self
            .targets
            .children()
            .iter()
            .filter_map(|t| t.polygon().cloned())
            .collect();
        for (id, pos, _, _) in &detected {
            if removed.contains(id) {
                continue;
            }
            if polygons.iter().any(|poly| poly.contains(*pos)) {
                removed.insert(*id);
            }
        }

        let removed: Vec<NodeId> = removed.into_iter().collect();
        for id in &removed {
            let incident: Vec<(NodeId, NodeId)> = self
                .targets
                .edges()
                .iter()
                .filter(|e| e.a == *id || e.b == *id)
                .map(|e| (e.a, e.b))
                .collect();
            self.targets
                .remove_child(*id)
                .expect("pruned id must exist");
            for (a, b) in incident {
                self.log(LayerKind::Target, EventKind::EdgeRemoved { a, b });
            }
            self.log(LayerKind::Target, EventKind::NodeRemoved { id: *id });
        }
        removed
    }

    /// Flip a detected target to inspected, attaching its bounding polygon and
    /// the fully built Level-layer graph.
    pub fn promote_to_inspected(
        &mut self,
        id: NodeId,
        polygon: Polygon2,
        levels: LocalGraph<LevelNode>,
    ) -> Result<(), SceneError> {
        if levels.parent().id != id {
            return Err(SceneError::WrongParent {
                expected: id,
                got: levels.parent().id,
            });
        }
        let node = self
            .targets
            .child_mut(id)
            .ok_or(SceneError::UnknownTarget(id))?;
        if node.is_inspected() {
            return Err(SceneError::AlreadyInspected(id));
        }
        node.state = TargetState::Inspected { polygon, levels };
        Ok(())
    }

    /// Store the last computed utility on a detected target.
    pub fn set_utility(&mut self, id: NodeId, utility: Option<f64>) -> Result<(), SceneError> {
        let node = self
            .targets
            .child_mut(id)
            .ok_or(SceneError::UnknownTarget(id))?;
        node.utility = utility;
        Ok(())
    }

    /// Establish Target-layer traversal edges between inspected targets.
    ///
    /// For each ordered pair (current, other), the pair is linked when the
    /// other's estimated position lies within the current's bounding polygon
    /// dilated by `margin` and the `visibility` callback reports the segment
    /// between the two estimates unobstructed. Edges carry the Euclidean
    /// distance between estimates. Idempotent.
    pub fn refresh_traversal_edges(
        &mut self,
        margin: f64,
        visibility: &dyn Fn(Point3, Point3) -> bool,
    ) -> Vec<(NodeId, NodeId)> {
        let inspected: Vec<(NodeId, Point3, Polygon2)> = self
            .targets
            .children()
            .iter()
            .filter_map(|t| t.polygon().map(|p| (t.id, t.est_position, p.clone())))
            .collect();

        let mut added = Vec::new();
        for (cur_id, cur_pos, cur_poly) in &inspected {
            for (other_id, other_pos, _) in &inspected {
                if cur_id == other_id || self.targets.has_edge(*cur_id, *other_id) {
                    continue;
                }
                if cur_poly.distance_to(*other_pos) > margin {
                    continue;
                }
                if !visibility(*cur_pos, *other_pos) {
                    continue;
                }
                let w = euclidean(*cur_pos, *other_pos);
                if w <= 0.0 {
                    continue;
                }
                let attr = EdgeAttr::weighted(w).expect("positive weight");
                if self
                    .targets
                    .add_edge(*cur_id, *other_id, attr)
                    .unwrap_or(false)
                {
                    self.log(
                        LayerKind::Target,
                        EventKind::EdgeAdded {
                            a: *cur_id,
                            b: *other_id,
                        },
                    );
                    added.push((*cur_id, *other_id));
                }
            }
        }
        added
    }

    /// Per-layer cumulative graph order and size.
    pub fn layer_metrics(&self) -> LayerMetrics {
        let mut rows = [(0usize, 0usize); 4];
        rows[LayerKind::Target as usize] = (self.targets.order(), self.targets.size());
        for target in self.targets.children() {
            let Some(levels) = target.levels() else {
                continue;
            };
            if !levels.children().is_empty() {
                rows[LayerKind::Level as usize].0 += levels.order();
                rows[LayerKind::Level as usize].1 += levels.size();
            }
            for level in levels.children() {
                if !level.poses.children().is_empty() {
                    rows[LayerKind::Pose as usize].0 += level.poses.order();
                    rows[LayerKind::Pose as usize].1 += level.poses.size();
                }
                for pose in level.poses.children() {
                    if !pose.features.children().is_empty() {
                        rows[LayerKind::Feature as usize].0 += pose.features.order();
                        rows[LayerKind::Feature as usize].1 += pose.features.size();
                    }
                }
            }
        }
        LayerMetrics { rows }
    }

    /// Number of parent copies held by non-empty nested graphs; the amount by
    /// which summed layer orders exceed the union order.
    pub fn parent_copy_count(&self) -> usize {
        let mut copies = 0;
        for target in self.targets.children() {
            let Some(levels) = target.levels() else {
                continue;
            };
            if !levels.children().is_empty() {
                copies += 1;
            }
            for level in levels.children() {
                if !level.poses.children().is_empty() {
                    copies += 1;
                }
                for pose in level.poses.children() {
                    if !pose.features.children().is_empty() {
                        copies += 1;
                    }
                }
            }
        }
        copies
    }

    /// Merge all local graphs into one flat graph, reconciling parent copies
    /// onto the entity they reference. Node count equals the number of
    /// distinct entities; the edge multiset is preserved.
    pub fn graph_union(&self) -> FlatGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        nodes.push(FlatNode {
            id: self.robot_id,
            layer: LayerKind::Target,
            label: self.targets.parent().label.clone(),
            position: self.targets.parent().position,
        });
        edges.extend(self.targets.edges().iter().copied());
        for target in self.targets.children() {
            nodes.push(FlatNode {
                id: target.id,
                layer: LayerKind::Target,
                label: target.label.clone(),
                position: target.est_position,
            });
            let Some(levels) = target.levels() else {
                continue;
            };
            edges.extend(levels.edges().iter().copied());
            for level in levels.children() {
                nodes.push(FlatNode {
                    id: level.id,
                    layer: LayerKind::Level,
                    label: level.label.clone(),
                    position: level.position,
                });
                edges.extend(level.poses.edges().iter().copied());
                for pose in level.poses.children() {
                    nodes.push(FlatNode {
                        id: pose.id,
                        layer: LayerKind::Pose,
                        label: pose.label.clone(),
                        position: pose.pose.position,
                    });
                    edges.extend(pose.features.edges().iter().copied());
                    for feature in pose.features.children() {
                        nodes.push(FlatNode {
                            id: feature.id,
                            layer: LayerKind::Feature,
                            label: feature.label.clone(),
                            position: feature.position,
                        });
                    }
                }
            }
        }
        FlatGraph { nodes, edges }
    }

    /// Serialize to the versioned JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lsg serialization is infallible")
    }

    /// Parse and structurally validate a document produced by [`Lsg::to_json`].
    pub fn from_json(doc: &str) -> Result<Self, SceneError> {
        let lsg: Lsg = serde_json::from_str(doc)?;
        lsg.validate()?;
        Ok(lsg)
    }

    /// Check cross-layer invariants: unique ids everywhere, edge endpoints in
    /// their own local graph, nested parent copies referencing their owner,
    /// and a non-decreasing event log.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.version != LSG_DOC_VERSION {
            return Err(SceneError::Invalid(format!(
                "unsupported document version {}",
                self.version
            )));
        }
        let mut ids: BTreeSet<NodeId> = BTreeSet::new();
        let mut claim = |id: NodeId| -> Result<(), SceneError> {
            if !ids.insert(id) {
                return Err(SceneError::Invalid(format!("duplicate node id {id}")));
            }
            Ok(())
        };
        claim(self.robot_id)?;
        fn check_edges<N: GraphNode>(g: &LocalGraph<N>, what: &str) -> Result<(), SceneError> {
            for e in g.edges() {
                if !g.contains(e.a) || !g.contains(e.b) {
                    return Err(SceneError::Invalid(format!(
                        "{what}: edge {}-{} references a node outside its local graph",
                        e.a, e.b
                    )));
                }
            }
            Ok(())
        }
        check_edges(&self.targets, "target layer")?;
        for target in self.targets.children() {
            claim(target.id)?;
            match &target.state {
                TargetState::Detected => {}
                TargetState::Inspected { levels, .. } => {
                    if levels.parent().id != target.id {
                        return Err(SceneError::Invalid(format!(
                            "level graph of {} has parent copy {}",
                            target.label,
                            levels.parent().id
                        )));
                    }
                    check_edges(levels, "level layer")?;
                    for level in levels.children() {
                        claim(level.id)?;
                        if level.poses.parent().id != level.id {
                            return Err(SceneError::Invalid(format!(
                                "pose graph of {} has parent copy {}",
                                level.label,
                                level.poses.parent().id
                            )));
                        }
                        check_edges(&level.poses, "pose layer")?;
                        for pose in level.poses.children() {
                            claim(pose.id)?;
                            if pose.features.parent().id != pose.id {
                                return Err(SceneError::Invalid(format!(
                                    "feature graph of {} has parent copy {}",
                                    pose.label,
                                    pose.features.parent().id
                                )));
                            }
                            check_edges(&pose.features, "feature layer")?;
                            for feature in pose.features.children() {
                                claim(feature.id)?;
                            }
                        }
                    }
                }
            }
        }
        if self.events.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(SceneError::Invalid("event log timestamps decrease".into()));
        }
        Ok(())
    }
}

/// Observation payload for a semantic feature, before labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    pub class_label: String,
    pub position: Point3,
    pub confidence: f64,
    pub mask_area_px: f64,
}

/// Incrementally assembles the nested Level/Pose/Feature hierarchy for one
/// target during inspection. Ids come from the owning [`Lsg`] counter and
/// every insertion is stamped into its event log as it happens; the finished
/// hierarchy is attached with [`InspectionBuilder::finish`].
#[derive(Debug)]
pub struct InspectionBuilder {
    target_id: NodeId,
    levels: LocalGraph<LevelNode>,
    feature_counters: BTreeMap<String, u32>,
}

impl InspectionBuilder {
    pub fn new(lsg: &Lsg, target_id: NodeId) -> Result<Self, SceneError> {
        let target = lsg
            .target(target_id)
            .ok_or(SceneError::UnknownTarget(target_id))?;
        if target.is_inspected() {
            return Err(SceneError::AlreadyInspected(target_id));
        }
        Ok(Self {
            target_id,
            levels: LocalGraph::new(ParentRef {
                id: target.id,
                label: target.label.clone(),
                position: target.est_position,
            }),
            feature_counters: BTreeMap::new(),
        })
    }

    pub fn target_id(&self) -> NodeId {
        self.target_id
    }

    pub fn levels(&self) -> &LocalGraph<LevelNode> {
        &self.levels
    }

    /// Append the next inspection level. Links symbolically to the parent
    /// target and with a weighted edge to the previous level.
    pub fn add_level(&mut self, lsg: &mut Lsg, position: Point3) -> Result<NodeId, SceneError> {
        let index = self.levels.children().len() as u32;
        let prev = self.levels.children().last().map(|l| (l.id, l.position));
        let id = lsg.alloc_id();
        let label = format!("Level-{index}");
        self.levels.add_child(LevelNode {
            id,
            label: label.clone(),
            index,
            position,
            poses: LocalGraph::new(ParentRef {
                id,
                label,
                position,
            }),
        })?;
        lsg.log(LayerKind::Level, EventKind::NodeAdded { id });
        self.levels
            .add_edge(self.target_id, id, EdgeAttr::Symbolic)?;
        lsg.log(
            LayerKind::Level,
            EventKind::EdgeAdded {
                a: self.target_id,
                b: id,
            },
        );
        if let Some((prev_id, prev_pos)) = prev {
            let attr = EdgeAttr::weighted(euclidean(prev_pos, position))?;
            self.levels.add_edge(prev_id, id, attr)?;
            lsg.log(LayerKind::Level, EventKind::EdgeAdded { a: prev_id, b: id });
        }
        Ok(id)
    }

    /// Append a view pose to a level's chain. Maintains the weighted edges
    /// parent-level to first pose and parent-level to last pose; the latter
    /// moves as the chain grows.
    pub fn add_pose(
        &mut self,
        lsg: &mut Lsg,
        level_id: NodeId,
        pose: Pose6,
        image_ref: &str,
    ) -> Result<NodeId, SceneError> {
        let id = lsg.alloc_id();
        let level = self
            .levels
            .child_mut(level_id)
            .ok_or(SceneError::UnknownLevel(level_id))?;
        let chain_len = level.poses.children().len();
        let prev = level
            .poses
            .children()
            .last()
            .map(|p| (p.id, p.pose.position));
        let label = format!("{}-pose-{}", level.label, chain_len);
        level.poses.add_child(PoseNode {
            id,
            label: label.clone(),
            pose,
            image_ref: image_ref.to_string(),
            features: LocalGraph::new(ParentRef {
                id,
                label,
                position: pose.position,
            }),
        })?;
        let mut log: Vec<(EventKind, bool)> = vec![(EventKind::NodeAdded { id }, true)];
        match prev {
            None => {
                let attr = EdgeAttr::weighted(euclidean(level.position, pose.position))?;
                level.poses.add_edge(level_id, id, attr)?;
                log.push((EventKind::EdgeAdded { a: level_id, b: id }, true));
            }
            Some((prev_id, prev_pos)) => {
                if chain_len >= 2 && level.poses.remove_edge(level_id, prev_id) {
                    log.push((
                        EventKind::EdgeRemoved {
                            a: level_id,
                            b: prev_id,
                        },
                        true,
                    ));
                }
                let chain_attr = EdgeAttr::weighted(euclidean(prev_pos, pose.position))?;
                level.poses.add_edge(prev_id, id, chain_attr)?;
                log.push((EventKind::EdgeAdded { a: prev_id, b: id }, true));
                let wrap_attr = EdgeAttr::weighted(euclidean(level.position, pose.position))?;
                level.poses.add_edge(level_id, id, wrap_attr)?;
                log.push((EventKind::EdgeAdded { a: level_id, b: id }, true));
            }
        }
        for (kind, _) in log {
            lsg.log(LayerKind::Pose, kind);
        }
        Ok(id)
    }

    /// Attach an observed semantic feature to the pose it was seen from, with
    /// a symbolic edge. Labels are `<class>-<k>` with k counting per class
    /// within this target, starting at 1.
    pub fn add_feature(
        &mut self,
        lsg: &mut Lsg,
        pose_id: NodeId,
        obs: FeatureObservation,
    ) -> Result<NodeId, SceneError> {
        let counter = self
            .feature_counters
            .entry(obs.class_label.clone())
            .or_insert(0);
        *counter += 1;
        let label = format!("{}-{}", obs.class_label, *counter);
        let id = lsg.alloc_id();
        let pose =
            find_pose_mut(&mut self.levels, pose_id).ok_or(SceneError::UnknownPose(pose_id))?;
        pose.features.add_child(FeatureNode {
            id,
            label,
            position: obs.position,
            class_label: obs.class_label,
            confidence: obs.confidence,
            mask_area_px: obs.mask_area_px,
        })?;
        pose.features.add_edge(pose_id, id, EdgeAttr::Symbolic)?;
        lsg.log(LayerKind::Feature, EventKind::NodeAdded { id });
        lsg.log(
            LayerKind::Feature,
            EventKind::EdgeAdded { a: pose_id, b: id },
        );
        Ok(id)
    }

    /// Number of distinct feature classes already registered on this target.
    pub fn feature_class_count(&self, class_label: &str) -> u32 {
        self.feature_counters.get(class_label).copied().unwrap_or(0)
    }

    /// Promote the target, attaching the built hierarchy and the bounding
    /// polygon.
    pub fn finish(self, lsg: &mut Lsg, polygon: Polygon2) -> Result<(), SceneError> {
        lsg.promote_to_inspected(self.target_id, polygon, self.levels)
    }
}

fn find_pose_mut(levels: &mut LocalGraph<LevelNode>, pose_id: NodeId) -> Option<&mut PoseNode> {
    let owner = levels
        .children()
        .iter()
        .find(|l| l.poses.child(pose_id).is_some())?
        .id;
    levels
        .child_mut(owner)
        .and_then(|l| l.poses.child_mut(pose_id))
}
