//! Hierarchical path planning over the nested scene graph, plus the semantic
//! query grammar that drives it.
//!
//! A plan touches local graphs only along its landmark route: the Target
//! layer is searched once for the landmark sequence, and each landmark's
//! nested graphs are opened on demand to climb out of the current pose ring,
//! descend to the entry level, and pick ring exit poses facing the next
//! landmark. Symbolic edges are promoted to Euclidean weights at plan time so
//! the search treats every edge uniformly.
//!
//! Straight legs between landmarks are validated by an injected callback;
//! when a leg is blocked and an occupancy grid is supplied the leg falls back
//! to the grid planner.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, Point3, Pose6};
use crate::graph::{GraphNode, LocalGraph, NodeId};
use crate::scene::{LayerKind, LevelNode, Lsg, TargetNode};
use crate::vplanner::{plan_grid, OccupancyGrid, VpError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("node {0} not found in the graph being planned over")]
    UnknownNode(NodeId),
    #[error(
        "no path between {from} and {to}: the graphs are disconnected (missing traversal edges)"
    )]
    NoPath { from: NodeId, to: NodeId },
    #[error("target `{0}` is not inspected; its nested graphs do not exist yet")]
    NotInspected(String),
    #[error("nested graph under {owner} is empty")]
    EmptyNestedGraph { owner: NodeId },
    #[error("terminal pose given without a terminal level")]
    BadTerminal,
    #[error("leg ({:.1}, {:.1}) -> ({:.1}, {:.1}) is blocked and no grid fallback is available", from.x, from.y, to.x, to.y)]
    LegBlocked { from: Point3, to: Point3 },
    #[error("grid fallback for leg ({:.1}, {:.1}) -> ({:.1}, {:.1}) failed: {source}", from.x, from.y, to.x, to.y)]
    GridLeg {
        from: Point3,
        to: Point3,
        #[source]
        source: VpError,
    },
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Query(#[from] QueryParseError),
}

/// Where a plan must end: a Target-layer node (the robot node is allowed,
/// for return-to-base), optionally narrowed to a level and a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub target: NodeId,
    pub level: Option<NodeId>,
    pub pose: Option<NodeId>,
}

impl TerminalSpec {
    pub fn target(target: NodeId) -> Self {
        Self {
            target,
            level: None,
            pose: None,
        }
    }
}

/// Robot localization within the layered graph; all `None` when nothing has
/// been inspected yet (the robot node is the only anchor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub target: Option<NodeId>,
    pub level: Option<NodeId>,
    pub pose: Option<NodeId>,
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; equal distances pop in ascending id order.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path by summed edge weights within one local graph. Symbolic
/// edges count as the Euclidean distance between their endpoints.
pub fn dijkstra<N: GraphNode>(
    graph: &LocalGraph<N>,
    src: NodeId,
    dst: NodeId,
) -> Result<(Vec<NodeId>, f64), PlanError> {
    if !graph.contains(src) {
        return Err(PlanError::UnknownNode(src));
    }
    if !graph.contains(dst) {
        return Err(PlanError::UnknownNode(dst));
    }
    if src == dst {
        return Ok((vec![src], 0.0));
    }
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut settled: BTreeSet<NodeId> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    dist.insert(src, 0.0);
    heap.push(HeapEntry {
        dist: 0.0,
        node: src,
    });

    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if !settled.insert(node) {
            continue;
        }
        if node == dst {
            break;
        }
        for (next, weight) in graph.weighted_neighbors(node) {
            if settled.contains(&next) {
                continue;
            }
            let cand = d + weight;
            if dist.get(&next).is_none_or(|cur| cand < *cur) {
                dist.insert(next, cand);
                prev.insert(next, node);
                heap.push(HeapEntry {
                    dist: cand,
                    node: next,
                });
            }
        }
    }

    let Some(total) = dist.get(&dst).copied() else {
        return Err(PlanError::NoPath { from: src, to: dst });
    };
    if !settled.contains(&dst) {
        return Err(PlanError::NoPath { from: src, to: dst });
    }
    let mut path = vec![dst];
    let mut cursor = dst;
    while let Some(p) = prev.get(&cursor) {
        path.push(*p);
        cursor = *p;
    }
    path.reverse();
    Ok((path, total))
}

/// Locate the robot within the layer graphs: the inspected target whose
/// bounding polygon contains the robot (else the nearest one by estimate),
/// then the nearest stored pose within that target, and that pose's level.
pub fn localize(lsg: &Lsg, robot_pose: &Pose6) -> Localization {
    let p = robot_pose.position;
    let mut chosen: Option<&TargetNode> = None;
    for t in lsg.inspected() {
        if t.polygon().is_some_and(|poly| poly.contains(p)) {
            chosen = Some(t);
            break;
        }
    }
    if chosen.is_none() {
        let mut best = f64::INFINITY;
        for t in lsg.inspected() {
            let d = euclidean(t.est_position, p);
            if d < best {
                best = d;
                chosen = Some(t);
            }
        }
    }
    let Some(target) = chosen else {
        return Localization {
            target: None,
            level: None,
            pose: None,
        };
    };
    let levels = target.levels().expect("inspected target has levels");
    let mut best: Option<(f64, NodeId, NodeId)> = None;
    for level in levels.children() {
        for pose in level.poses.children() {
            let d = euclidean(pose.pose.position, p);
            if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                best = Some((d, level.id, pose.id));
            }
        }
    }
    match best {
        Some((_, level, pose)) => Localization {
            target: Some(target.id),
            level: Some(level),
            pose: Some(pose),
        },
        None => Localization {
            target: Some(target.id),
            level: None,
            pose: None,
        },
    }
}

/// Layer frontier going up: the parent copy of the local graph.
pub fn frontier_up<N: GraphNode>(graph: &LocalGraph<N>) -> NodeId {
    graph.parent().id
}

/// Layer frontier going down into a target: its level-0 node.
pub fn frontier_into_target(target: &TargetNode) -> Result<NodeId, PlanError> {
    let levels = target
        .levels()
        .ok_or_else(|| PlanError::NotInspected(target.label.clone()))?;
    levels
        .children()
        .iter()
        .find(|l| l.index == 0)
        .map(|l| l.id)
        .ok_or(PlanError::EmptyNestedGraph { owner: target.id })
}

/// Layer frontier going down into a level: the pose nearest `toward` by 3D
/// position (ties by smaller id).
pub fn frontier_into_level(level: &LevelNode, toward: Point3) -> Result<NodeId, PlanError> {
    level
        .poses
        .children()
        .iter()
        .min_by(|a, b| {
            euclidean(a.pose.position, toward)
                .total_cmp(&euclidean(b.pose.position, toward))
                .then_with(|| a.id.cmp(&b.id))
        })
        .map(|p| p.id)
        .ok_or(PlanError::EmptyNestedGraph { owner: level.id })
}

/// One element of the physical route chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum RouteStep {
    /// A path inside one local graph. `positions` mirrors `path`; entries
    /// whose id equals `owner` are the virtual parent copy.
    Local {
        layer: LayerKind,
        owner: NodeId,
        owner_label: String,
        path: Vec<NodeId>,
        labels: Vec<String>,
        positions: Vec<Point3>,
        length_m: f64,
    },
    /// A straight (or grid-refined) leg between local graphs.
    Transit {
        from: Point3,
        to: Point3,
        waypoints: Vec<Point3>,
        length_m: f64,
        via_grid: bool,
    },
}

impl RouteStep {
    pub fn length_m(&self) -> f64 {
        match self {
            RouteStep::Local { length_m, .. } | RouteStep::Transit { length_m, .. } => *length_m,
        }
    }

    pub fn start_position(&self) -> Point3 {
        match self {
            RouteStep::Local { positions, .. } => positions[0],
            RouteStep::Transit { from, .. } => *from,
        }
    }

    pub fn end_position(&self) -> Point3 {
        match self {
            RouteStep::Local { positions, .. } => *positions.last().expect("non-empty path"),
            RouteStep::Transit { to, .. } => *to,
        }
    }
}

/// Per-layer accounting: number of search invocations (0 means "Nil"),
/// accumulated wall time and path length, and the summed (edges, nodes) of
/// every distinct local graph opened at that layer. `graphs > 1` marks the
/// figures as cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlanStats {
    pub layer: LayerKind,
    pub plans: usize,
    pub time_ms: f64,
    pub length_m: f64,
    pub edges: usize,
    pub nodes: usize,
    pub graphs: usize,
}

impl LayerPlanStats {
    fn new(layer: LayerKind) -> Self {
        Self {
            layer,
            plans: 0,
            time_ms: 0.0,
            length_m: 0.0,
            edges: 0,
            nodes: 0,
            graphs: 0,
        }
    }

    pub fn is_nil(&self) -> bool {
        self.plans == 0
    }

    pub fn cumulative(&self) -> bool {
        self.graphs > 1
    }

    pub fn render(&self) -> String {
        let star = if self.cumulative() { "*" } else { "" };
        if self.is_nil() {
            format!(
                "{}: Nil, |E|/|N| {}/{}{star}",
                self.layer, self.edges, self.nodes
            )
        } else {
            format!(
                "{}: {:.4} ms{star}, {:.3} m{star}, |E|/|N| {}/{}{star}",
                self.layer, self.time_ms, self.length_m, self.edges, self.nodes
            )
        }
    }
}

/// A complete hierarchical plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub landmark_route: Vec<NodeId>,
    pub landmark_labels: Vec<String>,
    pub steps: Vec<RouteStep>,
    pub total_length_m: f64,
    /// Target, Level and Pose layer accounting, in that order.
    pub layers: Vec<LayerPlanStats>,
    /// Owner ids of every local graph the planner touched; the robot node id
    /// stands for the Target-layer root graph.
    pub visited_graphs: Vec<NodeId>,
}

impl PlanResult {
    /// Zero the wall-clock columns (golden-file determinism).
    pub fn zero_timings(&mut self) {
        for layer in &mut self.layers {
            layer.time_ms = 0.0;
        }
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "route: {} | total {:.3} m",
            self.landmark_labels.join(" -> "),
            self.total_length_m
        );
        if !self.steps.is_empty() {
            let rendered: Vec<String> = self
                .steps
                .iter()
                .map(|step| match step {
                    RouteStep::Local {
                        layer,
                        owner_label,
                        length_m,
                        ..
                    } => {
                        format!("{layer}[{owner_label}] {length_m:.2} m")
                    }
                    RouteStep::Transit {
                        length_m, via_grid, ..
                    } => {
                        let how = if *via_grid {
                            "transit(grid)"
                        } else {
                            "transit"
                        };
                        format!("{how} {length_m:.2} m")
                    }
                })
                .collect();
            out.push_str("\n  segments: ");
            out.push_str(&rendered.join(" -> "));
        }
        for layer in &self.layers {
            out.push_str("\n  ");
            out.push_str(&layer.render());
        }
        out
    }
}

/// World hooks available to the planner. Without them, legs are emitted
/// unvalidated (planning over a serialized graph with no world on hand).
#[derive(Default)]
pub struct PlanContext<'a> {
    pub leg_clear: Option<&'a dyn Fn(Point3, Point3) -> bool>,
    pub grid: Option<&'a OccupancyGrid>,
}

struct Cursor {
    target: NodeId,
    level: NodeId,
    pose: NodeId,
    position: Point3,
}

struct PlanBuilder<'a> {
    lsg: &'a Lsg,
    ctx: &'a PlanContext<'a>,
    steps: Vec<RouteStep>,
    stats: [LayerPlanStats; 3],
    opened: BTreeSet<NodeId>,
    visited: BTreeSet<NodeId>,
}

impl<'a> PlanBuilder<'a> {
    fn new(lsg: &'a Lsg, ctx: &'a PlanContext<'a>) -> Self {
        Self {
            lsg,
            ctx,
            steps: Vec::new(),
            stats: [
                LayerPlanStats::new(LayerKind::Target),
                LayerPlanStats::new(LayerKind::Level),
                LayerPlanStats::new(LayerKind::Pose),
            ],
            opened: BTreeSet::new(),
            visited: BTreeSet::new(),
        }
    }

    fn stats_mut(&mut self, layer: LayerKind) -> &mut LayerPlanStats {
        match layer {
            LayerKind::Target => &mut self.stats[0],
            LayerKind::Level => &mut self.stats[1],
            LayerKind::Pose => &mut self.stats[2],
            LayerKind::Feature => unreachable!("features are never planned over"),
        }
    }

    fn open_graph<N: GraphNode>(&mut self, layer: LayerKind, owner: NodeId, graph: &LocalGraph<N>) {
        self.visited.insert(owner);
        if self.opened.insert(owner) {
            let (size, order) = (graph.size(), graph.order());
            let stats = self.stats_mut(layer);
            stats.graphs += 1;
            stats.edges += size;
            stats.nodes += order;
        }
    }

    /// Run one layer search. Degenerate searches (src == dst) open the graph
    /// but count as no plan and emit no step.
    #[allow(clippy::too_many_arguments)]
    fn run_plan<N: GraphNode>(
        &mut self,
        layer: LayerKind,
        owner: NodeId,
        owner_label: &str,
        graph: &LocalGraph<N>,
        src: NodeId,
        dst: NodeId,
        emit_step: bool,
    ) -> Result<(Vec<NodeId>, f64), PlanError> {
        self.open_graph(layer, owner, graph);
        if src == dst {
            return Ok((vec![src], 0.0));
        }
        let t0 = Instant::now();
        let (path, length) = dijkstra(graph, src, dst)?;
        let time_ms = t0.elapsed().as_secs_f64() * 1e3;
        let stats = self.stats_mut(layer);
        stats.plans += 1;
        stats.time_ms += time_ms;
        stats.length_m += length;
        if emit_step {
            let positions = path
                .iter()
                .map(|id| graph.position_of(*id).expect("path node in graph"))
                .collect();
            let labels = path
                .iter()
                .map(|id| graph.label_of(*id).expect("path node in graph").to_string())
                .collect();
            self.steps.push(RouteStep::Local {
                layer,
                owner,
                owner_label: owner_label.to_string(),
                path: path.clone(),
                labels,
                positions,
                length_m: length,
            });
        }
        Ok((path, length))
    }

    /// Unvalidated straight leg: used for the conceptual final approach to a
    /// detected target, whose estimate sits inside its own footprint (the
    /// mission replaces this leg with a ring approach at execution time).
    fn transit_raw(&mut self, from: Point3, to: Point3) {
        let direct = euclidean(from, to);
        if direct <= 1e-9 {
            return;
        }
        self.steps.push(RouteStep::Transit {
            from,
            to,
            waypoints: vec![from, to],
            length_m: direct,
            via_grid: false,
        });
    }

    fn transit(&mut self, from: Point3, to: Point3) -> Result<(), PlanError> {
        let direct = euclidean(from, to);
        if direct <= 1e-9 {
            return Ok(());
        }
        let clear = self.ctx.leg_clear.is_none_or(|f| f(from, to));
        if clear {
            self.steps.push(RouteStep::Transit {
                from,
                to,
                waypoints: vec![from, to],
                length_m: direct,
                via_grid: false,
            });
            return Ok(());
        }
        let Some(grid) = self.ctx.grid else {
            return Err(PlanError::LegBlocked { from, to });
        };
        let plan =
            plan_grid(grid, from, to).map_err(|source| PlanError::GridLeg { from, to, source })?;
        let mut waypoints = vec![from];
        waypoints.extend(plan.waypoints);
        waypoints.push(to);
        let length_m = waypoints.windows(2).map(|w| euclidean(w[0], w[1])).sum();
        self.steps.push(RouteStep::Transit {
            from,
            to,
            waypoints,
            length_m,
            via_grid: true,
        });
        Ok(())
    }

    fn target_node(&self, id: NodeId) -> Result<&'a TargetNode, PlanError> {
        self.lsg.target(id).ok_or(PlanError::UnknownNode(id))
    }

    /// Bring the cursor to the pose of its target's level-0 ring nearest to
    /// `toward`, descending levels if necessary.
    fn exit_target(&mut self, cursor: &mut Cursor, toward: Point3) -> Result<(), PlanError> {
        let target = self.target_node(cursor.target)?;
        let levels = target
            .levels()
            .ok_or_else(|| PlanError::NotInspected(target.label.clone()))?;
        self.open_graph(LayerKind::Level, target.id, levels);
        let level0 = frontier_into_target(target)?;
        if cursor.level != level0 {
            let current = levels
                .child(cursor.level)
                .ok_or(PlanError::UnknownNode(cursor.level))?;
            // Climb to the layer frontier (the level's parent copy), ...
            self.run_plan(
                LayerKind::Pose,
                current.id,
                &current.label,
                &current.poses,
                cursor.pose,
                frontier_up(&current.poses),
                true,
            )?;
            // ... descend the level chain to level 0, ...
            self.run_plan(
                LayerKind::Level,
                target.id,
                &target.label,
                levels,
                cursor.level,
                level0,
                true,
            )?;
            // ... and cross level 0's ring to the exit pose.
            let l0 = levels.child(level0).expect("level-0 exists");
            let exit = frontier_into_level(l0, toward)?;
            self.run_plan(
                LayerKind::Pose,
                l0.id,
                &l0.label,
                &l0.poses,
                level0,
                exit,
                true,
            )?;
            cursor.level = level0;
            cursor.pose = exit;
            cursor.position = l0.poses.position_of(exit).expect("exit pose in ring");
        } else {
            let l0 = levels.child(level0).ok_or(PlanError::UnknownNode(level0))?;
            let exit = frontier_into_level(l0, toward)?;
            self.run_plan(
                LayerKind::Pose,
                l0.id,
                &l0.label,
                &l0.poses,
                cursor.pose,
                exit,
                true,
            )?;
            cursor.pose = exit;
            cursor.position = l0.poses.position_of(exit).expect("exit pose in ring");
        }
        Ok(())
    }

    /// Transit to `target`'s level-0 ring, entering at the pose nearest the
    /// approach point.
    fn enter_target(&mut self, target_id: NodeId, from: Point3) -> Result<Cursor, PlanError> {
        let target = self.target_node(target_id)?;
        let levels = target
            .levels()
            .ok_or_else(|| PlanError::NotInspected(target.label.clone()))?;
        self.open_graph(LayerKind::Level, target.id, levels);
        let level0 = frontier_into_target(target)?;
        let l0 = levels.child(level0).expect("level-0 exists");
        self.open_graph(LayerKind::Pose, l0.id, &l0.poses);
        let entry = frontier_into_level(l0, from)?;
        let position = l0.poses.position_of(entry).expect("entry pose in ring");
        self.transit(from, position)?;
        Ok(Cursor {
            target: target_id,
            level: level0,
            pose: entry,
            position,
        })
    }
}

/// Plan from the robot's current place in the graph to the terminal nodes.
///
/// Steps: localize, extract the landmark route through the Target layer,
/// then per landmark climb out through layer frontier nodes, cross level-0
/// rings, and bridge landmarks with validated legs. A detected (not yet
/// inspected) terminal is approached via the nearest inspected landmark and
/// a final straight leg toward its estimated position.
pub fn plan_hierarchical(
    lsg: &Lsg,
    robot_pose: &Pose6,
    terminal: &TerminalSpec,
    ctx: &PlanContext,
) -> Result<PlanResult, PlanError> {
    if terminal.pose.is_some() && terminal.level.is_none() {
        return Err(PlanError::BadTerminal);
    }
    let robot_id = lsg.robot_id();
    let base_position = lsg.targets().parent().position;
    let terminal_is_robot = terminal.target == robot_id;
    let terminal_node = if terminal_is_robot {
        None
    } else {
        Some(
            lsg.target(terminal.target)
                .ok_or(PlanError::UnknownNode(terminal.target))?,
        )
    };
    let detected_terminal = terminal_node.is_some_and(|t| !t.is_inspected());

    let mut builder = PlanBuilder::new(lsg, ctx);
    builder.open_graph(LayerKind::Target, robot_id, lsg.targets());

    let loc = localize(lsg, robot_pose);
    let src = loc.target.unwrap_or(robot_id);

    let goal_landmark = if detected_terminal {
        let det = terminal_node.expect("detected terminal");
        lsg.inspected()
            .min_by(|a, b| {
                euclidean(a.est_position, det.est_position)
                    .total_cmp(&euclidean(b.est_position, det.est_position))
                    .then_with(|| a.id.cmp(&b.id))
            })
            .map(|t| t.id)
            .unwrap_or(robot_id)
    } else {
        terminal.target
    };

    let route = if src == goal_landmark {
        vec![src]
    } else {
        let (path, _) = builder.run_plan(
            LayerKind::Target,
            robot_id,
            "target-layer",
            lsg.targets(),
            src,
            goal_landmark,
            false,
        )?;
        path
    };

    // Cursor starts at the localized pose node, or at the robot when nothing
    // is inspected yet.
    let mut cursor: Option<Cursor> = match (loc.target, loc.level, loc.pose) {
        (Some(t), Some(l), Some(p)) => {
            let target = lsg.target(t).expect("localized target");
            let levels = target.levels().expect("inspected");
            let level = levels.child(l).expect("localized level");
            let position = level.poses.position_of(p).expect("localized pose");
            Some(Cursor {
                target: t,
                level: l,
                pose: p,
                position,
            })
        }
        _ => None,
    };
    let mut position = cursor.as_ref().map_or(robot_pose.position, |c| c.position);

    for pair in route.windows(2) {
        let (current, next) = (pair[0], pair[1]);
        if current == robot_id {
            let c = builder.enter_target(next, position)?;
            position = c.position;
            cursor = Some(c);
            continue;
        }
        let toward = if next == robot_id {
            base_position
        } else {
            builder.target_node(next)?.est_position
        };
        let c = cursor.as_mut().expect("cursor exists inside a landmark");
        builder.exit_target(c, toward)?;
        position = c.position;
        if next == robot_id {
            builder.transit(position, base_position)?;
            position = base_position;
            cursor = None;
        } else {
            let c = builder.enter_target(next, position)?;
            position = c.position;
            cursor = Some(c);
        }
    }

    let mut landmark_route = route.clone();
    if detected_terminal {
        let det = terminal_node.expect("detected terminal");
        if let Some(c) = cursor.as_mut() {
            builder.exit_target(c, det.est_position)?;
            position = c.position;
        }
        builder.transit_raw(position, det.est_position);
        landmark_route.push(det.id);
    } else if let (Some(term_level_id), Some(c)) = (terminal.level, cursor.as_mut()) {
        let target = lsg
            .target(terminal.target)
            .ok_or(PlanError::UnknownNode(terminal.target))?;
        let levels = target
            .levels()
            .ok_or_else(|| PlanError::NotInspected(target.label.clone()))?;
        let term_level = levels
            .child(term_level_id)
            .ok_or(PlanError::UnknownNode(term_level_id))?;
        if c.level != term_level_id {
            let current = levels
                .child(c.level)
                .ok_or(PlanError::UnknownNode(c.level))?;
            builder.run_plan(
                LayerKind::Pose,
                current.id,
                &current.label,
                &current.poses,
                c.pose,
                frontier_up(&current.poses),
                true,
            )?;
            builder.run_plan(
                LayerKind::Level,
                target.id,
                &target.label,
                levels,
                c.level,
                term_level_id,
                true,
            )?;
            c.level = term_level_id;
            c.pose = term_level_id;
            c.position = term_level.position;
            if let Some(term_pose) = terminal.pose {
                builder.run_plan(
                    LayerKind::Pose,
                    term_level.id,
                    &term_level.label,
                    &term_level.poses,
                    term_level_id,
                    term_pose,
                    true,
                )?;
                c.pose = term_pose;
                c.position = term_level
                    .poses
                    .position_of(term_pose)
                    .ok_or(PlanError::UnknownNode(term_pose))?;
            }
        } else if let Some(term_pose) = terminal.pose {
            if term_pose != c.pose {
                builder.run_plan(
                    LayerKind::Pose,
                    term_level.id,
                    &term_level.label,
                    &term_level.poses,
                    c.pose,
                    term_pose,
                    true,
                )?;
                c.pose = term_pose;
                c.position = term_level
                    .poses
                    .position_of(term_pose)
                    .ok_or(PlanError::UnknownNode(term_pose))?;
            }
        }
    }

    let landmark_labels = landmark_route
        .iter()
        .map(|id| lsg.targets().label_of(*id).unwrap_or("?").to_string())
        .collect();
    // f64 sums fold from -0.0; keep the empty-plan total a plain zero.
    let total_length_m = builder
        .steps
        .iter()
        .map(RouteStep::length_m)
        .sum::<f64>()
        .max(0.0);
    Ok(PlanResult {
        landmark_route,
        landmark_labels,
        steps: builder.steps,
        total_length_m,
        layers: builder.stats.to_vec(),
        visited_graphs: builder.visited.into_iter().collect(),
    })
}

/// `Visit <feature> in <level> of <target>` (case-insensitive keywords).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticQuery {
    pub feature: String,
    pub level: String,
    pub target: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("query parse error at byte {pos}: expected {expected}")]
pub struct QueryParseError {
    pub pos: usize,
    pub expected: &'static str,
}

/// Parse the semantic query grammar, reporting the byte position of the
/// first token that does not fit.
pub fn parse_query(text: &str) -> Result<SemanticQuery, QueryParseError> {
    let mut scanner = Scanner { text, pos: 0 };
    scanner.keyword("visit")?;
    let feature = scanner.token("a feature label")?;
    scanner.keyword("in")?;
    let level = scanner.token("a level label")?;
    scanner.keyword("of")?;
    let target = scanner.token("a target label")?;
    scanner.end()?;
    Ok(SemanticQuery {
        feature,
        level,
        target,
    })
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

impl Scanner<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next_token(&mut self) -> Option<(usize, &str)> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && !self.text.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| (start, &self.text[start..self.pos]))
    }

    fn keyword(&mut self, word: &'static str) -> Result<(), QueryParseError> {
        let at = {
            self.skip_ws();
            self.pos
        };
        match self.next_token() {
            Some((_, tok)) if tok.eq_ignore_ascii_case(word) => Ok(()),
            _ => Err(QueryParseError {
                pos: at,
                expected: word,
            }),
        }
    }

    fn token(&mut self, expected: &'static str) -> Result<String, QueryParseError> {
        let at = {
            self.skip_ws();
            self.pos
        };
        self.next_token()
            .map(|(_, tok)| tok.to_string())
            .ok_or(QueryParseError { pos: at, expected })
    }

    fn end(&mut self) -> Result<(), QueryParseError> {
        self.skip_ws();
        if self.pos < self.text.len() {
            return Err(QueryParseError {
                pos: self.pos,
                expected: "end of query",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolveError {
    #[error("unknown {tier} label `{label}`")]
    Unknown { tier: &'static str, label: String },
    #[error("target `{0}` is known but not inspected; it has no levels to visit")]
    NotInspected(String),
}

/// Resolve query labels to terminal nodes. The terminal pose is the parent
/// pose of the matched feature; feature nodes themselves are never waypoints.
pub fn resolve_query(lsg: &Lsg, query: &SemanticQuery) -> Result<TerminalSpec, ResolveError> {
    let target = lsg
        .find_target_by_label(&query.target)
        .ok_or_else(|| ResolveError::Unknown {
            tier: "target",
            label: query.target.clone(),
        })?;
    let levels = target
        .levels()
        .ok_or_else(|| ResolveError::NotInspected(target.label.clone()))?;
    let level = levels
        .children()
        .iter()
        .find(|l| l.label.eq_ignore_ascii_case(&query.level))
        .ok_or_else(|| ResolveError::Unknown {
            tier: "level",
            label: query.level.clone(),
        })?;
    for pose in level.poses.children() {
        for feature in pose.features.children() {
            if feature.label.eq_ignore_ascii_case(&query.feature) {
                return Ok(TerminalSpec {
                    target: target.id,
                    level: Some(level.id),
                    pose: Some(pose.id),
                });
            }
        }
    }
    Err(ResolveError::Unknown {
        tier: "feature",
        label: query.feature.clone(),
    })
}
