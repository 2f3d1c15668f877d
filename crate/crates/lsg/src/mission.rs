//! The explore-inspect mission loop: an initial 360 degree survey, utility
//! ranked target selection, perimeter inspection that populates the nested
//! layers, and local exploration around each finished target until nothing
//! detectable remains, then return to base.
//!
//! The Target layer only grows during exploration phases (and shrinks at
//! logged prune events); the Level/Pose/Feature layers only grow during
//! inspection. The whole loop is deterministic for a fixed (scenario, seed,
//! config) triple.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull, euclidean, planar_distance, Point3, Polygon2, Pose6};
use crate::graph::NodeId;
use crate::hplanner::{
    plan_hierarchical, PlanContext, PlanError, PlanResult, RouteStep, TerminalSpec,
};
use crate::scene::{
    FeatureObservation, InspectionBuilder, LayerKind, LayerMetrics, Lsg, SceneError, TargetNode,
};
use crate::vplanner::{plan_grid, OccupancyGrid, DEFAULT_CELL_SIZE_M, DEFAULT_RISK_FACTOR};
use crate::world::{Scenario, SensedTarget, SensorModel, World, WorldError, MIN_CONFIDENCE};

/// Cap on the inverse-distance proximity term: treat anything closer than
/// 0.1 m as 0.1 m so the utility stays bounded.
pub const PROXIMITY_CAP_M: f64 = 0.1;
/// Nominal arc spacing between consecutive inspection view poses, meters.
pub const POSE_SPACING_M: f64 = 2.0;
/// Waypoints per local-exploration orbit.
pub const ORBIT_WAYPOINTS: usize = 8;
/// Assumed physical footprint of a semantic feature for mask-area synthesis,
/// square meters.
const FEATURE_AREA_M2: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("invalid mission config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("inspection of `{label}` could not build a bounding polygon: {reason}")]
    DegenerateInspection { label: String, reason: String },
}

/// Weights of the target-ranking utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityWeights {
    pub s_p: f64,
    pub s_a: f64,
    pub s_n: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        Self {
            s_p: 1.0,
            s_a: 1.0,
            s_n: 1.0,
        }
    }
}

/// Mission parameters. Everything is positive; the defaults are the values
/// used by the bundled scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub weights: UtilityWeights,
    pub d_valid_m: f64,
    pub survey_step_rad: f64,
    /// Orbit clearance beyond the target footprint during local exploration.
    pub orbit_radius_m: f64,
    pub standoff_m: f64,
    pub level_step_m: f64,
    /// Upper bound on view poses per inspection level.
    pub poses_per_level: usize,
    pub speed_mps: f64,
    pub traversal_margin_m: f64,
    pub sensor: SensorModel,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            weights: UtilityWeights::default(),
            d_valid_m: 5.0,
            survey_step_rad: std::f64::consts::TAU / 12.0,
            orbit_radius_m: 3.0,
            standoff_m: 2.0,
            level_step_m: 2.0,
            poses_per_level: 16,
            speed_mps: 1.0,
            traversal_margin_m: 2.0,
            sensor: SensorModel::default(),
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let positives = [
            ("weights.s_p", self.weights.s_p),
            ("weights.s_a", self.weights.s_a),
            ("weights.s_n", self.weights.s_n),
            ("d_valid_m", self.d_valid_m),
            ("survey_step_rad", self.survey_step_rad),
            ("orbit_radius_m", self.orbit_radius_m),
            ("standoff_m", self.standoff_m),
            ("level_step_m", self.level_step_m),
            ("speed_mps", self.speed_mps),
            ("traversal_margin_m", self.traversal_margin_m),
        ];
        for (name, value) in positives {
            if value <= 0.0 || !value.is_finite() {
                return Err(MissionError::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.poses_per_level < 4 {
            return Err(MissionError::Config(
                "poses_per_level must be at least 4".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionPhase {
    Survey360,
    SelectTarget,
    NavigateToTarget,
    Inspect,
    LocalExplore,
    ReturnToBase,
    Done,
}

impl std::fmt::Display for MissionPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            MissionPhase::Survey360 => "survey_360",
            MissionPhase::SelectTarget => "select_target",
            MissionPhase::NavigateToTarget => "navigate_to_target",
            MissionPhase::Inspect => "inspect",
            MissionPhase::LocalExplore => "local_explore",
            MissionPhase::ReturnToBase => "return_to_base",
            MissionPhase::Done => "done",
        };
        f.write_str(name)
    }
}

/// One sampled metrics row. The CSV emits the four spec'd columns; the phase
/// the sample was taken in rides along for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t_sim_s: f64,
    pub layer: LayerKind,
    pub cum_order: usize,
    pub cum_size: usize,
    pub phase: MissionPhase,
}

/// Time series of per-layer cumulative graph order/size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    rows: Vec<MetricsRow>,
}

impl MetricsTrace {
    pub fn record(&mut self, t_sim_s: f64, phase: MissionPhase, metrics: &LayerMetrics) {
        for (layer, cum_order, cum_size) in metrics.rows() {
            self.rows.push(MetricsRow {
                t_sim_s,
                layer,
                cum_order,
                cum_size,
                phase,
            });
        }
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_sim_s,layer,cum_order,cum_size\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.t_sim_s, row.layer, row.cum_order, row.cum_size
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MissionEventKind {
    PhaseChange {
        from: MissionPhase,
        to: MissionPhase,
    },
    Registered {
        node: NodeId,
        label: String,
        class: String,
    },
    Pruned {
        removed: Vec<NodeId>,
    },
    Selected {
        node: NodeId,
        label: String,
        utility: f64,
    },
    Promoted {
        node: NodeId,
        label: String,
        levels: usize,
        poses: usize,
        features: usize,
    },
    TraversalEdges {
        added: Vec<(NodeId, NodeId)>,
    },
    CandidateSkipped {
        node: NodeId,
        reason: String,
    },
    Collision {
        detail: String,
    },
}

/// Line-delimited mission log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: MissionEventKind,
}

/// A hierarchical plan made during the mission, with its purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t_sim_s: f64,
    pub purpose: String,
    pub plan: PlanResult,
}

/// Everything a mission run produces.
#[derive(Debug)]
pub struct MissionOutcome {
    pub lsg: Lsg,
    pub trace: MetricsTrace,
    pub events: Vec<MissionEvent>,
    pub plans: Vec<PlanRecord>,
    pub final_phase: MissionPhase,
    pub sim_duration_s: f64,
    /// Set when the mission aborted (collision); outputs are partial.
    pub aborted: Option<String>,
}

/// Rank one detected target: weighted sum of inverse robot distance,
/// normalized mask area, and inverse mean distance to the other detected
/// nodes (zero when there are none).
pub fn utility(
    node: &TargetNode,
    robot_pose: &Pose6,
    detected: &[&TargetNode],
    weights: &UtilityWeights,
) -> f64 {
    let proximity = 1.0 / euclidean(robot_pose.position, node.est_position).max(PROXIMITY_CAP_M);
    let area = node.detection.mask_area_px
        / (f64::from(node.detection.image_w) * f64::from(node.detection.image_h));
    let others: Vec<f64> = detected
        .iter()
        .filter(|t| t.id != node.id)
        .map(|t| euclidean(t.est_position, node.est_position))
        .collect();
    let neighborhood = if others.is_empty() {
        0.0
    } else {
        let mean = others.iter().sum::<f64>() / others.len() as f64;
        1.0 / mean.max(PROXIMITY_CAP_M)
    };
    weights.s_p * proximity + weights.s_a * area + weights.s_n * neighborhood
}

/// Evaluate every detected node, store the utilities on the nodes, and
/// return the argmax (ties broken by the smaller id).
pub fn select_target(
    lsg: &mut Lsg,
    robot_pose: &Pose6,
    weights: &UtilityWeights,
) -> Option<NodeId> {
    let detected: Vec<&TargetNode> = lsg.detected().collect();
    let scored: Vec<(NodeId, f64)> = detected
        .iter()
        .map(|node| (node.id, utility(node, robot_pose, &detected, weights)))
        .collect();
    let mut best: Option<(NodeId, f64)> = None;
    for (id, u) in &scored {
        if best.is_none_or(|(_, bu)| *u > bu) {
            best = Some((*id, *u));
        }
    }
    for (id, u) in &scored {
        lsg.set_utility(*id, Some(*u)).expect("scored node exists");
    }
    best.map(|(id, _)| id)
}

/// Evenly spaced view poses on the footprint's standoff ring (the footprint
/// dilated by `standoff` with beveled corners) at height `z`, starting from
/// the ring point nearest `start_near` and walking counter-clockwise. Pose
/// count is `ceil(ring perimeter / POSE_SPACING_M)` clamped to `[4, bound]`;
/// the walk wraps around the ring, so the level is complete when the next
/// sample coincides with the first. For convex footprints, chords between
/// consecutive samples never touch the footprint.
pub fn ring_poses(
    footprint: &Polygon2,
    standoff: f64,
    z: f64,
    start_near: Point3,
    bound: usize,
) -> Vec<Pose6> {
    // Non-convex footprints can defeat the beveled offset (self-intersecting
    // result); fall back to sampling the footprint boundary and lifting each
    // sample outward along its edge normal instead.
    let (ring, lift) = match footprint.offset(standoff) {
        Ok(ring) => (ring, 0.0),
        Err(_) => (footprint.clone(), standoff),
    };
    let count = ((ring.perimeter() / POSE_SPACING_M).ceil() as usize).clamp(4, bound.max(4));
    let sample = |frac: f64| -> (Point3, [f64; 2]) {
        let (p, n) = ring.boundary_sample(frac);
        (Point3::new(p[0] + lift * n[0], p[1] + lift * n[1], z), n)
    };
    // Find the ring fraction nearest the approach point.
    let probes = count * 8;
    let mut best_frac = 0.0;
    let mut best_dist = f64::INFINITY;
    for k in 0..probes {
        let frac = k as f64 / probes as f64;
        let (p, _) = sample(frac);
        let d = planar_distance(p, start_near);
        if d < best_dist {
            best_dist = d;
            best_frac = frac;
        }
    }
    (0..count)
        .filter_map(|i| {
            let frac = best_frac + i as f64 / count as f64;
            let (position, n) = sample(frac);
            // A concave notch narrower than the standoff can push a lifted
            // sample onto the far arm of the footprint; drop such poses.
            if footprint.contains(position) {
                return None;
            }
            // Face the inspected surface.
            let yaw = (-n[1]).atan2(-n[0]);
            Some(Pose6::level(position, yaw))
        })
        .collect()
}

/// Run the full mission on a scenario. Collisions abort the run and are
/// reported through [`MissionOutcome::aborted`] with partial outputs intact.
pub fn run_mission(
    scenario: Scenario,
    config: &MissionConfig,
) -> Result<MissionOutcome, MissionError> {
    config.validate()?;
    let world = World::new(scenario)?.with_speed(config.speed_mps);
    let mut mission = Mission::new(world, config.clone());
    let aborted = match mission.run() {
        Ok(()) => None,
        Err(MissionError::World(e @ WorldError::Collision { .. })) => {
            let detail = e.to_string();
            mission.event(MissionEventKind::Collision {
                detail: detail.clone(),
            });
            Some(detail)
        }
        Err(e) => return Err(e),
    };
    Ok(MissionOutcome {
        final_phase: mission.phase,
        sim_duration_s: mission.world.clock(),
        lsg: mission.lsg,
        trace: mission.trace,
        events: mission.events,
        plans: mission.plans,
        aborted,
    })
}

struct Mission {
    world: World,
    lsg: Lsg,
    config: MissionConfig,
    phase: MissionPhase,
    trace: MetricsTrace,
    events: Vec<MissionEvent>,
    plans: Vec<PlanRecord>,
    /// Scenario index behind each live target node.
    node_index: BTreeMap<NodeId, usize>,
    grid: OccupancyGrid,
}

impl Mission {
    fn new(world: World, config: MissionConfig) -> Self {
        let lsg = Lsg::new(world.robot_pose());
        let mut grid = OccupancyGrid::rasterize(world.scenario(), DEFAULT_CELL_SIZE_M);
        grid.inflate_risk(DEFAULT_RISK_FACTOR);
        let mut mission = Self {
            world,
            lsg,
            config,
            phase: MissionPhase::Survey360,
            trace: MetricsTrace::default(),
            events: Vec::new(),
            plans: Vec::new(),
            node_index: BTreeMap::new(),
            grid,
        };
        mission.sample_metrics();
        mission
    }

    fn now(&self) -> f64 {
        self.world.clock()
    }

    fn event(&mut self, kind: MissionEventKind) {
        self.events.push(MissionEvent {
            t: self.now(),
            kind,
        });
    }

    fn set_phase(&mut self, to: MissionPhase) {
        let from = self.phase;
        self.phase = to;
        self.event(MissionEventKind::PhaseChange { from, to });
        self.sample_metrics();
    }

    fn sample_metrics(&mut self) {
        let metrics = self.lsg.layer_metrics();
        self.trace.record(self.now(), self.phase, &metrics);
    }

    fn sync_clock(&mut self) {
        self.lsg.set_sim_time(self.world.clock());
        self.lsg.set_robot_pose(self.world.robot_pose());
    }

    fn run(&mut self) -> Result<(), MissionError> {
        self.survey_360()?;
        loop {
            // Both explore policies end with a prune, so selection always
            // sees a deduplicated Target layer.
            self.set_phase(MissionPhase::SelectTarget);
            self.sync_clock();
            let mut skipped: BTreeSet<NodeId> = BTreeSet::new();
            let mut advanced = false;
            while let Some(best) = self.select_candidate(&skipped) {
                let label = self
                    .lsg
                    .target(best)
                    .expect("candidate exists")
                    .label
                    .clone();
                let utility = self.lsg.target(best).and_then(|t| t.utility).unwrap_or(0.0);
                self.event(MissionEventKind::Selected {
                    node: best,
                    label,
                    utility,
                });
                self.set_phase(MissionPhase::NavigateToTarget);
                if self.navigate_to_detected(best)? {
                    self.set_phase(MissionPhase::Inspect);
                    self.inspect(best)?;
                    self.set_phase(MissionPhase::LocalExplore);
                    self.local_explore(best)?;
                    advanced = true;
                    break;
                }
                self.event(MissionEventKind::CandidateSkipped {
                    node: best,
                    reason: "unreachable".into(),
                });
                skipped.insert(best);
                self.set_phase(MissionPhase::SelectTarget);
            }
            if !advanced {
                break;
            }
        }
        self.set_phase(MissionPhase::ReturnToBase);
        self.return_to_base()?;
        self.set_phase(MissionPhase::Done);
        Ok(())
    }

    fn select_candidate(&mut self, skipped: &BTreeSet<NodeId>) -> Option<NodeId> {
        let robot = self.world.robot_pose();
        select_target(&mut self.lsg, &robot, &self.config.weights)?;
        // Argmax over the stored utilities, ignoring skipped candidates.
        let mut best: Option<(NodeId, f64)> = None;
        for t in self.lsg.detected() {
            if skipped.contains(&t.id) {
                continue;
            }
            let u = t.utility.unwrap_or(0.0);
            if best.is_none_or(|(_, bu)| u > bu) {
                best = Some((t.id, u));
            }
        }
        best.map(|(id, _)| id)
    }

    // ---- sensing -------------------------------------------------------

    fn register_batch(&mut self, sensed: Vec<SensedTarget>) -> Result<(), MissionError> {
        for s in sensed {
            self.sync_clock();
            let class = s.detection.class_label.clone();
            let node = self.lsg.register_detected(s.detection, s.est_position)?;
            self.node_index.insert(node, s.target_index);
            let label = self.lsg.target(node).expect("registered").label.clone();
            self.event(MissionEventKind::Registered { node, label, class });
        }
        self.sample_metrics();
        Ok(())
    }

    fn prune(&mut self) -> Result<(), MissionError> {
        self.sync_clock();
        let removed = self.lsg.prune_targets(self.config.d_valid_m);
        if !removed.is_empty() {
            for id in &removed {
                self.node_index.remove(id);
            }
            self.event(MissionEventKind::Pruned { removed });
            self.sample_metrics();
        }
        Ok(())
    }

    fn refresh_traversal(&mut self) {
        self.sync_clock();
        let world = self.world.clone();
        let visibility = move |a: Point3, b: Point3| world.segment_clear_of_obstacles(a, b);
        let added = self
            .lsg
            .refresh_traversal_edges(self.config.traversal_margin_m, &visibility);
        if !added.is_empty() {
            self.event(MissionEventKind::TraversalEdges { added });
            self.sample_metrics();
        }
    }

    /// Full yaw sweep at the current position: enough sense frames to cover
    /// 2 pi with the configured field of view.
    fn sweep(&mut self) -> Result<(), MissionError> {
        let frames =
            ((std::f64::consts::TAU / self.config.sensor.fov_horizontal).ceil() as usize).max(1);
        let base = self.world.robot_pose().yaw;
        for k in 0..frames {
            self.world
                .rotate_to(base + k as f64 * std::f64::consts::TAU / frames as f64);
            let sensed = self.world.sense(&self.config.sensor)?;
            self.register_batch(sensed)?;
        }
        Ok(())
    }

    fn survey_360(&mut self) -> Result<(), MissionError> {
        let steps = (std::f64::consts::TAU / self.config.survey_step_rad).ceil() as usize;
        let base = self.world.robot_pose().yaw;
        for k in 0..steps {
            self.world
                .rotate_to(base + k as f64 * self.config.survey_step_rad);
            let sensed = self.world.sense(&self.config.sensor)?;
            self.register_batch(sensed)?;
        }
        self.prune()?;
        Ok(())
    }

    // ---- movement --------------------------------------------------------

    fn move_to(&mut self, position: Point3) -> Result<(), MissionError> {
        let from = self.world.robot_pose().position;
        if euclidean(from, position) <= 1e-9 {
            return Ok(());
        }
        let yaw = (position.y - from.y).atan2(position.x - from.x);
        self.world.step_to(Pose6::level(position, yaw))?;
        self.sync_clock();
        self.sample_metrics();
        Ok(())
    }

    /// Straight leg with grid fallback; false when even the grid cannot
    /// route there.
    fn leg_to(&mut self, position: Point3) -> Result<bool, MissionError> {
        let from = self.world.robot_pose().position;
        if self.world.segment_clear(from, position) {
            self.move_to(position)?;
            return Ok(true);
        }
        match plan_grid(&self.grid, from, position) {
            Ok(plan) => {
                for wp in plan.waypoints {
                    self.move_to(wp)?;
                }
                self.move_to(position)?;
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    fn record_plan(&mut self, purpose: &str, plan: &PlanResult) {
        self.plans.push(PlanRecord {
            t_sim_s: self.now(),
            purpose: purpose.to_string(),
            plan: plan.clone(),
        });
    }

    /// Walk the physical elements of a plan: pose-ring paths and transit
    /// legs. Level-layer steps and parent-copy waypoints are virtual.
    fn execute_steps(&mut self, steps: &[RouteStep]) -> Result<bool, MissionError> {
        // Bridge from wherever the robot is to the chain start.
        if let Some(first) = steps.iter().find_map(|s| match s {
            RouteStep::Local {
                layer: LayerKind::Pose,
                owner,
                path,
                positions,
                ..
            } => path
                .iter()
                .zip(positions)
                .find(|(id, _)| *id != owner)
                .map(|(_, p)| *p),
            RouteStep::Transit { from, .. } => Some(*from),
            _ => None,
        }) {
            if !self.leg_to(first)? {
                return Ok(false);
            }
        }
        for step in steps {
            match step {
                RouteStep::Local {
                    layer: LayerKind::Pose,
                    owner,
                    path,
                    positions,
                    ..
                } => {
                    for (id, position) in path.iter().zip(positions) {
                        if id == owner {
                            continue;
                        }
                        // Hops that shortcut through the virtual level anchor
                        // may cross the footprint; leg_to detours via grid.
                        if !self.leg_to(*position)? {
                            return Ok(false);
                        }
                    }
                }
                RouteStep::Local { .. } => {}
                RouteStep::Transit { waypoints, .. } => {
                    for wp in waypoints.iter().skip(1) {
                        self.move_to(*wp)?;
                    }
                }
            }
        }
        Ok(true)
    }

    // ---- phases ------------------------------------------------------

    /// Bring the robot to the inspection-ring start of a detected target.
    /// Returns false when the candidate is unreachable.
    fn navigate_to_detected(&mut self, id: NodeId) -> Result<bool, MissionError> {
        let Some(&target_index) = self.node_index.get(&id) else {
            return Ok(false);
        };
        let footprint = self.world.target_spec(target_index)?.footprint.clone();
        let robot = self.world.robot_pose();
        let ring = ring_poses(
            &footprint,
            self.config.standoff_m,
            0.0,
            robot.position,
            self.config.poses_per_level,
        );
        let ring_start = ring[0].position;

        if self.lsg.inspected().next().is_some() {
            let world = self.world.clone();
            let leg_check = move |a: Point3, b: Point3| world.segment_clear(a, b);
            let ctx = PlanContext {
                leg_clear: Some(&leg_check),
                grid: Some(&self.grid),
            };
            let plan = match plan_hierarchical(&self.lsg, &robot, &TerminalSpec::target(id), &ctx) {
                Ok(plan) => plan,
                Err(
                    PlanError::NoPath { .. }
                    | PlanError::LegBlocked { .. }
                    | PlanError::GridLeg { .. },
                ) => return Ok(false),
                Err(e) => return Err(e.into()),
            };
            let label = self.lsg.target(id).expect("detected target").label.clone();
            self.record_plan(&format!("navigate:{label}"), &plan);
            // The last step is the conceptual leg onto the estimate itself;
            // physically we stop at the new target's ring.
            let walkable = &plan.steps[..plan.steps.len().saturating_sub(1)];
            if !self.execute_steps(walkable)? {
                return Ok(false);
            }
            self.leg_to(ring_start)
        } else {
            // Pre-inspection navigation: straight line, grid as a backstop.
            self.leg_to(ring_start)
        }
    }

    /// Perimeter inspection: for each level, walk standoff view poses around
    /// the footprint until the ring wraps, sensing features at each pose;
    /// then bound the target with the hull of its level-0 poses and promote.
    fn inspect(&mut self, id: NodeId) -> Result<(), MissionError> {
        let target_index = *self
            .node_index
            .get(&id)
            .expect("navigated target is indexed");
        let spec = self.world.target_spec(target_index)?.clone();
        let label = self.lsg.target(id).expect("target exists").label.clone();
        let levels = ((spec.effective_height() / self.config.level_step_m).ceil() as usize).max(1);
        let centroid = spec.footprint.centroid();

        self.sync_clock();
        let mut builder = InspectionBuilder::new(&self.lsg, id)?;
        let mut level0_positions: Vec<Point3> = Vec::new();
        let mut seen_features: BTreeSet<usize> = BTreeSet::new();
        let mut total_poses = 0usize;
        let mut total_features = 0usize;

        for level_index in 0..levels {
            let z = level_index as f64 * self.config.level_step_m;
            self.sync_clock();
            let level_id =
                builder.add_level(&mut self.lsg, Point3::new(centroid.x, centroid.y, z))?;
            self.sample_metrics();
            let ring = ring_poses(
                &spec.footprint,
                self.config.standoff_m,
                z,
                self.world.robot_pose().position,
                self.config.poses_per_level,
            );
            for pose in ring {
                let from = self.world.robot_pose().position;
                if !self.world.segment_clear(from, pose.position) {
                    continue;
                }
                self.world.step_to(pose)?;
                self.sync_clock();
                total_poses += 1;
                let image_ref = format!("img-{label}-L{level_index}-p{total_poses}");
                let pose_id = builder.add_pose(&mut self.lsg, level_id, pose, &image_ref)?;
                if level_index == 0 {
                    level0_positions.push(pose.position);
                }
                for sighting in self
                    .world
                    .sense_features(target_index, &self.config.sensor)?
                {
                    if !seen_features.insert(sighting.spec_index) {
                        continue;
                    }
                    let confidence = (1.0 - sighting.distance / self.config.sensor.max_range)
                        .clamp(MIN_CONFIDENCE, 1.0);
                    let mask_area_px = (self.config.sensor.mask_gain * FEATURE_AREA_M2
                        / (sighting.distance * sighting.distance))
                        .clamp(0.0, self.config.sensor.frame_px());
                    builder.add_feature(
                        &mut self.lsg,
                        pose_id,
                        FeatureObservation {
                            class_label: sighting.class_label,
                            position: sighting.position,
                            confidence,
                            mask_area_px,
                        },
                    )?;
                    total_features += 1;
                }
                self.sample_metrics();
            }
        }

        let polygon =
            convex_hull(&level0_positions).map_err(|e| MissionError::DegenerateInspection {
                label: label.clone(),
                reason: e.to_string(),
            })?;
        self.sync_clock();
        builder.finish(&mut self.lsg, polygon)?;
        self.event(MissionEventKind::Promoted {
            node: id,
            label,
            levels,
            poses: total_poses,
            features: total_features,
        });
        self.sample_metrics();
        Ok(())
    }

    /// Orbit the freshly inspected target, sweeping for new detections at
    /// each reachable waypoint, then prune and refresh traversal edges.
    fn local_explore(&mut self, id: NodeId) -> Result<(), MissionError> {
        let target = self.lsg.target(id).expect("inspected target");
        let est = target.est_position;
        let polygon = target.polygon().expect("inspected").clone();
        let r_poly = polygon
            .vertices()
            .iter()
            .map(|v| planar_distance(Point3::xy(v[0], v[1]), est))
            .fold(0.0f64, f64::max);
        // Orbit at the configured clearance beyond the footprint (the
        // polygon already includes the standoff).
        let orbit_r = (r_poly - self.config.standoff_m).max(0.0) + self.config.orbit_radius_m;
        let robot = self.world.robot_pose().position;
        let start_angle = (robot.y - est.y).atan2(robot.x - est.x);

        for k in 0..ORBIT_WAYPOINTS {
            let angle = start_angle + k as f64 * std::f64::consts::TAU / ORBIT_WAYPOINTS as f64;
            let wp = Point3::xy(est.x + orbit_r * angle.cos(), est.y + orbit_r * angle.sin());
            if !self.world.scenario().bounds.contains(wp) {
                continue;
            }
            if self
                .world
                .scenario()
                .footprints()
                .any(|(_, poly)| poly.contains(wp))
            {
                continue;
            }
            let from = self.world.robot_pose().position;
            if !self.world.segment_clear(from, wp) {
                continue;
            }
            self.move_to(wp)?;
            self.sweep()?;
        }
        self.prune()?;
        self.refresh_traversal();
        Ok(())
    }

    fn return_to_base(&mut self) -> Result<(), MissionError> {
        let base = self.lsg.robot_start().position;
        if self.lsg.inspected().next().is_some() {
            let robot = self.world.robot_pose();
            let world = self.world.clone();
            let leg_check = move |a: Point3, b: Point3| world.segment_clear(a, b);
            let ctx = PlanContext {
                leg_clear: Some(&leg_check),
                grid: Some(&self.grid),
            };
            let terminal = TerminalSpec::target(self.lsg.robot_id());
            let plan = plan_hierarchical(&self.lsg, &robot, &terminal, &ctx)?;
            self.record_plan("return-to-base", &plan);
            if self.execute_steps(&plan.steps.clone())? {
                return Ok(());
            }
        }
        // Nothing inspected (or the chain start was unreachable): go straight.
        self.leg_to(base)?;
        Ok(())
    }
}
