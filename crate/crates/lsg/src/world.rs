//! Deterministic synthetic world: scenario files, a stepped ground-truth
//! simulator, and the detector oracle that stands in for a real segmentation
//! model.
//!
//! The world is 2.5D: obstacle and target footprints are planar polygons,
//! heights exist only as z offsets for inspection levels and feature attach
//! points. All randomness (detector reliability draws, position noise) is
//! derived from the scenario seed plus a per-sense query counter, so
//! identical command sequences replay identically.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, normalize_angle, Point3, Polygon2, Pose6};
use crate::scene::Detection;

/// Bound on the estimated-position noise, meters (zero mean, uniform).
pub const EST_NOISE_M: f64 = 0.3;
/// Confidence floor for any returned detection.
pub const MIN_CONFIDENCE: f64 = 0.05;

/// Scenario document version accepted by [`Scenario::from_json`].
pub const SCENARIO_DOC_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("scenario field `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("footprints `{a}` and `{b}` overlap")]
    OverlappingFootprints { a: String, b: String },
    #[error("robot start pose lies inside footprint `{0}`")]
    StartInsideFootprint(String),
    #[error("pose ({x:.2}, {y:.2}) is outside world bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("collision: segment ({:.2}, {:.2}) -> ({:.2}, {:.2}) crosses footprint `{footprint}`", from.x, from.y, to.x, to.y)]
    Collision {
        from: Point3,
        to: Point3,
        footprint: String,
    },
    #[error("unknown target index {0}")]
    UnknownTarget(usize),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Camera-like sensor parameters; every value is configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub fov_horizontal: f64,
    pub max_range: f64,
    pub image_w: u32,
    pub image_h: u32,
    /// Mask-area gain: chosen so a 2 m x 4 m car at 10 m fills about 2% of a
    /// 640x480 frame (76800 * 8 / 100 = 6144 px).
    pub mask_gain: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_horizontal: std::f64::consts::FRAC_PI_2,
            max_range: 20.0,
            image_w: 640,
            image_h: 480,
            mask_gain: 76_800.0,
        }
    }
}

impl SensorModel {
    pub fn frame_px(&self) -> f64 {
        f64::from(self.image_w) * f64::from(self.image_h)
    }
}

/// A semantic feature on a target's perimeter: class, attach point given as a
/// fraction of the footprint perimeter, and the height it sits at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub class_label: String,
    pub perimeter_frac: f64,
    pub nominal_height: f64,
}

fn default_reliability() -> f64 {
    1.0
}

/// A semantic target of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub class_label: String,
    pub footprint: Polygon2,
    /// Structure height, drives the number of inspection levels. Defaults to
    /// the tallest feature.
    #[serde(default)]
    pub height: Option<f64>,
    /// Probability that the detector fires on this target, in [0, 1].
    #[serde(default = "default_reliability")]
    pub reliability: f64,
    #[serde(default)]
    pub features: Vec<FeatureSpec>,
}

impl TargetSpec {
    pub fn effective_height(&self) -> f64 {
        self.height.unwrap_or_else(|| {
            self.features
                .iter()
                .map(|f| f.nominal_height)
                .fold(0.0f64, f64::max)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl WorldBounds {
    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// A complete scenario description, loadable from a versioned JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub bounds: WorldBounds,
    #[serde(default)]
    pub obstacles: Vec<Polygon2>,
    pub targets: Vec<TargetSpec>,
    pub robot_start: Pose6,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Check structural invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.version != SCENARIO_DOC_VERSION {
            return Err(WorldError::Schema {
                field: "version".into(),
                reason: format!("unsupported version {}", self.version),
            });
        }
        if self.bounds.width() <= 0.0 || self.bounds.height() <= 0.0 {
            return Err(WorldError::Schema {
                field: "bounds".into(),
                reason: "max must exceed min on both axes".into(),
            });
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(0.0..=1.0).contains(&t.reliability) {
                return Err(WorldError::Schema {
                    field: format!("targets[{i}].reliability"),
                    reason: format!("{} outside [0, 1]", t.reliability),
                });
            }
            if let Some(h) = t.height {
                if !h.is_finite() || h < 0.0 {
                    return Err(WorldError::Schema {
                        field: format!("targets[{i}].height"),
                        reason: format!("{h} must be finite and >= 0"),
                    });
                }
            }
            for (j, f) in t.features.iter().enumerate() {
                if !(0.0..1.0).contains(&f.perimeter_frac) {
                    return Err(WorldError::Schema {
                        field: format!("targets[{i}].features[{j}].perimeter_frac"),
                        reason: format!("{} outside [0, 1)", f.perimeter_frac),
                    });
                }
                if !f.nominal_height.is_finite() || f.nominal_height < 0.0 {
                    return Err(WorldError::Schema {
                        field: format!("targets[{i}].features[{j}].nominal_height"),
                        reason: "must be finite and >= 0".into(),
                    });
                }
            }
        }
        let named: Vec<(String, &Polygon2)> = self.footprints().collect();
        for (i, (name_a, a)) in named.iter().enumerate() {
            for (name_b, b) in named.iter().skip(i + 1) {
                if polygons_overlap(a, b) {
                    return Err(WorldError::OverlappingFootprints {
                        a: name_a.clone(),
                        b: name_b.clone(),
                    });
                }
            }
        }
        for (name, poly) in self.footprints() {
            if poly.contains(self.robot_start.position) {
                return Err(WorldError::StartInsideFootprint(name));
            }
        }
        if !self.bounds.contains(self.robot_start.position) {
            return Err(WorldError::Schema {
                field: "robot_start".into(),
                reason: "start pose outside bounds".into(),
            });
        }
        Ok(())
    }

    /// All footprints (targets then obstacles) with diagnostic names.
    pub fn footprints(&self) -> impl Iterator<Item = (String, &Polygon2)> {
        let targets = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("target[{i}]:{}", t.class_label), &t.footprint));
        let obstacles = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| (format!("obstacle[{i}]"), o));
        targets.chain(obstacles)
    }
}

fn polygons_overlap(a: &Polygon2, b: &Polygon2) -> bool {
    a.contains(Point3::xy(b.vertices()[0][0], b.vertices()[0][1]))
        || b.contains(Point3::xy(a.vertices()[0][0], a.vertices()[0][1]))
        || a.vertices().iter().enumerate().any(|(i, _)| {
            let va = a.vertices();
            let s0 = Point3::xy(va[i][0], va[i][1]);
            let s1 = Point3::xy(va[(i + 1) % va.len()][0], va[(i + 1) % va.len()][1]);
            b.segment_intersects(s0, s1)
        })
}

/// One detector firing: which scenario target, what the detector reported,
/// and the noisy position estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedTarget {
    pub target_index: usize,
    pub detection: Detection,
    pub est_position: Point3,
}

/// A feature attach point currently visible to the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSighting {
    pub spec_index: usize,
    pub class_label: String,
    pub position: Point3,
    pub distance: f64,
}

/// The stepped simulator: ground-truth robot pose, a clock advanced by
/// travelled distance, and the detector oracle.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    robot: Pose6,
    clock: f64,
    speed: f64,
    queries: u64,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<Self, WorldError> {
        scenario.validate()?;
        let robot = scenario.robot_start;
        Ok(Self {
            scenario,
            robot,
            clock: 0.0,
            speed: 1.0,
            queries: 0,
        })
    }

    pub fn with_speed(mut self, speed_mps: f64) -> Self {
        assert!(speed_mps > 0.0, "speed must be positive");
        self.speed = speed_mps;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn robot_pose(&self) -> Pose6 {
        self.robot
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn target_spec(&self, index: usize) -> Result<&TargetSpec, WorldError> {
        self.scenario
            .targets
            .get(index)
            .ok_or(WorldError::UnknownTarget(index))
    }

    /// Yaw in place; rotation is free on the simulation clock.
    pub fn rotate_to(&mut self, yaw: f64) {
        self.robot.yaw = normalize_angle(yaw);
    }

    /// Straight-line move. The segment must not touch any footprint; the
    /// clock advances by distance / speed.
    pub fn step_to(&mut self, pose: Pose6) -> Result<(), WorldError> {
        let from = self.robot.position;
        let to = pose.position;
        for (name, poly) in self.scenario.footprints() {
            if poly.segment_intersects(from, to) {
                return Err(WorldError::Collision {
                    from,
                    to,
                    footprint: name,
                });
            }
        }
        self.clock += euclidean(from, to) / self.speed;
        self.robot = pose;
        Ok(())
    }

    /// True when the planar segment avoids every footprint.
    pub fn segment_clear(&self, a: Point3, b: Point3) -> bool {
        self.scenario
            .footprints()
            .all(|(_, poly)| !poly.segment_intersects(a, b))
    }

    /// True when the planar segment avoids every *obstacle* footprint
    /// (targets excluded); the visibility test behind traversal edges.
    pub fn segment_clear_of_obstacles(&self, a: Point3, b: Point3) -> bool {
        self.scenario
            .obstacles
            .iter()
            .all(|poly| !poly.segment_intersects(a, b))
    }

    fn draw_rng(&self, target_index: usize) -> ChaCha8Rng {
        let mixed = self
            .scenario
            .seed
            .wrapping_add(self.queries.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add((target_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        ChaCha8Rng::seed_from_u64(mixed)
    }

    /// Run the detector oracle from the current pose. A target is reported
    /// when its footprint centroid is inside the FOV cone and range, the
    /// sight line is not occluded by any other footprint, and the per-target
    /// reliability draw passes. Confidence and mask area shrink with
    /// distance; the position estimate carries bounded zero-mean noise.
    pub fn sense(&mut self, sensor: &SensorModel) -> Result<Vec<SensedTarget>, WorldError> {
        if !self.scenario.bounds.contains(self.robot.position) {
            return Err(WorldError::OutOfBounds {
                x: self.robot.position.x,
                y: self.robot.position.y,
            });
        }
        self.queries += 1;
        let robot = self.robot;
        let mut out = Vec::new();
        for (idx, target) in self.scenario.targets.iter().enumerate() {
            let centroid = target.footprint.centroid();
            let distance = euclidean(robot.position, centroid);
            if distance > sensor.max_range {
                continue;
            }
            let bearing = (centroid.y - robot.position.y).atan2(centroid.x - robot.position.x);
            if normalize_angle(bearing - robot.yaw).abs() > sensor.fov_horizontal / 2.0 + 1e-12 {
                continue;
            }
            let occluded = self
                .scenario
                .footprints()
                .enumerate()
                .any(|(k, (_, poly))| {
                    k != idx && poly.segment_intersects(robot.position, centroid)
                });
            if occluded {
                continue;
            }
            let mut rng = self.draw_rng(idx);
            let draw = unit_f64(&mut rng);
            if draw >= target.reliability {
                continue;
            }
            let confidence = (target.reliability * (1.0 - distance / sensor.max_range))
                .clamp(MIN_CONFIDENCE, 1.0);
            let mask_area_px = (sensor.mask_gain * target.footprint.area() / (distance * distance))
                .clamp(0.0, sensor.frame_px());
            let noise_x = (unit_f64(&mut rng) * 2.0 - 1.0) * EST_NOISE_M;
            let noise_y = (unit_f64(&mut rng) * 2.0 - 1.0) * EST_NOISE_M;
            out.push(SensedTarget {
                target_index: idx,
                detection: Detection {
                    class_label: target.class_label.clone(),
                    confidence,
                    mask_area_px,
                    image_ref: format!("img-q{}-t{}", self.queries, idx),
                    image_w: sensor.image_w,
                    image_h: sensor.image_h,
                },
                est_position: Point3::xy(centroid.x + noise_x, centroid.y + noise_y),
            });
        }
        Ok(out)
    }

    /// Feature attach points of `target_index` that currently face the robot
    /// (outward surface normal within 90 degrees of the direction back to the
    /// robot) and sit within sensor range.
    pub fn sense_features(
        &self,
        target_index: usize,
        sensor: &SensorModel,
    ) -> Result<Vec<FeatureSighting>, WorldError> {
        let target = self.target_spec(target_index)?;
        let robot = self.robot.position;
        let mut out = Vec::new();
        for (spec_index, feature) in target.features.iter().enumerate() {
            let (point, normal) = target.footprint.boundary_sample(feature.perimeter_frac);
            let to_robot = [robot.x - point[0], robot.y - point[1]];
            if normal[0] * to_robot[0] + normal[1] * to_robot[1] <= 0.0 {
                continue;
            }
            let position = Point3::new(point[0], point[1], feature.nominal_height);
            let distance = euclidean(robot, position);
            if distance > sensor.max_range {
                continue;
            }
            out.push(FeatureSighting {
                spec_index,
                class_label: feature.class_label.clone(),
                position,
                distance,
            });
        }
        Ok(out)
    }
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    // 53 high bits -> [0, 1); stable across platforms and crate versions.
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}
