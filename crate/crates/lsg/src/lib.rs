//! Layered semantic graphs for inspect-explore autonomy.
//!
//! The crate builds a nested four-layer scene graph (targets, inspection
//! levels, view poses, semantic features) from a deterministic synthetic
//! world, runs the explore-inspect mission loop that populates it, and plans
//! paths over it two ways: hierarchically through the nested layer graphs and
//! with a risk-inflated occupancy-grid baseline.
//!
//! Modules:
//! - [`geometry`]: points, poses, polygons, containment and hulls.
//! - [`graph`]: the generic single-layer graph all four layers reuse.
//! - [`scene`]: the nested graph itself, its mutation rules and serialization.
//! - [`world`]: scenario files, the stepped simulator and the detector oracle.
//! - [`mission`]: the survey/select/inspect/local-explore loop.
//! - [`hplanner`]: hierarchical planning and semantic queries.
//! - [`vplanner`]: the occupancy-grid baseline planner.
//! - [`export`]: DOT/GraphML/JSON dumps of the flattened graph.

pub mod export;
pub mod geometry;
pub mod graph;
pub mod hplanner;
pub mod mission;
pub mod scene;
pub mod vplanner;
pub mod world;

pub use geometry::{convex_hull, euclidean, point_in_polygon, Point3, Polygon2, Pose6};
pub use graph::{Edge, EdgeAttr, LocalGraph, NodeId};
pub use scene::{Detection, LayerKind, Lsg, TargetNode};
