//! Generic single-layer undirected graph reused by all four abstraction
//! layers of the scene graph.
//!
//! Every [`LocalGraph`] has a designated parent node (a lightweight copy of
//! the node one layer above, or the robot node for the top layer), a list
//! of child nodes, and intra-layer edges. There are never edges between
//! different local graphs; nesting alone links the layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, Point3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {0:?} not found in local graph")]
    UnknownNode(NodeId),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(NodeId),
    #[error("self-loop on {0:?} rejected")]
    SelfLoop(NodeId),
    #[error("edge weight must be finite and > 0, got {0}")]
    BadWeight(f64),
}

/// Globally unique node identifier (one counter across all layers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Intra-layer edge attribute: symbolic (relational) or weighted (metric).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeAttr {
    Symbolic,
    Weighted { meters: f64 },
}

impl EdgeAttr {
    pub fn weighted(meters: f64) -> Result<Self, GraphError> {
        if !meters.is_finite() || meters <= 0.0 {
            return Err(GraphError::BadWeight(meters));
        }
        Ok(EdgeAttr::Weighted { meters })
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, EdgeAttr::Weighted { .. })
    }
}

/// Undirected edge; endpoints are stored in canonical (smaller id first) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub attr: EdgeAttr,
}

/// Anything that can live in a local graph: has an id, a metric position and
/// a human-readable label.
pub trait GraphNode {
    fn id(&self) -> NodeId;
    fn position(&self) -> Point3;
    fn label(&self) -> &str;
}

/// Copy of the layer-above node acting as this graph's parent. Carries the
/// original's id so a graph union can merge the copy back onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRef {
    pub id: NodeId,
    pub label: String,
    pub position: Point3,
}

/// A single-layer undirected graph: parent + children + intra-layer edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGraph<N> {
    parent: ParentRef,
    children: Vec<N>,
    edges: Vec<Edge>,
}

impl<N: GraphNode> LocalGraph<N> {
    pub fn new(parent: ParentRef) -> Self {
        Self {
            parent,
            children: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn parent(&self) -> &ParentRef {
        &self.parent
    }

    pub fn children(&self) -> &[N] {
        &self.children
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Node count including the parent copy.
    pub fn order(&self) -> usize {
        1 + self.children.len()
    }

    pub fn size(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.parent.id == id || self.children.iter().any(|c| c.id() == id)
    }

    pub fn child(&self, id: NodeId) -> Option<&N> {
        self.children.iter().find(|c| c.id() == id)
    }

    pub fn child_mut(&mut self, id: NodeId) -> Option<&mut N> {
        self.children.iter_mut().find(|c| c.id() == id)
    }

    pub fn position_of(&self, id: NodeId) -> Option<Point3> {
        if self.parent.id == id {
            return Some(self.parent.position);
        }
        self.child(id).map(|c| c.position())
    }

    pub fn label_of(&self, id: NodeId) -> Option<&str> {
        if self.parent.id == id {
            return Some(&self.parent.label);
        }
        self.child(id).map(|c| c.label())
    }

    pub fn add_child(&mut self, node: N) -> Result<NodeId, GraphError> {
        let id = node.id();
        if self.contains(id) {
            return Err(GraphError::DuplicateNode(id));
        }
        self.children.push(node);
        Ok(id)
    }

    /// Insert an undirected edge. Returns false if an equivalent edge already
    /// exists (idempotent), errors on self-loops and unknown endpoints.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, attr: EdgeAttr) -> Result<bool, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if !self.contains(a) {
            return Err(GraphError::UnknownNode(a));
        }
        if !self.contains(b) {
            return Err(GraphError::UnknownNode(b));
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if self.has_edge(a, b) {
            return Ok(false);
        }
        self.edges.push(Edge { a, b, attr });
        Ok(true)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().any(|e| e.a == a && e.b == b)
    }

    pub fn edge(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }

    /// Remove an edge if present; returns whether one was removed.
    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let before = self.edges.len();
        self.edges.retain(|e| !(e.a == a && e.b == b));
        before != self.edges.len()
    }

    /// Remove a child node along with its incident edges.
    pub fn remove_child(&mut self, id: NodeId) -> Result<N, GraphError> {
        let idx = self
            .children
            .iter()
            .position(|c| c.id() == id)
            .ok_or(GraphError::UnknownNode(id))?;
        self.edges.retain(|e| e.a != id && e.b != id);
        Ok(self.children.remove(idx))
    }

    /// Neighbors of `id` with the effective metric weight of each edge:
    /// weighted edges keep their stored weight, symbolic edges are promoted
    /// to the Euclidean distance between endpoint positions at query time.
    /// Results are sorted by neighbor id for deterministic traversal.
    pub fn weighted_neighbors(&self, id: NodeId) -> Vec<(NodeId, f64)> {
        let mut out: Vec<(NodeId, f64)> = self
            .edges
            .iter()
            .filter_map(|e| {
                let other = if e.a == id {
                    e.b
                } else if e.b == id {
                    e.a
                } else {
                    return None;
                };
                let w = match e.attr {
                    EdgeAttr::Weighted { meters } => meters,
                    EdgeAttr::Symbolic => {
                        let pa = self.position_of(e.a)?;
                        let pb = self.position_of(e.b)?;
                        euclidean(pa, pb)
                    }
                };
                Some((other, w))
            })
            .collect();
        out.sort_by_key(|(n, _)| *n);
        out
    }

    /// All node ids (parent first, then children in insertion order).
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids = Vec::with_capacity(self.order());
        ids.push(self.parent.id);
        ids.extend(self.children.iter().map(|c| c.id()));
        ids
    }
}
