//! Export of the flattened graph union: lossless JSON, and lossy DOT /
//! GraphML with layer-coded node styling (attributes flattened to strings).

use std::fmt::Write;

use crate::scene::{FlatGraph, LayerKind};

fn layer_color(layer: LayerKind) -> &'static str {
    match layer {
        LayerKind::Target => "#d62728",
        LayerKind::Level => "#1f77b4",
        LayerKind::Pose => "#2ca02c",
        LayerKind::Feature => "#9467bd",
    }
}

/// Graphviz DOT rendering of the union graph.
pub fn to_dot(graph: &FlatGraph) -> String {
    let mut out = String::from("graph lsg {\n  node [style=filled];\n");
    for node in &graph.nodes {
        writeln!(
            out,
            "  n{} [label=\"{}\", fillcolor=\"{}\", layer=\"{}\", pos=\"{:.3},{:.3}\"];",
            node.id.0,
            node.label,
            layer_color(node.layer),
            node.layer,
            node.position.x,
            node.position.y
        )
        .expect("writing to string");
    }
    for edge in &graph.edges {
        let style = if edge.attr.is_weighted() {
            "solid"
        } else {
            "dashed"
        };
        writeln!(out, "  n{} -- n{} [style={style}];", edge.a.0, edge.b.0)
            .expect("writing to string");
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// GraphML rendering of the union graph.
pub fn to_graphml(graph: &FlatGraph) -> String {
    let mut out = String::from(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key id="label" for="node" attr.name="label" attr.type="string"/>
  <key id="layer" for="node" attr.name="layer" attr.type="string"/>
  <key id="x" for="node" attr.name="x" attr.type="double"/>
  <key id="y" for="node" attr.name="y" attr.type="double"/>
  <key id="z" for="node" attr.name="z" attr.type="double"/>
  <key id="edge_kind" for="edge" attr.name="kind" attr.type="string"/>
  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>
  <graph id="lsg" edgedefault="undirected">
"#,
    );
    for node in &graph.nodes {
        writeln!(
            out,
            "    <node id=\"n{}\"><data key=\"label\">{}</data><data key=\"layer\">{}</data><data key=\"x\">{}</data><data key=\"y\">{}</data><data key=\"z\">{}</data></node>",
            node.id.0,
            xml_escape(&node.label),
            node.layer,
            node.position.x,
            node.position.y,
            node.position.z
        )
        .expect("writing to string");
    }
    for (i, edge) in graph.edges.iter().enumerate() {
        let (kind, weight) = match edge.attr {
            crate::graph::EdgeAttr::Symbolic => ("symbolic".to_string(), String::new()),
            crate::graph::EdgeAttr::Weighted { meters } => (
                "weighted".to_string(),
                format!("<data key=\"weight\">{meters}</data>"),
            ),
        };
        writeln!(
            out,
            "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\"><data key=\"edge_kind\">{kind}</data>{weight}</edge>",
            edge.a.0, edge.b.0
        )
        .expect("writing to string");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

/// Lossless JSON of the union graph.
pub fn to_union_json(graph: &FlatGraph) -> String {
    serde_json::to_string_pretty(graph).expect("flat graph serialization is infallible")
}
