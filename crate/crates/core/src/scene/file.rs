//! JSON scene files.
//!
//! ```json
//! {"variant": "relational",
//!  "nodes": [{"id": 0, "shape": "cube", "size": "large", "color": "red",
//!             "material": "metal", "position": [0.5, -1.2, 0.7]}]}
//! ```
//!
//! `"null"` encodes an empty slot and `"*"` a wildcard. Edges are derived
//! from positions; an explicit `edges` list is written only for graphs whose
//! edges cannot be derived (nodes without positions or unassigned labels).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    build_relational_graph, AttrValue, Attribute, EdgeLabels, NodeId, ObjectNode, RelationLabel, SceneError,
    SceneGraph, Value, Variant,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    variant: String,
    nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: NodeId,
    shape: String,
    size: String,
    color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    src: NodeId,
    dst: NodeId,
    lateral: String,
    depth: String,
}

fn encode_attr(v: AttrValue) -> String {
    v.to_string()
}

fn decode_attr(index: usize, attr: Attribute, label: &str) -> Result<AttrValue, SceneError> {
    let vocab_err = || SceneError::Vocabulary { index, attribute: attr.name().into(), label: label.into() };
    match label {
        "null" => Ok(AttrValue::Null),
        "*" => Ok(AttrValue::Wildcard),
        other => {
            let v = Value::from_label(other).ok_or_else(vocab_err)?;
            if v.attribute() != attr {
                return Err(vocab_err());
            }
            Ok(AttrValue::Concrete(v))
        }
    }
}

fn encode_axis(label: Option<RelationLabel>) -> String {
    label.map_or_else(|| "*".to_string(), |l| l.label().to_string())
}

fn decode_axis(label: &str, lateral: bool) -> Result<Option<RelationLabel>, SceneError> {
    if label == "*" {
        return Ok(None);
    }
    match RelationLabel::from_label(label) {
        Some(r) if r.is_lateral() == lateral => Ok(Some(r)),
        _ => Err(SceneError::Invariant(format!("bad relation label {label:?}"))),
    }
}

pub fn serialize_scene(g: &SceneGraph) -> String {
    let nodes = g
        .nodes()
        .iter()
        .map(|n| NodeRecord {
            id: n.id,
            shape: encode_attr(n.get(Attribute::Shape)),
            size: encode_attr(n.get(Attribute::Size)),
            color: encode_attr(n.get(Attribute::Color)),
            material: n.attrs.get(&Attribute::Material).map(|v| encode_attr(*v)),
            position: n.position,
        })
        .collect();
    let edges = (g.variant() == Variant::Relational && !g.edges_derivable()).then(|| {
        g.edges()
            .iter()
            .map(|(&(src, dst), e)| EdgeRecord { src, dst, lateral: encode_axis(e.lateral), depth: encode_axis(e.depth) })
            .collect()
    });
    let file = SceneFile { variant: g.variant().name().to_string(), nodes, edges };
    let mut text = serde_json::to_string_pretty(&file).expect("scene serialization cannot fail");
    text.push('\n');
    text
}

pub fn parse_scene(text: &str) -> Result<SceneGraph, SceneError> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| SceneError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let variant = match file.variant.as_str() {
        "grid" => Variant::Grid,
        "relational" => Variant::Relational,
        other => {
            return Err(SceneError::Invariant(format!("unknown variant {other:?}")));
        }
    };
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for (index, rec) in file.nodes.iter().enumerate() {
        let mut node = ObjectNode { id: rec.id, attrs: BTreeMap::new(), position: rec.position };
        node.set(Attribute::Shape, decode_attr(index, Attribute::Shape, &rec.shape)?);
        node.set(Attribute::Size, decode_attr(index, Attribute::Size, &rec.size)?);
        node.set(Attribute::Color, decode_attr(index, Attribute::Color, &rec.color)?);
        match (variant, &rec.material) {
            (Variant::Relational, Some(m)) => node.set(Attribute::Material, decode_attr(index, Attribute::Material, m)?),
            (Variant::Relational, None) => {
                return Err(SceneError::Schema { id: rec.id, message: "relational nodes need a material".into() })
            }
            (Variant::Grid, Some(_)) => {
                return Err(SceneError::Schema { id: rec.id, message: "grid nodes carry no material".into() })
            }
            (Variant::Grid, None) => {}
        }
        nodes.push(node);
    }
    match (variant, file.edges) {
        (Variant::Grid, None) => SceneGraph::from_parts(Variant::Grid, nodes, BTreeMap::new()),
        (Variant::Grid, Some(_)) => Err(SceneError::Invariant("grid scene cannot carry edges".into())),
        (Variant::Relational, None) => build_relational_graph(nodes),
        (Variant::Relational, Some(records)) => {
            let mut edges = BTreeMap::new();
            for r in records {
                let labels = EdgeLabels { lateral: decode_axis(&r.lateral, true)?, depth: decode_axis(&r.depth, false)? };
                if edges.insert((r.src, r.dst), labels).is_some() {
                    return Err(SceneError::Invariant(format!("edge ({}, {}) listed twice", r.src, r.dst)));
                }
            }
            SceneGraph::from_parts(Variant::Relational, nodes, edges)
        }
    }
}
