//! Attributed scene graphs.
//!
//! Two variants share one representation. A `Grid` graph has exactly nine
//! nodes, one per cell of a 3x3 floor grid (row-major, top-left first), and
//! no edges. A `Relational` graph has one node per object and, for every
//! ordered pair of distinct nodes, a pair of spatial relation labels
//! (left/right and front/behind) derived from object coordinates.

mod file;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{parse_scene, serialize_scene};

pub type NodeId = u32;

/// Grid column boundaries on the x axis. Values on a boundary fall in the middle band.
pub const GRID_X_BOUNDS: (f64, f64) = (-0.99, 0.86);
/// Grid row boundaries on the y axis. Larger y is the top row.
pub const GRID_Y_BOUNDS: (f64, f64) = (-0.47, 2.35);
pub const GRID_CELLS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("node {0} has no position")]
    MissingPosition(NodeId),
    #[error("nodes {a} and {b} share the same {axis} coordinate")]
    CoordinateTie { a: NodeId, b: NodeId, axis: char },
    #[error("objects {a} and {b} both fall in grid cell {cell}")]
    CellCollision { a: NodeId, b: NodeId, cell: usize },
    #[error("a grid scene holds at most 9 objects, got {0}")]
    TooManyObjects(usize),
    #[error("node {id}: {message}")]
    Schema { id: NodeId, message: String },
    #[error("{0}")]
    Invariant(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("node #{index}: unknown {attribute} label {label:?}")]
    Vocabulary { index: usize, attribute: String, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Shape,
    Size,
    Color,
    Material,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::Shape, Attribute::Size, Attribute::Color, Attribute::Material];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Shape => "shape",
            Attribute::Size => "size",
            Attribute::Color => "color",
            Attribute::Material => "material",
        }
    }

    pub fn values(self) -> &'static [Value] {
        use Value::*;
        match self {
            Attribute::Shape => &[Cube, Sphere, Cylinder],
            Attribute::Size => &[Small, Large],
            Attribute::Color => &[Gray, Red, Blue, Green, Brown, Purple, Cyan, Yellow],
            Attribute::Material => &[Metal, Rubber],
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete attribute label. The per-attribute vocabularies are disjoint,
/// so a value always identifies its attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Cube,
    Sphere,
    Cylinder,
    Small,
    Large,
    Gray,
    Red,
    Blue,
    Green,
    Brown,
    Purple,
    Cyan,
    Yellow,
    Metal,
    Rubber,
}

impl Value {
    pub const ALL: [Value; 15] = [
        Value::Cube,
        Value::Sphere,
        Value::Cylinder,
        Value::Small,
        Value::Large,
        Value::Gray,
        Value::Red,
        Value::Blue,
        Value::Green,
        Value::Brown,
        Value::Purple,
        Value::Cyan,
        Value::Yellow,
        Value::Metal,
        Value::Rubber,
    ];

    pub fn attribute(self) -> Attribute {
        use Value::*;
        match self {
            Cube | Sphere | Cylinder => Attribute::Shape,
            Small | Large => Attribute::Size,
            Gray | Red | Blue | Green | Brown | Purple | Cyan | Yellow => Attribute::Color,
            Metal | Rubber => Attribute::Material,
        }
    }

    pub fn label(self) -> &'static str {
        use Value::*;
        match self {
            Cube => "cube",
            Sphere => "sphere",
            Cylinder => "cylinder",
            Small => "small",
            Large => "large",
            Gray => "gray",
            Red => "red",
            Blue => "blue",
            Green => "green",
            Brown => "brown",
            Purple => "purple",
            Cyan => "cyan",
            Yellow => "yellow",
            Metal => "metal",
            Rubber => "rubber",
        }
    }

    pub fn from_label(label: &str) -> Option<Value> {
        Value::ALL.iter().copied().find(|v| v.label() == label)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Value {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Value::from_label(s).ok_or_else(|| format!("unknown attribute value {s:?}"))
    }
}

/// Attribute slot contents. `Wildcard` only appears on nodes written by an
/// under-specified add edit; it matches any concrete value but not `Null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrValue {
    Concrete(Value),
    Null,
    Wildcard,
}

impl AttrValue {
    /// Filter semantics: does a node holding `self` pass a filter on `v`?
    pub fn admits(self, v: Value) -> bool {
        match self {
            AttrValue::Concrete(c) => c == v,
            AttrValue::Wildcard => true,
            AttrValue::Null => false,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Concrete(v) => f.write_str(v.label()),
            AttrValue::Null => f.write_str("null"),
            AttrValue::Wildcard => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Grid,
    Relational,
}

impl Variant {
    pub fn schema(self) -> &'static [Attribute] {
        match self {
            Variant::Grid => &[Attribute::Shape, Attribute::Size, Attribute::Color],
            Variant::Relational => &Attribute::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Grid => "grid",
            Variant::Relational => "relational",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectNode {
    pub id: NodeId,
    pub attrs: BTreeMap<Attribute, AttrValue>,
    pub position: Option<[f64; 3]>,
}

impl ObjectNode {
    /// A node with every schema attribute set to `Null`.
    pub fn empty(id: NodeId, schema: &[Attribute]) -> Self {
        ObjectNode {
            id,
            attrs: schema.iter().map(|&a| (a, AttrValue::Null)).collect(),
            position: None,
        }
    }

    /// A fully specified object with the given concrete values.
    pub fn object(id: NodeId, values: &[Value], position: Option<[f64; 3]>) -> Self {
        ObjectNode {
            id,
            attrs: values.iter().map(|&v| (v.attribute(), AttrValue::Concrete(v))).collect(),
            position,
        }
    }

    pub fn get(&self, attr: Attribute) -> AttrValue {
        self.attrs.get(&attr).copied().unwrap_or(AttrValue::Null)
    }

    pub fn set(&mut self, attr: Attribute, value: AttrValue) {
        self.attrs.insert(attr, value);
    }

    pub fn is_empty_cell(&self) -> bool {
        self.attrs.values().all(|v| *v == AttrValue::Null)
    }

    pub fn has_wildcard(&self) -> bool {
        self.attrs.values().any(|v| *v == AttrValue::Wildcard)
    }

    fn check_schema(&self, schema: &[Attribute]) -> Result<(), SceneError> {
        let keys: Vec<Attribute> = self.attrs.keys().copied().collect();
        if keys != schema {
            return Err(SceneError::Schema {
                id: self.id,
                message: format!(
                    "attributes {:?} do not match schema {:?}",
                    keys.iter().map(|a| a.name()).collect::<Vec<_>>(),
                    schema.iter().map(|a| a.name()).collect::<Vec<_>>()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationLabel {
    Left,
    Right,
    Front,
    Behind,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 4] =
        [RelationLabel::Left, RelationLabel::Right, RelationLabel::Front, RelationLabel::Behind];

    pub fn inverse(self) -> Self {
        match self {
            RelationLabel::Left => RelationLabel::Right,
            RelationLabel::Right => RelationLabel::Left,
            RelationLabel::Front => RelationLabel::Behind,
            RelationLabel::Behind => RelationLabel::Front,
        }
    }

    pub fn is_lateral(self) -> bool {
        matches!(self, RelationLabel::Left | RelationLabel::Right)
    }

    pub fn label(self) -> &'static str {
        match self {
            RelationLabel::Left => "left",
            RelationLabel::Right => "right",
            RelationLabel::Front => "front",
            RelationLabel::Behind => "behind",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        RelationLabel::ALL.iter().copied().find(|r| r.label() == s)
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Labels on a directed edge `(src, dst)`: where `src` stands relative to
/// `dst` on each axis. `None` on an axis is an unassigned (wildcard) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeLabels {
    pub lateral: Option<RelationLabel>,
    pub depth: Option<RelationLabel>,
}

impl EdgeLabels {
    pub const WILDCARD: EdgeLabels = EdgeLabels { lateral: None, depth: None };

    /// Relation of `src` to `dst`. Left is smaller x, front is smaller y.
    pub fn between(src: [f64; 3], dst: [f64; 3]) -> Self {
        EdgeLabels {
            lateral: Some(if src[0] < dst[0] { RelationLabel::Left } else { RelationLabel::Right }),
            depth: Some(if src[1] < dst[1] { RelationLabel::Front } else { RelationLabel::Behind }),
        }
    }

    pub fn inverse(self) -> Self {
        EdgeLabels {
            lateral: self.lateral.map(RelationLabel::inverse),
            depth: self.depth.map(RelationLabel::inverse),
        }
    }

    pub fn contains(self, label: RelationLabel) -> bool {
        if label.is_lateral() {
            self.lateral == Some(label)
        } else {
            self.depth == Some(label)
        }
    }

    pub fn assign(&mut self, label: RelationLabel) {
        if label.is_lateral() {
            self.lateral = Some(label);
        } else {
            self.depth = Some(label);
        }
    }

    pub fn is_wildcard(self) -> bool {
        self.lateral.is_none() || self.depth.is_none()
    }

    /// Axis-wise equality where an unassigned axis matches anything.
    pub fn matches(self, other: EdgeLabels) -> bool {
        fn axis(a: Option<RelationLabel>, b: Option<RelationLabel>) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            }
        }
        axis(self.lateral, other.lateral) && axis(self.depth, other.depth)
    }

    pub fn labels(self) -> BTreeSet<RelationLabel> {
        self.lateral.into_iter().chain(self.depth).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    variant: Variant,
    nodes: Vec<ObjectNode>,
    edges: BTreeMap<(NodeId, NodeId), EdgeLabels>,
}

impl SceneGraph {
    /// Assembles a graph from explicit parts, checking every variant invariant.
    pub fn from_parts(
        variant: Variant,
        nodes: Vec<ObjectNode>,
        edges: BTreeMap<(NodeId, NodeId), EdgeLabels>,
    ) -> Result<Self, SceneError> {
        let g = SceneGraph { variant, nodes, edges };
        g.check()?;
        Ok(g)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> &BTreeMap<(NodeId, NodeId), EdgeLabels> {
        &self.edges
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeLabels> {
        self.edges.get(&(src, dst)).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&ObjectNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    /// Number of nodes that represent an object (grid cells that are not all-Null).
    pub fn object_count(&self) -> usize {
        match self.variant {
            Variant::Grid => self.nodes.iter().filter(|n| !n.is_empty_cell()).count(),
            Variant::Relational => self.nodes.len(),
        }
    }

    pub fn has_wildcards(&self) -> bool {
        self.nodes.iter().any(ObjectNode::has_wildcard) || self.edges.values().any(|e| e.is_wildcard())
    }

    /// True when every edge can be re-derived from node positions.
    pub(crate) fn edges_derivable(&self) -> bool {
        self.nodes.iter().all(|n| n.position.is_some()) && !self.edges.values().any(|e| e.is_wildcard())
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut ObjectNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub(crate) fn remove_nodes(&mut self, ids: &BTreeSet<NodeId>) {
        self.nodes.retain(|n| !ids.contains(&n.id));
        self.edges.retain(|(a, b), _| !ids.contains(a) && !ids.contains(b));
    }

    /// Appends a node with wildcard edges to and from every existing node.
    pub(crate) fn push_unlinked_node(&mut self, node: ObjectNode) {
        let id = node.id;
        for other in &self.nodes {
            self.edges.insert((id, other.id), EdgeLabels::WILDCARD);
            self.edges.insert((other.id, id), EdgeLabels::WILDCARD);
        }
        self.nodes.push(node);
    }

    /// Sets one axis of edge `(src, dst)` and the inverse on `(dst, src)`.
    pub(crate) fn assign_relation(&mut self, src: NodeId, dst: NodeId, label: RelationLabel) {
        self.edges.entry((src, dst)).or_insert(EdgeLabels::WILDCARD).assign(label);
        self.edges.entry((dst, src)).or_insert(EdgeLabels::WILDCARD).assign(label.inverse());
    }

    pub(crate) fn next_id(&self) -> NodeId {
        self.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0)
    }

    fn check(&self) -> Result<(), SceneError> {
        let schema = self.variant.schema();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                return Err(SceneError::DuplicateId(n.id));
            }
            n.check_schema(schema)?;
        }
        match self.variant {
            Variant::Grid => {
                if self.nodes.len() != GRID_CELLS {
                    return Err(SceneError::Invariant(format!(
                        "grid scene must have exactly 9 nodes, got {}",
                        self.nodes.len()
                    )));
                }
                if !self.edges.is_empty() {
                    return Err(SceneError::Invariant("grid scene cannot carry edges".into()));
                }
            }
            Variant::Relational => {
                let expected = self.nodes.len() * self.nodes.len().saturating_sub(1);
                if self.edges.len() != expected {
                    return Err(SceneError::Invariant(format!(
                        "relational scene with {} nodes needs {} directed edges, got {}",
                        self.nodes.len(),
                        expected,
                        self.edges.len()
                    )));
                }
                for (&(a, b), &labels) in &self.edges {
                    if a == b || !seen.contains(&a) || !seen.contains(&b) {
                        return Err(SceneError::Invariant(format!("edge ({a}, {b}) is not between distinct nodes")));
                    }
                    if self.edge(b, a) != Some(labels.inverse()) {
                        return Err(SceneError::Invariant(format!(
                            "edges ({a}, {b}) and ({b}, {a}) are not inverses"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Maps a floor position to its grid cell (0..9, row-major from top-left).
pub fn grid_cell(position: [f64; 3]) -> usize {
    let (x, y) = (position[0], position[1]);
    let column = if x < GRID_X_BOUNDS.0 {
        0
    } else if x <= GRID_X_BOUNDS.1 {
        1
    } else {
        2
    };
    let row = if y > GRID_Y_BOUNDS.1 {
        0
    } else if y >= GRID_Y_BOUNDS.0 {
        1
    } else {
        2
    };
    3 * row + column
}

/// Builds a relational graph whose edges are derived from object coordinates.
pub fn build_relational_graph(objects: Vec<ObjectNode>) -> Result<SceneGraph, SceneError> {
    let mut seen = BTreeSet::new();
    for o in &objects {
        if !seen.insert(o.id) {
            return Err(SceneError::DuplicateId(o.id));
        }
        if o.position.is_none() {
            return Err(SceneError::MissingPosition(o.id));
        }
    }
    let mut edges = BTreeMap::new();
    for (i, a) in objects.iter().enumerate() {
        let pa = a.position.expect("checked");
        for b in &objects[i + 1..] {
            let pb = b.position.expect("checked");
            if pa[0] == pb[0] {
                return Err(SceneError::CoordinateTie { a: a.id, b: b.id, axis: 'x' });
            }
            if pa[1] == pb[1] {
                return Err(SceneError::CoordinateTie { a: a.id, b: b.id, axis: 'y' });
            }
            let ab = EdgeLabels::between(pa, pb);
            edges.insert((a.id, b.id), ab);
            edges.insert((b.id, a.id), ab.inverse());
        }
    }
    SceneGraph::from_parts(Variant::Relational, objects, edges)
}

/// Places objects into the nine grid cells; empty cells become all-Null nodes.
/// Node ids of the result are cell indices.
pub fn build_grid_graph(objects: Vec<ObjectNode>) -> Result<SceneGraph, SceneError> {
    if objects.len() > GRID_CELLS {
        return Err(SceneError::TooManyObjects(objects.len()));
    }
    let schema = Variant::Grid.schema();
    let mut cells: Vec<ObjectNode> = (0..GRID_CELLS as NodeId).map(|c| ObjectNode::empty(c, schema)).collect();
    let mut owner: [Option<NodeId>; GRID_CELLS] = [None; GRID_CELLS];
    let mut seen = BTreeSet::new();
    for o in objects {
        if !seen.insert(o.id) {
            return Err(SceneError::DuplicateId(o.id));
        }
        let pos = o.position.ok_or(SceneError::MissingPosition(o.id))?;
        let cell = grid_cell(pos);
        if let Some(prev) = owner[cell] {
            return Err(SceneError::CellCollision { a: prev, b: o.id, cell });
        }
        if o.attrs.keys().any(|a| !schema.contains(a)) {
            return Err(SceneError::Schema { id: o.id, message: "grid objects carry no material".into() });
        }
        owner[cell] = Some(o.id);
        let slot = &mut cells[cell];
        for &attr in schema {
            slot.set(attr, o.get(attr));
        }
        slot.position = Some(pos);
    }
    SceneGraph::from_parts(Variant::Grid, cells, BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: NodeId, x: f64, y: f64) -> ObjectNode {
        ObjectNode::object(id, &[Value::Cube, Value::Large, Value::Red, Value::Metal], Some([x, y, 0.7]))
    }

    #[test]
    fn two_objects_axis_rule() {
        let g = build_relational_graph(vec![obj(0, 0.0, 0.0), obj(1, 1.0, 1.0)]).unwrap();
        assert_eq!(g.edge(0, 1).unwrap().labels(), [RelationLabel::Left, RelationLabel::Front].into());
        assert_eq!(g.edge(1, 0).unwrap().labels(), [RelationLabel::Right, RelationLabel::Behind].into());
    }

    #[test]
    fn single_object_has_no_edges() {
        let g = build_relational_graph(vec![obj(3, 0.2, 0.1)]).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn relational_errors() {
        assert_eq!(
            build_relational_graph(vec![obj(0, 0.0, 0.0), obj(0, 1.0, 1.0)]),
            Err(SceneError::DuplicateId(0))
        );
        let mut unplaced = obj(1, 0.0, 0.0);
        unplaced.position = None;
        assert_eq!(build_relational_graph(vec![unplaced]), Err(SceneError::MissingPosition(1)));
        assert_eq!(
            build_relational_graph(vec![obj(0, 0.5, 0.0), obj(1, 0.5, 1.0)]),
            Err(SceneError::CoordinateTie { a: 0, b: 1, axis: 'x' })
        );
    }

    #[test]
    fn grid_cell_boundaries() {
        assert_eq!(grid_cell([-2.0, 3.0, 0.0]), 0);
        assert_eq!(grid_cell([0.0, 0.0, 0.0]), 4);
        assert_eq!(grid_cell([0.86, 2.35, 0.0]), 4);
        assert_eq!(grid_cell([-0.99, -0.47, 0.0]), 4);
        assert_eq!(grid_cell([0.87, -0.48, 0.0]), 8);
        assert_eq!(grid_cell([-1.0, 2.36, 0.0]), 0);
    }

    #[test]
    fn grid_graph_placement() {
        let empty = build_grid_graph(vec![]).unwrap();
        assert_eq!(empty.len(), 9);
        assert!(empty.nodes().iter().all(ObjectNode::is_empty_cell));

        let one = ObjectNode::object(7, &[Value::Sphere, Value::Small, Value::Blue], Some([0.0, 0.0, 0.35]));
        let g = build_grid_graph(vec![one]).unwrap();
        assert!(!g.nodes()[4].is_empty_cell());
        assert_eq!(g.nodes().iter().filter(|n| n.is_empty_cell()).count(), 8);

        let a = ObjectNode::object(1, &[Value::Cube, Value::Small, Value::Red], Some([-2.0, 0.5, 0.0]));
        let b = ObjectNode::object(2, &[Value::Cube, Value::Small, Value::Red], Some([2.0, 0.5, 0.0]));
        let g = build_grid_graph(vec![a.clone(), b]).unwrap();
        assert_eq!(g.object_count(), 2);

        let c = ObjectNode::object(3, &[Value::Cube, Value::Small, Value::Red], Some([-1.5, 0.1, 0.0]));
        assert_eq!(build_grid_graph(vec![a, c]), Err(SceneError::CellCollision { a: 1, b: 3, cell: 3 }));
    }

    #[test]
    fn edge_label_matching() {
        let lf = EdgeLabels { lateral: Some(RelationLabel::Left), depth: Some(RelationLabel::Front) };
        let rf = EdgeLabels { lateral: Some(RelationLabel::Right), depth: Some(RelationLabel::Front) };
        assert!(!lf.matches(rf));
        assert!(EdgeLabels::WILDCARD.matches(rf));
        let half = EdgeLabels { lateral: Some(RelationLabel::Left), depth: None };
        assert!(half.matches(lf));
        assert!(!half.matches(rf));
        assert_eq!(lf.inverse().labels(), [RelationLabel::Right, RelationLabel::Behind].into());
    }
}
