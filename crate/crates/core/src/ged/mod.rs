//! Graph edit distance between scene graphs.
//!
//! The distance of an error-correcting matching (an injective partial map
//! from the nodes of `g1` to the nodes of `g2`) is the sum of four terms:
//! deleted `g1` nodes, inserted `g2` nodes, attribute substitutions on
//! matched nodes, and relation-label substitutions on edges whose endpoints
//! are both matched. Edges incident to deleted or inserted nodes cost
//! nothing beyond their node.
//!
//! Every term is a count times a constant, so costs are evaluated from the
//! four counts in a fixed order. Two matchings with the same counts always
//! produce bit-identical distances, whichever algorithm found them.

mod astar;
mod brute;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{AttrValue, EdgeLabels, NodeId, ObjectNode, SceneGraph, Variant};

pub use astar::{ged_astar, ged_astar_with, lower_bound, AStarOptions, Heuristic};
pub use brute::{ged_bruteforce, BRUTEFORCE_MAX_NODES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GedError {
    #[error("cannot compare a {0} graph with a {1} graph")]
    VariantMismatch(Variant, Variant),
    #[error("nodes {a} and {b} use different attribute schemas")]
    SchemaMismatch { a: NodeId, b: NodeId },
    #[error("aligned distance needs two grid graphs")]
    NotGrid,
    #[error("graphs with {n1} and {n2} nodes exceed the limit of {limit}")]
    TooLarge { n1: usize, n2: usize, limit: usize },
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
}

/// Edit costs. `wildcard_matches` lets a wildcard attribute or relation
/// match any concrete label at zero cost (never `Null`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub node_delete: f64,
    pub node_insert: f64,
    pub attr_substitution: f64,
    pub edge_substitution: f64,
    pub wildcard_matches: bool,
}

impl CostModel {
    /// Grid scenes: 1/3 per differing attribute. Grid nodes are matched by
    /// cell, and a full three-attribute substitution (1) never exceeds a
    /// delete plus insert (2), so node insert/delete never fires there.
    pub fn css() -> Self {
        CostModel {
            node_delete: 1.0,
            node_insert: 1.0,
            attr_substitution: 1.0 / 3.0,
            edge_substitution: 0.0,
            wildcard_matches: true,
        }
    }

    pub fn crir() -> Self {
        CostModel {
            node_delete: 1.0,
            node_insert: 1.0,
            attr_substitution: 1.0 / 4.0,
            edge_substitution: 1.0 / 16.0,
            wildcard_matches: true,
        }
    }

    pub fn validate(&self) -> Result<(), GedError> {
        for (name, v) in [
            ("node_delete", self.node_delete),
            ("node_insert", self.node_insert),
            ("attr_substitution", self.attr_substitution),
            ("edge_substitution", self.edge_substitution),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(GedError::InvalidCost(format!("{name} must be a nonnegative finite number, got {v}")));
            }
        }
        Ok(())
    }

    pub fn total(&self, c: &Counts) -> f64 {
        c.deleted as f64 * self.node_delete
            + c.inserted as f64 * self.node_insert
            + c.attrs as f64 * self.attr_substitution
            + c.edges as f64 * self.edge_substitution
    }

    fn attr_differs(&self, a: AttrValue, b: AttrValue) -> bool {
        if a == b {
            return false;
        }
        match (a, b) {
            (AttrValue::Wildcard, AttrValue::Concrete(_)) | (AttrValue::Concrete(_), AttrValue::Wildcard) => {
                !self.wildcard_matches
            }
            _ => true,
        }
    }

    fn edge_differs(&self, a: Option<EdgeLabels>, b: Option<EdgeLabels>) -> bool {
        match (a, b) {
            (None, None) => false,
            (Some(x), Some(y)) if self.wildcard_matches => !x.matches(y),
            (Some(x), Some(y)) => x != y,
            _ => true,
        }
    }
}

/// Edit-operation counts of a matching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub deleted: u32,
    pub inserted: u32,
    pub attrs: u32,
    pub edges: u32,
}

pub fn attr_cost(a: AttrValue, b: AttrValue, m: &CostModel) -> f64 {
    if m.attr_differs(a, b) {
        m.attr_substitution
    } else {
        0.0
    }
}

fn attr_mismatches(u: &ObjectNode, v: &ObjectNode, m: &CostModel) -> Result<u32, GedError> {
    if !u.attrs.keys().eq(v.attrs.keys()) {
        return Err(GedError::SchemaMismatch { a: u.id, b: v.id });
    }
    Ok(u.attrs.values().zip(v.attrs.values()).filter(|(a, b)| m.attr_differs(**a, **b)).count() as u32)
}

pub fn node_substitution_cost(u: &ObjectNode, v: &ObjectNode, m: &CostModel) -> Result<f64, GedError> {
    let n = attr_mismatches(u, v, m)?;
    Ok(m.total(&Counts { attrs: n, ..Counts::default() }))
}

/// Flat cost for a differing edge; `None` means the edge is absent.
pub fn edge_substitution_cost(a: Option<EdgeLabels>, b: Option<EdgeLabels>, m: &CostModel) -> f64 {
    if m.edge_differs(a, b) {
        m.edge_substitution
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(NodeId, NodeId)>,
    pub deleted: Vec<NodeId>,
    pub inserted: Vec<NodeId>,
    pub total_cost: f64,
}

/// Precomputed pairwise data shared by the search algorithms.
pub(crate) struct Problem {
    pub n1: usize,
    pub n2: usize,
    pub model: CostModel,
    /// `n1 * n2` attribute mismatch counts; `None` marks a forbidden substitution.
    sub: Vec<Option<u32>>,
    e1: Vec<Option<EdgeLabels>>,
    e2: Vec<Option<EdgeLabels>>,
}

impl Problem {
    pub fn new(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<Problem, GedError> {
        if g1.variant() != g2.variant() {
            return Err(GedError::VariantMismatch(g1.variant(), g2.variant()));
        }
        m.validate()?;
        let rigid = g1.variant() == Variant::Grid;
        let (n1, n2) = (g1.len(), g2.len());
        let mut sub = Vec::with_capacity(n1 * n2);
        for (i, u) in g1.nodes().iter().enumerate() {
            for (j, v) in g2.nodes().iter().enumerate() {
                let count = attr_mismatches(u, v, m)?;
                sub.push((!rigid || i == j).then_some(count));
            }
        }
        let edges_of = |g: &SceneGraph| {
            let ids = g.node_ids();
            let mut out = Vec::with_capacity(ids.len() * ids.len());
            for &a in &ids {
                for &b in &ids {
                    out.push(g.edge(a, b));
                }
            }
            out
        };
        Ok(Problem { n1, n2, model: *m, sub, e1: edges_of(g1), e2: edges_of(g2) })
    }

    #[inline]
    pub fn sub(&self, i: usize, j: usize) -> Option<u32> {
        self.sub[i * self.n2 + j]
    }

    /// Edge mismatches added by mapping `g1[k] -> g2[j]` given earlier assignments.
    #[inline]
    pub fn edge_mismatches(&self, assigned: &[Option<u8>], k: usize, j: usize) -> u32 {
        let mut n = 0;
        for (i, a) in assigned.iter().enumerate() {
            if let Some(jp) = *a {
                let e1 = self.e1[i * self.n1 + k];
                let e2 = self.e2[jp as usize * self.n2 + j];
                if self.model.edge_differs(e1, e2) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Recomputes the distance of explicit node pairs from scratch.
pub fn recompute_cost(
    g1: &SceneGraph,
    g2: &SceneGraph,
    pairs: &[(NodeId, NodeId)],
    m: &CostModel,
) -> Result<f64, GedError> {
    let p = Problem::new(g1, g2, m)?;
    let index = |g: &SceneGraph, id: NodeId| {
        g.nodes().iter().position(|n| n.id == id).ok_or_else(|| GedError::InvalidMatching(format!("unknown node {id}")))
    };
    let mut assigned: Vec<Option<u8>> = vec![None; p.n1];
    let mut used = vec![false; p.n2];
    for &(a, b) in pairs {
        let (i, j) = (index(g1, a)?, index(g2, b)?);
        if assigned[i].is_some() || used[j] {
            return Err(GedError::InvalidMatching(format!("pair ({a}, {b}) is not injective")));
        }
        assigned[i] = Some(j as u8);
        used[j] = true;
    }
    let mut counts = Counts::default();
    for k in 0..p.n1 {
        match assigned[k] {
            None => counts.deleted += 1,
            Some(j) => {
                let j = j as usize;
                counts.attrs += p
                    .sub(k, j)
                    .ok_or_else(|| GedError::InvalidMatching(format!("grid cells {k} and {j} cannot be matched")))?;
                counts.edges += p.edge_mismatches(&assigned[..k], k, j);
            }
        }
    }
    counts.inserted = used.iter().filter(|u| !**u).count() as u32;
    Ok(m.total(&counts))
}

/// Slot-aligned distance between grid graphs: nodes are matched by cell.
pub fn ged_aligned(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<f64, GedError> {
    if g1.variant() != Variant::Grid || g2.variant() != Variant::Grid {
        return Err(GedError::NotGrid);
    }
    let mut attrs = 0;
    for (u, v) in g1.nodes().iter().zip(g2.nodes()) {
        attrs += attr_mismatches(u, v, m)?;
    }
    Ok(m.total(&Counts { attrs, ..Counts::default() }))
}

/// Distance used for scoring and retrieval: aligned for grid graphs, A* otherwise.
pub fn ged(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<f64, GedError> {
    match g1.variant() {
        Variant::Grid => ged_aligned(g1, g2, m),
        Variant::Relational => ged_astar(g1, g2, m).map(|(d, _)| d),
    }
}

/// Like [`ged`], but returns `None` as soon as the distance provably exceeds `bound`.
pub fn ged_within(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel, bound: f64) -> Result<Option<f64>, GedError> {
    match g1.variant() {
        Variant::Grid => ged_aligned(g1, g2, m).map(|d| (d <= bound).then_some(d)),
        Variant::Relational => {
            let opts = AStarOptions { bound: Some(bound), ..AStarOptions::default() };
            Ok(ged_astar_with(g1, g2, m, opts)?.map(|(d, _)| d))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_grid_graph, RelationLabel, Value};

    #[test]
    fn attribute_costs() {
        let css = CostModel::css();
        let red = AttrValue::Concrete(Value::Red);
        let blue = AttrValue::Concrete(Value::Blue);
        assert_eq!(attr_cost(red, red, &css), 0.0);
        assert_eq!(attr_cost(red, blue, &css), 1.0 / 3.0);
        assert_eq!(attr_cost(AttrValue::Wildcard, blue, &css), 0.0);
        assert_eq!(attr_cost(AttrValue::Wildcard, AttrValue::Null, &css), 1.0 / 3.0);
        assert_eq!(attr_cost(red, AttrValue::Null, &css), 1.0 / 3.0);
        let strict = CostModel { wildcard_matches: false, ..css };
        assert_eq!(attr_cost(AttrValue::Wildcard, blue, &strict), 1.0 / 3.0);
    }

    #[test]
    fn node_costs() {
        let css = CostModel::css();
        let a = ObjectNode::object(0, &[Value::Cube, Value::Small, Value::Red], None);
        let b = ObjectNode::object(1, &[Value::Sphere, Value::Large, Value::Blue], None);
        assert_eq!(node_substitution_cost(&a, &a, &css).unwrap(), 0.0);
        let by_sum: f64 = (0..3).map(|_| 1.0 / 3.0).sum();
        assert_eq!(node_substitution_cost(&a, &b, &css).unwrap(), by_sum);

        let crir = CostModel::crir();
        let c = ObjectNode::object(0, &[Value::Cube, Value::Small, Value::Red, Value::Metal], None);
        let d = ObjectNode::object(1, &[Value::Cube, Value::Small, Value::Red, Value::Rubber], None);
        assert_eq!(node_substitution_cost(&c, &d, &crir).unwrap(), 0.25);
        assert_eq!(node_substitution_cost(&a, &c, &crir), Err(GedError::SchemaMismatch { a: 0, b: 0 }));
    }

    #[test]
    fn edge_costs() {
        let crir = CostModel::crir();
        let lf = EdgeLabels { lateral: Some(RelationLabel::Left), depth: Some(RelationLabel::Front) };
        let rf = EdgeLabels { lateral: Some(RelationLabel::Right), depth: Some(RelationLabel::Front) };
        let rb = EdgeLabels { lateral: Some(RelationLabel::Right), depth: Some(RelationLabel::Behind) };
        assert_eq!(edge_substitution_cost(Some(lf), Some(lf), &crir), 0.0);
        assert_eq!(edge_substitution_cost(Some(lf), Some(rf), &crir), 1.0 / 16.0);
        assert_eq!(edge_substitution_cost(Some(EdgeLabels::WILDCARD), Some(rb), &crir), 0.0);
    }

    fn grid(objects: &[(usize, [Value; 3])]) -> SceneGraph {
        let centers = [
            [-2.0, 3.0],
            [0.0, 3.0],
            [2.0, 3.0],
            [-2.0, 1.0],
            [0.0, 1.0],
            [2.0, 1.0],
            [-2.0, -1.0],
            [0.0, -1.0],
            [2.0, -1.0],
        ];
        build_grid_graph(
            objects
                .iter()
                .enumerate()
                .map(|(i, (cell, v))| {
                    ObjectNode::object(i as NodeId, v, Some([centers[*cell][0], centers[*cell][1], 0.5]))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn aligned_examples() {
        use Value::*;
        let css = CostModel::css();
        let g = grid(&[(0, [Cube, Small, Red]), (4, [Sphere, Large, Blue])]);
        assert_eq!(ged_aligned(&g, &g, &css).unwrap(), 0.0);
        let one = grid(&[(0, [Cube, Small, Green]), (4, [Sphere, Large, Blue])]);
        assert_eq!(ged_aligned(&g, &one, &css).unwrap(), 1.0 / 3.0);
        let two = grid(&[(0, [Cylinder, Large, Blue]), (4, [Cube, Small, Red])]);
        assert_eq!(ged_aligned(&g, &two, &css).unwrap(), 2.0);
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::crir().validate().is_ok());
        let bad = CostModel { edge_substitution: -0.5, ..CostModel::crir() };
        assert!(matches!(bad.validate(), Err(GedError::InvalidCost(_))));
    }
}
