#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use sged::scene::{
    build_grid_graph, build_relational_graph, AttrValue, Attribute, EdgeLabels, ObjectNode, SceneGraph, Value,
    Variant,
};

/// Random value for `attr`, drawn from the first `width` choices so that
/// random pairs share values often.
pub fn value<R: Rng>(rng: &mut R, attr: Attribute, width: usize) -> Value {
    let vals = attr.values();
    vals[rng.gen_range(0..width.min(vals.len()))]
}

pub fn object<R: Rng>(rng: &mut R, id: u32, variant: Variant, width: usize, pos: [f64; 3]) -> ObjectNode {
    let values: Vec<Value> = variant.schema().iter().map(|&a| value(rng, a, width)).collect();
    ObjectNode::object(id, &values, Some(pos))
}

/// Relational graph with `n` objects at distinct coordinates. With
/// `wildcard`, the last node becomes a pseudo-node: some attributes
/// wildcarded, no position, wildcard edges.
pub fn relational<R: Rng>(rng: &mut R, n: usize, width: usize, wildcard: bool) -> SceneGraph {
    let mut xs: Vec<i32> = (-6..=6).collect();
    let mut ys = xs.clone();
    xs.shuffle(rng);
    ys.shuffle(rng);
    let mut ids: Vec<u32> = (0..10).collect();
    ids.shuffle(rng);
    let objects: Vec<ObjectNode> = (0..n)
        .map(|i| object(rng, ids[i], Variant::Relational, width, [xs[i] as f64 * 0.5, ys[i] as f64 * 0.5, 0.35]))
        .collect();
    if !wildcard || n == 0 {
        return build_relational_graph(objects).unwrap();
    }
    let g = build_relational_graph(objects[..n - 1].to_vec()).unwrap();
    let mut pseudo = objects[n - 1].clone();
    pseudo.position = None;
    for a in Attribute::ALL {
        if rng.gen_bool(0.5) {
            pseudo.attrs.insert(a, AttrValue::Wildcard);
        }
    }
    let mut edges: BTreeMap<(u32, u32), EdgeLabels> = g.edges().clone();
    for other in g.nodes() {
        edges.insert((pseudo.id, other.id), EdgeLabels::WILDCARD);
        edges.insert((other.id, pseudo.id), EdgeLabels::WILDCARD);
    }
    let mut nodes = g.nodes().to_vec();
    nodes.push(pseudo);
    SceneGraph::from_parts(Variant::Relational, nodes, edges).unwrap()
}

/// Position inside grid cell `cell` (row-major from the top-left).
pub fn cell_position(cell: usize) -> [f64; 3] {
    let x = [-2.0, 0.0, 2.0][cell % 3];
    let y = [3.0, 1.0, -1.5][cell / 3];
    [x, y, 0.35]
}

/// Grid scene with `n` objects in random distinct cells.
pub fn grid<R: Rng>(rng: &mut R, n: usize, width: usize) -> SceneGraph {
    let mut cells: Vec<usize> = (0..9).collect();
    cells.shuffle(rng);
    let objects = (0..n).map(|i| object(rng, i as u32, Variant::Grid, width, cell_position(cells[i]))).collect();
    build_grid_graph(objects).unwrap()
}
