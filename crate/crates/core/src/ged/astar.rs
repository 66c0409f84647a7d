//! Exact best-first search over partial node assignments.
//!
//! `g1` nodes are assigned in a fixed order, each to an unused `g2` node or
//! to deletion; once every `g1` node is placed, the remaining `g2` nodes are
//! inserted. The heuristic lower-bounds the node terms of the unassigned
//! remainder and ignores edge terms, which are nonnegative.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Counts, CostModel, GedError, Matching, Problem};
use crate::scene::SceneGraph;

/// Slack for float noise in `g + h` when comparing against a found goal or a bound.
const EPS: f64 = 1e-9;
const MAX_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    #[default]
    Admissible,
    Zero,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AStarOptions {
    pub heuristic: Heuristic,
    /// Give up on any branch whose estimate exceeds this distance.
    pub bound: Option<f64>,
}

struct State {
    assigned: Vec<Option<u8>>,
    used: u64,
    counts: Counts,
    complete: bool,
}

struct Entry {
    f: f64,
    unassigned: usize,
    seq: u64,
    state: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // BinaryHeap is a max-heap: reverse so the smallest f pops first, then
    // the deepest state, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.unassigned.cmp(&self.unassigned))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn heuristic(p: &Problem, state: &State) -> f64 {
    let k = state.assigned.len();
    let unassigned = p.n1 - k;
    let unused = p.n2 - state.used.count_ones() as usize;
    let m = &p.model;
    let mut h = 0.0;
    for i in k..p.n1 {
        let best = (0..p.n2)
            .filter(|j| state.used & (1 << j) == 0)
            .filter_map(|j| p.sub(i, j))
            .min()
            .map_or(f64::INFINITY, |n| m.total(&Counts { attrs: n, ..Counts::default() }));
        h += best.min(m.node_delete);
    }
    h + unused.saturating_sub(unassigned) as f64 * m.node_insert
}

fn root_state() -> State {
    State { assigned: Vec::new(), used: 0, counts: Counts::default(), complete: false }
}

fn check_size(g1: &SceneGraph, g2: &SceneGraph) -> Result<(), GedError> {
    if g1.len() > MAX_NODES || g2.len() > MAX_NODES {
        return Err(GedError::TooLarge { n1: g1.len(), n2: g2.len(), limit: MAX_NODES });
    }
    Ok(())
}

/// Root heuristic value: a lower bound on the distance, cheap to compute.
pub fn lower_bound(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<f64, GedError> {
    check_size(g1, g2)?;
    let p = Problem::new(g1, g2, m)?;
    Ok(heuristic(&p, &root_state()))
}

pub fn ged_astar(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<(f64, Matching), GedError> {
    Ok(ged_astar_with(g1, g2, m, AStarOptions::default())?.expect("unbounded search always finds a matching"))
}

/// A* with options; `Ok(None)` only when a bound is set and exceeded.
pub fn ged_astar_with(
    g1: &SceneGraph,
    g2: &SceneGraph,
    m: &CostModel,
    opts: AStarOptions,
) -> Result<Option<(f64, Matching)>, GedError> {
    check_size(g1, g2)?;
    let p = Problem::new(g1, g2, m)?;
    let limit = opts.bound.map_or(f64::INFINITY, |b| b + EPS);

    let mut arena: Vec<State> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |state: State, arena: &mut Vec<State>, heap: &mut BinaryHeap<Entry>| {
        let h = match (state.complete, opts.heuristic) {
            (true, _) | (_, Heuristic::Zero) => 0.0,
            (false, Heuristic::Admissible) => heuristic(&p, &state),
        };
        let f = p.model.total(&state.counts) + h;
        if f > limit {
            return;
        }
        heap.push(Entry { f, unassigned: p.n1 - state.assigned.len(), seq, state: arena.len() });
        seq += 1;
        arena.push(state);
    };

    let finish = |mut s: State| {
        if s.assigned.len() == p.n1 {
            s.counts.inserted = (p.n2 - s.used.count_ones() as usize) as u32;
            s.complete = true;
        }
        s
    };
    push(finish(root_state()), &mut arena, &mut heap);

    let mut best: Option<(f64, usize)> = None;
    while let Some(entry) = heap.pop() {
        if let Some((cost, _)) = best {
            if entry.f > cost + EPS {
                break;
            }
        }
        let state = &arena[entry.state];
        if state.complete {
            let cost = p.model.total(&state.counts);
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, entry.state));
            }
            continue;
        }
        let k = state.assigned.len();
        let mut children = Vec::with_capacity(p.n2 + 1);
        for j in 0..p.n2 {
            if state.used & (1 << j) != 0 {
                continue;
            }
            let Some(attrs) = p.sub(k, j) else { continue };
            let mut counts = state.counts;
            counts.attrs += attrs;
            counts.edges += p.edge_mismatches(&state.assigned, k, j);
            let mut assigned = state.assigned.clone();
            assigned.push(Some(j as u8));
            children.push(State { assigned, used: state.used | (1 << j), counts, complete: false });
        }
        let mut counts = state.counts;
        counts.deleted += 1;
        let mut assigned = state.assigned.clone();
        assigned.push(None);
        children.push(State { assigned, used: state.used, counts, complete: false });
        for child in children {
            push(finish(child), &mut arena, &mut heap);
        }
    }

    Ok(best.map(|(cost, idx)| {
        let state = &arena[idx];
        let ids1 = g1.node_ids();
        let ids2 = g2.node_ids();
        let mut pairs = Vec::new();
        let mut deleted = Vec::new();
        for (i, a) in state.assigned.iter().enumerate() {
            match a {
                Some(j) => pairs.push((ids1[i], ids2[*j as usize])),
                None => deleted.push(ids1[i]),
            }
        }
        let inserted = (0..p.n2).filter(|j| state.used & (1 << j) == 0).map(|j| ids2[j]).collect();
        (cost, Matching { pairs, deleted, inserted, total_cost: cost })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ged::recompute_cost;
    use crate::scene::{build_relational_graph, ObjectNode, Value};

    fn scene(objs: &[([Value; 4], f64, f64)]) -> SceneGraph {
        build_relational_graph(
            objs.iter()
                .enumerate()
                .map(|(i, (v, x, y))| ObjectNode::object(i as u32, v, Some([*x, *y, 0.5])))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_single_deletion() {
        use Value::*;
        let crir = CostModel::crir();
        let g1 = scene(&[
            ([Cube, Large, Red, Metal], 0.0, 0.0),
            ([Sphere, Small, Blue, Rubber], 1.0, 2.0),
            ([Cylinder, Large, Green, Metal], -1.0, 1.0),
        ]);
        let (d, m) = ged_astar(&g1, &g1, &crir).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);

        let g2 = scene(&[([Cube, Large, Red, Metal], 0.0, 0.0), ([Sphere, Small, Blue, Rubber], 1.0, 2.0)]);
        let (d, m) = ged_astar(&g1, &g2, &crir).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(m.deleted, vec![2]);
        assert_eq!(recompute_cost(&g1, &g2, &m.pairs, &crir).unwrap(), d);
    }

    #[test]
    fn bound_cuts_off() {
        use Value::*;
        let crir = CostModel::crir();
        let g1 = scene(&[([Cube, Large, Red, Metal], 0.0, 0.0)]);
        let g2 = scene(&[([Sphere, Small, Blue, Rubber], 0.0, 0.0)]);
        let opts = AStarOptions { bound: Some(0.5), ..Default::default() };
        assert!(ged_astar_with(&g1, &g2, &crir, opts).unwrap().is_none());
        let opts = AStarOptions { bound: Some(1.0), ..Default::default() };
        assert_eq!(ged_astar_with(&g1, &g2, &crir, opts).unwrap().unwrap().0, 1.0);
    }

    #[test]
    fn empty_graphs() {
        let crir = CostModel::crir();
        let e = scene(&[]);
        assert_eq!(ged_astar(&e, &e, &crir).unwrap().0, 0.0);
    }
}
