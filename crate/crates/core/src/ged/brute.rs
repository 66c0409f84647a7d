//! Enumeration oracle: every injective partial map from `g1` to `g2`.

use super::{Counts, CostModel, GedError, Problem};
use crate::scene::SceneGraph;

pub const BRUTEFORCE_MAX_NODES: usize = 6;

pub fn ged_bruteforce(g1: &SceneGraph, g2: &SceneGraph, m: &CostModel) -> Result<f64, GedError> {
    if g1.len() > BRUTEFORCE_MAX_NODES || g2.len() > BRUTEFORCE_MAX_NODES {
        return Err(GedError::TooLarge { n1: g1.len(), n2: g2.len(), limit: BRUTEFORCE_MAX_NODES });
    }
    let p = Problem::new(g1, g2, m)?;
    let mut best = f64::INFINITY;
    let mut assigned = Vec::with_capacity(p.n1);
    enumerate(&p, &mut assigned, 0, Counts::default(), &mut best);
    Ok(best)
}

fn enumerate(p: &Problem, assigned: &mut Vec<Option<u8>>, used: u64, counts: Counts, best: &mut f64) {
    let k = assigned.len();
    if k == p.n1 {
        let mut done = counts;
        done.inserted = (p.n2 - used.count_ones() as usize) as u32;
        let cost = p.model.total(&done);
        if cost < *best {
            *best = cost;
        }
        return;
    }
    for j in 0..p.n2 {
        if used & (1 << j) != 0 {
            continue;
        }
        let Some(attrs) = p.sub(k, j) else { continue };
        let mut next = counts;
        next.attrs += attrs;
        next.edges += p.edge_mismatches(assigned, k, j);
        assigned.push(Some(j as u8));
        enumerate(p, assigned, used | (1 << j), next, best);
        assigned.pop();
    }
    let mut next = counts;
    next.deleted += 1;
    assigned.push(None);
    enumerate(p, assigned, used, next, best);
    assigned.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_relational_graph, ObjectNode, Value};

    #[test]
    fn empty_and_singleton() {
        let crir = CostModel::crir();
        let empty = build_relational_graph(vec![]).unwrap();
        assert_eq!(ged_bruteforce(&empty, &empty, &crir).unwrap(), 0.0);
        let one = build_relational_graph(vec![ObjectNode::object(
            0,
            &[Value::Cube, Value::Small, Value::Red, Value::Metal],
            Some([0.0, 0.0, 0.0]),
        )])
        .unwrap();
        assert_eq!(ged_bruteforce(&one, &empty, &crir).unwrap(), 1.0);
        assert_eq!(ged_bruteforce(&empty, &one, &crir).unwrap(), 1.0);
    }

    #[test]
    fn size_guard() {
        let crir = CostModel::crir();
        let big = build_relational_graph(
            (0..7)
                .map(|i| {
                    ObjectNode::object(
                        i,
                        &[Value::Cube, Value::Small, Value::Red, Value::Metal],
                        Some([i as f64, i as f64, 0.0]),
                    )
                })
                .collect(),
        )
        .unwrap();
        assert!(matches!(ged_bruteforce(&big, &big, &crir), Err(GedError::TooLarge { .. })));
    }
}
