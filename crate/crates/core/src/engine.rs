//! Stack-machine executor for edit programs.
//!
//! The machine keeps a stack of attention sets (node-id sets). Tokens run in
//! reverse emission order, so the edit token runs last and applies to the top
//! attention set. Relational `add` programs run in add mode: a pseudo-node is
//! created up front with wildcard edges to every node, and each relate token
//! whose result feeds the add directly (possibly through an intersect) fixes
//! one axis of the pseudo-node's edge to its referent instead of filtering.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{validate_for_variant, DslError, Program, ProgramToken};
use crate::scene::{AttrValue, NodeId, ObjectNode, SceneGraph, Variant};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    Illegal(#[from] DslError),
    #[error("token {index}: relate needs exactly one referent, attention holds {size}")]
    RelateNotSingleton { index: usize, size: usize },
    #[error("token {index}: intersect needs two attention sets on the stack")]
    StackUnderflow { index: usize },
}

/// Recoverable failures at the edit token. The input graph is returned
/// unmodified so the outcome can still be scored.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    #[error("token {index}: edit applied to an empty attention set")]
    EmptyAttention { index: usize },
    #[error("token {index}: grid add needs a single attended cell, attention holds {size}")]
    AmbiguousAddTarget { index: usize, size: usize },
    #[error("token {index}: the pseudo-node is not attended at the add")]
    AddTargetNotAttended { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    /// Position of the token in emission order.
    pub index: usize,
    pub token: String,
    pub attended: Vec<NodeId>,
    pub delta: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub graph: SceneGraph,
    pub trace: ExecutionTrace,
    pub mode: Mode,
    pub fault: Option<Fault>,
}

impl Execution {
    /// Attention at the last executed token.
    pub fn final_attention(&self) -> Option<&[NodeId]> {
        self.trace.steps.last().map(|s| s.attended.as_slice())
    }
}

type Attention = BTreeSet<NodeId>;

struct Machine {
    graph: SceneGraph,
    stack: Vec<Attention>,
    pseudo: Option<NodeId>,
    anchors: BTreeSet<usize>,
    trace: ExecutionTrace,
}

impl Machine {
    fn real_nodes(&self) -> Attention {
        self.graph.nodes().iter().map(|n| n.id).filter(|id| Some(*id) != self.pseudo).collect()
    }

    fn top_mut(&mut self) -> &mut Attention {
        self.stack.last_mut().expect("attention stack is never empty")
    }

    fn top(&self) -> &Attention {
        self.stack.last().expect("attention stack is never empty")
    }

    fn record(&mut self, index: usize, token: &ProgramToken, delta: String) {
        let attended = self.top().iter().copied().collect();
        self.trace.steps.push(TraceStep { index, token: token.to_string(), attended, delta });
    }

    fn step(&mut self, index: usize, token: &ProgramToken) -> Result<(), ExecError> {
        let delta = match token {
            ProgramToken::Scene => {
                let all = self.real_nodes();
                self.stack.push(all);
                String::new()
            }
            ProgramToken::Filter(v) => {
                let attr = v.attribute();
                let graph = &self.graph;
                let kept: Attention = self
                    .top()
                    .iter()
                    .copied()
                    .filter(|id| graph.node(*id).is_some_and(|n| n.get(attr).admits(*v)))
                    .collect();
                *self.top_mut() = kept;
                String::new()
            }
            ProgramToken::Location(cell) => {
                let id = self.graph.nodes()[cell.index()].id;
                *self.top_mut() = BTreeSet::from([id]);
                String::new()
            }
            ProgramToken::Relate(dir) => {
                let referent = match self.top().len() {
                    1 => *self.top().first().expect("singleton"),
                    size => return Err(ExecError::RelateNotSingleton { index, size }),
                };
                match self.pseudo.filter(|_| self.anchors.contains(&index)) {
                    Some(p) => {
                        self.graph.assign_relation(p, referent, *dir);
                        *self.top_mut() = BTreeSet::from([p]);
                        format!("edge ({p}, {referent}) <- {dir}")
                    }
                    None => {
                        let related: Attention = self
                            .real_nodes()
                            .into_iter()
                            .filter(|w| self.graph.edge(*w, referent).is_some_and(|e| e.contains(*dir)))
                            .collect();
                        *self.top_mut() = related;
                        String::new()
                    }
                }
            }
            ProgramToken::Intersect => {
                if self.stack.len() < 2 {
                    return Err(ExecError::StackUnderflow { index });
                }
                let b = self.stack.pop().expect("checked");
                let a = self.stack.pop().expect("checked");
                self.stack.push(a.intersection(&b).copied().collect());
                String::new()
            }
            ProgramToken::NullPad | ProgramToken::Remove | ProgramToken::Add(_) | ProgramToken::Make(_) => {
                unreachable!("edit and padding tokens are handled by the caller")
            }
        };
        self.record(index, token, delta);
        Ok(())
    }

    /// Applies the edit token; `Err` carries a fault and leaves the input untouched.
    fn edit(&mut self, index: usize, token: &ProgramToken) -> Result<String, Fault> {
        let attended = self.top().clone();
        let variant = self.graph.variant();
        if let (ProgramToken::Add(_), Variant::Relational) = (token, variant) {
            let p = self.pseudo.expect("add mode creates the pseudo-node");
            if !attended.contains(&p) {
                return Err(Fault::AddTargetNotAttended { index });
            }
            return Ok(format!("added pseudo-node {p}"));
        }
        if attended.is_empty() {
            return Err(Fault::EmptyAttention { index });
        }
        let schema = variant.schema();
        match token {
            ProgramToken::Remove => match variant {
                Variant::Grid => {
                    for id in &attended {
                        let node = self.graph.node_mut(*id).expect("attended nodes exist");
                        for &a in schema {
                            node.set(a, AttrValue::Null);
                        }
                        node.position = None;
                    }
                    Ok(format!("cleared {:?}", attended))
                }
                Variant::Relational => {
                    self.graph.remove_nodes(&attended);
                    Ok(format!("removed {:?} and incident edges", attended))
                }
            },
            ProgramToken::Make(v) => {
                for id in &attended {
                    self.graph.node_mut(*id).expect("attended nodes exist").set(v.attribute(), AttrValue::Concrete(*v));
                }
                Ok(format!("set {}={} on {:?}", v.attribute(), v, attended))
            }
            ProgramToken::Add(payload) => {
                if attended.len() != 1 {
                    return Err(Fault::AmbiguousAddTarget { index, size: attended.len() });
                }
                let id = *attended.first().expect("singleton");
                let node = self.graph.node_mut(id).expect("attended nodes exist");
                for &a in schema {
                    let value = payload.get(a).map_or(AttrValue::Wildcard, AttrValue::Concrete);
                    node.set(a, value);
                }
                Ok(format!("wrote cell {id}"))
            }
            _ => unreachable!("not an edit token"),
        }
    }
}

/// Emission indices of relate tokens whose result reaches the add token
/// directly or through intersects.
fn anchor_relates(body: &[ProgramToken]) -> BTreeSet<usize> {
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for i in (1..body.len()).rev() {
        match &body[i] {
            ProgramToken::Scene => frontier.push(vec![i]),
            ProgramToken::Intersect => {
                if frontier.len() < 2 {
                    return BTreeSet::new();
                }
                let b = frontier.pop().expect("checked");
                let mut a = frontier.pop().expect("checked");
                a.extend(b);
                frontier.push(a);
            }
            _ => *frontier.last_mut().expect("non-empty") = vec![i],
        }
    }
    frontier
        .pop()
        .unwrap_or_default()
        .into_iter()
        .filter(|&i| matches!(body[i], ProgramToken::Relate(_)))
        .collect()
}

/// Runs `program` over a private copy of `graph`.
pub fn execute(program: &Program, graph: &SceneGraph) -> Result<Execution, ExecError> {
    validate_for_variant(program, graph.variant())?;
    let body = program.body();
    let mut working = graph.clone();
    let mut mode = Mode::Normal;
    let mut pseudo = None;
    let mut anchors = BTreeSet::new();
    if let (Some(ProgramToken::Add(payload)), Variant::Relational) = (body.first(), graph.variant()) {
        mode = Mode::Add;
        let id = working.next_id();
        let mut node = ObjectNode::empty(id, graph.variant().schema());
        for &a in graph.variant().schema() {
            node.set(a, payload.get(a).map_or(AttrValue::Wildcard, AttrValue::Concrete));
        }
        working.push_unlinked_node(node);
        pseudo = Some(id);
        anchors = anchor_relates(body);
    }
    let initial = match pseudo {
        Some(p) => BTreeSet::from([p]),
        None => working.node_ids().into_iter().collect(),
    };
    let mut m = Machine { graph: working, stack: vec![initial], pseudo, anchors, trace: ExecutionTrace::default() };

    for index in (0..body.len()).rev() {
        let token = &body[index];
        if !token.is_edit() {
            m.step(index, token)?;
            continue;
        }
        match m.edit(index, token) {
            Ok(delta) => m.record(index, token, delta),
            Err(fault) => {
                m.record(index, token, format!("no-op: {fault}"));
                return Ok(Execution { graph: graph.clone(), trace: m.trace, mode, fault: Some(fault) });
            }
        }
    }
    Ok(Execution { graph: m.graph, trace: m.trace, mode, fault: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::scene::{build_grid_graph, build_relational_graph, Attribute, RelationLabel, Value};

    fn crir(id: NodeId, values: [Value; 4], x: f64, y: f64) -> ObjectNode {
        ObjectNode::object(id, &values, Some([x, y, 0.5]))
    }

    fn overview_scene() -> SceneGraph {
        use Value::*;
        build_relational_graph(vec![
            crir(0, [Sphere, Small, Purple, Rubber], 0.0, 0.0),
            crir(1, [Cube, Large, Gray, Metal], 1.5, 0.5),
            crir(2, [Cube, Large, Green, Rubber], -1.5, 1.0),
            crir(3, [Cylinder, Small, Red, Metal], 2.5, -1.0),
        ])
        .unwrap()
    }

    #[test]
    fn all_padding_is_identity() {
        let g = overview_scene();
        let out = execute(&parse_program("NULL").unwrap(), &g).unwrap();
        assert_eq!(out.graph, g);
        assert!(out.trace.is_empty());
        assert!(out.fault.is_none());
    }

    #[test]
    fn overview_program_removes_cube_right_of_purple() {
        let g = overview_scene();
        let p = parse_program("remove, filter_size[large], filter_shape[cube], relate[right], filter_color[purple]")
            .unwrap();
        let out = execute(&p, &g).unwrap();
        assert_eq!(out.graph.node_ids(), vec![0, 2, 3]);
        assert_eq!(out.graph.edges().len(), 6);
        assert!(out.graph.edges().keys().all(|(a, b)| *a != 1 && *b != 1));
        assert_eq!(out.trace.len(), 5);
        assert_eq!(out.trace.steps[3].attended, vec![1]);
    }

    #[test]
    fn grid_add_writes_wildcard_for_unassigned() {
        let g = build_grid_graph(vec![ObjectNode::object(
            0,
            &[Value::Sphere, Value::Large, Value::Red],
            Some([0.0, 0.0, 0.7]),
        )])
        .unwrap();
        let p = parse_program("add[size=small, shape=cube], location[TL]").unwrap();
        let out = execute(&p, &g).unwrap();
        let tl = &out.graph.nodes()[0];
        assert_eq!(tl.get(Attribute::Shape), AttrValue::Concrete(Value::Cube));
        assert_eq!(tl.get(Attribute::Size), AttrValue::Concrete(Value::Small));
        assert_eq!(tl.get(Attribute::Color), AttrValue::Wildcard);
        assert_eq!(out.graph.len(), 9);
        assert!(out.graph.edges().is_empty());
    }

    #[test]
    fn relational_add_anchors_one_edge() {
        let g = overview_scene();
        let p = parse_program("add[large,red,sphere], relate[left], filter_color[gray], scene").unwrap();
        let out = execute(&p, &g).unwrap();
        assert_eq!(out.mode, Mode::Add);
        assert!(out.fault.is_none());
        assert_eq!(out.graph.len(), 5);
        let pseudo = 4;
        let e = out.graph.edge(pseudo, 1).unwrap();
        assert_eq!(e.lateral, Some(RelationLabel::Left));
        assert_eq!(e.depth, None);
        assert_eq!(out.graph.edge(1, pseudo).unwrap().lateral, Some(RelationLabel::Right));
        assert_eq!(out.graph.edge(pseudo, 0).unwrap(), crate::scene::EdgeLabels::WILDCARD);
        assert_eq!(out.graph.node(pseudo).unwrap().get(Attribute::Material), AttrValue::Wildcard);
    }

    #[test]
    fn add_anchors_through_intersect_and_not_inner_hops() {
        let body = parse_program(
            "add[cube], intersect, relate[left], filter_color[red], scene, relate[front], filter_shape[sphere], scene",
        )
        .unwrap();
        assert_eq!(anchor_relates(body.body()), BTreeSet::from([2, 5]));
        let two_hop =
            parse_program("add[cube], relate[left], filter_color[red], relate[front], filter_shape[sphere], scene")
                .unwrap();
        assert_eq!(anchor_relates(two_hop.body()), BTreeSet::from([1]));
    }

    #[test]
    fn empty_attention_is_a_soft_fault() {
        let g = overview_scene();
        let p = parse_program("remove, filter_color[yellow], scene").unwrap();
        let out = execute(&p, &g).unwrap();
        assert_eq!(out.fault, Some(Fault::EmptyAttention { index: 0 }));
        assert_eq!(out.graph, g);
    }

    #[test]
    fn hard_errors() {
        let g = overview_scene();
        let p = parse_program("remove, relate[left], filter_size[large]").unwrap();
        assert_eq!(execute(&p, &g), Err(ExecError::RelateNotSingleton { index: 1, size: 2 }));
        let p = parse_program("remove, intersect").unwrap();
        assert_eq!(execute(&p, &g), Err(ExecError::StackUnderflow { index: 1 }));
        let p = parse_program("remove, location[TL]").unwrap();
        assert!(matches!(execute(&p, &g), Err(ExecError::Illegal(_))));
    }

    #[test]
    fn make_sets_one_attribute() {
        let g = overview_scene();
        let p = parse_program("make[yellow], filter_shape[cylinder], scene").unwrap();
        let out = execute(&p, &g).unwrap();
        assert_eq!(out.graph.node(3).unwrap().get(Attribute::Color), AttrValue::Concrete(Value::Yellow));
        assert_eq!(out.graph.node(3).unwrap().get(Attribute::Shape), AttrValue::Concrete(Value::Cylinder));
        assert_eq!(out.graph.edges(), g.edges());
    }
}
