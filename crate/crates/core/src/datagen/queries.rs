//! Query templates: referent chains, English rendering and gold programs.
//!
//! A chain names the edited object through a sequence of uniquely
//! described referents. The same chain renders both the text and the gold
//! program, so the two always agree.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::dsl::{AddPayload, Cell, Program, ProgramToken};
use crate::engine::execute;
use crate::scene::{AttrValue, Attribute, NodeId, RelationLabel, SceneGraph, Value, Variant};

const CHAIN_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    ZeroHop,
    OneHop,
    TwoHop,
    ThreeHop,
    SingleAnd,
}

impl Template {
    pub const ALL: [Template; 5] =
        [Template::ZeroHop, Template::OneHop, Template::TwoHop, Template::ThreeHop, Template::SingleAnd];

    pub fn name(self) -> &'static str {
        match self {
            Template::ZeroHop => "zero_hop",
            Template::OneHop => "one_hop",
            Template::TwoHop => "two_hop",
            Template::ThreeHop => "three_hop",
            Template::SingleAnd => "single_and",
        }
    }

    /// Relate tokens in the gold program.
    pub fn hops(self) -> usize {
        match self {
            Template::ZeroHop => 0,
            Template::OneHop => 1,
            Template::TwoHop => 2,
            Template::ThreeHop => 3,
            Template::SingleAnd => 2,
        }
    }

    /// Templates a variant supports: grid scenes have no relations.
    pub fn for_variant(variant: Variant) -> &'static [Template] {
        match variant {
            Variant::Grid => &Template::ALL[..1],
            Variant::Relational => &Template::ALL,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown template {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditType {
    Add,
    Remove,
    Make,
}

impl EditType {
    pub const ALL: [EditType; 3] = [EditType::Add, EditType::Remove, EditType::Make];

    pub fn name(self) -> &'static str {
        match self {
            EditType::Add => "add",
            EditType::Remove => "remove",
            EditType::Make => "make",
        }
    }
}

impl fmt::Display for EditType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    pub max_len: usize,
    /// Attributes `make` queries may change.
    pub make_attributes: Vec<Attribute>,
}

/// Mentioned attribute values, in the order they are spoken.
#[derive(Debug, Clone, PartialEq)]
struct Desc(Vec<Value>);

const TEXT_ORDER: [Attribute; 4] = [Attribute::Size, Attribute::Color, Attribute::Material, Attribute::Shape];

impl Desc {
    fn phrase(&self) -> String {
        let mut words: Vec<&str> = self.0.iter().map(|v| v.label()).collect();
        if !self.0.iter().any(|v| v.attribute() == Attribute::Shape) {
            words.push("object");
        }
        words.join(" ")
    }

    fn filters(&self) -> impl Iterator<Item = ProgramToken> + '_ {
        self.0.iter().map(|&v| ProgramToken::Filter(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Hop {
    relation: RelationLabel,
    node: NodeId,
    desc: Desc,
}

#[derive(Debug, Clone, PartialEq)]
enum Referent {
    /// `steps[0]` relates the target to the first anchor, `steps[1]` that
    /// anchor to the next, and so on.
    Hops(Vec<Hop>),
    And(Hop, Hop),
    Cell(Cell),
}

#[derive(Debug, Clone, PartialEq)]
struct Chain {
    target: NodeId,
    desc: Desc,
    referent: Referent,
}

fn relation_phrase(r: RelationLabel) -> &'static str {
    match r {
        RelationLabel::Left => "left of",
        RelationLabel::Right => "right of",
        RelationLabel::Front => "in front of",
        RelationLabel::Behind => "behind",
    }
}

impl Chain {
    /// Everything after the target's own description.
    fn context_phrase(&self) -> String {
        match &self.referent {
            Referent::Hops(steps) => {
                steps.iter().map(|h| format!(" {} the {}", relation_phrase(h.relation), h.desc.phrase())).collect()
            }
            Referent::And(a, b) => format!(
                " that is {} the {} and {} the {}",
                relation_phrase(a.relation),
                a.desc.phrase(),
                relation_phrase(b.relation),
                b.desc.phrase()
            ),
            Referent::Cell(c) => format!(" at the {}", c.phrase()),
        }
    }

    fn reference(&self) -> String {
        format!("the {}{}", self.desc.phrase(), self.context_phrase())
    }

    fn add_text(&self) -> String {
        match &self.referent {
            Referent::Cell(c) => format!("add a {} to the {}", self.desc.phrase(), c.phrase()),
            _ => format!("add a {}{}", self.desc.phrase(), self.context_phrase()),
        }
    }

    /// Tokens in execution order up to (not including) the target's own
    /// filters. In add mode a zero-hop chain executes nothing at all.
    fn referent_execution(&self, add_mode: bool) -> Vec<ProgramToken> {
        let mut out = Vec::new();
        match &self.referent {
            Referent::Hops(steps) => {
                if steps.is_empty() {
                    if !add_mode {
                        out.push(ProgramToken::Scene);
                    }
                    return out;
                }
                out.push(ProgramToken::Scene);
                for h in steps.iter().rev() {
                    out.extend(h.desc.filters());
                    out.push(ProgramToken::Relate(h.relation));
                }
            }
            Referent::And(a, b) => {
                for h in [a, b] {
                    out.push(ProgramToken::Scene);
                    out.extend(h.desc.filters());
                    out.push(ProgramToken::Relate(h.relation));
                }
                out.push(ProgramToken::Intersect);
            }
            Referent::Cell(c) => out.push(ProgramToken::Location(*c)),
        }
        out
    }

    fn program(&self, edit: ProgramToken, max_len: usize) -> Result<Program, DatasetError> {
        let add_mode = matches!(edit, ProgramToken::Add(_));
        let mut exec = self.referent_execution(add_mode);
        if !add_mode && !matches!(self.referent, Referent::Cell(_)) {
            exec.extend(self.desc.filters());
        }
        exec.push(edit);
        exec.reverse();
        Program::new(exec, max_len).map_err(|_| DatasetError::NoReferentChain)
    }

    fn payload(&self) -> AddPayload {
        AddPayload::new(self.desc.0.clone()).expect("descriptions mention each attribute once")
    }
}

/// Objects related to `anchor` by `r` (so `r` holds from each of them to the anchor).
fn related(g: &SceneGraph, r: RelationLabel, anchor: NodeId) -> BTreeSet<NodeId> {
    g.nodes().iter().map(|n| n.id).filter(|&w| g.edge(w, anchor).is_some_and(|e| e.contains(r))).collect()
}

fn real_objects(g: &SceneGraph) -> BTreeSet<NodeId> {
    g.nodes().iter().filter(|n| !n.is_empty_cell()).map(|n| n.id).collect()
}

/// Smallest non-empty description that singles out `obj` among `candidates`,
/// chosen at random among descriptions of that size.
fn minimal_desc<R: Rng>(g: &SceneGraph, obj: NodeId, candidates: &BTreeSet<NodeId>, rng: &mut R) -> Option<Desc> {
    let schema = g.variant().schema();
    let order: Vec<Attribute> = TEXT_ORDER.into_iter().filter(|a| schema.contains(a)).collect();
    let node = g.node(obj)?;
    let value_of = |a: Attribute| match node.get(a) {
        AttrValue::Concrete(v) => Some(v),
        _ => None,
    };
    for size in 1..=order.len() {
        let options: Vec<Vec<Attribute>> = (0u32..1 << order.len())
            .filter(|m| m.count_ones() as usize == size)
            .map(|m| (0..order.len()).filter(|i| m & (1 << i) != 0).map(|i| order[i]).collect::<Vec<_>>())
            .filter(|attrs| {
                candidates.iter().filter(|&&w| w != obj).all(|&w| {
                    let other = g.node(w).expect("candidate exists");
                    attrs.iter().any(|&a| other.get(a) != node.get(a))
                })
            })
            .collect();
        if let Some(attrs) = options.choose(rng) {
            return attrs.iter().map(|&a| value_of(a)).collect::<Option<Vec<_>>>().map(Desc);
        }
    }
    None
}

fn sample_hops<R: Rng>(g: &SceneGraph, hops: usize, rng: &mut R) -> Option<Chain> {
    let all = real_objects(g);
    if all.len() < hops + 1 {
        return None;
    }
    let target = *all.iter().choose(rng)?;
    let mut nodes = vec![target];
    let mut relations = Vec::new();
    for _ in 0..hops {
        let prev = *nodes.last().expect("non-empty");
        let next = *all.iter().filter(|w| !nodes.contains(w)).choose(rng)?;
        let labels: Vec<RelationLabel> = g.edge(prev, next)?.labels().into_iter().collect();
        relations.push(*labels.choose(rng)?);
        nodes.push(next);
    }
    // Describe from the innermost anchor outwards.
    let mut descs = vec![None; hops + 1];
    descs[hops] = Some(minimal_desc(g, nodes[hops], &all, rng)?);
    for i in (0..hops).rev() {
        let candidates = related(g, relations[i], nodes[i + 1]);
        descs[i] = Some(minimal_desc(g, nodes[i], &candidates, rng)?);
    }
    let mut descs = descs.into_iter().map(|d| d.expect("filled"));
    let desc = descs.next().expect("target");
    let steps =
        descs.zip(relations).zip(&nodes[1..]).map(|((desc, relation), &node)| Hop { relation, node, desc }).collect();
    Some(Chain { target, desc, referent: Referent::Hops(steps) })
}

fn sample_and<R: Rng>(g: &SceneGraph, rng: &mut R) -> Option<Chain> {
    let all = real_objects(g);
    let picked: Vec<NodeId> = all.iter().copied().choose_multiple(rng, 3);
    if picked.len() < 3 {
        return None;
    }
    let mut picked = picked;
    picked.shuffle(rng);
    let (target, a, b) = (picked[0], picked[1], picked[2]);
    let hop = |anchor: NodeId, rng: &mut R| -> Option<Hop> {
        let labels: Vec<RelationLabel> = g.edge(target, anchor)?.labels().into_iter().collect();
        let relation = *labels.choose(rng)?;
        Some(Hop { relation, node: anchor, desc: minimal_desc(g, anchor, &all, rng)? })
    };
    let ha = hop(a, rng)?;
    let hb = hop(b, rng)?;
    let candidates: BTreeSet<NodeId> =
        related(g, ha.relation, a).intersection(&related(g, hb.relation, b)).copied().collect();
    let desc = minimal_desc(g, target, &candidates, rng)?;
    Some(Chain { target, desc, referent: Referent::And(ha, hb) })
}

/// Grid chains name the cell; the description is a random non-empty
/// subset of the object's attributes and only decorates the text.
fn sample_cell<R: Rng>(g: &SceneGraph, rng: &mut R) -> Option<Chain> {
    let target = *real_objects(g).iter().choose(rng)?;
    let node = g.node(target)?;
    let schema = g.variant().schema();
    let mask = rng.gen_range(1u32..1 << schema.len());
    let values = TEXT_ORDER
        .iter()
        .filter_map(|a| schema.iter().position(|s| s == a).map(|i| (i, *a)))
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, a)| match node.get(a) {
            AttrValue::Concrete(v) => Some(v),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Chain { target, desc: Desc(values), referent: Referent::Cell(Cell::from_index(target as usize)?) })
}

fn sample_chain<R: Rng>(g: &SceneGraph, template: Template, rng: &mut R) -> Option<Chain> {
    match (g.variant(), template) {
        (Variant::Grid, Template::ZeroHop) => sample_cell(g, rng),
        (Variant::Grid, _) => None,
        (Variant::Relational, Template::SingleAnd) => sample_and(g, rng),
        (Variant::Relational, t) => sample_hops(g, t.hops(), rng),
    }
}

/// A generated query over `input`, before ids are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuery {
    pub template: Template,
    pub edit_type: EditType,
    pub text: String,
    pub gold: Program,
    pub input: SceneGraph,
    pub target: SceneGraph,
    /// The edited object in the input scene, or the pseudo-node for relational adds.
    pub referent: NodeId,
    chain: Chain,
}

impl GeneratedQuery {
    /// Rewrites a remove query as the add query that undoes it: the scenes
    /// swap and the added object carries the attributes the text mentioned.
    pub fn to_add(&self) -> Option<GeneratedQuery> {
        if self.edit_type != EditType::Remove {
            return None;
        }
        let gold = self.chain.program(ProgramToken::Add(self.chain.payload()), self.gold.max_len()).ok()?;
        let referent = match self.input.variant() {
            Variant::Grid => self.chain.target,
            Variant::Relational => self.target.next_id(),
        };
        Some(GeneratedQuery {
            template: self.template,
            edit_type: EditType::Add,
            text: self.chain.add_text(),
            gold,
            input: self.target.clone(),
            target: self.input.clone(),
            referent,
            chain: self.chain.clone(),
        })
    }
}

/// Samples a query of the given template and edit type over `scene`.
/// `Err(NoReferentChain)` means the scene admits none; resample the scene.
pub fn generate_query<R: Rng>(
    template: Template,
    edit_type: EditType,
    scene: &SceneGraph,
    rng: &mut R,
    opts: &QueryOptions,
) -> Result<GeneratedQuery, DatasetError> {
    if edit_type == EditType::Add {
        return generate_query(template, EditType::Remove, scene, rng, opts)?
            .to_add()
            .ok_or(DatasetError::NoReferentChain);
    }
    let schema = scene.variant().schema();
    let makeable: Vec<Attribute> = opts.make_attributes.iter().copied().filter(|a| schema.contains(a)).collect();
    if edit_type == EditType::Make && makeable.is_empty() {
        return Err(DatasetError::Config("no make attribute fits the scene schema".into()));
    }
    for _ in 0..CHAIN_ATTEMPTS {
        let Some(chain) = sample_chain(scene, template, rng) else { continue };
        let (edit, text) = match edit_type {
            EditType::Remove => (ProgramToken::Remove, format!("remove {}", chain.reference())),
            _ => {
                let attr = *makeable.choose(rng).expect("non-empty");
                let current = scene.node(chain.target).expect("target exists").get(attr);
                let value = *attr
                    .values()
                    .iter()
                    .filter(|v| AttrValue::Concrete(**v) != current)
                    .copied()
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .expect("every attribute has two or more values");
                (ProgramToken::Make(value), format!("make {} {}", chain.reference(), value))
            }
        };
        let Ok(gold) = chain.program(edit, opts.max_len) else { continue };
        if edit_type == EditType::Remove && chain.program(ProgramToken::Add(chain.payload()), opts.max_len).is_err() {
            continue;
        }
        let run = execute(&gold, scene).map_err(|e| DatasetError::SelfCheck(format!("{text}: {e}")))?;
        if let Some(fault) = run.fault {
            return Err(DatasetError::SelfCheck(format!("{text}: {fault}")));
        }
        return Ok(GeneratedQuery {
            template,
            edit_type,
            text,
            gold,
            input: scene.clone(),
            target: run.graph,
            referent: chain.target,
            chain,
        });
    }
    Err(DatasetError::NoReferentChain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::DEFAULT_MAX_LEN;
    use crate::scene::{build_relational_graph, ObjectNode};
    use crate::{rng_for, Preset};

    fn opts() -> QueryOptions {
        QueryOptions { max_len: DEFAULT_MAX_LEN, make_attributes: Preset::Crir.variant().schema().to_vec() }
    }

    fn scene() -> SceneGraph {
        use Value::*;
        build_relational_graph(vec![
            ObjectNode::object(0, &[Cube, Large, Purple, Metal], Some([0.0, 0.0, 0.7])),
            ObjectNode::object(1, &[Cube, Small, Purple, Rubber], Some([1.0, 1.0, 0.35])),
            ObjectNode::object(2, &[Sphere, Large, Purple, Rubber], Some([-1.0, 2.0, 0.7])),
            ObjectNode::object(3, &[Cylinder, Small, Green, Metal], Some([2.0, -1.0, 0.35])),
        ])
        .unwrap()
    }

    #[test]
    fn minimal_descriptions() {
        let g = scene();
        let all = real_objects(&g);
        let mut rng = rng_for(0, 0);
        // The green cylinder is unique by color or shape alone.
        let d = minimal_desc(&g, 3, &all, &mut rng).unwrap();
        assert_eq!(d.0.len(), 1);
        // The large purple cube needs two attributes.
        let d = minimal_desc(&g, 0, &all, &mut rng).unwrap();
        assert_eq!(d.0.len(), 2);
        assert_eq!(Desc(vec![Value::Large, Value::Purple, Value::Cube]).phrase(), "large purple cube");
        assert_eq!(Desc(vec![Value::Metal]).phrase(), "metal object");
    }

    #[test]
    fn zero_hop_remove_program_shape() {
        let chain = Chain {
            target: 0,
            desc: Desc(vec![Value::Large, Value::Purple, Value::Cube]),
            referent: Referent::Hops(vec![]),
        };
        let p = chain.program(ProgramToken::Remove, DEFAULT_MAX_LEN).unwrap();
        assert_eq!(
            p.to_string(),
            "remove, filter_shape[cube], filter_color[purple], filter_size[large], scene"
        );
        assert_eq!(format!("remove {}", chain.reference()), "remove the large purple cube");
        let add = chain.program(ProgramToken::Add(chain.payload()), DEFAULT_MAX_LEN).unwrap();
        assert_eq!(add.to_string(), "add[cube,large,purple]");
    }

    #[test]
    fn one_hop_matches_engine() {
        let g = scene();
        for seed in 0..20 {
            let q = generate_query(Template::OneHop, EditType::Remove, &g, &mut rng_for(seed, 0), &opts()).unwrap();
            assert_eq!(q.gold.body().iter().filter(|t| matches!(t, ProgramToken::Relate(_))).count(), 1);
            assert_eq!(q.target.len(), 3);
            assert!(q.target.node(q.referent).is_none());
            let add = q.to_add().unwrap();
            assert!(add.text.starts_with("add a "));
            assert_eq!(add.input, q.target);
        }
    }

    #[test]
    fn make_ends_with_value() {
        let g = scene();
        let q = generate_query(Template::TwoHop, EditType::Make, &g, &mut rng_for(3, 0), &opts()).unwrap();
        let Some(ProgramToken::Make(v)) = q.gold.edit() else { panic!("make expected") };
        assert!(q.text.ends_with(v.label()));
        assert_eq!(q.target.len(), 4);
    }
}
