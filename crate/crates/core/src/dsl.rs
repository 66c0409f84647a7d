//! Edit-program tokens, program listings, and query tokenization.
//!
//! Programs are emitted edit-token first and executed in reverse, so a
//! listing reads like the query: `remove, filter_shape[cube], relate[right],
//! filter_color[purple], scene` removes the cube to the right of the purple
//! object.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scene::{Attribute, RelationLabel, Value, Variant};

pub const DEFAULT_MAX_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DslError {
    #[error("token {index}: unknown opcode {text:?}")]
    UnknownOpcode { index: usize, text: String },
    #[error("token {index}: {opcode} does not accept argument {arg:?}")]
    BadArgument { index: usize, opcode: Opcode, arg: String },
    #[error("token {index}: {opcode} has empty argument brackets")]
    EmptyArgument { index: usize, opcode: Opcode },
    #[error("token {index}: {opcode} requires an argument")]
    MissingArgument { index: usize, opcode: Opcode },
    #[error("token {index}: {opcode} takes no argument")]
    UnexpectedArgument { index: usize, opcode: Opcode },
    #[error("token {index}: unbalanced brackets in {text:?}")]
    Brackets { index: usize, text: String },
    #[error("tokens {first} and {second} are both edit tokens")]
    MultipleEdits { first: usize, second: usize },
    #[error("token {index}: the edit token must come first")]
    MisplacedEdit { index: usize },
    #[error("token {index}: NULL padding must be a trailing suffix")]
    PadNotSuffix { index: usize },
    #[error("program has {len} tokens, maximum is {max}")]
    TooLong { len: usize, max: usize },
    #[error("token {index}: {token} is not legal for {variant} scenes")]
    IllegalToken { index: usize, token: String, variant: Variant },
    #[error("tokens {first} and {second}: at most one location per program")]
    MultipleLocations { first: usize, second: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Scene,
    FilterShape,
    FilterSize,
    FilterColor,
    FilterMaterial,
    Relate,
    Location,
    Intersect,
    Remove,
    Add,
    Make,
    NullPad,
}

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Scene => "scene",
            Opcode::FilterShape => "filter_shape",
            Opcode::FilterSize => "filter_size",
            Opcode::FilterColor => "filter_color",
            Opcode::FilterMaterial => "filter_material",
            Opcode::Relate => "relate",
            Opcode::Location => "location",
            Opcode::Intersect => "intersect",
            Opcode::Remove => "remove",
            Opcode::Add => "add",
            Opcode::Make => "make",
            Opcode::NullPad => "NULL",
        }
    }

    fn from_name(name: &str) -> Option<Opcode> {
        Some(match name.to_ascii_lowercase().as_str() {
            "scene" => Opcode::Scene,
            "filter_shape" => Opcode::FilterShape,
            "filter_size" => Opcode::FilterSize,
            "filter_color" => Opcode::FilterColor,
            "filter_material" => Opcode::FilterMaterial,
            "relate" => Opcode::Relate,
            "location" => Opcode::Location,
            "intersect" => Opcode::Intersect,
            "remove" => Opcode::Remove,
            "add" => Opcode::Add,
            "make" => Opcode::Make,
            "null" => Opcode::NullPad,
            _ => return None,
        })
    }

    fn filter_of(attr: Attribute) -> Opcode {
        match attr {
            Attribute::Shape => Opcode::FilterShape,
            Attribute::Size => Opcode::FilterSize,
            Attribute::Color => Opcode::FilterColor,
            Attribute::Material => Opcode::FilterMaterial,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the nine grid cells, row-major from the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    TL,
    TM,
    TR,
    ML,
    MM,
    MR,
    BL,
    BM,
    BR,
}

impl Cell {
    pub const ALL: [Cell; 9] = [Cell::TL, Cell::TM, Cell::TR, Cell::ML, Cell::MM, Cell::MR, Cell::BL, Cell::BM, Cell::BR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Cell> {
        Cell::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        ["TL", "TM", "TR", "ML", "MM", "MR", "BL", "BM", "BR"][self.index()]
    }

    /// Words used in query text, e.g. "top-left".
    pub fn phrase(self) -> &'static str {
        [
            "top-left",
            "top-middle",
            "top-right",
            "middle-left",
            "center",
            "middle-right",
            "bottom-left",
            "bottom-middle",
            "bottom-right",
        ][self.index()]
    }

    fn parse(arg: &str) -> Option<Cell> {
        let code: String = arg.chars().filter(|c| *c != '-').collect::<String>().to_ascii_uppercase();
        Cell::ALL.iter().copied().find(|c| c.code() == code)
    }
}

/// Attribute values carried by an add token, at most one per attribute,
/// kept in attribute order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AddPayload(Vec<Value>);

impl AddPayload {
    pub fn new(mut values: Vec<Value>) -> Result<Self, Value> {
        values.sort();
        for w in values.windows(2) {
            if w[0].attribute() == w[1].attribute() {
                return Err(w[1]);
            }
        }
        Ok(AddPayload(values))
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, attr: Attribute) -> Option<Value> {
        self.0.iter().copied().find(|v| v.attribute() == attr)
    }

    /// Every payload over `schema`, including the empty one.
    pub fn all(schema: &[Attribute]) -> Vec<AddPayload> {
        let mut out = vec![Vec::new()];
        for &attr in schema {
            let mut next = Vec::new();
            for prefix in &out {
                next.push(prefix.clone());
                for &v in attr.values() {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(|v| AddPayload::new(v).expect("one value per attribute")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProgramToken {
    Scene,
    Filter(Value),
    Relate(RelationLabel),
    Location(Cell),
    Intersect,
    Remove,
    Add(AddPayload),
    Make(Value),
    NullPad,
}

impl ProgramToken {
    pub fn opcode(&self) -> Opcode {
        match self {
            ProgramToken::Scene => Opcode::Scene,
            ProgramToken::Filter(v) => Opcode::filter_of(v.attribute()),
            ProgramToken::Relate(_) => Opcode::Relate,
            ProgramToken::Location(_) => Opcode::Location,
            ProgramToken::Intersect => Opcode::Intersect,
            ProgramToken::Remove => Opcode::Remove,
            ProgramToken::Add(_) => Opcode::Add,
            ProgramToken::Make(_) => Opcode::Make,
            ProgramToken::NullPad => Opcode::NullPad,
        }
    }

    pub fn is_edit(&self) -> bool {
        matches!(self, ProgramToken::Remove | ProgramToken::Add(_) | ProgramToken::Make(_))
    }

    /// Attributes this token reads or writes, for schema checks.
    fn attributes(&self) -> Vec<Attribute> {
        match self {
            ProgramToken::Filter(v) | ProgramToken::Make(v) => vec![v.attribute()],
            ProgramToken::Add(p) => p.values().iter().map(|v| v.attribute()).collect(),
            _ => Vec::new(),
        }
    }

    /// Every token legal for `variant`, add tokens included (one per payload).
    pub fn all_for(variant: Variant) -> Vec<ProgramToken> {
        let schema = variant.schema();
        let mut out = vec![ProgramToken::Scene];
        for &a in schema {
            out.extend(a.values().iter().map(|&v| ProgramToken::Filter(v)));
        }
        match variant {
            Variant::Grid => out.extend(Cell::ALL.iter().map(|&c| ProgramToken::Location(c))),
            Variant::Relational => out.extend(RelationLabel::ALL.iter().map(|&r| ProgramToken::Relate(r))),
        }
        out.push(ProgramToken::Intersect);
        out.push(ProgramToken::Remove);
        for &a in schema {
            out.extend(a.values().iter().map(|&v| ProgramToken::Make(v)));
        }
        out.extend(AddPayload::all(schema).into_iter().map(ProgramToken::Add));
        out.push(ProgramToken::NullPad);
        out
    }

    fn parse(index: usize, text: &str) -> Result<ProgramToken, DslError> {
        let text = text.trim();
        let (name, arg) = match text.find('[') {
            Some(open) => {
                if !text.ends_with(']') || text[open + 1..text.len() - 1].contains(['[', ']']) {
                    return Err(DslError::Brackets { index, text: text.into() });
                }
                (&text[..open], Some(text[open + 1..text.len() - 1].trim()))
            }
            None => {
                if text.contains(']') {
                    return Err(DslError::Brackets { index, text: text.into() });
                }
                (text, None)
            }
        };
        let opcode =
            Opcode::from_name(name.trim()).ok_or_else(|| DslError::UnknownOpcode { index, text: name.trim().into() })?;
        if arg == Some("") {
            return Err(DslError::EmptyArgument { index, opcode });
        }
        let bad = |arg: &str| DslError::BadArgument { index, opcode, arg: arg.into() };
        let no_arg = |tok: ProgramToken| match arg {
            Some(_) => Err(DslError::UnexpectedArgument { index, opcode }),
            None => Ok(tok),
        };
        let need_arg = || arg.ok_or(DslError::MissingArgument { index, opcode });
        match opcode {
            Opcode::Scene => no_arg(ProgramToken::Scene),
            Opcode::Intersect => no_arg(ProgramToken::Intersect),
            Opcode::Remove => no_arg(ProgramToken::Remove),
            Opcode::NullPad => no_arg(ProgramToken::NullPad),
            Opcode::FilterShape | Opcode::FilterSize | Opcode::FilterColor | Opcode::FilterMaterial => {
                let a = need_arg()?;
                match Value::from_label(&a.to_ascii_lowercase()) {
                    Some(v) if Opcode::filter_of(v.attribute()) == opcode => Ok(ProgramToken::Filter(v)),
                    _ => Err(bad(a)),
                }
            }
            Opcode::Make => {
                let a = need_arg()?;
                Value::from_label(&a.to_ascii_lowercase()).map(ProgramToken::Make).ok_or_else(|| bad(a))
            }
            Opcode::Relate => {
                let a = need_arg()?;
                RelationLabel::from_label(&a.to_ascii_lowercase()).map(ProgramToken::Relate).ok_or_else(|| bad(a))
            }
            Opcode::Location => {
                let a = need_arg()?;
                Cell::parse(a).map(ProgramToken::Location).ok_or_else(|| bad(a))
            }
            Opcode::Add => {
                let values = match arg {
                    None => Vec::new(),
                    Some(a) => a
                        .split(',')
                        .map(|part| {
                            let part = part.trim();
                            let part = part.split_once('=').map_or(part, |(_, v)| v.trim());
                            Value::from_label(&part.to_ascii_lowercase()).ok_or_else(|| bad(a))
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                };
                AddPayload::new(values).map(ProgramToken::Add).map_err(|v| bad(v.label()))
            }
        }
    }
}

impl fmt::Display for ProgramToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.opcode();
        match self {
            ProgramToken::Filter(v) | ProgramToken::Make(v) => write!(f, "{op}[{v}]"),
            ProgramToken::Relate(r) => write!(f, "{op}[{r}]"),
            ProgramToken::Location(c) => write!(f, "{op}[{}]", c.code()),
            ProgramToken::Add(p) if p.values().is_empty() => f.write_str("add"),
            ProgramToken::Add(p) => {
                let labels: Vec<&str> = p.values().iter().map(|v| v.label()).collect();
                write!(f, "add[{}]", labels.join(","))
            }
            _ => f.write_str(op.name()),
        }
    }
}

/// A fixed-length token sequence: at most one edit token, which comes first,
/// followed by attention tokens and a contiguous `NULL` padding suffix.
impl FromStr for ProgramToken {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProgramToken::parse(0, s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    tokens: Vec<ProgramToken>,
}

impl Program {
    /// Validates structure and pads to `max_len`.
    pub fn new(mut tokens: Vec<ProgramToken>, max_len: usize) -> Result<Program, DslError> {
        if tokens.len() > max_len {
            return Err(DslError::TooLong { len: tokens.len(), max: max_len });
        }
        let body_len = tokens.iter().position(|t| *t == ProgramToken::NullPad).unwrap_or(tokens.len());
        if let Some(i) = tokens[body_len..].iter().position(|t| *t != ProgramToken::NullPad) {
            return Err(DslError::PadNotSuffix { index: body_len + i });
        }
        let mut edit: Option<usize> = None;
        for (i, t) in tokens[..body_len].iter().enumerate() {
            if t.is_edit() {
                if let Some(first) = edit {
                    return Err(DslError::MultipleEdits { first, second: i });
                }
                edit = Some(i);
            }
        }
        if let Some(i) = edit.filter(|&i| i != 0) {
            return Err(DslError::MisplacedEdit { index: i });
        }
        tokens.resize(max_len, ProgramToken::NullPad);
        Ok(Program { tokens })
    }

    pub fn empty(max_len: usize) -> Program {
        Program { tokens: vec![ProgramToken::NullPad; max_len] }
    }

    pub fn parse(text: &str, max_len: usize) -> Result<Program, DslError> {
        let mut tokens = Vec::new();
        for (index, piece) in split_listing(text).into_iter().enumerate() {
            if piece.trim().is_empty() {
                return Err(DslError::UnknownOpcode { index, text: String::new() });
            }
            tokens.push(ProgramToken::parse(index, &piece)?);
        }
        Program::new(tokens, max_len)
    }

    /// All tokens including padding.
    pub fn tokens(&self) -> &[ProgramToken] {
        &self.tokens
    }

    /// The non-padding prefix.
    pub fn body(&self) -> &[ProgramToken] {
        let n = self.tokens.iter().position(|t| *t == ProgramToken::NullPad).unwrap_or(self.tokens.len());
        &self.tokens[..n]
    }

    pub fn max_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn edit(&self) -> Option<&ProgramToken> {
        self.body().first().filter(|t| t.is_edit())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = self.body();
        if body.is_empty() {
            return f.write_str("NULL");
        }
        for (i, t) in body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Splits a listing on commas and newlines outside brackets.
fn split_listing(text: &str) -> Vec<String> {
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '[' => {
                depth += 1;
                current.push(c);
            }
            ']' => {
                depth -= 1;
                current.push(c);
            }
            ',' | '\n' if depth <= 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    out.push(current);
    out
}

pub fn parse_program(text: &str) -> Result<Program, DslError> {
    Program::parse(text, DEFAULT_MAX_LEN)
}

/// Checks every token against the scene variant: grid scenes have no edges
/// and no material, relational scenes have no fixed locations.
pub fn validate_for_variant(p: &Program, variant: Variant) -> Result<(), DslError> {
    let schema = variant.schema();
    let mut location: Option<usize> = None;
    for (index, t) in p.body().iter().enumerate() {
        let illegal = match t {
            ProgramToken::Relate(_) => variant == Variant::Grid,
            ProgramToken::Location(_) => variant == Variant::Relational,
            _ => t.attributes().iter().any(|a| !schema.contains(a)),
        };
        if illegal {
            return Err(DslError::IllegalToken { index, token: t.to_string(), variant });
        }
        if let ProgramToken::Location(_) = t {
            if let Some(first) = location {
                return Err(DslError::MultipleLocations { first, second: index });
            }
            location = Some(index);
        }
    }
    Ok(())
}

/// Lowercases and splits on anything that is not a letter or digit.
pub fn tokenize_query(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}
