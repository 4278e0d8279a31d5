//! The `.morph` text format.
//!
//! ```text
//! morphfile 1
//! structure team {
//!   scale 3
//!   component L { alt L1 priority 2  alt L2 priority 1 "senior" }
//!   component R { alt R0 priority 1 }
//!   node S = L * R
//!   compat L1 R0 = 2
//! }
//! network stages chain {
//!   point t0 uses team
//!   point t1 uses team
//!   edge t0 -> t1
//! }
//! ```
//!
//! Newlines carry no meaning; `#` starts a comment. References are `id` or
//! `owner.id`; an unqualified reference must resolve to exactly one item.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    AnalysisPoint, Arc, CompatInsertError, CompatTable, CompatValue, Component, CompositeNode,
    DeclaredSolution, DeclaredTrajectory, DesignAlternative, ItemRef, MorphPoint, MorphStructure, NetNode,
    PointSolution, ShapeHint, TopLevelNetwork,
};

pub const FORMAT_VERSION: u32 = 1;
const DEFAULT_SCALE: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn at(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }
}

/// All errors of one parse, in source order.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MorphDocument {
    pub structures: BTreeMap<String, MorphStructure>,
    pub networks: BTreeMap<String, TopLevelNetwork>,
}

/// A compatibility value flagged as assumed rather than sourced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assumption {
    /// `structure/node` or `network`.
    pub context: String,
    pub a: ItemRef,
    pub b: ItemRef,
    pub value: u32,
    pub note: Option<String>,
}

impl MorphDocument {
    pub fn structure(&self, name: &str) -> Option<&MorphStructure> {
        self.structures.get(name)
    }

    pub fn network(&self, name: &str) -> Option<&TopLevelNetwork> {
        self.networks.get(name)
    }

    pub fn assumptions(&self) -> Vec<Assumption> {
        let mut out = Vec::new();
        let mut take = |context: String, t: &CompatTable| {
            for (a, b, v) in t.entries() {
                if v.assumed {
                    out.push(Assumption {
                        context: context.clone(),
                        a: a.clone(),
                        b: b.clone(),
                        value: v.value,
                        note: v.note.clone(),
                    });
                }
            }
        };
        for s in self.structures.values() {
            for (node, t) in &s.compat {
                take(format!("{}/{}", s.name, node), t);
            }
        }
        for n in self.networks.values() {
            take(n.name.clone(), &n.compat);
        }
        out
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    LBrace,
    RBrace,
    Eq,
    Star,
    Dot,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eof => f.write_str("end of file"),
        }
    }
}

fn lex(text: &str, errors: &mut Vec<ParseError>) -> Vec<(Tok, Pos)> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' | '}' | '=' | '*' | '.' => {
                bump!();
                out.push((
                    match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '=' => Tok::Eq,
                        '*' => Tok::Star,
                        _ => Tok::Dot,
                    },
                    pos,
                ));
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push((Tok::Arrow, pos));
                } else {
                    errors.push(ParseError::at(pos, "expected `->`"));
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                let mut closed = false;
                while let Some(c) = bump!() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match bump!() {
                            Some('n') => s.push('\n'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            Some(c) => {
                                s.push('\\');
                                s.push(c)
                            }
                            None => break,
                        },
                        '\n' => break,
                        c => s.push(c),
                    }
                }
                if closed {
                    out.push((Tok::Str(s), pos));
                } else {
                    errors.push(ParseError::at(pos, "unterminated string"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_alphanumeric() && d != '_' {
                        break;
                    }
                    s.push(d);
                    bump!();
                }
                match s.parse::<u64>() {
                    Ok(n) => out.push((Tok::Int(n), pos)),
                    Err(_) => errors.push(ParseError::at(pos, format!("invalid number `{s}`"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_alphanumeric() && d != '_' {
                        break;
                    }
                    s.push(d);
                    bump!();
                }
                out.push((Tok::Ident(s), pos));
            }
            other => {
                bump!();
                errors.push(ParseError::at(pos, format!("unexpected character {other:?}")));
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    out
}

// ---------------------------------------------------------------- raw syntax

#[derive(Clone, Debug)]
struct RawRef {
    owner: Option<String>,
    item: String,
    pos: Pos,
}

impl fmt::Display for RawRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.owner {
            Some(o) => write!(f, "{o}.{}", self.item),
            None => f.write_str(&self.item),
        }
    }
}

#[derive(Debug)]
struct RawCompat {
    a: RawRef,
    b: RawRef,
    value: u32,
    value_pos: Pos,
    assumed: bool,
    note: Option<String>,
}

#[derive(Debug)]
struct RawDeclared {
    name: String,
    items: Vec<RawRef>,
    priority: Option<u32>,
}

#[derive(Debug, Default)]
struct RawStructure {
    name: String,
    pos: Pos,
    scale: Option<u32>,
    partial: bool,
    components: Vec<Component>,
    nodes: Vec<CompositeNode>,
    /// Where each child of a node was written.
    child_refs: Vec<(String, Pos)>,
    compat: Vec<RawCompat>,
    solutions: Vec<(String, Pos, Vec<RawDeclared>)>,
}

#[derive(Debug)]
struct RawPoint {
    id: String,
    structure: String,
    structure_pos: Pos,
    solutions: Vec<(PointSolution, Vec<(String, Pos)>)>,
}

#[derive(Debug)]
enum RawNode {
    Point(RawPoint),
    Analysis(String),
}

#[derive(Debug)]
struct RawNetwork {
    name: String,
    pos: Pos,
    shape: ShapeHint,
    scale: Option<u32>,
    root: Option<String>,
    nodes: Vec<RawNode>,
    arcs: Vec<Arc>,
    compat: Vec<RawCompat>,
    trajectories: Vec<(String, Vec<RawBinding>)>,
}

/// `point = solution` inside a trajectory block, with both positions.
type RawBinding = (String, Pos, String, Pos);

impl Default for Pos {
    fn default() -> Self {
        Pos { line: 1, col: 1 }
    }
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    errors: Vec<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

const STRUCTURE_STMTS: &[&str] = &["scale", "partial", "component", "node", "compat", "solutions"];
const NETWORK_STMTS: &[&str] = &[
    "scale",
    "root",
    "point",
    "analysis",
    "edge",
    "compat",
    "trajectory",
];
const TOP_STMTS: &[&str] = &["structure", "network", "morphfile"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> ParseError {
        ParseError::at(self.pos(), format!("expected {what}, found {}", self.peek()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<Pos> {
        if self.peek() == &t {
            Ok(self.next().1)
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let p = self.next().1;
                Ok((s, p))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn int(&mut self) -> PResult<(u32, Pos)> {
        match *self.peek() {
            Tok::Int(n) => {
                let p = self.next().1;
                u32::try_from(n)
                    .map(|n| (n, p))
                    .map_err(|_| ParseError::at(p, "number too large"))
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn opt_string(&mut self) -> Option<String> {
        if let Tok::Str(s) = self.peek().clone() {
            self.next();
            Some(s)
        } else {
            None
        }
    }

    fn reference(&mut self) -> PResult<RawRef> {
        let (first, pos) = self.ident()?;
        if self.eat(&Tok::Dot) {
            let (item, _) = self.ident()?;
            Ok(RawRef {
                owner: Some(first),
                item,
                pos,
            })
        } else {
            Ok(RawRef {
                owner: None,
                item: first,
                pos,
            })
        }
    }

    /// Skips to the next statement keyword of the enclosing block, or to
    /// its closing brace.
    fn recover(&mut self, keywords: &[&str]) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.next();
                        if keywords.iter().any(|k| self.is_kw(k)) {
                            return;
                        }
                        continue;
                    }
                }
                Tok::Ident(s) if depth == 0 && keywords.contains(&s.as_str()) => return,
                _ => {}
            }
            self.next();
        }
    }

    /// Runs `stmt` for each statement until the closing brace.
    fn block<F>(&mut self, keywords: &[&str], mut stmt: F) -> PResult<()>
    where
        F: FnMut(&mut Self) -> PResult<()>,
    {
        self.expect(Tok::LBrace)?;
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.next();
                    return Ok(());
                }
                Tok::Eof => return Err(self.unexpected("`}`")),
                _ => {
                    let before = self.at;
                    if let Err(e) = stmt(self) {
                        self.errors.push(e);
                        if self.at == before {
                            self.next();
                        }
                        self.recover(keywords);
                    }
                }
            }
        }
    }

    fn compat_stmt(&mut self) -> PResult<RawCompat> {
        self.expect_kw("compat")?;
        let a = self.reference()?;
        let b = self.reference()?;
        self.expect(Tok::Eq)?;
        let (value, value_pos) = self.int()?;
        let assumed = self.eat_kw("assumed");
        let note = if assumed { self.opt_string() } else { None };
        Ok(RawCompat {
            a,
            b,
            value,
            value_pos,
            assumed,
            note,
        })
    }

    fn structure(&mut self) -> PResult<RawStructure> {
        let pos = self.pos();
        self.expect_kw("structure")?;
        let (name, _) = self.ident()?;
        let mut s = RawStructure {
            name,
            pos,
            ..RawStructure::default()
        };
        self.block(STRUCTURE_STMTS, |p| {
            match p.peek() {
                Tok::Ident(k) if k == "scale" => {
                    p.next();
                    s.scale = Some(p.int()?.0);
                }
                Tok::Ident(k) if k == "partial" => {
                    p.next();
                    s.partial = true;
                }
                Tok::Ident(k) if k == "component" => {
                    p.next();
                    let (id, _) = p.ident()?;
                    let mut alts = Vec::new();
                    p.block(&["alt"], |p| {
                        p.expect_kw("alt")?;
                        let (aid, _) = p.ident()?;
                        p.expect_kw("priority")?;
                        let (prio, _) = p.int()?;
                        let mut a = DesignAlternative::new(aid, prio);
                        a.label = p.opt_string();
                        alts.push(a);
                        Ok(())
                    })?;
                    s.components.push(Component::new(id, alts));
                }
                Tok::Ident(k) if k == "node" => {
                    p.next();
                    let (id, _) = p.ident()?;
                    p.expect(Tok::Eq)?;
                    let mut children = Vec::new();
                    loop {
                        let (c, cpos) = p.ident()?;
                        s.child_refs.push((c.clone(), cpos));
                        children.push(c);
                        if !p.eat(&Tok::Star) {
                            break;
                        }
                    }
                    s.nodes.push(CompositeNode::new(id, children));
                }
                Tok::Ident(k) if k == "compat" => {
                    let c = p.compat_stmt()?;
                    s.compat.push(c);
                }
                Tok::Ident(k) if k == "solutions" => {
                    p.next();
                    let (node, npos) = p.ident()?;
                    let mut sols = Vec::new();
                    p.block(&[], |p| {
                        let (name, _) = p.ident()?;
                        p.expect(Tok::Eq)?;
                        let mut items = vec![p.reference()?];
                        while p.eat(&Tok::Star) {
                            items.push(p.reference()?);
                        }
                        let priority = if p.eat_kw("priority") {
                            Some(p.int()?.0)
                        } else {
                            None
                        };
                        sols.push(RawDeclared {
                            name,
                            items,
                            priority,
                        });
                        Ok(())
                    })?;
                    s.solutions.push((node, npos, sols));
                }
                _ => return Err(p.unexpected("a structure statement")),
            }
            Ok(())
        })?;
        Ok(s)
    }

    fn network(&mut self) -> PResult<RawNetwork> {
        let pos = self.pos();
        self.expect_kw("network")?;
        let (name, _) = self.ident()?;
        let mut shape = ShapeHint::General;
        if let Tok::Ident(k) = self.peek().clone() {
            shape = ShapeHint::from_keyword(&k)
                .ok_or_else(|| ParseError::at(self.pos(), format!("unknown network shape `{k}`")))?;
            self.next();
        }
        let mut n = RawNetwork {
            name,
            pos,
            shape,
            scale: None,
            root: None,
            nodes: Vec::new(),
            arcs: Vec::new(),
            compat: Vec::new(),
            trajectories: Vec::new(),
        };
        self.block(NETWORK_STMTS, |p| {
            match p.peek() {
                Tok::Ident(k) if k == "scale" => {
                    p.next();
                    n.scale = Some(p.int()?.0);
                }
                Tok::Ident(k) if k == "root" => {
                    p.next();
                    n.root = Some(p.ident()?.0);
                }
                Tok::Ident(k) if k == "point" => {
                    p.next();
                    let (id, _) = p.ident()?;
                    p.expect_kw("uses")?;
                    let (structure, structure_pos) = p.ident()?;
                    let mut solutions = Vec::new();
                    if p.eat_kw("solutions") {
                        p.block(&[], |p| {
                            let (name, _) = p.ident()?;
                            p.expect(Tok::Eq)?;
                            let mut sel = vec![p.ident()?];
                            while p.eat(&Tok::Star) {
                                sel.push(p.ident()?);
                            }
                            let priority = if p.eat_kw("priority") {
                                Some(p.int()?.0)
                            } else {
                                None
                            };
                            solutions.push((
                                PointSolution {
                                    name,
                                    selection: sel.iter().map(|(s, _)| s.clone()).collect(),
                                    priority,
                                },
                                sel,
                            ));
                            Ok(())
                        })?;
                    }
                    n.nodes.push(RawNode::Point(RawPoint {
                        id,
                        structure,
                        structure_pos,
                        solutions,
                    }));
                }
                Tok::Ident(k) if k == "analysis" => {
                    p.next();
                    let (id, _) = p.ident()?;
                    n.nodes.push(RawNode::Analysis(id.clone()));
                    if p.peek() == &Tok::LBrace {
                        let arcs = &mut n.arcs;
                        p.block(&["on"], |p| {
                            p.expect_kw("on")?;
                            let label = p.opt_string().ok_or_else(|| p.unexpected("outcome string"))?;
                            p.expect(Tok::Arrow)?;
                            let (to, _) = p.ident()?;
                            arcs.push(Arc::branch(id.clone(), label, to));
                            Ok(())
                        })?;
                    }
                }
                Tok::Ident(k) if k == "edge" => {
                    p.next();
                    let (from, _) = p.ident()?;
                    p.expect(Tok::Arrow)?;
                    let (to, _) = p.ident()?;
                    if p.eat_kw("on") {
                        let label = p.opt_string().ok_or_else(|| p.unexpected("outcome string"))?;
                        n.arcs.push(Arc::branch(from, label, to));
                    } else {
                        n.arcs.push(Arc::new(from, to));
                    }
                }
                Tok::Ident(k) if k == "compat" => {
                    let c = p.compat_stmt()?;
                    n.compat.push(c);
                }
                Tok::Ident(k) if k == "trajectory" => {
                    p.next();
                    let (name, _) = p.ident()?;
                    let mut pairs = Vec::new();
                    p.block(&[], |p| {
                        let (point, ppos) = p.ident()?;
                        p.expect(Tok::Eq)?;
                        let (sol, spos) = p.ident()?;
                        pairs.push((point, ppos, sol, spos));
                        Ok(())
                    })?;
                    n.trajectories.push((name, pairs));
                }
                _ => return Err(p.unexpected("a network statement")),
            }
            Ok(())
        })?;
        Ok(n)
    }
}

// ---------------------------------------------------------------- resolution

fn insert_error(e: CompatInsertError) -> String {
    match e {
        CompatInsertError::ExceedsScale { value, scale } => {
            format!("value exceeds scale ({value} > {scale})")
        }
        CompatInsertError::SameOwner(o) => format!("compatibility within a single owner {o}"),
        CompatInsertError::Contradiction { a, b, old, new } => {
            format!("contradictory duplicate compat ({a},{b}): {old} vs {new}")
        }
    }
}

/// Every (owner, item) an unresolved reference may denote inside `s`.
fn candidates(s: &RawStructure, declared: &BTreeMap<String, Vec<String>>, r: &RawRef) -> Vec<ItemRef> {
    let mut out = Vec::new();
    for c in &s.components {
        if r.owner.as_deref().is_none_or(|o| o == c.id) && c.alternative(&r.item).is_some() {
            out.push(ItemRef::new(c.id.clone(), r.item.clone()));
        }
    }
    for (node, names) in declared {
        if r.owner.as_deref().is_none_or(|o| o == node) && names.contains(&r.item) {
            out.push(ItemRef::new(node.clone(), r.item.clone()));
        }
    }
    out
}

fn resolve_one(cands: Vec<ItemRef>, r: &RawRef, errors: &mut Vec<ParseError>) -> Option<ItemRef> {
    match cands.len() {
        1 => cands.into_iter().next(),
        0 => {
            errors.push(ParseError::at(r.pos, format!("unknown item {r}")));
            None
        }
        _ => {
            errors.push(ParseError::at(
                r.pos,
                format!("ambiguous item {r}; qualify it as owner.{}", r.item),
            ));
            None
        }
    }
}

fn resolve_structure(raw: RawStructure, errors: &mut Vec<ParseError>) -> MorphStructure {
    let scale = raw.scale.unwrap_or(DEFAULT_SCALE);
    let declared_names: BTreeMap<String, Vec<String>> = raw
        .solutions
        .iter()
        .map(|(node, _, sols)| (node.clone(), sols.iter().map(|d| d.name.clone()).collect()))
        .collect();
    let parent_of = |owner: &str| raw.nodes.iter().find(|n| n.children.iter().any(|c| c == owner));
    for (c, pos) in &raw.child_refs {
        if !raw.components.iter().any(|x| &x.id == c) && !raw.nodes.iter().any(|x| &x.id == c) {
            errors.push(ParseError::at(*pos, format!("unknown component or node {c}")));
        }
    }

    let mut declared: BTreeMap<String, Vec<DeclaredSolution>> = BTreeMap::new();
    for (node, npos, sols) in &raw.solutions {
        let Some(n) = raw.nodes.iter().find(|n| &n.id == node) else {
            errors.push(ParseError::at(
                *npos,
                format!("solutions for unknown node {node}"),
            ));
            continue;
        };
        let entry = declared.entry(node.clone()).or_default();
        for d in sols {
            let mut selection = Vec::new();
            for r in &d.items {
                let cands: Vec<ItemRef> = candidates(&raw, &declared_names, r)
                    .into_iter()
                    .filter(|c| n.children.contains(&c.owner))
                    .collect();
                if let Some(x) = resolve_one(cands, r, errors) {
                    selection.push(x);
                }
            }
            entry.push(DeclaredSolution {
                name: d.name.clone(),
                selection,
                priority: d.priority,
            });
        }
    }

    let mut compat: BTreeMap<String, CompatTable> = BTreeMap::new();
    for c in &raw.compat {
        let a = resolve_one(candidates(&raw, &declared_names, &c.a), &c.a, errors);
        let b = resolve_one(candidates(&raw, &declared_names, &c.b), &c.b, errors);
        let (Some(a), Some(b)) = (a, b) else { continue };
        let (pa, pb) = (parent_of(&a.owner), parent_of(&b.owner));
        let node = match (pa, pb) {
            (Some(x), Some(y)) if x.id == y.id => x.id.clone(),
            _ => {
                errors.push(ParseError::at(
                    c.a.pos,
                    format!("compat {} {}: items are not under the same node", c.a, c.b),
                ));
                continue;
            }
        };
        let value = CompatValue {
            value: c.value,
            assumed: c.assumed,
            note: c.note.clone(),
        };
        if let Err(e) = compat
            .entry(node)
            .or_insert_with(|| CompatTable::new(scale))
            .insert(a, b, value)
        {
            errors.push(ParseError::at(c.value_pos, insert_error(e)));
        }
    }

    MorphStructure {
        name: raw.name,
        scale_max: scale,
        partial: raw.partial,
        components: raw.components,
        nodes: raw.nodes,
        compat,
        declared,
    }
}

fn resolve_network(
    raw: RawNetwork,
    structures: &BTreeMap<String, MorphStructure>,
    errors: &mut Vec<ParseError>,
) -> TopLevelNetwork {
    let mut nodes = Vec::new();
    let mut scale = raw.scale;
    let mut implied = 0;
    for n in raw.nodes {
        match n {
            RawNode::Analysis(id) => nodes.push(NetNode::Analysis(AnalysisPoint { id })),
            RawNode::Point(p) => {
                match structures.get(&p.structure) {
                    None => errors.push(ParseError::at(
                        p.structure_pos,
                        format!("unknown structure {}", p.structure),
                    )),
                    Some(s) => {
                        implied = implied.max(s.scale_max);
                        for (_, sel) in &p.solutions {
                            for (da, pos) in sel {
                                if !s.components.iter().any(|c| c.alternative(da).is_some()) {
                                    errors.push(ParseError::at(
                                        *pos,
                                        format!("unknown alternative {da} in structure {}", s.name),
                                    ));
                                }
                            }
                        }
                    }
                }
                let mut m = MorphPoint::new(p.id, p.structure);
                m.solutions = p.solutions.into_iter().map(|(s, _)| s).collect();
                nodes.push(NetNode::Morph(m));
            }
        }
    }
    let scale = *scale.get_or_insert(if implied == 0 { DEFAULT_SCALE } else { implied });

    let point_ok = |pt: &str, sol: &str| -> Result<(), String> {
        match nodes.iter().find(|n| n.id() == pt) {
            Some(NetNode::Morph(m)) => {
                if m.solutions.is_empty() || m.solutions.iter().any(|s| s.name == sol) {
                    Ok(())
                } else {
                    Err(format!("point {pt} has no solution {sol}"))
                }
            }
            Some(NetNode::Analysis(_)) => Err(format!("{pt} is an analysis point")),
            None => Err(format!("unknown point {pt}")),
        }
    };

    let mut compat = CompatTable::new(scale);
    for c in &raw.compat {
        let mut refs = Vec::new();
        for r in [&c.a, &c.b] {
            match &r.owner {
                None => errors.push(ParseError::at(
                    r.pos,
                    format!("inter-point reference {r} must be written point.solution"),
                )),
                Some(o) => match point_ok(o, &r.item) {
                    Ok(()) => refs.push(ItemRef::new(o.clone(), r.item.clone())),
                    Err(m) => errors.push(ParseError::at(r.pos, m)),
                },
            }
        }
        if let (Some(b), Some(a), true) = (refs.pop(), refs.pop(), refs.is_empty()) {
            let value = CompatValue {
                value: c.value,
                assumed: c.assumed,
                note: c.note.clone(),
            };
            if let Err(e) = compat.insert(a, b, value) {
                errors.push(ParseError::at(c.value_pos, insert_error(e)));
            }
        }
    }

    let mut trajectories = Vec::new();
    for (name, pairs) in raw.trajectories {
        let mut assignment = Vec::new();
        for (pt, ppos, sol, spos) in pairs {
            match point_ok(&pt, &sol) {
                Ok(()) => assignment.push((pt, sol)),
                Err(m) => {
                    let pos = if nodes.iter().any(|n| n.id() == pt) {
                        spos
                    } else {
                        ppos
                    };
                    errors.push(ParseError::at(pos, m));
                }
            }
        }
        trajectories.push(DeclaredTrajectory { name, assignment });
    }

    TopLevelNetwork {
        name: raw.name,
        shape: raw.shape,
        explicit_root: raw.root,
        nodes,
        arcs: raw.arcs,
        compat,
        trajectories,
    }
}

/// Parses a document, reporting every error found with its position.
pub fn parse(text: &str) -> Result<MorphDocument, ParseErrors> {
    let mut errors = Vec::new();
    let toks = lex(text, &mut errors);
    let mut p = Parser {
        toks,
        at: 0,
        errors: Vec::new(),
    };
    if p.is_kw("morphfile") {
        p.next();
        match p.int() {
            Ok((v, _)) if v == FORMAT_VERSION => {}
            Ok((v, pos)) => p
                .errors
                .push(ParseError::at(pos, format!("unsupported format version {v}"))),
            Err(e) => p.errors.push(e),
        }
    }
    let mut structures = Vec::new();
    let mut networks = Vec::new();
    while p.peek() != &Tok::Eof {
        let before = p.at;
        let r = if p.is_kw("structure") {
            p.structure().map(|s| structures.push(s))
        } else if p.is_kw("network") {
            p.network().map(|n| networks.push(n))
        } else {
            Err(p.unexpected("`structure` or `network`"))
        };
        if let Err(e) = r {
            p.errors.push(e);
            if p.at == before {
                p.next();
            }
            p.recover(TOP_STMTS);
            // a stray `}` at top level
            if p.peek() == &Tok::RBrace {
                p.next();
            }
        }
    }
    errors.append(&mut p.errors);

    let mut doc = MorphDocument::default();
    for raw in structures {
        let pos = raw.pos;
        let s = resolve_structure(raw, &mut errors);
        if doc.structures.contains_key(&s.name) {
            errors.push(ParseError::at(pos, format!("duplicate structure {}", s.name)));
        } else {
            doc.structures.insert(s.name.clone(), s);
        }
    }
    for raw in networks {
        let pos = raw.pos;
        let n = resolve_network(raw, &doc.structures, &mut errors);
        if doc.networks.contains_key(&n.name) {
            errors.push(ParseError::at(pos, format!("duplicate network {}", n.name)));
        } else {
            doc.networks.insert(n.name.clone(), n);
        }
    }
    if errors.is_empty() {
        Ok(doc)
    } else {
        errors.sort_by_key(|e| (e.line, e.col));
        Err(ParseErrors(errors))
    }
}

// ---------------------------------------------------------------- serializer

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn compat_line(out: &mut String, a: &ItemRef, b: &ItemRef, v: &CompatValue) {
    let _ = write!(out, "  compat {a} {b} = {}", v.value);
    if v.assumed {
        out.push_str(" assumed");
        if let Some(n) = &v.note {
            let _ = write!(out, " {}", quote(n));
        }
    }
    out.push('\n');
}

fn write_structure(out: &mut String, s: &MorphStructure) {
    let _ = writeln!(out, "structure {} {{", s.name);
    let _ = writeln!(out, "  scale {}", s.scale_max);
    if s.partial {
        out.push_str("  partial\n");
    }
    for c in &s.components {
        let _ = writeln!(out, "  component {} {{", c.id);
        for a in &c.alternatives {
            let _ = write!(out, "    alt {} priority {}", a.id, a.priority);
            if let Some(l) = &a.label {
                let _ = write!(out, " {}", quote(l));
            }
            out.push('\n');
        }
        out.push_str("  }\n");
    }
    for n in &s.nodes {
        let _ = writeln!(out, "  node {} = {}", n.id, n.children.join(" * "));
    }
    for (node, sols) in &s.declared {
        let _ = writeln!(out, "  solutions {node} {{");
        for d in sols {
            let items: Vec<String> = d.selection.iter().map(ItemRef::to_string).collect();
            let _ = write!(out, "    {} = {}", d.name, items.join(" * "));
            if let Some(p) = d.priority {
                let _ = write!(out, " priority {p}");
            }
            out.push('\n');
        }
        out.push_str("  }\n");
    }
    for t in s.compat.values() {
        for (a, b, v) in t.entries() {
            compat_line(out, a, b, v);
        }
    }
    out.push_str("}\n");
}

fn write_network(out: &mut String, n: &TopLevelNetwork) {
    let _ = writeln!(out, "network {} {} {{", n.name, n.shape.keyword());
    let _ = writeln!(out, "  scale {}", n.compat.scale_max);
    if let Some(r) = &n.explicit_root {
        let _ = writeln!(out, "  root {r}");
    }
    for node in &n.nodes {
        match node {
            NetNode::Analysis(a) => {
                let _ = writeln!(out, "  analysis {}", a.id);
            }
            NetNode::Morph(p) => {
                let _ = write!(out, "  point {} uses {}", p.id, p.structure);
                if p.solutions.is_empty() {
                    out.push('\n');
                    continue;
                }
                out.push_str(" solutions {\n");
                for s in &p.solutions {
                    let _ = write!(out, "    {} = {}", s.name, s.selection.join(" * "));
                    if let Some(pr) = s.priority {
                        let _ = write!(out, " priority {pr}");
                    }
                    out.push('\n');
                }
                out.push_str("  }\n");
            }
        }
    }
    for a in &n.arcs {
        let _ = write!(out, "  edge {} -> {}", a.from, a.to);
        if let Some(o) = &a.outcome {
            let _ = write!(out, " on {}", quote(o));
        }
        out.push('\n');
    }
    for (a, b, v) in n.compat.entries() {
        compat_line(out, a, b, v);
    }
    for t in &n.trajectories {
        let _ = writeln!(out, "  trajectory {} {{", t.name);
        for (p, s) in &t.assignment {
            let _ = writeln!(out, "    {p} = {s}");
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
}

/// Canonical text: header, structures by name, then networks by name.
pub fn serialize(doc: &MorphDocument) -> String {
    let mut out = format!("morphfile {FORMAT_VERSION}\n");
    for s in doc.structures.values() {
        out.push('\n');
        write_structure(&mut out, s);
    }
    for n in doc.networks.values() {
        out.push('\n');
        write_network(&mut out, n);
    }
    out
}

// ---------------------------------------------------------------- graph export

fn dot_id(s: &str) -> String {
    quote(s)
}

/// DOT description of a network. With an assignment, morph point labels
/// carry the chosen solution name.
pub fn export_graph(net: &TopLevelNetwork, assignment: Option<&[(String, String)]>) -> String {
    let mut out = format!("digraph {} {{\n", dot_id(&net.name));
    for n in &net.nodes {
        match n {
            NetNode::Morph(p) => {
                let chosen = assignment.and_then(|a| a.iter().find(|(pt, _)| pt == &p.id));
                let label = match chosen {
                    Some((_, s)) => format!("{}\\n{}", p.id, s),
                    None => p.id.clone(),
                };
                let _ = writeln!(out, "  {} [shape=box, label=\"{}\"];", dot_id(&p.id), label);
            }
            NetNode::Analysis(a) => {
                let _ = writeln!(
                    out,
                    "  {} [shape=diamond, label={}];",
                    dot_id(&a.id),
                    dot_id(&a.id)
                );
            }
        }
    }
    for a in &net.arcs {
        let _ = write!(out, "  {} -> {}", dot_id(&a.from), dot_id(&a.to));
        if let Some(o) = &a.outcome {
            let _ = write!(out, " [label={}]", quote(o));
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
morphfile 1
# two components
structure s {
  scale 3
  component A { alt A1 priority 1 "first" alt A2 priority 2 }
  component B { alt B1 priority 1 }
  node S = A * B
  compat A1 B1 = 3
  compat A.A2 B.B1 = 1 assumed "guess"
}
network n chain {
  point p uses s solutions { P1 = A1 * B1 }
  point q uses s
  edge p -> q
}
"#;

    #[test]
    fn empty_file_is_empty_document() {
        assert_eq!(parse("").unwrap(), MorphDocument::default());
        assert_eq!(parse("# only a comment\n").unwrap(), MorphDocument::default());
    }

    #[test]
    fn small_document_round_trips() {
        let d = parse(SMALL).unwrap();
        assert_eq!(d.structures.len(), 1);
        assert_eq!(d.networks["n"].compat.scale_max, 3);
        let text = serialize(&d);
        let again = parse(&text).unwrap();
        assert_eq!(again, d);
        assert_eq!(serialize(&again), text);
        assert_eq!(d.assumptions().len(), 1);
        assert_eq!(d.assumptions()[0].note.as_deref(), Some("guess"));
    }

    #[test]
    fn value_beyond_scale_is_positioned() {
        let text = "structure s {\n  component A { alt A1 priority 1 }\n  component B { alt B1 priority 1 }\n  node S = A * B\n  compat A1 B1 = 5 scale 3\n}\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!((err.0[0].line, err.0[0].col), (5, 18));
        assert!(err.0[0].message.contains("value exceeds scale"));
    }

    #[test]
    fn contradictory_duplicates_are_rejected() {
        let text = "structure s { component A { alt A1 priority 1 } component B { alt B1 priority 1 }\n node S = A * B compat A1 B1 = 2 compat B1 A1 = 3 }";
        let err = parse(text).unwrap_err();
        assert!(err.0[0].message.contains("contradictory"));
        let same = "structure s { component A { alt A1 priority 1 } component B { alt B1 priority 1 }\n node S = A * B compat A1 B1 = 2 compat B1 A1 = 2 }";
        assert!(parse(same).is_ok());
    }

    #[test]
    fn syntax_errors_are_collected() {
        let text = "structure s {\n  component A { alt A1 prio 1 }\n  node = A\n}\nnetwork x { bogus }\n";
        let err = parse(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 5]);
    }

    #[test]
    fn dangling_references() {
        let err = parse("network x { point p uses nowhere }").unwrap_err();
        assert!(err.0[0].message.contains("unknown structure nowhere"));
        let err = parse("structure s { component A { alt A1 priority 1 } node S = A compat A1 Z9 = 1 }")
            .unwrap_err();
        assert!(err.0[0].message.contains("unknown item Z9"));
    }

    #[test]
    fn crlf_is_accepted() {
        let d = parse(&SMALL.replace('\n', "\r\n")).unwrap();
        assert_eq!(d, parse(SMALL).unwrap());
    }

    #[test]
    fn export_shapes() {
        let d = parse(SMALL).unwrap();
        let n = &d.networks["n"];
        let dot = export_graph(n, Some(&[("p".into(), "P1".into())]));
        assert!(dot.starts_with("digraph \"n\" {\n"));
        assert!(dot.contains("\"p\" [shape=box, label=\"p\\nP1\"];"));
        assert!(dot.contains("\"p\" -> \"q\";"));
        let empty = TopLevelNetwork::new("e", ShapeHint::General, 3);
        assert_eq!(export_graph(&empty, None), "digraph \"e\" {\n}\n");
    }
}
