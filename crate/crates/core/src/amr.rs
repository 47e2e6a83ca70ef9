//! PENMAN-notation semantic graphs: parsing, serialization, and triple
//! decomposition.
//!
//! A graph is rooted and directed, with one concept per variable, labeled
//! role edges, and attribute constants (numbers, symbols such as `-`, and
//! quoted strings) preserved verbatim. A bare variable token in target
//! position re-references a variable declared elsewhere (a reentrancy),
//! which is how coreference is expressed.
//!
//! The parser is iterative, so arbitrarily deep input cannot overflow the
//! stack; on malformed input it returns a structured error, never panics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AmrError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable {0:?} declared more than once")]
    DuplicateVariable(String),
    #[error("variable {0:?} referenced but never declared")]
    DanglingVariable(String),
    #[error("graph contains a cycle that is not expressible from the root")]
    CyclicGraph,
    #[error("variable {0:?} is not reachable from the root")]
    UnreachableVariable(String),
    #[error("invalid role {0:?}: roles start with ':'")]
    InvalidRole(String),
    #[error("variable {0:?} is not declared")]
    UndeclaredVariable(String),
}

fn syntax(pos: usize, msg: impl Into<String>) -> AmrError {
    AmrError::Syntax {
        pos,
        msg: msg.into(),
    }
}

/// An attribute constant, kept exactly as written.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AmrConstant {
    /// Numeric literal, original spelling preserved (`3`, `-1.5`).
    Number(String),
    /// Bare symbol such as `-` or `imperative`.
    Symbol(String),
    /// Quoted string, stored without the surrounding quotes.
    Str(String),
}

impl AmrConstant {
    /// The constant's surface text without quoting.
    pub fn surface(&self) -> &str {
        match self {
            AmrConstant::Number(s) | AmrConstant::Symbol(s) | AmrConstant::Str(s) => s,
        }
    }
}

/// Target of a graph edge: another variable or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AmrTarget {
    Var(String),
    Constant(AmrConstant),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrEdge {
    pub source: String,
    pub role: String,
    pub target: AmrTarget,
}

/// Rooted directed graph with one concept per variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    root: String,
    instances: Vec<(String, String)>,
    edges: Vec<AmrEdge>,
}

impl AmrGraph {
    pub fn with_root(var: impl Into<String>, concept: impl Into<String>) -> Self {
        let var = var.into();
        Self {
            root: var.clone(),
            instances: vec![(var, concept.into())],
            edges: Vec::new(),
        }
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    /// Instance declarations in declaration order.
    pub fn instances(&self) -> &[(String, String)] {
        &self.instances
    }

    /// Edges in insertion (textual) order.
    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn concept_of(&self, var: &str) -> Option<&str> {
        self.instances
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, c)| c.as_str())
    }

    pub fn declare(
        &mut self,
        var: impl Into<String>,
        concept: impl Into<String>,
    ) -> Result<(), AmrError> {
        let var = var.into();
        if self.concept_of(&var).is_some() {
            return Err(AmrError::DuplicateVariable(var));
        }
        self.instances.push((var, concept.into()));
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        source: impl Into<String>,
        role: impl Into<String>,
        target: AmrTarget,
    ) -> Result<(), AmrError> {
        let source = source.into();
        let role = role.into();
        if !role.starts_with(':') {
            return Err(AmrError::InvalidRole(role));
        }
        if self.concept_of(&source).is_none() {
            return Err(AmrError::UndeclaredVariable(source));
        }
        self.edges.push(AmrEdge {
            source,
            role,
            target,
        });
        Ok(())
    }
}

/// Target of a decomposed triple: a variable, a concept (for `:instance`
/// triples) or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TripleTarget {
    Var(String),
    Concept(String),
    Constant(AmrConstant),
}

/// One `(source, role, target)` triple of the decomposed graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AmrTriple {
    pub source: String,
    pub role: String,
    pub target: TripleTarget,
}

impl AmrTriple {
    pub fn new(source: impl Into<String>, role: impl Into<String>, target: TripleTarget) -> Self {
        Self {
            source: source.into(),
            role: role.into(),
            target,
        }
    }
}

impl std::fmt::Display for AmrTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let target = match &self.target {
            TripleTarget::Var(v) => v.clone(),
            TripleTarget::Concept(c) => c.clone(),
            TripleTarget::Constant(c) => c.surface().to_string(),
        };
        write!(f, "({}, {}, {})", self.source, self.role, target)
    }
}

/// Whether a sentence's graph text parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStatus {
    Ok,
    Failed,
}

/// The PENMAN text attached to one transcript sentence, parsed if possible.
/// Unparseable sentences degrade gracefully: they carry `Failed` status and
/// contribute nothing downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAmr {
    pub sentence_position: usize,
    pub penman_text: String,
    pub graph: Option<AmrGraph>,
    pub parse_status: ParseStatus,
}

impl SentenceAmr {
    pub fn from_penman(sentence_position: usize, penman_text: impl Into<String>) -> Self {
        let penman_text = penman_text.into();
        match parse_penman(&penman_text) {
            Ok(graph) => Self {
                sentence_position,
                penman_text,
                graph: Some(graph),
                parse_status: ParseStatus::Ok,
            },
            Err(_) => Self {
                sentence_position,
                penman_text,
                graph: None,
                parse_status: ParseStatus::Failed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Slash,
    Role(String),
    Str(String),
    Atom(String),
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, AmrError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'(' => {
                tokens.push((Token::LParen, i));
                i += 1;
            }
            b')' => {
                tokens.push((Token::RParen, i));
                i += 1;
            }
            b'/' => {
                tokens.push((Token::Slash, i));
                i += 1;
            }
            b'"' => {
                let start = i;
                i += 1;
                let mut value = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(syntax(start, "unterminated string"));
                    }
                    match bytes[i] {
                        b'"' => {
                            i += 1;
                            break;
                        }
                        b'\\' if i + 1 < bytes.len() => {
                            // The escaped character may be multi-byte.
                            let c = text[i + 1..].chars().next().expect("in bounds");
                            value.push(c);
                            i += 1 + c.len_utf8();
                        }
                        _ => {
                            // Advance by whole characters to stay on UTF-8
                            // boundaries.
                            let rest = &text[i..];
                            let c = rest.chars().next().expect("in bounds");
                            value.push(c);
                            i += c.len_utf8();
                        }
                    }
                }
                tokens.push((Token::Str(value), start));
            }
            b':' => {
                let start = i;
                i += 1;
                while i < bytes.len() && !is_delimiter(bytes[i]) {
                    i += 1;
                }
                let role = &text[start..i];
                if role.len() == 1 {
                    return Err(syntax(start, "empty role name"));
                }
                tokens.push((Token::Role(role.to_string()), start));
            }
            _ if b.is_ascii_whitespace() => {
                i += 1;
            }
            _ => {
                let start = i;
                while i < bytes.len() && !is_delimiter(bytes[i]) && bytes[i] != b':' {
                    i += 1;
                }
                if i == start {
                    i += 1; // unreachable in practice; defensive progress
                }
                tokens.push((Token::Atom(text[start..i].to_string()), start));
            }
        }
    }
    Ok(tokens)
}

// ASCII-only classification keeps every token boundary on a UTF-8 char
// boundary; non-ASCII bytes always belong to atoms.
fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'/' | b'"') || b.is_ascii_whitespace()
}

/// Conventional variable shape: one lowercase letter plus optional digits.
/// Undeclared bare targets of this shape are dangling references; anything
/// else undeclared is a constant.
fn is_var_shaped(atom: &str) -> bool {
    let mut chars = atom.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn is_number(atom: &str) -> bool {
    let rest = atom.strip_prefix(['+', '-']).unwrap_or(atom);
    if rest.is_empty() {
        return false;
    }
    let mut dot_seen = false;
    for c in rest.chars() {
        match c {
            '0'..='9' => {}
            '.' if !dot_seen => dot_seen = true,
            _ => return false,
        }
    }
    !rest.starts_with('.') && !rest.ends_with('.')
}

#[derive(Debug)]
enum RawTarget {
    Var(String),
    Atom(String),
    Str(String),
}

enum ParseState {
    ExpectOpen,
    ExpectVar,
    ExpectSlash,
    ExpectConcept,
    ExpectRoleOrClose,
    ExpectTarget(String),
    Done,
}

/// Parse PENMAN text into a graph. Lines starting with `#` are metadata and
/// are skipped. Whitespace is not significant.
pub fn parse_penman(text: &str) -> Result<AmrGraph, AmrError> {
    let cleaned: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let tokens = lex(&cleaned)?;
    if tokens.is_empty() {
        return Err(syntax(0, "empty input"));
    }

    let mut state = ParseState::ExpectOpen;
    // (variable, byte position of its declaration)
    let mut frames: Vec<String> = Vec::new();
    let mut pending_child_role: Option<String> = None;
    let mut instances: Vec<(String, String)> = Vec::new();
    let mut raw_edges: Vec<(String, String, RawTarget)> = Vec::new();
    let mut pending_var: Option<String> = None;

    for (token, pos) in tokens {
        state = match state {
            ParseState::ExpectOpen => match token {
                Token::LParen => ParseState::ExpectVar,
                _ => return Err(syntax(pos, "expected '('")),
            },
            ParseState::ExpectVar => match token {
                Token::Atom(var) => {
                    if let Some(role) = pending_child_role.take() {
                        let parent = frames.last().expect("child node has a parent").clone();
                        raw_edges.push((parent, role, RawTarget::Var(var.clone())));
                    }
                    frames.push(var.clone());
                    pending_var = Some(var);
                    ParseState::ExpectSlash
                }
                _ => return Err(syntax(pos, "expected a variable after '('")),
            },
            ParseState::ExpectSlash => match token {
                Token::Slash => ParseState::ExpectConcept,
                _ => return Err(syntax(pos, "expected '/' after the variable")),
            },
            ParseState::ExpectConcept => match token {
                Token::Atom(concept) => {
                    let var = pending_var.take().expect("variable read before concept");
                    if instances.iter().any(|(v, _)| *v == var) {
                        return Err(AmrError::DuplicateVariable(var));
                    }
                    instances.push((var, concept));
                    ParseState::ExpectRoleOrClose
                }
                Token::RParen => return Err(syntax(pos, "empty concept")),
                _ => return Err(syntax(pos, "expected a concept after '/'")),
            },
            ParseState::ExpectRoleOrClose => match token {
                Token::Role(role) => ParseState::ExpectTarget(role),
                Token::RParen => {
                    frames.pop();
                    if frames.is_empty() {
                        ParseState::Done
                    } else {
                        ParseState::ExpectRoleOrClose
                    }
                }
                _ => return Err(syntax(pos, "expected a role or ')'")),
            },
            ParseState::ExpectTarget(role) => {
                let source = frames.last().expect("target inside a node").clone();
                match token {
                    Token::LParen => {
                        pending_child_role = Some(role);
                        ParseState::ExpectVar
                    }
                    Token::Atom(atom) => {
                        raw_edges.push((source, role, RawTarget::Atom(atom)));
                        ParseState::ExpectRoleOrClose
                    }
                    Token::Str(s) => {
                        raw_edges.push((source, role, RawTarget::Str(s)));
                        ParseState::ExpectRoleOrClose
                    }
                    _ => return Err(syntax(pos, "expected a target after the role")),
                }
            }
            ParseState::Done => return Err(syntax(pos, "content after the closing ')'")),
        };
    }
    if !matches!(state, ParseState::Done) {
        return Err(syntax(cleaned.len(), "unbalanced parentheses"));
    }

    let root = instances
        .first()
        .map(|(v, _)| v.clone())
        .expect("Done state implies at least one node");
    let declared: std::collections::BTreeSet<&str> =
        instances.iter().map(|(v, _)| v.as_str()).collect();
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (source, role, raw) in raw_edges {
        let target = match raw {
            RawTarget::Var(v) => AmrTarget::Var(v),
            RawTarget::Str(s) => AmrTarget::Constant(AmrConstant::Str(s)),
            RawTarget::Atom(atom) => {
                if declared.contains(atom.as_str()) {
                    AmrTarget::Var(atom)
                } else if is_var_shaped(&atom) {
                    return Err(AmrError::DanglingVariable(atom));
                } else if is_number(&atom) {
                    AmrTarget::Constant(AmrConstant::Number(atom))
                } else {
                    AmrTarget::Constant(AmrConstant::Symbol(atom))
                }
            }
        };
        edges.push(AmrEdge {
            source,
            role,
            target,
        });
    }
    Ok(AmrGraph {
        root,
        instances,
        edges,
    })
}

/// Serialize to canonical PENMAN: depth-first from the root, edges in
/// insertion order, each variable expanded at its first encounter and bare
/// afterwards. The output re-parses to an identical triple set.
pub fn serialize_penman(g: &AmrGraph) -> Result<String, AmrError> {
    if g.concept_of(&g.root).is_none() {
        return Err(AmrError::UndeclaredVariable(g.root.clone()));
    }
    for edge in &g.edges {
        if let AmrTarget::Var(v) = &edge.target {
            if g.concept_of(v).is_none() {
                return Err(AmrError::DanglingVariable(v.clone()));
            }
        }
    }
    let mut expanded = std::collections::BTreeSet::new();
    let mut out = String::new();
    write_node(g, &g.root, 0, &mut expanded, &mut out)?;
    if expanded.len() != g.instances.len() {
        let unreached: Vec<&str> = g
            .instances
            .iter()
            .map(|(v, _)| v.as_str())
            .filter(|v| !expanded.contains(*v))
            .collect();
        if has_internal_cycle(g, &unreached) {
            return Err(AmrError::CyclicGraph);
        }
        return Err(AmrError::UnreachableVariable(unreached[0].to_string()));
    }
    Ok(out)
}

fn write_node(
    g: &AmrGraph,
    var: &str,
    depth: usize,
    expanded: &mut std::collections::BTreeSet<String>,
    out: &mut String,
) -> Result<(), AmrError> {
    expanded.insert(var.to_string());
    let concept = g
        .concept_of(var)
        .ok_or_else(|| AmrError::UndeclaredVariable(var.to_string()))?;
    out.push('(');
    out.push_str(var);
    out.push_str(" / ");
    out.push_str(concept);
    for edge in g.edges.iter().filter(|e| e.source == var) {
        out.push('\n');
        for _ in 0..(depth + 1) * 4 {
            out.push(' ');
        }
        out.push_str(&edge.role);
        out.push(' ');
        match &edge.target {
            AmrTarget::Var(v) => {
                if expanded.contains(v) {
                    out.push_str(v);
                } else {
                    write_node(g, v, depth + 1, expanded, out)?;
                }
            }
            AmrTarget::Constant(c) => match c {
                AmrConstant::Number(s) | AmrConstant::Symbol(s) => out.push_str(s),
                AmrConstant::Str(s) => {
                    out.push('"');
                    out.push_str(&s.replace('\\', "\\\\").replace('"', "\\\""));
                    out.push('"');
                }
            },
        }
    }
    out.push(')');
    Ok(())
}

/// True when the `vars` subgraph contains a directed cycle.
fn has_internal_cycle(g: &AmrGraph, vars: &[&str]) -> bool {
    let set: std::collections::BTreeSet<&str> = vars.iter().copied().collect();
    let mut remaining = set.clone();
    loop {
        let removable: Vec<&str> = remaining
            .iter()
            .copied()
            .filter(|v| {
                !g.edges.iter().any(|e| {
                    matches!(&e.target, AmrTarget::Var(t) if t == v)
                        && remaining.contains(e.source.as_str())
                })
            })
            .collect();
        if removable.is_empty() {
            return !remaining.is_empty();
        }
        for v in removable {
            remaining.remove(v);
        }
        if remaining.is_empty() {
            return false;
        }
    }
}

/// Decompose into triples: one `:instance` triple per variable in
/// declaration order, then one triple per edge in insertion order.
pub fn to_triples(g: &AmrGraph) -> Vec<AmrTriple> {
    let mut triples = Vec::with_capacity(g.instances.len() + g.edges.len());
    for (var, concept) in &g.instances {
        triples.push(AmrTriple::new(
            var.clone(),
            ":instance",
            TripleTarget::Concept(concept.clone()),
        ));
    }
    for edge in &g.edges {
        let target = match &edge.target {
            AmrTarget::Var(v) => TripleTarget::Var(v.clone()),
            AmrTarget::Constant(c) => TripleTarget::Constant(c.clone()),
        };
        triples.push(AmrTriple::new(
            edge.source.clone(),
            edge.role.clone(),
            target,
        ));
    }
    triples
}

/// Flip inverse roles: `(a, :ARG0-of, b)` becomes `(b, :ARG0, a)`.
/// `:consist-of` is a plain role, not an inverse, and stays as is; so do
/// triples whose target is not a variable. Output order is stable.
pub fn normalize_inverse_roles(triples: &[AmrTriple]) -> Vec<AmrTriple> {
    triples
        .iter()
        .map(|t| {
            if t.role == ":instance" || t.role == ":consist-of" {
                return t.clone();
            }
            if let (Some(base), TripleTarget::Var(v)) = (t.role.strip_suffix("-of"), &t.target) {
                return AmrTriple::new(
                    v.clone(),
                    base.to_string(),
                    TripleTarget::Var(t.source.clone()),
                );
            }
            t.clone()
        })
        .collect()
}

/// The triple set of a graph, for order-insensitive comparison.
pub fn triple_set(g: &AmrGraph) -> std::collections::BTreeSet<AmrTriple> {
    to_triples(g).into_iter().collect()
}
