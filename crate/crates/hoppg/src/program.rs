//! The program DSL: AST, grammar, parser/printer, reasoning-type
//! templates, and structural validation.
//!
//! Surface syntax is strictly parenthesized prefix form, e.g.
//! `COMPOSE(CELL(12,14))` or `ARGMAX(KV(CELL(1,2),CELL_VALUE(3,4)),...)`.
//! Parsing is whitespace-insensitive and case-insensitive; printing is
//! canonical (upper-case, no spaces), and `parse(print(p)) == p`.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Inclusive token span `(s, e)` into a serialized input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }
}

/// One node of a program.
///
/// Atomic operations carry a token span; high-order operations carry child
/// nodes with fixed kinds and arities. `Compose` and `Intersect` are the
/// multi-hop roots and may not appear nested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpNode {
    Cell(TokenSpan),
    Span(TokenSpan),
    CellValue(TokenSpan),
    SpanValue(TokenSpan),
    YesNo(TokenSpan),
    /// Key (CELL/SPAN) paired with a numeric value (CELL_VALUE/SPAN_VALUE).
    Kv {
        key: Box<OpNode>,
        value: Box<OpNode>,
    },
    MultiSpan(Vec<OpNode>),
    Count(Vec<OpNode>),
    Sum(Vec<OpNode>),
    Avg(Vec<OpNode>),
    ArgMax(Box<OpNode>, Box<OpNode>),
    ArgMin(Box<OpNode>, Box<OpNode>),
    Compose(Box<OpNode>),
    Intersect(Box<OpNode>),
}

/// The operation kind of a node, without its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Cell,
    Span,
    CellValue,
    SpanValue,
    YesNo,
    Kv,
    MultiSpan,
    Count,
    Sum,
    Avg,
    ArgMax,
    ArgMin,
    Compose,
    Intersect,
}

impl OpKind {
    pub const ALL: [OpKind; 14] = [
        OpKind::Cell,
        OpKind::Span,
        OpKind::CellValue,
        OpKind::SpanValue,
        OpKind::YesNo,
        OpKind::Kv,
        OpKind::MultiSpan,
        OpKind::Count,
        OpKind::Sum,
        OpKind::Avg,
        OpKind::ArgMax,
        OpKind::ArgMin,
        OpKind::Compose,
        OpKind::Intersect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Cell => "CELL",
            OpKind::Span => "SPAN",
            OpKind::CellValue => "CELL_VALUE",
            OpKind::SpanValue => "SPAN_VALUE",
            OpKind::YesNo => "YESNO",
            OpKind::Kv => "KV",
            OpKind::MultiSpan => "MULTISPAN",
            OpKind::Count => "COUNT",
            OpKind::Sum => "SUM",
            OpKind::Avg => "AVG",
            OpKind::ArgMax => "ARGMAX",
            OpKind::ArgMin => "ARGMIN",
            OpKind::Compose => "COMPOSE",
            OpKind::Intersect => "INTERSECT",
        }
    }

    fn from_name(name: &str) -> Option<OpKind> {
        let upper = name.to_ascii_uppercase();
        OpKind::ALL.iter().copied().find(|k| k.name() == upper)
    }

    /// True for the multi-hop root operations.
    pub fn is_multihop(self) -> bool {
        matches!(self, OpKind::Compose | OpKind::Intersect)
    }
}

impl OpNode {
    pub fn kind(&self) -> OpKind {
        match self {
            OpNode::Cell(_) => OpKind::Cell,
            OpNode::Span(_) => OpKind::Span,
            OpNode::CellValue(_) => OpKind::CellValue,
            OpNode::SpanValue(_) => OpKind::SpanValue,
            OpNode::YesNo(_) => OpKind::YesNo,
            OpNode::Kv { .. } => OpKind::Kv,
            OpNode::MultiSpan(_) => OpKind::MultiSpan,
            OpNode::Count(_) => OpKind::Count,
            OpNode::Sum(_) => OpKind::Sum,
            OpNode::Avg(_) => OpKind::Avg,
            OpNode::ArgMax(_, _) => OpKind::ArgMax,
            OpNode::ArgMin(_, _) => OpKind::ArgMin,
            OpNode::Compose(_) => OpKind::Compose,
            OpNode::Intersect(_) => OpKind::Intersect,
        }
    }

    /// Atomic token spans of this subtree, in argument order.
    pub fn spans(&self) -> Vec<(OpKind, TokenSpan)> {
        let mut out = Vec::new();
        self.collect_spans(&mut out);
        out
    }

    fn collect_spans(&self, out: &mut Vec<(OpKind, TokenSpan)>) {
        match self {
            OpNode::Cell(s)
            | OpNode::Span(s)
            | OpNode::CellValue(s)
            | OpNode::SpanValue(s)
            | OpNode::YesNo(s) => out.push((self.kind(), *s)),
            OpNode::Kv { key, value } => {
                key.collect_spans(out);
                value.collect_spans(out);
            }
            OpNode::MultiSpan(cs) | OpNode::Count(cs) | OpNode::Sum(cs) | OpNode::Avg(cs) => {
                for c in cs {
                    c.collect_spans(out);
                }
            }
            OpNode::ArgMax(a, b) | OpNode::ArgMin(a, b) => {
                a.collect_spans(out);
                b.collect_spans(out);
            }
            OpNode::Compose(inner) | OpNode::Intersect(inner) => inner.collect_spans(out),
        }
    }
}

impl fmt::Display for OpNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, children: &[OpNode]| -> fmt::Result {
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            Ok(())
        };
        match self {
            OpNode::Cell(s)
            | OpNode::Span(s)
            | OpNode::CellValue(s)
            | OpNode::SpanValue(s)
            | OpNode::YesNo(s) => write!(f, "{}({},{})", self.kind().name(), s.start, s.end),
            OpNode::Kv { key, value } => write!(f, "KV({key},{value})"),
            OpNode::MultiSpan(cs) | OpNode::Count(cs) | OpNode::Sum(cs) | OpNode::Avg(cs) => {
                write!(f, "{}(", self.kind().name())?;
                list(f, cs)?;
                write!(f, ")")
            }
            OpNode::ArgMax(a, b) | OpNode::ArgMin(a, b) => {
                write!(f, "{}({a},{b})", self.kind().name())
            }
            OpNode::Compose(inner) | OpNode::Intersect(inner) => {
                write!(f, "{}({inner})", self.kind().name())
            }
        }
    }
}

/// A parsed program plus the hop it was generated for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub root: OpNode,
    pub hop: usize,
}

impl Program {
    pub fn new(root: OpNode) -> Self {
        Program { root, hop: 1 }
    }

    pub fn at_hop(root: OpNode, hop: usize) -> Self {
        Program { root, hop }
    }

    /// True iff the outermost operation is COMPOSE or INTERSECT.
    pub fn is_multihop_root(&self) -> bool {
        self.root.kind().is_multihop()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

// Traces serialize programs in their canonical text form.
impl Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("{op} takes {expected} argument(s), found {found}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        found: usize,
    },
    #[error("{op} argument {index} must be {expected}, found {found}")]
    ChildKind {
        op: &'static str,
        index: usize,
        expected: &'static str,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Int(usize),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Name(n) => write!(f, "`{n}`"),
            Token::Int(i) => write!(f, "`{i}`"),
            Token::LParen => write!(f, "`(`"),
            Token::RParen => write!(f, "`)`"),
            Token::Comma => write!(f, "`,`"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Token::Name(chars[start..i].iter().collect()), start));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            let value = digits.parse::<usize>().map_err(|_| ParseError::Syntax {
                pos: start,
                expected: "a token index".to_string(),
                found: format!("oversized integer `{digits}`"),
            })?;
            out.push((Token::Int(value), start));
        } else {
            let tok = match c {
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                other => {
                    return Err(ParseError::Syntax {
                        pos: i,
                        expected: "an operation, `(`, `)`, `,`, or an integer".to_string(),
                        found: format!("`{other}`"),
                    })
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    Ok(out)
}

/// Either a bare integer or a nested node, as the grammar allows per slot.
enum Arg {
    Int(usize),
    Node(OpNode),
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    input_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map(|(_, p)| *p).unwrap_or(self.input_len)
    }

    fn found(&self) -> String {
        match self.peek() {
            Some((tok, _)) => tok.to_string(),
            None => "end of input".to_string(),
        }
    }

    fn expect(&mut self, want: Token, expected: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some((tok, _)) if *tok == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ParseError::Syntax {
                pos: self.here(),
                expected: expected.to_string(),
                found: self.found(),
            }),
        }
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        match self.peek().cloned() {
            Some((Token::Int(v), _)) => {
                self.pos += 1;
                Ok(Arg::Int(v))
            }
            Some((Token::Name(_), _)) => Ok(Arg::Node(self.node()?)),
            _ => Err(ParseError::Syntax {
                pos: self.here(),
                expected: "an integer or a nested operation".to_string(),
                found: self.found(),
            }),
        }
    }

    fn node(&mut self) -> Result<OpNode, ParseError> {
        let (name, name_pos) = match self.peek().cloned() {
            Some((Token::Name(n), p)) => {
                self.pos += 1;
                (n, p)
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: self.here(),
                    expected: "an operation name".to_string(),
                    found: self.found(),
                })
            }
        };
        let kind = OpKind::from_name(&name).ok_or_else(|| ParseError::Syntax {
            pos: name_pos,
            expected: "a known operation name".to_string(),
            found: format!("`{name}`"),
        })?;
        self.expect(Token::LParen, "`(`")?;
        let mut args = vec![self.arg()?];
        loop {
            match self.peek() {
                Some((Token::Comma, _)) => {
                    self.pos += 1;
                    args.push(self.arg()?);
                }
                Some((Token::RParen, _)) => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    return Err(ParseError::Syntax {
                        pos: self.here(),
                        expected: "`,` or `)`".to_string(),
                        found: self.found(),
                    })
                }
            }
        }
        build_node(kind, args)
    }
}

fn describe(arg: &Arg) -> String {
    match arg {
        Arg::Int(v) => format!("integer `{v}`"),
        Arg::Node(n) => n.kind().name().to_string(),
    }
}

fn atomic_span(kind: OpKind, args: Vec<Arg>) -> Result<TokenSpan, ParseError> {
    if args.len() != 2 {
        return Err(ParseError::Arity {
            op: kind.name(),
            expected: "2 integer",
            found: args.len(),
        });
    }
    let mut ints = Vec::with_capacity(2);
    for (i, arg) in args.into_iter().enumerate() {
        match arg {
            Arg::Int(v) => ints.push(v),
            node => {
                return Err(ParseError::ChildKind {
                    op: kind.name(),
                    index: i,
                    expected: "an integer token index",
                    found: describe(&node),
                })
            }
        }
    }
    Ok(TokenSpan::new(ints[0], ints[1]))
}

fn node_children(
    kind: OpKind,
    args: Vec<Arg>,
    expected: &'static str,
    admit: fn(OpKind) -> bool,
) -> Result<Vec<OpNode>, ParseError> {
    let mut out = Vec::with_capacity(args.len());
    for (i, arg) in args.into_iter().enumerate() {
        match arg {
            Arg::Node(n) if admit(n.kind()) => out.push(n),
            other => {
                return Err(ParseError::ChildKind {
                    op: kind.name(),
                    index: i,
                    expected,
                    found: describe(&other),
                })
            }
        }
    }
    Ok(out)
}

fn pair(kind: OpKind, children: Vec<OpNode>) -> Result<(Box<OpNode>, Box<OpNode>), ParseError> {
    if children.len() != 2 {
        return Err(ParseError::Arity {
            op: kind.name(),
            expected: "exactly 2",
            found: children.len(),
        });
    }
    let mut it = children.into_iter();
    Ok((Box::new(it.next().unwrap()), Box::new(it.next().unwrap())))
}

fn build_node(kind: OpKind, args: Vec<Arg>) -> Result<OpNode, ParseError> {
    let is_key = |k: OpKind| matches!(k, OpKind::Cell | OpKind::Span);
    let is_value = |k: OpKind| matches!(k, OpKind::CellValue | OpKind::SpanValue);
    match kind {
        OpKind::Cell => Ok(OpNode::Cell(atomic_span(kind, args)?)),
        OpKind::Span => Ok(OpNode::Span(atomic_span(kind, args)?)),
        OpKind::CellValue => Ok(OpNode::CellValue(atomic_span(kind, args)?)),
        OpKind::SpanValue => Ok(OpNode::SpanValue(atomic_span(kind, args)?)),
        OpKind::YesNo => Ok(OpNode::YesNo(atomic_span(kind, args)?)),
        OpKind::Kv => {
            let children = node_children(kind, args, "CELL/SPAN or CELL_VALUE/SPAN_VALUE", |k| {
                matches!(
                    k,
                    OpKind::Cell | OpKind::Span | OpKind::CellValue | OpKind::SpanValue
                )
            })?;
            let (key, value) = pair(kind, children)?;
            if !is_key(key.kind()) {
                return Err(ParseError::ChildKind {
                    op: "KV",
                    index: 0,
                    expected: "CELL or SPAN",
                    found: key.kind().name().to_string(),
                });
            }
            if !is_value(value.kind()) {
                return Err(ParseError::ChildKind {
                    op: "KV",
                    index: 1,
                    expected: "CELL_VALUE or SPAN_VALUE",
                    found: value.kind().name().to_string(),
                });
            }
            Ok(OpNode::Kv { key, value })
        }
        OpKind::MultiSpan => Ok(OpNode::MultiSpan(node_children(
            kind,
            args,
            "CELL or SPAN",
            is_key,
        )?)),
        OpKind::Count | OpKind::Sum | OpKind::Avg => {
            let children = node_children(kind, args, "CELL_VALUE or SPAN_VALUE", is_value)?;
            Ok(match kind {
                OpKind::Count => OpNode::Count(children),
                OpKind::Sum => OpNode::Sum(children),
                _ => OpNode::Avg(children),
            })
        }
        OpKind::ArgMax | OpKind::ArgMin => {
            let children = node_children(kind, args, "KV", |k| k == OpKind::Kv)?;
            let (a, b) = pair(kind, children)?;
            Ok(if kind == OpKind::ArgMax {
                OpNode::ArgMax(a, b)
            } else {
                OpNode::ArgMin(a, b)
            })
        }
        OpKind::Compose => {
            let mut children = node_children(kind, args, "CELL or SPAN", is_key)?;
            if children.len() != 1 {
                return Err(ParseError::Arity {
                    op: "COMPOSE",
                    expected: "exactly 1",
                    found: children.len(),
                });
            }
            Ok(OpNode::Compose(Box::new(children.remove(0))))
        }
        OpKind::Intersect => {
            let mut children =
                node_children(kind, args, "MULTISPAN", |k| k == OpKind::MultiSpan)?;
            if children.len() != 1 {
                return Err(ParseError::Arity {
                    op: "INTERSECT",
                    expected: "exactly 1",
                    found: children.len(),
                });
            }
            Ok(OpNode::Intersect(Box::new(children.remove(0))))
        }
    }
}

/// Parses program text into its AST.
///
/// The grammar is `node := NAME '(' arg (',' arg)* ')'` with integer or
/// node arguments; child kinds and arities are checked during the parse so
/// every accepted tree is structurally valid.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let tokens = lex(text)?;
    let input_len = text.chars().count();
    let mut parser = Parser {
        tokens,
        pos: 0,
        input_len,
    };
    let root = parser.node()?;
    if parser.peek().is_some() {
        return Err(ParseError::Syntax {
            pos: parser.here(),
            expected: "end of input".to_string(),
            found: parser.found(),
        });
    }
    Ok(Program::new(root))
}

/// The nine reasoning types, one per template row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningType {
    SpanExtraction,
    MultiSpan,
    YesNo,
    Compare,
    Calculation,
    ComposeSpan,
    ComposeMultiSpan,
    ComposeYesNo,
    Intersect,
}

impl ReasoningType {
    pub const ALL: [ReasoningType; 9] = [
        ReasoningType::SpanExtraction,
        ReasoningType::MultiSpan,
        ReasoningType::YesNo,
        ReasoningType::Compare,
        ReasoningType::Calculation,
        ReasoningType::ComposeSpan,
        ReasoningType::ComposeMultiSpan,
        ReasoningType::ComposeYesNo,
        ReasoningType::Intersect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReasoningType::SpanExtraction => "span_extraction",
            ReasoningType::MultiSpan => "multi_span",
            ReasoningType::YesNo => "yes_no",
            ReasoningType::Compare => "compare",
            ReasoningType::Calculation => "calculation",
            ReasoningType::ComposeSpan => "compose_span",
            ReasoningType::ComposeMultiSpan => "compose_multi_span",
            ReasoningType::ComposeYesNo => "compose_yes_no",
            ReasoningType::Intersect => "intersect",
        }
    }
}

impl fmt::Display for ReasoningType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Root kinds a template row admits at each hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub hop1: &'static [OpKind],
    pub hop2: Option<&'static [OpKind]>,
}

impl Template {
    pub fn hop_count(&self) -> usize {
        if self.hop2.is_some() {
            2
        } else {
            1
        }
    }
}

/// The per-hop root-kind schema for a reasoning type.
pub fn template_for(rt: ReasoningType) -> Template {
    use OpKind::*;
    match rt {
        ReasoningType::SpanExtraction => Template {
            hop1: &[Cell, CellValue, Span, SpanValue],
            hop2: None,
        },
        ReasoningType::MultiSpan => Template {
            hop1: &[MultiSpan],
            hop2: None,
        },
        ReasoningType::YesNo => Template {
            hop1: &[YesNo],
            hop2: None,
        },
        ReasoningType::Compare => Template {
            hop1: &[ArgMax, ArgMin],
            hop2: None,
        },
        ReasoningType::Calculation => Template {
            hop1: &[Sum, Avg, Count],
            hop2: None,
        },
        ReasoningType::ComposeSpan => Template {
            hop1: &[Compose],
            hop2: Some(&[Cell, Span]),
        },
        ReasoningType::ComposeMultiSpan => Template {
            hop1: &[Compose],
            hop2: Some(&[MultiSpan]),
        },
        ReasoningType::ComposeYesNo => Template {
            hop1: &[Compose],
            hop2: Some(&[YesNo]),
        },
        ReasoningType::Intersect => Template {
            hop1: &[Intersect],
            hop2: Some(&[MultiSpan]),
        },
    }
}

/// What preceded the current hop, for context-aware validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopContext {
    First,
    AfterCompose,
    AfterIntersect,
}

/// One template-placement violation, as a human-readable description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks hop-placement rules without follow-up context: the root kind must
/// appear in the hop-`hop` slot of some template row.
pub fn validate(program: &Program, hop: usize) -> Vec<Violation> {
    let kind = program.root.kind();
    let admitted = ReasoningType::ALL.iter().any(|&rt| {
        let t = template_for(rt);
        if hop <= 1 {
            t.hop1.contains(&kind)
        } else {
            t.hop2.is_some_and(|slot| slot.contains(&kind))
        }
    });
    if admitted {
        Vec::new()
    } else {
        vec![Violation(format!(
            "{} is not a legal hop-{} root in any template",
            kind.name(),
            hop.max(1)
        ))]
    }
}

/// Context-aware variant: a second hop following COMPOSE admits
/// CELL/SPAN/MULTISPAN/YESNO, one following INTERSECT only MULTISPAN.
pub fn validate_in_context(program: &Program, ctx: HopContext) -> Vec<Violation> {
    let kind = program.root.kind();
    match ctx {
        HopContext::First => validate(program, 1),
        HopContext::AfterCompose => {
            if matches!(
                kind,
                OpKind::Cell | OpKind::Span | OpKind::MultiSpan | OpKind::YesNo
            ) {
                Vec::new()
            } else {
                vec![Violation(format!(
                    "{} may not follow COMPOSE (expected CELL, SPAN, MULTISPAN, or YESNO)",
                    kind.name()
                ))]
            }
        }
        HopContext::AfterIntersect => {
            if kind == OpKind::MultiSpan {
                Vec::new()
            } else {
                vec![Violation(format!(
                    "{} may not follow INTERSECT (expected MULTISPAN)",
                    kind.name()
                ))]
            }
        }
    }
}

/// True iff the outermost operation is a multi-hop operation.
pub fn is_multihop_root(program: &Program) -> bool {
    program.is_multihop_root()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_atomic_span() {
        let p = parse("SPAN(86,89)").unwrap();
        assert_eq!(p.root, OpNode::Span(TokenSpan::new(86, 89)));
    }

    #[test]
    fn parse_is_case_and_whitespace_insensitive() {
        let a = parse("compose( cell( 12 , 14 ) )").unwrap();
        let b = parse("COMPOSE(CELL(12,14))").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_argmax_of_two_kv() {
        let p = parse("ARGMAX(KV(CELL(1,2),CELL_VALUE(3,4)),KV(CELL(5,6),CELL_VALUE(7,8)))")
            .unwrap();
        assert_eq!(p.root.kind(), OpKind::ArgMax);
    }

    #[test]
    fn compose_rejects_multispan_child() {
        // Template: COMPOSE takes a single CELL or SPAN.
        let err = parse("COMPOSE(MULTISPAN(CELL(71,76),CELL(100,101)))").unwrap_err();
        assert!(matches!(err, ParseError::ChildKind { op: "COMPOSE", .. }));
    }

    #[test]
    fn nested_compose_is_rejected() {
        assert!(matches!(
            parse("COMPOSE(COMPOSE(CELL(1,2)))"),
            Err(ParseError::ChildKind { .. })
        ));
        assert!(matches!(
            parse("MULTISPAN(INTERSECT(MULTISPAN(CELL(1,2))))"),
            Err(ParseError::ChildKind { .. })
        ));
    }

    #[test]
    fn arity_errors_name_the_node() {
        assert!(matches!(
            parse("SPAN(1)"),
            Err(ParseError::Arity { op: "SPAN", .. })
        ));
        assert!(matches!(
            parse("ARGMAX(KV(CELL(1,2),CELL_VALUE(3,4)))"),
            Err(ParseError::Arity { op: "ARGMAX", .. })
        ));
        assert!(matches!(
            parse("COMPOSE(CELL(1,2),SPAN(3,4))"),
            Err(ParseError::Arity { op: "COMPOSE", .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("SPAN(1,") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 7),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(parse("").is_err());
        assert!(parse("FOO(1,2)").is_err());
        assert!(parse("SPAN(1,2) extra").is_err());
        assert!(parse("SPAN(1,2);").is_err());
    }

    #[test]
    fn print_is_canonical() {
        let p = parse("span ( 86 , 89 )").unwrap();
        assert_eq!(p.to_string(), "SPAN(86,89)");
        let q = parse("intersect(multispan(cell(1,2)))").unwrap();
        assert_eq!(q.to_string(), "INTERSECT(MULTISPAN(CELL(1,2)))");
    }

    #[test]
    fn roundtrip_examples() {
        for text in [
            "CELL(0,0)",
            "SPAN_VALUE(10,12)",
            "YESNO(1,1)",
            "KV(SPAN(1,2),SPAN_VALUE(3,4))",
            "MULTISPAN(CELL(1,2),SPAN(3,4),CELL(5,6))",
            "SUM(CELL_VALUE(1,1),CELL_VALUE(2,2))",
            "AVG(SPAN_VALUE(4,4))",
            "COUNT(CELL_VALUE(9,9),SPAN_VALUE(10,10))",
            "ARGMIN(KV(CELL(1,2),CELL_VALUE(3,4)),KV(SPAN(5,6),SPAN_VALUE(7,8)))",
            "COMPOSE(SPAN(3,7))",
            "INTERSECT(MULTISPAN(CELL(1,2),CELL(3,4)))",
        ] {
            let p = parse(text).unwrap();
            assert_eq!(p.to_string(), text);
            assert_eq!(parse(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn multihop_roots_are_exactly_compose_and_intersect() {
        let programs: Vec<(OpKind, Program)> = all_root_kinds()
            .into_iter()
            .map(|(k, p)| (k, Program::new(p)))
            .collect();
        assert_eq!(programs.len(), 14);
        for (kind, p) in programs {
            assert_eq!(
                is_multihop_root(&p),
                matches!(kind, OpKind::Compose | OpKind::Intersect),
                "{kind:?}"
            );
        }
    }

    #[test]
    fn validate_matches_template_slots() {
        let hop1_legal: Vec<OpKind> = ReasoningType::ALL
            .iter()
            .flat_map(|&rt| template_for(rt).hop1.iter().copied())
            .collect();
        for (kind, node) in all_root_kinds() {
            let p = Program::new(node);
            let hop1_ok = validate(&p, 1).is_empty();
            assert_eq!(hop1_ok, hop1_legal.contains(&kind), "{kind:?} at hop 1");
            let hop2_ok = validate(&p, 2).is_empty();
            let expected = matches!(
                kind,
                OpKind::Cell | OpKind::Span | OpKind::MultiSpan | OpKind::YesNo
            );
            assert_eq!(hop2_ok, expected, "{kind:?} at hop 2");
        }
        // KV is never a legal root.
        let kv = parse("KV(CELL(1,2),CELL_VALUE(3,4))").unwrap();
        assert!(!validate(&kv, 1).is_empty());
        assert!(!validate(&kv, 2).is_empty());
    }

    #[test]
    fn validate_context_restricts_intersect_followup() {
        let multi = parse("MULTISPAN(CELL(1,2))").unwrap();
        let span = parse("SPAN(1,2)").unwrap();
        assert!(validate_in_context(&multi, HopContext::AfterIntersect).is_empty());
        assert!(!validate_in_context(&span, HopContext::AfterIntersect).is_empty());
        assert!(validate_in_context(&span, HopContext::AfterCompose).is_empty());
        let compose = parse("COMPOSE(CELL(1,2))").unwrap();
        assert!(validate_in_context(&compose, HopContext::First).is_empty());
        assert!(!validate_in_context(&compose, HopContext::AfterCompose).is_empty());
    }

    #[test]
    fn template_rows() {
        use OpKind::*;
        assert_eq!(
            template_for(ReasoningType::Intersect),
            Template {
                hop1: &[Intersect],
                hop2: Some(&[MultiSpan])
            }
        );
        assert_eq!(
            template_for(ReasoningType::Calculation),
            Template {
                hop1: &[Sum, Avg, Count],
                hop2: None
            }
        );
        assert_eq!(
            template_for(ReasoningType::YesNo),
            Template {
                hop1: &[YesNo],
                hop2: None
            }
        );
        for rt in ReasoningType::ALL {
            let t = template_for(rt);
            assert_eq!(t.hop_count(), if t.hop2.is_some() { 2 } else { 1 });
        }
    }

    /// One minimal program per root kind.
    pub(crate) fn all_root_kinds() -> Vec<(OpKind, OpNode)> {
        let s = TokenSpan::new(0, 1);
        let kv = || OpNode::Kv {
            key: Box::new(OpNode::Cell(s)),
            value: Box::new(OpNode::CellValue(s)),
        };
        vec![
            (OpKind::Cell, OpNode::Cell(s)),
            (OpKind::Span, OpNode::Span(s)),
            (OpKind::CellValue, OpNode::CellValue(s)),
            (OpKind::SpanValue, OpNode::SpanValue(s)),
            (OpKind::YesNo, OpNode::YesNo(s)),
            (OpKind::Kv, kv()),
            (OpKind::MultiSpan, OpNode::MultiSpan(vec![OpNode::Cell(s)])),
            (OpKind::Count, OpNode::Count(vec![OpNode::CellValue(s)])),
            (OpKind::Sum, OpNode::Sum(vec![OpNode::CellValue(s)])),
            (OpKind::Avg, OpNode::Avg(vec![OpNode::CellValue(s)])),
            (OpKind::ArgMax, OpNode::ArgMax(Box::new(kv()), Box::new(kv()))),
            (OpKind::ArgMin, OpNode::ArgMin(Box::new(kv()), Box::new(kv()))),
            (OpKind::Compose, OpNode::Compose(Box::new(OpNode::Cell(s)))),
            (
                OpKind::Intersect,
                OpNode::Intersect(Box::new(OpNode::MultiSpan(vec![OpNode::Cell(s)]))),
            ),
        ]
    }
}
