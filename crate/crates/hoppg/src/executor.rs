//! Symbolic program evaluation, from the atomic operations up to the
//! high-order operations.
//!
//! Atomic nodes resolve their token span against the serialized input;
//! high-order nodes fold their children's results. CELL and SPAN (likewise
//! CELL_VALUE and SPAN_VALUE) evaluate identically — the table/text
//! distinction is provenance metadata, not semantics.

use crate::knowledge::{SerializedInput, SpanError};
use crate::program::{OpNode, Program, TokenSpan};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// A per-hop answer: scalar text, a number, an ordered string set, or a
/// yes/no verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ExecResult {
    Scalar { value: String },
    Number { value: f64 },
    StringSet { values: Vec<String> },
    YesNo { value: YesNoAnswer },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YesNoAnswer {
    Yes,
    No,
}

impl ExecResult {
    pub fn scalar(value: impl Into<String>) -> Self {
        ExecResult::Scalar {
            value: value.into(),
        }
    }

    pub fn number(value: f64) -> Self {
        ExecResult::Number { value }
    }

    /// Builds a set, de-duplicating under the case/whitespace-insensitive
    /// key while preserving first-occurrence order and surface forms.
    pub fn string_set(items: impl IntoIterator<Item = String>) -> Self {
        let mut values: Vec<String> = Vec::new();
        for item in items {
            if !values.iter().any(|v| set_key(v) == set_key(&item)) {
                values.push(item);
            }
        }
        ExecResult::StringSet { values }
    }

    pub fn yes() -> Self {
        ExecResult::YesNo {
            value: YesNoAnswer::Yes,
        }
    }

    pub fn no() -> Self {
        ExecResult::YesNo {
            value: YesNoAnswer::No,
        }
    }

    /// Renders the result for the next hop's previous-answer segment:
    /// scalars verbatim, numbers in shortest round-trip form, sets joined
    /// with ";", yes/no lowercase.
    pub fn render(&self) -> String {
        match self {
            ExecResult::Scalar { value } => value.clone(),
            ExecResult::Number { value } => format_number(*value),
            ExecResult::StringSet { values } => values.join(";"),
            ExecResult::YesNo { value } => match value {
                YesNoAnswer::Yes => "yes".to_string(),
                YesNoAnswer::No => "no".to_string(),
            },
        }
    }

    /// The result as an answer list, for EM/F1 scoring.
    pub fn answer_list(&self) -> Vec<String> {
        match self {
            ExecResult::StringSet { values } => values.clone(),
            other => vec![other.render()],
        }
    }
}

impl fmt::Display for ExecResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Shortest decimal form that round-trips; integral values print without a
/// fractional part.
fn format_number(value: f64) -> String {
    let mut s = format!("{value}");
    if s.ends_with(".0") {
        s.truncate(s.len() - 2);
    }
    s
}

/// Normalization key for set membership: lowercase, whitespace collapsed.
pub(crate) fn set_key(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("span `{text}` is not numeric")]
    NonNumericSpan { text: String },
    #[error("{op} requires at least one argument")]
    EmptyMultiSpan { op: &'static str },
    #[error("KV is only executable inside ARGMAX/ARGMIN")]
    BareKeyValue,
}

/// Parses the numeric value of a CELL_VALUE/SPAN_VALUE span.
///
/// Strips thousands separators and whitespace, a leading currency symbol,
/// and a trailing `%` (which divides by 100); accepts signed decimals.
pub fn parse_numeric(text: &str) -> Result<f64, ExecError> {
    let err = || ExecError::NonNumericSpan {
        text: text.to_string(),
    };
    let mut s = text.trim().to_string();
    let percent = s.ends_with('%');
    if percent {
        s.truncate(s.len() - 1);
    }
    let s: String = s
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .collect();
    let s = s
        .strip_prefix(['$', '€', '£', '¥'])
        .unwrap_or(&s)
        .to_string();
    if s.is_empty() {
        return Err(err());
    }
    let value: f64 = s.parse().map_err(|_| err())?;
    if !value.is_finite() {
        return Err(err());
    }
    Ok(if percent { value / 100.0 } else { value })
}

/// Intermediate value of one node: either a hop result or a KV pair.
enum NodeValue {
    Result(ExecResult),
    Pair { key: String, value: f64 },
}

fn span_scalar(input: &SerializedInput, span: TokenSpan) -> Result<String, ExecError> {
    Ok(input.span_text(span.start, span.end)?)
}

fn eval(node: &OpNode, input: &SerializedInput) -> Result<NodeValue, ExecError> {
    let result = |r| Ok(NodeValue::Result(r));
    match node {
        OpNode::Cell(s) | OpNode::Span(s) => result(ExecResult::scalar(span_scalar(input, *s)?)),
        OpNode::CellValue(s) | OpNode::SpanValue(s) => {
            let text = span_scalar(input, *s)?;
            result(ExecResult::number(parse_numeric(&text)?))
        }
        OpNode::YesNo(s) => {
            let text = span_scalar(input, *s)?;
            if text.trim().eq_ignore_ascii_case("no") {
                result(ExecResult::no())
            } else {
                result(ExecResult::yes())
            }
        }
        OpNode::Kv { key, value } => {
            let key = match eval(key, input)? {
                NodeValue::Result(ExecResult::Scalar { value }) => value,
                _ => return Err(ExecError::BareKeyValue),
            };
            let value = match eval(value, input)? {
                NodeValue::Result(ExecResult::Number { value }) => value,
                _ => return Err(ExecError::BareKeyValue),
            };
            Ok(NodeValue::Pair { key, value })
        }
        OpNode::MultiSpan(children) => {
            if children.is_empty() {
                return Err(ExecError::EmptyMultiSpan { op: "MULTISPAN" });
            }
            let mut items = Vec::with_capacity(children.len());
            for c in children {
                match eval(c, input)? {
                    NodeValue::Result(ExecResult::Scalar { value }) => items.push(value),
                    _ => return Err(ExecError::BareKeyValue),
                }
            }
            result(ExecResult::string_set(items))
        }
        OpNode::Count(children) | OpNode::Sum(children) | OpNode::Avg(children) => {
            let op = node.kind().name();
            if children.is_empty() {
                return Err(ExecError::EmptyMultiSpan { op });
            }
            let mut values = Vec::with_capacity(children.len());
            for c in children {
                match eval(c, input)? {
                    NodeValue::Result(ExecResult::Number { value }) => values.push(value),
                    _ => return Err(ExecError::BareKeyValue),
                }
            }
            let n = values.len() as f64;
            let sum: f64 = values.iter().sum();
            result(ExecResult::number(match node {
                OpNode::Count(_) => n,
                OpNode::Sum(_) => sum,
                _ => sum / n,
            }))
        }
        OpNode::ArgMax(a, b) | OpNode::ArgMin(a, b) => {
            let (k1, v1) = match eval(a, input)? {
                NodeValue::Pair { key, value } => (key, value),
                _ => return Err(ExecError::BareKeyValue),
            };
            let (k2, v2) = match eval(b, input)? {
                NodeValue::Pair { key, value } => (key, value),
                _ => return Err(ExecError::BareKeyValue),
            };
            // Ties keep the first pair's key.
            let take_second = match node {
                OpNode::ArgMax(_, _) => v2 > v1,
                _ => v2 < v1,
            };
            result(ExecResult::scalar(if take_second { k2 } else { k1 }))
        }
        OpNode::Compose(inner) | OpNode::Intersect(inner) => eval(inner, input),
    }
}

/// Evaluates a program against the serialized input it was generated for.
pub fn execute(program: &Program, input: &SerializedInput) -> Result<ExecResult, ExecError> {
    match eval(&program.root, input)? {
        NodeValue::Result(r) => Ok(r),
        NodeValue::Pair { .. } => Err(ExecError::BareKeyValue),
    }
}

/// Final answer of an intersect question: items present in both hop
/// results under the normalized key, in first-hop order.
pub fn intersect_finalize(hop1: &[String], hop2: &[String]) -> Vec<String> {
    let keys2: Vec<String> = hop2.iter().map(|s| set_key(s)).collect();
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for item in hop1 {
        let key = set_key(item);
        if keys2.contains(&key) && !seen.contains(&key) {
            seen.push(key);
            out.push(item.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{serialize_input, KnowledgeSet, Passage, Table};
    use crate::program::parse;

    /// Input whose fact region is the given passage text.
    fn input_for(text: &str) -> SerializedInput {
        let table = Table::new("t", vec!["h".into()], vec![vec!["x".into()]]).unwrap();
        let ks = KnowledgeSet::new(table, vec![Passage::new("p", "", text).unwrap()]);
        serialize_input("q", None, &ks, 1, true).unwrap()
    }

    fn run(program: &str, text: &str) -> Result<ExecResult, ExecError> {
        execute(&parse(program).unwrap(), &input_for(text))
    }

    // Fact region starts after [BOS] yes or no q [SEP] None [SEP] = index 8.
    const FACT: usize = 8;

    #[test]
    fn atomic_spans_resolve_verbatim() {
        let r = run(&format!("SPAN({},{})", FACT, FACT + 1), "Ridley Scott directed Alien");
        assert_eq!(r.unwrap(), ExecResult::scalar("Ridley Scott"));
        let r = run(&format!("CELL({},{})", FACT, FACT), "Paris is nice");
        assert_eq!(r.unwrap(), ExecResult::scalar("Paris"));
    }

    #[test]
    fn yesno_only_no_yields_no() {
        // Prefix tokens: [BOS]=0 yes=1 or=2 no=3.
        let input = input_for("anything");
        let yes = execute(&parse("YESNO(1,1)").unwrap(), &input).unwrap();
        assert_eq!(yes, ExecResult::yes());
        let no = execute(&parse("YESNO(3,3)").unwrap(), &input).unwrap();
        assert_eq!(no, ExecResult::no());
        // A wider span is not exactly "no".
        let wide = execute(&parse("YESNO(1,3)").unwrap(), &input).unwrap();
        assert_eq!(wide, ExecResult::yes());
    }

    #[test]
    fn sum_and_avg_over_values() {
        let text = "2 3 4";
        let sum = run(
            &format!("SUM(SPAN_VALUE({0},{0}),SPAN_VALUE({1},{1}))", FACT, FACT + 1),
            text,
        )
        .unwrap();
        assert_eq!(sum, ExecResult::number(5.0));
        let avg = run(
            &format!(
                "AVG(SPAN_VALUE({0},{0}),SPAN_VALUE({1},{1}),SPAN_VALUE({2},{2}))",
                FACT,
                FACT + 1,
                FACT + 2
            ),
            text,
        )
        .unwrap();
        assert_eq!(avg, ExecResult::number(3.0));
        let count = run(
            &format!("COUNT(SPAN_VALUE({0},{0}),SPAN_VALUE({1},{1}))", FACT, FACT + 1),
            text,
        )
        .unwrap();
        assert_eq!(count, ExecResult::number(2.0));
    }

    #[test]
    fn argmax_picks_larger_value_key() {
        let text = "A 3 B 7";
        let program = format!(
            "ARGMAX(KV(SPAN({0},{0}),SPAN_VALUE({1},{1})),KV(SPAN({2},{2}),SPAN_VALUE({3},{3})))",
            FACT,
            FACT + 1,
            FACT + 2,
            FACT + 3
        );
        assert_eq!(run(&program, text).unwrap(), ExecResult::scalar("B"));
        let argmin = program.replacen("ARGMAX", "ARGMIN", 1);
        assert_eq!(run(&argmin, text).unwrap(), ExecResult::scalar("A"));
    }

    #[test]
    fn argmax_tie_keeps_first_key() {
        let text = "A 5 B 5";
        let program = format!(
            "ARGMAX(KV(SPAN({0},{0}),SPAN_VALUE({1},{1})),KV(SPAN({2},{2}),SPAN_VALUE({3},{3})))",
            FACT,
            FACT + 1,
            FACT + 2,
            FACT + 3
        );
        assert_eq!(run(&program, text).unwrap(), ExecResult::scalar("A"));
        let argmin = program.replacen("ARGMAX", "ARGMIN", 1);
        assert_eq!(run(&argmin, text).unwrap(), ExecResult::scalar("A"));
    }

    #[test]
    fn multispan_dedups_case_insensitively() {
        let text = "Paris paris Rome";
        let program = format!(
            "MULTISPAN(SPAN({0},{0}),SPAN({1},{1}),SPAN({2},{2}))",
            FACT,
            FACT + 1,
            FACT + 2
        );
        let r = run(&program, text).unwrap();
        assert_eq!(
            r,
            ExecResult::StringSet {
                values: vec!["Paris".into(), "Rome".into()]
            }
        );
    }

    #[test]
    fn compose_and_intersect_are_transparent() {
        let text = "Paris Rome";
        let inner = format!("SPAN({0},{0})", FACT);
        assert_eq!(
            run(&format!("COMPOSE({inner})"), text).unwrap(),
            run(&inner, text).unwrap()
        );
        let multi = format!("MULTISPAN(SPAN({0},{0}),SPAN({1},{1}))", FACT, FACT + 1);
        assert_eq!(
            run(&format!("INTERSECT({multi})"), text).unwrap(),
            run(&multi, text).unwrap()
        );
    }

    #[test]
    fn numeric_parse_rules() {
        assert_eq!(parse_numeric("1,234").unwrap(), 1234.0);
        assert_eq!(parse_numeric("1, 234").unwrap(), 1234.0);
        assert_eq!(parse_numeric("45%").unwrap(), 0.45);
        assert_eq!(parse_numeric("$12.50").unwrap(), 12.5);
        assert_eq!(parse_numeric("-3.5").unwrap(), -3.5);
        assert_eq!(parse_numeric("+7").unwrap(), 7.0);
        assert!(matches!(
            parse_numeric("N/A"),
            Err(ExecError::NonNumericSpan { .. })
        ));
        assert!(parse_numeric("").is_err());
        assert!(parse_numeric("%").is_err());
    }

    #[test]
    fn errors_are_typed_not_panics() {
        let text = "1 2";
        assert!(matches!(
            run("SPAN(9999,10000)", text),
            Err(ExecError::Span(SpanError::IndexOutOfBounds { .. }))
        ));
        assert!(matches!(
            run(&format!("CELL_VALUE({0},{0})", FACT - 2), text), // "[SEP]"
            Err(ExecError::NonNumericSpan { .. })
        ));
        // A well-formed KV pair is not a standalone result.
        assert!(matches!(
            run(&format!("KV(CELL(1,2),CELL_VALUE({FACT},{FACT}))"), "5 6"),
            Err(ExecError::BareKeyValue)
        ));
    }

    #[test]
    fn intersect_finalize_is_order_preserving_overlap() {
        let a = vec!["A".to_string(), "B".to_string()];
        let b = vec!["B".to_string(), "C".to_string()];
        assert_eq!(intersect_finalize(&a, &b), vec!["B".to_string()]);
        assert_eq!(intersect_finalize(&a, &a), a);
        // Case/whitespace-insensitive matching keeps hop-1 surface forms.
        let c = vec!["New  york".to_string()];
        let d = vec!["new york".to_string()];
        assert_eq!(intersect_finalize(&c, &d), vec!["New  york".to_string()]);
        assert_eq!(
            intersect_finalize(&a, &["Z".to_string()]),
            Vec::<String>::new()
        );
    }

    #[test]
    fn render_forms() {
        assert_eq!(ExecResult::scalar("Paris").render(), "Paris");
        assert_eq!(ExecResult::number(5.0).render(), "5");
        assert_eq!(ExecResult::number(2.5).render(), "2.5");
        assert_eq!(
            ExecResult::string_set(vec!["A".into(), "B".into()]).render(),
            "A;B"
        );
        assert_eq!(ExecResult::no().render(), "no");
    }
}
