//! The self-iterative hop loop: retrieve, serialize, generate, parse,
//! execute, then inspect the program's outermost operation to decide
//! whether another hop follows.
//!
//! A COMPOSE or INTERSECT root marks an intermediate hop; its result feeds
//! the next hop's retrieval and generation. Finalization: a COMPOSE chain
//! ends with the last hop's result, an INTERSECT question ends with the
//! overlap of the two hops' sets, and a single-hop root is final as is.
//! The loop never throws — every failure is recorded in the trace and
//! surfaces as an unanswered outcome.

use crate::executor::{execute, intersect_finalize, ExecResult};
use crate::generation::{GenRequest, Generator};
use crate::knowledge::{serialize_input, KnowledgeSet};
use crate::program::{self, HopContext, OpKind, Program};
use crate::retrieval::{select, Retriever};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Loop parameters. `strict_templates` rejects programs whose root is not
/// admitted by any template at the current hop; it defaults on, which is
/// the evaluation setting — turn it off to trace off-template generators.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub max_hops: usize,
    pub strict_templates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_hops: 2,
            strict_templates: true,
        }
    }
}

/// Where a hop failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "stage", content = "detail")]
pub enum HopError {
    Retrieval(String),
    Generation(String),
    Parse(String),
    Template(Vec<String>),
    Execution(String),
}

impl fmt::Display for HopError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopError::Retrieval(d) => write!(f, "retrieval: {d}"),
            HopError::Generation(d) => write!(f, "generation: {d}"),
            HopError::Parse(d) => write!(f, "parse: {d}"),
            HopError::Template(v) => write!(f, "template: {}", v.join("; ")),
            HopError::Execution(d) => write!(f, "execution: {d}"),
        }
    }
}

/// One hop of the trace. Fields fill in as far as the hop progressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: usize,
    /// Selected candidate, `None` when retrieval itself failed.
    pub fact_index: Option<usize>,
    /// Raw generator output, `None` when generation failed.
    pub program_text: Option<String>,
    /// Parsed program in canonical form, when parsing succeeded.
    pub program: Option<Program>,
    /// Execution result, when execution succeeded.
    pub result: Option<ExecResult>,
    /// First failure of this hop, if any.
    pub error: Option<HopError>,
    /// Whether the loop continued into another hop after this one.
    pub iterate: bool,
}

/// Why a question ended without a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum UnansweredReason {
    /// A hop failed; the detail is the failing stage.
    Hop(HopError),
    /// The last hop still asked for iteration with no budget left.
    HopBudgetExhausted,
    /// Intersect finalization needs set results from both hops.
    IntersectTypeMismatch(String),
}

impl fmt::Display for UnansweredReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnansweredReason::Hop(e) => write!(f, "{e}"),
            UnansweredReason::HopBudgetExhausted => write!(f, "hop budget exhausted"),
            UnansweredReason::IntersectTypeMismatch(d) => {
                write!(f, "intersect finalization: {d}")
            }
        }
    }
}

/// Final state of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FinalAnswer {
    Answered {
        #[serde(flatten)]
        result: ExecResult,
    },
    Unanswered {
        #[serde(flatten)]
        reason: UnansweredReason,
    },
}

impl FinalAnswer {
    pub fn result(&self) -> Option<&ExecResult> {
        match self {
            FinalAnswer::Answered { result } => Some(result),
            FinalAnswer::Unanswered { .. } => None,
        }
    }

    /// Predicted answers for scoring; empty when unanswered.
    pub fn answer_list(&self) -> Vec<String> {
        self.result().map(ExecResult::answer_list).unwrap_or_default()
    }
}

/// The answer plus the full per-hop trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub final_answer: FinalAnswer,
    pub trace: Vec<HopRecord>,
}

impl AnswerOutcome {
    pub fn result(&self) -> Option<&ExecResult> {
        self.final_answer.result()
    }

    /// Predicted answers for scoring; empty when unanswered.
    pub fn answer_list(&self) -> Vec<String> {
        self.final_answer.answer_list()
    }
}

/// True iff the program's outermost operation asks for another hop and the
/// budget allows one.
pub fn detect_iteration(program: &Program, hop: usize, cfg: &PipelineConfig) -> bool {
    program.is_multihop_root() && hop < cfg.max_hops
}

fn fail(trace: Vec<HopRecord>, reason: UnansweredReason) -> AnswerOutcome {
    AnswerOutcome {
        final_answer: FinalAnswer::Unanswered { reason },
        trace,
    }
}

fn hop_failed(mut record: HopRecord, mut trace: Vec<HopRecord>, error: HopError) -> AnswerOutcome {
    record.error = Some(error.clone());
    trace.push(record);
    fail(trace, UnansweredReason::Hop(error))
}

/// Runs the hop loop for one question.
pub fn answer(
    question: &str,
    ks: &KnowledgeSet,
    retriever: &dyn Retriever,
    generator: &dyn Generator,
    cfg: &PipelineConfig,
) -> AnswerOutcome {
    let mut trace: Vec<HopRecord> = Vec::new();
    // The pending multi-hop combinator: its kind and the carrying hop's set.
    let mut pending: Option<(OpKind, ExecResult)> = None;
    let mut prev_rendered: Option<String> = None;

    for hop in 1..=cfg.max_hops.max(1) {
        let mut record = HopRecord {
            hop,
            fact_index: None,
            program_text: None,
            program: None,
            result: None,
            error: None,
            iterate: false,
        };
        let prev = prev_rendered.as_deref();

        let fact_index = match select(question, prev, ks, hop, retriever) {
            Ok(i) => i,
            Err(e) => return hop_failed(record, trace, HopError::Retrieval(e.to_string())),
        };
        record.fact_index = Some(fact_index);

        let input = match serialize_input(question, prev, ks, fact_index, true) {
            Ok(i) => i,
            Err(e) => return hop_failed(record, trace, HopError::Retrieval(e.to_string())),
        };
        let request = GenRequest::from_serialized(question, prev, &input, hop);

        let text = match generator.generate(&request) {
            Ok(t) => t,
            Err(e) => return hop_failed(record, trace, HopError::Generation(e.to_string())),
        };
        record.program_text = Some(text.clone());

        let parsed = match program::parse(&text) {
            Ok(p) => Program { hop, ..p },
            Err(e) => return hop_failed(record, trace, HopError::Parse(e.to_string())),
        };
        record.program = Some(parsed.clone());

        if cfg.strict_templates {
            let ctx = match pending.as_ref().map(|(k, _)| *k) {
                None => HopContext::First,
                Some(OpKind::Intersect) => HopContext::AfterIntersect,
                Some(_) => HopContext::AfterCompose,
            };
            let violations = program::validate_in_context(&parsed, ctx);
            if !violations.is_empty() {
                let details = violations.into_iter().map(|v| v.to_string()).collect();
                return hop_failed(record, trace, HopError::Template(details));
            }
        }

        let result = match execute(&parsed, &input) {
            Ok(r) => r,
            Err(e) => return hop_failed(record, trace, HopError::Execution(e.to_string())),
        };
        record.result = Some(result.clone());

        if detect_iteration(&parsed, hop, cfg) {
            record.iterate = true;
            trace.push(record);
            prev_rendered = Some(result.render());
            pending = Some((parsed.root.kind(), result));
            continue;
        }
        trace.push(record);

        if parsed.is_multihop_root() {
            // Multi-hop root with no budget left: the intermediate result
            // is not a final answer.
            return fail(trace, UnansweredReason::HopBudgetExhausted);
        }

        let final_result = match pending {
            None | Some((OpKind::Compose, _)) => result,
            Some((OpKind::Intersect, carried)) => {
                match (carried, result) {
                    (
                        ExecResult::StringSet { values: first },
                        ExecResult::StringSet { values: second },
                    ) => ExecResult::StringSet {
                        values: intersect_finalize(&first, &second),
                    },
                    (_, other) => {
                        return fail(
                            trace,
                            UnansweredReason::IntersectTypeMismatch(format!(
                                "expected set results from both hops, got `{other}`"
                            )),
                        )
                    }
                }
            }
            Some((kind, _)) => {
                // Unreachable: only multi-hop kinds are ever carried.
                return fail(
                    trace,
                    UnansweredReason::IntersectTypeMismatch(format!(
                        "unexpected carried operation {}",
                        kind.name()
                    )),
                );
            }
        };
        return AnswerOutcome {
            final_answer: FinalAnswer::Answered {
                result: final_result,
            },
            trace,
        };
    }

    // max_hops rounds elapsed, every hop asked to iterate.
    fail(trace, UnansweredReason::HopBudgetExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::StubGenerator;
    use crate::knowledge::{KnowledgeSet, Passage, Table};
    use crate::retrieval::GoldRetriever;

    /// Table: capitals; passage: a fact about Paris.
    fn fixture() -> KnowledgeSet {
        let table = Table::new(
            "tbl",
            vec!["Country".into(), "Capital".into()],
            vec![
                vec!["France".into(), "Paris".into()],
                vec!["Italy".into(), "Rome".into()],
            ],
        )
        .unwrap();
        KnowledgeSet::new(
            table,
            vec![Passage::new("p1", "", "Paris hosts the Louvre museum.").unwrap()],
        )
    }

    fn gold_both(ids: [&str; 2]) -> GoldRetriever {
        GoldRetriever::new(ids.iter().map(|s| s.to_string()).collect())
    }

    // Hop-1 serialization layout for a question with N tokens:
    // [BOS] yes or no <q 0..N> [SEP] None [SEP] <fact...>
    // Table fact tokens start at 4 + N + 3.

    #[test]
    fn single_hop_yesno() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        let generator = StubGenerator::fixed("YESNO(3,3)");
        let outcome = answer("Is it?", &ks, &retriever, &generator, &PipelineConfig::default());
        assert_eq!(
            outcome.result().unwrap(),
            &crate::executor::ExecResult::no()
        );
        assert_eq!(outcome.trace.len(), 1);
        assert!(!outcome.trace[0].iterate);
    }

    #[test]
    fn compose_final_is_hop2_result() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        // Question "Which museum?" = 3 tokens -> table fact starts at 10.
        // HEADER(10) :(11) Country(12) |(13) Capital(14) [ROW](15)
        // France(16) |(17) Paris(18) ...
        // Hop 2 serialization with prev "Paris" (1 token):
        // [BOS] yes or no Which museum ? [SEP] Paris [SEP] -> fact starts
        // at 10; passage "Paris hosts the Louvre museum." tokens:
        // Paris(10) hosts(11) the(12) Louvre(13) museum(14) .(15)
        let generator = StubGenerator::scripted(vec![
            "COMPOSE(CELL(18,18))".into(),
            "SPAN(13,13)".into(),
        ]);
        let outcome = answer(
            "Which museum?",
            &ks,
            &retriever,
            &generator,
            &PipelineConfig::default(),
        );
        assert_eq!(outcome.trace.len(), 2);
        assert!(outcome.trace[0].iterate);
        assert_eq!(
            outcome.trace[0].result.as_ref().unwrap().render(),
            "Paris"
        );
        assert_eq!(
            outcome.result().unwrap(),
            outcome.trace[1].result.as_ref().unwrap()
        );
        assert_eq!(outcome.result().unwrap().render(), "Louvre");
    }

    #[test]
    fn budget_exhaustion_is_unanswered() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        let generator = StubGenerator::fixed("COMPOSE(CELL(0,0))");
        // Lenient mode reaches the budget check; strict mode would already
        // reject COMPOSE as an off-template hop-2 root.
        let lenient = PipelineConfig {
            strict_templates: false,
            ..Default::default()
        };
        let outcome = answer("Q", &ks, &retriever, &generator, &lenient);
        assert_eq!(outcome.trace.len(), 2);
        assert!(matches!(
            outcome.final_answer,
            FinalAnswer::Unanswered {
                reason: UnansweredReason::HopBudgetExhausted
            }
        ));
        // One hop of budget: the same COMPOSE stops immediately, strict or
        // not (COMPOSE is a legal hop-1 root).
        let one = PipelineConfig {
            max_hops: 1,
            ..Default::default()
        };
        let outcome = answer("Q", &ks, &retriever, &generator, &one);
        assert_eq!(outcome.trace.len(), 1);
        assert!(!outcome.trace[0].iterate);
        assert!(matches!(
            outcome.final_answer,
            FinalAnswer::Unanswered {
                reason: UnansweredReason::HopBudgetExhausted
            }
        ));
    }

    #[test]
    fn parse_failure_is_contained() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        let generator = StubGenerator::fixed("SPAN(1");
        let outcome = answer("Q", &ks, &retriever, &generator, &PipelineConfig::default());
        assert_eq!(outcome.trace.len(), 1);
        assert!(matches!(
            outcome.trace[0].error,
            Some(HopError::Parse(_))
        ));
        assert!(outcome.result().is_none());
    }

    #[test]
    fn malformed_hop2_is_contained_after_good_hop1() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        let generator =
            StubGenerator::scripted(vec!["COMPOSE(CELL(18,18))".into(), "SPAN(1".into()]);
        let outcome = answer(
            "Which museum?",
            &ks,
            &retriever,
            &generator,
            &PipelineConfig::default(),
        );
        assert_eq!(outcome.trace.len(), 2);
        assert!(outcome.trace[0].iterate);
        assert!(matches!(
            outcome.final_answer,
            FinalAnswer::Unanswered {
                reason: UnansweredReason::Hop(HopError::Parse(_))
            }
        ));
    }

    #[test]
    fn strict_templates_reject_off_template_roots() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        // KV is never a template root.
        let generator = StubGenerator::fixed("KV(CELL(0,0),CELL_VALUE(0,0))");
        let strict = PipelineConfig::default();
        let outcome = answer("Q", &ks, &retriever, &generator, &strict);
        assert!(matches!(
            outcome.trace[0].error,
            Some(HopError::Template(_))
        ));
        // Lenient mode lets it through to execution, which then fails.
        let lenient = PipelineConfig {
            strict_templates: false,
            ..Default::default()
        };
        let outcome = answer("Q", &ks, &retriever, &generator, &lenient);
        assert!(matches!(
            outcome.trace[0].error,
            Some(HopError::Execution(_))
        ));
    }

    #[test]
    fn intersect_finalizes_with_overlap() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        // Hop 1 over the table, question "Q" (1 token): fact starts at 8.
        // HEADER(8) :(9) Country(10) |(11) Capital(12) [ROW](13) France(14)
        // |(15) Paris(16) [ROW](17) Italy(18) |(19) Rome(20)
        // Hop 1 set: {Paris, Rome}. Hop 2 over p1 with prev "Paris;Rome"
        // (3 tokens): [BOS] yes or no Q [SEP] Paris ; Rome [SEP] ->
        // fact starts at 10: Paris(10) hosts(11) the(12) Louvre(13)...
        let generator = StubGenerator::scripted(vec![
            "INTERSECT(MULTISPAN(CELL(16,16),CELL(20,20)))".into(),
            "MULTISPAN(SPAN(10,10))".into(),
        ]);
        let outcome = answer("Q", &ks, &retriever, &generator, &PipelineConfig::default());
        assert_eq!(outcome.trace.len(), 2);
        assert_eq!(
            outcome.result().unwrap(),
            &ExecResult::StringSet {
                values: vec!["Paris".into()]
            }
        );
    }

    #[test]
    fn trace_is_never_longer_than_budget() {
        let ks = fixture();
        let retriever = GoldRetriever::new(
            ["tbl", "p1", "tbl", "p1"].iter().map(|s| s.to_string()).collect(),
        );
        let generator = StubGenerator::fixed("COMPOSE(CELL(0,0))");
        for max_hops in 1..=4 {
            for strict_templates in [true, false] {
                let cfg = PipelineConfig {
                    max_hops,
                    strict_templates,
                };
                let outcome = answer("Q", &ks, &retriever, &generator, &cfg);
                assert!(outcome.trace.len() <= max_hops);
                if !strict_templates {
                    assert_eq!(outcome.trace.len(), max_hops);
                }
            }
        }
    }

    #[test]
    fn deterministic_outcomes() {
        let ks = fixture();
        let retriever = gold_both(["tbl", "p1"]);
        let generator = StubGenerator::scripted(vec![
            "COMPOSE(CELL(18,18))".into(),
            "SPAN(12,12)".into(),
        ]);
        let cfg = PipelineConfig::default();
        let a = answer("Which museum?", &ks, &retriever, &generator, &cfg);
        let b = answer("Which museum?", &ks, &retriever, &generator, &cfg);
        assert_eq!(a, b);
    }
}
