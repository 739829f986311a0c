//! Weak-supervision constructor: turns gold annotations (reasoning type,
//! per-hop supporting facts, per-hop answers) into executable per-hop
//! programs, then verifies them by replaying through the pipeline.
//!
//! Construction serializes each hop exactly as the pipeline would (gold
//! previous-hop answers included), locates every required string as a
//! token subsequence of the fact region, and emits the template root with
//! the located span arguments. Matching is case-insensitive over tokens
//! but the emitted spans resolve to source casing; the first occurrence
//! wins when a string appears more than once.

use crate::eval;
use crate::executor::ExecResult;
use crate::generation::{GoldProgramStore, OracleGenerator};
use crate::knowledge::{serialize_input, tokenize, KnowledgeSet, SerializedInput};
use crate::pipeline::{self, PipelineConfig};
use crate::program::{template_for, OpNode, ReasoningType, TokenSpan};
use crate::retrieval::GoldRetriever;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use thiserror::Error;

/// Annotated question type: one of the nine template rows, or the 3-hop
/// compare-over-compose form that exceeds the two-hop budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionType {
    Supported(ReasoningType),
    ComposeCompare,
}

impl QuestionType {
    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Supported(rt) => rt.name(),
            QuestionType::ComposeCompare => "compose_compare",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "compose_compare" {
            return Ok(QuestionType::ComposeCompare);
        }
        ReasoningType::ALL
            .iter()
            .find(|rt| rt.name() == s)
            .map(|&rt| QuestionType::Supported(rt))
            .ok_or_else(|| format!("unknown reasoning type `{s}`"))
    }
}

impl Serialize for QuestionType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for QuestionType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which aggregate a calculation question applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalcKind {
    Sum,
    Avg,
    Count,
}

/// The operand spans of a calculation question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalculationSpec {
    pub kind: CalcKind,
    /// Value strings to locate as CELL_VALUE/SPAN_VALUE spans.
    pub operands: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareDirection {
    Max,
    Min,
}

/// One (key, value) pair of a compare question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvPair {
    pub key: String,
    pub value: String,
}

/// The two annotated pairs of a compare question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub direction: CompareDirection,
    pub pairs: [KvPair; 2],
}

/// Gold data for one hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopAnnotation {
    /// Id of the supporting fact (table id or passage id).
    pub gold_fact_id: String,
    /// The hop's gold answer strings.
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calculation: Option<CalculationSpec>,
}

/// Full gold annotation of one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub question_id: String,
    pub question: String,
    pub reasoning_type: QuestionType,
    pub hops: Vec<HopAnnotation>,
    pub final_answers: Vec<String>,
}

impl Annotation {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    /// `table`, `text`, or `both`, from the gold facts' candidate kinds.
    pub fn knowledge_kind(&self, ks: &KnowledgeSet) -> &'static str {
        let mut table = false;
        let mut text = false;
        for hop in &self.hops {
            match ks.candidate_index_of(&hop.gold_fact_id) {
                Ok(0) => table = true,
                Ok(_) => text = true,
                Err(_) => {}
            }
        }
        match (table, text) {
            (true, true) => "both",
            (false, true) => "text",
            _ => "table",
        }
    }

    /// Gold fact ids in hop order, for the gold retriever.
    pub fn gold_fact_ids(&self) -> Vec<String> {
        self.hops.iter().map(|h| h.gold_fact_id.clone()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum ConstructionFailure {
    #[error("gold answer `{answer}` not found in the hop-{hop} fact")]
    AnswerNotFound { hop: usize, answer: String },
    #[error("annotation does not fit its template: {0}")]
    AmbiguousTemplate(String),
    #[error("hop {hop} references unknown fact `{id}`")]
    FactNotFound { hop: usize, id: String },
    #[error("question needs more hops than the two-hop templates cover")]
    OutOfScope,
}

/// One built per-hop program in canonical text form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopProgram {
    pub hop: usize,
    pub program: String,
}

/// Construction outcome for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoProgramSet {
    pub question_id: String,
    /// One program per hop when built; empty on failure.
    pub programs: Vec<HopProgram>,
    pub status: Result<(), ConstructionFailure>,
}

impl PseudoProgramSet {
    pub fn is_built(&self) -> bool {
        self.status.is_ok()
    }

    fn failed(question_id: &str, failure: ConstructionFailure) -> Self {
        PseudoProgramSet {
            question_id: question_id.to_string(),
            programs: Vec::new(),
            status: Err(failure),
        }
    }
}

/// First occurrence of `answer`'s token sequence inside `region`,
/// case-insensitive.
fn locate(input: &SerializedInput, region: Range<usize>, answer: &str) -> Option<TokenSpan> {
    let needle: Vec<String> = tokenize(answer)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect();
    if needle.is_empty() || region.len() < needle.len() {
        return None;
    }
    let tokens = input.tokens();
    for start in region.start..=(region.end - needle.len()) {
        let found = needle
            .iter()
            .enumerate()
            .all(|(i, n)| tokens[start + i].to_lowercase() == *n);
        if found {
            return Some(TokenSpan::new(start, start + needle.len() - 1));
        }
    }
    None
}

/// Everything needed to emit spans for one hop.
struct HopSite {
    input: SerializedInput,
    /// Table facts take CELL-kind atoms, passages SPAN-kind.
    from_table: bool,
    hop: usize,
}

impl HopSite {
    fn locate_fact(&self, answer: &str) -> Result<TokenSpan, ConstructionFailure> {
        locate(&self.input, self.input.segments().fact.clone(), answer).ok_or_else(|| {
            ConstructionFailure::AnswerNotFound {
                hop: self.hop,
                answer: answer.to_string(),
            }
        })
    }

    fn key_atom(&self, answer: &str) -> Result<OpNode, ConstructionFailure> {
        let span = self.locate_fact(answer)?;
        Ok(if self.from_table {
            OpNode::Cell(span)
        } else {
            OpNode::Span(span)
        })
    }

    fn value_atom(&self, answer: &str) -> Result<OpNode, ConstructionFailure> {
        let span = self.locate_fact(answer)?;
        Ok(if self.from_table {
            OpNode::CellValue(span)
        } else {
            OpNode::SpanValue(span)
        })
    }

    /// YESNO spans point into the `yes or no` prefix, not the fact.
    fn yesno_atom(&self, answer: &str) -> Result<OpNode, ConstructionFailure> {
        let span = locate(&self.input, self.input.segments().prefix.clone(), answer);
        match span {
            Some(s) if answer.eq_ignore_ascii_case("yes") || answer.eq_ignore_ascii_case("no") => {
                Ok(OpNode::YesNo(s))
            }
            _ => Err(ConstructionFailure::AnswerNotFound {
                hop: self.hop,
                answer: answer.to_string(),
            }),
        }
    }
}

fn single_answer<'a>(
    hop: &'a HopAnnotation,
    index: usize,
) -> Result<&'a str, ConstructionFailure> {
    match hop.gold_answers.as_slice() {
        [one] => Ok(one),
        other => Err(ConstructionFailure::AmbiguousTemplate(format!(
            "hop {} expects exactly one gold answer, found {}",
            index,
            other.len()
        ))),
    }
}

fn multi_atoms(site: &HopSite, answers: &[String]) -> Result<OpNode, ConstructionFailure> {
    if answers.is_empty() {
        return Err(ConstructionFailure::AmbiguousTemplate(format!(
            "hop {} expects at least one gold answer",
            site.hop
        )));
    }
    let atoms: Result<Vec<OpNode>, _> = answers.iter().map(|a| site.key_atom(a)).collect();
    Ok(OpNode::MultiSpan(atoms?))
}

/// Renders the gold previous-hop answer the way the pipeline renders an
/// executed result: single answers verbatim, sets joined with ";".
fn render_gold_prev(hop: &HopAnnotation) -> String {
    hop.gold_answers.join(";")
}

/// Builds the pseudo program set for one annotated question.
pub fn build_pseudo(ann: &Annotation, ks: &KnowledgeSet) -> PseudoProgramSet {
    let qid = &ann.question_id;
    let rt = match ann.reasoning_type {
        QuestionType::Supported(rt) => rt,
        QuestionType::ComposeCompare => {
            return PseudoProgramSet::failed(qid, ConstructionFailure::OutOfScope)
        }
    };
    match build_supported(ann, ks, rt) {
        Ok(programs) => PseudoProgramSet {
            question_id: qid.clone(),
            programs,
            status: Ok(()),
        },
        Err(failure) => PseudoProgramSet::failed(qid, failure),
    }
}

fn build_supported(
    ann: &Annotation,
    ks: &KnowledgeSet,
    rt: ReasoningType,
) -> Result<Vec<HopProgram>, ConstructionFailure> {
    let template = template_for(rt);
    if ann.hops.len() != template.hop_count() {
        return Err(ConstructionFailure::AmbiguousTemplate(format!(
            "{} expects {} hop(s), annotation has {}",
            rt,
            template.hop_count(),
            ann.hops.len()
        )));
    }
    if ann.final_answers.is_empty() {
        return Err(ConstructionFailure::AmbiguousTemplate(
            "no final answers annotated".to_string(),
        ));
    }

    let site = |hop_index: usize| -> Result<HopSite, ConstructionFailure> {
        let hop = hop_index + 1;
        let hop_ann = &ann.hops[hop_index];
        let candidate = ks.candidate_index_of(&hop_ann.gold_fact_id).map_err(|_| {
            ConstructionFailure::FactNotFound {
                hop,
                id: hop_ann.gold_fact_id.clone(),
            }
        })?;
        let prev = if hop_index == 0 {
            None
        } else {
            Some(render_gold_prev(&ann.hops[hop_index - 1]))
        };
        let input = serialize_input(&ann.question, prev.as_deref(), ks, candidate, true)
            .map_err(|e| ConstructionFailure::AmbiguousTemplate(e.to_string()))?;
        Ok(HopSite {
            input,
            from_table: candidate == 0,
            hop,
        })
    };

    let mut roots: Vec<OpNode> = Vec::new();
    match rt {
        ReasoningType::SpanExtraction => {
            let s = site(0)?;
            roots.push(s.key_atom(single_answer(&ann.hops[0], 1)?)?);
        }
        ReasoningType::MultiSpan => {
            let s = site(0)?;
            roots.push(multi_atoms(&s, &ann.hops[0].gold_answers)?);
        }
        ReasoningType::YesNo => {
            let s = site(0)?;
            roots.push(s.yesno_atom(single_answer(&ann.hops[0], 1)?)?);
        }
        ReasoningType::Compare => {
            let s = site(0)?;
            let spec = ann.hops[0].compare.as_ref().ok_or_else(|| {
                ConstructionFailure::AmbiguousTemplate(
                    "compare question lacks annotated (key, value) pairs".to_string(),
                )
            })?;
            let kv = |pair: &KvPair| -> Result<OpNode, ConstructionFailure> {
                Ok(OpNode::Kv {
                    key: Box::new(s.key_atom(&pair.key)?),
                    value: Box::new(s.value_atom(&pair.value)?),
                })
            };
            let (a, b) = (kv(&spec.pairs[0])?, kv(&spec.pairs[1])?);
            roots.push(match spec.direction {
                CompareDirection::Max => OpNode::ArgMax(Box::new(a), Box::new(b)),
                CompareDirection::Min => OpNode::ArgMin(Box::new(a), Box::new(b)),
            });
        }
        ReasoningType::Calculation => {
            let s = site(0)?;
            let spec = ann.hops[0].calculation.as_ref().ok_or_else(|| {
                ConstructionFailure::AmbiguousTemplate(
                    "calculation question lacks annotated operands".to_string(),
                )
            })?;
            if spec.operands.is_empty() {
                return Err(ConstructionFailure::AmbiguousTemplate(
                    "calculation question has no operands".to_string(),
                ));
            }
            let values: Result<Vec<OpNode>, _> =
                spec.operands.iter().map(|v| s.value_atom(v)).collect();
            let values = values?;
            roots.push(match spec.kind {
                CalcKind::Sum => OpNode::Sum(values),
                CalcKind::Avg => OpNode::Avg(values),
                CalcKind::Count => OpNode::Count(values),
            });
        }
        ReasoningType::ComposeSpan
        | ReasoningType::ComposeMultiSpan
        | ReasoningType::ComposeYesNo => {
            let first = site(0)?;
            let intermediate = single_answer(&ann.hops[0], 1)?;
            roots.push(OpNode::Compose(Box::new(first.key_atom(intermediate)?)));
            let second = site(1)?;
            roots.push(match rt {
                ReasoningType::ComposeSpan => second.key_atom(single_answer(&ann.hops[1], 2)?)?,
                ReasoningType::ComposeMultiSpan => {
                    multi_atoms(&second, &ann.hops[1].gold_answers)?
                }
                _ => second.yesno_atom(single_answer(&ann.hops[1], 2)?)?,
            });
        }
        ReasoningType::Intersect => {
            let first = site(0)?;
            roots.push(OpNode::Intersect(Box::new(multi_atoms(
                &first,
                &ann.hops[0].gold_answers,
            )?)));
            let second = site(1)?;
            roots.push(multi_atoms(&second, &ann.hops[1].gold_answers)?);
        }
    }

    Ok(roots
        .into_iter()
        .enumerate()
        .map(|(i, root)| HopProgram {
            hop: i + 1,
            program: root.to_string(),
        })
        .collect())
}

/// Per-hop programs of built items, keyed for the oracle generator.
pub fn gold_program_store<'a>(
    sets: impl IntoIterator<Item = &'a PseudoProgramSet>,
) -> GoldProgramStore {
    let mut store = GoldProgramStore::new();
    for set in sets {
        for hp in &set.programs {
            store.insert(set.question_id.clone(), hp.hop, hp.program.clone());
        }
    }
    store
}

/// Replay report: construction coverage plus EM/F1 of the replayed finals
/// over the built items.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub total: usize,
    pub built: usize,
    pub coverage: f64,
    pub em: f64,
    pub f1: f64,
    pub failures: Vec<(String, ConstructionFailure)>,
}

/// Builds pseudo programs for every item, replays them through the
/// pipeline with the gold retriever and oracle generator, and scores the
/// finals against the annotated answers.
pub fn replay_verify<'a>(
    items: impl IntoIterator<Item = (&'a Annotation, &'a KnowledgeSet)>,
) -> ReplayReport {
    let items: Vec<(&Annotation, &KnowledgeSet)> = items.into_iter().collect();
    let sets: Vec<PseudoProgramSet> = items
        .iter()
        .map(|(ann, ks)| build_pseudo(ann, ks))
        .collect();
    let store = gold_program_store(sets.iter().filter(|s| s.is_built()));

    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut built = 0usize;
    let mut failures = Vec::new();
    let cfg = PipelineConfig::default();

    for ((ann, ks), set) in items.iter().zip(&sets) {
        match &set.status {
            Ok(()) => built += 1,
            Err(failure) => {
                failures.push((set.question_id.clone(), failure.clone()));
                continue;
            }
        }
        let retriever = GoldRetriever::new(ann.gold_fact_ids());
        let generator = OracleGenerator::new(&store, ann.question_id.clone());
        let outcome = pipeline::answer(&ann.question, ks, &retriever, &generator, &cfg);
        let pred = outcome.answer_list();
        let (em, f1) = eval::score(&pred, &ann.final_answers).unwrap_or((false, 0.0));
        em_sum += if em { 1.0 } else { 0.0 };
        f1_sum += f1;
    }

    let total = items.len();
    ReplayReport {
        total,
        built,
        coverage: if total == 0 {
            1.0
        } else {
            built as f64 / total as f64
        },
        em: if built == 0 { 0.0 } else { em_sum / built as f64 },
        f1: if built == 0 { 0.0 } else { f1_sum / built as f64 },
        failures,
    }
}

/// Executes one built program set hop by hop against gold serializations
/// and returns the per-hop results.
pub fn execute_pseudo(
    ann: &Annotation,
    ks: &KnowledgeSet,
    set: &PseudoProgramSet,
) -> Result<Vec<ExecResult>, String> {
    let mut results = Vec::new();
    for hp in &set.programs {
        let hop_index = hp.hop - 1;
        let hop_ann = ann.hops.get(hop_index).ok_or("hop out of range")?;
        let candidate = ks
            .candidate_index_of(&hop_ann.gold_fact_id)
            .map_err(|e| e.to_string())?;
        let prev = if hop_index == 0 {
            None
        } else {
            Some(render_gold_prev(&ann.hops[hop_index - 1]))
        };
        let input = serialize_input(&ann.question, prev.as_deref(), ks, candidate, true)
            .map_err(|e| e.to_string())?;
        let program = crate::program::parse(&hp.program).map_err(|e| e.to_string())?;
        results.push(crate::executor::execute(&program, &input).map_err(|e| e.to_string())?);
    }
    Ok(results)
}
