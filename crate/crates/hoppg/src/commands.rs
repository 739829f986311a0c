//! The operations behind the `hoppg` binary: dataset runs, pseudo-program
//! construction, evaluation reports, and one-off program execution. The
//! binary stays thin; examples call these directly.

use crate::dataset::{self, DatasetError, DatasetRecord, TableSpec};
use crate::eval::{self, BreakdownReport, ScoreError, ScoredItem};
use crate::executor::{self, ExecError, ExecResult};
use crate::generation::{GoldProgramStore, OracleGenerator, RemoteGenerator, StubGenerator};
use crate::knowledge::{serialize_input, KnowledgeError, KnowledgeSet, Passage, Table};
use crate::pipeline::{self, FinalAnswer, HopRecord, PipelineConfig};
use crate::program::{OpKind, ParseError};
use crate::pseudo;
use crate::retrieval::{GoldRetriever, LexicalRetriever, Retriever};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrieverChoice {
    Gold,
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorChoice {
    /// Replay gold programs from annotations or a sidecar.
    Oracle,
    /// Scripted stub; hop h emits `script[h-1]`, then `SPAN(0,0)`.
    Stub { script: Vec<String> },
    /// JSON-over-HTTP generator service.
    Remote { endpoint: String },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub retriever: RetrieverChoice,
    pub generator: GeneratorChoice,
    pub max_hops: usize,
    pub strict_templates: bool,
    pub jobs: usize,
    pub keep_going: bool,
    /// Optional pseudo-program sidecar backing the oracle generator;
    /// without it the oracle builds programs from the annotations.
    pub programs: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            retriever: RetrieverChoice::Gold,
            generator: GeneratorChoice::Oracle,
            max_hops: 2,
            strict_templates: false,
            jobs: 1,
            keep_going: false,
            programs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("cannot reach endpoint: {0}")]
    Endpoint(String),
    #[error("fact file `{path}` is neither a table nor a passage: {detail}")]
    BadFactFile { path: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    #[serde(rename = "final")]
    pub final_answer: FinalAnswer,
    pub trace: Vec<HopRecord>,
}

/// One line of a pseudo-program sidecar: a built (hop, program) pair or a
/// construction failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarLine {
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub predictions: Vec<PredictionRecord>,
    /// Present when at least one record carries an annotation.
    pub report: Option<BreakdownReport>,
    pub scored: Vec<ScoredItem>,
    /// Rendered record-level failures (malformed lines, bad tables).
    pub record_errors: Vec<String>,
}

impl RunOutcome {
    /// True when every record was processed cleanly.
    pub fn clean(&self) -> bool {
        self.record_errors.is_empty()
    }
}

fn resolve_generator(
    choice: &GeneratorChoice,
) -> Result<Option<Box<dyn crate::generation::Generator>>, CommandError> {
    match choice {
        GeneratorChoice::Oracle => Ok(None),
        GeneratorChoice::Stub { script } => Ok(Some(Box::new(StubGenerator::scripted(
            script.clone(),
        )))),
        GeneratorChoice::Remote { endpoint } => Ok(Some(Box::new(
            RemoteGenerator::new(endpoint.clone()).map_err(|e| CommandError::Endpoint(e.to_string()))?,
        ))),
    }
}

/// Loads a pseudo-program sidecar into an oracle store.
pub fn load_sidecar(path: &Path) -> Result<GoldProgramStore, CommandError> {
    let file = File::open(path)?;
    let mut store = GoldProgramStore::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SidecarLine =
            serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
                line: i + 1,
                source,
            })?;
        if let (Some(hop), Some(program)) = (parsed.hop, parsed.program) {
            store.insert(parsed.question_id, hop, program);
        }
    }
    Ok(store)
}

fn read_records(
    dataset_path: &Path,
    keep_going: bool,
    record_errors: &mut Vec<String>,
) -> Result<Vec<DatasetRecord>, CommandError> {
    let mut records = Vec::new();
    for result in dataset::read_jsonl(dataset_path)? {
        match result {
            Ok(record) => records.push(record),
            Err(e) if keep_going => record_errors.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(records)
}

/// Runs the pipeline over a JSONL dataset, writing one prediction line per
/// record (in input order) and reporting EM/F1 when annotations exist.
pub fn cmd_run(
    dataset_path: &Path,
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<RunOutcome, CommandError> {
    let mut record_errors = Vec::new();
    let records = read_records(dataset_path, cfg.keep_going, &mut record_errors)?;

    // Oracle programs come from the sidecar when given, otherwise from the
    // records' own annotations.
    let store = if cfg.generator == GeneratorChoice::Oracle {
        match &cfg.programs {
            Some(path) => load_sidecar(path)?,
            None => {
                let mut sets = Vec::new();
                for record in &records {
                    if let (Some(ann), Ok(ks)) = (record.annotation(), record.knowledge_set()) {
                        sets.push(pseudo::build_pseudo(&ann, &ks));
                    }
                }
                pseudo::gold_program_store(sets.iter().filter(|s| s.is_built()))
            }
        }
    } else {
        GoldProgramStore::new()
    };
    let shared_generator = resolve_generator(&cfg.generator)?;
    let lexical = LexicalRetriever;
    let pipeline_cfg = PipelineConfig {
        max_hops: cfg.max_hops,
        strict_templates: cfg.strict_templates,
    };

    let run_one = |record: &DatasetRecord| -> Result<(PredictionRecord, Option<ScoredItem>), String> {
        let ks = record.knowledge_set().map_err(|e| e.to_string())?;
        let annotation = record.annotation();
        let gold_retriever = annotation
            .as_ref()
            .map(|a| GoldRetriever::new(a.gold_fact_ids()))
            .unwrap_or_else(|| GoldRetriever::new(Vec::new()));
        let retriever: &dyn Retriever = match cfg.retriever {
            RetrieverChoice::Gold => &gold_retriever,
            RetrieverChoice::Lexical => &lexical,
        };
        let oracle;
        let generator: &dyn crate::generation::Generator = match &shared_generator {
            Some(g) => g.as_ref(),
            None => {
                oracle = OracleGenerator::new(&store, record.question_id.clone());
                &oracle
            }
        };
        let outcome = pipeline::answer(&record.question, &ks, retriever, generator, &pipeline_cfg);
        let scored = annotation.as_ref().map(|ann| {
            let (em, f1) =
                eval::score(&outcome.answer_list(), &ann.final_answers).unwrap_or((false, 0.0));
            ScoredItem {
                question_id: record.question_id.clone(),
                em,
                f1,
                reasoning_type: Some(ann.reasoning_type.name().to_string()),
                hop_count: Some(ann.hop_count()),
                knowledge_kind: Some(ann.knowledge_kind(&ks).to_string()),
            }
        });
        let prediction = PredictionRecord {
            question_id: record.question_id.clone(),
            final_answer: outcome.final_answer,
            trace: outcome.trace,
        };
        Ok((prediction, scored))
    };

    // Bounded parallelism; results keep input order.
    let results: Vec<Result<(PredictionRecord, Option<ScoredItem>), String>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| records.par_iter().map(run_one).collect())
    } else {
        records.iter().map(run_one).collect()
    };

    let mut predictions = Vec::with_capacity(results.len());
    let mut scored = Vec::new();
    for result in results {
        match result {
            Ok((prediction, item)) => {
                predictions.push(prediction);
                scored.extend(item);
            }
            Err(e) => record_errors.push(e),
        }
    }

    if let Some(path) = out {
        let mut file = File::create(path)?;
        for prediction in &predictions {
            writeln!(file, "{}", serde_json::to_string(prediction).expect("serializes"))?;
        }
    }

    let report = if scored.is_empty() {
        None
    } else {
        Some(eval::breakdown(&scored))
    };
    Ok(RunOutcome {
        predictions,
        report,
        scored,
        record_errors,
    })
}

#[derive(Debug)]
pub struct PseudoOutcome {
    pub report: pseudo::ReplayReport,
    pub sidecar: Vec<SidecarLine>,
    pub skipped_unannotated: usize,
    pub record_errors: Vec<String>,
}

/// Builds pseudo programs for every annotated record, writes the sidecar,
/// and replays the built programs for the coverage/EM/F1 summary.
pub fn cmd_pseudo(
    dataset_path: &Path,
    keep_going: bool,
    out: Option<&Path>,
) -> Result<PseudoOutcome, CommandError> {
    let mut record_errors = Vec::new();
    let records = read_records(dataset_path, keep_going, &mut record_errors)?;

    let mut items: Vec<(pseudo::Annotation, KnowledgeSet)> = Vec::new();
    let mut skipped_unannotated = 0usize;
    for record in &records {
        match record.annotation() {
            Some(ann) => items.push((ann, record.knowledge_set()?)),
            None => skipped_unannotated += 1,
        }
    }

    let mut sidecar = Vec::new();
    for (ann, ks) in &items {
        let set = pseudo::build_pseudo(ann, ks);
        match &set.status {
            Ok(()) => {
                for hp in &set.programs {
                    sidecar.push(SidecarLine {
                        question_id: set.question_id.clone(),
                        hop: Some(hp.hop),
                        program: Some(hp.program.clone()),
                        error: None,
                    });
                }
            }
            Err(failure) => sidecar.push(SidecarLine {
                question_id: set.question_id.clone(),
                hop: None,
                program: None,
                error: Some(failure.to_string()),
            }),
        }
    }

    if let Some(path) = out {
        let mut file = File::create(path)?;
        for line in &sidecar {
            writeln!(file, "{}", serde_json::to_string(line).expect("serializes"))?;
        }
    }

    let report = pseudo::replay_verify(items.iter().map(|(a, k)| (a, k)));
    Ok(PseudoOutcome {
        report,
        sidecar,
        skipped_unannotated,
        record_errors,
    })
}

/// Reads a predictions file back.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CommandError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Scores a predictions file against its dataset. Records without a
/// matching prediction score zero; unannotated records are skipped.
pub fn cmd_eval(
    predictions_path: &Path,
    dataset_path: &Path,
    keep_going: bool,
) -> Result<(BreakdownReport, Vec<ScoredItem>), CommandError> {
    let mut record_errors = Vec::new();
    let records = read_records(dataset_path, keep_going, &mut record_errors)?;
    let predictions = read_predictions(predictions_path)?;

    let mut scored = Vec::new();
    for record in &records {
        let Some(ann) = record.annotation() else {
            continue;
        };
        let ks = record.knowledge_set()?;
        let pred_answers = predictions
            .iter()
            .find(|p| p.question_id == record.question_id)
            .map(|p| p.final_answer.answer_list())
            .unwrap_or_default();
        let (em, f1) = eval::score(&pred_answers, &ann.final_answers)?;
        scored.push(ScoredItem {
            question_id: record.question_id.clone(),
            em,
            f1,
            reasoning_type: Some(ann.reasoning_type.name().to_string()),
            hop_count: Some(ann.hop_count()),
            knowledge_kind: Some(ann.knowledge_kind(&ks).to_string()),
        });
    }
    Ok((eval::breakdown(&scored), scored))
}

/// A standalone fact for `exec`: a table or a single passage.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FactFile {
    Table(TableSpec),
    Passage(Passage),
}

#[derive(Debug)]
pub struct ExecOutput {
    pub result: ExecResult,
    /// Each atomic node with its resolved surface text.
    pub resolved_spans: Vec<(OpKind, usize, usize, String)>,
    /// The serialized input the spans index into.
    pub tokens: Vec<String>,
}

/// Parses and executes one program against a question plus a fact file,
/// serialized exactly as the pipeline would serialize it.
pub fn cmd_exec(
    program_text: &str,
    question: &str,
    fact_path: &Path,
    prev: Option<&str>,
) -> Result<ExecOutput, CommandError> {
    let raw = std::fs::read_to_string(fact_path)?;
    let fact: FactFile =
        serde_json::from_str(&raw).map_err(|e| CommandError::BadFactFile {
            path: fact_path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let (ks, candidate) = match fact {
        FactFile::Table(spec) => {
            let table = Table::new(spec.id, spec.headers, spec.rows)?;
            (KnowledgeSet::new(table, vec![]), 0)
        }
        FactFile::Passage(passage) => {
            let placeholder = Table::new("_", vec!["_".into()], vec![])?;
            let passage = Passage::new(passage.id, passage.title, passage.text)?;
            (KnowledgeSet::new(placeholder, vec![passage]), 1)
        }
    };
    let input = serialize_input(question, prev, &ks, candidate, true)?;
    let program = crate::program::parse(program_text)?;
    let result = executor::execute(&program, &input)?;
    let resolved_spans = program
        .root
        .spans()
        .into_iter()
        .map(|(kind, span)| {
            let text = input
                .span_text(span.start, span.end)
                .unwrap_or_else(|e| format!("<{e}>"));
            (kind, span.start, span.end, text)
        })
        .collect();
    Ok(ExecOutput {
        result,
        resolved_spans,
        tokens: input.tokens().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy;

    fn write_toy(dir: &Path) -> PathBuf {
        let path = dir.join("toy.jsonl");
        dataset::write_jsonl(&path, &toy::records()).unwrap();
        path
    }

    #[test]
    fn gold_oracle_run_is_perfect_on_toy() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_toy(dir.path());
        let out = dir.path().join("pred.jsonl");
        let cfg = RunConfig::default();
        let outcome = cmd_run(&dataset, &cfg, Some(&out)).unwrap();
        assert!(outcome.clean());
        assert_eq!(outcome.predictions.len(), 20);
        let report = outcome.report.unwrap();
        assert_eq!(report.overall.count, 20);
        assert!((report.overall.em - 1.0).abs() < 1e-12, "EM {}", report.overall.em);
        assert!((report.overall.f1 - 1.0).abs() < 1e-12);
        assert!(out.exists());
    }

    #[test]
    fn parallel_run_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_toy(dir.path());
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let sequential = RunConfig::default();
        let parallel = RunConfig {
            jobs: 4,
            ..RunConfig::default()
        };
        cmd_run(&dataset, &sequential, Some(&a)).unwrap();
        cmd_run(&dataset, &parallel, Some(&b)).unwrap();
        assert_eq!(
            std::fs::read_to_string(&a).unwrap(),
            std::fs::read_to_string(&b).unwrap()
        );
    }

    #[test]
    fn pseudo_builds_everything_on_toy() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_toy(dir.path());
        let sidecar_path = dir.path().join("pseudo.jsonl");
        let outcome = cmd_pseudo(&dataset, false, Some(&sidecar_path)).unwrap();
        assert_eq!(outcome.report.total, 20);
        assert!((outcome.report.coverage - 1.0).abs() < 1e-12);
        assert!((outcome.report.em - 1.0).abs() < 1e-12);
        assert!((outcome.report.f1 - 1.0).abs() < 1e-12);
        assert_eq!(outcome.skipped_unannotated, 0);

        // The sidecar round-trips into an oracle store that reproduces the
        // perfect run.
        let store = load_sidecar(&sidecar_path).unwrap();
        assert!(store.len() >= 20);
        let cfg = RunConfig {
            programs: Some(sidecar_path),
            ..RunConfig::default()
        };
        let run = cmd_run(&dataset, &cfg, None).unwrap();
        assert!((run.report.unwrap().overall.em - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_command_joins_predictions_and_gold() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = write_toy(dir.path());
        let out = dir.path().join("pred.jsonl");
        cmd_run(&dataset, &RunConfig::default(), Some(&out)).unwrap();
        let (report, scored) = cmd_eval(&out, &dataset, false).unwrap();
        assert_eq!(scored.len(), 20);
        assert!((report.overall.em - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_line_stops_or_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.jsonl");
        let mut text = dataset::to_jsonl(&toy::records()[..2]);
        text.push_str("{\"garbage\": true}\n");
        std::fs::write(&path, text).unwrap();

        let strict = RunConfig::default();
        assert!(matches!(
            cmd_run(&path, &strict, None),
            Err(CommandError::Dataset(DatasetError::Malformed { line: 3, .. }))
        ));

        let keep_going = RunConfig {
            keep_going: true,
            ..RunConfig::default()
        };
        let outcome = cmd_run(&path, &keep_going, None).unwrap();
        assert_eq!(outcome.predictions.len(), 2);
        assert_eq!(outcome.record_errors.len(), 1);
        assert!(!outcome.clean());
    }

    #[test]
    fn exec_command_resolves_spans() {
        let dir = tempfile::tempdir().unwrap();
        let fact = dir.path().join("fact.json");
        std::fs::write(
            &fact,
            serde_json::to_string(&TableSpec {
                id: "t".into(),
                headers: vec!["Year".into()],
                rows: vec![vec!["1994".into()]],
            })
            .unwrap(),
        )
        .unwrap();
        // [BOS] yes or no Q [SEP] None [SEP] HEADER : Year [ROW] 1994
        let output = cmd_exec("CELL(12,12)", "Q", &fact, None).unwrap();
        assert_eq!(output.result, ExecResult::scalar("1994"));
        assert_eq!(output.resolved_spans.len(), 1);
        assert_eq!(output.resolved_spans[0].3, "1994");

        assert!(matches!(
            cmd_exec("CELL(9999,10000)", "Q", &fact, None),
            Err(CommandError::Exec(_))
        ));
        assert!(matches!(
            cmd_exec("CELL(1", "Q", &fact, None),
            Err(CommandError::Parse(_))
        ));
    }

    #[test]
    fn exec_accepts_passage_facts() {
        let dir = tempfile::tempdir().unwrap();
        let fact = dir.path().join("fact.json");
        std::fs::write(
            &fact,
            "{\"id\": \"p\", \"title\": \"\", \"text\": \"Paris is large.\"}",
        )
        .unwrap();
        // [BOS] yes or no Q [SEP] None [SEP] Paris is large .
        let output = cmd_exec("SPAN(8,8)", "Q", &fact, None).unwrap();
        assert_eq!(output.result, ExecResult::scalar("Paris"));
    }
}
