//! Multi-hop program generation and execution over heterogeneous
//! table-and-text knowledge.
//!
//! A question is answered by a self-iterative loop: retrieve a supporting
//! fact, serialize it together with the question and the previous-hop
//! result, generate a small symbolic program, execute it, and inspect the
//! program's outermost operation to decide whether another hop is needed.
//! Programs are written in a compact DSL of span-extraction and discrete
//! reasoning operations (`CELL`, `SPAN`, `MULTISPAN`, `SUM`, `ARGMAX`,
//! `COMPOSE`, `INTERSECT`, ...) whose arguments are token indices into the
//! serialized input.
//!
//! The neural retriever and generator this design assumes are replaced by
//! pluggable contracts: a gold/lexical retriever and an oracle/stub/remote
//! generator, so the symbolic core can be exercised end to end without any
//! trained model.
//!
//! ## Module map
//!
//! - [`knowledge`] — tables, passages, and the deterministic tokenization
//!   and serialization that define the coordinate system for span indices.
//! - [`program`] — the program DSL: AST, parser, printer, per-type
//!   templates, and structural validation.
//! - [`executor`] — symbolic evaluation of programs against a serialized
//!   input.
//! - [`retrieval`] — supporting-fact selection: scoring contract plus gold
//!   and lexical-overlap baselines.
//! - [`generation`] — per-hop program producers: oracle replay, scripted
//!   stub, and a remote JSON-over-HTTP client.
//! - [`pipeline`] — the hop loop with iteration detection and multi-hop
//!   finalization.
//! - [`pseudo`] — weak-supervision construction of executable programs from
//!   gold annotations, with replay verification.
//! - [`eval`] — EM / token-F1 scoring and per-type breakdown reports.
//! - [`dataset`] — the JSONL record format and the bundled toy dataset.
//! - [`commands`] — the `run` / `pseudo` / `eval` / `exec` operations behind
//!   the thin `hoppg` binary.
//!
//! ## Runnable examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example parse_and_execute    # DSL tour: parse, print, execute
//! cargo run --example table_serialization  # flattening, provenance, spans
//! cargo run --example hop_pipeline         # a two-hop question, traced
//! cargo run --example retrieval_baselines  # gold vs lexical fact selection
//! cargo run --example pseudo_programs      # annotation -> program -> replay
//! cargo run --example evaluate_predictions # EM/F1 and breakdown reports
//! cargo run --example remote_generator     # the HTTP generator protocol
//! ```

pub mod commands;
pub mod dataset;
pub mod eval;
pub mod executor;
pub mod generation;
pub mod knowledge;
pub mod pipeline;
pub mod program;
pub mod pseudo;
pub mod retrieval;

pub use executor::ExecResult;
pub use knowledge::{KnowledgeSet, Passage, SerializedInput, Table};
pub use pipeline::{AnswerOutcome, PipelineConfig};
pub use program::{Program, ReasoningType};
