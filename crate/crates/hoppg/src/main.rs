//! Thin command-line front end over [`hoppg::commands`].
//!
//! Exit codes: 0 success, 1 usage or execution error, 2 partial
//! record-level failure (e.g. malformed dataset lines).

use clap::{Parser, Subcommand, ValueEnum};
use hoppg::commands::{
    self, CommandError, GeneratorChoice, RetrieverChoice, RunConfig,
};
use hoppg::dataset::DatasetError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hoppg",
    about = "Multi-hop program generation and execution over table+text knowledge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RetrieverArg {
    Gold,
    Lexical,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Oracle,
    Stub,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a JSONL dataset and write predictions.
    Run {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "gold")]
        retriever: RetrieverArg,
        #[arg(long, value_enum, default_value = "oracle")]
        generator: GeneratorArg,
        /// Generator service URL (for --generator remote).
        #[arg(long, env = "HOPPG_ENDPOINT")]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 2)]
        max_hops: usize,
        /// Reject programs whose root is off-template for the hop.
        #[arg(long)]
        strict_templates: bool,
        /// Scripted stub output for hop N (repeatable, in hop order).
        #[arg(long)]
        stub_script: Vec<String>,
        /// Pseudo-program sidecar backing the oracle generator.
        #[arg(long)]
        programs: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "predictions.jsonl")]
        out: PathBuf,
        /// Skip malformed records instead of stopping.
        #[arg(long)]
        keep_going: bool,
    },
    /// Construct pseudo programs from annotations and verify by replay.
    Pseudo {
        dataset: PathBuf,
        #[arg(long, default_value = "pseudo.jsonl")]
        out: PathBuf,
        #[arg(long)]
        keep_going: bool,
    },
    /// Score a predictions file against its dataset.
    Eval {
        predictions: PathBuf,
        dataset: PathBuf,
        /// Write the JSON report here as well.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        keep_going: bool,
    },
    /// Parse and execute one program against a question and a fact file.
    Exec {
        #[arg(long)]
        program: String,
        #[arg(long)]
        question: String,
        /// JSON file holding a table ({id, headers, rows}) or a passage
        /// ({id, title, text}).
        #[arg(long)]
        fact_file: PathBuf,
        /// Previous-hop answer ("None" when omitted).
        #[arg(long)]
        prev: Option<String>,
    },
}

fn error_code(e: &CommandError) -> u8 {
    match e {
        // Record-level failures in otherwise readable files.
        CommandError::Dataset(DatasetError::Malformed { .. })
        | CommandError::Dataset(DatasetError::Knowledge { .. })
        | CommandError::Dataset(DatasetError::DuplicateFactId { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CommandError> {
    match cli.command {
        Command::Run {
            dataset,
            retriever,
            generator,
            endpoint,
            max_hops,
            strict_templates,
            stub_script,
            programs,
            jobs,
            out,
            keep_going,
        } => {
            let generator = match generator {
                GeneratorArg::Oracle => GeneratorChoice::Oracle,
                GeneratorArg::Stub => GeneratorChoice::Stub {
                    script: stub_script,
                },
                GeneratorArg::Remote => match endpoint {
                    Some(endpoint) => GeneratorChoice::Remote { endpoint },
                    None => {
                        eprintln!(
                            "error: --generator remote needs --endpoint or HOPPG_ENDPOINT"
                        );
                        return Ok(ExitCode::from(1));
                    }
                },
            };
            let cfg = RunConfig {
                retriever: match retriever {
                    RetrieverArg::Gold => RetrieverChoice::Gold,
                    RetrieverArg::Lexical => RetrieverChoice::Lexical,
                },
                generator,
                max_hops,
                strict_templates,
                jobs: jobs.max(1),
                keep_going,
                programs,
            };
            let outcome = commands::cmd_run(&dataset, &cfg, Some(&out))?;
            println!(
                "answered {} question(s); predictions written to {}",
                outcome.predictions.len(),
                out.display()
            );
            if let Some(report) = &outcome.report {
                print!("{}", report.to_table());
            }
            for e in &outcome.record_errors {
                eprintln!("record error: {e}");
            }
            Ok(if outcome.clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Pseudo {
            dataset,
            out,
            keep_going,
        } => {
            let outcome = commands::cmd_pseudo(&dataset, keep_going, Some(&out))?;
            let r = &outcome.report;
            println!(
                "built {}/{} (coverage {:.4}); replay EM {:.4} F1 {:.4}; {} unannotated record(s) skipped",
                r.built, r.total, r.coverage, r.em, r.f1, outcome.skipped_unannotated
            );
            for (qid, failure) in &r.failures {
                println!("failed {qid}: {failure}");
            }
            println!("sidecar written to {}", out.display());
            for e in &outcome.record_errors {
                eprintln!("record error: {e}");
            }
            Ok(if outcome.record_errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Eval {
            predictions,
            dataset,
            out,
            keep_going,
        } => {
            let (report, _) = commands::cmd_eval(&predictions, &dataset, keep_going)?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, json)?;
                println!("report written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Exec {
            program,
            question,
            fact_file,
            prev,
        } => {
            let output = commands::cmd_exec(&program, &question, &fact_file, prev.as_deref())?;
            for (kind, start, end, text) in &output.resolved_spans {
                println!("{}({},{}) -> {:?}", kind.name(), start, end, text);
            }
            println!("result: {}", output.result.render());
            Ok(ExitCode::SUCCESS)
        }
    }
}
