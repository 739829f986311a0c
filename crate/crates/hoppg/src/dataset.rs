//! The JSONL dataset format (one question per line) and the bundled toy
//! dataset.
//!
//! Each record carries a table, its candidate passages, and optionally a
//! gold annotation in the shape the weak-supervision constructor consumes.

use crate::knowledge::{KnowledgeError, KnowledgeSet, Passage, Table};
use crate::pseudo::{
    Annotation, CalcKind, CalculationSpec, CompareDirection, CompareSpec, HopAnnotation, KvPair,
    QuestionType,
};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// Table as it appears on the wire: headers plus row-major cell texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// The annotation sub-object of a record; question id and text live on the
/// record itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordAnnotation {
    pub reasoning_type: QuestionType,
    pub hops: Vec<HopAnnotation>,
    pub final_answers: Vec<String>,
}

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub question_id: String,
    pub question: String,
    pub table: TableSpec,
    pub passages: Vec<Passage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<RecordAnnotation>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("record `{record}`: {source}")]
    Knowledge {
        record: String,
        source: KnowledgeError,
    },
    #[error("record `{record}`: duplicate fact id `{id}`")]
    DuplicateFactId { record: String, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatasetRecord {
    /// Builds and validates the knowledge set (rectangular table, unique
    /// fact ids).
    pub fn knowledge_set(&self) -> Result<KnowledgeSet, DatasetError> {
        let table = Table::new(
            self.table.id.clone(),
            self.table.headers.clone(),
            self.table.rows.clone(),
        )
        .map_err(|source| DatasetError::Knowledge {
            record: self.question_id.clone(),
            source,
        })?;
        let mut ids = vec![self.table.id.as_str()];
        for p in &self.passages {
            if ids.contains(&p.id.as_str()) {
                return Err(DatasetError::DuplicateFactId {
                    record: self.question_id.clone(),
                    id: p.id.clone(),
                });
            }
            ids.push(p.id.as_str());
        }
        Ok(KnowledgeSet::new(table, self.passages.clone()))
    }

    /// The record's annotation joined with its question id and text.
    pub fn annotation(&self) -> Option<Annotation> {
        self.annotation.as_ref().map(|a| Annotation {
            question_id: self.question_id.clone(),
            question: self.question.clone(),
            reasoning_type: a.reasoning_type,
            hops: a.hops.clone(),
            final_answers: a.final_answers.clone(),
        })
    }
}

/// Reads a JSONL dataset, one result per line (empty lines are skipped).
pub fn read_jsonl(path: &Path) -> Result<Vec<Result<DatasetRecord, DatasetError>>, DatasetError> {
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
            }),
        );
    }
    Ok(out)
}

/// Writes records as JSONL, one per line.
pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let mut file = File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Serializes records to the JSONL text form.
pub fn to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// The bundled toy dataset: twenty fully annotated questions covering all
/// nine reasoning types, table-only, text-only, and mixed knowledge, and
/// both multi-hop operations. `data/toy.jsonl` is generated from this
/// function and kept in sync by a test.
pub mod toy {
    use super::*;

    fn table(id: &str, headers: &[&str], rows: &[&[&str]]) -> TableSpec {
        TableSpec {
            id: id.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
        }
    }

    fn passage(id: &str, title: &str, text: &str) -> Passage {
        Passage {
            id: id.to_string(),
            title: title.to_string(),
            text: text.to_string(),
        }
    }

    fn hop(fact: &str, answers: &[&str]) -> HopAnnotation {
        HopAnnotation {
            gold_fact_id: fact.to_string(),
            gold_answers: answers.iter().map(|s| s.to_string()).collect(),
            compare: None,
            calculation: None,
        }
    }

    fn annotated(
        rt: QuestionType,
        hops: Vec<HopAnnotation>,
        finals: &[&str],
    ) -> Option<RecordAnnotation> {
        Some(RecordAnnotation {
            reasoning_type: rt,
            hops,
            final_answers: finals.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn rt(t: crate::program::ReasoningType) -> QuestionType {
        QuestionType::Supported(t)
    }

    /// Builds the twenty toy records.
    pub fn records() -> Vec<DatasetRecord> {
        use crate::program::ReasoningType::*;
        let mut out = Vec::new();

        out.push(DatasetRecord {
            question_id: "toy-01".into(),
            question: "Which film did Warner release in 1942?".into(),
            table: table(
                "films",
                &["Film", "Year", "Studio"],
                &[
                    &["Casablanca", "1942", "Warner"],
                    &["Jaws", "1975", "Universal"],
                    &["Alien", "1979", "Fox"],
                ],
            ),
            passages: vec![
                passage("films-p1", "", "Casablanca premiered at a Hollywood theater."),
                passage("films-p2", "", "Jaws was shot on Martha's Vineyard."),
            ],
            annotation: annotated(
                rt(SpanExtraction),
                vec![hop("films", &["Casablanca"])],
                &["Casablanca"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-02".into(),
            question: "Who designed the Eiffel Tower?".into(),
            table: table(
                "monuments",
                &["Monument", "Height"],
                &[&["Eiffel Tower", "330"], &["Big Ben", "96"]],
            ),
            passages: vec![
                passage(
                    "monuments-p1",
                    "",
                    "The Eiffel Tower was designed by Gustave Eiffel.",
                ),
                passage("monuments-p2", "", "Big Ben chimes every hour."),
            ],
            annotation: annotated(
                rt(SpanExtraction),
                vec![hop("monuments-p1", &["Gustave Eiffel"])],
                &["Gustave Eiffel"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-03".into(),
            question: "What instrument did Miles Davis play?".into(),
            table: table(
                "albums",
                &["Album", "Copies Sold"],
                &[&["Kind of Blue", "5000000"], &["Blue Train", "1000000"]],
            ),
            passages: vec![
                passage("albums-p1", "", "Miles Davis played the trumpet from age thirteen."),
                passage("albums-p2", "", "Vinyl sales rose sharply last decade."),
            ],
            annotation: annotated(
                rt(SpanExtraction),
                vec![hop("albums-p1", &["trumpet"])],
                &["trumpet"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-04".into(),
            question: "Which planet names appear on the moons list?".into(),
            table: table(
                "planets",
                &["Planet", "Moons"],
                &[&["Mars", "2"], &["Venus", "0"], &["Jupiter", "95"]],
            ),
            passages: vec![
                passage("planets-p1", "", "Mars hosts a vast volcano called Olympus Mons."),
                passage("planets-p2", "", "Venus spins backwards relative to most planets."),
            ],
            annotation: annotated(
                rt(MultiSpan),
                vec![hop("planets", &["Mars", "Venus", "Jupiter"])],
                &["Mars", "Venus", "Jupiter"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-05".into(),
            question: "Which ingredients go into classic carbonara?".into(),
            table: table(
                "dishes",
                &["Dish", "Region"],
                &[&["Risotto", "Lombardy"], &["Arancini", "Sicily"]],
            ),
            passages: vec![
                passage(
                    "dishes-p1",
                    "",
                    "Classic carbonara uses eggs, guanciale, and pecorino.",
                ),
                passage("dishes-p2", "", "Pizza dough needs flour and yeast."),
            ],
            annotation: annotated(
                rt(MultiSpan),
                vec![hop("dishes-p1", &["eggs", "guanciale", "pecorino"])],
                &["eggs", "guanciale", "pecorino"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-06".into(),
            question: "Is the Great Barrier Reef visible from space?".into(),
            table: table(
                "reefs",
                &["Reef", "Length"],
                &[&["Great Barrier", "2300"], &["Belize Barrier", "300"]],
            ),
            passages: vec![
                passage(
                    "reefs-p1",
                    "",
                    "The Great Barrier Reef is visible from space on clear days.",
                ),
                passage("reefs-p2", "", "Coral bleaching worries marine biologists."),
            ],
            annotation: annotated(rt(YesNo), vec![hop("reefs-p1", &["yes"])], &["yes"]),
        });

        out.push(DatasetRecord {
            question_id: "toy-07".into(),
            question: "Did Iceland win any gold medals?".into(),
            table: table(
                "medals",
                &["Country", "Gold Medals"],
                &[&["Iceland", "0"], &["Norway", "4"]],
            ),
            passages: vec![
                passage("medals-p1", "", "Norway topped the ski standings."),
                passage("medals-p2", "", "The closing ceremony drew a record crowd."),
            ],
            annotation: annotated(rt(YesNo), vec![hop("medals", &["no"])], &["no"]),
        });

        out.push(DatasetRecord {
            question_id: "toy-08".into(),
            question: "Which peak is taller, Everest or K2?".into(),
            table: table(
                "peaks",
                &["Peak", "Height"],
                &[&["Everest", "8849"], &["K2", "8611"]],
            ),
            passages: vec![
                passage("peaks-p1", "", "Alpine weather can change within minutes."),
                passage("peaks-p2", "", "Sherpas guide most expeditions."),
            ],
            annotation: Some(RecordAnnotation {
                reasoning_type: rt(Compare),
                hops: vec![HopAnnotation {
                    gold_fact_id: "peaks".into(),
                    gold_answers: vec!["Everest".into()],
                    compare: Some(CompareSpec {
                        direction: CompareDirection::Max,
                        pairs: [
                            KvPair {
                                key: "Everest".into(),
                                value: "8849".into(),
                            },
                            KvPair {
                                key: "K2".into(),
                                value: "8611".into(),
                            },
                        ],
                    }),
                    calculation: None,
                }],
                final_answers: vec!["Everest".into()],
            }),
        });

        out.push(DatasetRecord {
            question_id: "toy-09".into(),
            question: "Which runner posted the fewest minutes, Kipchoge or Bekele?".into(),
            table: table(
                "marathon",
                &["Runner", "Minutes"],
                &[&["Kipchoge", "121"], &["Bekele", "123"]],
            ),
            passages: vec![
                passage("marathon-p1", "", "The course loops through five boroughs."),
                passage("marathon-p2", "", "Hydration stations line the route."),
            ],
            annotation: Some(RecordAnnotation {
                reasoning_type: rt(Compare),
                hops: vec![HopAnnotation {
                    gold_fact_id: "marathon".into(),
                    gold_answers: vec!["Kipchoge".into()],
                    compare: Some(CompareSpec {
                        direction: CompareDirection::Min,
                        pairs: [
                            KvPair {
                                key: "Kipchoge".into(),
                                value: "121".into(),
                            },
                            KvPair {
                                key: "Bekele".into(),
                                value: "123".into(),
                            },
                        ],
                    }),
                    calculation: None,
                }],
                final_answers: vec!["Kipchoge".into()],
            }),
        });

        out.push(DatasetRecord {
            question_id: "toy-10".into(),
            question: "What was the combined revenue of Q1 and Q2?".into(),
            table: table(
                "revenue",
                &["Quarter", "Revenue"],
                &[&["Q1", "120"], &["Q2", "80"]],
            ),
            passages: vec![
                passage("revenue-p1", "", "The company opened an office in Lisbon."),
                passage("revenue-p2", "", "Headcount grew modestly."),
            ],
            annotation: Some(RecordAnnotation {
                reasoning_type: rt(Calculation),
                hops: vec![HopAnnotation {
                    gold_fact_id: "revenue".into(),
                    gold_answers: vec!["200".into()],
                    compare: None,
                    calculation: Some(CalculationSpec {
                        kind: CalcKind::Sum,
                        operands: vec!["120".into(), "80".into()],
                    }),
                }],
                final_answers: vec!["200".into()],
            }),
        });

        out.push(DatasetRecord {
            question_id: "toy-11".into(),
            question: "What was the average celsius in June and July?".into(),
            table: table(
                "weather",
                &["Month", "Celsius"],
                &[&["June", "18"], &["July", "22"]],
            ),
            passages: vec![
                passage("weather-p1", "", "Rainfall stayed below seasonal norms."),
                passage("weather-p2", "", "Winds came mostly off shore."),
            ],
            annotation: Some(RecordAnnotation {
                reasoning_type: rt(Calculation),
                hops: vec![HopAnnotation {
                    gold_fact_id: "weather".into(),
                    gold_answers: vec!["20".into()],
                    compare: None,
                    calculation: Some(CalculationSpec {
                        kind: CalcKind::Avg,
                        operands: vec!["18".into(), "22".into()],
                    }),
                }],
                final_answers: vec!["20".into()],
            }),
        });

        out.push(DatasetRecord {
            question_id: "toy-12".into(),
            question: "How many teams scored points?".into(),
            table: table(
                "league",
                &["Teams", "Points"],
                &[&["Lions", "12"], &["Tigers", "7"], &["Bears", "9"]],
            ),
            passages: vec![
                passage("league-p1", "", "Attendance dipped in the rainy weeks."),
                passage("league-p2", "", "Ticket prices held steady."),
            ],
            annotation: Some(RecordAnnotation {
                reasoning_type: rt(Calculation),
                hops: vec![HopAnnotation {
                    gold_fact_id: "league".into(),
                    gold_answers: vec!["3".into()],
                    compare: None,
                    calculation: Some(CalculationSpec {
                        kind: CalcKind::Count,
                        operands: vec!["12".into(), "7".into(), "9".into()],
                    }),
                }],
                final_answers: vec!["3".into()],
            }),
        });

        out.push(DatasetRecord {
            question_id: "toy-13".into(),
            question: "Which stadium hosts the champion of the 2021 season?".into(),
            table: table(
                "seasons",
                &["Season", "Champion", "Stadium"],
                &[
                    &["2021", "Atlanta United", "Mercedes Benz"],
                    &["2020", "Seattle Sounders", "Lumen Field"],
                ],
            ),
            passages: vec![
                passage("seasons-p1", "", "Supporters marched before every final."),
                passage("seasons-p2", "", "Broadcast ratings climbed steadily."),
            ],
            annotation: annotated(
                rt(ComposeSpan),
                vec![
                    hop("seasons", &["Atlanta United"]),
                    hop("seasons", &["Mercedes Benz"]),
                ],
                &["Mercedes Benz"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-14".into(),
            question: "Who wrote the novel that won the Fire Swan award?".into(),
            table: table(
                "rivers",
                &["River", "Length"],
                &[&["Nile", "6650"], &["Amazon", "6400"]],
            ),
            passages: vec![
                passage(
                    "rivers-p1",
                    "",
                    "The Fire Swan award went to Whispering Pines, a novel by Vera Shaw.",
                ),
                passage("rivers-p2", "", "Iron Harbor sold briskly at coastal bookshops."),
            ],
            annotation: annotated(
                rt(ComposeSpan),
                vec![
                    hop("rivers-p1", &["Whispering Pines"]),
                    hop("rivers-p1", &["Vera Shaw"]),
                ],
                &["Vera Shaw"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-15".into(),
            question: "Which cities does the tour of conductor Mira Holt visit?".into(),
            table: table(
                "tours",
                &["Tour", "Conductor", "First Stop", "Second Stop"],
                &[
                    &["Northern Lights", "Mira Holt", "Vienna", "Prague"],
                    &["Fjord Circuit", "Otto Lang", "Oslo", "Bergen"],
                ],
            ),
            passages: vec![
                passage("tours-p1", "", "Concert halls sold out across Europe."),
                passage("tours-p2", "", "The orchestra travels by night train."),
            ],
            annotation: annotated(
                rt(ComposeMultiSpan),
                vec![
                    hop("tours", &["Northern Lights"]),
                    hop("tours", &["Vienna", "Prague"]),
                ],
                &["Vienna", "Prague"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-16".into(),
            question: "Is the capital city of Kenya located near a national park?".into(),
            table: table(
                "capitals",
                &["Country", "Capital City"],
                &[&["Kenya", "Nairobi"], &["Peru", "Lima"]],
            ),
            passages: vec![
                passage("capitals-p1", "", "Nairobi lies beside Nairobi National Park."),
                passage("capitals-p2", "", "Lima overlooks the Pacific Ocean."),
            ],
            annotation: annotated(
                rt(ComposeYesNo),
                vec![hop("capitals", &["Nairobi"]), hop("capitals-p1", &["yes"])],
                &["yes"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-17".into(),
            question: "Which club names appear in both the 2019 and 2020 seasons?".into(),
            table: table(
                "clubs",
                &["Player", "2019 Club", "2020 Club"],
                &[
                    &["Ana Costa", "Riverhawks", "Riverhawks"],
                    &["Ben Odum", "Falcons", "Harbor City"],
                ],
            ),
            passages: vec![
                passage("clubs-p1", "", "Transfer windows close in August."),
                passage("clubs-p2", "", "Youth academies feed the rosters."),
            ],
            annotation: annotated(
                rt(Intersect),
                vec![
                    hop("clubs", &["Riverhawks", "Falcons"]),
                    hop("clubs", &["Riverhawks", "Harbor City"]),
                ],
                &["Riverhawks"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-18".into(),
            question: "Which trail names longer than six kilometers appear in the coastal guide?"
                .into(),
            table: table(
                "trails",
                &["Trail", "Kilometers"],
                &[
                    &["Azure Path", "12"],
                    &["Stone Ridge", "8"],
                    &["Fern Loop", "5"],
                ],
            ),
            passages: vec![
                passage(
                    "trails-p1",
                    "",
                    "The coastal guide lists Stone Ridge and Misty Cove.",
                ),
                passage("trails-p2", "", "Wildflowers bloom along the cliffs."),
            ],
            annotation: annotated(
                rt(Intersect),
                vec![
                    hop("trails", &["Azure Path", "Stone Ridge"]),
                    hop("trails-p1", &["Stone Ridge", "Misty Cove"]),
                ],
                &["Stone Ridge"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-19".into(),
            question: "What is the capital of Japan?".into(),
            table: table(
                "geo",
                &["Country", "Capital"],
                &[&["Japan", "Tokyo"], &["Chile", "Santiago"]],
            ),
            passages: vec![
                passage("geo-p1", "", "Cherry blossoms draw spring crowds."),
                passage("geo-p2", "", "The Andes shape Chilean weather."),
            ],
            annotation: annotated(
                rt(SpanExtraction),
                vec![hop("geo", &["Tokyo"])],
                &["Tokyo"],
            ),
        });

        out.push(DatasetRecord {
            question_id: "toy-20".into(),
            question: "Which element names have a symbol listed?".into(),
            table: table(
                "elements",
                &["Element", "Symbol"],
                &[&["Helium", "He"], &["Neon", "Ne"], &["Argon", "Ar"]],
            ),
            passages: vec![
                passage("elements-p1", "", "Noble gases glow inside signage tubes."),
                passage("elements-p2", "", "Balloons often rise on lighter gas."),
            ],
            annotation: annotated(
                rt(MultiSpan),
                vec![hop("elements", &["Helium", "Neon", "Argon"])],
                &["Helium", "Neon", "Argon"],
            ),
        });

        out
    }
}
