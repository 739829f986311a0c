//! Heterogeneous fact model and the deterministic serialization that
//! defines the coordinate system for span indices.
//!
//! Every program span `(s, e)` refers to token positions in a
//! [`SerializedInput`] built here. The layout is fixed:
//!
//! ```text
//! [BOS] (yes or no)? <question tokens> [SEP] <prev-answer tokens> [SEP] <fact tokens>
//! ```
//!
//! Tokenization is a deterministic word/punctuation rule (maximal
//! alphanumeric runs, single-character punctuation), never a model-specific
//! subword scheme, so indices stay portable across components. Fact tokens
//! carry provenance back to the originating table cell or passage offset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel marking the start of the serialized input.
pub const BOS: &str = "[BOS]";
/// Sentinel separating the question, previous-answer, and fact regions.
pub const SEP: &str = "[SEP]";
/// Sentinel opening each table row in the flattened form.
pub const ROW: &str = "[ROW]";
/// Previous-answer placeholder for the first hop.
pub const NONE_ANSWER: &str = "None";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("table `{table}` row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        table: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("table `{0}` has an empty header")]
    EmptyHeader(String),
    #[error("table `{0}` has no columns")]
    NoColumns(String),
    #[error("cell ({row},{col}) of table `{table}` contains a control character")]
    ControlCharacter {
        table: String,
        row: usize,
        col: usize,
    },
    #[error("passage `{0}` has empty text")]
    EmptyPassage(String),
    #[error("candidate index {index} out of range (K = {k})")]
    NoSuchCandidate { index: usize, k: usize },
    #[error("no candidate with id `{0}`")]
    NoSuchFactId(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpanError {
    #[error("span ({start},{end}) out of bounds for input of {len} tokens")]
    IndexOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid span: start {start} > end {end}")]
    InvalidRange { start: usize, end: usize },
}

/// One table cell, addressed by 0-based row and column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub text: String,
}

/// A dense m x n table with named columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    id: String,
    headers: Vec<String>,
    cells: Vec<Cell>, // row-major, exactly num_rows * num_cols entries
}

impl Table {
    /// Builds a table from row-major cell texts, validating shape and content.
    pub fn new(
        id: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, KnowledgeError> {
        let id = id.into();
        if headers.is_empty() {
            return Err(KnowledgeError::NoColumns(id));
        }
        if headers.iter().any(|h| h.trim().is_empty()) {
            return Err(KnowledgeError::EmptyHeader(id));
        }
        let num_cols = headers.len();
        let mut cells = Vec::with_capacity(rows.len() * num_cols);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != num_cols {
                return Err(KnowledgeError::RaggedRow {
                    table: id,
                    row: r,
                    got: row.len(),
                    expected: num_cols,
                });
            }
            for (c, text) in row.into_iter().enumerate() {
                if text.chars().any(char::is_control) {
                    return Err(KnowledgeError::ControlCharacter {
                        table: id,
                        row: r,
                        col: c,
                    });
                }
                cells.push(Cell {
                    row: r,
                    col: c,
                    text,
                });
            }
        }
        Ok(Table { id, headers, cells })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn num_rows(&self) -> usize {
        self.cells.len() / self.headers.len()
    }

    pub fn num_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&Cell> {
        if col < self.num_cols() {
            self.cells.get(row * self.num_cols() + col)
        } else {
            None
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    /// Cell texts of one row, in column order.
    pub fn row(&self, row: usize) -> impl Iterator<Item = &Cell> {
        self.cells[row * self.num_cols()..(row + 1) * self.num_cols()].iter()
    }
}

/// A free-text passage, optionally titled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Passage {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, KnowledgeError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(KnowledgeError::EmptyPassage(id));
        }
        Ok(Passage {
            id,
            title: title.into(),
            text,
        })
    }
}

/// The fact candidates for one question: one table plus K-1 passages.
///
/// Candidate index 0 always denotes the table; passage `i` is candidate
/// `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeSet {
    pub table: Table,
    pub passages: Vec<Passage>,
}

/// A borrowed view of one candidate fact.
#[derive(Debug, Clone, Copy)]
pub enum CandidateRef<'a> {
    Table(&'a Table),
    Passage(&'a Passage),
}

impl KnowledgeSet {
    pub fn new(table: Table, passages: Vec<Passage>) -> Self {
        KnowledgeSet { table, passages }
    }

    /// Number of candidates K (table + passages).
    pub fn num_candidates(&self) -> usize {
        1 + self.passages.len()
    }

    pub fn candidate(&self, index: usize) -> Result<CandidateRef<'_>, KnowledgeError> {
        if index == 0 {
            Ok(CandidateRef::Table(&self.table))
        } else {
            self.passages
                .get(index - 1)
                .map(CandidateRef::Passage)
                .ok_or(KnowledgeError::NoSuchCandidate {
                    index,
                    k: self.num_candidates(),
                })
        }
    }

    /// Resolves a fact id (table id or passage id) to its candidate index.
    pub fn candidate_index_of(&self, id: &str) -> Result<usize, KnowledgeError> {
        if self.table.id() == id {
            return Ok(0);
        }
        self.passages
            .iter()
            .position(|p| p.id == id)
            .map(|i| i + 1)
            .ok_or_else(|| KnowledgeError::NoSuchFactId(id.to_string()))
    }
}

/// Where a fact-region token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TokenSource {
    /// A token of cell (row, col) in the table.
    Cell { row: usize, col: usize },
    /// A token of column header `col`.
    Header { col: usize },
    /// A structural sentinel ("HEADER", ":", "|", "[ROW]").
    Marker,
    /// A token of a passage title, at this char offset within the title.
    PassageTitle { offset: usize },
    /// A token of a passage body, at this char offset within the text.
    PassageText { offset: usize },
}

/// Provenance of one fact-region token: candidate index plus source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub candidate: usize,
    pub source: TokenSource,
}

impl Provenance {
    /// True when the token originates from the table rather than a passage.
    pub fn is_table(&self) -> bool {
        self.candidate == 0
    }
}

/// Half-open token ranges of the four input regions. Together they
/// partition `[0, len)`; each region includes its trailing separator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segments {
    pub prefix: std::ops::Range<usize>,
    pub question: std::ops::Range<usize>,
    pub prev_answer: std::ops::Range<usize>,
    pub fact: std::ops::Range<usize>,
}

/// The serialized token sequence one hop's programs index into.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedInput {
    tokens: Vec<String>,
    segments: Segments,
    /// Index-aligned with `tokens`; `Some` exactly for fact-region tokens.
    provenance: Vec<Option<Provenance>>,
}

impl SerializedInput {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }

    pub fn provenance(&self, index: usize) -> Option<Provenance> {
        self.provenance.get(index).copied().flatten()
    }

    /// Tokens of the fact region.
    pub fn fact_tokens(&self) -> &[String] {
        &self.tokens[self.segments.fact.clone()]
    }

    /// Detokenized surface text of the inclusive token span `[s, e]`.
    pub fn span_text(&self, start: usize, end: usize) -> Result<String, SpanError> {
        if start > end {
            return Err(SpanError::InvalidRange { start, end });
        }
        if end >= self.tokens.len() {
            return Err(SpanError::IndexOutOfBounds {
                start,
                end,
                len: self.tokens.len(),
            });
        }
        Ok(detokenize(&self.tokens[start..=end]))
    }
}

/// Splits text into maximal alphanumeric runs and single punctuation marks.
///
/// Case is preserved: span text must reproduce the source verbatim.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text)
        .into_iter()
        .map(|(tok, _)| tok)
        .collect()
}

/// Like [`tokenize`], also reporting each token's char offset in `text`.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, usize)> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    let mut run_start = 0;
    for (offset, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            if run.is_empty() {
                run_start = offset;
            }
            run.push(ch);
        } else {
            if !run.is_empty() {
                tokens.push((std::mem::take(&mut run), run_start));
            }
            if !ch.is_whitespace() {
                tokens.push((ch.to_string(), offset));
            }
        }
    }
    if !run.is_empty() {
        tokens.push((run, run_start));
    }
    tokens
}

fn is_punctuation_token(tok: &str) -> bool {
    let mut chars = tok.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => !c.is_alphanumeric(),
        _ => false,
    }
}

/// Joins tokens with single spaces, omitting the space before punctuation.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && !is_punctuation_token(tok) {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Flattens a table row by row into sentinel-delimited tokens.
///
/// Layout: `HEADER : h1 | ... | hn [ROW] r1c1 | ... | r1cn [ROW] ...`,
/// with every cell token carrying `(candidate, row, col)` provenance.
pub fn flatten_table(table: &Table) -> Vec<(String, Provenance)> {
    let at = |source| Provenance {
        candidate: 0,
        source,
    };
    let mut out = Vec::new();
    out.push(("HEADER".to_string(), at(TokenSource::Marker)));
    out.push((":".to_string(), at(TokenSource::Marker)));
    for (col, header) in table.headers().iter().enumerate() {
        if col > 0 {
            out.push(("|".to_string(), at(TokenSource::Marker)));
        }
        for tok in tokenize(header) {
            out.push((tok, at(TokenSource::Header { col })));
        }
    }
    for row in 0..table.num_rows() {
        out.push((ROW.to_string(), at(TokenSource::Marker)));
        for cell in table.row(row) {
            if cell.col > 0 {
                out.push(("|".to_string(), at(TokenSource::Marker)));
            }
            for tok in tokenize(&cell.text) {
                out.push((
                    tok,
                    at(TokenSource::Cell {
                        row: cell.row,
                        col: cell.col,
                    }),
                ));
            }
        }
    }
    out
}

/// Serializes one passage as `title : text` (title omitted when empty).
pub fn serialize_passage(passage: &Passage, candidate: usize) -> Vec<(String, Provenance)> {
    let mut out = Vec::new();
    if !passage.title.is_empty() {
        for (tok, offset) in tokenize_with_offsets(&passage.title) {
            out.push((
                tok,
                Provenance {
                    candidate,
                    source: TokenSource::PassageTitle { offset },
                },
            ));
        }
        out.push((
            ":".to_string(),
            Provenance {
                candidate,
                source: TokenSource::Marker,
            },
        ));
    }
    for (tok, offset) in tokenize_with_offsets(&passage.text) {
        out.push((
            tok,
            Provenance {
                candidate,
                source: TokenSource::PassageText { offset },
            },
        ));
    }
    out
}

/// Builds the serialized input for one hop.
///
/// `prev_answer` is the rendered previous-hop result; `None` stands for the
/// first hop and serializes as the literal token `None`. When
/// `with_yesno_prefix` is set the tokens `yes or no` follow `[BOS]` so that
/// yes/no programs can extract their answer from the prefix.
pub fn serialize_input(
    question: &str,
    prev_answer: Option<&str>,
    ks: &KnowledgeSet,
    candidate: usize,
    with_yesno_prefix: bool,
) -> Result<SerializedInput, KnowledgeError> {
    let fact_tokens = match ks.candidate(candidate)? {
        CandidateRef::Table(t) => flatten_table(t),
        CandidateRef::Passage(p) => serialize_passage(p, candidate),
    };

    let mut tokens = Vec::new();
    let mut provenance = Vec::new();
    let push_plain = |tokens: &mut Vec<String>, provenance: &mut Vec<Option<Provenance>>, tok: String| {
        tokens.push(tok);
        provenance.push(None);
    };

    push_plain(&mut tokens, &mut provenance, BOS.to_string());
    if with_yesno_prefix {
        for w in ["yes", "or", "no"] {
            push_plain(&mut tokens, &mut provenance, w.to_string());
        }
    }
    let prefix_end = tokens.len();

    for tok in tokenize(question) {
        push_plain(&mut tokens, &mut provenance, tok);
    }
    push_plain(&mut tokens, &mut provenance, SEP.to_string());
    let question_end = tokens.len();

    for tok in tokenize(prev_answer.unwrap_or(NONE_ANSWER)) {
        push_plain(&mut tokens, &mut provenance, tok);
    }
    push_plain(&mut tokens, &mut provenance, SEP.to_string());
    let prev_end = tokens.len();

    for (tok, prov) in fact_tokens {
        tokens.push(tok);
        provenance.push(Some(prov));
    }
    let fact_end = tokens.len();

    Ok(SerializedInput {
        segments: Segments {
            prefix: 0..prefix_end,
            question: prefix_end..question_end,
            prev_answer: question_end..prev_end,
            fact: prev_end..fact_end,
        },
        tokens,
        provenance,
    })
}
