//! Supporting-fact selection: score all K candidates for the current hop
//! and take the argmax.
//!
//! The scoring contract is pluggable. Two implementations ship here: a
//! gold retriever that replays per-hop annotated fact ids (for oracle runs
//! and replay verification) and a lexical baseline that ranks candidates by
//! IDF-weighted token overlap with the question and previous-hop answer.

use crate::knowledge::{
    serialize_input, KnowledgeError, KnowledgeSet, SerializedInput, TokenSource,
};
use thiserror::Error;

/// Candidate scores, index-aligned with the knowledge set (0 = table).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    /// Index of the highest score; ties break to the lowest index, so the
    /// table wins an all-equal vector.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.0.iter().enumerate() {
            if s > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("no gold fact annotated for hop {hop}")]
    MissingAnnotation { hop: usize },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

/// Scores every candidate for one hop. Implementations must be
/// deterministic for fixed inputs.
pub trait Retriever: Send + Sync {
    fn score(
        &self,
        question: &str,
        prev_answer: Option<&str>,
        ks: &KnowledgeSet,
        hop: usize,
    ) -> Result<ScoreVector, RetrievalError>;
}

/// Selects the supporting fact for the hop: argmax over the retriever's
/// score vector.
pub fn select(
    question: &str,
    prev_answer: Option<&str>,
    ks: &KnowledgeSet,
    hop: usize,
    retriever: &dyn Retriever,
) -> Result<usize, RetrievalError> {
    Ok(retriever.score(question, prev_answer, ks, hop)?.argmax())
}

/// Replays annotated gold facts: 1.0 for the hop's gold candidate, 0.0 for
/// everything else.
#[derive(Debug, Clone)]
pub struct GoldRetriever {
    /// Gold fact id per hop, hop 1 first.
    gold_fact_ids: Vec<String>,
}

impl GoldRetriever {
    pub fn new(gold_fact_ids: Vec<String>) -> Self {
        GoldRetriever { gold_fact_ids }
    }

    fn gold_index(&self, ks: &KnowledgeSet, hop: usize) -> Result<usize, RetrievalError> {
        let id = self
            .gold_fact_ids
            .get(hop.checked_sub(1).ok_or(RetrievalError::MissingAnnotation { hop })?)
            .ok_or(RetrievalError::MissingAnnotation { hop })?;
        Ok(ks.candidate_index_of(id)?)
    }
}

/// Score of one candidate under the gold annotation.
pub fn gold_score(gold_index: usize, candidate: usize) -> f64 {
    if candidate == gold_index {
        1.0
    } else {
        0.0
    }
}

impl Retriever for GoldRetriever {
    fn score(
        &self,
        _question: &str,
        _prev_answer: Option<&str>,
        ks: &KnowledgeSet,
        hop: usize,
    ) -> Result<ScoreVector, RetrievalError> {
        let gold = self.gold_index(ks, hop)?;
        Ok(ScoreVector(
            (0..ks.num_candidates())
                .map(|i| gold_score(gold, i))
                .collect(),
        ))
    }
}

/// IDF-weighted token-overlap baseline.
///
/// Each candidate is serialized exactly as the generator input would be
/// (question, previous answer, fact), and scored by the summed IDF of the
/// query tokens it contains. IDF is computed over the question's own K
/// candidates: `idf(t) = ln((K + 1) / (df(t) + 1)) + 1`. Tokens are
/// lowercased; sentinels and pure punctuation are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalRetriever;

fn is_content_token(tok: &str) -> bool {
    tok.chars().any(char::is_alphanumeric)
}

fn content_tokens(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| is_content_token(t))
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercased content tokens of a candidate's fact region, skipping
/// structural markers.
fn candidate_tokens(input: &SerializedInput) -> Vec<String> {
    input
        .segments()
        .fact
        .clone()
        .filter_map(|i| {
            let prov = input.provenance(i)?;
            if matches!(prov.source, TokenSource::Marker) {
                return None;
            }
            let tok = &input.tokens()[i];
            is_content_token(tok).then(|| tok.to_lowercase())
        })
        .collect()
}

/// Lowercased content tokens of the question and previous-answer regions.
fn query_tokens(input: &SerializedInput) -> Vec<String> {
    let seg = input.segments();
    let mut toks = Vec::new();
    for range in [seg.question.clone(), seg.prev_answer.clone()] {
        toks.extend(content_tokens(&input.tokens()[range]));
    }
    // The region-closing [SEP] sentinels survive the alphanumeric filter.
    toks.retain(|t| t != "[sep]");
    toks
}

/// IDF-weighted overlap between the query tokens and one candidate's
/// tokens, given per-token document frequencies over the K candidates.
pub fn lexical_score(
    query: &[String],
    candidate: &[String],
    num_candidates: usize,
    doc_freq: impl Fn(&str) -> usize,
) -> f64 {
    let k = num_candidates as f64;
    let mut seen: Vec<&str> = Vec::new();
    let mut score = 0.0;
    for tok in query {
        if seen.contains(&tok.as_str()) {
            continue;
        }
        seen.push(tok);
        if candidate.iter().any(|c| c == tok) {
            let df = doc_freq(tok) as f64;
            score += ((k + 1.0) / (df + 1.0)).ln() + 1.0;
        }
    }
    score
}

impl Retriever for LexicalRetriever {
    fn score(
        &self,
        question: &str,
        prev_answer: Option<&str>,
        ks: &KnowledgeSet,
        _hop: usize,
    ) -> Result<ScoreVector, RetrievalError> {
        let k = ks.num_candidates();
        let mut query = Vec::new();
        let mut per_candidate: Vec<Vec<String>> = Vec::with_capacity(k);
        for i in 0..k {
            let input = serialize_input(question, prev_answer, ks, i, false)?;
            if i == 0 {
                query = query_tokens(&input);
            }
            per_candidate.push(candidate_tokens(&input));
        }
        let doc_freq = |tok: &str| {
            per_candidate
                .iter()
                .filter(|toks| toks.iter().any(|t| t == tok))
                .count()
        };
        Ok(ScoreVector(
            per_candidate
                .iter()
                .map(|toks| lexical_score(&query, toks, k, doc_freq))
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{Passage, Table};

    fn ks_with(passages: &[(&str, &str)]) -> KnowledgeSet {
        let table = Table::new(
            "tbl",
            vec!["Film".into(), "Year".into()],
            vec![vec!["Gladiator".into(), "2000".into()]],
        )
        .unwrap();
        KnowledgeSet::new(
            table,
            passages
                .iter()
                .map(|(id, text)| Passage::new(*id, "", *text).unwrap())
                .collect(),
        )
    }

    #[test]
    fn single_candidate_selects_the_table() {
        let ks = ks_with(&[]);
        let idx = select("anything", None, &ks, 1, &LexicalRetriever).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn gold_retriever_replays_annotation() {
        let ks = ks_with(&[("p1", "one"), ("p2", "two")]);
        let gold = GoldRetriever::new(vec!["tbl".into(), "p2".into()]);
        let hop1 = gold.score("q", None, &ks, 1).unwrap();
        assert_eq!(hop1.0, vec![1.0, 0.0, 0.0]);
        assert_eq!(select("q", None, &ks, 1, &gold).unwrap(), 0);
        let hop2 = gold.score("q", Some("x"), &ks, 2).unwrap();
        assert_eq!(hop2.0, vec![0.0, 0.0, 1.0]);
        assert!(matches!(
            gold.score("q", None, &ks, 3),
            Err(RetrievalError::MissingAnnotation { hop: 3 })
        ));
    }

    #[test]
    fn lexical_picks_the_overlapping_passage() {
        let ks = ks_with(&[
            ("p1", "The weather was mild that winter."),
            ("p2", "Ridley Scott directed Alien in 1979."),
            ("p3", "Bread is made from flour."),
        ]);
        let idx = select("Who directed Alien?", None, &ks, 1, &LexicalRetriever).unwrap();
        assert_eq!(idx, 2); // p2 is candidate 2
    }

    #[test]
    fn lexical_fixture_matches_hand_computation() {
        // K = 3: table ["Gladiator", "2000"], p1 "directed Alien",
        // p2 "nothing shared". Query "Who directed Alien?" -> tokens
        // {who, directed, alien}. df(directed) = df(alien) = 1 so each
        // contributes ln(4/2) + 1; "who" matches nothing.
        let ks = ks_with(&[
            ("p1", "He directed Alien."),
            ("p2", "Completely unrelated text."),
        ]);
        let scores = LexicalRetriever
            .score("Who directed Alien?", None, &ks, 1)
            .unwrap();
        let expected = 2.0 * ((4.0_f64 / 2.0).ln() + 1.0);
        assert!((scores.0[1] - expected).abs() < 1e-12);
        assert_eq!(scores.0[0], 0.0);
        assert_eq!(scores.0[2], 0.0);
    }

    #[test]
    fn zero_overlap_scores_zero_and_duplicates_tie() {
        let ks = ks_with(&[("p1", "same words here"), ("p2", "same words here")]);
        let scores = LexicalRetriever
            .score("totally disjoint question", None, &ks, 1)
            .unwrap();
        assert_eq!(scores.0[1], 0.0);
        assert_eq!(scores.0[2], 0.0);
        let scores = LexicalRetriever
            .score("same words", None, &ks, 1)
            .unwrap();
        assert_eq!(scores.0[1], scores.0[2]);
        // Tie between equal passages breaks low, but table scores 0 here.
        assert_eq!(scores.argmax(), 1);
    }

    #[test]
    fn prev_answer_tokens_join_the_query() {
        let ks = ks_with(&[("p1", "Marseille has an old port."), ("p2", "Paris has an old tower.")]);
        let without = select("Describe that place", None, &ks, 2, &LexicalRetriever).unwrap();
        let with = select("Describe that place", Some("Paris"), &ks, 2, &LexicalRetriever).unwrap();
        assert_eq!(without, 0); // no overlap anywhere, tie breaks to the table
        assert_eq!(with, 2);
    }

    #[test]
    fn argmax_ties_break_to_lowest_index() {
        assert_eq!(ScoreVector(vec![0.0, 0.0, 0.0]).argmax(), 0);
        assert_eq!(ScoreVector(vec![1.0, 2.0, 2.0]).argmax(), 1);
    }

    #[test]
    fn permuting_passages_permutes_scores() {
        let a = ("p1", "Ridley Scott directed Alien.");
        let b = ("p2", "A film about bread baking.");
        let q = "Who directed Alien?";
        let fwd = LexicalRetriever
            .score(q, None, &ks_with(&[a, b]), 1)
            .unwrap();
        let rev = LexicalRetriever
            .score(q, None, &ks_with(&[b, a]), 1)
            .unwrap();
        assert_eq!(fwd.0[1], rev.0[2]);
        assert_eq!(fwd.0[2], rev.0[1]);
        assert_eq!(fwd.0[0], rev.0[0]);
    }
}
