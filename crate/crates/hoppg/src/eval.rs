//! Exact-match and token-level F1 scoring with multi-answer alignment,
//! plus grouped breakdown reports.
//!
//! EM compares normalized answer multisets. F1 aligns predictions to gold
//! answers with a greedy order-insensitive one-to-one matching that
//! maximizes the summed per-pair token F1, then divides by the larger
//! cardinality, so spurious or missing answers cost score.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("gold answer list is empty")]
    EmptyGold,
}

/// QA answer normalization: lowercase, drop punctuation, drop articles,
/// collapse whitespace.
pub fn normalize(answer: &str) -> String {
    let lower = answer.to_lowercase();
    let no_punct: String = lower
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-bag F1 between two normalized answers. Two empty bags match
/// perfectly; one empty bag scores zero.
fn pair_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut remaining = g.clone();
    let mut common = 0usize;
    for tok in &p {
        if let Some(i) = remaining.iter().position(|r| r == tok) {
            remaining.swap_remove(i);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Scores a predicted answer list against the gold list.
///
/// Returns `(em, f1)`: EM is true iff the normalized multisets are equal;
/// F1 greedily matches pairs by descending token F1 and averages the
/// matched scores over `max(|pred|, |gold|)`.
pub fn score(pred: &[String], gold: &[String]) -> Result<(bool, f64), ScoreError> {
    if gold.is_empty() {
        return Err(ScoreError::EmptyGold);
    }
    let pred_norm: Vec<String> = pred.iter().map(|s| normalize(s)).collect();
    let gold_norm: Vec<String> = gold.iter().map(|s| normalize(s)).collect();

    let mut sorted_pred = pred_norm.clone();
    let mut sorted_gold = gold_norm.clone();
    sorted_pred.sort();
    sorted_gold.sort();
    let em = sorted_pred == sorted_gold;

    if pred_norm.is_empty() {
        return Ok((false, 0.0));
    }

    // All pair scores, greedily consumed from the best down. Ties resolve
    // by (pred index, gold index) for determinism.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pred_norm.len() * gold_norm.len());
    for (i, p) in pred_norm.iter().enumerate() {
        for (j, g) in gold_norm.iter().enumerate() {
            pairs.push((pair_f1(p, g), i, j));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_used = vec![false; pred_norm.len()];
    let mut gold_used = vec![false; gold_norm.len()];
    let mut matched_sum = 0.0;
    for (s, i, j) in pairs {
        if !pred_used[i] && !gold_used[j] {
            pred_used[i] = true;
            gold_used[j] = true;
            matched_sum += s;
        }
    }
    let f1 = matched_sum / pred_norm.len().max(gold_norm.len()) as f64;
    Ok((em, f1))
}

/// One scored question with its grouping metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub question_id: String,
    pub em: bool,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_kind: Option<String>,
}

/// Mean EM/F1 over a group of items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupStats {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
}

impl GroupStats {
    fn add(&mut self, item: &ScoredItem) {
        self.count += 1;
        self.em += if item.em { 1.0 } else { 0.0 };
        self.f1 += item.f1;
    }

    fn finish(mut self) -> Self {
        if self.count > 0 {
            self.em /= self.count as f64;
            self.f1 /= self.count as f64;
        }
        self
    }
}

/// Per-slice aggregates in the shape of a results table: overall,
/// single-hop vs multi-hop, per knowledge kind, per reasoning type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BreakdownReport {
    pub overall: GroupStats,
    pub single_hop: GroupStats,
    pub multi_hop: GroupStats,
    pub per_kind: BTreeMap<String, GroupStats>,
    pub per_type: BTreeMap<String, GroupStats>,
}

/// Groups scored items and reports mean EM/F1 with counts.
pub fn breakdown(items: &[ScoredItem]) -> BreakdownReport {
    let mut overall = GroupStats::default();
    let mut single = GroupStats::default();
    let mut multi = GroupStats::default();
    let mut per_kind: BTreeMap<String, GroupStats> = BTreeMap::new();
    let mut per_type: BTreeMap<String, GroupStats> = BTreeMap::new();

    for item in items {
        overall.add(item);
        match item.hop_count {
            Some(h) if h > 1 => multi.add(item),
            Some(_) => single.add(item),
            None => {}
        }
        if let Some(kind) = &item.knowledge_kind {
            per_kind.entry(kind.clone()).or_default().add(item);
        }
        if let Some(rt) = &item.reasoning_type {
            per_type.entry(rt.clone()).or_default().add(item);
        }
    }

    BreakdownReport {
        overall: overall.finish(),
        single_hop: single.finish(),
        multi_hop: multi.finish(),
        per_kind: per_kind.into_iter().map(|(k, v)| (k, v.finish())).collect(),
        per_type: per_type.into_iter().map(|(k, v)| (k, v.finish())).collect(),
    }
}

impl BreakdownReport {
    /// Aligned plain-text table, one row per group.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, GroupStats)> = vec![
            ("overall".to_string(), self.overall),
            ("single-hop".to_string(), self.single_hop),
            ("multi-hop".to_string(), self.multi_hop),
        ];
        for (k, v) in &self.per_kind {
            rows.push((format!("kind:{k}"), *v));
        }
        for (k, v) in &self.per_type {
            rows.push((format!("type:{k}"), *v));
        }
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:width$}  {:>5}  {:>7}  {:>7}\n", "group", "count", "EM", "F1");
        for (name, stats) in rows {
            out.push_str(&format!(
                "{name:width$}  {:>5}  {:>7.4}  {:>7.4}\n",
                stats.count, stats.em, stats.f1
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> Vec<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(normalize("The Red Car."), "red car");
        assert_eq!(normalize("1,994"), "1994");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("A  an the"), "");
        assert_eq!(normalize("Crème brûlée!"), "crème brûlée");
    }

    #[test]
    fn identity_scores_perfectly() {
        let (em, f1) = score(&s(&["Paris"]), &s(&["Paris"])).unwrap();
        assert!(em);
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn normalization_aligns_articles() {
        let (em, f1) = score(&s(&["the red car"]), &s(&["red car"])).unwrap();
        assert!(em); // multisets equal after normalization
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn partial_match_over_max_cardinality() {
        let (em, f1) = score(&s(&["red car"]), &s(&["red car", "blue car"])).unwrap();
        assert!(!em);
        assert_eq!(f1, 0.5);
    }

    #[test]
    fn empty_pred_and_empty_gold() {
        let (em, f1) = score(&[], &s(&["x"])).unwrap();
        assert!(!em);
        assert_eq!(f1, 0.0);
        assert_eq!(score(&s(&["x"]), &[]), Err(ScoreError::EmptyGold));
    }

    #[test]
    fn permutation_invariance() {
        let a = score(&s(&["a1", "b2"]), &s(&["b2", "a1"])).unwrap();
        let b = score(&s(&["b2", "a1"]), &s(&["b2", "a1"])).unwrap();
        assert_eq!(a, b);
        assert!(a.0);
        assert_eq!(a.1, 1.0);
    }

    #[test]
    fn spurious_prediction_never_helps() {
        let base = score(&s(&["red car"]), &s(&["red car"])).unwrap().1;
        let padded = score(&s(&["red car", "zebra"]), &s(&["red car"])).unwrap().1;
        assert!(padded < base);
    }

    #[test]
    fn token_overlap_partial_credit() {
        // pred "red car", gold "red bus": common {red}, P = R = 1/2.
        let (_, f1) = score(&s(&["red car"]), &s(&["red bus"])).unwrap();
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_alignment_is_order_insensitive() {
        let (_, f1) = score(&s(&["blue car", "red car"]), &s(&["red car", "blue car"])).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn breakdown_on_mixed_fixture() {
        // Hand-computed over six items.
        let item = |id: &str, em: bool, f1: f64, rt: &str, hops: usize, kind: &str| ScoredItem {
            question_id: id.to_string(),
            em,
            f1,
            reasoning_type: Some(rt.to_string()),
            hop_count: Some(hops),
            knowledge_kind: Some(kind.to_string()),
        };
        let items = vec![
            item("1", true, 1.0, "span_extraction", 1, "table"),
            item("2", false, 0.5, "span_extraction", 1, "text"),
            item("3", true, 1.0, "compose_span", 2, "both"),
            item("4", false, 0.0, "compose_span", 2, "both"),
            item("5", true, 1.0, "yes_no", 1, "text"),
            item("6", false, 0.25, "intersect", 2, "both"),
        ];
        let report = breakdown(&items);
        assert_eq!(report.overall.count, 6);
        assert!((report.overall.em - 0.5).abs() < 1e-12);
        assert!((report.overall.f1 - (3.75 / 6.0)).abs() < 1e-12);
        assert_eq!(report.single_hop.count, 3);
        assert!((report.single_hop.f1 - (2.5 / 3.0)).abs() < 1e-12);
        assert_eq!(report.multi_hop.count, 3);
        assert!((report.multi_hop.f1 - (1.25 / 3.0)).abs() < 1e-12);
        assert_eq!(report.per_type["compose_span"].count, 2);
        assert!((report.per_type["compose_span"].em - 0.5).abs() < 1e-12);
        assert_eq!(report.per_kind["both"].count, 3);

        // Weighted single/multi aggregates recombine to overall.
        let recombined_em = (report.single_hop.em * report.single_hop.count as f64
            + report.multi_hop.em * report.multi_hop.count as f64)
            / report.overall.count as f64;
        assert!((recombined_em - report.overall.em).abs() < 1e-9);
    }

    #[test]
    fn empty_breakdown() {
        let report = breakdown(&[]);
        assert_eq!(report.overall.count, 0);
        assert_eq!(report.overall.em, 0.0);
        assert!(report.per_type.is_empty());
    }

    #[test]
    fn table_output_is_aligned() {
        let report = breakdown(&[ScoredItem {
            question_id: "1".into(),
            em: true,
            f1: 1.0,
            reasoning_type: Some("yes_no".into()),
            hop_count: Some(1),
            knowledge_kind: Some("table".into()),
        }]);
        let table = report.to_table();
        assert!(table.contains("overall"));
        assert!(table.contains("type:yes_no"));
    }
}
