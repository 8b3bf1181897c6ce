//! Tie-aware evaluation: optimistic/pessimistic ranks, NDCG/Recall/MRR,
//! and per-category aggregation.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::par;
use crate::retrieval::Ranking;

/// Optimistic and pessimistic rank of the ground truth inside its
/// tie-group: first position within the group vs last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankPair {
    pub opt: usize,
    pub pes: usize,
}

/// Opt/pes pair for one aggregated metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptPes {
    pub opt: f64,
    pub pes: f64,
}

/// Per-category aggregation: unweighted user means per metric name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub category: String,
    pub n_users: usize,
    /// Keyed "ndcg@10", "recall@1", "recall@10", "mrr".
    pub metrics: BTreeMap<String, OptPes>,
}

/// Locates the ground truth's tie-group: opt = 1 + items in strictly
/// earlier groups, pes = opt - 1 + size of its group.
pub fn rank_of(ranking: &Ranking, ground_truth: &str) -> Result<RankPair> {
    let mut before = 0usize;
    for group in &ranking.groups {
        if group.iter().any(|id| id == ground_truth) {
            return Ok(RankPair {
                opt: before + 1,
                pes: before + group.len(),
            });
        }
        before += group.len();
    }
    Err(Error::UnknownItem(ground_truth.to_string()))
}

/// 1/log2(rank + 1) when rank <= k, else 0. With one relevant item the
/// ideal DCG is 1, so this is already normalized.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank as f64) + 1.0).log2()
    } else {
        0.0
    }
}

/// 1 when rank <= k, else 0.
pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Reciprocal rank with no cutoff.
pub fn mrr(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// One user's ranking paired with their ground-truth item.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub user_id: String,
    pub ranking: Ranking,
    pub ground_truth: String,
}

fn metric_names(ks: &[usize]) -> Vec<String> {
    let mut names = vec!["ndcg@10".to_string(), "mrr".to_string()];
    for &k in ks {
        names.push(format!("recall@{k}"));
    }
    names.sort();
    names.dedup();
    names
}

fn metric_value(name: &str, rank: usize) -> f64 {
    match name {
        "mrr" => mrr(rank),
        "ndcg@10" => ndcg_at_k(rank, 10),
        recall => {
            let k: usize = recall
                .strip_prefix("recall@")
                .and_then(|k| k.parse().ok())
                .expect("metric names are built internally");
            recall_at_k(rank, k)
        }
    }
}

/// Scores every case on both rank bounds and averages per metric with an
/// unweighted user mean. `ks` selects the Recall cutoffs; NDCG@10 and MRR
/// are always included.
pub fn evaluate(category: &str, cases: &[EvalCase], ks: &[usize]) -> Result<MetricReport> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("no users to evaluate"));
    }
    let mut seen: HashSet<&str> = HashSet::new();
    for case in cases {
        if !seen.insert(case.user_id.as_str()) {
            return Err(Error::DuplicateUser(case.user_id.clone()));
        }
    }
    let names = metric_names(ks);
    let per_user: Vec<Result<Vec<(f64, f64)>>> = par::map(cases, |case| {
        let pair = rank_of(&case.ranking, &case.ground_truth)?;
        Ok(names
            .iter()
            .map(|name| (metric_value(name, pair.opt), metric_value(name, pair.pes)))
            .collect())
    });

    let n = cases.len() as f64;
    let mut sums = vec![(0.0f64, 0.0f64); names.len()];
    for user in per_user {
        for (sum, value) in sums.iter_mut().zip(user?) {
            sum.0 += value.0;
            sum.1 += value.1;
        }
    }
    Ok(MetricReport {
        category: category.to_string(),
        n_users: cases.len(),
        metrics: names
            .into_iter()
            .zip(sums)
            .map(|(name, (opt, pes))| {
                (
                    name,
                    OptPes {
                        opt: opt / n,
                        pes: pes / n,
                    },
                )
            })
            .collect(),
    })
}

impl MetricReport {
    /// Canonical JSON with pinned field order and 6-decimal metric values,
    /// so identical reports are byte-identical.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\"category\":");
        out.push_str(&serde_json::to_string(&self.category).expect("string never fails"));
        out.push_str(&format!(",\"n_users\":{}", self.n_users));
        out.push_str(",\"metrics\":{");
        for (i, (name, value)) in self.metrics.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!(
                "{}:{{\"opt\":{:.6},\"pes\":{:.6}}}",
                serde_json::to_string(name).expect("string never fails"),
                value.opt,
                value.pes
            ));
        }
        out.push_str("}}");
        out
    }

    /// Fixed-width table with one "opt/pes" column per metric.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14} {:>8}", "category", "users");
        for name in self.metrics.keys() {
            out.push_str(&format!(" {name:>17}"));
        }
        out.push('\n');
        out.push_str(&format!("{:<14} {:>8}", self.category, self.n_users));
        for value in self.metrics.values() {
            out.push_str(&format!(" {:>17}", format!("{:.4}/{:.4}", value.opt, value.pes)));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ranking(groups: &[&[&str]]) -> Ranking {
        Ranking {
            groups: groups
                .iter()
                .map(|g| g.iter().map(|s| s.to_string()).collect())
                .collect(),
            scores: None,
        }
    }

    #[test]
    fn rank_of_singleton_first_group() {
        let r = ranking(&[&["gt"], &["a", "b"]]);
        assert_eq!(rank_of(&r, "gt").unwrap(), RankPair { opt: 1, pes: 1 });
    }

    #[test]
    fn rank_of_full_tie() {
        let ids: Vec<String> = (0..100).map(|i| format!("i{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let r = ranking(&[&refs]);
        assert_eq!(rank_of(&r, "i42").unwrap(), RankPair { opt: 1, pes: 100 });
    }

    #[test]
    fn rank_of_counting_rule() {
        let r = ranking(&[&["a", "b"], &["gt", "c"], &["d"]]);
        assert_eq!(rank_of(&r, "gt").unwrap(), RankPair { opt: 3, pes: 4 });
    }

    #[test]
    fn rank_of_missing_item_errors() {
        let r = ranking(&[&["a"]]);
        assert!(rank_of(&r, "gt").is_err());
    }

    #[test]
    fn pointwise_metric_values() {
        assert_eq!(ndcg_at_k(1, 10), 1.0);
        assert_eq!(recall_at_k(1, 1), 1.0);
        assert_eq!(mrr(1), 1.0);
        assert_relative_eq!(ndcg_at_k(3, 10), 0.5, epsilon = 1e-15);
        assert_relative_eq!(mrr(3), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
        assert_eq!(recall_at_k(11, 10), 0.0);
        assert_relative_eq!(mrr(11), 1.0 / 11.0, epsilon = 1e-15);
        assert_eq!(recall_at_k(10, 10), 1.0);
        assert!(ndcg_at_k(10, 10) > 0.0);
    }

    fn case(user: &str, groups: &[&[&str]], gt: &str) -> EvalCase {
        EvalCase {
            user_id: user.to_string(),
            ranking: ranking(groups),
            ground_truth: gt.to_string(),
        }
    }

    #[test]
    fn evaluate_single_perfect_user() {
        let cases = vec![case("u", &[&["gt"], &["a"]], "gt")];
        let report = evaluate("t", &cases, &[1, 10]).unwrap();
        for value in report.metrics.values() {
            assert_eq!(value.opt, 1.0);
            assert_eq!(value.pes, 1.0);
        }
    }

    #[test]
    fn evaluate_two_user_hand_average() {
        // Ranks (1,1) and (12,12): recall@10 = 0.5, mrr = (1 + 1/12)/2.
        let ids: Vec<String> = (0..12).map(|i| format!("i{i}")).collect();
        let singles: Vec<Vec<String>> = ids.iter().map(|i| vec![i.clone()]).collect();
        let cases = vec![
            case("u1", &[&["gt"], &["x"]], "gt"),
            EvalCase {
                user_id: "u2".to_string(),
                ranking: Ranking {
                    groups: {
                        let mut g = singles.clone();
                        g.push(vec!["gt".to_string()]);
                        g
                    },
                    scores: None,
                },
                ground_truth: "gt".to_string(),
            },
        ];
        let report = evaluate("t", &cases, &[1, 10]).unwrap();
        let recall10 = report.metrics["recall@10"];
        assert_relative_eq!(recall10.opt, 0.5, epsilon = 1e-15);
        assert_relative_eq!(recall10.pes, 0.5, epsilon = 1e-15);
        let mrr_row = report.metrics["mrr"];
        assert_relative_eq!(mrr_row.opt, (1.0 + 1.0 / 13.0) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(mrr_row.opt, 0.5384615384615384, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_all_tie_rankings() {
        let ids: Vec<String> = (0..50).map(|i| format!("i{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let cases: Vec<EvalCase> = (0..4)
            .map(|u| case(&format!("u{u}"), &[&refs], "i7"))
            .collect();
        let report = evaluate("t", &cases, &[1, 10]).unwrap();
        for k in [1usize, 10] {
            let row = report.metrics[&format!("recall@{k}")];
            assert_eq!(row.opt, 1.0);
            assert_eq!(row.pes, 0.0);
        }
        let row = report.metrics["mrr"];
        assert_eq!(row.opt, 1.0);
        assert_relative_eq!(row.pes, 1.0 / 50.0, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_opt_dominates_pes() {
        let cases = vec![
            case("u1", &[&["a", "gt", "b"], &["c"]], "gt"),
            case("u2", &[&["a"], &["gt", "b"]], "gt"),
        ];
        let report = evaluate("t", &cases, &[1, 10]).unwrap();
        for value in report.metrics.values() {
            assert!(value.opt >= value.pes);
            assert!((0.0..=1.0).contains(&value.opt));
            assert!((0.0..=1.0).contains(&value.pes));
        }
    }

    #[test]
    fn evaluate_rejects_duplicates_and_empty() {
        let cases = vec![
            case("u", &[&["gt"]], "gt"),
            case("u", &[&["gt"]], "gt"),
        ];
        assert!(matches!(
            evaluate("t", &cases, &[1]),
            Err(Error::DuplicateUser(_))
        ));
        assert!(evaluate("t", &[], &[1]).is_err());
    }

    #[test]
    fn canonical_json_shape() {
        let cases = vec![case("u", &[&["gt"], &["a", "b"]], "gt")];
        let report = evaluate("cat", &cases, &[1, 10]).unwrap();
        let json = report.to_canonical_json();
        assert_eq!(
            json,
            "{\"category\":\"cat\",\"n_users\":1,\"metrics\":{\
             \"mrr\":{\"opt\":1.000000,\"pes\":1.000000},\
             \"ndcg@10\":{\"opt\":1.000000,\"pes\":1.000000},\
             \"recall@1\":{\"opt\":1.000000,\"pes\":1.000000},\
             \"recall@10\":{\"opt\":1.000000,\"pes\":1.000000}}}"
        );
        // The canonical string itself parses as JSON with the same values.
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["n_users"], 1);
        assert_eq!(parsed["metrics"]["mrr"]["opt"], 1.0);
    }

    #[test]
    fn id_style_rankings_make_opt_equal_pes() {
        let groups: Vec<Vec<String>> = (0..20).map(|i| vec![format!("i{i}")]).collect();
        let r = Ranking { groups, scores: None };
        let pair = rank_of(&r, "i13").unwrap();
        assert_eq!(pair.opt, pair.pes);
        assert_eq!(pair.opt, 14);
    }
}
