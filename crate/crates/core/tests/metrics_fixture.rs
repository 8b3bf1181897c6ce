//! Replays a 20-user ranking fixture and compares the canonical report
//! byte-for-byte against a frozen reference produced independently.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use calrec::corpus::ErrorPolicy;
use calrec::io::{read_ground_truth, read_jsonl, RankingRecord};
use calrec::metrics::{evaluate, EvalCase};
use calrec::retrieval::Ranking;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn fixture_report_is_byte_identical_to_reference() {
    let rankings_file = fs::File::open(fixture("rankings.jsonl")).unwrap();
    let (records, _) =
        read_jsonl::<RankingRecord>(BufReader::new(rankings_file), ErrorPolicy::Strict).unwrap();
    let rankings: Vec<(String, Ranking)> =
        records.into_iter().map(RankingRecord::into_ranking).collect();

    let gt_file = fs::File::open(fixture("gt.jsonl")).unwrap();
    let gt = read_ground_truth(BufReader::new(gt_file)).unwrap();
    assert_eq!(gt.len(), 20);

    let cases: Vec<EvalCase> = gt
        .into_iter()
        .map(|(user_id, ground_truth)| {
            let ranking = rankings
                .iter()
                .find(|(u, _)| *u == user_id)
                .map(|(_, r)| r.clone())
                .expect("every gt user has a ranking");
            EvalCase { user_id, ranking, ground_truth }
        })
        .collect();
    for case in &cases {
        assert_eq!(case.ranking.item_count(), 50, "all rankings cover the corpus");
    }

    let report = evaluate("metrics-fixture", &cases, &[1, 10]).unwrap();
    let expected = fs::read_to_string(fixture("expected_report.json")).unwrap();
    assert_eq!(format!("{}\n", report.to_canonical_json()), expected);
}
