//! Raw review ingestion: JSONL parsing, per-user grouping, time ordering.

use serde::Deserialize;
use std::collections::HashMap;
use std::io::BufRead;

use crate::corpus::{InteractionEvent, UserSequence};
use crate::error::{Error, Result};

/// What to do with a line that fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Fail on the first malformed line.
    #[default]
    Strict,
    /// Drop malformed lines and count them.
    Skip,
}

/// Counters from one ingestion pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines: usize,
    pub records: usize,
    pub skipped: usize,
    pub users: usize,
}

/// One review line. Field aliases accept the Amazon Reviews export names.
#[derive(Debug, Deserialize)]
struct RawReview {
    #[serde(alias = "reviewerID")]
    user_id: String,
    #[serde(alias = "asin")]
    item_id: String,
    #[serde(alias = "overall")]
    rating: f64,
    #[serde(default, alias = "reviewText")]
    review_text: String,
    #[serde(alias = "unixReviewTime")]
    timestamp: i64,
}

/// Reads review JSONL, groups events by user, and orders each user's events
/// by ascending timestamp. The sort is stable, so events sharing a timestamp
/// keep their file order. Blank lines are ignored. Users come back sorted by
/// id so downstream output is reproducible.
pub fn ingest(reader: impl BufRead, policy: ErrorPolicy) -> Result<(Vec<UserSequence>, IngestReport)> {
    let mut report = IngestReport::default();
    // Map user -> events, with first-appearance tracking folded into the
    // final sort by user id.
    let mut by_user: HashMap<String, Vec<InteractionEvent>> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let raw: RawReview = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(err) => match policy {
                ErrorPolicy::Strict => {
                    return Err(Error::Record {
                        line: idx + 1,
                        message: err.to_string(),
                    })
                }
                ErrorPolicy::Skip => {
                    report.skipped += 1;
                    continue;
                }
            },
        };
        report.records += 1;
        by_user.entry(raw.user_id).or_default().push(InteractionEvent {
            item_id: raw.item_id,
            rating: raw.rating,
            review_text: raw.review_text,
            timestamp: raw.timestamp,
        });
    }

    let mut sequences: Vec<UserSequence> = by_user
        .into_iter()
        .map(|(user_id, mut events)| {
            events.sort_by_key(|e| e.timestamp);
            UserSequence { user_id, events }
        })
        .collect();
    sequences.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    report.users = sequences.len();
    Ok((sequences, report))
}
