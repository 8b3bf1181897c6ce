//! Leave-last-out splitting, augmentation truncation, user sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionEvent, UserSequence};
use crate::error::{Error, Result};

/// Which split a dataset is prepared for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Train on events 1..n-2, validate on event n-1, test on event n.
    Stage2,
    /// The entire record is training history.
    Stage1Full,
    /// Train on events 1..n-1, validate on event n.
    Stage1Valcat,
}

impl SplitMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stage2" => Ok(SplitMode::Stage2),
            "stage1_full" => Ok(SplitMode::Stage1Full),
            "stage1_valcat" => Ok(SplitMode::Stage1Valcat),
            other => Err(Error::InvalidArgument(format!(
                "unknown split mode {other:?} (expected stage2, stage1_full, or stage1_valcat)"
            ))),
        }
    }
}

/// One user's split record. `val`/`test` are populated per [`SplitMode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user_id: String,
    pub train: Vec<InteractionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<InteractionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<InteractionEvent>,
}

/// All user splits plus the users a mode had to exclude.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub splits: Vec<UserSplit>,
    /// Users too short for the mode (stage2 with n < 3), in input order.
    pub excluded: Vec<String>,
}

/// Splits each sequence per `mode`. Stage-II requires n >= 3; shorter users
/// are excluded and listed in the result. The three parts of a stage2 split
/// partition the sequence exactly.
pub fn split_leave_last_out(sequences: &[UserSequence], mode: SplitMode) -> SplitDataset {
    let mut dataset = SplitDataset::default();
    for seq in sequences {
        let n = seq.events.len();
        let split = match mode {
            SplitMode::Stage2 => {
                if n < 3 {
                    dataset.excluded.push(seq.user_id.clone());
                    continue;
                }
                UserSplit {
                    user_id: seq.user_id.clone(),
                    train: seq.events[..n - 2].to_vec(),
                    val: Some(seq.events[n - 2].clone()),
                    test: Some(seq.events[n - 1].clone()),
                }
            }
            SplitMode::Stage1Full => UserSplit {
                user_id: seq.user_id.clone(),
                train: seq.events.clone(),
                val: None,
                test: None,
            },
            SplitMode::Stage1Valcat => {
                if n < 2 {
                    dataset.excluded.push(seq.user_id.clone());
                    continue;
                }
                UserSplit {
                    user_id: seq.user_id.clone(),
                    train: seq.events[..n - 1].to_vec(),
                    val: Some(seq.events[n - 1].clone()),
                    test: None,
                }
            }
        };
        dataset.splits.push(split);
    }
    dataset
}

/// Drops the last k events from a training history and uses the new final
/// event as the target: history = events 1..(n-k-1), target = event (n-k).
/// k is uniform over the feasible set {0..min(k_max, n-2)}, the same
/// distribution as drawing from {0..k_max} and redrawing infeasible values.
pub fn augment_truncate(
    history: &[InteractionEvent],
    k_max: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<InteractionEvent>, InteractionEvent)> {
    let n = history.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs at least 2 events, got {n}"
        )));
    }
    let k_cap = k_max.min(n - 2);
    let k = rng.random_range(0..=k_cap);
    let kept = n - k;
    Ok((history[..kept - 1].to_vec(), history[kept - 1].clone()))
}

/// Uniform sample of `n` users without replacement, preserving input order.
/// Returns all users when `n` covers the input.
pub fn sample_users(sequences: &[UserSequence], n: usize, rng: &mut impl Rng) -> Vec<UserSequence> {
    if n >= sequences.len() {
        return sequences.to_vec();
    }
    let mut picked = rand::seq::index::sample(rng, sequences.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| sequences[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq_of(n: usize) -> UserSequence {
        UserSequence {
            user_id: "u".to_string(),
            events: (1..=n)
                .map(|i| InteractionEvent {
                    item_id: format!("item{i}"),
                    rating: 5.0,
                    review_text: String::new(),
                    timestamp: i as i64,
                })
                .collect(),
        }
    }

    #[test]
    fn stage2_five_events() {
        let dataset = split_leave_last_out(&[seq_of(5)], SplitMode::Stage2);
        let split = &dataset.splits[0];
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.val.as_ref().unwrap().item_id, "item4");
        assert_eq!(split.test.as_ref().unwrap().item_id, "item5");
        assert!(dataset.excluded.is_empty());
    }

    #[test]
    fn stage2_two_events_excluded() {
        let dataset = split_leave_last_out(&[seq_of(2)], SplitMode::Stage2);
        assert!(dataset.splits.is_empty());
        assert_eq!(dataset.excluded, ["u"]);
    }

    #[test]
    fn stage1_full_keeps_everything() {
        let dataset = split_leave_last_out(&[seq_of(5)], SplitMode::Stage1Full);
        let split = &dataset.splits[0];
        assert_eq!(split.train.len(), 5);
        assert_eq!(split.val, None);
        assert_eq!(split.test, None);
    }

    #[test]
    fn stage1_valcat_five_events() {
        let dataset = split_leave_last_out(&[seq_of(5)], SplitMode::Stage1Valcat);
        let split = &dataset.splits[0];
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.val.as_ref().unwrap().item_id, "item5");
        assert_eq!(split.test, None);
    }

    #[test]
    fn stage2_partitions_sequence_exactly() {
        let original = seq_of(7);
        let dataset = split_leave_last_out(std::slice::from_ref(&original), SplitMode::Stage2);
        let split = &dataset.splits[0];
        let mut rebuilt = split.train.clone();
        rebuilt.push(split.val.clone().unwrap());
        rebuilt.push(split.test.clone().unwrap());
        assert_eq!(rebuilt, original.events);
    }

    #[test]
    fn augment_k0_is_identity() {
        // n=2 forces k=0: history = [event 1], target = event 2.
        let events = seq_of(2).events;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (history, target) = augment_truncate(&events, 4, &mut rng).unwrap();
        assert_eq!(history, events[..1].to_vec());
        assert_eq!(target, events[1]);
    }

    #[test]
    fn augment_draws_only_feasible_k() {
        // n=3: feasible k in {0,1}; both must appear, 2..4 never.
        let events = seq_of(3).events;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [false; 2];
        for _ in 0..200 {
            let (history, _) = augment_truncate(&events, 4, &mut rng).unwrap();
            let k = events.len() - 1 - history.len();
            assert!(k <= 1, "infeasible k={k}");
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn augment_full_range_on_long_history() {
        // n=6, k=4 must eventually produce history [event 1], target event 2.
        let events = seq_of(6).events;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = [false; 5];
        for _ in 0..500 {
            let (history, target) = augment_truncate(&events, 4, &mut rng).unwrap();
            let k = events.len() - 1 - history.len();
            seen[k] = true;
            if k == 4 {
                assert_eq!(history, events[..1].to_vec());
                assert_eq!(target, events[1]);
            }
            if k == 0 {
                assert_eq!(target, events[5]);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn augment_single_event_errors() {
        let events = seq_of(1).events;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(augment_truncate(&events, 4, &mut rng).is_err());
    }

    #[test]
    fn sample_users_is_deterministic_and_order_preserving() {
        let sequences: Vec<UserSequence> = (0..10)
            .map(|i| UserSequence {
                user_id: format!("u{i:02}"),
                events: seq_of(3).events,
            })
            .collect();
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let a = sample_users(&sequences, 4, &mut rng_a);
        let b = sample_users(&sequences, 4, &mut rng_b);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let ids: Vec<&str> = a.iter().map(|s| s.user_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted, "input order preserved for sorted input");
        assert_eq!(sample_users(&sequences, 10, &mut rng_a), sequences);
    }
}
