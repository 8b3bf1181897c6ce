//! Catalog and interaction-sequence preprocessing.
//!
//! Covers raw ingestion, strict consecutive-duplicate removal, k-core
//! filtering, attribute truncation, leave-last-out splitting, training-time
//! history truncation, mixture weighting, and per-category statistics.

mod ingest;
mod split;
mod stats;

pub use ingest::{ingest, ErrorPolicy, IngestReport};
pub use split::{augment_truncate, sample_users, split_leave_last_out, SplitDataset, SplitMode, UserSplit};
pub use stats::{mixture_weights, stats, MixtureWeights, StatsRow};

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Word limits applied to (title, category, brand, price), in words.
pub const DEFAULT_ATTRIBUTE_LIMITS: [usize; 4] = [25, 15, 15, 15];

/// Rendered stand-in for an absent attribute.
pub const UNKNOWN: &str = "Unknown";

/// One catalog entry. Absent attributes render as `"Unknown"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    #[serde(alias = "asin")]
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<String>,
}

impl Item {
    /// A new item with all attributes absent.
    pub fn bare(item_id: impl Into<String>) -> Self {
        Item {
            item_id: item_id.into(),
            title: None,
            category: None,
            brand: None,
            price: None,
        }
    }

    /// Attribute values in template order, `"Unknown"` for absent ones.
    pub fn attribute_values(&self) -> [&str; 4] {
        [
            self.title.as_deref().unwrap_or(UNKNOWN),
            self.category.as_deref().unwrap_or(UNKNOWN),
            self.brand.as_deref().unwrap_or(UNKNOWN),
            self.price.as_deref().unwrap_or(UNKNOWN),
        ]
    }
}

/// One timestamped purchase event inside a user sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub item_id: String,
    pub rating: f64,
    #[serde(default)]
    pub review_text: String,
    pub timestamp: i64,
}

impl InteractionEvent {
    /// Strict duplicate test: equal on all of item id, review text, rating
    /// and timestamp.
    pub fn is_duplicate_of(&self, other: &InteractionEvent) -> bool {
        self.item_id == other.item_id
            && self.review_text == other.review_text
            && self.rating == other.rating
            && self.timestamp == other.timestamp
    }
}

/// A user's chronologically ordered interaction events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user_id: String,
    pub events: Vec<InteractionEvent>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// An item catalog with ordinal <-> id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    items: Vec<Item>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from items. Later entries with a duplicate id are
    /// dropped (first wins).
    pub fn from_items(items: impl IntoIterator<Item = Item>) -> Self {
        let mut corpus = Corpus::default();
        for item in items {
            corpus.insert(item);
        }
        corpus
    }

    /// Inserts an item unless its id is already present. Returns whether it
    /// was inserted.
    pub fn insert(&mut self, item: Item) -> bool {
        if self.by_id.contains_key(&item.item_id) {
            return false;
        }
        self.by_id.insert(item.item_id.clone(), self.items.len());
        self.items.push(item);
        true
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn get(&self, ordinal: usize) -> Option<&Item> {
        self.items.get(ordinal)
    }

    pub fn ordinal_of(&self, item_id: &str) -> Option<usize> {
        self.by_id.get(item_id).copied()
    }

    pub fn get_by_id(&self, item_id: &str) -> Option<&Item> {
        self.ordinal_of(item_id).map(|i| &self.items[i])
    }

    /// The subset of this corpus referenced by at least one event, in
    /// original item order.
    pub fn restrict_to_referenced(&self, sequences: &[UserSequence]) -> Corpus {
        let referenced: HashSet<&str> = sequences
            .iter()
            .flat_map(|s| s.events.iter().map(|e| e.item_id.as_str()))
            .collect();
        Corpus::from_items(
            self.items
                .iter()
                .filter(|it| referenced.contains(it.item_id.as_str()))
                .cloned(),
        )
    }
}

/// Keeps the first `limit` whitespace-separated words of `text`, joined by
/// single spaces. A word is a maximal run of non-whitespace.
fn truncate_words(text: &str, limit: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().take(limit).collect();
    words.join(" ")
}

/// Truncates each attribute to its word limit ([title, category, brand,
/// price]). Attributes that end up empty are treated as absent.
pub fn truncate_attributes(item: &Item, limits: [usize; 4]) -> Item {
    let cut = |value: &Option<String>, limit: usize| -> Option<String> {
        value
            .as_deref()
            .map(|v| truncate_words(v, limit))
            .filter(|v| !v.is_empty())
    };
    Item {
        item_id: item.item_id.clone(),
        title: cut(&item.title, limits[0]),
        category: cut(&item.category, limits[1]),
        brand: cut(&item.brand, limits[2]),
        price: cut(&item.price, limits[3]),
    }
}

/// Drops every event that repeats the most recent retained event on all of
/// (item id, review text, rating, timestamp). Runs of identical events
/// collapse to their first occurrence. Returns the deduplicated sequence
/// and the number of events removed.
pub fn dedup(sequence: &UserSequence) -> (UserSequence, usize) {
    let mut events: Vec<InteractionEvent> = Vec::with_capacity(sequence.events.len());
    let mut removed = 0;
    for event in &sequence.events {
        match events.last() {
            Some(last) if event.is_duplicate_of(last) => removed += 1,
            _ => events.push(event.clone()),
        }
    }
    (
        UserSequence {
            user_id: sequence.user_id.clone(),
            events,
        },
        removed,
    )
}

/// Iteratively removes users with fewer than `k` events and items with
/// fewer than `k` purchases until neither rule fires. The fixed point of
/// this monotone removal is unique, so the result is deterministic.
pub fn kcore_filter(sequences: Vec<UserSequence>, k: usize) -> Result<Vec<UserSequence>> {
    if k < 1 {
        return Err(Error::InvalidArgument(format!("k-core k must be >= 1, got {k}")));
    }
    let mut sequences = sequences;
    loop {
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for seq in &sequences {
            for event in &seq.events {
                *item_counts.entry(event.item_id.as_str()).or_default() += 1;
            }
        }
        let weak_items: HashSet<String> = item_counts
            .iter()
            .filter(|&(_, &n)| n < k)
            .map(|(id, _)| (*id).to_string())
            .collect();

        let mut changed = false;
        let mut next = Vec::with_capacity(sequences.len());
        for mut seq in sequences {
            let before = seq.events.len();
            if !weak_items.is_empty() {
                seq.events.retain(|e| !weak_items.contains(&e.item_id));
            }
            if seq.events.len() != before {
                changed = true;
            }
            if seq.events.len() >= k {
                next.push(seq);
            } else {
                changed = true;
            }
        }
        sequences = next;
        if !changed {
            return Ok(sequences);
        }
    }
}
