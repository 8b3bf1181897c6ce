//! Per-category dataset statistics and Stage-I mixture weights.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::corpus::{Corpus, UserSequence};
use crate::error::{Error, Result};

/// One statistics table row for a category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub category: String,
    pub users: usize,
    pub items: usize,
    pub purchases: usize,
    pub items_per_user: f64,
    pub purchases_per_item: f64,
    /// purchases / (users * items).
    pub density: f64,
    pub words_per_item: f64,
    /// Distinct lowercased words across the four attributes of all items.
    pub vocab: usize,
    pub avg_word_freq: f64,
    /// Percentage of raw purchases removed as consecutive duplicates.
    pub dup_pct: f64,
}

/// Computes the statistics row for one category. `sequences` must already be
/// deduplicated; `duplicates_removed` is the event count dedup dropped, used
/// for the duplicate percentage against the raw total. Words are whitespace
/// tokens of the present attribute values, lowercased for the vocabulary.
pub fn stats(
    category: &str,
    sequences: &[UserSequence],
    corpus: &Corpus,
    duplicates_removed: usize,
) -> StatsRow {
    let users = sequences.len();
    let purchases: usize = sequences.iter().map(|s| s.events.len()).sum();
    let items = corpus.len();

    let mut word_counts: HashMap<String, usize> = HashMap::new();
    let mut total_words = 0usize;
    for item in corpus.items() {
        for value in [&item.title, &item.category, &item.brand, &item.price]
            .into_iter()
            .flatten()
        {
            for word in value.split_whitespace() {
                total_words += 1;
                *word_counts.entry(word.to_lowercase()).or_default() += 1;
            }
        }
    }
    let vocab = word_counts.len();

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let raw_purchases = purchases + duplicates_removed;
    StatsRow {
        category: category.to_string(),
        users,
        items,
        purchases,
        items_per_user: ratio(purchases, users),
        purchases_per_item: ratio(purchases, items),
        density: if users == 0 || items == 0 {
            0.0
        } else {
            purchases as f64 / (users as f64 * items as f64)
        },
        words_per_item: ratio(total_words, items),
        vocab,
        avg_word_freq: ratio(total_words, vocab),
        dup_pct: if raw_purchases == 0 {
            0.0
        } else {
            100.0 * duplicates_removed as f64 / raw_purchases as f64
        },
    }
}

/// Category sampling rates for the Stage-I training mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    /// name -> w_c, keyed deterministically; weights sum to 1.
    pub weights: BTreeMap<String, f64>,
}

impl MixtureWeights {
    pub fn get(&self, category: &str) -> Option<f64> {
        self.weights.get(category).copied()
    }
}

/// w_c = |U_c|^0.3 / sum over categories of |U_c'|^0.3.
pub fn mixture_weights(category_sizes: &BTreeMap<String, usize>) -> Result<MixtureWeights> {
    if category_sizes.is_empty() {
        return Err(Error::EmptyInput("mixture_weights needs at least one category"));
    }
    for (name, &size) in category_sizes {
        if size == 0 {
            return Err(Error::InvalidArgument(format!(
                "category {name:?} has size 0 (sizes must be >= 1)"
            )));
        }
    }
    let powered: BTreeMap<&str, f64> = category_sizes
        .iter()
        .map(|(name, &size)| (name.as_str(), (size as f64).powf(0.3)))
        .collect();
    let total: f64 = powered.values().sum();
    Ok(MixtureWeights {
        weights: powered
            .into_iter()
            .map(|(name, p)| (name.to_string(), p / total))
            .collect(),
    })
}
