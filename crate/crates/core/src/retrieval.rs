//! Ranking construction: quasi-round-robin BM25 selection over generated
//! samples, hierarchical exact matching, and the last-item-repeater
//! baseline.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

use crate::bm25::{Bm25Index, Bm25Params};
use crate::corpus::{Corpus, Item};
use crate::error::{Error, FormatError, Result};
use crate::prompting::PromptTemplate;

/// One sampled generation with its sequence score.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub text: String,
    /// Total log-probability of the sample.
    pub logprob: f64,
    /// Position in the source file, used as a deterministic tiebreak.
    pub origin: usize,
}

impl GeneratedSample {
    pub fn new(text: impl Into<String>, logprob: f64, origin: usize) -> Self {
        GeneratedSample {
            text: text.into(),
            logprob,
            origin,
        }
    }
}

/// An ordered list of tie-groups covering the corpus. Groups are strictly
/// descending by score; items inside a group share one score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub groups: Vec<Vec<String>>,
    /// Per-group scores, omitted where no meaningful score exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl Ranking {
    /// Groups consecutive equal scores after a descending sort. Items in a
    /// group keep ascending input-ordinal order.
    pub fn from_scores(scores: &[f64], item_ids: &[String]) -> Ranking {
        assert_eq!(scores.len(), item_ids.len());
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut groups: Vec<Vec<String>> = Vec::new();
        let mut group_scores: Vec<f64> = Vec::new();
        for idx in order {
            match group_scores.last() {
                Some(&s) if s == scores[idx] => groups.last_mut().unwrap().push(item_ids[idx].clone()),
                _ => {
                    group_scores.push(scores[idx]);
                    groups.push(vec![item_ids[idx].clone()]);
                }
            }
        }
        Ranking {
            groups,
            scores: Some(group_scores),
        }
    }

    /// Index of the tie-group containing `item_id`.
    pub fn group_of(&self, item_id: &str) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.iter().any(|id| id == item_id))
    }

    /// Total items across all groups.
    pub fn item_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Knobs for sampling and ranking; defaults follow the reference setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Samples requested per user.
    pub n_gen: usize,
    /// Retained samples after dedup, P <= n_preds.
    pub n_preds: usize,
    /// Logprob modulation strength in e^(epsilon * s).
    pub epsilon: f64,
    pub bm25: Bm25Params,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            n_gen: 32,
            n_preds: 10,
            epsilon: 1.0 / 5000.0,
            bm25: Bm25Params::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_preds < 1 {
            return Err(Error::InvalidArgument("n_preds must be >= 1".to_string()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Sorts samples by descending logprob (ties by ascending origin), removes
/// later exact-text duplicates, and truncates to `n_preds`.
pub fn select_top_samples(samples: &[GeneratedSample], n_preds: usize) -> Result<Vec<GeneratedSample>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no generated samples for user"));
    }
    for s in samples {
        if !s.logprob.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample {} has non-finite logprob {}",
                s.origin, s.logprob
            )));
        }
    }
    let mut sorted: Vec<GeneratedSample> = samples.to_vec();
    sorted.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then(a.origin.cmp(&b.origin)));
    let mut seen: HashSet<&str> = HashSet::new();
    let mut retained = Vec::with_capacity(n_preds.min(sorted.len()));
    for sample in &sorted {
        if retained.len() == n_preds {
            break;
        }
        if seen.insert(sample.text.as_str()) {
            retained.push(sample.clone());
        }
    }
    Ok(retained)
}

/// Quasi-round-robin BM25 selection. Each retained sample contributes a
/// corpus-wide BM25 column, linearly rescaled to [0, 1] via
/// (x - min) / (max - min) (an all-equal column rescales to zeros), then
/// multiplied by e^(epsilon * logprob); the candidate score of an item is
/// the maximum over columns. Equal candidate scores form tie-groups.
pub fn quasi_round_robin_rank(
    samples: &[GeneratedSample],
    index: &Bm25Index,
    config: &RetrievalConfig,
) -> Result<Ranking> {
    config.validate()?;
    let retained = select_top_samples(samples, config.n_preds)?;
    let n = index.len();
    let mut candidate = vec![0.0f64; n];
    for sample in &retained {
        let column = index.score_all(&sample.text);
        let min = column.iter().copied().fold(f64::INFINITY, f64::min);
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let modulation = (config.epsilon * sample.logprob).exp();
        if max > min {
            for (cand, x) in candidate.iter_mut().zip(&column) {
                let scaled = (x - min) / (max - min) * modulation;
                *cand = cand.max(scaled);
            }
        }
        // max = min leaves the column at zero, which a fresh candidate
        // vector already is.
    }
    Ok(Ranking::from_scores(&candidate, index.item_ids()))
}

/// Splits a generated item text on the four attribute markers, in order.
/// Values are the trimmed spans between markers with one trailing period
/// stripped. Any missing or out-of-order marker is a format error.
pub fn parse_generated_item(text: &str) -> std::result::Result<[String; 4], FormatError> {
    const MARKERS: [&str; 4] = ["Title:", "Category:", "Brand:", "Price:"];
    let fail = |reason: &'static str| FormatError {
        text: text.to_string(),
        reason,
    };
    let mut spans = Vec::with_capacity(4);
    let mut cursor = text
        .find(MARKERS[0])
        .ok_or_else(|| fail("missing Title: marker"))?
        + MARKERS[0].len();
    for (marker, reason) in [
        (MARKERS[1], "missing or out-of-order Category: marker"),
        (MARKERS[2], "missing or out-of-order Brand: marker"),
        (MARKERS[3], "missing or out-of-order Price: marker"),
    ] {
        let at = text[cursor..].find(marker).ok_or_else(|| fail(reason))?;
        spans.push(&text[cursor..cursor + at]);
        cursor += at + marker.len();
    }
    spans.push(&text[cursor..]);

    let values: Vec<String> = spans
        .into_iter()
        .map(|span| {
            let trimmed = span.trim();
            trimmed.strip_suffix('.').unwrap_or(trimmed).to_string()
        })
        .collect();
    Ok(values.try_into().expect("exactly four spans"))
}

/// Exact-match dictionaries over rendered attribute values, from most to
/// least specific: (t, c, b, p), (t, c, b), (t, c), (t).
#[derive(Debug, Clone)]
pub struct MatchIndex {
    item_ids: Vec<String>,
    full: HashMap<[String; 4], Vec<u32>>,
    three: HashMap<[String; 3], Vec<u32>>,
    two: HashMap<[String; 2], Vec<u32>>,
    title: HashMap<String, Vec<u32>>,
}

impl MatchIndex {
    pub fn new(corpus: &Corpus) -> Self {
        let mut index = MatchIndex {
            item_ids: corpus.items().iter().map(|it| it.item_id.clone()).collect(),
            full: HashMap::new(),
            three: HashMap::new(),
            two: HashMap::new(),
            title: HashMap::new(),
        };
        for (ordinal, item) in corpus.items().iter().enumerate() {
            let [t, c, b, p] = item.attribute_values().map(str::to_string);
            let ordinal = ordinal as u32;
            index
                .full
                .entry([t.clone(), c.clone(), b.clone(), p])
                .or_default()
                .push(ordinal);
            index
                .three
                .entry([t.clone(), c.clone(), b])
                .or_default()
                .push(ordinal);
            index.two.entry([t.clone(), c]).or_default().push(ordinal);
            index.title.entry(t).or_default().push(ordinal);
        }
        index
    }

    /// Ordinals at the deepest non-empty match level for the parsed values.
    fn lookup(&self, values: &[String; 4]) -> Option<&[u32]> {
        let [t, c, b, p] = values;
        if let Some(hit) = self.full.get(&[t.clone(), c.clone(), b.clone(), p.clone()]) {
            return Some(hit);
        }
        if let Some(hit) = self.three.get(&[t.clone(), c.clone(), b.clone()]) {
            return Some(hit);
        }
        if let Some(hit) = self.two.get(&[t.clone(), c.clone()]) {
            return Some(hit);
        }
        self.title.get(t).map(Vec::as_slice)
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }
}

/// Ranking plus the number of samples it had to discard as format errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub ranking: Ranking,
    pub format_errors: usize,
}

/// Hierarchical exact matching. Retained samples are visited in
/// select_top_samples order; each one's deepest non-empty match set becomes
/// a tie-group (minus already-ranked items), and everything unmatched goes
/// into one final group. Unparseable samples are counted, not ranked.
pub fn hierarchical_match(
    samples: &[GeneratedSample],
    match_index: &MatchIndex,
    n_preds: usize,
) -> Result<MatchOutcome> {
    let retained = select_top_samples(samples, n_preds)?;
    let mut ranked = vec![false; match_index.item_count()];
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut format_errors = 0usize;
    for sample in &retained {
        let values = match parse_generated_item(&sample.text) {
            Ok(values) => values,
            Err(_) => {
                format_errors += 1;
                continue;
            }
        };
        let Some(hits) = match_index.lookup(&values) else {
            continue;
        };
        let group: Vec<String> = hits
            .iter()
            .filter(|&&ord| !std::mem::replace(&mut ranked[ord as usize], true))
            .map(|&ord| match_index.item_ids[ord as usize].clone())
            .collect();
        if !group.is_empty() {
            groups.push(group);
        }
    }
    let tail: Vec<String> = ranked
        .iter()
        .enumerate()
        .filter(|(_, &done)| !done)
        .map(|(ord, _)| match_index.item_ids[ord].clone())
        .collect();
    if !tail.is_empty() {
        groups.push(tail);
    }
    Ok(MatchOutcome {
        ranking: Ranking { groups, scores: None },
        format_errors,
    })
}

/// Last-item-repeater baseline: BM25-rank the corpus against the rendered
/// text of the final history item.
pub fn lir_rank(history: &[Item], index: &Bm25Index, template: &PromptTemplate) -> Result<Ranking> {
    let last = history
        .last()
        .ok_or(Error::EmptyInput("LIR needs at least one history item"))?;
    let scores = index.score_all(&template.render_item(last));
    Ok(Ranking::from_scores(&scores, index.item_ids()))
}
