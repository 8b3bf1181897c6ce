//! Okapi BM25 over rendered item texts, behind an inverted index.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::prompting::PromptTemplate;

const INDEX_MAGIC: &str = "calrec-bm25";
const INDEX_VERSION: u32 = 1;

/// Okapi parameters; defaults k1 = 1.5, b = 0.75.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    fn validate(self) -> Result<Self> {
        if !self.k1.is_finite() || self.k1 <= 0.0 {
            return Err(Error::InvalidArgument(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(self)
    }
}

/// Lowercases, splits on any non-alphanumeric codepoint, drops empty
/// tokens. Digits are ordinary token characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Postings {
    idf: f64,
    /// (doc ordinal, term frequency), ascending by ordinal.
    docs: Vec<(u32, u32)>,
}

/// Inverted index serving corpus-wide score vectors.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    postings: BTreeMap<String, Postings>,
    doc_lengths: Vec<u32>,
    /// Precomputed k1 * (1 - b + b * |d| / avgdl) per document.
    doc_norms: Vec<f64>,
    avgdl: f64,
    item_ids: Vec<String>,
}

/// On-disk form: token counts only, derived quantities rebuilt on load.
#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    magic: String,
    version: u32,
    k1: f64,
    b: f64,
    item_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// Tokenizes each item's rendered text and builds the index over the whole
/// corpus (document ordinal = item ordinal).
pub fn build_index(corpus: &Corpus, template: &PromptTemplate, params: Bm25Params) -> Result<Bm25Index> {
    let ids: Vec<String> = corpus.items().iter().map(|it| it.item_id.clone()).collect();
    let texts: Vec<String> = corpus.items().iter().map(|it| template.render_item(it)).collect();
    Bm25Index::from_texts(ids, &texts, params)
}

impl Bm25Index {
    /// Builds an index from parallel id/text slices.
    pub fn from_texts(item_ids: Vec<String>, texts: &[String], params: Bm25Params) -> Result<Self> {
        let params = params.validate()?;
        if texts.is_empty() {
            return Err(Error::EmptyInput("cannot index an empty corpus"));
        }
        assert_eq!(item_ids.len(), texts.len());

        let mut doc_lengths = Vec::with_capacity(texts.len());
        let mut term_docs: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (ordinal, text) in texts.iter().enumerate() {
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                term_docs.entry(term).or_default().push((ordinal as u32, tf));
            }
        }
        Ok(Self::assemble(params, item_ids, doc_lengths, term_docs))
    }

    /// Computes idf, avgdl, and per-document norms from raw counts. Load
    /// and build share this path, so a round-tripped index scores
    /// identically to a freshly built one.
    fn assemble(
        params: Bm25Params,
        item_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        term_docs: BTreeMap<String, Vec<(u32, u32)>>,
    ) -> Self {
        let n = doc_lengths.len();
        let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        let doc_norms = doc_lengths
            .iter()
            .map(|&l| params.k1 * (1.0 - params.b + params.b * l as f64 / avgdl))
            .collect();
        let postings = term_docs
            .into_iter()
            .map(|(term, docs)| {
                let n_t = docs.len() as f64;
                let idf = ((n as f64 - n_t + 0.5) / (n_t + 0.5) + 1.0).ln();
                (term, Postings { idf, docs })
            })
            .collect();
        Bm25Index {
            params,
            postings,
            doc_lengths,
            doc_norms,
            avgdl,
            item_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Okapi score of the query against every document:
    /// score(q, d) = sum over query tokens of
    /// idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl)),
    /// accumulated in query token order. Duplicate query tokens contribute
    /// once per occurrence; unknown terms contribute zero.
    pub fn score_all(&self, query_text: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        let k1 = self.params.k1;
        for token in tokenize(query_text) {
            let Some(postings) = self.postings.get(&token) else {
                continue;
            };
            for &(doc, tf) in &postings.docs {
                let tf = tf as f64;
                scores[doc as usize] +=
                    postings.idf * (tf * (k1 + 1.0)) / (tf + self.doc_norms[doc as usize]);
            }
        }
        scores
    }

    /// Writes the versioned JSON index dump.
    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let file = IndexFile {
            magic: INDEX_MAGIC.to_string(),
            version: INDEX_VERSION,
            k1: self.params.k1,
            b: self.params.b,
            item_ids: self.item_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            postings: self
                .postings
                .iter()
                .map(|(term, p)| (term.clone(), p.docs.clone()))
                .collect(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    /// Reads an index dump, rejecting wrong magic or version.
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let file: IndexFile = serde_json::from_reader(reader)
            .map_err(|e| Error::BadIndexFile(format!("malformed index file: {e}")))?;
        if file.magic != INDEX_MAGIC {
            return Err(Error::BadIndexFile(format!(
                "bad magic {:?} (expected {INDEX_MAGIC:?})",
                file.magic
            )));
        }
        if file.version != INDEX_VERSION {
            return Err(Error::BadIndexFile(format!(
                "unsupported index version {} (expected {INDEX_VERSION})",
                file.version
            )));
        }
        if file.doc_lengths.is_empty() {
            return Err(Error::BadIndexFile("index contains no documents".to_string()));
        }
        let params = Bm25Params { k1: file.k1, b: file.b }.validate()?;
        Ok(Self::assemble(params, file.item_ids, file.doc_lengths, file.postings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn index_of(texts: &[&str]) -> Bm25Index {
        let ids = (0..texts.len()).map(|i| format!("d{i}")).collect();
        let owned: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
        Bm25Index::from_texts(ids, &owned, Bm25Params::default()).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Title: iPhone 13 Pro Max"),
            ["title", "iphone", "13", "pro", "max"]
        );
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("$11.22"), ["11", "22"]);
    }

    #[test]
    fn single_doc_index_stats() {
        let index = index_of(&["hello world hello"]);
        assert_eq!(index.len(), 1);
        assert_eq!(index.avgdl(), 3.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(Bm25Index::from_texts(vec![], &[], Bm25Params::default()).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let texts = vec!["a".to_string()];
        assert!(Bm25Index::from_texts(vec!["d".into()], &texts, Bm25Params { k1: 0.0, b: 0.5 }).is_err());
        assert!(Bm25Index::from_texts(vec!["d".into()], &texts, Bm25Params { k1: 1.5, b: 1.5 }).is_err());
    }

    #[test]
    fn hand_worked_two_doc_example() {
        // Corpus {"a b", "a"}, query "b": idf(b) = ln((2-1+0.5)/1.5 + 1)
        // = ln 2; norm(doc0) = 1 + 1.5*(1 - 0.75 + 0.75*2/1.5) = 2.875,
        // so doc0 = ln(2)*2.5/2.875 and doc1 = 0.
        let index = index_of(&["a b", "a"]);
        let scores = index.score_all("b");
        assert_relative_eq!(scores[0], 0.6027366787477785, epsilon = 1e-12);
        assert_relative_eq!(scores[0], (2.0f64).ln() * 2.5 / 2.875, epsilon = 1e-15);
        assert_eq!(scores[1], 0.0);
    }

    #[test]
    fn unknown_terms_score_zero() {
        let index = index_of(&["alpha beta", "gamma delta"]);
        assert!(index.score_all("omega zeta").iter().all(|&s| s == 0.0));
    }

    #[test]
    fn duplicate_query_terms_double_score() {
        let index = index_of(&["a b", "a"]);
        let single = index.score_all("b");
        let double = index.score_all("b b");
        assert_eq!(double[0], 2.0 * single[0]);
    }

    #[test]
    fn exact_text_query_attains_strict_max() {
        let texts = ["red widget acme", "blue widget", "green gadget deluxe kit"];
        let index = index_of(&texts);
        for (i, text) in texts.iter().enumerate() {
            let scores = index.score_all(text);
            for (j, &s) in scores.iter().enumerate() {
                if j != i {
                    assert!(scores[i] > s, "doc {i} not strict max for its own text");
                }
            }
        }
    }

    #[test]
    fn duplicate_text_items_score_identically() {
        let index = index_of(&["same text here", "other words", "same text here"]);
        let scores = index.score_all("same text");
        assert_eq!(scores[0], scores[2]);
        assert!(scores[0] > scores[1]);
    }

    #[test]
    fn scores_nonnegative_on_skewed_corpus() {
        // "common" appears in every doc: worst case for IDF sign.
        let texts: Vec<String> = (0..8).map(|i| format!("common word{i}")).collect();
        let ids = (0..8).map(|i| format!("d{i}")).collect();
        let index = Bm25Index::from_texts(ids, &texts, Bm25Params::default()).unwrap();
        assert!(index.score_all("common").iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn permutation_equivariance() {
        let texts = ["one two three", "two three four", "five six"];
        let permuted = [texts[2], texts[0], texts[1]];
        let query = "two three five";
        let original = index_of(&texts).score_all(query);
        let shuffled = index_of(&permuted).score_all(query);
        assert_eq!(original[0], shuffled[1]);
        assert_eq!(original[1], shuffled[2]);
        assert_eq!(original[2], shuffled[0]);
    }

    #[test]
    fn round_trip_preserves_scores_exactly() {
        let texts = ["alpha beta gamma", "beta beta delta", "gamma alpha"];
        let index = index_of(&texts);
        let mut buf = Vec::new();
        index.write_to(&mut buf).unwrap();
        let reloaded = Bm25Index::read_from(buf.as_slice()).unwrap();
        for query in ["alpha", "beta delta", "gamma gamma alpha", "missing"] {
            assert_eq!(index.score_all(query), reloaded.score_all(query));
        }
        assert_eq!(index.item_ids(), reloaded.item_ids());
    }

    #[test]
    fn bad_index_files_rejected() {
        assert!(Bm25Index::read_from("not json".as_bytes()).is_err());
        let wrong_magic = serde_json::json!({
            "magic": "something-else", "version": 1, "k1": 1.5, "b": 0.75,
            "item_ids": ["a"], "doc_lengths": [1], "postings": {}
        });
        assert!(Bm25Index::read_from(wrong_magic.to_string().as_bytes()).is_err());
        let wrong_version = serde_json::json!({
            "magic": "calrec-bm25", "version": 99, "k1": 1.5, "b": 0.75,
            "item_ids": ["a"], "doc_lengths": [1], "postings": {}
        });
        assert!(Bm25Index::read_from(wrong_version.to_string().as_bytes()).is_err());
    }
}
