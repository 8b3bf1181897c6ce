//! File formats: JSONL readers/writers for every pipeline stage boundary
//! and the two embedding layouts.

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use crate::corpus::{ErrorPolicy, Item};
use crate::error::{Error, Result};
use crate::objectives::EmbeddingBatch;
use crate::retrieval::{GeneratedSample, Ranking};

/// Counters from one JSONL read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub lines: usize,
    pub records: usize,
    pub skipped: usize,
}

/// Reads one record per line, skipping blank lines. Malformed lines fail
/// with their line number under [`ErrorPolicy::Strict`] or are counted
/// under [`ErrorPolicy::Skip`].
pub fn read_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    policy: ErrorPolicy,
) -> Result<(Vec<T>, ReadReport)> {
    let mut report = ReadReport::default();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match serde_json::from_str(&line) {
            Ok(record) => {
                report.records += 1;
                records.push(record);
            }
            Err(err) => match policy {
                ErrorPolicy::Strict => {
                    return Err(Error::Record {
                        line: idx + 1,
                        message: err.to_string(),
                    })
                }
                ErrorPolicy::Skip => report.skipped += 1,
            },
        }
    }
    Ok((records, report))
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Raw metadata line. Accepts the Amazon export names and both category
/// shapes (single path or list of paths); price may be a bare number.
#[derive(Debug, Deserialize)]
struct RawMetadata {
    #[serde(alias = "asin")]
    item_id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, alias = "categories")]
    category: Option<CategoryField>,
    #[serde(default)]
    brand: Option<String>,
    #[serde(default)]
    price: Option<PriceField>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CategoryField {
    Leaf(String),
    Path(Vec<String>),
    Paths(Vec<Vec<String>>),
}

impl CategoryField {
    /// The deepest (last) entry of the first path: the leaf category.
    fn into_leaf(self) -> Option<String> {
        match self {
            CategoryField::Leaf(s) => Some(s),
            CategoryField::Path(path) => path.into_iter().last(),
            CategoryField::Paths(paths) => paths.into_iter().next().and_then(|p| p.into_iter().last()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PriceField {
    Text(String),
    Number(f64),
}

impl PriceField {
    fn into_text(self) -> String {
        match self {
            PriceField::Text(s) => s,
            PriceField::Number(x) => x.to_string(),
        }
    }
}

fn non_blank(value: Option<String>) -> Option<String> {
    value.filter(|v| !v.trim().is_empty())
}

/// Reads metadata JSONL into items. Attribute strings are kept raw
/// (truncation is a separate step); blank strings count as absent.
pub fn read_metadata(reader: impl BufRead, policy: ErrorPolicy) -> Result<(Vec<Item>, ReadReport)> {
    let (raw, report) = read_jsonl::<RawMetadata>(reader, policy)?;
    let items = raw
        .into_iter()
        .map(|m| Item {
            item_id: m.item_id,
            title: non_blank(m.title),
            category: non_blank(m.category.and_then(CategoryField::into_leaf)),
            brand: non_blank(m.brand),
            price: non_blank(m.price.map(PriceField::into_text)),
        })
        .collect();
    Ok((items, report))
}

/// One prompt line: `{"user_id","prompt"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub user_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub text: String,
    pub logprob: f64,
}

/// One generations line: `{"user_id","samples":[{"text","logprob"},...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationsRecord {
    pub user_id: String,
    pub samples: Vec<SampleRecord>,
}

/// Reads a generations file, assigning origin indices by array order.
/// File order is preserved; duplicate users are an error.
pub fn read_generations(reader: impl BufRead) -> Result<Vec<(String, Vec<GeneratedSample>)>> {
    let (records, _) = read_jsonl::<GenerationsRecord>(reader, ErrorPolicy::Strict)?;
    let mut seen = std::collections::HashSet::new();
    records
        .into_iter()
        .map(|record| {
            if !seen.insert(record.user_id.clone()) {
                return Err(Error::DuplicateUser(record.user_id));
            }
            let samples = record
                .samples
                .into_iter()
                .enumerate()
                .map(|(origin, s)| GeneratedSample::new(s.text, s.logprob, origin))
                .collect();
            Ok((record.user_id, samples))
        })
        .collect()
}

/// Writes generations keyed by user, one line per user in map order.
pub fn write_generations(
    writer: impl Write,
    generations: &BTreeMap<String, Vec<GeneratedSample>>,
) -> Result<()> {
    let records: Vec<GenerationsRecord> = generations
        .iter()
        .map(|(user_id, samples)| GenerationsRecord {
            user_id: user_id.clone(),
            samples: samples
                .iter()
                .map(|s| SampleRecord {
                    text: s.text.clone(),
                    logprob: s.logprob,
                })
                .collect(),
        })
        .collect();
    write_jsonl(writer, &records)
}

/// One rankings line: `{"user_id","groups":[[...]],"scores":[...]}` with
/// scores omitted when the ranking carries none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub user_id: String,
    pub groups: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl RankingRecord {
    pub fn new(user_id: impl Into<String>, ranking: Ranking) -> Self {
        RankingRecord {
            user_id: user_id.into(),
            groups: ranking.groups,
            scores: ranking.scores,
        }
    }

    pub fn into_ranking(self) -> (String, Ranking) {
        (
            self.user_id,
            Ranking {
                groups: self.groups,
                scores: self.scores,
            },
        )
    }
}

/// Pulls (user_id, ground-truth item_id) pairs out of any JSONL whose
/// records carry `user_id` plus one of: a top-level `item_id`, a `test`
/// event, or a `val` event (so split files work directly).
pub fn read_ground_truth(reader: impl BufRead) -> Result<Vec<(String, String)>> {
    let (values, _) = read_jsonl::<serde_json::Value>(reader, ErrorPolicy::Strict)?;
    values
        .into_iter()
        .enumerate()
        .map(|(idx, value)| {
            let field = |v: &serde_json::Value, key: &str| v.get(key).and_then(|x| x.as_str()).map(String::from);
            let user_id = field(&value, "user_id").ok_or(Error::Record {
                line: idx + 1,
                message: "missing user_id".to_string(),
            })?;
            let item = field(&value, "item_id")
                .or_else(|| value.get("test").and_then(|t| field(t, "item_id")))
                .or_else(|| value.get("val").and_then(|t| field(t, "item_id")));
            match item {
                Some(item_id) => Ok((user_id, item_id)),
                None => Err(Error::Record {
                    line: idx + 1,
                    message: "no item_id, test.item_id, or val.item_id".to_string(),
                }),
            }
        })
        .collect()
}

/// One embeddings line: `{"v_t":[...],"v_u":[...],"v_tu":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub v_t: Vec<f64>,
    pub v_u: Vec<f64>,
    pub v_tu: Vec<f64>,
}

/// Reads the JSONL embedding layout into one batch. Every row must share
/// one dimension.
pub fn read_embeddings_jsonl(reader: impl BufRead) -> Result<EmbeddingBatch> {
    let (records, _) = read_jsonl::<EmbeddingRecord>(reader, ErrorPolicy::Strict)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("embeddings file has no rows"));
    }
    let d = records[0].v_t.len();
    let n = records.len();
    let mut v_t = Vec::with_capacity(n * d);
    let mut v_u = Vec::with_capacity(n * d);
    let mut v_tu = Vec::with_capacity(n * d);
    for (idx, r) in records.into_iter().enumerate() {
        for (name, row) in [("v_t", &r.v_t), ("v_u", &r.v_u), ("v_tu", &r.v_tu)] {
            if row.len() != d {
                return Err(Error::Record {
                    line: idx + 1,
                    message: format!("{name} has dimension {}, expected {d}", row.len()),
                });
            }
        }
        v_t.extend_from_slice(&r.v_t);
        v_u.extend_from_slice(&r.v_u);
        v_tu.extend_from_slice(&r.v_tu);
    }
    let shape = (n, d);
    let build = |data: Vec<f64>| {
        Array2::from_shape_vec(shape, data).expect("dimensions checked above")
    };
    EmbeddingBatch::new(build(v_t), build(v_u), build(v_tu))
}

/// Sidecar for the flat binary embedding layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub n: usize,
    pub d: usize,
    /// Block order within the flat file; must name v_t, v_u, v_tu once each.
    pub order: Vec<String>,
}

/// Reads the flat little-endian f32 layout: three contiguous n x d
/// row-major blocks in sidecar order.
pub fn read_embeddings_binary(mut data: impl Read, sidecar: &EmbeddingSidecar) -> Result<EmbeddingBatch> {
    let mut names: Vec<&str> = sidecar.order.iter().map(String::as_str).collect();
    names.sort_unstable();
    if names != ["v_t", "v_tu", "v_u"] {
        return Err(Error::InvalidArgument(format!(
            "sidecar order must name v_t, v_u, v_tu exactly once, got {:?}",
            sidecar.order
        )));
    }
    if sidecar.n == 0 || sidecar.d == 0 {
        return Err(Error::EmptyInput("sidecar declares an empty batch"));
    }
    let block = sidecar.n * sidecar.d;
    let mut bytes = Vec::with_capacity(3 * block * 4);
    data.read_to_end(&mut bytes)?;
    if bytes.len() != 3 * block * 4 {
        return Err(Error::InvalidArgument(format!(
            "binary embedding file is {} bytes, expected {} (3 * {} * {} floats)",
            bytes.len(),
            3 * block * 4,
            sidecar.n,
            sidecar.d
        )));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut blocks: BTreeMap<&str, Array2<f64>> = BTreeMap::new();
    for (i, name) in sidecar.order.iter().enumerate() {
        let slice = floats[i * block..(i + 1) * block].to_vec();
        blocks.insert(
            name.as_str(),
            Array2::from_shape_vec((sidecar.n, sidecar.d), slice).expect("length checked"),
        );
    }
    EmbeddingBatch::new(
        blocks.remove("v_t").expect("validated"),
        blocks.remove("v_u").expect("validated"),
        blocks.remove("v_tu").expect("validated"),
    )
}

/// One token-logprob line for the NIG loss: `{"logprobs":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbRecord {
    pub logprobs: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_adapts_amazon_shapes() {
        let jsonl = concat!(
            r#"{"asin":"B1","title":"Widget","category":["Tools","Hand Tools"],"brand":"Acme","price":11.22}"#,
            "\n",
            r#"{"item_id":"B2","title":"","categories":[["A","B","C"]],"price":"$5.00"}"#,
            "\n",
            r#"{"item_id":"B3"}"#,
            "\n",
        );
        let (items, report) = read_metadata(jsonl.as_bytes(), ErrorPolicy::Strict).unwrap();
        assert_eq!(report.records, 3);
        assert_eq!(items[0].item_id, "B1");
        assert_eq!(items[0].category.as_deref(), Some("Hand Tools"));
        assert_eq!(items[0].price.as_deref(), Some("11.22"));
        assert_eq!(items[1].title, None);
        assert_eq!(items[1].category.as_deref(), Some("C"));
        assert_eq!(items[1].price.as_deref(), Some("$5.00"));
        assert_eq!(items[2].title, None);
        assert_eq!(items[2].category, None);
    }

    #[test]
    fn generations_round_trip_assigns_origins() {
        let jsonl = r#"{"user_id":"u","samples":[{"text":"a","logprob":-1.0},{"text":"b","logprob":-0.5}]}"#;
        let parsed = read_generations(jsonl.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 1);
        let samples = &parsed[0].1;
        assert_eq!(samples[0].origin, 0);
        assert_eq!(samples[1].origin, 1);
        assert_eq!(samples[1].text, "b");

        let map = BTreeMap::from([(parsed[0].0.clone(), samples.clone())]);
        let mut buf = Vec::new();
        write_generations(&mut buf, &map).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), jsonl);
    }

    #[test]
    fn duplicate_generation_users_rejected() {
        let jsonl = concat!(
            r#"{"user_id":"u","samples":[{"text":"a","logprob":-1.0}]}"#,
            "\n",
            r#"{"user_id":"u","samples":[{"text":"b","logprob":-1.0}]}"#,
            "\n",
        );
        assert!(matches!(
            read_generations(jsonl.as_bytes()),
            Err(Error::DuplicateUser(_))
        ));
    }

    #[test]
    fn ranking_record_omits_missing_scores() {
        let record = RankingRecord::new(
            "u",
            Ranking {
                groups: vec![vec!["a".to_string()]],
                scores: None,
            },
        );
        assert_eq!(
            serde_json::to_string(&record).unwrap(),
            r#"{"user_id":"u","groups":[["a"]]}"#
        );
        let with_scores = RankingRecord::new(
            "u",
            Ranking {
                groups: vec![vec!["a".to_string()]],
                scores: Some(vec![0.5]),
            },
        );
        assert_eq!(
            serde_json::to_string(&with_scores).unwrap(),
            r#"{"user_id":"u","groups":[["a"]],"scores":[0.5]}"#
        );
    }

    #[test]
    fn ground_truth_accepts_flat_and_split_shapes() {
        let jsonl = concat!(
            r#"{"user_id":"u1","item_id":"a"}"#,
            "\n",
            r#"{"user_id":"u2","train":[],"test":{"item_id":"b","rating":1.0,"review_text":"","timestamp":1}}"#,
            "\n",
            r#"{"user_id":"u3","val":{"item_id":"c","rating":1.0,"review_text":"","timestamp":1}}"#,
            "\n",
        );
        let gt = read_ground_truth(jsonl.as_bytes()).unwrap();
        assert_eq!(
            gt,
            vec![
                ("u1".to_string(), "a".to_string()),
                ("u2".to_string(), "b".to_string()),
                ("u3".to_string(), "c".to_string()),
            ]
        );
        assert!(read_ground_truth(r#"{"user_id":"u"}"#.as_bytes()).is_err());
    }

    #[test]
    fn embeddings_jsonl_reads_into_batch() {
        let jsonl = concat!(
            r#"{"v_t":[1.0,0.0],"v_u":[0.0,1.0],"v_tu":[0.5,0.5]}"#,
            "\n",
            r#"{"v_t":[0.0,2.0],"v_u":[1.0,0.0],"v_tu":[0.25,0.75]}"#,
            "\n",
        );
        let batch = read_embeddings_jsonl(jsonl.as_bytes()).unwrap();
        assert_eq!(batch.batch_size(), 2);
        assert_eq!(batch.v_t[[1, 1]], 2.0);
        assert_eq!(batch.v_tu[[0, 0]], 0.5);

        let ragged = r#"{"v_t":[1.0],"v_u":[0.0,1.0],"v_tu":[0.5,0.5]}"#;
        assert!(read_embeddings_jsonl(ragged.as_bytes()).is_err());
    }

    #[test]
    fn embeddings_binary_honors_block_order() {
        let sidecar = EmbeddingSidecar {
            n: 1,
            d: 2,
            order: vec!["v_u".to_string(), "v_t".to_string(), "v_tu".to_string()],
        };
        let mut bytes = Vec::new();
        for value in [10.0f32, 11.0, 20.0, 21.0, 30.0, 31.0] {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
        let batch = read_embeddings_binary(bytes.as_slice(), &sidecar).unwrap();
        assert_eq!(batch.v_u[[0, 0]], 10.0);
        assert_eq!(batch.v_t[[0, 0]], 20.0);
        assert_eq!(batch.v_tu[[0, 1]], 31.0);

        let truncated = &bytes[..8];
        assert!(read_embeddings_binary(truncated, &sidecar).is_err());
        let bad_order = EmbeddingSidecar {
            order: vec!["v_t".to_string(), "v_t".to_string(), "v_tu".to_string()],
            ..sidecar
        };
        assert!(read_embeddings_binary(bytes.as_slice(), &bad_order).is_err());
    }

    #[test]
    fn strict_jsonl_reports_line_numbers() {
        let jsonl = "{\"user_id\":\"u\",\"prompt\":\"p\"}\n{bad\n";
        let err = read_jsonl::<PromptRecord>(jsonl.as_bytes(), ErrorPolicy::Strict).unwrap_err();
        match err {
            Error::Record { line, .. } => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }
        let (records, report) =
            read_jsonl::<PromptRecord>(jsonl.as_bytes(), ErrorPolicy::Skip).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(report.skipped, 1);
    }
}
