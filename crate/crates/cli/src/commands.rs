//! Subcommand implementations. Every stage reads and writes files at its
//! boundary, so any step can be re-run or swapped in isolation.

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use calrec::bm25::{build_index, Bm25Index, Bm25Params};
use calrec::corpus::{
    dedup, ingest, kcore_filter, sample_users, split_leave_last_out, stats, truncate_attributes,
    Corpus, ErrorPolicy, Item, SplitMode, UserSequence,
};
use calrec::error::Error;
use calrec::io::{
    read_generations, read_ground_truth, read_jsonl, read_metadata, write_generations, write_jsonl,
    EmbeddingSidecar, PromptRecord, RankingRecord, TokenLogProbRecord,
};
use calrec::llm_client::{GenerationRequest, RemoteClient, UserRequest, BEARER_TOKEN_ENV};
use calrec::metrics::{evaluate, EvalCase};
use calrec::objectives::{
    contrastive_diagnostic, infonce_tt, infonce_ut, mixed_loss, nig_loss, paired_t_test,
    LossWeights,
};
use calrec::prompting::PromptTemplate;
use calrec::retrieval::{
    hierarchical_match, lir_rank, quasi_round_robin_rank, GeneratedSample, MatchIndex, Ranking,
    RetrievalConfig,
};
use calrec::{io as cio, par};

use crate::config::RunConfig;

/// Users processed per parallel batch, bounding rankings held in memory.
const USER_BATCH: usize = 512;

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn policy(skip_errors: bool) -> ErrorPolicy {
    if skip_errors {
        ErrorPolicy::Skip
    } else {
        ErrorPolicy::Strict
    }
}

fn read_sequences_file(path: &Path) -> anyhow::Result<Vec<UserSequence>> {
    let (sequences, _) = read_jsonl::<UserSequence>(open(path)?, ErrorPolicy::Strict)
        .with_context(|| format!("reading sequences from {}", path.display()))?;
    Ok(sequences)
}

fn read_corpus_file(path: &Path) -> anyhow::Result<Corpus> {
    let (items, _) = read_metadata(open(path)?, ErrorPolicy::Strict)
        .with_context(|| format!("reading corpus from {}", path.display()))?;
    Ok(Corpus::from_items(items))
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

/// Build raw review and metadata files into canonical sequences and a
/// truncated corpus.
#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Review JSONL (canonical or Amazon field names).
    #[arg(long)]
    reviews: PathBuf,
    /// Item metadata JSONL (canonical or Amazon field names).
    #[arg(long)]
    metadata: PathBuf,
    /// Output user-sequence JSONL.
    #[arg(long)]
    out_sequences: PathBuf,
    /// Output corpus JSONL (attribute-truncated items).
    #[arg(long)]
    out_corpus: PathBuf,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    skip_errors: bool,
    /// Word limits for title,category,brand,price [default: 25,15,15,15].
    #[arg(long, value_delimiter = ',')]
    limits: Option<Vec<usize>>,
    /// Keep catalog items no review references.
    #[arg(long)]
    keep_unreferenced: bool,
}

pub fn run_ingest(config: &RunConfig, args: IngestArgs) -> anyhow::Result<()> {
    let limits = match args.limits {
        Some(values) => <[usize; 4]>::try_from(values)
            .map_err(|v| anyhow!("--limits needs exactly 4 values, got {}", v.len()))?,
        None => config.limits,
    };
    let (sequences, report) = ingest(open(&args.reviews)?, policy(args.skip_errors))
        .with_context(|| format!("reading reviews from {}", args.reviews.display()))?;
    let (items, meta_report) = read_metadata(open(&args.metadata)?, policy(args.skip_errors))
        .with_context(|| format!("reading metadata from {}", args.metadata.display()))?;

    let mut corpus = Corpus::from_items(items.iter().map(|it| truncate_attributes(it, limits)));
    if !args.keep_unreferenced {
        corpus = corpus.restrict_to_referenced(&sequences);
    }
    // Referenced items without metadata still need catalog entries so they
    // can be ranked; they carry no attributes.
    let mut missing: Vec<String> = sequences
        .iter()
        .flat_map(|s| s.events.iter().map(|e| e.item_id.clone()))
        .filter(|id| corpus.ordinal_of(id).is_none())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    missing.sort_unstable();
    let bare_items = missing.len();
    for id in missing {
        corpus.insert(Item::bare(id));
    }

    write_jsonl(&mut create(&args.out_sequences)?, &sequences)?;
    write_jsonl(&mut create(&args.out_corpus)?, corpus.items())?;
    print_json(json!({
        "users": report.users,
        "events": report.records,
        "review_lines_skipped": report.skipped,
        "metadata_lines_skipped": meta_report.skipped,
        "items": corpus.len(),
        "bare_items_added": bare_items,
    }));
    Ok(())
}

/// Remove strict consecutive duplicates and optionally k-core filter and
/// downsample users.
#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// k-core threshold; 0 disables [default: 5].
    #[arg(long)]
    kcore: Option<usize>,
    /// Run k-core before deduplication instead of after.
    #[arg(long)]
    kcore_first: bool,
    /// Skip the duplicate-removal pass.
    #[arg(long)]
    skip_dedup: bool,
    /// Keep only a seeded uniform sample of this many users.
    #[arg(long)]
    sample_users: Option<usize>,
    /// RNG seed for --sample-users [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the summary JSON here (stats reads duplicates_removed).
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run_dedup(config: &RunConfig, args: DedupArgs) -> anyhow::Result<()> {
    let kcore = args.kcore.unwrap_or(config.kcore);
    let mut sequences = read_sequences_file(&args.sequences)?;
    let users_in = sequences.len();
    let events_in: usize = sequences.iter().map(|s| s.events.len()).sum();

    let apply_kcore = |sequences: Vec<UserSequence>| -> anyhow::Result<Vec<UserSequence>> {
        if kcore == 0 {
            Ok(sequences)
        } else {
            Ok(kcore_filter(sequences, kcore)?)
        }
    };

    if args.kcore_first {
        sequences = apply_kcore(sequences)?;
    }
    let mut duplicates_removed = 0usize;
    if !args.skip_dedup {
        sequences = sequences
            .iter()
            .map(|s| {
                let (deduped, removed) = dedup(s);
                duplicates_removed += removed;
                deduped
            })
            .collect();
    }
    if !args.kcore_first {
        sequences = apply_kcore(sequences)?;
    }
    if let Some(n) = args.sample_users {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.unwrap_or(config.seed));
        sequences = sample_users(&sequences, n, &mut rng);
    }

    write_jsonl(&mut create(&args.out)?, &sequences)?;
    let summary = json!({
        "users_in": users_in,
        "users_out": sequences.len(),
        "events_in": events_in,
        "events_out": sequences.iter().map(|s| s.events.len()).sum::<usize>(),
        "duplicates_removed": duplicates_removed,
    });
    if let Some(path) = &args.report {
        let mut writer = create(path)?;
        writeln!(writer, "{summary}")?;
        writer.flush()?;
    }
    print_json(summary);
    Ok(())
}

/// Leave-last-out split of each user sequence.
#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// stage2, stage1_full, or stage1_valcat [default: stage2].
    #[arg(long)]
    mode: Option<String>,
}

pub fn run_split(config: &RunConfig, args: SplitArgs) -> anyhow::Result<()> {
    let mode = SplitMode::parse(args.mode.as_deref().unwrap_or(&config.split_mode))?;
    let sequences = read_sequences_file(&args.sequences)?;
    let dataset = split_leave_last_out(&sequences, mode);
    write_jsonl(&mut create(&args.out)?, &dataset.splits)?;
    print_json(json!({
        "users": dataset.splits.len(),
        "excluded_count": dataset.excluded.len(),
        "excluded": dataset.excluded,
    }));
    Ok(())
}

/// Per-category dataset statistics over deduplicated sequences.
#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Category label for the row [default: all].
    #[arg(long)]
    category: Option<String>,
    /// Events removed by dedup, for the duplicate percentage.
    #[arg(long)]
    dup_removed: Option<usize>,
    /// Read duplicates_removed from a dedup --report file instead.
    #[arg(long, conflicts_with = "dup_removed")]
    dedup_report: Option<PathBuf>,
    /// Print an aligned text table instead of JSON.
    #[arg(long)]
    table: bool,
}

pub fn run_stats(_config: &RunConfig, args: StatsArgs) -> anyhow::Result<()> {
    let sequences = read_sequences_file(&args.sequences)?;
    let corpus = read_corpus_file(&args.corpus)?;
    let removed = match (&args.dedup_report, args.dup_removed) {
        (Some(path), _) => {
            let value: serde_json::Value = serde_json::from_reader(open(path)?)
                .with_context(|| format!("parsing dedup report {}", path.display()))?;
            value
                .get("duplicates_removed")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| anyhow!("{} has no duplicates_removed field", path.display()))?
                as usize
        }
        (None, Some(n)) => n,
        (None, None) => 0,
    };
    let row = stats(
        args.category.as_deref().unwrap_or("all"),
        &sequences,
        &corpus,
        removed,
    );
    if args.table {
        println!(
            "{:<14} {:>8} {:>8} {:>10} {:>10} {:>12} {:>10} {:>10} {:>8} {:>12} {:>8}",
            "category", "users", "items", "purchases", "items/user", "purch/item", "density",
            "words/item", "vocab", "avg_w_freq", "dup%"
        );
        println!(
            "{:<14} {:>8} {:>8} {:>10} {:>10.2} {:>12.2} {:>10.4} {:>10.2} {:>8} {:>12.2} {:>8.2}",
            row.category,
            row.users,
            row.items,
            row.purchases,
            row.items_per_user,
            row.purchases_per_item,
            row.density,
            row.words_per_item,
            row.vocab,
            row.avg_word_freq,
            row.dup_pct
        );
    } else {
        println!("{}", serde_json::to_string(&row)?);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Holdout {
    /// Drop each user's final event (its item becomes the eval target).
    Last,
    /// Use the full sequence.
    None,
}

/// Render one history prompt per user.
#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Events withheld from the rendered history [default: last].
    #[arg(long, value_enum, default_value_t = Holdout::Last)]
    holdout: Holdout,
}

fn history_items(events: &[calrec::corpus::InteractionEvent], corpus: &Corpus) -> Vec<Item> {
    events
        .iter()
        .map(|e| {
            corpus
                .get_by_id(&e.item_id)
                .cloned()
                .unwrap_or_else(|| Item::bare(e.item_id.clone()))
        })
        .collect()
}

pub fn run_prompt(_config: &RunConfig, args: PromptArgs) -> anyhow::Result<()> {
    let sequences = read_sequences_file(&args.sequences)?;
    let corpus = read_corpus_file(&args.corpus)?;
    let template = PromptTemplate::default();
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for seq in &sequences {
        let events = match args.holdout {
            Holdout::Last if seq.events.len() >= 2 => &seq.events[..seq.events.len() - 1],
            Holdout::Last => {
                skipped += 1;
                continue;
            }
            Holdout::None if !seq.events.is_empty() => &seq.events[..],
            Holdout::None => {
                skipped += 1;
                continue;
            }
        };
        let history = history_items(events, &corpus);
        records.push(PromptRecord {
            user_id: seq.user_id.clone(),
            prompt: template.render_history_prompt(&history)?,
        });
    }
    write_jsonl(&mut create(&args.out)?, &records)?;
    print_json(json!({"prompts": records.len(), "skipped": skipped}));
    Ok(())
}

/// Build and persist the BM25 inverted index.
#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// BM25 k1 [default: 1.5].
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 b [default: 0.75].
    #[arg(long)]
    b: Option<f64>,
}

fn bm25_params(config: &RunConfig, k1: Option<f64>, b: Option<f64>) -> Bm25Params {
    Bm25Params {
        k1: k1.unwrap_or(config.k1),
        b: b.unwrap_or(config.b),
    }
}

pub fn run_index(config: &RunConfig, args: IndexArgs) -> anyhow::Result<()> {
    let corpus = read_corpus_file(&args.corpus)?;
    let index = build_index(
        &corpus,
        &PromptTemplate::default(),
        bm25_params(config, args.k1, args.b),
    )?;
    let mut writer = create(&args.out)?;
    index.write_to(&mut writer)?;
    writer.flush()?;
    print_json(json!({"docs": index.len(), "avgdl": index.avgdl()}));
    Ok(())
}

/// Fetch generations for rendered prompts from a remote service.
#[derive(Debug, Args)]
pub struct GenClientArgs {
    /// Generation endpoint URL (bearer token via CALREC_BEARER_TOKEN).
    #[arg(long)]
    endpoint: String,
    /// Prompt JSONL from the `prompt` subcommand.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Samples per prompt [default: 32].
    #[arg(long)]
    n: Option<usize>,
    /// Sampling temperature [default: 0.5].
    #[arg(long)]
    temperature: Option<f64>,
    /// Maximum output tokens [default: 80].
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Maximum in-flight requests.
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Retries per request on 5xx/transport errors.
    #[arg(long, default_value_t = 3)]
    retries: usize,
    /// Base backoff in milliseconds (doubles per retry).
    #[arg(long, default_value_t = 200)]
    backoff_ms: u64,
}

pub fn run_gen_client(config: &RunConfig, args: GenClientArgs) -> anyhow::Result<()> {
    let (prompts, _) = read_jsonl::<PromptRecord>(open(&args.prompts)?, ErrorPolicy::Strict)?;
    let requests: Vec<UserRequest> = prompts
        .into_iter()
        .map(|p| UserRequest {
            user_id: p.user_id,
            request: GenerationRequest {
                prompt: p.prompt,
                n_samples: args.n.unwrap_or(config.n_gen),
                temperature: args.temperature.unwrap_or(config.temperature),
                max_output_tokens: args.max_tokens.unwrap_or(config.max_output_tokens),
            },
        })
        .collect();
    let client = RemoteClient::with_options(
        &args.endpoint,
        std::env::var(BEARER_TOKEN_ENV).ok(),
        args.concurrency,
        args.retries,
        std::time::Duration::from_millis(args.backoff_ms),
    )?;
    let outcome = client.fetch_generations(&requests)?;
    for (user_id, message) in &outcome.failures {
        eprintln!("user {user_id}: {message}");
    }
    let mut writer = create(&args.out)?;
    write_generations(&mut writer, &outcome.generations)?;
    writer.flush()?;
    print_json(json!({
        "succeeded": outcome.generations.len(),
        "failed": outcome.failures.len(),
    }));
    Ok(())
}

fn load_index(
    config: &RunConfig,
    corpus: &Option<PathBuf>,
    index: &Option<PathBuf>,
    k1: Option<f64>,
    b: Option<f64>,
) -> anyhow::Result<Bm25Index> {
    match (corpus, index) {
        (Some(_), Some(_)) => bail!("pass either --corpus or --index, not both"),
        (None, Some(path)) => Ok(Bm25Index::read_from(open(path)?)?),
        (Some(path), None) => {
            let corpus = read_corpus_file(path)?;
            Ok(build_index(
                &corpus,
                &PromptTemplate::default(),
                bm25_params(config, k1, b),
            )?)
        }
        (None, None) => {
            let path = RunConfig::require_path(None, &config.paths.corpus, "corpus")?;
            let corpus = read_corpus_file(&path)?;
            Ok(build_index(
                &corpus,
                &PromptTemplate::default(),
                bm25_params(config, k1, b),
            )?)
        }
    }
}

fn write_rankings_batched<F>(
    out: &Path,
    users: &[(String, Vec<GeneratedSample>)],
    rank_one: F,
) -> anyhow::Result<()>
where
    F: Fn(&(String, Vec<GeneratedSample>)) -> calrec::Result<Ranking> + Sync + Send,
{
    let mut writer = create(out)?;
    for batch in users.chunks(USER_BATCH) {
        let rankings: Vec<(String, Ranking)> = par::try_map(batch, |user| {
            rank_one(user).map(|r| (user.0.clone(), r))
        })
        .map_err(|e: Error| anyhow!(e))?;
        let records: Vec<RankingRecord> = rankings
            .into_iter()
            .map(|(user_id, ranking)| RankingRecord::new(user_id, ranking))
            .collect();
        write_jsonl(&mut writer, &records)?;
    }
    writer.flush()?;
    Ok(())
}

/// Quasi-round-robin BM25 ranking from a generations file.
#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Generations JSONL [default: paths.generations from the config].
    #[arg(long)]
    generations: Option<PathBuf>,
    /// Corpus JSONL to index on the fly.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Prebuilt index file from the `index` subcommand.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output rankings JSONL [default: paths.rankings from the config].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retained samples per user [default: 10].
    #[arg(long)]
    n_preds: Option<usize>,
    /// Logprob modulation strength [default: 0.0002].
    #[arg(long)]
    epsilon: Option<f64>,
    /// BM25 k1 when indexing on the fly [default: 1.5].
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 b when indexing on the fly [default: 0.75].
    #[arg(long)]
    b: Option<f64>,
}

pub fn run_retrieve(config: &RunConfig, args: RetrieveArgs) -> anyhow::Result<()> {
    let generations_path =
        RunConfig::require_path(args.generations, &config.paths.generations, "generations")?;
    let out = RunConfig::require_path(args.out, &config.paths.rankings, "out")?;
    let index = load_index(config, &args.corpus, &args.index, args.k1, args.b)?;
    let retrieval = RetrievalConfig {
        n_gen: config.n_gen,
        n_preds: args.n_preds.unwrap_or(config.n_preds),
        epsilon: args.epsilon.unwrap_or(config.epsilon),
        bm25: index.params(),
    };
    retrieval.validate()?;
    let users = read_generations(open(&generations_path)?)?;
    write_rankings_batched(&out, &users, |(_, samples)| {
        quasi_round_robin_rank(samples, &index, &retrieval)
    })?;
    print_json(json!({"users": users.len()}));
    Ok(())
}

/// Hierarchical exact matching from a generations file.
#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    generations: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retained samples per user [default: 10].
    #[arg(long)]
    n_preds: Option<usize>,
}

pub fn run_match(config: &RunConfig, args: MatchArgs) -> anyhow::Result<()> {
    let generations_path =
        RunConfig::require_path(args.generations, &config.paths.generations, "generations")?;
    let corpus_path = RunConfig::require_path(args.corpus, &config.paths.corpus, "corpus")?;
    let out = RunConfig::require_path(args.out, &config.paths.rankings, "out")?;
    let corpus = read_corpus_file(&corpus_path)?;
    let match_index = MatchIndex::new(&corpus);
    let n_preds = args.n_preds.unwrap_or(config.n_preds);

    let users = read_generations(open(&generations_path)?)?;
    let mut writer = create(&out)?;
    let mut format_errors = 0usize;
    for batch in users.chunks(USER_BATCH) {
        let outcomes = par::try_map(batch, |(user_id, samples)| {
            hierarchical_match(samples, &match_index, n_preds)
                .map(|outcome| (user_id.clone(), outcome))
        })
        .map_err(|e: Error| anyhow!(e))?;
        let mut records = Vec::with_capacity(outcomes.len());
        for (user_id, outcome) in outcomes {
            format_errors += outcome.format_errors;
            records.push(RankingRecord::new(user_id, outcome.ranking));
        }
        write_jsonl(&mut writer, &records)?;
    }
    writer.flush()?;
    print_json(json!({
        "users": users.len(),
        "format_errors": format_errors,
    }));
    Ok(())
}

/// Last-item-repeater baseline rankings straight from sequences.
#[derive(Debug, Args)]
pub struct LirArgs {
    #[arg(long)]
    sequences: PathBuf,
    /// Corpus JSONL [default: paths.corpus from the config]. The baseline
    /// needs item attributes for its query, so a bare index is not enough.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Events withheld before taking the repeated item [default: last].
    #[arg(long, value_enum, default_value_t = Holdout::Last)]
    holdout: Holdout,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

pub fn run_lir(config: &RunConfig, args: LirArgs) -> anyhow::Result<()> {
    let out = RunConfig::require_path(args.out, &config.paths.rankings, "out")?;
    let corpus_path = RunConfig::require_path(args.corpus, &config.paths.corpus, "corpus")?;
    let corpus = read_corpus_file(&corpus_path)?;
    let template = PromptTemplate::default();
    let index = build_index(&corpus, &template, bm25_params(config, args.k1, args.b))?;
    let sequences = read_sequences_file(&args.sequences)?;
    let min_len = match args.holdout {
        Holdout::Last => 2,
        Holdout::None => 1,
    };
    let eligible: Vec<(String, String)> = sequences
        .iter()
        .filter(|s| s.events.len() >= min_len)
        .map(|s| {
            let last = match args.holdout {
                Holdout::Last => &s.events[s.events.len() - 2],
                Holdout::None => s.events.last().expect("length checked"),
            };
            (s.user_id.clone(), last.item_id.clone())
        })
        .collect();
    let skipped = sequences.len() - eligible.len();

    let mut writer = create(&out)?;
    for batch in eligible.chunks(USER_BATCH) {
        let rankings: Vec<RankingRecord> = par::try_map(batch, |(user_id, item_id)| {
            let item = corpus
                .get_by_id(item_id)
                .cloned()
                .unwrap_or_else(|| Item::bare(item_id.clone()));
            lir_rank(&[item], &index, &template)
                .map(|ranking| RankingRecord::new(user_id.clone(), ranking))
        })
        .map_err(|e: Error| anyhow!(e))?;
        write_jsonl(&mut writer, &rankings)?;
    }
    writer.flush()?;
    print_json(json!({"users": eligible.len(), "skipped": skipped}));
    Ok(())
}

/// Tie-aware metric aggregation over a rankings file.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Rankings JSONL [default: paths.rankings from the config].
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Ground truth: JSONL with user_id plus item_id (or a split file).
    #[arg(long)]
    gt: PathBuf,
    /// Recall cutoffs [default: 1,10].
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Category label for the report [default: all].
    #[arg(long)]
    category: Option<String>,
    /// Also write the canonical JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the fixed-width table alongside the JSON.
    #[arg(long)]
    table: bool,
}

pub fn run_eval(config: &RunConfig, args: EvalArgs) -> anyhow::Result<()> {
    let rankings_path =
        RunConfig::require_path(args.rankings, &config.paths.rankings, "rankings")?;
    let (records, _) = read_jsonl::<RankingRecord>(open(&rankings_path)?, ErrorPolicy::Strict)?;
    let mut rankings: HashMap<String, Ranking> = HashMap::with_capacity(records.len());
    for record in records {
        let (user_id, ranking) = record.into_ranking();
        if rankings.insert(user_id.clone(), ranking).is_some() {
            return Err(Error::DuplicateUser(user_id).into());
        }
    }
    let gt = read_ground_truth(open(&args.gt)?)?;
    let mut cases = Vec::with_capacity(gt.len());
    let mut missing = Vec::new();
    for (user_id, item_id) in gt {
        match rankings.get(&user_id) {
            Some(ranking) => cases.push(EvalCase {
                user_id,
                ranking: ranking.clone(),
                ground_truth: item_id,
            }),
            None => missing.push(user_id),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingUsers(missing).into());
    }
    let ks = args.k.unwrap_or_else(|| config.ks.clone());
    let report = evaluate(args.category.as_deref().unwrap_or("all"), &cases, &ks)?;
    let canonical = report.to_canonical_json();
    if let Some(path) = &args.out {
        let mut writer = create(path)?;
        writeln!(writer, "{canonical}")?;
        writer.flush()?;
    }
    println!("{canonical}");
    if args.table {
        print!("{}", report.to_table());
    }
    Ok(())
}

/// Contrastive and mixed losses over an embeddings file.
#[derive(Debug, Args)]
pub struct LossArgs {
    /// Embeddings: JSONL, or flat f32 binary with --sidecar.
    #[arg(long)]
    embeddings: PathBuf,
    /// Sidecar JSON ({"n","d","order"}) marking --embeddings as binary.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Token-logprob JSONL ({"logprobs":[...]} per sequence) for L_NIG.
    #[arg(long)]
    nig_file: Option<PathBuf>,
    /// Precomputed L_NIG value.
    #[arg(long, conflicts_with = "nig_file")]
    nig: Option<f64>,
    /// Mixture weight on the target/target loss [default: 0.125].
    #[arg(long)]
    alpha: Option<f64>,
    /// Mixture weight on the user/target loss [default: -0.025].
    #[arg(long)]
    beta: Option<f64>,
    /// Contrastive temperature [default: 0.5].
    #[arg(long)]
    tau_c: Option<f64>,
}

pub fn run_loss(config: &RunConfig, args: LossArgs) -> anyhow::Result<()> {
    let weights = LossWeights {
        alpha: args.alpha.unwrap_or(config.alpha),
        beta: args.beta.unwrap_or(config.beta),
        tau_c: args.tau_c.unwrap_or(config.tau_c),
    };
    weights.validate()?;
    let batch = match &args.sidecar {
        Some(sidecar_path) => {
            let sidecar: EmbeddingSidecar = serde_json::from_reader(open(sidecar_path)?)
                .with_context(|| format!("parsing sidecar {}", sidecar_path.display()))?;
            cio::read_embeddings_binary(open(&args.embeddings)?, &sidecar)?
        }
        None => cio::read_embeddings_jsonl(open(&args.embeddings)?)?,
    };
    let l_tt = infonce_tt(batch.v_tu.view(), batch.v_t.view(), weights.tau_c)?;
    let l_ut = infonce_ut(batch.v_u.view(), batch.v_t.view(), weights.tau_c)?;
    let (ratio, gap) = contrastive_diagnostic(l_tt, batch.batch_size(), weights.tau_c);

    let nig = match (&args.nig_file, args.nig) {
        (Some(path), _) => {
            let (records, _) =
                read_jsonl::<TokenLogProbRecord>(open(path)?, ErrorPolicy::Strict)?;
            let batch: Vec<Vec<f64>> = records.into_iter().map(|r| r.logprobs).collect();
            Some(nig_loss(&batch)?)
        }
        (None, Some(value)) => Some(value),
        (None, None) => None,
    };
    let mut output = json!({
        "n_b": batch.batch_size(),
        "l_tt": l_tt,
        "l_ut": l_ut,
        "ratio": ratio,
        "cosine_gap": gap,
    });
    if let Some(nig) = nig {
        output["nig"] = json!(nig);
        output["mixed"] = json!(mixed_loss(nig, l_tt, l_ut, &weights));
    }
    print_json(output);
    Ok(())
}

/// Stage-I category mixture weights from user counts.
#[derive(Debug, Args)]
pub struct MixtureArgs {
    /// Category sizes as name=count pairs.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<String>>,
    /// JSON file mapping category name to user count.
    #[arg(long, conflicts_with = "sizes")]
    sizes_file: Option<PathBuf>,
}

pub fn run_mixture(_config: &RunConfig, args: MixtureArgs) -> anyhow::Result<()> {
    let sizes: BTreeMap<String, usize> = match (&args.sizes, &args.sizes_file) {
        (Some(pairs), None) => pairs
            .iter()
            .map(|pair| {
                let (name, count) = pair
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--sizes entries look like name=count, got {pair:?}"))?;
                Ok((name.to_string(), count.parse::<usize>().with_context(|| {
                    format!("parsing count in --sizes entry {pair:?}")
                })?))
            })
            .collect::<anyhow::Result<_>>()?,
        (None, Some(path)) => serde_json::from_reader(open(path)?)
            .with_context(|| format!("parsing sizes file {}", path.display()))?,
        _ => bail!("pass exactly one of --sizes or --sizes-file"),
    };
    let weights = calrec::corpus::mixture_weights(&sizes)?;
    println!("{}", serde_json::to_string(&weights.weights)?);
    Ok(())
}

/// Paired two-sided t-test over per-user score files.
#[derive(Debug, Args)]
pub struct TtestArgs {
    /// First score file, one float per line.
    #[arg(long)]
    a: PathBuf,
    /// Second score file, same users in the same order.
    #[arg(long)]
    b: PathBuf,
}

fn read_floats(path: &Path) -> anyhow::Result<Vec<f64>> {
    let mut values = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        values.push(trimmed.parse::<f64>().with_context(|| {
            format!("{} line {}: not a number: {trimmed:?}", path.display(), idx + 1)
        })?);
    }
    Ok(values)
}

pub fn run_ttest(_config: &RunConfig, args: TtestArgs) -> anyhow::Result<()> {
    let a = read_floats(&args.a)?;
    let b = read_floats(&args.b)?;
    let result = paired_t_test(&a, &b)?;
    print_json(json!({"t": result.t, "df": result.df, "p": result.p}));
    Ok(())
}
