//! Thread and label types, corpus ingestion, retweet removal, cross-validation
//! folds and the response truncation policy.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FormError, Result};

/// Number of cross-validation folds used throughout.
pub const NUM_FOLDS: usize = 5;

/// Marker that opens a retweet's text.
pub const RETWEET_MARKER: &str = "RT @";

/// Veracity label. The discriminant is the canonical class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RumorLabel {
    FalseRumor = 0,
    TrueRumor = 1,
    Unverified = 2,
    NonRumor = 3,
}

impl RumorLabel {
    pub const ALL: [RumorLabel; 4] = [
        RumorLabel::FalseRumor,
        RumorLabel::TrueRumor,
        RumorLabel::Unverified,
        RumorLabel::NonRumor,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL.get(index).copied().ok_or(FormError::LabelOutOfRange(index))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RumorLabel::FalseRumor => "false",
            RumorLabel::TrueRumor => "true",
            RumorLabel::Unverified => "unverified",
            RumorLabel::NonRumor => "non-rumor",
        }
    }

    /// Column header used in report tables.
    pub fn short_name(self) -> &'static str {
        match self {
            RumorLabel::FalseRumor => "F",
            RumorLabel::TrueRumor => "T",
            RumorLabel::Unverified => "U",
            RumorLabel::NonRumor => "NR",
        }
    }
}

impl fmt::Display for RumorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RumorLabel {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| FormError::UnknownLabel { found: s.to_string() })
    }
}

impl Serialize for RumorLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RumorLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTweet {
    pub id: String,
    pub text: String,
    #[serde(rename = "ts", default)]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub image_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationThread {
    pub claim: Claim,
    /// Chronological order.
    pub responses: Vec<ResponseTweet>,
    pub label: RumorLabel,
}

impl ConversationThread {
    pub fn id(&self) -> &str {
        &self.claim.id
    }
}

/// One line of the thread JSONL layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub id: String,
    pub claim_text: String,
    #[serde(default)]
    pub image: Option<String>,
    pub label: String,
    #[serde(default)]
    pub responses: Vec<ResponseTweet>,
}

impl ThreadRecord {
    pub fn from_thread(thread: &ConversationThread) -> Self {
        ThreadRecord {
            id: thread.claim.id.clone(),
            claim_text: thread.claim.text.clone(),
            image: thread
                .claim
                .image_path
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
            label: thread.label.as_str().to_string(),
            responses: thread.responses.clone(),
        }
    }
}

/// Padding and truncation limits shared by ingestion and encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingPolicy {
    pub max_responses: usize,
    pub max_tokens: usize,
    pub max_objects: usize,
}

impl Default for PaddingPolicy {
    fn default() -> Self {
        PaddingPolicy {
            max_responses: 100,
            max_tokens: 35,
            max_objects: 36,
        }
    }
}

impl PaddingPolicy {
    pub fn new(max_responses: usize, max_tokens: usize, max_objects: usize) -> Result<Self> {
        let policy = PaddingPolicy {
            max_responses,
            max_tokens,
            max_objects,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_responses == 0 || self.max_tokens == 0 || self.max_objects == 0 {
            return Err(FormError::InvalidParameter(format!(
                "padding limits must be positive, got N={} M={} K={}",
                self.max_responses, self.max_tokens, self.max_objects
            )));
        }
        Ok(())
    }
}

/// Known corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Twitter15,
    Twitter16,
    Custom,
}

/// Known sizes of the processed corpora, used for a sanity warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub threads: usize,
    pub per_label: [usize; 4],
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Twitter15 => "twitter15",
            DatasetKind::Twitter16 => "twitter16",
            DatasetKind::Custom => "custom",
        }
    }

    /// Directory holding the JSONL files for this layout.
    pub fn thread_dir(self, root: &Path) -> PathBuf {
        match self {
            DatasetKind::Custom => root.to_path_buf(),
            other => root.join(other.name()),
        }
    }

    /// Default number of responses retained for fine-grained reasoning.
    pub fn default_top_k(self) -> usize {
        match self {
            DatasetKind::Twitter16 => 10,
            _ => 5,
        }
    }

    pub fn expected_stats(self) -> Option<CorpusStats> {
        match self {
            DatasetKind::Twitter15 => Some(CorpusStats {
                threads: 1413,
                per_label: [334, 350, 358, 371],
            }),
            DatasetKind::Twitter16 => Some(CorpusStats {
                threads: 756,
                per_label: [172, 189, 190, 205],
            }),
            DatasetKind::Custom => None,
        }
    }
}

impl FromStr for DatasetKind {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twitter15" => Ok(DatasetKind::Twitter15),
            "twitter16" => Ok(DatasetKind::Twitter16),
            "custom" => Ok(DatasetKind::Custom),
            other => Err(FormError::InvalidParameter(format!(
                "unknown dataset {other:?}; expected twitter15, twitter16 or custom"
            ))),
        }
    }
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// A response is a retweet when it opens with the retweet marker or repeats
/// the claim text verbatim (modulo case and whitespace).
pub fn is_retweet(claim_text: &str, response_text: &str) -> bool {
    response_text.trim_start().starts_with(RETWEET_MARKER)
        || normalize_text(claim_text) == normalize_text(response_text)
}

/// Drops retweets and empty responses, preserving order.
pub fn remove_retweets(thread: &ConversationThread) -> ConversationThread {
    let responses = thread
        .responses
        .iter()
        .filter(|r| !r.text.trim().is_empty() && !is_retweet(&thread.claim.text, &r.text))
        .cloned()
        .collect();
    ConversationThread {
        claim: thread.claim.clone(),
        responses,
        label: thread.label,
    }
}

/// Parses one JSONL file. Relative image paths resolve against the file's
/// directory and must be readable.
pub fn read_thread_file(path: &Path) -> Result<Vec<ConversationThread>> {
    let file = fs::File::open(path).map_err(|e| FormError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut threads = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| FormError::MalformedRecord {
            file: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let record: ThreadRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let label: RumorLabel = record.label.parse()?;
        let image_path = match record.image.as_deref() {
            None | Some("") => None,
            Some(img) => {
                let resolved = base.join(img);
                fs::File::open(&resolved).map_err(|e| FormError::io(&resolved, e))?;
                Some(resolved)
            }
        };
        threads.push(ConversationThread {
            claim: Claim {
                id: record.id,
                text: record.claim_text,
                image_path,
            },
            responses: record.responses,
            label,
        });
    }
    Ok(threads)
}

/// Loads every `*.jsonl` file of a dataset layout in file-name order and
/// removes retweets.
pub fn load_corpus(root: &Path, dataset_name: &str) -> Result<Vec<ConversationThread>> {
    let kind: DatasetKind = dataset_name.parse()?;
    let dir = kind.thread_dir(root);
    let entries = fs::read_dir(&dir).map_err(|e| FormError::io(&dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(FormError::io(
            &dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .jsonl thread files"),
        ));
    }
    let mut threads = Vec::new();
    for file in &files {
        threads.extend(read_thread_file(file)?.iter().map(remove_retweets));
    }
    if let Some(stats) = kind.expected_stats() {
        let found = label_counts(&threads);
        if threads.len() != stats.threads || found != stats.per_label {
            log::warn!(
                "{}: loaded {} threads with label counts {:?}; the reference corpus has {} with {:?}",
                kind.name(),
                threads.len(),
                found,
                stats.threads,
                stats.per_label
            );
        }
    }
    Ok(threads)
}

pub fn write_thread_file(path: &Path, threads: &[ConversationThread]) -> Result<()> {
    let mut out = String::new();
    for t in threads {
        out.push_str(&serde_json::to_string(&ThreadRecord::from_thread(t))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| FormError::io(path, e))
}

pub fn label_counts(threads: &[ConversationThread]) -> [usize; 4] {
    let mut counts = [0; 4];
    for t in threads {
        counts[t.label.index()] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FoldFileEntry {
    train: Vec<String>,
    test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FoldFile {
    seed: u64,
    folds: Vec<FoldFileEntry>,
}

/// Orders thread indices class by class, shuffled within each class.
fn stratified_order(labels: &[RumorLabel], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = Vec::with_capacity(labels.len());
    for class in RumorLabel::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        order.extend(members);
    }
    order
}

/// Label-stratified `n_folds`-way split, deterministic in `seed`.
pub fn make_folds_n(threads: &[ConversationThread], n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n_folds < 2 {
        return Err(FormError::InvalidParameter(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if threads.len() < n_folds {
        return Err(FormError::InvalidParameter(format!(
            "cannot split {} threads into {n_folds} folds",
            threads.len()
        )));
    }
    let labels: Vec<RumorLabel> = threads.iter().map(|t| t.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = stratified_order(&labels, &mut rng);
    let mut assignment = vec![0usize; threads.len()];
    for (pos, &idx) in order.iter().enumerate() {
        assignment[idx] = pos % n_folds;
    }
    Ok((0..n_folds)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..threads.len()).partition(|&i| assignment[i] == fold);
            FoldSplit {
                fold_index: fold,
                train_ids: train.iter().map(|&i| threads[i].id().to_string()).collect(),
                test_ids: test.iter().map(|&i| threads[i].id().to_string()).collect(),
            }
        })
        .collect())
}

pub fn make_folds(threads: &[ConversationThread], seed: u64) -> Result<Vec<FoldSplit>> {
    make_folds_n(threads, NUM_FOLDS, seed)
}

/// Splits off a label-stratified validation subset of about `fraction` of
/// the threads. Returns `(train, validation)` indices into `threads`.
pub fn validation_split(labels: &[RumorLabel], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a11);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in RumorLabel::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let take = (members.len() as f64 * fraction).round() as usize;
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn write_fold_file(path: &Path, seed: u64, folds: &[FoldSplit]) -> Result<()> {
    let file = FoldFile {
        seed,
        folds: folds
            .iter()
            .map(|f| FoldFileEntry {
                train: f.train_ids.clone(),
                test: f.test_ids.clone(),
            })
            .collect(),
    };
    let mut f = fs::File::create(path).map_err(|e| FormError::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, &file)?;
    f.write_all(b"\n").map_err(|e| FormError::io(path, e))
}

pub fn read_fold_file(path: &Path) -> Result<(u64, Vec<FoldSplit>)> {
    let text = fs::read_to_string(path).map_err(|e| FormError::io(path, e))?;
    let file: FoldFile = serde_json::from_str(&text)?;
    let folds = file
        .folds
        .into_iter()
        .enumerate()
        .map(|(i, f)| FoldSplit {
            fold_index: i,
            train_ids: f.train,
            test_ids: f.test,
        })
        .collect();
    Ok((file.seed, folds))
}

/// A thread cut to at most `max_responses` responses together with the
/// real/padding status of each of the `max_responses` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedThread {
    pub thread: ConversationThread,
    pub response_mask: Vec<bool>,
}

impl TruncatedThread {
    pub fn real_slots(&self) -> usize {
        self.response_mask.iter().filter(|&&m| m).count()
    }
}

/// Keeps the earliest `max_responses` responses.
pub fn truncate_and_mark(thread: &ConversationThread, policy: &PaddingPolicy) -> TruncatedThread {
    let n = policy.max_responses;
    let kept = thread.responses.len().min(n);
    let mut thread = thread.clone();
    thread.responses.truncate(kept);
    let response_mask = (0..n).map(|i| i < kept).collect();
    TruncatedThread { thread, response_mask }
}
