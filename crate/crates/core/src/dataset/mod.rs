//! README/About sample pairs: loading, validation, splitting and export.

mod github;
mod shuffle;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use github::{fetch_github, FetchOutcome, GithubConfig, SkippedRepo};
pub use shuffle::{fisher_yates, SplitMix64};

/// READMEs longer than this (in characters) are truncated at ingestion.
pub const README_CHAR_CAP: usize = 200_000;

/// Number of README characters included in the review-queue export.
pub const REVIEW_README_CHARS: usize = 500;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate sample_id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("github: authentication failed ({0})")]
    AuthFailure(String),
    #[error("github: {0}")]
    Github(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    GithubApi,
    #[default]
    LocalFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSample {
    pub sample_id: String,
    pub readme: String,
    pub about: String,
    #[serde(default)]
    pub source: SampleSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub readme_truncated: bool,
}

impl RepoSample {
    /// Normalizes text fields (BOM, CRLF, README cap) and checks that
    /// neither text field is blank. The `line` is only used for errors.
    pub fn normalized(mut self, line: usize) -> Result<Self, DatasetError> {
        self.sample_id = normalize_text(&self.sample_id).trim().to_string();
        self.readme = normalize_text(&self.readme);
        self.about = normalize_text(&self.about);
        if self.sample_id.is_empty() {
            return Err(DatasetError::EmptyField { line, field: "sample_id" });
        }
        if self.readme.trim().is_empty() {
            return Err(DatasetError::EmptyField { line, field: "readme" });
        }
        if self.about.trim().is_empty() {
            return Err(DatasetError::EmptyField { line, field: "about" });
        }
        if let Some((idx, _)) = self.readme.char_indices().nth(README_CHAR_CAP) {
            self.readme.truncate(idx);
            self.readme_truncated = true;
        }
        Ok(self)
    }
}

fn normalize_text(s: &str) -> String {
    let s = s.strip_prefix('\u{feff}').unwrap_or(s);
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Reads a `.jsonl` dataset. Every line must hold `sample_id`, `readme` and
/// `about`; blank lines are skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<RepoSample>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(BufReader::new(file))
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<RepoSample>, DatasetError> {
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = if line_no == 1 {
            line.trim_start_matches('\u{feff}').to_string()
        } else {
            line
        };
        if line.trim().is_empty() {
            continue;
        }
        let sample: RepoSample = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = sample.normalized(line_no)?;
        if !seen.insert(sample.sample_id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: sample.sample_id,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn save_jsonl(path: &Path, samples: &[RepoSample]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for s in samples {
        let line = serde_json::to_string(s).expect("sample serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<RepoSample>,
    pub test: Vec<RepoSample>,
    /// Samples that belong to neither side when a fixed holdout is used.
    #[serde(default)]
    pub reserve: Vec<RepoSample>,
    pub seed: u64,
    pub train_n: usize,
    pub test_n: usize,
}

/// Seeded split.
///
/// The whole dataset is shuffled with Fisher–Yates driven by SplitMix64
/// (64-bit state) seeded with `seed`. The last `holdout_n` shuffled samples
/// form the test set; `train_n` samples are taken from the front of the
/// remaining pool. Without a holdout the test set is everything after the
/// first `train_n`. Because the test set does not depend on `train_n`,
/// several training sizes drawn with the same seed share one test set and
/// the smaller training set is a prefix of the larger.
pub fn split(
    samples: &[RepoSample],
    seed: u64,
    train_n: usize,
    holdout_n: Option<usize>,
) -> Result<DatasetSplit, DatasetError> {
    let total = samples.len();
    let holdout = holdout_n.unwrap_or(total.saturating_sub(train_n));
    if train_n == 0 || train_n >= total {
        return Err(DatasetError::InvalidArgument(format!(
            "train_n must satisfy 0 < train_n < {total}, got {train_n}"
        )));
    }
    if holdout == 0 || holdout + train_n > total {
        return Err(DatasetError::InvalidArgument(format!(
            "holdout_n {holdout} plus train_n {train_n} exceeds {total} samples"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    fisher_yates(&mut order, &mut SplitMix64::new(seed));
    let pool_len = total - holdout;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let train = pick(&order[..train_n]);
    let reserve = pick(&order[train_n..pool_len]);
    let test = pick(&order[pool_len..]);
    Ok(DatasetSplit {
        train_n: train.len(),
        test_n: test.len(),
        train,
        test,
        reserve,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub about_chars: LengthStats,
    pub readme_chars: LengthStats,
}

fn length_stats(lengths: impl Iterator<Item = usize> + Clone) -> LengthStats {
    let n = lengths.clone().count() as f64;
    let mean = lengths.clone().map(|l| l as f64).sum::<f64>() / n;
    let var = lengths.map(|l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    LengthStats {
        mean,
        std: var.sqrt(),
    }
}

/// Mean and population standard deviation of About and README lengths, in
/// characters.
pub fn stats(samples: &[RepoSample]) -> Result<DatasetStats, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::InvalidArgument(
            "stats of an empty dataset".into(),
        ));
    }
    Ok(DatasetStats {
        count: samples.len(),
        about_chars: length_stats(samples.iter().map(|s| s.about.chars().count())),
        readme_chars: length_stats(samples.iter().map(|s| s.readme.chars().count())),
    })
}

/// Writes the manual-curation queue: `sample_id,about,readme_head`.
pub fn export_review_queue<W: Write>(out: W, samples: &[RepoSample]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "about", "readme_head"])?;
    for s in samples {
        let head: String = s.readme.chars().take(REVIEW_README_CHARS).collect();
        w.write_record([s.sample_id.as_str(), s.about.as_str(), head.as_str()])?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "review queue".into(),
        source,
    })?;
    Ok(())
}
