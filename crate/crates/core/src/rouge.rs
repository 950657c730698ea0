//! ROUGE-1, ROUGE-2 and ROUGE-L over word tokens.
//!
//! Tokens are lowercased runs of Unicode alphanumerics; everything else is a
//! separator. No stemming and no stop-word removal. ROUGE-L is computed over
//! the whole token sequence (no sentence splitting), which is what short
//! About descriptions call for.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RougeError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
}

/// Normalized word tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    /// Builds a sequence from already-normalized tokens. Each item is run
    /// through [`tokenize`] so the sequence invariants hold regardless of input.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let tokens = iter
            .into_iter()
            .flat_map(|s| tokenize(&s.into()).tokens)
            .collect();
        TokenSequence { tokens }
    }
}

/// Lowercases `text` and splits it on every maximal run of non-alphanumeric
/// characters.
pub fn tokenize(text: &str) -> TokenSequence {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenSequence { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricTriple {
    pub const ZERO: MetricTriple = MetricTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    /// Triple from an overlap count and the two denominators.
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return Self::ZERO;
        }
        let precision = overlap as f64 / candidate_total as f64;
        let recall = overlap as f64 / reference_total as f64;
        Self::from_pr(precision, recall)
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricTriple {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: MetricTriple,
    pub rouge2: MetricTriple,
    #[serde(rename = "rougeL")]
    pub rouge_l: MetricTriple,
}

impl RougeScores {
    pub fn metric(&self, metric: Metric) -> MetricTriple {
        match metric {
            Metric::Rouge1 => self.rouge1,
            Metric::Rouge2 => self.rouge2,
            Metric::RougeL => self.rouge_l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rouge1" | "rouge-1" | "ROUGE-1" => Ok(Metric::Rouge1),
            "rouge2" | "rouge-2" | "ROUGE-2" => Ok(Metric::Rouge2),
            "rougeL" | "rouge-l" | "ROUGE-L" | "rougel" => Ok(Metric::RougeL),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap between candidate and reference.
pub fn rouge_n(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    n: usize,
) -> Result<MetricTriple, RougeError> {
    if n == 0 {
        return Err(RougeError::ZeroOrder);
    }
    if candidate.len() < n || reference.len() < n {
        return Ok(MetricTriple::ZERO);
    }
    let cand = ngram_counts(&candidate.tokens, n);
    let reference_counts = ngram_counts(&reference.tokens, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| c.min(reference_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    Ok(MetricTriple::from_counts(
        overlap,
        candidate.len() + 1 - n,
        reference.len() + 1 - n,
    ))
}

/// Length of the longest common subsequence. O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> MetricTriple {
    let lcs = lcs_len(&candidate.tokens, &reference.tokens);
    MetricTriple::from_counts(lcs, candidate.len(), reference.len())
}

/// Tokenizes both texts once and computes ROUGE-1, ROUGE-2 and ROUGE-L.
pub fn score_all(candidate: &str, reference: &str) -> RougeScores {
    let cand = tokenize(candidate);
    let reference = tokenize(reference);
    RougeScores {
        rouge1: rouge_n(&cand, &reference, 1).expect("order 1 is valid"),
        rouge2: rouge_n(&cand, &reference, 2).expect("order 2 is valid"),
        rouge_l: rouge_l(&cand, &reference),
    }
}
