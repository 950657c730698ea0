//! Test-set scoring, aggregate means, percentage gains and significance tests.

mod wilcoxon;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rouge::{score_all, Metric, MetricTriple, RougeScores};

pub use wilcoxon::{
    doubled_signed_ranks, ln_normal_sf, wilcoxon_signed_rank, WilcoxonError, WilcoxonMethod,
    WilcoxonResult, EXACT_MAX_N, MIN_PAIRS,
};

pub const SCORE_TABLE_HEADER: [&str; 11] = [
    "sample_id", "system", "rouge1_p", "rouge1_r", "rouge1_f", "rouge2_p", "rouge2_r",
    "rouge2_f", "rougeL_p", "rougeL_r", "rougeL_f",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample ids differ: missing from generated {missing:?}, unexpected {unexpected:?}")]
    KeyMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("duplicate row for sample {sample_id:?} in system {system:?}")]
    DuplicateRow { sample_id: String, system: String },
    #[error("unknown system {0:?}")]
    UnknownSystem(String),
    #[error("systems {0:?} and {1:?} do not cover the same sample ids")]
    Unpaired(String, String),
    #[error("baseline mean is zero; gain undefined")]
    ZeroBaseline,
    #[error("empty score table")]
    Empty,
    #[error("score table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad score table header: {0}")]
    BadHeader(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_id: String,
    pub system: String,
    pub scores: RougeScores,
}

/// Per-sample, per-system ROUGE scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ScoreRow>", into = "Vec<ScoreRow>")]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
    keys: HashSet<(String, String)>,
}

impl From<Vec<ScoreRow>> for ScoreTable {
    fn from(rows: Vec<ScoreRow>) -> Self {
        let keys = rows
            .iter()
            .map(|r| (r.sample_id.clone(), r.system.clone()))
            .collect();
        ScoreTable { rows, keys }
    }
}

impl From<ScoreTable> for Vec<ScoreRow> {
    fn from(t: ScoreTable) -> Self {
        t.rows
    }
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: ScoreRow) -> Result<(), EvalError> {
        if !self.keys.insert((row.sample_id.clone(), row.system.clone())) {
            return Err(EvalError::DuplicateRow {
                sample_id: row.sample_id,
                system: row.system,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ScoreRow>) -> Result<(), EvalError> {
        rows.into_iter().try_for_each(|r| self.push(r))
    }

    /// System names in first-appearance order.
    pub fn systems(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.system.as_str()))
            .map(|r| r.system.clone())
            .collect()
    }

    fn system_rows<'a>(&'a self, system: &'a str) -> impl Iterator<Item = &'a ScoreRow> + 'a {
        self.rows.iter().filter(move |r| r.system == system)
    }

    /// Mean F1 per metric for one system.
    pub fn means(&self, system: &str) -> Result<SystemAverages, EvalError> {
        let rows: Vec<_> = self.system_rows(system).collect();
        if rows.is_empty() {
            return Err(EvalError::UnknownSystem(system.to_string()));
        }
        let mean = |m: Metric| rows.iter().map(|r| r.scores.metric(m).f1).sum::<f64>() / rows.len() as f64;
        Ok(SystemAverages {
            n: rows.len(),
            rouge1: mean(Metric::Rouge1),
            rouge2: mean(Metric::Rouge2),
            rouge_l: mean(Metric::RougeL),
        })
    }

    /// F1 values of both systems aligned by sample id, in `system_a` order.
    pub fn paired(&self, system_a: &str, system_b: &str, metric: Metric) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let b: HashMap<&str, f64> = self
            .system_rows(system_b)
            .map(|r| (r.sample_id.as_str(), r.scores.metric(metric).f1))
            .collect();
        let a: Vec<_> = self.system_rows(system_a).collect();
        if a.is_empty() {
            return Err(EvalError::UnknownSystem(system_a.into()));
        }
        if b.is_empty() {
            return Err(EvalError::UnknownSystem(system_b.into()));
        }
        if a.len() != b.len() {
            return Err(EvalError::Unpaired(system_a.into(), system_b.into()));
        }
        let mut xs = Vec::with_capacity(a.len());
        let mut ys = Vec::with_capacity(a.len());
        for row in a {
            let y = b
                .get(row.sample_id.as_str())
                .ok_or_else(|| EvalError::Unpaired(system_a.into(), system_b.into()))?;
            xs.push(row.scores.metric(metric).f1);
            ys.push(*y);
        }
        Ok((xs, ys))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SCORE_TABLE_HEADER)?;
        for r in &self.rows {
            let s = &r.scores;
            let mut rec = vec![r.sample_id.clone(), r.system.clone()];
            for t in [s.rouge1, s.rouge2, s.rouge_l] {
                rec.extend([t.precision, t.recall, t.f1].map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| EvalError::Io {
            path: PathBuf::from("<score table>"),
            source,
        })?;
        Ok(())
    }

    /// Reads a score-table CSV, e.g. externally produced baseline scores.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != SCORE_TABLE_HEADER {
            return Err(EvalError::BadHeader(header.join(",")));
        }
        let mut table = ScoreTable::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, EvalError> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| EvalError::BadHeader(format!("column {}: {e}", SCORE_TABLE_HEADER[i])))
            };
            let triple = |i: usize| -> Result<MetricTriple, EvalError> {
                Ok(MetricTriple {
                    precision: num(i)?,
                    recall: num(i + 1)?,
                    f1: num(i + 2)?,
                })
            };
            table.push(ScoreRow {
                sample_id: rec[0].to_string(),
                system: rec[1].to_string(),
                scores: RougeScores {
                    rouge1: triple(2)?,
                    rouge2: triple(5)?,
                    rouge_l: triple(8)?,
                },
            })?;
        }
        Ok(table)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self, EvalError> {
        let f = fs::File::open(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(f)
    }
}

/// Scores generated texts against references, one row per sample, ordered
/// by the reference order.
pub fn score_system(
    generated: &[(String, String)],
    references: &[(String, String)],
    system_name: &str,
) -> Result<Vec<ScoreRow>, EvalError> {
    let gen: HashMap<&str, &str> = generated.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let refs: HashSet<&str> = references.iter().map(|(k, _)| k.as_str()).collect();
    let missing: BTreeSet<String> = refs.iter().filter(|k| !gen.contains_key(*k)).map(|k| k.to_string()).collect();
    let unexpected: BTreeSet<String> = gen.keys().filter(|k| !refs.contains(*k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() || !unexpected.is_empty() || gen.len() != generated.len() {
        return Err(EvalError::KeyMismatch {
            missing: missing.into_iter().collect(),
            unexpected: unexpected.into_iter().collect(),
        });
    }
    Ok(references
        .iter()
        .map(|(id, reference)| ScoreRow {
            sample_id: id.clone(),
            system: system_name.to_string(),
            scores: score_all(gen[id.as_str()], reference),
        })
        .collect())
}

/// `100 · (mean_a − mean_b) / mean_b`.
pub fn gain_from_means(mean_a: f64, mean_b: f64) -> Result<f64, EvalError> {
    if mean_b == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (mean_a - mean_b) / mean_b)
}

pub fn mean_gain(table: &ScoreTable, system_a: &str, system_b: &str, metric: Metric) -> Result<f64, EvalError> {
    let (a, b) = table.paired(system_a, system_b, metric)?;
    let n = a.len() as f64;
    gain_from_means(a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemAverages {
    pub n: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

impl SystemAverages {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rouge1 => self.rouge1,
            Metric::Rouge2 => self.rouge2,
            Metric::RougeL => self.rouge_l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub system_a: String,
    pub system_b: String,
    pub metric: Metric,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WilcoxonOutcome {
    Tested(WilcoxonResult),
    Degenerate { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonEntry {
    pub system_a: String,
    pub system_b: String,
    pub metric: Metric,
    pub outcome: WilcoxonOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub systems: Vec<String>,
    pub averages: BTreeMap<String, SystemAverages>,
    pub gains: Vec<GainEntry>,
    pub wilcoxon: Vec<WilcoxonEntry>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    pub rows: ScoreTable,
}

impl EvalReport {
    /// Averages at three decimals, one line per system, in table order.
    pub fn averages_line(&self, metric: Metric) -> String {
        let values: Vec<String> = self
            .systems
            .iter()
            .map(|s| format!("{:.3}", self.averages[s].get(metric)))
            .collect();
        format!("{metric}: Average {}", values.join(", "))
    }
}

/// Builds a report comparing `target` against every other system in the
/// table. With no target every system gets averages only.
pub fn build_report(table: ScoreTable, target: Option<&str>) -> Result<EvalReport, EvalError> {
    if table.is_empty() {
        return Err(EvalError::Empty);
    }
    let systems = table.systems();
    let mut averages = BTreeMap::new();
    for s in &systems {
        averages.insert(s.clone(), table.means(s)?);
    }
    let n = averages.values().map(|a| a.n).max().unwrap_or(0);
    let mut gains = Vec::new();
    let mut tests = Vec::new();
    if let Some(target) = target {
        if !averages.contains_key(target) {
            return Err(EvalError::UnknownSystem(target.into()));
        }
        for other in systems.iter().filter(|s| s.as_str() != target) {
            for metric in Metric::ALL {
                let (a, b) = table.paired(target, other, metric)?;
                let na = a.len() as f64;
                match gain_from_means(a.iter().sum::<f64>() / na, b.iter().sum::<f64>() / na) {
                    Ok(percent) => gains.push(GainEntry {
                        system_a: target.into(),
                        system_b: other.clone(),
                        metric,
                        percent,
                    }),
                    Err(EvalError::ZeroBaseline) => {
                        log::warn!("{other} has zero mean {metric}; gain omitted")
                    }
                    Err(e) => return Err(e),
                }
                let outcome = match wilcoxon_signed_rank(&a, &b) {
                    Ok(r) => WilcoxonOutcome::Tested(r),
                    Err(e) => WilcoxonOutcome::Degenerate { reason: e.to_string() },
                };
                tests.push(WilcoxonEntry {
                    system_a: target.into(),
                    system_b: other.clone(),
                    metric,
                    outcome,
                });
            }
        }
    }
    Ok(EvalReport {
        n,
        systems,
        averages,
        gains,
        wilcoxon: tests,
        provenance: BTreeMap::new(),
        rows: table,
    })
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct EmittedReport {
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Writes `<stem>.json` (full precision) and `<stem>.csv` (per-sample rows).
pub fn emit_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<EmittedReport, EvalError> {
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(&json_path, json).map_err(io(&json_path))?;
    let mut buf = Vec::new();
    report.rows.write_csv(&mut buf)?;
    fs::write(&csv_path, buf).map_err(io(&csv_path))?;
    Ok(EmittedReport {
        json: json_path,
        csv: csv_path,
    })
}

pub fn read_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
