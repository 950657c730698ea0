//! Command-line flags, the TOML configuration file, and the resolved run
//! configuration. Precedence: flag or environment variable, then the
//! configuration file, then built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use metagente_core::hashing::canonical_hash;
use metagente_llm::backend::SchemaMode;
use metagente_llm::ModelTiers;
use metagente_pipeline::{LoopConfig, LoopSemantics, PromptSet};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_N: usize = 10;
pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_MAX_IN_FLIGHT: usize = metagente_llm::DEFAULT_MAX_IN_FLIGHT;

#[derive(Debug, Parser)]
#[command(name = "metagente", version, about = "Generate GitHub About descriptions from READMEs with a self-improving multi-agent prompt pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags and environment variables override it
    #[arg(long, global = true, env = "METAGENTE_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// LLM backend: live, record, replay, or the offline simulator sim [default: live]
    #[arg(long, global = true, env = "METAGENTE_MODE", value_name = "MODE")]
    pub mode: Option<String>,
    /// Cassette file (JSONL) for record and replay modes
    #[arg(long, global = true, env = "METAGENTE_CASSETTE", value_name = "PATH")]
    pub cassette: Option<PathBuf>,
    /// Backend wrapped by record mode [default: live]
    #[arg(long, global = true, value_name = "MODE")]
    pub record_source: Option<String>,
    /// Base URL of the OpenAI-compatible endpoint
    #[arg(long, global = true, env = "METAGENTE_BASE_URL", value_name = "URL")]
    pub base_url: Option<String>,
    /// Worker-tier model id, used by the extractor and summarizer [default: gpt-4o-mini]
    #[arg(long, global = true, env = "METAGENTE_WORKER_MODEL", value_name = "ID")]
    pub worker_model: Option<String>,
    /// Supervisor-tier model id, used by the teacher and prompt creator [default: gpt-4o]
    #[arg(long, global = true, env = "METAGENTE_SUPERVISOR_MODEL", value_name = "ID")]
    pub supervisor_model: Option<String>,
    /// How response schemas reach the endpoint [default: native]
    #[arg(long, global = true, value_enum)]
    pub schema_mode: Option<SchemaModeArg>,
    /// ROUGE-L F1 at which a sample's optimization stops [default: 0.7]
    #[arg(long, global = true, value_name = "F1")]
    pub threshold: Option<f64>,
    /// Iteration cap per training sample [default: 15]
    #[arg(long, global = true, value_name = "N")]
    pub max_iters: Option<u32>,
    /// Samples optimized or inferred in parallel [default: 4]
    #[arg(long, global = true, value_name = "N")]
    pub concurrency: Option<usize>,
    /// LLM-call cap for one sample's optimization [default: 64]
    #[arg(long, global = true, value_name = "N")]
    pub call_budget: Option<usize>,
    /// Concurrent requests allowed against the endpoint [default: 8]
    #[arg(long, global = true, value_name = "N")]
    pub max_in_flight: Option<usize>,
    /// Seed for the train/test split [default: 42]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Number of training samples [default: 10]
    #[arg(long, global = true, value_name = "N")]
    pub train_n: Option<usize>,
    /// Fixed test-set size; samples in neither set are kept as reserve [default: all remaining]
    #[arg(long, global = true, value_name = "N")]
    pub holdout_n: Option<usize>,
    /// Directory for every artifact [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Directory with prompt resource files overriding the bundled ones
    #[arg(long, global = true, value_name = "DIR")]
    pub prompts_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaModeArg {
    Native,
    Instruct,
}

impl From<SchemaModeArg> for SchemaMode {
    fn from(m: SchemaModeArg) -> Self {
        match m {
            SchemaModeArg::Native => SchemaMode::Native,
            SchemaModeArg::Instruct => SchemaMode::Instruct,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load README/About pairs from JSONL or the GitHub API into dataset.jsonl
    Ingest(IngestArgs),
    /// Split the dataset into train and test sets with a seeded shuffle
    Split(SplitArgs),
    /// Optimize the summarizer prompt on the training set and synthesize the final prompt
    Train(TrainArgs),
    /// Generate About descriptions with the final prompt
    Infer(InferArgs),
    /// Score generations against the test set and compare with baselines
    Eval(EvalArgs),
    /// Print a saved evaluation report
    Report(ReportArgs),
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "github_repos"])))]
pub struct IngestArgs {
    /// JSONL file with sample_id, readme and about fields
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Text file with one owner/name per line, fetched from the GitHub API
    #[arg(long, value_name = "PATH")]
    pub github_repos: Option<PathBuf>,
    /// GitHub API base URL
    #[arg(long, value_name = "URL", default_value = "https://api.github.com")]
    pub github_api_url: String,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset to split [default: <out-dir>/dataset.jsonl]
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training samples [default: <out-dir>/train.jsonl]
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("target").required(true).args(["input", "readme"])))]
pub struct InferArgs {
    /// Final prompt text file [default: <out-dir>/final_prompt.txt]
    #[arg(long, value_name = "PATH")]
    pub final_prompt: Option<PathBuf>,
    /// JSONL samples to describe; results go to <out-dir>/generated.jsonl
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Single README file; the About is printed to stdout
    #[arg(long, value_name = "PATH")]
    pub readme: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Test samples with ground-truth Abouts [default: <out-dir>/test.jsonl]
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Precomputed generations (JSONL with sample_id and about); without it the final prompt is run on the test set
    #[arg(long, value_name = "PATH")]
    pub generated: Option<PathBuf>,
    /// Final prompt used when generating [default: <out-dir>/final_prompt.txt]
    #[arg(long, value_name = "PATH")]
    pub final_prompt: Option<PathBuf>,
    /// Score-table CSV of another system to compare against; repeatable
    #[arg(long, value_name = "PATH")]
    pub baseline: Vec<PathBuf>,
    /// Name of the evaluated system in the score table
    #[arg(long, value_name = "NAME", default_value = "metagente")]
    pub system: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON [default: <out-dir>/report.json]
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub cassette: Option<PathBuf>,
    pub record_source: Option<String>,
    pub base_url: Option<String>,
    pub worker_model: Option<String>,
    pub supervisor_model: Option<String>,
    pub schema_mode: Option<SchemaModeArg>,
    pub threshold: Option<f64>,
    pub max_iters: Option<u32>,
    pub concurrency: Option<usize>,
    pub call_budget: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub seed: Option<u64>,
    pub train_n: Option<usize>,
    pub holdout_n: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: String,
    pub cassette: Option<PathBuf>,
    pub record_source: String,
    pub base_url: String,
    pub tiers: ModelTiers,
    pub schema_mode: SchemaModeArg,
    pub loop_config: LoopConfig,
    pub max_in_flight: usize,
    pub seed: u64,
    pub train_n: usize,
    pub holdout_n: Option<usize>,
    pub out_dir: PathBuf,
    pub prompts_dir: Option<PathBuf>,
}

/// The settings that change results. Paths, mode and parallelism are left
/// out so that a recorded run and its replay share one hash.
#[derive(Serialize)]
struct HashedConfig<'a> {
    models: &'a ModelTiers,
    schema_mode: SchemaModeArg,
    #[serde(rename = "loop")]
    loop_semantics: LoopSemantics,
    seed: u64,
    train_n: usize,
    holdout_n: Option<usize>,
}

impl RunConfig {
    pub fn resolve(flags: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let defaults = LoopConfig::default();
        let pick = |flag: Option<String>, file: Option<String>, default: &str| flag.or(file).unwrap_or_else(|| default.to_string());
        let base = ModelTiers::default();
        let tiers = ModelTiers::new(
            pick(flags.worker_model.clone(), file.worker_model, &base.worker),
            pick(flags.supervisor_model.clone(), file.supervisor_model, &base.supervisor),
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let loop_config = LoopConfig {
            rouge_l_threshold: flags.threshold.or(file.threshold).unwrap_or(defaults.rouge_l_threshold),
            max_iterations: flags.max_iters.or(file.max_iters).unwrap_or(defaults.max_iterations),
            concurrency: flags.concurrency.or(file.concurrency).unwrap_or(defaults.concurrency),
            call_budget: flags.call_budget.or(file.call_budget).unwrap_or(defaults.call_budget),
        };
        loop_config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let max_in_flight = flags.max_in_flight.or(file.max_in_flight).unwrap_or(DEFAULT_MAX_IN_FLIGHT);
        if max_in_flight == 0 {
            return Err(CliError::Config("max_in_flight must be positive".into()));
        }
        let train_n = flags.train_n.or(file.train_n).unwrap_or(DEFAULT_TRAIN_N);
        if train_n == 0 {
            return Err(CliError::Config("train_n must be positive".into()));
        }
        let config = RunConfig {
            mode: pick(flags.mode.clone(), file.mode, "live"),
            cassette: flags.cassette.clone().or(file.cassette),
            record_source: pick(flags.record_source.clone(), file.record_source, "live"),
            base_url: pick(flags.base_url.clone(), file.base_url, DEFAULT_BASE_URL),
            tiers,
            schema_mode: flags.schema_mode.or(file.schema_mode).unwrap_or(SchemaModeArg::Native),
            loop_config,
            max_in_flight,
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            train_n,
            holdout_n: flags.holdout_n.or(file.holdout_n),
            out_dir: flags
                .out_dir
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            prompts_dir: flags.prompts_dir.clone().or(file.prompts_dir),
        };
        if matches!(config.mode.as_str(), "record" | "replay") && config.cassette.is_none() {
            return Err(CliError::Config(format!("{} mode requires --cassette", config.mode)));
        }
        Ok(config)
    }

    pub fn config_hash(&self) -> String {
        canonical_hash(&HashedConfig {
            models: &self.tiers,
            schema_mode: self.schema_mode,
            loop_semantics: self.loop_config.semantics(),
            seed: self.seed,
            train_n: self.train_n,
            holdout_n: self.holdout_n,
        })
    }

    pub fn prompts(&self) -> Result<PromptSet, CliError> {
        match &self.prompts_dir {
            Some(dir) if !dir.is_dir() => Err(CliError::Config(format!("prompts directory {} does not exist", dir.display()))),
            Some(dir) => Ok(PromptSet::load_dir(dir)?),
            None => Ok(PromptSet::default()),
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Config hash and prompt-resource hashes, embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(config: &RunConfig, prompts: &PromptSet) -> Self {
        Provenance {
            config_hash: config.config_hash(),
            prompt_hashes: prompts.hashes().clone(),
        }
    }

    /// Flat string map form, with prompt hashes keyed `prompt:<file>`.
    pub fn flat(&self) -> BTreeMap<String, String> {
        let mut map: BTreeMap<String, String> = self
            .prompt_hashes
            .iter()
            .map(|(k, v)| (format!("prompt:{k}"), v.clone()))
            .collect();
        map.insert("config_hash".into(), self.config_hash.clone());
        map
    }
}
