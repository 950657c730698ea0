//! Per-sample prompt optimization loop, batch driver, and final prompt
//! synthesis.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::{debug, info, warn};
use metagente_core::hashing::canonical_hash;
use metagente_core::rouge::{rouge_l, tokenize};
use metagente_core::{score_all, RepoSample, RougeScores};
use metagente_llm::{ChatModel, ChatRequest, ChatResponse, LlmError, ModelTiers};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Agents, SeedEntry, SeedPromptSet, Synthesis, TeacherInput};
use crate::prompt::AgentPrompt;

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MAX_ITERATIONS: u32 = 15;
pub const DEFAULT_CONCURRENCY: usize = 4;
pub const DEFAULT_CALL_BUDGET: usize = 64;

pub const FINAL_PROMPT_FILE: &str = "final_prompt.txt";
pub const FINAL_PROMPT_PROVENANCE_FILE: &str = "final_prompt.provenance.json";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub rouge_l_threshold: f64,
    pub max_iterations: u32,
    pub concurrency: usize,
    /// Hard cap on LLM calls for one sample's optimization.
    pub call_budget: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            rouge_l_threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            concurrency: DEFAULT_CONCURRENCY,
            call_budget: DEFAULT_CALL_BUDGET,
        }
    }
}

/// The loop settings that affect results; concurrency is left out since
/// outputs do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSemantics {
    pub rouge_l_threshold: f64,
    pub max_iterations: u32,
    pub call_budget: usize,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let t = self.rouge_l_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(OrchestratorError::Config(format!("threshold {t} is outside (0, 1]")));
        }
        if self.max_iterations == 0 {
            return Err(OrchestratorError::Config("max_iterations must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(OrchestratorError::Config("concurrency must be positive".into()));
        }
        if self.call_budget == 0 {
            return Err(OrchestratorError::Config("call_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn semantics(&self) -> LoopSemantics {
        LoopSemantics {
            rouge_l_threshold: self.rouge_l_threshold,
            max_iterations: self.max_iterations,
            call_budget: self.call_budget,
        }
    }

    pub fn hash(&self) -> String {
        canonical_hash(&self.semantics())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub prompt_version: u32,
    pub generated_about: String,
    pub scores: RougeScores,
    /// Teacher diagnosis of this iteration's output, when the teacher ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_analysis: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ThresholdMet,
    MaxIterations,
    NoProgress,
    AgentError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub sample_id: String,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub final_prompt: Option<AgentPrompt>,
    pub termination_reason: TerminationReason,
    /// Highest ROUGE-L F1 seen; diagnostic only.
    pub best_rouge_l: f64,
    pub llm_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last_f1(&self) -> Option<f64> {
        self.records.last().map(|r| r.scores.rouge_l.f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub traces: Vec<OptimizationTrace>,
    pub seeds: SeedPromptSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPromptProvenance {
    pub seed_sample_ids: Vec<String>,
    pub seed_scores: BTreeMap<String, f64>,
    pub discarded_count: usize,
    pub loop_config_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
    pub models: ModelTiers,
    pub common_instructions: Vec<String>,
    pub conditional_points: Vec<String>,
    /// Caller-supplied entries such as a run configuration hash.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPrompt {
    pub prompt: AgentPrompt,
    pub provenance: FinalPromptProvenance,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl FinalPrompt {
    /// Writes the prompt text and its provenance sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), OrchestratorError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let text = dir.join(FINAL_PROMPT_FILE);
        let mut body = self.prompt.template().to_string();
        body.push('\n');
        std::fs::write(&text, body).map_err(io_err(&text))?;
        let side = dir.join(FINAL_PROMPT_PROVENANCE_FILE);
        let mut json = serde_json::to_string_pretty(&self.provenance).expect("provenance serializes");
        json.push('\n');
        std::fs::write(&side, json).map_err(io_err(&side))?;
        Ok((text, side))
    }

    pub fn read_prompt(path: &Path) -> Result<AgentPrompt, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        AgentPrompt::new(text.trim_end(), 1).map_err(|e| OrchestratorError::Agent(e.into()))
    }
}

/// Every optimization trace of one run plus what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub loop_config: LoopSemantics,
    pub loop_config_hash: String,
    pub models: ModelTiers,
    pub prompt_hashes: BTreeMap<String, String>,
    pub seed_sample_ids: Vec<String>,
    pub discarded_sample_ids: Vec<String>,
    pub traces: Vec<OptimizationTrace>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl TraceDocument {
    pub fn write(&self, path: &Path) -> Result<(), OrchestratorError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut json = serde_json::to_string_pretty(self).expect("trace document serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(io_err(path))
    }
}

/// Counts calls made through it and refuses once the budget is spent.
struct BudgetedModel<'a> {
    inner: &'a dyn ChatModel,
    limit: usize,
    used: AtomicUsize,
}

impl ChatModel for BudgetedModel<'_> {
    fn complete(&self, request: ChatRequest) -> Result<ChatResponse, LlmError> {
        if self.used.fetch_add(1, Ordering::SeqCst) >= self.limit {
            self.used.fetch_sub(1, Ordering::SeqCst);
            return Err(LlmError::BudgetExhausted { limit: self.limit });
        }
        self.inner.complete(request)
    }
}

/// Runs `f` over `items` on `workers` threads; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

pub struct Orchestrator {
    model: Arc<dyn ChatModel>,
    agents: Agents,
    config: LoopConfig,
}

impl Orchestrator {
    pub fn new(model: Arc<dyn ChatModel>, agents: Agents, config: LoopConfig) -> Result<Self, OrchestratorError> {
        config.validate()?;
        Ok(Orchestrator { model, agents, config })
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    /// Optimizes the summarizer prompt for one sample. Agent failures end
    /// the loop and are recorded in the trace rather than returned.
    pub fn optimize_sample(&self, sample: &RepoSample, initial_prompt: &AgentPrompt) -> OptimizationTrace {
        let model = BudgetedModel {
            inner: self.model.as_ref(),
            limit: self.config.call_budget,
            used: AtomicUsize::new(0),
        };
        let mut records: Vec<IterationRecord> = Vec::new();
        let (reason, final_prompt, error) = self.run_loop(&model, sample, initial_prompt, &mut records);
        if let Some(e) = &error {
            warn!("sample {}: {e}", sample.sample_id);
        }
        let trace = OptimizationTrace {
            sample_id: sample.sample_id.clone(),
            converged: reason == TerminationReason::ThresholdMet,
            best_rouge_l: records.iter().map(|r| r.scores.rouge_l.f1).fold(0.0, f64::max),
            records,
            final_prompt,
            termination_reason: reason,
            llm_calls: model.used.load(Ordering::SeqCst),
            error,
        };
        debug!(
            "sample {}: {:?} after {} iteration(s)",
            trace.sample_id,
            trace.termination_reason,
            trace.iterations()
        );
        trace
    }

    fn run_loop(
        &self,
        model: &dyn ChatModel,
        sample: &RepoSample,
        initial_prompt: &AgentPrompt,
        records: &mut Vec<IterationRecord>,
    ) -> (TerminationReason, Option<AgentPrompt>, Option<String>) {
        let fail = |e: AgentError| (TerminationReason::AgentError, None, Some(e.to_string()));
        if sample.about.trim().is_empty() {
            return fail(AgentError::Precondition("ground-truth About is empty".into()));
        }
        let extracted = match self.agents.extract(model, &sample.readme) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let reference = tokenize(&sample.about);
        let mut prompt = initial_prompt.clone();
        for iteration in 1..=self.config.max_iterations {
            let about = match self.agents.summarize(model, &extracted, &prompt) {
                Ok(a) => a,
                Err(e) => return fail(e),
            };
            let scores = score_all(&about, &sample.about);
            records.push(IterationRecord {
                iteration,
                prompt_version: prompt.version(),
                generated_about: about.clone(),
                scores,
                teacher_analysis: None,
            });
            if scores.rouge_l.f1 >= self.config.rouge_l_threshold {
                return (TerminationReason::ThresholdMet, Some(prompt), None);
            }
            if iteration == self.config.max_iterations {
                return (TerminationReason::MaxIterations, None, None);
            }
            let input = TeacherInput {
                current_prompt: prompt.clone(),
                generated_about: about.clone(),
                ground_truth_about: sample.about.clone(),
                rouge_l: rouge_l(&tokenize(&about), &reference),
            };
            match self.agents.teach(model, &input) {
                Ok(out) => {
                    records.last_mut().expect("just pushed").teacher_analysis = Some(out.analysis);
                    prompt = out.improved_prompt;
                }
                Err(AgentError::NoProgress) => {
                    return (
                        TerminationReason::NoProgress,
                        None,
                        Some(AgentError::NoProgress.to_string()),
                    )
                }
                Err(e) => return fail(e),
            }
        }
        unreachable!("loop returns on the last iteration")
    }

    /// Optimizes every sample on a bounded pool. Traces follow input order.
    pub fn optimize_batch(
        &self,
        samples: &[RepoSample],
        initial_prompt: &AgentPrompt,
    ) -> Result<BatchOutcome, OrchestratorError> {
        if samples.is_empty() {
            return Err(OrchestratorError::InvalidBatch("no samples".into()));
        }
        let mut seen = HashSet::new();
        for s in samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(OrchestratorError::InvalidBatch(format!("duplicate sample id {:?}", s.sample_id)));
            }
        }
        let traces = parallel_map(samples, self.config.concurrency, |s| self.optimize_sample(s, initial_prompt));
        let mut seeds = SeedPromptSet::default();
        for t in &traces {
            match (&t.final_prompt, t.converged) {
                (Some(p), true) => seeds.entries.push(SeedEntry {
                    sample_id: t.sample_id.clone(),
                    final_prompt: p.clone(),
                    final_score: t.last_f1().unwrap_or(0.0),
                }),
                _ => seeds.discarded.push(t.sample_id.clone()),
            }
        }
        info!(
            "optimized {} samples: {} converged, {} discarded",
            traces.len(),
            seeds.len(),
            seeds.discarded.len()
        );
        Ok(BatchOutcome { traces, seeds })
    }

    /// Merges the seed prompts into the final summarizer prompt.
    pub fn generate_final_prompt(&self, seeds: &SeedPromptSet) -> Result<FinalPrompt, OrchestratorError> {
        let Synthesis {
            common_instructions,
            conditional_points,
            final_prompt,
        } = self.agents.synthesize(self.model.as_ref(), seeds)?;
        Ok(FinalPrompt {
            prompt: final_prompt,
            provenance: FinalPromptProvenance {
                seed_sample_ids: seeds.ids().into_iter().map(String::from).collect(),
                seed_scores: seeds
                    .entries
                    .iter()
                    .map(|e| (e.sample_id.clone(), e.final_score))
                    .collect(),
                discarded_count: seeds.discarded.len(),
                loop_config_hash: self.config.hash(),
                prompt_hashes: self.agents.prompts().hashes().clone(),
                models: self.agents.settings().tiers.clone(),
                common_instructions,
                conditional_points,
                extra: BTreeMap::new(),
            },
        })
    }

    /// Extract then summarize with `final_prompt`.
    pub fn infer(&self, readme: &str, final_prompt: &AgentPrompt) -> Result<String, AgentError> {
        let extracted = self.agents.extract(self.model.as_ref(), readme)?;
        self.agents.summarize(self.model.as_ref(), &extracted, final_prompt)
    }

    /// Infers an About for every sample, in input order.
    pub fn infer_batch(&self, samples: &[RepoSample], final_prompt: &AgentPrompt) -> Vec<Result<String, AgentError>> {
        parallel_map(samples, self.config.concurrency, |s| self.infer(&s.readme, final_prompt))
    }

    pub fn trace_document(&self, outcome: &BatchOutcome) -> TraceDocument {
        TraceDocument {
            loop_config: self.config.semantics(),
            loop_config_hash: self.config.hash(),
            models: self.agents.settings().tiers.clone(),
            prompt_hashes: self.agents.prompts().hashes().clone(),
            seed_sample_ids: outcome.seeds.ids().into_iter().map(String::from).collect(),
            discarded_sample_ids: outcome.seeds.discarded.clone(),
            traces: outcome.traces.clone(),
            extra: BTreeMap::new(),
        }
    }
}
