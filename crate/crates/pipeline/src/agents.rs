//! The four agent roles: Extractor, Summarizer, Teacher and Prompt Creator.
//!
//! Extraction and summarization run on the worker tier, teaching and
//! synthesis on the supervisor tier. Agents hold no per-sample state; the
//! transport is passed in on every call so callers can wrap it.

use std::collections::HashMap;
use std::sync::Mutex;

use metagente_core::hashing::sha256_hex;
use metagente_core::MetricTriple;
use metagente_llm::{ChatModel, ChatRequest, LlmError, Message, ModelTiers, ResponseSchema, Tier};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{AgentPrompt, PromptError, PromptSet};

pub const DEFAULT_EXTRACT_CAP: usize = 4_000;
pub const DEFAULT_SUMMARY_CAP: usize = 512;
pub const TRUNCATION_MARKER: &str = "\n[truncated]";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("extractor returned no text")]
    EmptyExtraction,
    #[error("summarizer returned no text")]
    EmptySummary,
    #[error("teacher returned the current prompt unchanged")]
    NoProgress,
    #[error("no sample converged ({discarded} discarded); nothing to synthesize")]
    EmptyInput { discarded: usize },
    #[error("malformed agent output: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentTemperatures {
    pub extractor: f64,
    pub summarizer: f64,
    pub teacher: f64,
    pub prompt_creator: f64,
}

impl Default for AgentTemperatures {
    fn default() -> Self {
        AgentTemperatures {
            extractor: 0.0,
            summarizer: 0.0,
            teacher: 0.0,
            prompt_creator: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub tiers: ModelTiers,
    pub temperatures: AgentTemperatures,
    pub extract_cap: usize,
    pub summary_cap: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            tiers: ModelTiers::default(),
            temperatures: AgentTemperatures::default(),
            extract_cap: DEFAULT_EXTRACT_CAP,
            summary_cap: DEFAULT_SUMMARY_CAP,
        }
    }
}

/// The four inputs the teacher sees, and nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherInput {
    pub current_prompt: AgentPrompt,
    pub generated_about: String,
    pub ground_truth_about: String,
    pub rouge_l: MetricTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    pub analysis: String,
    pub improved_prompt: AgentPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub sample_id: String,
    pub final_prompt: AgentPrompt,
    pub final_score: f64,
}

/// Converged per-sample prompts. Discarded sample ids are kept alongside so
/// the two sets can be checked against the batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedPromptSet {
    pub entries: Vec<SeedEntry>,
    pub discarded: Vec<String>,
}

impl SeedPromptSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.sample_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub common_instructions: Vec<String>,
    pub conditional_points: Vec<String>,
    pub final_prompt: AgentPrompt,
}

#[derive(Deserialize)]
struct TeacherWire {
    analysis: String,
    improved_prompt: String,
}

#[derive(Deserialize)]
struct SynthesisWire {
    common_instructions: Vec<String>,
    conditional_points: Vec<String>,
    final_prompt: String,
}

type CacheKey = (String, String, u32);

pub struct Agents {
    prompts: PromptSet,
    settings: AgentSettings,
    extraction_cache: Mutex<HashMap<CacheKey, String>>,
}

fn cap_chars(text: &str, cap: usize, marker: &str) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let keep = cap.saturating_sub(marker.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(marker);
    out
}

fn parse_structured<T: for<'de> Deserialize<'de>>(content: &str) -> Result<T, AgentError> {
    serde_json::from_str(content).map_err(|e| AgentError::Malformed(e.to_string()))
}

impl Agents {
    pub fn new(prompts: PromptSet, settings: AgentSettings) -> Result<Self, AgentError> {
        settings.tiers.validate()?;
        Ok(Agents {
            prompts,
            settings,
            extraction_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn settings(&self) -> &AgentSettings {
        &self.settings
    }

    fn request(&self, tier: Tier, temperature: f64, messages: Vec<Message>, schema: Option<&ResponseSchema>) -> ChatRequest {
        let mut req = ChatRequest::new(self.settings.tiers.model(tier), messages).temperature(temperature);
        if let Some(s) = schema {
            req = req.schema(s.clone());
        }
        req
    }

    /// Strips a README down to the text describing the repository. Results
    /// are cached per README content and extractor prompt.
    pub fn extract(&self, model: &dyn ChatModel, readme: &str) -> Result<String, AgentError> {
        if readme.trim().is_empty() {
            return Err(AgentError::Precondition("README is empty".into()));
        }
        let extractor = &self.prompts.extractor;
        let key = (sha256_hex(readme), extractor.content_hash(), extractor.version());
        if let Some(hit) = self.extraction_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let req = self.request(
            Tier::Worker,
            self.settings.temperatures.extractor,
            vec![Message::system(extractor.render(&[])?), Message::user(readme)],
            None,
        );
        let text = model.complete(req)?.content.trim().to_string();
        if text.is_empty() {
            return Err(AgentError::EmptyExtraction);
        }
        let text = cap_chars(&text, self.settings.extract_cap, TRUNCATION_MARKER);
        self.extraction_cache.lock().unwrap().insert(key, text.clone());
        Ok(text)
    }

    /// One About description for `extracted` under `prompt`.
    pub fn summarize(&self, model: &dyn ChatModel, extracted: &str, prompt: &AgentPrompt) -> Result<String, AgentError> {
        if extracted.trim().is_empty() {
            return Err(AgentError::Precondition("extracted text is empty".into()));
        }
        let system = prompt.render(&[("extracted_text", extracted)])?;
        let req = self.request(
            Tier::Worker,
            self.settings.temperatures.summarizer,
            vec![Message::system(system), Message::user(extracted)],
            None,
        );
        let text = model.complete(req)?.content.trim().to_string();
        if text.is_empty() {
            return Err(AgentError::EmptySummary);
        }
        Ok(cap_chars(&text, self.settings.summary_cap, ""))
    }

    pub fn teach(&self, model: &dyn ChatModel, input: &TeacherInput) -> Result<TeacherOutput, AgentError> {
        if input.ground_truth_about.trim().is_empty() {
            return Err(AgentError::Precondition("ground-truth About is empty".into()));
        }
        if input.generated_about.trim().is_empty() {
            return Err(AgentError::Precondition("generated About is empty".into()));
        }
        let (p, r, f) = (
            format!("{:.4}", input.rouge_l.precision),
            format!("{:.4}", input.rouge_l.recall),
            format!("{:.4}", input.rouge_l.f1),
        );
        let user = self.prompts.teacher_user.render(&[
            ("current_prompt", input.current_prompt.template()),
            ("generated_about", &input.generated_about),
            ("ground_truth_about", &input.ground_truth_about),
            ("rouge_l_precision", &p),
            ("rouge_l_recall", &r),
            ("rouge_l_f1", &f),
        ])?;
        let req = self.request(
            Tier::Supervisor,
            self.settings.temperatures.teacher,
            vec![Message::system(self.prompts.teacher_system.render(&[])?), Message::user(user)],
            Some(&self.prompts.teacher_schema),
        );
        let wire: TeacherWire = parse_structured(&model.complete(req)?.content)?;
        let improved = wire.improved_prompt.trim();
        if improved == input.current_prompt.template().trim() {
            return Err(AgentError::NoProgress);
        }
        Ok(TeacherOutput {
            analysis: wire.analysis.trim().to_string(),
            improved_prompt: input.current_prompt.revise(improved)?,
        })
    }

    /// Merges converged prompts into one final summarizer prompt.
    pub fn synthesize(&self, model: &dyn ChatModel, seeds: &SeedPromptSet) -> Result<Synthesis, AgentError> {
        if seeds.is_empty() {
            return Err(AgentError::EmptyInput {
                discarded: seeds.discarded.len(),
            });
        }
        let blocks: Vec<String> = seeds
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| format!("<PROMPT_{n}>\n{}\n</PROMPT_{n}>", e.final_prompt.template(), n = i + 1))
            .collect();
        let count = seeds.len().to_string();
        let user = self.prompts.creator_user.render(&[
            ("prompt_count", &count),
            ("candidate_prompts", &blocks.join("\n\n")),
        ])?;
        let req = self.request(
            Tier::Supervisor,
            self.settings.temperatures.prompt_creator,
            vec![Message::system(self.prompts.creator_system.render(&[])?), Message::user(user)],
            Some(&self.prompts.creator_schema),
        );
        let wire: SynthesisWire = parse_structured(&model.complete(req)?.content)?;
        Ok(Synthesis {
            common_instructions: wire.common_instructions,
            conditional_points: wire.conditional_points,
            final_prompt: AgentPrompt::new(wire.final_prompt.trim(), 1)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use metagente_llm::backend::ScriptedBackend;
    use metagente_llm::LlmClient;
    use std::sync::Arc;

    fn agents() -> Agents {
        Agents::new(PromptSet::default(), AgentSettings::default()).unwrap()
    }

    fn client(f: impl Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync + 'static) -> (LlmClient, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new("test", f));
        (LlmClient::new(backend.clone()), backend)
    }

    fn teacher_input(prompt: &str) -> TeacherInput {
        TeacherInput {
            current_prompt: AgentPrompt::new(prompt, 1).unwrap(),
            generated_about: "a tool".into(),
            ground_truth_about: "fast json parser".into(),
            rouge_l: MetricTriple::from_pr(0.31, 0.31),
        }
    }

    #[test]
    fn empty_inputs_never_reach_the_model() {
        let a = agents();
        let (c, backend) = client(|_| Ok("x".into()));
        assert!(matches!(a.extract(&c, " \n"), Err(AgentError::Precondition(_))));
        assert!(matches!(
            a.summarize(&c, "  ", &a.prompts().summarizer_initial),
            Err(AgentError::Precondition(_))
        ));
        let mut input = teacher_input("p");
        input.ground_truth_about = "".into();
        assert!(matches!(a.teach(&c, &input), Err(AgentError::Precondition(_))));
        assert!(matches!(
            a.synthesize(&c, &SeedPromptSet { entries: vec![], discarded: vec!["x".into()] }),
            Err(AgentError::EmptyInput { discarded: 1 })
        ));
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn extraction_is_cached_and_capped() {
        let a = Agents::new(
            PromptSet::default(),
            AgentSettings {
                extract_cap: 50,
                ..AgentSettings::default()
            },
        )
        .unwrap();
        let (c, backend) = client(|r| {
            assert_eq!(r.model_id, "gpt-4o-mini");
            Ok("word ".repeat(40))
        });
        let first = a.extract(&c, "# Readme\nintro").unwrap();
        assert!(first.chars().count() <= 50);
        assert!(first.ends_with(TRUNCATION_MARKER));
        assert_eq!(a.extract(&c, "# Readme\nintro").unwrap(), first);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn summary_is_trimmed_and_capped() {
        let a = agents();
        let (c, _) = client(|r| {
            assert_eq!(r.messages[1].content, "extracted");
            Ok("  streaming json parser \n\n".into())
        });
        assert_eq!(a.summarize(&c, "extracted", &a.prompts().summarizer_initial).unwrap(), "streaming json parser");
        let (c, _) = client(|_| Ok("y".repeat(900)));
        assert_eq!(a.summarize(&c, "e", &a.prompts().summarizer_initial).unwrap().len(), DEFAULT_SUMMARY_CAP);
        let (c, _) = client(|_| Ok(" \n".into()));
        assert!(matches!(a.summarize(&c, "e", &a.prompts().summarizer_initial), Err(AgentError::EmptySummary)));
    }

    #[test]
    fn teacher_sees_exactly_the_four_inputs() {
        let a = agents();
        let (c, _) = client(|r| {
            assert_eq!(r.model_id, "gpt-4o");
            assert_eq!(r.response_schema.as_ref().unwrap().name, "teacher_output");
            let user = &r.messages[1].content;
            assert!(user.contains("<CURRENT_PROMPT>\nold prompt\n</CURRENT_PROMPT>"));
            assert!(user.contains("a tool"));
            assert!(user.contains("fast json parser"));
            assert!(user.contains("f1=0.3100"));
            Ok(r#"{"analysis": "too vague", "improved_prompt": "new prompt"}"#.into())
        });
        let out = a.teach(&c, &teacher_input("old prompt")).unwrap();
        assert_eq!(out.analysis, "too vague");
        assert_eq!(out.improved_prompt.template(), "new prompt");
        assert_eq!(out.improved_prompt.version(), 2);
    }

    #[test]
    fn unchanged_prompt_is_no_progress() {
        let a = agents();
        let (c, _) = client(|_| Ok(r#"{"analysis": "fine", "improved_prompt": " same prompt \n"}"#.into()));
        assert!(matches!(a.teach(&c, &teacher_input("same prompt")), Err(AgentError::NoProgress)));
    }

    #[test]
    fn synthesis_uses_only_final_prompt_field() {
        let a = agents();
        let (c, _) = client(|r| {
            let user = &r.messages[1].content;
            assert!(user.starts_with("There are 2 candidate prompts."));
            assert!(user.contains("<PROMPT_2>\nbeta\n</PROMPT_2>"));
            Ok(r#"{"common_instructions": ["be short"], "conditional_points": ["if cli, say cli"], "final_prompt": "Be short. If cli, say cli."}"#.into())
        });
        let seeds = SeedPromptSet {
            entries: ["alpha", "beta"]
                .iter()
                .enumerate()
                .map(|(i, t)| SeedEntry {
                    sample_id: format!("s{i}"),
                    final_prompt: AgentPrompt::new(*t, 3).unwrap(),
                    final_score: 0.8,
                })
                .collect(),
            discarded: vec![],
        };
        let s = a.synthesize(&c, &seeds).unwrap();
        assert_eq!(s.final_prompt.template(), "Be short. If cli, say cli.");
        assert_eq!(s.final_prompt.version(), 1);
        assert_eq!(s.conditional_points, ["if cli, say cli"]);
    }
}
