//! Prompt templates and the on-disk prompt resource set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use metagente_core::hashing::sha256_hex;
use metagente_llm::ResponseSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt template is empty")]
    Empty,
    #[error("unbound placeholder(s): {0:?}")]
    Unbound(Vec<String>),
    #[error("prompt resource {file}: {message}")]
    Resource { file: String, message: String },
}

/// A prompt template with `{name}` placeholders and a version counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPrompt", into = "RawPrompt")]
pub struct AgentPrompt {
    template: String,
    placeholders: BTreeSet<String>,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPrompt {
    template: String,
    version: u32,
}

impl TryFrom<RawPrompt> for AgentPrompt {
    type Error = PromptError;

    fn try_from(raw: RawPrompt) -> Result<Self, Self::Error> {
        AgentPrompt::new(raw.template, raw.version)
    }
}

impl From<AgentPrompt> for RawPrompt {
    fn from(p: AgentPrompt) -> Self {
        RawPrompt {
            template: p.template,
            version: p.version,
        }
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits a template into literal text and placeholder names. `{{` and `}}`
/// are literal braces; any other brace pair that does not enclose an
/// identifier is left as text.
fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = template.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                out.push(Piece::Text(&template[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                if let Some(len) = template[i + 1..].find('}') {
                    let name = &template[i + 1..i + 1 + len];
                    if is_ident(name) {
                        out.push(Piece::Text(&template[start..i]));
                        out.push(Piece::Slot(name));
                        i += len + 2;
                        start = i;
                        continue;
                    }
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&template[start..]));
    out
}

impl AgentPrompt {
    pub fn new(template: impl Into<String>, version: u32) -> Result<Self, PromptError> {
        let template = template.into();
        if template.trim().is_empty() {
            return Err(PromptError::Empty);
        }
        let placeholders = pieces(&template)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.to_string()),
                Piece::Text(_) => None,
            })
            .collect();
        Ok(AgentPrompt {
            template,
            placeholders,
            version,
        })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Successor prompt with the version bumped by one.
    pub fn revise(&self, template: impl Into<String>) -> Result<Self, PromptError> {
        AgentPrompt::new(template, self.version + 1)
    }

    /// Substitutes every placeholder. Fails if any placeholder has no
    /// binding; unused bindings are ignored.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let lookup: BTreeMap<&str, &str> = bindings.iter().copied().collect();
        let unbound: Vec<String> = self
            .placeholders
            .iter()
            .filter(|p| !lookup.contains_key(p.as_str()))
            .cloned()
            .collect();
        if !unbound.is_empty() {
            return Err(PromptError::Unbound(unbound));
        }
        let mut out = String::with_capacity(self.template.len());
        for piece in pieces(&self.template) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(lookup[name]),
            }
        }
        Ok(out)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&self.template)
    }
}

pub const EXTRACTOR: &str = "extractor.txt";
pub const SUMMARIZER_INITIAL: &str = "summarizer_initial.txt";
pub const TEACHER_SYSTEM: &str = "teacher_system.txt";
pub const TEACHER_USER: &str = "teacher_user.txt";
pub const CREATOR_SYSTEM: &str = "prompt_creator_system.txt";
pub const CREATOR_USER: &str = "prompt_creator_user.txt";
pub const TEACHER_SCHEMA: &str = "teacher.schema.json";
pub const CREATOR_SCHEMA: &str = "prompt_creator.schema.json";

const DEFAULTS: [(&str, &str); 8] = [
    (EXTRACTOR, include_str!("../prompts/extractor.txt")),
    (SUMMARIZER_INITIAL, include_str!("../prompts/summarizer_initial.txt")),
    (TEACHER_SYSTEM, include_str!("../prompts/teacher_system.txt")),
    (TEACHER_USER, include_str!("../prompts/teacher_user.txt")),
    (CREATOR_SYSTEM, include_str!("../prompts/prompt_creator_system.txt")),
    (CREATOR_USER, include_str!("../prompts/prompt_creator_user.txt")),
    (TEACHER_SCHEMA, include_str!("../prompts/teacher.schema.json")),
    (CREATOR_SCHEMA, include_str!("../prompts/prompt_creator.schema.json")),
];

/// All prompt texts and response schemas the agents use.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub extractor: AgentPrompt,
    pub summarizer_initial: AgentPrompt,
    pub teacher_system: AgentPrompt,
    pub teacher_user: AgentPrompt,
    pub creator_system: AgentPrompt,
    pub creator_user: AgentPrompt,
    pub teacher_schema: ResponseSchema,
    pub creator_schema: ResponseSchema,
    hashes: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_sources(|name| Ok(DEFAULTS.iter().find(|d| d.0 == name).expect("known resource").1.to_string()))
            .expect("bundled prompts are valid")
    }
}

impl PromptSet {
    /// Loads resources from `dir`, falling back to the bundled default for
    /// any file that is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::from_sources(|name| {
            let path = dir.join(name);
            if path.is_file() {
                std::fs::read_to_string(&path).map_err(|e| PromptError::Resource {
                    file: path.display().to_string(),
                    message: e.to_string(),
                })
            } else {
                Ok(DEFAULTS.iter().find(|d| d.0 == name).expect("known resource").1.to_string())
            }
        })
    }

    fn from_sources(read: impl Fn(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let mut hashes = BTreeMap::new();
        let mut text = |name: &str| -> Result<String, PromptError> {
            let t = read(name)?;
            hashes.insert(name.to_string(), sha256_hex(&t));
            Ok(t)
        };
        let prompt = |t: String, name: &str| {
            AgentPrompt::new(t.trim_end().to_string(), 1).map_err(|e| PromptError::Resource {
                file: name.into(),
                message: e.to_string(),
            })
        };
        let schema = |t: String, name: &str, schema_name: &str| -> Result<ResponseSchema, PromptError> {
            let value = serde_json::from_str(&t).map_err(|e| PromptError::Resource {
                file: name.into(),
                message: e.to_string(),
            })?;
            Ok(ResponseSchema {
                name: schema_name.into(),
                schema: value,
            })
        };
        let set = PromptSet {
            extractor: prompt(text(EXTRACTOR)?, EXTRACTOR)?,
            summarizer_initial: prompt(text(SUMMARIZER_INITIAL)?, SUMMARIZER_INITIAL)?,
            teacher_system: prompt(text(TEACHER_SYSTEM)?, TEACHER_SYSTEM)?,
            teacher_user: prompt(text(TEACHER_USER)?, TEACHER_USER)?,
            creator_system: prompt(text(CREATOR_SYSTEM)?, CREATOR_SYSTEM)?,
            creator_user: prompt(text(CREATOR_USER)?, CREATOR_USER)?,
            teacher_schema: schema(text(TEACHER_SCHEMA)?, TEACHER_SCHEMA, "teacher_output")?,
            creator_schema: schema(text(CREATOR_SCHEMA)?, CREATOR_SCHEMA, "prompt_synthesis")?,
            hashes,
        };
        Ok(set)
    }

    /// SHA-256 of every resource file, keyed by file name.
    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    /// Writes the resource files into `dir`.
    pub fn write_defaults(dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in DEFAULTS {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}
