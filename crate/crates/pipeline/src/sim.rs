//! A deterministic, offline stand-in for the chat endpoint.
//!
//! The `sim` backend answers each agent role with simple text rules so the
//! whole pipeline can run (and be recorded into cassettes) without network
//! access. It is a test double, not a model: summaries are built from a
//! `Key terms:` list in the prompt, and the teacher grows that list with
//! ground-truth terms two at a time.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use metagente_core::rouge::tokenize;
use metagente_llm::backend::ScriptedBackend;
use metagente_llm::{BackendRegistry, ChatRequest, LlmError, Role};
use serde_json::json;

pub const SIM_BACKEND: &str = "sim";

const KEY_TERMS: &str = "Key terms:";
const CONDITIONAL_HEADER: &str = "Conditional guidance:";
const MAX_SUMMARY_TERMS: usize = 12;
const FALLBACK_WORDS: usize = 8;
const TERMS_PER_LESSON: usize = 2;

const SKIPPED_SECTIONS: [&str; 16] = [
    "install",
    "setup",
    "getting started",
    "usage",
    "example",
    "config",
    "build",
    "test",
    "contribut",
    "conduct",
    "changelog",
    "license",
    "acknowledg",
    "credit",
    "contact",
    "support",
];

const STOPWORDS: [&str; 24] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it", "of", "on", "or",
    "that", "the", "this", "to", "with", "your", "you",
];

/// Registers the `sim` backend. `extractor_template` is the rendered
/// extractor system prompt, used to tell extraction requests apart from
/// summarization requests.
pub fn register_sim(registry: &mut BackendRegistry, extractor_template: impl Into<String>) {
    let sim = Arc::new(SimModel::new(extractor_template));
    registry.register(SIM_BACKEND, move |_, _| {
        let sim = sim.clone();
        Ok(Arc::new(ScriptedBackend::new(SIM_BACKEND, move |r: &ChatRequest| sim.respond(r))))
    });
}

#[derive(Debug, Clone)]
pub struct SimModel {
    extractor_template: String,
}

fn message(request: &ChatRequest, role: Role) -> &str {
    request
        .messages
        .iter()
        .find(|m| m.role == role)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn tagged<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(&close)?;
    Some(text[start..end].trim())
}

fn split_terms(list: &str) -> Vec<String> {
    list.split(',')
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn key_terms(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|l| l.trim().strip_prefix(KEY_TERMS))
        .flat_map(split_terms)
        .collect()
}

/// `(anchor, terms)` pairs from conditional bullet lines.
fn conditional_terms(prompt: &str) -> Vec<(String, Vec<String>)> {
    prompt
        .lines()
        .filter_map(|l| {
            let rest = l.trim().strip_prefix("- If the text mentions ")?;
            let (anchor, terms) = rest.split_once(", use the key terms: ")?;
            Some((anchor.trim().to_lowercase(), split_terms(terms)))
        })
        .collect()
}

fn dedup_push(out: &mut Vec<String>, seen: &mut HashSet<String>, term: String) {
    if seen.insert(term.clone()) {
        out.push(term);
    }
}

fn is_skipped_heading(heading: &str) -> bool {
    let h = heading.to_lowercase();
    SKIPPED_SECTIONS.iter().any(|s| h.contains(s))
}

impl SimModel {
    pub fn new(extractor_template: impl Into<String>) -> Self {
        SimModel {
            extractor_template: extractor_template.into(),
        }
    }

    pub fn respond(&self, request: &ChatRequest) -> Result<String, LlmError> {
        match request.response_schema.as_ref().map(|s| s.name.as_str()) {
            Some("teacher_output") => Ok(self.teach(message(request, Role::User))),
            Some("prompt_synthesis") => Ok(self.synthesize(message(request, Role::User))),
            Some(other) => Err(LlmError::InvalidRequest(format!("sim backend has no rule for schema {other:?}"))),
            None if message(request, Role::System) == self.extractor_template => {
                Ok(self.extract(message(request, Role::User)))
            }
            None => Ok(self.summarize(message(request, Role::System), message(request, Role::User))),
        }
    }

    /// Drops non-descriptive sections, code blocks, badges, HTML and
    /// tables, then joins what is left into paragraphs.
    fn extract(&self, readme: &str) -> String {
        let mut paragraphs: Vec<String> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        let mut skipping = false;
        let mut in_code = false;
        let mut title = None;
        let flush = |current: &mut Vec<&str>, paragraphs: &mut Vec<String>| {
            if !current.is_empty() {
                paragraphs.push(current.join(" "));
                current.clear();
            }
        };
        for line in readme.lines() {
            let t = line.trim();
            if t.starts_with("```") || t.starts_with("~~~") {
                in_code = !in_code;
                continue;
            }
            if in_code {
                continue;
            }
            if let Some(h) = t.strip_prefix('#') {
                flush(&mut current, &mut paragraphs);
                let h = h.trim_start_matches('#').trim();
                title.get_or_insert_with(|| h.to_string());
                skipping = is_skipped_heading(h);
                continue;
            }
            if skipping {
                continue;
            }
            if t.is_empty() {
                flush(&mut current, &mut paragraphs);
                continue;
            }
            if t.starts_with("![") || t.starts_with("[![") || t.starts_with('<') || t.starts_with('|') {
                continue;
            }
            current.push(t);
        }
        flush(&mut current, &mut paragraphs);
        if paragraphs.is_empty() {
            return title
                .filter(|t| !t.is_empty())
                .unwrap_or_else(|| readme.trim().chars().take(200).collect());
        }
        paragraphs.join("\n\n")
    }

    fn summarize(&self, prompt: &str, extracted: &str) -> String {
        let present: HashSet<String> = tokenize(extracted).tokens().iter().cloned().collect();
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for term in key_terms(prompt) {
            if present.contains(&term) {
                dedup_push(&mut out, &mut seen, term);
            }
        }
        for (anchor, terms) in conditional_terms(prompt) {
            if present.contains(&anchor) {
                for term in terms.into_iter().filter(|t| present.contains(t)) {
                    dedup_push(&mut out, &mut seen, term);
                }
            }
        }
        out.truncate(MAX_SUMMARY_TERMS);
        if !out.is_empty() {
            return out.join(" ");
        }
        let first_sentence = extracted.split(". ").next().unwrap_or(extracted);
        let words: Vec<String> = tokenize(first_sentence).tokens().iter().take(FALLBACK_WORDS).cloned().collect();
        if words.is_empty() {
            "software project".to_string()
        } else {
            words.join(" ")
        }
    }

    fn teach(&self, user: &str) -> String {
        let current = tagged(user, "CURRENT_PROMPT").unwrap_or("");
        let generated = tagged(user, "GENERATED_ABOUT").unwrap_or("");
        let truth = tagged(user, "GROUND_TRUTH_ABOUT").unwrap_or("");
        let truth_tokens = tokenize(truth);
        let truth_order: Vec<&String> = truth_tokens.tokens().iter().collect();
        let known: BTreeSet<String> = key_terms(current).into_iter().collect();
        let mut missing = Vec::new();
        let mut seen = HashSet::new();
        for t in truth_order.iter().filter(|t| !known.contains(t.as_str())) {
            dedup_push(&mut missing, &mut seen, t.to_string());
        }
        if missing.is_empty() {
            return json!({
                "analysis": "The prompt already lists every ground-truth term; no further change helps.",
                "improved_prompt": current,
            })
            .to_string();
        }
        let added: Vec<String> = missing.into_iter().take(TERMS_PER_LESSON).collect();
        let mut terms: Vec<String> = known.into_iter().chain(added.iter().cloned()).collect();
        let position = |t: &String| truth_order.iter().position(|x| *x == t).unwrap_or(usize::MAX);
        terms.sort_by_key(|t| (position(t), t.clone()));
        let body: Vec<&str> = current
            .lines()
            .filter(|l| !l.trim().starts_with(KEY_TERMS))
            .collect();
        let improved = format!("{}\n\n{KEY_TERMS} {}", body.join("\n").trim_end(), terms.join(", "));
        json!({
            "analysis": format!(
                "The generated About \"{generated}\" misses the terms {}; the prompt now asks for them.",
                added.join(", ")
            ),
            "improved_prompt": improved,
        })
        .to_string()
    }

    fn synthesize(&self, user: &str) -> String {
        let mut candidates = Vec::new();
        for i in 1.. {
            match tagged(user, &format!("PROMPT_{i}")) {
                Some(p) => candidates.push(p),
                None => break,
            }
        }
        let instruction_lines = |p: &str| -> Vec<String> {
            p.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with(KEY_TERMS))
                .map(String::from)
                .collect()
        };
        let common: Vec<String> = match candidates.first() {
            Some(first) => instruction_lines(first)
                .into_iter()
                .filter(|l| candidates.iter().all(|c| instruction_lines(c).contains(l)))
                .collect(),
            None => Vec::new(),
        };
        let mut conditional = Vec::new();
        let mut seen = HashSet::new();
        for c in &candidates {
            let terms = key_terms(c);
            let Some(anchor) = terms
                .iter()
                .find(|t| t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()))
                .or(terms.first())
            else {
                continue;
            };
            let point = format!("If the text mentions {anchor}, use the key terms: {}", terms.join(", "));
            dedup_push(&mut conditional, &mut seen, point);
        }
        let mut prompt = common.join("\n");
        if !conditional.is_empty() {
            prompt.push_str(&format!("\n\n{CONDITIONAL_HEADER}\n"));
            let bullets: Vec<String> = conditional.iter().map(|p| format!("- {p}")).collect();
            prompt.push_str(&bullets.join("\n"));
        }
        if prompt.trim().is_empty() {
            prompt = "Write a short and precise phrase describing the repository.".into();
        }
        json!({
            "common_instructions": common,
            "conditional_points": conditional,
            "final_prompt": prompt,
        })
        .to_string()
    }
}
