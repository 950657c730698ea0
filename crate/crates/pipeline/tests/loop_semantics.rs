//! Optimization loop behavior against scripted transports.

use std::sync::{Arc, Mutex};

use metagente_core::{RepoSample, score_all};
use metagente_llm::backend::ScriptedBackend;
use metagente_llm::{ChatRequest, LlmClient, LlmError, Role};
use metagente_pipeline::{
    AgentError, AgentPrompt, AgentSettings, Agents, LoopConfig, Orchestrator, PromptSet, SeedPromptSet,
    TerminationReason,
};

const TRUTH: &str = "alpha beta gamma delta epsilon zeta eta theta iota kappa";

fn sample(id: &str, readme: &str) -> RepoSample {
    RepoSample {
        sample_id: id.into(),
        readme: readme.into(),
        about: TRUTH.into(),
        source: Default::default(),
        readme_truncated: false,
    }
}

fn step_of(text: &str) -> usize {
    let start = text.find("step ").expect("prompt carries a step marker") + 5;
    text[start..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect::<String>()
        .parse()
        .unwrap()
}

/// First `k` words of the ground truth: ROUGE-L F1 = 2k / (10 + k), which
/// first reaches 0.7 at k = 6.
fn prefix(k: usize) -> String {
    TRUTH.split(' ').take(k.max(1)).collect::<Vec<_>>().join(" ")
}

type Log = Arc<Mutex<Vec<ChatRequest>>>;

/// Scripted transport. The summarizer answer for prompt `step n` comes from
/// `schedule(extracted_text, n)`; the teacher always moves to `step n+1`
/// unless `stall` is set.
fn scripted(schedule: impl Fn(&str, usize) -> String + Send + Sync + 'static, stall: bool) -> (LlmClient, Log) {
    let extractor = PromptSet::default().extractor.template().to_string();
    let log: Log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    let backend = ScriptedBackend::new("scripted", move |r: &ChatRequest| {
        seen.lock().unwrap().push(r.clone());
        let system = &r.messages[0].content;
        let user = &r.messages[1].content;
        match r.response_schema.as_ref().map(|s| s.name.as_str()) {
            Some("teacher_output") => {
                let n = step_of(user);
                let next = if stall { n } else { n + 1 };
                Ok(serde_json::json!({"analysis": format!("analysis {n}"), "improved_prompt": format!("step {next}")}).to_string())
            }
            Some(_) => {
                let count = user.matches("</PROMPT_").count();
                Ok(serde_json::json!({
                    "common_instructions": ["be brief"],
                    "conditional_points": [format!("{count} candidates")],
                    "final_prompt": "step 99"
                })
                .to_string())
            }
            None if *system == extractor => Ok(format!("extracted {user}")),
            None => Ok(schedule(user, step_of(system))),
        }
    });
    (LlmClient::new(Arc::new(backend)), log)
}

fn orchestrator(client: LlmClient, config: LoopConfig) -> Orchestrator {
    let agents = Agents::new(PromptSet::default(), AgentSettings::default()).unwrap();
    Orchestrator::new(Arc::new(client), agents, config).unwrap()
}

fn initial() -> AgentPrompt {
    AgentPrompt::new("step 1", 1).unwrap()
}

#[test]
fn instant_success_is_one_iteration() {
    let (client, log) = scripted(|_, _| TRUTH.to_string(), false);
    let orch = orchestrator(client, LoopConfig::default());
    let trace = orch.optimize_sample(&sample("s", "readme"), &initial());
    assert_eq!(trace.iterations(), 1);
    assert!(trace.converged);
    assert_eq!(trace.termination_reason, TerminationReason::ThresholdMet);
    assert_eq!(trace.final_prompt.as_ref().unwrap().version(), 1);
    assert_eq!(trace.llm_calls, 2);
    assert_eq!(log.lock().unwrap().len(), 2);
}

#[test]
fn never_improving_stops_at_fifteen() {
    let (client, log) = scripted(|_, _| "unrelated words".to_string(), false);
    let orch = orchestrator(client, LoopConfig::default());
    let trace = orch.optimize_sample(&sample("s", "readme"), &initial());
    assert_eq!(trace.iterations(), 15);
    assert!(!trace.converged);
    assert!(trace.final_prompt.is_none());
    assert_eq!(trace.termination_reason, TerminationReason::MaxIterations);
    assert!(trace.records.iter().all(|r| r.scores.rouge_l.f1 < 0.7));
    let versions: Vec<u32> = trace.records.iter().map(|r| r.prompt_version).collect();
    assert_eq!(versions, (1..=15).collect::<Vec<_>>());
    assert_eq!(trace.llm_calls, 1 + 15 + 14);
    assert_eq!(log.lock().unwrap().len(), 30);
    assert!(trace.records[..14].iter().all(|r| r.teacher_analysis.is_some()));
    assert!(trace.records[14].teacher_analysis.is_none());
}

#[test]
fn crossing_at_six_converges_at_six() {
    for k in 1..=6 {
        let f1 = score_all(&prefix(k), TRUTH).rouge_l.f1;
        assert!((f1 - 2.0 * k as f64 / (10.0 + k as f64)).abs() < 1e-12);
        assert_eq!(f1 >= 0.7, k == 6);
    }
    let (client, _) = scripted(|_, n| prefix(n), false);
    let orch = orchestrator(client, LoopConfig::default());
    let trace = orch.optimize_sample(&sample("s", "readme"), &initial());
    assert_eq!(trace.iterations(), 6);
    assert!(trace.converged);
    assert!(trace.last_f1().unwrap() >= 0.7);
    assert_eq!(trace.final_prompt.unwrap().template(), "step 6");
    assert_eq!(trace.llm_calls, 1 + 6 + 5);
}

#[test]
fn lower_threshold_converges_earlier() {
    let (client, _) = scripted(|_, n| prefix(n), false);
    let config = LoopConfig {
        rouge_l_threshold: 0.6,
        ..LoopConfig::default()
    };
    let trace = orchestrator(client, config).optimize_sample(&sample("s", "readme"), &initial());
    // 2k / (10 + k) >= 0.6 first holds at k = 5 (F1 = 0.667).
    assert_eq!(trace.iterations(), 5);
}

#[test]
fn stalled_teacher_ends_with_no_progress() {
    let (client, _) = scripted(|_, _| "nothing".to_string(), true);
    let trace = orchestrator(client, LoopConfig::default()).optimize_sample(&sample("s", "readme"), &initial());
    assert_eq!(trace.termination_reason, TerminationReason::NoProgress);
    assert_eq!(trace.iterations(), 1);
    assert!(!trace.converged && trace.final_prompt.is_none());
}

#[test]
fn call_budget_stops_the_loop() {
    let (client, _) = scripted(|_, _| "nothing".to_string(), false);
    let config = LoopConfig {
        call_budget: 5,
        ..LoopConfig::default()
    };
    let trace = orchestrator(client, config).optimize_sample(&sample("s", "readme"), &initial());
    assert_eq!(trace.termination_reason, TerminationReason::AgentError);
    assert_eq!(trace.llm_calls, 5);
    assert!(trace.error.unwrap().contains("budget"));
}

fn batch_schedule(extracted: &str, n: usize) -> String {
    if extracted.contains("converges") {
        prefix(n + 4)
    } else {
        "off topic".to_string()
    }
}

fn ten_samples() -> Vec<RepoSample> {
    (0..10)
        .map(|i| {
            let kind = if [1, 4, 7].contains(&i) { "stalls" } else { "converges" };
            sample(&format!("repo-{i:02}"), &format!("repo {i} {kind}"))
        })
        .collect()
}

#[test]
fn batch_keeps_exactly_the_convergers() {
    let (client, _) = scripted(batch_schedule, false);
    let orch = orchestrator(client, LoopConfig::default());
    let samples = ten_samples();
    let out = orch.optimize_batch(&samples, &initial()).unwrap();
    let ids: Vec<&str> = out.traces.iter().map(|t| t.sample_id.as_str()).collect();
    let expected: Vec<String> = (0..10).map(|i| format!("repo-{i:02}")).collect();
    assert_eq!(ids, expected);
    let converged: Vec<&str> = out.seeds.ids();
    assert_eq!(converged, ["repo-00", "repo-02", "repo-03", "repo-05", "repo-06", "repo-08", "repo-09"]);
    assert_eq!(out.seeds.discarded, ["repo-01", "repo-04", "repo-07"]);
    for t in &out.traces {
        assert_eq!(t.converged, t.final_prompt.is_some());
        assert_eq!(t.converged, t.termination_reason == TerminationReason::ThresholdMet);
    }
    let fp = orch.generate_final_prompt(&out.seeds).unwrap();
    assert_eq!(fp.provenance.seed_sample_ids, converged);
    assert_eq!(fp.provenance.discarded_count, 3);
    assert_eq!(fp.provenance.conditional_points, ["7 candidates"]);
    assert_eq!(fp.prompt.template(), "step 99");
}

#[test]
fn concurrency_does_not_change_results() {
    let run = |concurrency| {
        let (client, _) = scripted(batch_schedule, false);
        let config = LoopConfig {
            concurrency,
            ..LoopConfig::default()
        };
        let orch = orchestrator(client, config);
        let out = orch.optimize_batch(&ten_samples(), &initial()).unwrap();
        serde_json::to_string(&orch.trace_document(&out)).unwrap()
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn batch_rejects_duplicates_and_empty() {
    let (client, _) = scripted(batch_schedule, false);
    let orch = orchestrator(client, LoopConfig::default());
    assert!(orch.optimize_batch(&[], &initial()).is_err());
    let dup = vec![sample("a", "r"), sample("a", "r2")];
    assert!(orch.optimize_batch(&dup, &initial()).is_err());
}

#[test]
fn all_failing_batch_yields_empty_seed_set() {
    let (client, _) = scripted(|_, _| "off".to_string(), false);
    let orch = orchestrator(client, LoopConfig { max_iterations: 3, ..LoopConfig::default() });
    let out = orch.optimize_batch(&ten_samples(), &initial()).unwrap();
    assert!(out.seeds.is_empty());
    assert_eq!(out.seeds.discarded.len(), 10);
    match orch.generate_final_prompt(&out.seeds) {
        Err(metagente_pipeline::OrchestratorError::Agent(AgentError::EmptyInput { discarded: 10 })) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn transport_failure_is_captured_per_sample() {
    let backend = ScriptedBackend::new("flaky", |r: &ChatRequest| {
        if r.messages[1].content.contains("broken") {
            Err(LlmError::Network { attempts: 5, message: "down".into() })
        } else if r.messages[0].content == PromptSet::default().extractor.template() {
            Ok("text".into())
        } else {
            Ok(TRUTH.into())
        }
    });
    let orch = orchestrator(LlmClient::new(Arc::new(backend)), LoopConfig::default());
    let out = orch
        .optimize_batch(&[sample("ok", "fine"), sample("bad", "broken")], &initial())
        .unwrap();
    assert!(out.traces[0].converged);
    assert_eq!(out.traces[1].termination_reason, TerminationReason::AgentError);
    assert!(out.traces[1].records.is_empty());
    assert_eq!(out.seeds.discarded, ["bad"]);
}

#[test]
fn tiers_and_contexts() {
    let (client, log) = scripted(|_, n| prefix(n), false);
    let orch = orchestrator(client, LoopConfig::default());
    let readme = "RAW-README-MARKER body";
    let trace = orch.optimize_sample(&sample("s", readme), &initial());
    assert!(trace.converged);
    let extractor = PromptSet::default().extractor.template().to_string();
    let log = log.lock().unwrap();
    for r in log.iter() {
        let user = r.messages.iter().find(|m| m.role == Role::User).unwrap();
        match r.response_schema {
            Some(_) => {
                assert_eq!(r.model_id, "gpt-4o");
                assert!(!user.content.contains(readme));
            }
            None => {
                assert_eq!(r.model_id, "gpt-4o-mini");
                if r.messages[0].content == extractor {
                    assert_eq!(user.content, readme);
                } else {
                    assert_eq!(user.content, format!("extracted {readme}"));
                }
            }
        }
    }
    assert_eq!(log.iter().filter(|r| r.messages[0].content == extractor).count(), 1);
}

#[test]
fn infer_runs_extract_then_summarize() {
    let (client, log) = scripted(|text, n| format!("{text} at {n}"), false);
    let orch = orchestrator(client, LoopConfig::default());
    let prompt = AgentPrompt::new("step 3", 1).unwrap();
    assert_eq!(orch.infer("my readme", &prompt).unwrap(), "extracted my readme at 3");
    assert_eq!(orch.infer("my readme", &prompt).unwrap(), "extracted my readme at 3");
    // The second extraction is served from the cache.
    assert_eq!(log.lock().unwrap().len(), 3);
    assert!(matches!(orch.infer("  ", &prompt), Err(AgentError::Precondition(_))));
}

#[test]
fn seed_set_round_trips() {
    let seeds = SeedPromptSet::default();
    let json = serde_json::to_string(&seeds).unwrap();
    assert_eq!(serde_json::from_str::<SeedPromptSet>(&json).unwrap(), seeds);
}
