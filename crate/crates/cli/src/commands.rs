//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::info;
use metagente_core::dataset::{self, fetch_github, DatasetStats, GithubConfig, RepoSample};
use metagente_core::eval::{build_report, emit_report, read_report, score_system, EvalReport, ScoreTable, WilcoxonOutcome};
use metagente_core::hashing::sha256_hex;
use metagente_core::rouge::Metric;
use metagente_llm::{BackendConfig, BackendRegistry, LlmClient, TelemetrySnapshot, DEFAULT_MAX_REASKS};
use metagente_pipeline::{
    register_sim, AgentSettings, Agents, FinalPrompt, Orchestrator, OrchestratorError, PromptSet, SeedPromptSet,
};
use serde::{Deserialize, Serialize};

use crate::config::{EvalArgs, InferArgs, IngestArgs, Provenance, ReportArgs, RunConfig, SplitArgs, TrainArgs};
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DATASET_STATS_FILE: &str = "dataset_stats.json";
pub const REVIEW_QUEUE_FILE: &str = "review_queue.csv";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const RESERVE_FILE: &str = "reserve.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const TRACES_FILE: &str = "traces.json";
pub const SEEDS_FILE: &str = "seeds.json";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.txt";
pub const GENERATED_FILE: &str = "generated.jsonl";
pub const REPORT_STEM: &str = "report";

/// One generated About, as stored in generation JSONL files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub sample_id: String,
    pub about: String,
}

/// Lists the files a command wrote, with their SHA-256, next to the
/// provenance hashes. Covers formats such as CSV and JSONL that cannot
/// carry the hashes themselves.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    #[serde(flatten)]
    provenance: &'a Provenance,
    artifacts: BTreeMap<String, String>,
}

struct Context {
    config: RunConfig,
    prompts: PromptSet,
    provenance: Provenance,
}

impl Context {
    fn new(config: RunConfig) -> Result<Self, CliError> {
        let prompts = config.prompts()?;
        let provenance = Provenance::new(&config, &prompts);
        std::fs::create_dir_all(&config.out_dir).map_err(|e| CliError::io(&config.out_dir, e))?;
        Ok(Context {
            config,
            prompts,
            provenance,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_path(name)
    }

    fn write_manifest(&self, command: &str, files: &[PathBuf]) -> Result<(), CliError> {
        let mut artifacts = BTreeMap::new();
        for f in files {
            let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            artifacts.insert(name, sha256_hex(bytes));
        }
        let manifest = Manifest {
            command,
            provenance: &self.provenance,
            artifacts,
        };
        write_json(&self.path(&format!("manifest.{command}.json")), &manifest)
    }

    fn client(&self) -> Result<LlmClient, CliError> {
        let mut registry = BackendRegistry::with_defaults();
        register_sim(&mut registry, self.prompts.extractor.render(&[])?);
        if !registry.contains(&self.config.mode) {
            return Err(CliError::Config(format!(
                "unknown mode {:?}; expected one of {}",
                self.config.mode,
                registry.names().join(", ")
            )));
        }
        let backend_config = BackendConfig {
            base_url: self.config.base_url.clone(),
            cassette: self.config.cassette.clone(),
            record_source: self.config.record_source.clone(),
            schema_mode: self.config.schema_mode.into(),
            ..BackendConfig::default()
        };
        let backend = registry.build(&self.config.mode, &backend_config)?;
        Ok(LlmClient::with_limits(backend, self.config.max_in_flight, DEFAULT_MAX_REASKS))
    }

    fn orchestrator(&self, client: Arc<LlmClient>) -> Result<Orchestrator, CliError> {
        let settings = AgentSettings {
            tiers: self.config.tiers.clone(),
            ..AgentSettings::default()
        };
        let agents = Agents::new(self.prompts.clone(), settings)?;
        Ok(Orchestrator::new(client, agents, self.config.loop_config)?)
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| CliError::io(path, e))
}

fn read_generated(path: &Path) -> Result<Vec<Generated>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: Generated = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(g);
    }
    Ok(out)
}

fn write_generated(path: &Path, rows: &[Generated]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| CliError::io(path, e))?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

fn load_samples(path: &Path, hint: &str) -> Result<Vec<RepoSample>, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{} not found; {hint}", path.display())));
    }
    Ok(dataset::load_jsonl(path)?)
}

fn load_final_prompt(ctx: &Context, path: Option<&PathBuf>) -> Result<metagente_pipeline::AgentPrompt, CliError> {
    let path = path.cloned().unwrap_or_else(|| ctx.path(metagente_pipeline::orchestrator::FINAL_PROMPT_FILE));
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "final prompt {} not found; run `train` first or pass --final-prompt",
            path.display()
        )));
    }
    Ok(FinalPrompt::read_prompt(&path)?)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn telemetry_lines(t: &TelemetrySnapshot) -> String {
    let mut s = format!(
        "llm calls: {}\nre-asks: {}\nprompt tokens: {}\ncompletion tokens: {}\nnetwork requests: {}\n",
        t.calls, t.reasks, t.prompt_tokens, t.completion_tokens, t.network_requests
    );
    for (model, n) in &t.calls_by_model {
        let _ = writeln!(s, "calls to {model}: {n}");
    }
    s
}

#[derive(Serialize)]
struct SkippedView<'a> {
    repo: &'a str,
    reason: &'a str,
}

#[derive(Serialize)]
struct IngestStats<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    stats: DatasetStats,
    skipped: Vec<SkippedView<'a>>,
}

pub fn ingest(config: RunConfig, args: IngestArgs) -> Result<(), CliError> {
    let ctx = Context::new(config)?;
    let (samples, skipped) = match (&args.input, &args.github_repos) {
        (Some(input), _) => (load_samples(input, "pass an existing JSONL file to --input")?, Vec::new()),
        (None, Some(list)) => {
            let text = std::fs::read_to_string(list).map_err(|e| CliError::Data(format!("{}: {e}", list.display())))?;
            let repos: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect();
            let mut gh = GithubConfig::from_env()?;
            gh.base_url = args.github_api_url.clone();
            let outcome = fetch_github(&repos, &gh)?;
            (outcome.samples, outcome.skipped)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let dataset_path = ctx.path(DATASET_FILE);
    dataset::save_jsonl(&dataset_path, &samples)?;
    let review = ctx.path(REVIEW_QUEUE_FILE);
    let file = std::fs::File::create(&review).map_err(|e| CliError::io(&review, e))?;
    dataset::export_review_queue(std::io::BufWriter::new(file), &samples)?;
    let stats = dataset::stats(&samples)?;
    let stats_path = ctx.path(DATASET_STATS_FILE);
    write_json(
        &stats_path,
        &IngestStats {
            provenance: &ctx.provenance,
            stats,
            skipped: skipped
                .iter()
                .map(|s| SkippedView {
                    repo: &s.repo,
                    reason: &s.reason,
                })
                .collect(),
        },
    )?;
    ctx.write_manifest("ingest", &[dataset_path.clone(), review, stats_path])?;
    println!("ingested {} samples into {} ({} skipped)", samples.len(), dataset_path.display(), skipped.len());
    println!(
        "about length: mean {:.1}, std {:.1} characters",
        stats.about_chars.mean, stats.about_chars.std
    );
    println!(
        "readme length: mean {:.1}, std {:.1} characters",
        stats.readme_chars.mean, stats.readme_chars.std
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    seed: u64,
    train_n: usize,
    test_n: usize,
    reserve_n: usize,
    train_ids: Vec<&'a str>,
    test_ids: Vec<&'a str>,
    reserve_ids: Vec<&'a str>,
}

pub fn split(config: RunConfig, args: SplitArgs) -> Result<(), CliError> {
    let ctx = Context::new(config)?;
    let path = args.dataset.clone().unwrap_or_else(|| ctx.path(DATASET_FILE));
    let samples = load_samples(&path, "run `ingest` first or pass --dataset")?;
    let parts = dataset::split(&samples, ctx.config.seed, ctx.config.train_n, ctx.config.holdout_n)?;
    let ids = |v: &'_ [RepoSample]| -> Vec<String> { v.iter().map(|s| s.sample_id.clone()).collect() };
    let (train_ids, test_ids, reserve_ids) = (ids(&parts.train), ids(&parts.test), ids(&parts.reserve));
    let mut files = vec![ctx.path(TRAIN_FILE), ctx.path(TEST_FILE)];
    dataset::save_jsonl(&files[0], &parts.train)?;
    dataset::save_jsonl(&files[1], &parts.test)?;
    if !parts.reserve.is_empty() {
        files.push(ctx.path(RESERVE_FILE));
        dataset::save_jsonl(&files[2], &parts.reserve)?;
    }
    let record_path = ctx.path(SPLIT_FILE);
    write_json(
        &record_path,
        &SplitRecord {
            provenance: &ctx.provenance,
            seed: parts.seed,
            train_n: parts.train.len(),
            test_n: parts.test.len(),
            reserve_n: parts.reserve.len(),
            train_ids: train_ids.iter().map(String::as_str).collect(),
            test_ids: test_ids.iter().map(String::as_str).collect(),
            reserve_ids: reserve_ids.iter().map(String::as_str).collect(),
        },
    )?;
    files.push(record_path);
    ctx.write_manifest("split", &files)?;
    println!(
        "split with seed {}: train {}, test {}, reserve {}",
        parts.seed,
        parts.train.len(),
        parts.test.len(),
        parts.reserve.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SeedsRecord<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    seeds: &'a SeedPromptSet,
}

pub fn train(config: RunConfig, args: TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let ctx = Context::new(config)?;
    let path = args.train.clone().unwrap_or_else(|| ctx.path(TRAIN_FILE));
    let samples = load_samples(&path, "run `split` first or pass --train")?;
    let client = Arc::new(ctx.client()?);
    let orch = ctx.orchestrator(client.clone())?;

    let phase = Instant::now();
    let outcome = orch.optimize_batch(&samples, &orch.agents().prompts().summarizer_initial)?;
    let optimize_time = phase.elapsed();

    let mut doc = orch.trace_document(&outcome);
    doc.extra.insert("config_hash".into(), ctx.provenance.config_hash.clone());
    let traces_path = ctx.path(TRACES_FILE);
    doc.write(&traces_path)?;
    let seeds_path = ctx.path(SEEDS_FILE);
    write_json(
        &seeds_path,
        &SeedsRecord {
            provenance: &ctx.provenance,
            seeds: &outcome.seeds,
        },
    )?;
    let mut files = vec![traces_path, seeds_path];

    let phase = Instant::now();
    let synthesis = orch.generate_final_prompt(&outcome.seeds);
    let synthesis_time = phase.elapsed();

    let mut summary = String::new();
    let _ = writeln!(summary, "training samples: {}", samples.len());
    let _ = writeln!(summary, "converged: {}", outcome.seeds.len());
    let _ = writeln!(summary, "discarded: {}", outcome.seeds.discarded.len());
    let _ = writeln!(
        summary,
        "threshold: {}, max iterations: {}",
        ctx.config.loop_config.rouge_l_threshold, ctx.config.loop_config.max_iterations
    );
    let _ = writeln!(summary, "\nsample\treason\titerations\tbest_rouge_l");
    for t in &outcome.traces {
        let reason = serde_json::to_value(t.termination_reason).expect("enum serializes");
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{:.3}",
            t.sample_id,
            reason.as_str().unwrap_or_default(),
            t.iterations(),
            t.best_rouge_l
        );
    }
    let _ = writeln!(summary);
    summary.push_str(&telemetry_lines(&client.telemetry()));
    let _ = writeln!(
        summary,
        "wall time: optimization {}, synthesis {}, total {}",
        secs(optimize_time),
        secs(synthesis_time),
        secs(started.elapsed())
    );
    let summary_path = ctx.path(TRAIN_SUMMARY_FILE);
    std::fs::write(&summary_path, &summary).map_err(|e| CliError::io(&summary_path, e))?;
    print!("{summary}");

    let mut final_prompt = match synthesis {
        Ok(p) => p,
        Err(e) => {
            ctx.write_manifest("train", &files)?;
            return Err(match e {
                OrchestratorError::Agent(metagente_pipeline::AgentError::Llm(l)) => l.into(),
                other => CliError::Synthesis(other.to_string()),
            });
        }
    };
    final_prompt
        .provenance
        .extra
        .insert("config_hash".into(), ctx.provenance.config_hash.clone());
    let (text, side) = final_prompt.write(&ctx.config.out_dir)?;
    println!("final prompt written to {}", text.display());
    files.push(text);
    files.push(side);
    ctx.write_manifest("train", &files)?;
    info!("train finished in {}", secs(started.elapsed()));
    Ok(())
}

fn generate(ctx: &Context, samples: &[RepoSample], prompt_path: Option<&PathBuf>) -> Result<(Vec<Generated>, TelemetrySnapshot), CliError> {
    let prompt = load_final_prompt(ctx, prompt_path)?;
    let client = Arc::new(ctx.client()?);
    let orch = ctx.orchestrator(client.clone())?;
    let results = orch.infer_batch(samples, &prompt);
    let mut out = Vec::with_capacity(samples.len());
    for (s, r) in samples.iter().zip(results) {
        out.push(Generated {
            sample_id: s.sample_id.clone(),
            about: r.map_err(|e| {
                let e: CliError = e.into();
                match e {
                    CliError::Transport(m) => CliError::Transport(format!("sample {}: {m}", s.sample_id)),
                    other => other,
                }
            })?,
        });
    }
    Ok((out, client.telemetry()))
}

pub fn infer(config: RunConfig, args: InferArgs) -> Result<(), CliError> {
    let ctx = Context::new(config)?;
    if let Some(readme_path) = &args.readme {
        let readme = std::fs::read_to_string(readme_path).map_err(|e| CliError::Data(format!("{}: {e}", readme_path.display())))?;
        let prompt = load_final_prompt(&ctx, args.final_prompt.as_ref())?;
        let orch = ctx.orchestrator(Arc::new(ctx.client()?))?;
        println!("{}", orch.infer(&readme, &prompt)?);
        return Ok(());
    }
    let input = args.input.as_ref().expect("clap requires one target");
    let samples = load_samples(input, "pass an existing JSONL file to --input")?;
    let started = Instant::now();
    let (generated, telemetry) = generate(&ctx, &samples, args.final_prompt.as_ref())?;
    let path = ctx.path(GENERATED_FILE);
    write_generated(&path, &generated)?;
    ctx.write_manifest("infer", std::slice::from_ref(&path))?;
    println!("wrote {} generations to {}", generated.len(), path.display());
    print!("{}", telemetry_lines(&telemetry));
    println!("wall time: inference {}", secs(started.elapsed()));
    Ok(())
}

pub fn eval(config: RunConfig, args: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let ctx = Context::new(config)?;
    let test_path = args.test.clone().unwrap_or_else(|| ctx.path(TEST_FILE));
    let samples = load_samples(&test_path, "run `split` first or pass --test")?;
    let mut files = Vec::new();
    let generated = match &args.generated {
        Some(path) => read_generated(path)?,
        None => {
            let (generated, telemetry) = generate(&ctx, &samples, args.final_prompt.as_ref())?;
            let path = ctx.path(GENERATED_FILE);
            write_generated(&path, &generated)?;
            files.push(path);
            print!("{}", telemetry_lines(&telemetry));
            generated
        }
    };
    let inference_time = started.elapsed();
    let pairs: Vec<(String, String)> = generated.into_iter().map(|g| (g.sample_id, g.about)).collect();
    let references: Vec<(String, String)> = samples.iter().map(|s| (s.sample_id.clone(), s.about.clone())).collect();
    let mut table = ScoreTable::new();
    table.extend(score_system(&pairs, &references, &args.system)?)?;
    for b in &args.baseline {
        let baseline = ScoreTable::read_csv_file(b)?;
        table.extend(baseline.rows().iter().cloned())?;
    }
    let mut report = build_report(table, Some(&args.system))?;
    report.provenance = ctx.provenance.flat();
    report.provenance.insert("system".into(), args.system.clone());
    let emitted = emit_report(&report, &ctx.config.out_dir, REPORT_STEM)?;
    files.push(emitted.json.clone());
    files.push(emitted.csv.clone());
    ctx.write_manifest("eval", &files)?;
    print_report(&report, &mut std::io::stdout()).map_err(|e| CliError::Io(e.to_string()))?;
    println!("report written to {}", emitted.json.display());
    println!(
        "wall time: inference {}, scoring {}",
        secs(inference_time),
        secs(started.elapsed() - inference_time)
    );
    Ok(())
}

pub fn report(config: RunConfig, args: ReportArgs) -> Result<(), CliError> {
    let path = args.report.clone().unwrap_or_else(|| config.out_path(&format!("{REPORT_STEM}.json")));
    if !path.is_file() {
        return Err(CliError::Data(format!("{} not found; run `eval` first or pass --report", path.display())));
    }
    let report = read_report(&path)?;
    print_report(&report, &mut std::io::stdout()).map_err(|e| CliError::Io(e.to_string()))
}

/// Averages in `metric: Average a, b, ...` form (systems in table order),
/// then gains and significance tests.
pub fn print_report(report: &EvalReport, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "systems: {} (n = {})", report.systems.join(", "), report.n)?;
    for metric in Metric::ALL {
        writeln!(out, "{}", report.averages_line(metric))?;
    }
    for g in &report.gains {
        writeln!(out, "gain {} over {} on {}: {:.2}%", g.system_a, g.system_b, g.metric, g.percent)?;
    }
    for w in &report.wilcoxon {
        match &w.outcome {
            WilcoxonOutcome::Tested(r) => writeln!(
                out,
                "wilcoxon {} vs {} on {}: n = {}, W+ = {}, W- = {}, p = {:.3e} (log10 p = {:.2})",
                w.system_a, w.system_b, w.metric, r.n, r.w_plus, r.w_minus, r.p_value, r.log10_p
            )?,
            WilcoxonOutcome::Degenerate { reason } => {
                writeln!(out, "wilcoxon {} vs {} on {}: not tested ({reason})", w.system_a, w.system_b, w.metric)?
            }
        }
    }
    Ok(())
}
