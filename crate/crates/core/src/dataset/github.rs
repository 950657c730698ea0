use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;

use super::{DatasetError, RepoSample, SampleSource};

pub const GITHUB_TOKEN_ENV: &str = "METAGENTE_GITHUB_TOKEN";

#[derive(Debug, Clone)]
pub struct GithubConfig {
    pub base_url: String,
    pub token: String,
    pub concurrency: usize,
    /// Longest sleep accepted while waiting for a rate-limit reset.
    pub max_rate_limit_wait: Duration,
    pub timeout: Duration,
}

impl GithubConfig {
    pub fn new(token: impl Into<String>) -> Self {
        GithubConfig {
            base_url: "https://api.github.com".into(),
            token: token.into(),
            concurrency: 4,
            max_rate_limit_wait: Duration::from_secs(900),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn from_env() -> Result<Self, DatasetError> {
        match std::env::var(GITHUB_TOKEN_ENV) {
            Ok(t) if !t.trim().is_empty() => Ok(Self::new(t)),
            _ => Err(DatasetError::AuthFailure(format!("{GITHUB_TOKEN_ENV} is not set"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRepo {
    pub repo: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FetchOutcome {
    pub samples: Vec<RepoSample>,
    pub skipped: Vec<SkippedRepo>,
}

#[derive(Deserialize)]
struct RepoMeta {
    description: Option<String>,
}

enum RepoResult {
    Sample(RepoSample),
    Skipped(String),
}

/// Fetches README and description for every `owner/name` in `repos`.
/// Repositories without a README or with a blank description are skipped
/// and logged; an authentication failure aborts the batch.
pub fn fetch_github(repos: &[String], config: &GithubConfig) -> Result<FetchOutcome, DatasetError> {
    if repos.is_empty() {
        return Err(DatasetError::InvalidArgument("empty repository list".into()));
    }
    if config.token.trim().is_empty() {
        return Err(DatasetError::AuthFailure("no token configured".into()));
    }
    let client = Client::builder()
        .timeout(config.timeout)
        .user_agent("metagente-ingest")
        .build()
        .map_err(|e| DatasetError::Github(e.to_string()))?;

    let results: Vec<Mutex<Option<Result<RepoResult, DatasetError>>>> =
        repos.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.concurrency.max(1).min(repos.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= repos.len() {
                    break;
                }
                let r = fetch_one(&client, config, &repos[i]);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut outcome = FetchOutcome::default();
    for (repo, slot) in repos.iter().zip(results) {
        match slot.into_inner().unwrap().expect("every repo processed")? {
            RepoResult::Sample(s) => outcome.samples.push(s),
            RepoResult::Skipped(reason) => {
                warn!("skipping {repo}: {reason}");
                outcome.skipped.push(SkippedRepo {
                    repo: repo.clone(),
                    reason,
                });
            }
        }
    }
    info!(
        "fetched {} samples, skipped {}",
        outcome.samples.len(),
        outcome.skipped.len()
    );
    Ok(outcome)
}

fn fetch_one(client: &Client, config: &GithubConfig, repo: &str) -> Result<RepoResult, DatasetError> {
    if repo.split('/').filter(|p| !p.is_empty()).count() != 2 {
        return Ok(RepoResult::Skipped("malformed repository name".into()));
    }
    let base = config.base_url.trim_end_matches('/');
    let meta = get(client, config, &format!("{base}/repos/{repo}"), "application/vnd.github+json")?;
    let meta = match meta {
        None => return Ok(RepoResult::Skipped("not found".into())),
        Some(r) => r
            .json::<RepoMeta>()
            .map_err(|e| DatasetError::Github(format!("{repo}: {e}")))?,
    };
    let about = meta.description.unwrap_or_default();
    if about.trim().is_empty() {
        return Ok(RepoResult::Skipped("empty about".into()));
    }
    let readme = match get(client, config, &format!("{base}/repos/{repo}/readme"), "application/vnd.github.raw")? {
        None => return Ok(RepoResult::Skipped("missing readme".into())),
        Some(r) => r.text().map_err(|e| DatasetError::Github(format!("{repo}: {e}")))?,
    };
    let sample = RepoSample {
        sample_id: repo.to_string(),
        readme,
        about,
        source: SampleSource::GithubApi,
        readme_truncated: false,
    };
    match sample.normalized(0) {
        Ok(s) => Ok(RepoResult::Sample(s)),
        Err(DatasetError::EmptyField { field, .. }) => Ok(RepoResult::Skipped(format!("empty {field}"))),
        Err(e) => Err(e),
    }
}

/// GET with rate-limit handling. `Ok(None)` means 404.
fn get(client: &Client, config: &GithubConfig, url: &str, accept: &str) -> Result<Option<Response>, DatasetError> {
    const MAX_RATE_LIMIT_RETRIES: usize = 3;
    for _ in 0..=MAX_RATE_LIMIT_RETRIES {
        let resp = client
            .get(url)
            .header("Accept", accept)
            .header("Authorization", format!("Bearer {}", config.token))
            .header("X-GitHub-Api-Version", "2022-11-28")
            .send()
            .map_err(|e| DatasetError::Github(format!("{url}: {e}")))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(Some(resp));
        }
        if status == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        if let Some(wait) = rate_limit_wait(&resp) {
            if wait > config.max_rate_limit_wait {
                return Err(DatasetError::Github(format!(
                    "rate limited; reset in {}s exceeds the configured wait",
                    wait.as_secs()
                )));
            }
            warn!("rate limited, sleeping {}s", wait.as_secs());
            std::thread::sleep(wait);
            continue;
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(DatasetError::AuthFailure(format!("{url}: HTTP {status}")));
        }
        return Err(DatasetError::Github(format!("{url}: HTTP {status}")));
    }
    Err(DatasetError::Github(format!("{url}: still rate limited")))
}

fn rate_limit_wait(resp: &Response) -> Option<Duration> {
    let status = resp.status();
    if status != StatusCode::FORBIDDEN && status != StatusCode::TOO_MANY_REQUESTS {
        return None;
    }
    let header = |name: &str| {
        resp.headers()
            .get(name)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
    };
    if let Some(secs) = header("retry-after") {
        return Some(Duration::from_secs(secs));
    }
    if header("x-ratelimit-remaining") == Some(0) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).ok()?.as_secs();
        let reset = header("x-ratelimit-reset")?;
        return Some(Duration::from_secs(reset.saturating_sub(now) + 1));
    }
    if status == StatusCode::TOO_MANY_REQUESTS {
        return Some(Duration::from_secs(60));
    }
    None
}
