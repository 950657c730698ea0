use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use super::{Backend, HttpBackend, RecordingBackend, ReplayBackend, RetryPolicy, SchemaMode, API_KEY_ENV};
use crate::cassette::CassetteWriter;
use crate::LlmError;

/// Everything a backend factory may need. Each factory reads only the
/// fields relevant to it.
#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub cassette: Option<PathBuf>,
    /// Backend that `record` wraps.
    pub record_source: String,
    pub retry: RetryPolicy,
    pub schema_mode: SchemaMode,
    pub timeout: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty()),
            cassette: None,
            record_source: "live".into(),
            retry: RetryPolicy::default(),
            schema_mode: SchemaMode::default(),
            timeout: Duration::from_secs(120),
        }
    }
}

pub type BackendFactory =
    Box<dyn Fn(&BackendConfig, &BackendRegistry) -> Result<Arc<dyn Backend>, LlmError> + Send + Sync>;

/// Named backend constructors. `with_defaults` registers `live`, `record`
/// and `replay`; callers add their own kinds with [`register`](Self::register).
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        reg.register("live", |cfg, _| {
            let key = cfg
                .api_key
                .clone()
                .ok_or_else(|| LlmError::Config(format!("live mode requires {API_KEY_ENV}")))?;
            Ok(Arc::new(HttpBackend::new(
                cfg.base_url.clone(),
                key,
                cfg.retry,
                cfg.schema_mode,
                cfg.timeout,
            )?))
        });
        reg.register("replay", |cfg, _| {
            let path = cfg
                .cassette
                .as_ref()
                .ok_or_else(|| LlmError::Config("replay mode requires a cassette path".into()))?;
            if !path.is_file() {
                return Err(LlmError::Config(format!("cassette {} does not exist", path.display())));
            }
            Ok(Arc::new(ReplayBackend::open(path)?))
        });
        reg.register("record", |cfg, reg| {
            let path = cfg
                .cassette
                .as_ref()
                .ok_or_else(|| LlmError::Config("record mode requires a cassette path".into()))?;
            if cfg.record_source == "record" {
                return Err(LlmError::Config("record mode cannot wrap itself".into()));
            }
            let inner = reg.build(&cfg.record_source, cfg)?;
            Ok(Arc::new(RecordingBackend::new(inner, CassetteWriter::open(path)?)))
        });
        reg
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        factory: impl Fn(&BackendConfig, &BackendRegistry) -> Result<Arc<dyn Backend>, LlmError> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.into(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, config: &BackendConfig) -> Result<Arc<dyn Backend>, LlmError> {
        let factory = self.factories.get(name).ok_or_else(|| {
            LlmError::Config(format!(
                "unknown backend {name:?}; registered: {}",
                self.names().join(", ")
            ))
        })?;
        factory(config, self)
    }
}
