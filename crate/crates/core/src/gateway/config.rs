use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

use super::{
    Backend, Gateway, GatewayLimits, OpenAiChatBackend, ScriptedBackend, StubScript, TemplateSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat completions over HTTP.
    OpenaiChat,
    /// The deterministic scripted stub.
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    pub retry_budget: u32,
    pub backoff_ms: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Stub script file (stub backends only).
    pub script: Option<PathBuf>,
    /// Template override directory.
    pub templates: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint: None,
            model: None,
            auth_env: None,
            timeout_secs: 60,
            max_concurrency: 4,
            retry_budget: 3,
            backoff_ms: 500,
            temperature: 0.0,
            max_output_tokens: 512,
            script: None,
            templates: None,
        }
    }
}

impl BackendConfig {
    pub fn stub() -> Self {
        Self {
            backoff_ms: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_concurrency == 0 {
            return Err(GatewayError::Config("max_concurrency must be at least 1".into()));
        }
        if self.kind == BackendKind::OpenaiChat {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(GatewayError::Config("openai_chat backend needs an endpoint".into()));
            }
            if self.model.as_deref().is_none_or(str::is_empty) {
                return Err(GatewayError::Config("openai_chat backend needs a model".into()));
            }
        }
        Ok(())
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Builds a gateway. Relative paths resolve against `base_dir`.
    /// Returns the stub handle too when the backend is a stub.
    pub fn build(&self, base_dir: &Path) -> Result<(Gateway, Option<Arc<ScriptedBackend>>), GatewayError> {
        self.validate()?;
        let templates = match &self.templates {
            Some(dir) => TemplateSet::load_dir(&Self::resolve(base_dir, dir))?,
            None => TemplateSet::builtin(),
        };
        let limits = GatewayLimits {
            max_concurrency: self.max_concurrency,
            retry_budget: self.retry_budget,
            backoff_base: Duration::from_millis(self.backoff_ms),
            default_max_output_tokens: self.max_output_tokens,
        };
        match self.kind {
            BackendKind::Stub => {
                let script = match &self.script {
                    Some(p) => StubScript::load(&Self::resolve(base_dir, p))?,
                    None => StubScript::default(),
                };
                let stub = Arc::new(ScriptedBackend::from_script(script));
                let gw = Gateway::new(stub.clone(), templates, limits)?;
                Ok((gw, Some(stub)))
            }
            BackendKind::OpenaiChat => {
                let api_key = match &self.auth_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        GatewayError::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let backend: Arc<dyn Backend> = Arc::new(
                    OpenAiChatBackend::new(
                        self.endpoint.clone().unwrap_or_default(),
                        self.model.clone().unwrap_or_default(),
                        api_key,
                        Duration::from_secs(self.timeout_secs),
                        self.temperature,
                    )
                    .map_err(|e| GatewayError::Config(e.to_string()))?,
                );
                Ok((Gateway::new(backend, templates, limits)?, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_with_defaults() {
        let cfg: BackendConfig = toml::from_str(
            r#"
            kind = "openai_chat"
            endpoint = "http://localhost:8080/v1/chat/completions"
            model = "small-vlm"
            auth_env = "INTENTKIT_TEST_KEY"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.max_concurrency, 4);
        assert_eq!(cfg.temperature, 0.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = BackendConfig {
            max_concurrency: 0,
            ..BackendConfig::stub()
        };
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig {
            kind: BackendKind::OpenaiChat,
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<BackendConfig>("kind = \"stub\"\nbogus = 1").is_err());
    }

    #[test]
    fn missing_auth_variable_is_a_config_error() {
        let cfg = BackendConfig {
            kind: BackendKind::OpenaiChat,
            endpoint: Some("http://127.0.0.1:9".into()),
            model: Some("m".into()),
            auth_env: Some("INTENTKIT_DEFINITELY_UNSET_VAR".into()),
            ..BackendConfig::default()
        };
        assert!(matches!(cfg.build(Path::new(".")), Err(GatewayError::Config(_))));
    }
}
