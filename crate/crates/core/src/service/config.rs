use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grammar::Resolution;
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum PlannerSelection {
    Rule,
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// One entry of the backend registry, in registration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// All generation tasks when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<BTreeSet<TaskKind>>,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl BackendSpec {
    pub fn mock(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            capabilities: None,
            latency_ms: 0,
            timeout_ms: default_timeout_ms(),
        }
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_backends() -> Vec<BackendSpec> {
    vec![BackendSpec::mock("mock")]
}

fn default_planner() -> PlannerSelection {
    PlannerSelection::Rule
}

fn default_max_resolution() -> Resolution {
    Resolution::new(4096, 4096)
}

/// Everything the service reads at startup. Missing file paths fall back to
/// the data shipped with the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub presets: Option<PathBuf>,
    #[serde(default)]
    pub template_bank: Option<PathBuf>,
    #[serde(default = "default_planner")]
    pub planner: PlannerSelection,
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub projector_ckpt: Option<PathBuf>,
    /// Append-only JSONL job log.
    #[serde(default)]
    pub log: Option<PathBuf>,
    #[serde(default = "default_max_resolution")]
    pub max_resolution: Resolution,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `UNISON_LISTEN` and `UNISON_PRESETS` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(listen) = std::env::var("UNISON_LISTEN") {
            self.listen = listen;
        }
        if let Ok(presets) = std::env::var("UNISON_PRESETS") {
            self.presets = Some(presets.into());
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let c = ServiceConfig::default();
        assert_eq!(c.planner, PlannerSelection::Rule);
        assert_eq!(c.backends, vec![BackendSpec::mock("mock")]);
        let c: ServiceConfig = serde_json::from_str(
            r#"{"planner":{"backend":"remote","endpoint":"http://x"},
                "backends":[{"name":"a","kind":"mock","capabilities":["TextToImage"],"latency_ms":5}]}"#,
        )
        .unwrap();
        assert_eq!(c.planner, PlannerSelection::Remote { endpoint: "http://x".into(), timeout_ms: 30_000 });
        assert_eq!(c.backends[0].capabilities.as_ref().unwrap().len(), 1);
        assert!(serde_json::from_str::<ServiceConfig>(r#"{"lisen":"x"}"#).is_err());
    }
}
