//! Request handling shared by the HTTP service and the CLI.
//!
//! A [`Runtime`] is built once from a [`ServiceConfig`] and never changes
//! afterwards except for its job table. `/healthz` echoes a digest of the
//! loaded configuration so callers can tell which snapshot answered.

mod config;
mod http;

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{BackendKind, BackendSpec, PlannerSelection, ServiceConfig};
pub use http::{router, serve, serve_on};

use crate::error::Error;
use crate::grammar::{self, EditRoles, FrameCount, FrameIndex, Resolution};
use crate::meta::PresetTable;
use crate::planner::{
    canonicalize, Attachment, AttachmentKind, InputManifest, PlanMode, PlannerBackend, RemotePlanner,
    RuleBasedPlanner,
};
use crate::projector::{load_checkpoint, ProjectorConfig, ProjectorParams};
use crate::router::{
    build_job, dispatch, BackendClient, BackendRegistry, GenerationJob, HttpBackend, JobHandle, JobId,
    JobStatus, MockBackend, RouteError, RouteLimits, TaskKind,
};
use crate::synth::TemplateBank;

pub const PASSTHROUGH_NOTICE: &str =
    "understanding requests are echoed back; answering them needs a stage-one model behind the remote planner";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentInput {
    pub kind: AttachmentKind,
    #[serde(default)]
    pub uri: String,
}

/// Body of `/v1/plan` and `/v1/route`. Attachment ids follow list order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub instruction: String,
    #[serde(default)]
    pub attachments: Vec<AttachmentInput>,
}

impl PlanRequest {
    pub fn new(instruction: impl Into<String>, kinds: &[AttachmentKind]) -> Self {
        let attachments = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| AttachmentInput { kind: *k, uri: format!("attachment://{}", i + 1) })
            .collect();
        Self { instruction: instruction.into(), attachments }
    }

    fn attachments(&self) -> Vec<Attachment> {
        self.attachments
            .iter()
            .enumerate()
            .map(|(i, a)| Attachment { id: i as u32 + 1, kind: a.kind, uri: a.uri.clone() })
            .collect()
    }
}

/// Job parameters as they would be sent to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFields {
    pub prompt: String,
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FrameCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<FrameIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_roles: Option<EditRoles>,
}

impl From<&GenerationJob> for JobFields {
    fn from(job: &GenerationJob) -> Self {
        Self {
            prompt: job.prompt.clone(),
            resolution: job.resolution,
            frames: job.frames,
            frame_index: job.frame_index,
            edit_roles: job.edit_roles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBody {
    pub raw: String,
    pub task_kind: TaskKind,
    pub job: JobFields,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub mode: PlanMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanBody>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub mode: PlanMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<JobId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<JobStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<GenerationJob>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub config_digest: String,
    pub planner: String,
    pub backends: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector: Option<ProjectorConfig>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    timestamp_ms: u128,
    job_id: JobId,
    task: TaskKind,
    backend: &'a str,
    status: &'a JobStatus,
}

struct JobEntry {
    handle: JobHandle,
    task: TaskKind,
    status: JobStatus,
}

pub struct Runtime {
    config: ServiceConfig,
    presets: PresetTable,
    bank: TemplateBank,
    planner: Box<dyn PlannerBackend>,
    registry: BackendRegistry,
    limits: RouteLimits,
    projector: Option<ProjectorParams>,
    jobs: Mutex<HashMap<JobId, JobEntry>>,
    log: Option<Mutex<File>>,
    digest: String,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("planner", &self.planner.name())
            .field("registry", &self.registry)
            .field("digest", &self.digest)
            .finish_non_exhaustive()
    }
}

fn build_registry(specs: &[BackendSpec]) -> Result<BackendRegistry, Error> {
    let mut registry = BackendRegistry::new();
    for spec in specs {
        let caps = spec.capabilities.clone();
        let backend: Arc<dyn BackendClient> = match spec.kind {
            BackendKind::Mock => {
                let mock = match caps {
                    Some(caps) => MockBackend::with_capabilities(spec.name.clone(), caps),
                    None => MockBackend::new(spec.name.clone()),
                };
                Arc::new(mock.with_latency(Duration::from_millis(spec.latency_ms)))
            }
            BackendKind::Http => {
                let endpoint = spec
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Config(format!("backend {} needs an endpoint", spec.name)))?;
                let caps = caps.unwrap_or_else(|| TaskKind::ALL.into_iter().filter(|t| t.is_generation()).collect());
                Arc::new(HttpBackend::new(spec.name.clone(), endpoint, caps, Duration::from_millis(spec.timeout_ms)))
            }
        };
        if registry.get(backend.name()).is_some() {
            return Err(Error::Config(format!("duplicate backend name {}", spec.name)));
        }
        registry.register(backend);
    }
    Ok(registry)
}

fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl Runtime {
    /// Loads and validates everything the config points at; fails fast.
    pub fn from_config(config: ServiceConfig) -> Result<Self, Error> {
        let registry = build_registry(&config.backends)?;
        Self::with_registry(config, registry)
    }

    /// Like [`from_config`](Self::from_config) but with a caller-built registry;
    /// `config.backends` is ignored.
    pub fn with_registry(config: ServiceConfig, registry: BackendRegistry) -> Result<Self, Error> {
        let mut digest = Sha256::new();
        digest.update(serde_json::to_vec(&config).expect("config serializes"));
        let presets = match &config.presets {
            Some(path) => {
                let text = read_file(path)?;
                digest.update(text.as_bytes());
                PresetTable::from_json(&text)?
            }
            None => PresetTable::default(),
        };
        let bank = match &config.template_bank {
            Some(path) => {
                let text = read_file(path)?;
                digest.update(text.as_bytes());
                TemplateBank::from_json(&text)?
            }
            None => TemplateBank::default(),
        };
        let projector = match &config.projector_ckpt {
            Some(path) => {
                digest.update(read_file(path)?.as_bytes());
                Some(load_checkpoint(path)?)
            }
            None => None,
        };
        let planner: Box<dyn PlannerBackend> = match &config.planner {
            PlannerSelection::Rule => Box::new(RuleBasedPlanner::new(bank.lexicon().clone(), presets.clone())),
            PlannerSelection::Remote { endpoint, timeout_ms } => {
                Box::new(RemotePlanner::new(endpoint.clone(), Duration::from_millis(*timeout_ms)))
            }
        };
        let log = match &config.log {
            Some(path) => Some(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            )),
            None => None,
        };
        let limits = RouteLimits { max_resolution: config.max_resolution };
        Ok(Self {
            config,
            presets,
            bank,
            planner,
            registry,
            limits,
            projector,
            jobs: Mutex::new(HashMap::new()),
            log,
            digest: hex::encode(digest.finalize()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn presets(&self) -> &PresetTable {
        &self.presets
    }

    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }

    pub fn planner(&self) -> &dyn PlannerBackend {
        self.planner.as_ref()
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    pub fn projector(&self) -> Option<&ProjectorParams> {
        self.projector.as_ref()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            config_digest: self.digest.clone(),
            planner: self.planner.name().to_string(),
            backends: self.registry.backends().iter().map(|b| b.name().to_string()).collect(),
            projector: self.projector.as_ref().map(|p| p.config),
        }
    }

    fn plan_inner(&self, request: &PlanRequest) -> Result<(PlanResponse, Option<(GenerationJob, InputManifest)>), Error> {
        let canonical = canonicalize(&request.instruction, &request.attachments())?;
        let output = self.planner.plan(&canonical)?;
        let mut warnings = output.warnings;
        if output.mode == PlanMode::Understanding {
            if self.planner.name() == "rule" {
                warnings.push(PASSTHROUGH_NOTICE.into());
            }
            let response = PlanResponse { mode: PlanMode::Understanding, answer: Some(output.raw), plan: None, warnings };
            return Ok((response, None));
        }
        let parsed = grammar::parse(&output.raw)?;
        let job = build_job(&parsed, &canonical.manifest, &self.presets, &self.limits)?;
        let body = PlanBody { raw: output.raw, task_kind: job.task, job: JobFields::from(&job) };
        let response = PlanResponse { mode: PlanMode::Generation, answer: None, plan: Some(body), warnings };
        Ok((response, Some((job, canonical.manifest))))
    }

    /// Plans a request without contacting any backend.
    pub fn plan(&self, request: &PlanRequest) -> Result<PlanResponse, Error> {
        self.plan_inner(request).map(|(r, _)| r)
    }

    /// Plans, validates and dispatches. Understanding requests never reach a backend.
    pub fn route(&self, request: &PlanRequest) -> Result<RouteResponse, Error> {
        let (plan, job) = self.plan_inner(request)?;
        let Some((job, _)) = job else {
            return Ok(RouteResponse {
                mode: plan.mode,
                answer: plan.answer,
                job_id: None,
                backend: None,
                status: None,
                job: None,
                warnings: plan.warnings,
            });
        };
        let handle = dispatch(&job, &self.registry)?;
        let status = self.registry.poll(&handle)?;
        self.log_status(&handle, job.task, &status);
        self.jobs.lock().expect("job table lock").insert(
            job.job_id,
            JobEntry { handle: handle.clone(), task: job.task, status: status.clone() },
        );
        Ok(RouteResponse {
            mode: PlanMode::Generation,
            answer: None,
            job_id: Some(job.job_id),
            backend: Some(handle.backend),
            status: Some(status),
            job: Some(job),
            warnings: plan.warnings,
        })
    }

    /// Polls the owning backend and records any state change in the job log.
    pub fn job_status(&self, id: &JobId) -> Result<JobStatus, Error> {
        let (handle, task, previous) = {
            let jobs = self.jobs.lock().expect("job table lock");
            let entry = jobs.get(id).ok_or_else(|| RouteError::UnknownJob(id.to_string()))?;
            if entry.status.is_terminal() {
                return Ok(entry.status.clone());
            }
            (entry.handle.clone(), entry.task, entry.status.clone())
        };
        let status = self.registry.poll(&handle)?;
        if status != previous {
            let mut jobs = self.jobs.lock().expect("job table lock");
            if let Some(entry) = jobs.get_mut(id) {
                // another poller may have recorded this transition already
                if entry.status != status && !entry.status.is_terminal() {
                    entry.status = status.clone();
                    drop(jobs);
                    self.log_status(&handle, task, &status);
                }
            }
        }
        Ok(status)
    }

    /// Polls until the job is done or failed, or `timeout` passes.
    pub fn wait(&self, id: &JobId, timeout: Duration) -> Result<JobStatus, Error> {
        let start = Instant::now();
        loop {
            let status = self.job_status(id)?;
            if status.is_terminal() || start.elapsed() >= timeout {
                return Ok(status);
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    fn log_status(&self, handle: &JobHandle, task: TaskKind, status: &JobStatus) {
        let Some(log) = &self.log else { return };
        let line = LogLine {
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
            job_id: handle.job_id,
            task,
            backend: &handle.backend,
            status,
        };
        let mut text = serde_json::to_string(&line).expect("log line serializes");
        text.push('\n');
        let mut file = log.lock().expect("job log lock");
        if let Err(e) = file.write_all(text.as_bytes()) {
            tracing::error!(error = %e, "job log write failed");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runtime_with(mock: Arc<MockBackend>) -> Runtime {
        let mut reg = BackendRegistry::new();
        reg.register(mock);
        Runtime::with_registry(ServiceConfig::default(), reg).unwrap()
    }

    #[test]
    fn understanding_never_reaches_backend() {
        let mock = Arc::new(MockBackend::new("mock"));
        let rt = runtime_with(mock.clone());
        let r = rt.route(&PlanRequest::new("what is 2+2", &[])).unwrap();
        assert_eq!(r.mode, PlanMode::Understanding);
        assert_eq!(r.answer.as_deref(), Some("what is 2+2"));
        assert!(r.job_id.is_none());
        let r = rt.route(&PlanRequest::new("Describe this image", &[AttachmentKind::Image])).unwrap();
        assert_eq!(r.mode, PlanMode::Understanding);
        assert_eq!(mock.submit_count(), 0);
    }

    #[test]
    fn route_then_poll() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("jobs.jsonl");
        let mock = Arc::new(MockBackend::new("mock").with_latency(Duration::from_millis(30)));
        let mut reg = BackendRegistry::new();
        reg.register(mock.clone());
        let config = ServiceConfig { log: Some(log.clone()), ..ServiceConfig::default() };
        let rt = Runtime::with_registry(config, reg).unwrap();
        let r = rt.route(&PlanRequest::new("make a 1080P picture of a fox", &[])).unwrap();
        assert_eq!(r.status, Some(JobStatus::Running));
        let id = r.job_id.unwrap();
        let done = rt.wait(&id, Duration::from_secs(5)).unwrap();
        assert!(matches!(done, JobStatus::Done { .. }));
        assert_eq!(mock.submit_count(), 1);

        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["status"]["state"], "running");
        assert_eq!(lines[1]["status"]["state"], "done");
        assert_eq!(lines[1]["job_id"], id.to_string());
        assert_eq!(lines[1]["task"], "TextToImage");

        let err = rt.job_status(&JobId::new()).unwrap_err();
        assert_eq!(err.code(), "UnknownJob");
    }

    #[test]
    fn startup_fails_fast() {
        let config = ServiceConfig { presets: Some("/nonexistent/presets.json".into()), ..ServiceConfig::default() };
        assert_eq!(Runtime::from_config(config).unwrap_err().code(), "InvalidConfig");
        let mut spec = BackendSpec::mock("a");
        spec.kind = BackendKind::Http;
        let config = ServiceConfig { backends: vec![spec], ..ServiceConfig::default() };
        assert_eq!(Runtime::from_config(config).unwrap_err().code(), "InvalidConfig");
        let config = ServiceConfig { backends: vec![BackendSpec::mock("a"), BackendSpec::mock("a")], ..ServiceConfig::default() };
        assert!(Runtime::from_config(config).is_err());
    }

    #[test]
    fn digest_tracks_config() {
        let a = Runtime::from_config(ServiceConfig::default()).unwrap();
        let b = Runtime::from_config(ServiceConfig::default()).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = Runtime::from_config(ServiceConfig { listen: "0.0.0.0:1".into(), ..ServiceConfig::default() }).unwrap();
        assert_ne!(a.digest(), c.digest());
    }
}
