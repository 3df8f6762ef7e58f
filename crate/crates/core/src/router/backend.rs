use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenerationJob, JobId, RouteError, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHandle {
    pub job_id: JobId,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done { artifact: String },
    Failed { reason: String },
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Done { .. } | JobStatus::Failed { .. })
    }

    pub fn state(&self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running => "running",
            JobStatus::Done { .. } => "done",
            JobStatus::Failed { .. } => "failed",
        }
    }
}

pub type BackendError = RouteError;

/// A stage-two generation service.
pub trait BackendClient: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> &BTreeSet<TaskKind>;
    /// Must reject jobs whose task is outside [`capabilities`](Self::capabilities).
    fn submit(&self, job: &GenerationJob) -> Result<JobHandle, RouteError>;
    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, RouteError>;

    fn supports(&self, task: TaskKind) -> bool {
        self.capabilities().contains(&task)
    }
}

fn all_generation_tasks() -> BTreeSet<TaskKind> {
    TaskKind::ALL.into_iter().filter(|t| t.is_generation()).collect()
}

/// In-process backend that "renders" a content-addressed locator.
///
/// Jobs report `Running` until `latency` has elapsed since submission, then
/// `Done`. The artifact name hashes the job with its id removed, so equal
/// requests map to equal artifacts.
pub struct MockBackend {
    name: String,
    capabilities: BTreeSet<TaskKind>,
    latency: Duration,
    jobs: Mutex<HashMap<JobId, (Instant, String)>>,
    submits: AtomicUsize,
}

impl MockBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self::with_capabilities(name, all_generation_tasks())
    }

    pub fn with_capabilities(name: impl Into<String>, capabilities: BTreeSet<TaskKind>) -> Self {
        Self {
            name: name.into(),
            capabilities,
            latency: Duration::ZERO,
            jobs: Mutex::new(HashMap::new()),
            submits: AtomicUsize::new(0),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn submit_count(&self) -> usize {
        self.submits.load(Ordering::SeqCst)
    }

    pub fn artifact_for(job: &GenerationJob) -> String {
        let mut value = serde_json::to_value(job).expect("jobs serialize");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("job_id");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        let ext = if job.task.is_video() { "mp4" } else { "png" };
        format!("mock://artifacts/{}.{ext}", hex::encode(digest))
    }
}

impl BackendClient for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &BTreeSet<TaskKind> {
        &self.capabilities
    }

    fn submit(&self, job: &GenerationJob) -> Result<JobHandle, RouteError> {
        if !self.supports(job.task) {
            return Err(RouteError::BackendRejected {
                backend: self.name.clone(),
                reason: format!("{} is not supported", job.task),
            });
        }
        self.submits.fetch_add(1, Ordering::SeqCst);
        let artifact = Self::artifact_for(job);
        self.jobs.lock().expect("job table").insert(job.job_id, (Instant::now(), artifact));
        Ok(JobHandle { job_id: job.job_id, backend: self.name.clone() })
    }

    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, RouteError> {
        let jobs = self.jobs.lock().expect("job table");
        let (started, artifact) = jobs
            .get(&handle.job_id)
            .ok_or_else(|| RouteError::UnknownJob(handle.job_id.to_string()))?;
        if started.elapsed() < self.latency {
            Ok(JobStatus::Running)
        } else {
            Ok(JobStatus::Done { artifact: artifact.clone() })
        }
    }
}

/// Remote backend speaking `POST {endpoint}/jobs` and `GET {endpoint}/jobs/{id}`.
pub struct HttpBackend {
    name: String,
    endpoint: String,
    capabilities: BTreeSet<TaskKind>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        capabilities: BTreeSet<TaskKind>,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let endpoint: String = endpoint.into();
        Self {
            name: name.into(),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            capabilities,
            agent,
        }
    }

    fn unavailable(&self, e: impl std::fmt::Display) -> RouteError {
        RouteError::BackendUnavailable { backend: self.name.clone(), reason: e.to_string() }
    }
}

impl BackendClient for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &BTreeSet<TaskKind> {
        &self.capabilities
    }

    fn submit(&self, job: &GenerationJob) -> Result<JobHandle, RouteError> {
        if !self.supports(job.task) {
            return Err(RouteError::BackendRejected {
                backend: self.name.clone(),
                reason: format!("{} is not supported", job.task),
            });
        }
        let url = format!("{}/jobs", self.endpoint);
        match self.agent.post(&url).send_json(job) {
            Ok(_) => Ok(JobHandle { job_id: job.job_id, backend: self.name.clone() }),
            Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
                Err(RouteError::BackendRejected {
                    backend: self.name.clone(),
                    reason: format!("HTTP {code}"),
                })
            }
            Err(e) => Err(self.unavailable(e)),
        }
    }

    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, RouteError> {
        let url = format!("{}/jobs/{}", self.endpoint, handle.job_id);
        match self.agent.get(&url).call() {
            Ok(mut r) => r.body_mut().read_json().map_err(|e| self.unavailable(e)),
            Err(ureq::Error::StatusCode(404)) => Err(RouteError::UnknownJob(handle.job_id.to_string())),
            Err(e) => Err(self.unavailable(e)),
        }
    }
}

/// Backends in registration order.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: Vec<Arc<dyn BackendClient>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, backend: Arc<dyn BackendClient>) -> &mut Self {
        self.backends.push(backend);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.backends.is_empty()
    }

    pub fn backends(&self) -> &[Arc<dyn BackendClient>] {
        &self.backends
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn BackendClient>> {
        self.backends.iter().find(|b| b.name() == name)
    }

    pub fn poll(&self, handle: &JobHandle) -> Result<JobStatus, RouteError> {
        self.get(&handle.backend)
            .ok_or_else(|| RouteError::UnknownJob(handle.job_id.to_string()))?
            .poll(handle)
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.backends.iter().map(|b| b.name())).finish()
    }
}

/// Submits to the first backend, in registration order, that supports the task.
pub fn dispatch(job: &GenerationJob, registry: &BackendRegistry) -> Result<JobHandle, RouteError> {
    let Some(backend) = registry.backends.iter().find(|b| b.supports(job.task)) else {
        tracing::warn!(job_id = %job.job_id, task = %job.task, "no capable backend");
        return Err(RouteError::NoCapableBackend(job.task));
    };
    tracing::info!(job_id = %job.job_id, task = %job.task, backend = backend.name(), "dispatch");
    backend.submit(job)
}
