use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    classify_mode, Attachment, CanonicalRequest, PlanError, PlanMode, PlannerBackend,
    PlannerOutput,
};
use crate::grammar;

/// Stage-one model served over HTTP.
///
/// Sends `{"instruction", "attachments"}` (the canonical text with pad
/// markers) and expects `{"raw": "<stage-one output>"}` back. Each call is
/// independent; no session state is kept between requests.
#[derive(Debug, Clone)]
pub struct RemotePlanner {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    instruction: &'a str,
    attachments: &'a [Attachment],
}

#[derive(Deserialize)]
struct RemoteReply {
    raw: String,
}

impl RemotePlanner {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), agent }
    }
}

impl PlannerBackend for RemotePlanner {
    fn name(&self) -> &str {
        "remote"
    }

    fn plan(&self, request: &CanonicalRequest) -> Result<PlannerOutput, PlanError> {
        let body = RemoteRequest {
            instruction: &request.text,
            attachments: &request.manifest.attachments,
        };
        let reply: RemoteReply = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| PlanError::RemoteUnavailable(format!("{}: {e}", self.endpoint)))?;
        let mode = classify_mode(&reply.raw)?;
        let mut warnings = Vec::new();
        if mode == PlanMode::Understanding && !grammar::parse(&reply.raw)?.tokens.is_empty() {
            warnings.push("signal tokens without <CFI>/<CFV>; treated as understanding".into());
        }
        Ok(PlannerOutput { raw: reply.raw, mode, warnings })
    }
}
