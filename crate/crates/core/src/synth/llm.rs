use std::time::Duration;

use serde_json::json;

use super::SynthError;

/// System prompt for the LLM combiner.
pub const COMBINE_SYSTEM_PROMPT: &str = "\
You rewrite user requests for an image and video generation assistant.
You receive an instruction and a template sentence that states an extra requirement.
Combine them into one natural request, as a user would type it.
Rules:
- Keep every number, ratio, and quoted term from the template exactly as written.
- Keep every marker of the form <PAD:n> exactly once and do not invent new ones.
- Do not add requirements that are not in the instruction or the template.
- Reply with the combined request only, with no explanation.";

/// A chat model that merges one template into one instruction.
pub trait LlmClient: Send + Sync {
    fn combine(&self, system: &str, base: &str, template: &str) -> Result<String, SynthError>;
}

/// Offline stand-in: appends the template to the base.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoLlm;

impl LlmClient for EchoLlm {
    fn combine(&self, _system: &str, base: &str, template: &str) -> Result<String, SynthError> {
        Ok(format!("{base} {template}"))
    }
}

/// Chat-completions client configured from `UNISON_LLM_ENDPOINT` and `UNISON_LLM_KEY`.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    endpoint: String,
    key: Option<String>,
    model: String,
    retries: u32,
    agent: ureq::Agent,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), key, model: "default".into(), retries: 2, agent }
    }

    pub fn from_env() -> Result<Self, SynthError> {
        let endpoint = std::env::var("UNISON_LLM_ENDPOINT").map_err(|_| SynthError::RemoteUnavailable {
            attempts: 0,
            reason: "UNISON_LLM_ENDPOINT is not set".into(),
        })?;
        let key = std::env::var("UNISON_LLM_KEY").ok();
        Ok(Self::new(endpoint, key, Duration::from_secs(30)))
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    fn call_once(&self, body: &serde_json::Value) -> Result<String, String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: serde_json::Value = req
            .send_json(body)
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| e.to_string())?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.trim().to_string())
            .ok_or_else(|| "reply has no choices[0].message.content".to_string())
    }
}

impl LlmClient for HttpLlm {
    fn combine(&self, system: &str, base: &str, template: &str) -> Result<String, SynthError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": format!("Instruction: {base}\nTemplate: {template}")},
            ],
        });
        let mut last = String::new();
        for attempt in 1..=self.retries + 1 {
            match self.call_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "combiner request failed");
                    last = e;
                }
            }
        }
        Err(SynthError::RemoteUnavailable { attempts: self.retries + 1, reason: last })
    }
}

/// Merges `template` into `base` through `client`, rejecting replies that
/// drop any of the `required` substrings (sampled values, slot markers).
pub fn llm_combine(
    base: &str,
    template: &str,
    required: &[String],
    client: &dyn LlmClient,
) -> Result<String, SynthError> {
    let merged = client.combine(COMBINE_SYSTEM_PROMPT, base, template)?;
    for value in required.iter().chain(base_markers(base).iter()) {
        if !merged.contains(value.as_str()) {
            return Err(SynthError::MalformedRemoteReply { missing: value.clone() });
        }
    }
    Ok(merged)
}

fn base_markers(base: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = base;
    while let Some(start) = rest.find("<PAD:") {
        let Some(len) = rest[start..].find('>') else { break };
        out.push(rest[start..start + len + 1].to_string());
        rest = &rest[start + len + 1..];
    }
    out
}
