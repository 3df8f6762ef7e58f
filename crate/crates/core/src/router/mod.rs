//! Plan-to-job routing.
//!
//! A parsed plan and its manifest map to exactly one [`TaskKind`]. The map
//! is a function: combinations outside the task table (an image requested
//! from a video, `<CFI>` together with `<CFV>`) are rejected rather than
//! coerced. Validated plans become [`GenerationJob`]s that are dispatched to
//! the first registered backend able to run them.

mod backend;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use backend::{
    dispatch, BackendClient, BackendError, BackendRegistry, HttpBackend, JobHandle, JobStatus,
    MockBackend,
};
pub use crate::task::{Modality, TaskKind};

use crate::grammar::{
    EditRoles, FrameCount, FrameIndex, ParsedOutput, Resolution, SignalKind, SignalToken,
};
use crate::meta::{self, PresetTable};
use crate::planner::{Attachment, InputManifest};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteError {
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("plan failed validation: {0}")]
    ValidationFailed(ValidationReport),
    #[error("no registered backend supports {0}")]
    NoCapableBackend(TaskKind),
    #[error("backend {backend} rejected the job: {reason}")]
    BackendRejected { backend: String, reason: String },
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("backend {backend} unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },
}

impl RouteError {
    pub fn code(&self) -> &'static str {
        match self {
            RouteError::UnsupportedCombination(_) => "UnsupportedCombination",
            RouteError::ValidationFailed(_) => "ValidationFailed",
            RouteError::NoCapableBackend(_) => "NoCapableBackend",
            RouteError::BackendRejected { .. } => "BackendRejected",
            RouteError::UnknownJob(_) => "UnknownJob",
            RouteError::BackendUnavailable { .. } => "BackendUnavailable",
        }
    }
}

fn unsupported(msg: impl Into<String>) -> RouteError {
    RouteError::UnsupportedCombination(msg.into())
}

/// Maps a token set and the attachments it refers to onto one task kind.
pub fn derive_task_kind(
    tokens: &[SignalToken],
    manifest: &InputManifest,
) -> Result<TaskKind, RouteError> {
    let kinds: BTreeSet<SignalKind> = tokens.iter().map(SignalToken::kind).collect();
    let has = |k| kinds.contains(&k);
    let images = manifest.image_count();
    let videos = manifest.video_count();
    let visual = manifest.visual_count();

    let (image_out, video_out) = (has(SignalKind::Cfi), has(SignalKind::Cfv));
    if !image_out && !video_out {
        return Ok(if videos > 0 {
            TaskKind::VideoUnderstanding
        } else if images > 0 {
            TaskKind::ImageUnderstanding
        } else {
            TaskKind::TextUnderstanding
        });
    }
    if image_out && video_out {
        return Err(unsupported("<CFI> and <CFV> together"));
    }

    let subtasks: Vec<SignalKind> = [SignalKind::Boedit, SignalKind::Ctrl, SignalKind::Ref]
        .into_iter()
        .filter(|k| has(*k))
        .collect();
    if subtasks.len() > 1 {
        let names: Vec<_> = subtasks.iter().map(|k| k.to_string()).collect();
        return Err(unsupported(format!("conflicting task tokens {}", names.join("+"))));
    }
    let subtask = subtasks.first().copied();

    if image_out {
        if videos > 0 {
            return Err(unsupported("image output from a video input"));
        }
        return match subtask {
            Some(SignalKind::Boedit) if visual >= 2 => Ok(TaskKind::ImageEditing),
            Some(SignalKind::Boedit) => Err(unsupported("<BOEDIT> needs a mask and a source attachment")),
            Some(SignalKind::Ctrl) if images >= 1 => Ok(TaskKind::ImageControllable),
            Some(SignalKind::Ref) if images >= 1 => Ok(TaskKind::ImageReference),
            Some(k) => Err(unsupported(format!("<{k}> needs an image attachment"))),
            None if visual == 0 => Ok(TaskKind::TextToImage),
            None => Err(unsupported("image attachments without an editing, control, or reference token")),
        };
    }

    match subtask {
        Some(SignalKind::Boedit) if videos == 1 && visual >= 2 => Ok(TaskKind::VideoEditing),
        Some(SignalKind::Boedit) => Err(unsupported("video editing needs a video and a mask attachment")),
        Some(SignalKind::Ctrl) if videos == 1 => Ok(TaskKind::VideoControllable),
        Some(SignalKind::Ctrl) => Err(unsupported("controllable video generation needs a video attachment")),
        Some(SignalKind::Ref) if videos == 0 && images >= 1 => Ok(TaskKind::VideoReferenceGen),
        Some(_) => Err(unsupported("reference video generation takes image attachments only")),
        None if has(SignalKind::Bofidx) => {
            if images == 1 && videos == 0 {
                Ok(TaskKind::ImageToVideo)
            } else {
                Err(unsupported("<BOFIDX> needs exactly one image attachment"))
            }
        }
        None if visual == 0 => Ok(TaskKind::TextToVideo),
        None if videos > 0 => Err(unsupported("video attachment without an editing or control token")),
        None => Err(unsupported("image attachments for video generation need <BOFIDX> or <REF>")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task: Option<TaskKind>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, message: impl Into<String>) {
        self.violations.push(Violation { code: code.to_string(), message: message.into() });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let msgs: Vec<_> = self.violations.iter().map(|v| v.message.as_str()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Limits applied by [`validate_plan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteLimits {
    pub max_resolution: Resolution,
}

impl Default for RouteLimits {
    fn default() -> Self {
        Self { max_resolution: Resolution::new(4096, 4096) }
    }
}

/// Cross-field checks on a generation plan. Returns every violation found.
pub fn validate_plan(
    plan: &ParsedOutput,
    manifest: &InputManifest,
    limits: &RouteLimits,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let task = match derive_task_kind(&plan.tokens, manifest) {
        Ok(task) => task,
        Err(err) => {
            report.push(err.code(), err.to_string());
            return report;
        }
    };
    report.task = Some(task);
    if !task.is_generation() {
        if !plan.tokens.is_empty() {
            report.push("MissingGenerationFlag", "signal tokens without <CFI> or <CFV>");
        } else {
            report.push("NotGeneration", format!("{task} is not a generation task"));
        }
        return report;
    }
    if plan.contains(SignalKind::Bonf) && !task.is_video() {
        report.push("FrameCountOnImageTask", "frame count on image task");
    }
    if plan.contains(SignalKind::Bofidx) && task != TaskKind::ImageToVideo {
        report.push("FrameIndexOutsideImageToVideo", format!("frame index on {task}"));
    }
    if let Some(EditRoles { mask_id, source_id }) = plan.edit_roles() {
        if mask_id == source_id {
            report.push("EditRolesEqual", "mask_id equals source_id");
        }
        for (role, id) in [("mask_id", mask_id), ("source_id", source_id)] {
            if manifest.get(id).is_none() {
                report.push(
                    "EditRoleOutOfRange",
                    format!("{role} {id} is not an attachment (have {})", manifest.visual_count()),
                );
            }
        }
    }
    if let Some(r) = plan.resolution() {
        let max = limits.max_resolution;
        if r.width > max.width || r.height > max.height {
            report.push("ResolutionTooLarge", format!("{r} exceeds the {max} limit"));
        }
    }
    if task.input_modality() == Modality::Text && plan.prompt_text.trim().is_empty() {
        report.push("EmptyPrompt", format!("empty prompt on {task}"));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub Uuid);

impl JobId {
    pub fn new() -> Self {
        JobId(Uuid::new_v4())
    }
}

impl Default for JobId {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Display for JobId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::str::FromStr for JobId {
    type Err = uuid::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(JobId)
    }
}

/// Fully parameterized stage-two job. Optional fields are present exactly
/// when the task kind uses them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: JobId,
    pub task: TaskKind,
    pub prompt: String,
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FrameCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<FrameIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_roles: Option<EditRoles>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl GenerationJob {
    /// Checks that optional fields match the task kind.
    pub fn check_shape(&self) -> Result<(), String> {
        let video = self.task.is_video();
        if self.frames.is_some() != video {
            return Err(format!("frames presence does not match {}", self.task));
        }
        if self.frame_index.is_some() != (self.task == TaskKind::ImageToVideo) {
            return Err(format!("frame_index presence does not match {}", self.task));
        }
        let editing = matches!(self.task, TaskKind::ImageEditing | TaskKind::VideoEditing);
        if self.edit_roles.is_some() != editing {
            return Err(format!("edit_roles presence does not match {}", self.task));
        }
        Ok(())
    }
}

/// Builds a job from a plan that passes validation, filling gaps from presets.
pub fn build_job(
    plan: &ParsedOutput,
    manifest: &InputManifest,
    presets: &PresetTable,
    limits: &RouteLimits,
) -> Result<GenerationJob, RouteError> {
    let report = validate_plan(plan, manifest, limits);
    let task = match (report.is_empty(), report.task) {
        (true, Some(task)) => task,
        _ => return Err(RouteError::ValidationFailed(report)),
    };
    let resolution = match plan.resolution() {
        Some(r) => meta::snap_resolution(r),
        None => {
            let fallback = presets
                .task_default(task)
                .ok_or_else(|| unsupported(format!("no default resolution for {task}")))?;
            meta::snap_resolution(fallback)
        }
    };
    let frames = task
        .is_video()
        .then(|| plan.frame_count().unwrap_or(FrameCount(presets.frame_count_default)));
    let frame_index = (task == TaskKind::ImageToVideo)
        .then(|| plan.frame_index().unwrap_or(FrameIndex::First));
    let job = GenerationJob {
        job_id: JobId::new(),
        task,
        prompt: plan.prompt_text.clone(),
        resolution,
        frames,
        frame_index,
        edit_roles: plan.edit_roles(),
        attachments: manifest.attachments.clone(),
    };
    debug_assert_eq!(job.check_shape(), Ok(()));
    Ok(job)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse;
    use crate::planner::AttachmentKind::{self, *};

    fn kind(tokens: &str, kinds: &[AttachmentKind]) -> Result<TaskKind, RouteError> {
        let parsed = parse(tokens).unwrap();
        derive_task_kind(&parsed.tokens, &InputManifest::with_kinds("", kinds))
    }

    #[test]
    fn golden_pairs_reach_every_kind() {
        let goldens: [(&str, &[AttachmentKind], TaskKind); 12] = [
            ("", &[], TaskKind::TextUnderstanding),
            ("", &[Image], TaskKind::ImageUnderstanding),
            ("", &[Video], TaskKind::VideoUnderstanding),
            ("<CFI>", &[], TaskKind::TextToImage),
            ("<CFI><BOEDIT>1,2<EOEDIT>", &[Mask, Image], TaskKind::ImageEditing),
            ("<CFI><CTRL>", &[Image], TaskKind::ImageControllable),
            ("<CFI><REF>", &[Image], TaskKind::ImageReference),
            ("<CFV>", &[], TaskKind::TextToVideo),
            ("<CFV><BOFIDX>First<EOFIDX>", &[Image], TaskKind::ImageToVideo),
            ("<CFV><REF>", &[Image, Image], TaskKind::VideoReferenceGen),
            ("<CFV><BOEDIT>2,1<EOEDIT>", &[Video, Mask], TaskKind::VideoEditing),
            ("<CFV><CTRL>", &[Video], TaskKind::VideoControllable),
        ];
        for (tokens, kinds, want) in goldens {
            assert_eq!(kind(tokens, kinds).unwrap(), want, "{tokens} {kinds:?}");
        }
    }

    #[test]
    fn rejected_combinations() {
        assert_eq!(kind("<CFI>", &[Video]).unwrap_err().code(), "UnsupportedCombination");
        assert!(kind("<CFI><CFV>", &[]).is_err());
        assert!(kind("<CFI><BOEDIT>1,2<EOEDIT>", &[Image]).is_err());
        assert!(kind("<CFV><BOFIDX>Last<EOFIDX>", &[]).is_err());
        assert!(kind("<CFV><BOFIDX>Last<EOFIDX>", &[Image, Image]).is_err());
        assert!(kind("<CFI><CTRL><REF>", &[Image]).is_err());
    }

    #[test]
    fn validation_rules() {
        let m = InputManifest::with_kinds("", &[]);
        let limits = RouteLimits::default();
        let r = validate_plan(&parse("a cat <CFI><BONF>81<EONF>").unwrap(), &m, &limits);
        assert_eq!(r.violations[0].message, "frame count on image task");

        let m2 = InputManifest::with_kinds("", &[Video, Mask]);
        let same = ParsedOutput::new(
            "swap the sky",
            vec![SignalToken::VideoGeneration, SignalToken::EditRoles(EditRoles { mask_id: 1, source_id: 1 })],
        );
        let r = validate_plan(&same, &m2, &limits);
        assert_eq!(r.violations[0].message, "mask_id equals source_id");

        let r = validate_plan(&parse("waves <CFV><BONF>81<EONF>").unwrap(), &m, &limits);
        assert!(r.is_empty(), "{r:?}");

        let r = validate_plan(&parse("<CFV>").unwrap(), &m, &limits);
        assert_eq!(r.violations[0].code, "EmptyPrompt");

        let r = validate_plan(&parse("x <CFI><BORES>8192,512<EORES>").unwrap(), &m, &limits);
        assert_eq!(r.violations[0].code, "ResolutionTooLarge");

        let r = validate_plan(
            &parse("x <CFV><BOEDIT>1,3<EOEDIT>").unwrap(),
            &InputManifest::with_kinds("", &[Video, Mask]),
            &limits,
        );
        assert_eq!(r.violations[0].code, "EditRoleOutOfRange");

        let r = validate_plan(&parse("x <CFI><BOFIDX>First<EOFIDX>").unwrap(), &m, &limits);
        assert_eq!(r.violations[0].code, "FrameIndexOutsideImageToVideo");
    }

    #[test]
    fn jobs_fill_defaults() {
        let presets = PresetTable::default();
        let limits = RouteLimits::default();
        let m = InputManifest::with_kinds("", &[]);
        let job = build_job(&parse("waves <CFV>").unwrap(), &m, &presets, &limits).unwrap();
        assert_eq!(job.frames, Some(FrameCount(81)));
        assert_eq!(job.resolution, Resolution::new(832, 480));

        let m = InputManifest::with_kinds("", &[Mask, Image]);
        let job = build_job(
            &parse("remove the hat <CFI><BOEDIT>1,2<EOEDIT>").unwrap(),
            &m,
            &presets,
            &limits,
        )
        .unwrap();
        assert_eq!(job.edit_roles, Some(EditRoles { mask_id: 1, source_id: 2 }));
        assert_eq!(job.frames, None);
        let json = serde_json::to_value(&job).unwrap();
        assert!(json.get("frames").is_none());
    }

    #[test]
    fn build_rejects_invalid_plans() {
        let err = build_job(
            &parse("cat <CFI><BONF>81<EONF>").unwrap(),
            &InputManifest::with_kinds("", &[]),
            &PresetTable::default(),
            &RouteLimits::default(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "ValidationFailed");
    }
}
