use serde::{Deserialize, Serialize};

use super::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachmentKind {
    Image,
    Video,
    Mask,
}

impl AttachmentKind {
    /// Masks are still images as far as modality goes.
    pub fn is_image(self) -> bool {
        matches!(self, AttachmentKind::Image | AttachmentKind::Mask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    /// 1-based position in the request.
    pub id: u32,
    pub kind: AttachmentKind,
    #[serde(default)]
    pub uri: String,
}

/// The raw user request: instruction text plus ordered attachments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputManifest {
    pub instruction: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl InputManifest {
    /// Assigns consecutive ids starting at 1.
    pub fn new(
        instruction: impl Into<String>,
        attachments: impl IntoIterator<Item = (AttachmentKind, String)>,
    ) -> Self {
        let attachments = attachments
            .into_iter()
            .enumerate()
            .map(|(i, (kind, uri))| Attachment { id: i as u32 + 1, kind, uri })
            .collect();
        Self { instruction: instruction.into(), attachments }
    }

    /// Manifest with placeholder locators, handy for tests and synthesized records.
    pub fn with_kinds(instruction: impl Into<String>, kinds: &[AttachmentKind]) -> Self {
        Self::new(
            instruction,
            kinds.iter().enumerate().map(|(i, k)| (*k, format!("attachment://{}", i + 1))),
        )
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        for (i, a) in self.attachments.iter().enumerate() {
            if a.id != i as u32 + 1 {
                return Err(PlanError::InvalidManifest(format!(
                    "attachment ids must be consecutive from 1, found {} at position {}",
                    a.id,
                    i + 1
                )));
            }
        }
        if self.video_count() > 1 {
            return Err(PlanError::InvalidManifest("at most one video attachment".into()));
        }
        Ok(())
    }

    pub fn get(&self, id: u32) -> Option<&Attachment> {
        id.checked_sub(1).and_then(|i| self.attachments.get(i as usize))
    }

    pub fn kinds(&self) -> Vec<AttachmentKind> {
        self.attachments.iter().map(|a| a.kind).collect()
    }

    pub fn image_count(&self) -> usize {
        self.attachments.iter().filter(|a| a.kind.is_image()).count()
    }

    pub fn video_count(&self) -> usize {
        self.attachments.iter().filter(|a| a.kind == AttachmentKind::Video).count()
    }

    pub fn visual_count(&self) -> usize {
        self.attachments.len()
    }
}
