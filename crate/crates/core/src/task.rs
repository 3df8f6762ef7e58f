use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Video,
}

/// The twelve input/output task cells. Video input never produces an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    TextUnderstanding,
    ImageUnderstanding,
    VideoUnderstanding,
    TextToImage,
    ImageEditing,
    ImageControllable,
    ImageReference,
    TextToVideo,
    ImageToVideo,
    VideoReferenceGen,
    VideoEditing,
    VideoControllable,
}

impl TaskKind {
    pub const ALL: [TaskKind; 12] = [
        TaskKind::TextUnderstanding,
        TaskKind::ImageUnderstanding,
        TaskKind::VideoUnderstanding,
        TaskKind::TextToImage,
        TaskKind::ImageEditing,
        TaskKind::ImageControllable,
        TaskKind::ImageReference,
        TaskKind::TextToVideo,
        TaskKind::ImageToVideo,
        TaskKind::VideoReferenceGen,
        TaskKind::VideoEditing,
        TaskKind::VideoControllable,
    ];

    pub fn input_modality(self) -> Modality {
        use TaskKind::*;
        match self {
            TextUnderstanding | TextToImage | TextToVideo => Modality::Text,
            ImageUnderstanding | ImageEditing | ImageControllable | ImageReference
            | ImageToVideo | VideoReferenceGen => Modality::Image,
            VideoUnderstanding | VideoEditing | VideoControllable => Modality::Video,
        }
    }

    pub fn output_modality(self) -> Modality {
        use TaskKind::*;
        match self {
            TextUnderstanding | ImageUnderstanding | VideoUnderstanding => Modality::Text,
            TextToImage | ImageEditing | ImageControllable | ImageReference => Modality::Image,
            TextToVideo | ImageToVideo | VideoReferenceGen | VideoEditing | VideoControllable => {
                Modality::Video
            }
        }
    }

    pub fn is_generation(self) -> bool {
        self.output_modality() != Modality::Text
    }

    pub fn is_video(self) -> bool {
        self.output_modality() == Modality::Video
    }

    pub fn name(self) -> &'static str {
        use TaskKind::*;
        match self {
            TextUnderstanding => "TextUnderstanding",
            ImageUnderstanding => "ImageUnderstanding",
            VideoUnderstanding => "VideoUnderstanding",
            TextToImage => "TextToImage",
            ImageEditing => "ImageEditing",
            ImageControllable => "ImageControllable",
            ImageReference => "ImageReference",
            TextToVideo => "TextToVideo",
            ImageToVideo => "ImageToVideo",
            VideoReferenceGen => "VideoReferenceGen",
            VideoEditing => "VideoEditing",
            VideoControllable => "VideoControllable",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
