//! Per-frame annotations and their reduction to clip-level labels by strict
//! majority. Annotations can come from the synthetic renderer or from
//! external JSON files (an array of frame objects, schema in
//! `docs/annotation_schema.json`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ScopeMotion {
    Advancing,
    Withdrawing,
    Exiting,
    None,
}

impl ScopeMotion {
    pub const ALL: [ScopeMotion; 4] = [
        ScopeMotion::Advancing,
        ScopeMotion::Withdrawing,
        ScopeMotion::Exiting,
        ScopeMotion::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScopeMotion::Advancing => "advancing",
            ScopeMotion::Withdrawing => "withdrawing",
            ScopeMotion::Exiting => "exiting",
            ScopeMotion::None => "none",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Catheter,
    Snare,
    Forceps,
}

impl Tool {
    pub const ALL: [Tool; 3] = [Tool::Catheter, Tool::Snare, Tool::Forceps];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tool::Catheter => "catheter",
            Tool::Snare => "snare",
            Tool::Forceps => "forceps",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Illumination {
    WhiteLight,
    NarrowBand,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ScreenPos {
    Left,
    Center,
    Right,
}

impl ScreenPos {
    pub const ALL: [ScreenPos; 3] = [ScreenPos::Left, ScreenPos::Center, ScreenPos::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScreenPos::Left => "left",
            ScreenPos::Center => "center",
            ScreenPos::Right => "right",
        }
    }
}

/// Colon segment, named by the one-word form used in answers.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Cecum,
    Ascending,
    Transverse,
    Descending,
    Sigmoid,
    Rectum,
}

impl Site {
    pub const ALL: [Site; 6] = [
        Site::Cecum,
        Site::Ascending,
        Site::Transverse,
        Site::Descending,
        Site::Sigmoid,
        Site::Rectum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Site::Cecum => "cecum",
            Site::Ascending => "ascending",
            Site::Transverse => "transverse",
            Site::Descending => "descending",
            Site::Sigmoid => "sigmoid",
            Site::Rectum => "rectum",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Histology {
    Hyperplastic,
    Adenomatous,
    Serrated,
}

impl Histology {
    pub const ALL: [Histology; 3] = [
        Histology::Hyperplastic,
        Histology::Adenomatous,
        Histology::Serrated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Histology::Hyperplastic => "hyperplastic",
            Histology::Adenomatous => "adenomatous",
            Histology::Serrated => "serrated",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LesionAnnotation {
    pub on_screen_position: ScreenPos,
    pub anatomical_site: Site,
    pub size_mm: u32,
    pub histopathology: Histology,
}

/// Ground truth for one sampled frame.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotation {
    pub frame_index: usize,
    pub scope_motion: ScopeMotion,
    pub tools: Vec<Tool>,
    pub visibility: bool,
    pub occlusion: bool,
    pub flushing: bool,
    pub illumination: Illumination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lesion: Option<LesionAnnotation>,
}

impl FrameAnnotation {
    pub fn validate(&self) -> Result<()> {
        for w in self.tools.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Dataset(format!(
                    "frame {}: tools must be strictly ordered without duplicates",
                    self.frame_index
                )));
            }
        }
        if let Some(l) = &self.lesion {
            if l.size_mm == 0 {
                return Err(Error::Dataset(format!(
                    "frame {}: lesion size must be positive",
                    self.frame_index
                )));
            }
        }
        Ok(())
    }
}

pub fn save_annotations(path: &Path, anns: &[FrameAnnotation]) -> Result<()> {
    let mut s = serde_json::to_string_pretty(anns)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io_at(path.display().to_string(), e))
}

/// Read per-frame annotations from a JSON array file and validate each one.
pub fn load_annotations(path: &Path) -> Result<Vec<FrameAnnotation>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io_at(path.display().to_string(), e))?;
    let anns: Vec<FrameAnnotation> = serde_json::from_str(&text)?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

/// Strict majority over frames: true only when the predicate holds on more
/// than half of them.
pub fn majority_label(
    anns: &[FrameAnnotation],
    expected_frames: usize,
    pred: impl Fn(&FrameAnnotation) -> bool,
) -> Result<bool> {
    if anns.len() != expected_frames {
        return Err(Error::Dataset(format!(
            "{} annotations for {} sampled frames",
            anns.len(),
            expected_frames
        )));
    }
    let hits = anns.iter().filter(|a| pred(a)).count();
    Ok(2 * hits > anns.len())
}

/// Clip-level labels reduced from per-frame ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipLabels {
    pub motion: ScopeMotion,
    pub tool: Option<Tool>,
    pub visibility: bool,
    pub occluded: bool,
    pub flushing: bool,
    pub narrow_band: bool,
    pub lesion: Option<LesionAnnotation>,
}

/// Reduce frame annotations to clip labels, every flag by strict majority.
/// A motion other than `none` wins only with a majority of frames; the
/// lesion descriptor is taken from the first lesion-bearing frame once
/// lesion presence itself has a majority.
pub fn clip_labels(anns: &[FrameAnnotation], expected_frames: usize) -> Result<ClipLabels> {
    let motion = ScopeMotion::ALL
        .iter()
        .copied()
        .filter(|&m| m != ScopeMotion::None)
        .find_map(|m| {
            match majority_label(anns, expected_frames, |a| a.scope_motion == m) {
                Ok(true) => Some(Ok(m)),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            }
        })
        .transpose()?
        .unwrap_or(ScopeMotion::None);
    // validate the count once even if the motion scan short-circuited
    majority_label(anns, expected_frames, |_| true)?;

    let tool = Tool::ALL
        .iter()
        .copied()
        .find_map(|t| {
            match majority_label(anns, expected_frames, |a| a.tools.contains(&t)) {
                Ok(true) => Some(Ok(t)),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            }
        })
        .transpose()?;

    let visibility = majority_label(anns, expected_frames, |a| a.visibility)?;
    let occluded = majority_label(anns, expected_frames, |a| a.occlusion)?;
    let flushing = majority_label(anns, expected_frames, |a| a.flushing)?;
    let narrow_band = majority_label(anns, expected_frames, |a| {
        a.illumination == Illumination::NarrowBand
    })?;
    let lesion = if majority_label(anns, expected_frames, |a| a.lesion.is_some())? {
        anns.iter().find_map(|a| a.lesion)
    } else {
        None
    };

    Ok(ClipLabels {
        motion,
        tool,
        visibility,
        occluded,
        flushing,
        narrow_band,
        lesion,
    })
}
