//! Tubes, galleries and the per-frame records they are made of.
//!
//! A [`Tube`] is the temporally ordered sequence of frames of one tracked
//! person seen by one camera. A [`Gallery`] is the searchable collection of
//! tubes. Both are validated on construction and immutable afterwards, so a
//! gallery can be shared read-only between worker threads.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel scored by first-stage retrieval. Every other channel falls back to it.
pub const RETRIEVAL_CHANNEL: &str = "retrieval";
/// Channel used for self-similarity fusion.
pub const SELFSIM_CHANNEL: &str = "selfsim";
/// Channel used for key-pose selection and outlier filtering.
pub const POSE_CHANNEL: &str = "pose";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub tube_id: String,
    pub camera_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_id: Option<String>,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub quality: f64,
    pub embeddings: BTreeMap<String, Vec<f32>>,
}

impl FrameRecord {
    pub fn embedding(&self, channel: &str) -> Option<&[f32]> {
        self.embeddings.get(channel).map(Vec::as_slice)
    }

    /// Checks the record-local invariants: quality range, finite and
    /// non-empty embeddings.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(Error::Value(format!(
                "tube '{}' frame {}: quality {} outside [0, 1]",
                self.tube_id, self.frame_index, self.quality
            )));
        }
        for (channel, values) in &self.embeddings {
            if values.is_empty() {
                return Err(Error::Value(format!(
                    "tube '{}' frame {}: channel '{channel}' is empty",
                    self.tube_id, self.frame_index
                )));
            }
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Value(format!(
                    "tube '{}' frame {}: channel '{channel}' has a non-finite value at position {pos}",
                    self.tube_id, self.frame_index
                )));
            }
        }
        Ok(())
    }
}

/// Identifies one frame of one tube.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub tube_id: String,
    pub frame_index: u64,
}

impl FrameKey {
    pub fn new(tube_id: impl Into<String>, frame_index: u64) -> Self {
        Self {
            tube_id: tube_id.into(),
            frame_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    tube_id: String,
    camera_id: String,
    person_id: Option<String>,
    frames: Vec<FrameRecord>,
}

impl Tube {
    /// Builds a tube, checking that it is non-empty, that every frame
    /// carries the same tube, camera and person ids and that frame indices
    /// strictly increase.
    pub fn new(frames: Vec<FrameRecord>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Validation("a tube must contain at least one frame".into()))?;
        let tube_id = first.tube_id.clone();
        let camera_id = first.camera_id.clone();
        let person_id = first.person_id.clone();

        for frame in &frames {
            frame.validate()?;
        }
        for pair in frames.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.tube_id != tube_id {
                return Err(Error::Validation(format!(
                    "tube '{tube_id}' contains a frame of tube '{}'",
                    next.tube_id
                )));
            }
            if next.camera_id != camera_id {
                return Err(Error::Validation(format!(
                    "tube '{tube_id}': camera_id changes from '{camera_id}' to '{}'",
                    next.camera_id
                )));
            }
            if next.person_id != person_id {
                return Err(Error::Validation(format!(
                    "tube '{tube_id}': person_id is not constant across frames"
                )));
            }
            if next.frame_index <= prev.frame_index {
                return Err(Error::Validation(format!(
                    "tube '{tube_id}': frame_index {} follows {} (must strictly increase)",
                    next.frame_index, prev.frame_index
                )));
            }
        }
        Ok(Self {
            tube_id,
            camera_id,
            person_id,
            frames,
        })
    }

    pub fn tube_id(&self) -> &str {
        &self.tube_id
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn person_id(&self) -> Option<&str> {
        self.person_id.as_deref()
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_frames(self) -> Vec<FrameRecord> {
        self.frames
    }

    pub fn frame(&self, frame_index: u64) -> Option<&FrameRecord> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|pos| &self.frames[pos])
    }

    /// Tube made of the frames at `positions` (ascending, in range).
    pub fn select(&self, positions: &[usize]) -> Result<Tube> {
        let frames = positions
            .iter()
            .map(|&p| {
                self.frames.get(p).cloned().ok_or_else(|| {
                    Error::Contract(format!(
                        "position {p} out of range for tube '{}' of {} frames",
                        self.tube_id,
                        self.frames.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Tube::new(frames)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gallery {
    tubes: Vec<Tube>,
    channel_dims: BTreeMap<String, usize>,
    index: HashMap<String, usize>,
}

impl Gallery {
    /// Assembles a gallery, checking unique tube ids and per-channel
    /// dimension consistency across every frame.
    pub fn new(tubes: Vec<Tube>) -> Result<Self> {
        let mut channel_dims: BTreeMap<String, usize> = BTreeMap::new();
        let mut index = HashMap::with_capacity(tubes.len());
        for (pos, tube) in tubes.iter().enumerate() {
            if index.insert(tube.tube_id.clone(), pos).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate tube_id '{}'",
                    tube.tube_id
                )));
            }
            for frame in &tube.frames {
                for (channel, values) in &frame.embeddings {
                    let dim = *channel_dims.entry(channel.clone()).or_insert(values.len());
                    if dim != values.len() {
                        return Err(Error::Validation(format!(
                            "tube '{}' frame {}: channel '{channel}' has dimension {} but the gallery uses {dim}",
                            tube.tube_id,
                            frame.frame_index,
                            values.len()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            tubes,
            channel_dims,
            index,
        })
    }

    pub fn tubes(&self) -> &[Tube] {
        &self.tubes
    }

    pub fn channel_dims(&self) -> &BTreeMap<String, usize> {
        &self.channel_dims
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.tubes.iter().map(Tube::len).sum()
    }

    pub fn tube(&self, tube_id: &str) -> Option<&Tube> {
        self.index.get(tube_id).map(|&pos| &self.tubes[pos])
    }

    pub fn frame(&self, tube_id: &str, frame_index: u64) -> Option<&FrameRecord> {
        self.tube(tube_id)?.frame(frame_index)
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> + Clone {
        self.tubes.iter().flat_map(|t| t.frames.iter())
    }

    pub fn into_tubes(self) -> Vec<Tube> {
        self.tubes
    }

    /// New gallery containing only the tubes accepted by `keep`, in order.
    pub fn filter<F>(&self, mut keep: F) -> Gallery
    where
        F: FnMut(&Tube) -> bool,
    {
        let tubes = self.tubes.iter().filter(|t| keep(t)).cloned().collect();
        // A subset of a valid gallery is valid.
        Gallery::new(tubes).expect("subset of a valid gallery")
    }

    /// Splits into (tubes seen by `camera_id`, all other tubes).
    pub fn split_by_camera(&self, camera_id: &str) -> (Gallery, Gallery) {
        (
            self.filter(|t| t.camera_id == camera_id),
            self.filter(|t| t.camera_id != camera_id),
        )
    }

    /// Distinct person ids in first-appearance order.
    pub fn identities(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.tubes
            .iter()
            .filter_map(|t| t.person_id())
            .filter(|p| seen.insert(*p))
            .collect()
    }
}
