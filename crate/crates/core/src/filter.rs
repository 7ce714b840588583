//! Noisy-frame removal for query tubes.
//!
//! Two passes: an explicit quality threshold, then a robust outlier test in
//! embedding space. A frame's typicality is its mean cosine similarity to
//! the other frames of the tube; frames whose typicality falls more than
//! `mad_k` median absolute deviations below the median are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRecord, Tube, POSE_CHANNEL};
use crate::similarity::{normalized, resolve_channel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub q_min: f64,
    pub mad_k: f64,
    pub channel: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q_min: 0.5,
            mad_k: 3.0,
            channel: POSE_CHANNEL.to_string(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_min) {
            return Err(Error::Config(format!("q_min {} outside [0, 1]", self.q_min)));
        }
        if !(self.mad_k >= 0.0 && self.mad_k.is_finite()) {
            return Err(Error::Config(format!("mad_k must be >= 0, got {}", self.mad_k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Tube,
    pub removed: Vec<FrameRecord>,
}

pub fn quality_filter(tube: &Tube, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    let (kept, removed): (Vec<_>, Vec<_>) = tube
        .frames()
        .iter()
        .cloned()
        .partition(|f| f.quality >= cfg.q_min);
    if kept.is_empty() {
        return Err(Error::EmptyQuery(tube.tube_id().to_string()));
    }
    Ok(FilterOutcome {
        kept: Tube::new(kept)?,
        removed,
    })
}

/// Mean cosine similarity of each frame to every other frame of the tube.
pub fn typicality(tube: &Tube, channel: &str) -> Result<Vec<f64>> {
    let channel = resolve_channel(channel, tube.frames())?;
    let unit = tube
        .frames()
        .iter()
        .map(|f| {
            normalized(f.embedding(channel).expect("resolved channel")).map_err(|_| {
                Error::Value(format!(
                    "tube '{}' frame {}: zero-norm '{channel}' embedding",
                    f.tube_id, f.frame_index
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = unit.len();
    let mut sums = vec![0.0; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            sums[i] += c;
            sums[j] += c;
        }
    }
    let others = (m.max(2) - 1) as f64;
    Ok(sums.into_iter().map(|s| s / others).collect())
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn outlier_filter(tube: &Tube, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    let m = tube.len();
    let unchanged = || FilterOutcome {
        kept: tube.clone(),
        removed: Vec::new(),
    };
    if m < 3 {
        return Ok(unchanged());
    }

    let scores = typicality(tube, &cfg.channel)?;
    let center = median(&scores);
    let deviations: Vec<f64> = scores.iter().map(|s| (s - center).abs()).collect();
    let mad = median(&deviations);
    // Identical frames are not noise.
    if mad == 0.0 {
        return Ok(unchanged());
    }

    let cutoff = center - cfg.mad_k * mad;
    let mut flagged: Vec<usize> = (0..m).filter(|&i| scores[i] < cutoff).collect();
    if flagged.is_empty() {
        return Ok(unchanged());
    }
    // At most half the tube goes, least typical first.
    flagged.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    flagged.truncate(m / 2);

    let mut drop = vec![false; m];
    flagged.iter().for_each(|&i| drop[i] = true);
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for (frame, gone) in tube.frames().iter().zip(drop) {
        if gone {
            removed.push(frame.clone());
        } else {
            kept.push(frame.clone());
        }
    }
    Ok(FilterOutcome {
        kept: Tube::new(kept)?,
        removed,
    })
}

/// Quality threshold followed by the outlier test.
pub fn filter_tube(tube: &Tube, cfg: &FilterConfig) -> Result<FilterOutcome> {
    let first = quality_filter(tube, cfg)?;
    let second = outlier_filter(&first.kept, cfg)?;
    let mut removed = first.removed;
    removed.extend(second.removed);
    // Report removals in tube order.
    removed.sort_by_key(|f| f.frame_index);
    Ok(FilterOutcome {
        kept: second.kept,
        removed,
    })
}
