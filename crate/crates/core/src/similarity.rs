//! Embedding similarity primitives shared by every stage.

use crate::error::{Error, Result};
use crate::model::{FrameRecord, RETRIEVAL_CHANNEL};

/// Cosine similarity accumulated in `f64`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Value(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Value("zero-norm embedding".into()));
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine mapped affinely onto [0, 1]: 1 for equal directions, 0.5 for
/// orthogonal ones, 0 for opposite ones.
pub fn unit_cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    Ok(((1.0 + cosine(a, b)?) / 2.0).clamp(0.0, 1.0))
}

/// Unit-length copy of `v` in `f64`, or an error for a zero vector.
pub fn normalized(v: &[f32]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Value("zero-norm embedding".into()));
    }
    Ok(v.iter().map(|&x| f64::from(x) / norm).collect())
}

/// Picks the channel to read from a set of frames: `preferred` when every
/// frame carries it, otherwise the retrieval channel when every frame
/// carries that.
pub fn resolve_channel<'a, I>(preferred: &'a str, frames: I) -> Result<&'a str>
where
    I: IntoIterator<Item = &'a FrameRecord>,
    I::IntoIter: Clone,
{
    let frames = frames.into_iter();
    let has_all = |channel: &str| frames.clone().all(|f| f.embeddings.contains_key(channel));
    if has_all(preferred) {
        Ok(preferred)
    } else if has_all(RETRIEVAL_CHANNEL) {
        Ok(RETRIEVAL_CHANNEL)
    } else {
        Err(Error::Value(format!(
            "neither channel '{preferred}' nor '{RETRIEVAL_CHANNEL}' is present on every frame"
        )))
    }
}
