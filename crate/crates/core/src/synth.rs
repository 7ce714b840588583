//! Seeded synthetic galleries.
//!
//! Every identity owns a unit-norm latent vector per channel. A frame
//! embedding is that latent plus a per (identity, camera) offset modelling
//! viewpoint and illumination, plus isotropic per-frame noise. Noise vectors
//! are scaled so their expected norm equals the configured sigma, which
//! keeps difficulty independent of dimension.
//!
//! The pose channel adds a gait term: a point on a circle in a per-identity
//! plane whose phase advances by a slow random walk with drift, so
//! consecutive frames are pose-similar while a long tube sweeps through
//! dissimilar poses.
//!
//! Distractor pairs share almost the same retrieval latent but keep
//! independent self-similarity latents.
//!
//! A noisy frame gets a low quality score and models an occlusion or a
//! tracker identity switch: its own signal is halved and the latent of a
//! randomly chosen other identity is added on top, with extra noise. In a
//! gallery such frames are isolated false positives for the intruding
//! identity.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FrameKey, FrameRecord, Gallery, Tube, POSE_CHANNEL, RETRIEVAL_CHANNEL, SELFSIM_CHANNEL,
};

const FRAME_PERIOD_MS: u64 = 40;
const POSE_IDENTITY_WEIGHT: f64 = 0.3;
const CORRUPTION_SIGNAL_WEIGHT: f64 = 0.5;
const CORRUPTION_NOISE_NORM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_identities: usize,
    pub n_cameras: usize,
    pub tubes_per_identity_per_camera: usize,
    /// Inclusive `[min, max]` frame count per tube.
    pub frames_per_tube: [usize; 2],
    pub dims: BTreeMap<String, usize>,
    pub noise_frame_rate: f64,
    pub appearance_noise_sigma: f64,
    pub camera_offset_sigma: f64,
    /// Standard deviation of the per-frame gait phase step, in radians.
    pub pose_drift_sigma: f64,
    /// Mean gait phase advance per frame, in radians.
    pub pose_rate: f64,
    pub distractor_pairs: usize,
    /// Expected distance between the retrieval latents of a distractor pair.
    pub distractor_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_identities: 10,
            n_cameras: 2,
            tubes_per_identity_per_camera: 1,
            frames_per_tube: [20, 40],
            dims: BTreeMap::from([
                (RETRIEVAL_CHANNEL.to_string(), 64),
                (SELFSIM_CHANNEL.to_string(), 64),
                (POSE_CHANNEL.to_string(), 32),
            ]),
            noise_frame_rate: 0.1,
            appearance_noise_sigma: 0.35,
            camera_offset_sigma: 0.5,
            pose_drift_sigma: 0.1,
            pose_rate: 0.5,
            distractor_pairs: 0,
            distractor_spread: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_identities == 0 {
            return fail("n_identities must be positive".into());
        }
        if self.n_cameras == 0 {
            return fail("n_cameras must be positive".into());
        }
        if self.tubes_per_identity_per_camera == 0 {
            return fail("tubes_per_identity_per_camera must be positive".into());
        }
        let [min, max] = self.frames_per_tube;
        if min == 0 || min > max {
            return fail(format!("invalid frames_per_tube range [{min}, {max}]"));
        }
        if !(0.0..=1.0).contains(&self.noise_frame_rate) {
            return fail(format!(
                "noise_frame_rate {} outside [0, 1]",
                self.noise_frame_rate
            ));
        }
        for (name, v) in [
            ("appearance_noise_sigma", self.appearance_noise_sigma),
            ("camera_offset_sigma", self.camera_offset_sigma),
            ("pose_drift_sigma", self.pose_drift_sigma),
            ("distractor_spread", self.distractor_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !self.pose_rate.is_finite() {
            return fail("pose_rate must be finite".into());
        }
        if !self.dims.contains_key(RETRIEVAL_CHANNEL) {
            return fail(format!("dims must include the '{RETRIEVAL_CHANNEL}' channel"));
        }
        if let Some((name, _)) = self.dims.iter().find(|(_, &d)| d == 0) {
            return fail(format!("channel '{name}' has dimension 0"));
        }
        if self.dims.get(POSE_CHANNEL).is_some_and(|&d| d < 2) {
            return fail("the pose channel needs at least 2 dimensions".into());
        }
        if 2 * self.distractor_pairs > self.n_identities {
            return fail(format!(
                "{} distractor pairs need {} identities, only {} configured",
                self.distractor_pairs,
                2 * self.distractor_pairs,
                self.n_identities
            ));
        }
        Ok(())
    }
}

impl SynthConfig {
    /// Preset used by the stagewise benchmark: 50 identities seen by 2
    /// cameras, 3 tubes each, 20 to 40 frames per tube, 15% noisy frames,
    /// appearance noise 0.35 and 10 distractor pairs.
    pub fn distractor_benchmark(seed: u64) -> Self {
        Self {
            seed,
            n_identities: 50,
            n_cameras: 2,
            tubes_per_identity_per_camera: 3,
            frames_per_tube: [20, 40],
            noise_frame_rate: 0.15,
            appearance_noise_sigma: 0.35,
            distractor_pairs: 10,
            ..Self::default()
        }
    }
}

/// Generated data: gallery tubes come from camera `c0`, probes from every
/// other camera. `corrupted` lists the frames that received injected noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub gallery: Gallery,
    pub probes: Vec<Tube>,
    pub corrupted: BTreeSet<FrameKey>,
}

pub fn person_id(identity: usize) -> String {
    format!("p{identity:03}")
}

pub fn camera_id(camera: usize) -> String {
    format!("c{camera}")
}

pub fn tube_id(identity: usize, camera: usize, tube: usize) -> String {
    format!("p{identity:03}-c{camera}-t{tube}")
}

struct Identity {
    latents: BTreeMap<String, Vec<f64>>,
    /// Orthonormal basis of the gait plane.
    gait_plane: Option<(Vec<f64>, Vec<f64>)>,
    /// Offsets indexed by camera, then channel.
    offsets: Vec<BTreeMap<String, Vec<f64>>>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut identities: Vec<Identity> = (0..cfg.n_identities)
        .map(|_| {
            let latents = cfg
                .dims
                .iter()
                .map(|(ch, &d)| (ch.clone(), unit_vector(&mut rng, d)))
                .collect();
            Identity {
                latents,
                gait_plane: None,
                offsets: Vec::new(),
            }
        })
        .collect();

    let retrieval_dim = cfg.dims[RETRIEVAL_CHANNEL];
    for pair in 0..cfg.distractor_pairs {
        let anchor = identities[2 * pair].latents[RETRIEVAL_CHANNEL].clone();
        let shift = noise_vector(&mut rng, retrieval_dim, cfg.distractor_spread);
        let partner = normalize(&add(&anchor, &shift));
        identities[2 * pair + 1]
            .latents
            .insert(RETRIEVAL_CHANNEL.to_string(), partner);
    }

    for identity in &mut identities {
        if let Some(&d) = cfg.dims.get(POSE_CHANNEL) {
            let a = unit_vector(&mut rng, d);
            let mut b = unit_vector(&mut rng, d);
            let proj = dot(&a, &b);
            b.iter_mut().zip(&a).for_each(|(bi, ai)| *bi -= proj * ai);
            identity.gait_plane = Some((a, normalize(&b)));
        }
        identity.offsets = (0..cfg.n_cameras)
            .map(|_| {
                cfg.dims
                    .iter()
                    .map(|(ch, &d)| (ch.clone(), noise_vector(&mut rng, d, cfg.camera_offset_sigma)))
                    .collect()
            })
            .collect();
    }

    let mut gallery_tubes = Vec::new();
    let mut probes = Vec::new();
    let mut corrupted = BTreeSet::new();
    let [min_frames, max_frames] = cfg.frames_per_tube;

    for camera in 0..cfg.n_cameras {
        for (p, identity) in identities.iter().enumerate() {
            for t in 0..cfg.tubes_per_identity_per_camera {
                let id = tube_id(p, camera, t);
                let n_frames = rng.random_range(min_frames..=max_frames);
                let start_ms = rng.random_range(0..600_000u64);
                let mut phase = rng.random_range(0.0..std::f64::consts::TAU);
                let mut frames = Vec::with_capacity(n_frames);

                for f in 0..n_frames {
                    if f > 0 {
                        let step: f64 = rng.sample(StandardNormal);
                        phase += cfg.pose_rate + cfg.pose_drift_sigma * step;
                    }
                    let is_noise = rng.random::<f64>() < cfg.noise_frame_rate;
                    let occluder = if is_noise && cfg.n_identities > 1 {
                        let other = rng.random_range(0..cfg.n_identities - 1);
                        Some(if other >= p { other + 1 } else { other })
                    } else {
                        None
                    };
                    let quality = if is_noise {
                        rng.random_range(0.0..0.3)
                    } else {
                        rng.random_range(0.7..=1.0)
                    };

                    let mut embeddings = BTreeMap::new();
                    for (channel, &d) in &cfg.dims {
                        let mut clean = add(&identity.latents[channel], &identity.offsets[camera][channel]);
                        if channel == POSE_CHANNEL {
                            clean.iter_mut().for_each(|x| *x *= POSE_IDENTITY_WEIGHT);
                            let (a, b) = identity.gait_plane.as_ref().expect("pose plane");
                            let (s, c) = phase.sin_cos();
                            for ((x, ai), bi) in clean.iter_mut().zip(a).zip(b) {
                                *x += c * ai + s * bi;
                            }
                        }
                        let noise = noise_vector(&mut rng, d, cfg.appearance_noise_sigma);
                        let mut v = add(&clean, &noise);
                        if is_noise {
                            let junk = noise_vector(&mut rng, d, CORRUPTION_NOISE_NORM);
                            let intruder = occluder.map(|o| &identities[o].latents[channel]);
                            v = v
                                .iter()
                                .zip(&junk)
                                .enumerate()
                                .map(|(i, (x, j))| {
                                    CORRUPTION_SIGNAL_WEIGHT * x + j + intruder.map_or(0.0, |l| l[i])
                                })
                                .collect();
                        }
                        embeddings.insert(channel.clone(), v.into_iter().map(|x| x as f32).collect());
                    }

                    let frame_index = f as u64;
                    if is_noise {
                        corrupted.insert(FrameKey::new(id.clone(), frame_index));
                    }
                    frames.push(FrameRecord {
                        tube_id: id.clone(),
                        camera_id: camera_id(camera),
                        person_id: Some(person_id(p)),
                        frame_index,
                        timestamp_ms: start_ms + frame_index * FRAME_PERIOD_MS,
                        quality,
                        embeddings,
                    });
                }

                let tube = Tube::new(frames)?;
                if camera == 0 {
                    gallery_tubes.push(tube);
                } else {
                    probes.push(tube);
                }
            }
        }
    }

    Ok(SynthData {
        gallery: Gallery::new(gallery_tubes)?,
        probes,
        corrupted,
    })
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if dot(&v, &v) > 0.0 {
            return normalize(&v);
        }
    }
}

/// Isotropic Gaussian vector with expected squared norm `sigma^2`.
fn noise_vector<R: Rng>(rng: &mut R, dim: usize, sigma: f64) -> Vec<f64> {
    let scale = sigma / (dim as f64).sqrt();
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}
