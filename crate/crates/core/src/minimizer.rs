//! Key-pose query minimization.
//!
//! A query tube is reduced to a small set of pose-diverse frames. The
//! production path is a greedy novelty rule anchored at frame 0. Each
//! remaining frame has a blocking level, its highest pose similarity to the
//! selection. Frames are admitted level by level, lowest first, with a
//! temporal scan inside each level, until the lowest level reaches the
//! query threshold `phi`. Admission never depends on `phi` except through
//! the stopping point, so the selections for increasing `phi` are nested.
//! On exit the selected frames are mutually below `phi` and every excluded
//! frame is at least `phi`-similar to some selected frame.
//!
//! A plain single-pass scan ("keep frame j if it is novel against the frames
//! kept so far") is not monotone: a frame that becomes novel at a higher
//! `phi` can block several later frames.
//!
//! Every selection is scored with the query energy
//!
//! ```text
//! E = phi * sum_{i in Q} xi_i + sum_{j not in Q} gamma_j
//! xi_i    = min_{j in Q, j != i} sigma_ij      (0 when |Q| = 1)
//! gamma_j = max_{i in Q} sigma_ij
//! ```
//!
//! where the first term penalises redundancy inside the selection and the
//! second the similarity mass left uncovered. [`exhaustive_minimize`]
//! enumerates every selection for small tubes and serves as the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Tube, POSE_CHANNEL};
use crate::similarity::{normalized, resolve_channel};

/// Largest tube [`exhaustive_minimize`] accepts.
pub const EXHAUSTIVE_MAX_FRAMES: usize = 16;

/// Symmetric pairwise similarities in [0, 1] with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    m: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Value("similarity matrix must be square".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let sim = Self { m, values };
        sim.validate()?;
        Ok(sim)
    }

    /// Builds a matrix from a function of the upper triangle (`i < j`).
    pub fn from_fn<F>(m: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut values = vec![1.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let v = f(i, j);
                values[i * m + j] = v;
                values[j * m + i] = v;
            }
        }
        let sim = Self { m, values };
        sim.validate()?;
        Ok(sim)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.m {
            if self.get(i, i) != 1.0 {
                return Err(Error::Value(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..self.m {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Value(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                if v != self.get(j, i) {
                    return Err(Error::Value(format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    pub phi: f64,
    pub channel: String,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            phi: 0.4,
            channel: POSE_CHANNEL.to_string(),
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::Config(format!("phi {} outside (0, 1)", self.phi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub xi_sum: f64,
    pub gamma_sum: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizedQuery {
    /// Selected positions within the tube, ascending.
    pub selected: Vec<usize>,
    /// Remaining positions, ascending.
    pub excluded: Vec<usize>,
    pub energy: EnergyBreakdown,
}

/// Pose similarity `(1 + cos) / 2` between every pair of frames.
pub fn pairwise_similarity(tube: &Tube, channel: &str) -> Result<SimilarityMatrix> {
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
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..m)
                .map(|j| {
                    let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                    ((1.0 + c.clamp(-1.0, 1.0)) / 2.0).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    SimilarityMatrix::from_fn(m, |i, j| upper[i][j - i - 1])
}

pub fn greedy_minimize(sim: &SimilarityMatrix, cfg: &MinimizerConfig) -> Result<MinimizedQuery> {
    cfg.validate()?;
    let m = sim.size();
    if m == 0 {
        return Err(Error::Contract("cannot minimize an empty tube".into()));
    }
    let mut in_q = vec![false; m];
    in_q[0] = true;
    // Highest similarity of each frame to the selection.
    let mut blocking: Vec<f64> = sim.row(0).to_vec();
    loop {
        let level = (0..m)
            .filter(|&j| !in_q[j])
            .map(|j| blocking[j])
            .fold(f64::INFINITY, f64::min);
        if level >= cfg.phi {
            break;
        }
        for j in 0..m {
            if !in_q[j] && blocking[j] <= level {
                in_q[j] = true;
                for (b, &s) in blocking.iter_mut().zip(sim.row(j)) {
                    *b = b.max(s);
                }
            }
        }
    }
    let selected = (0..m).filter(|&i| in_q[i]).collect();
    finish(sim, selected, cfg)
}

fn finish(sim: &SimilarityMatrix, selected: Vec<usize>, cfg: &MinimizerConfig) -> Result<MinimizedQuery> {
    let energy = query_energy(sim, &selected, cfg)?;
    let mut in_q = vec![false; sim.size()];
    selected.iter().for_each(|&i| in_q[i] = true);
    let excluded = (0..sim.size()).filter(|&j| !in_q[j]).collect();
    Ok(MinimizedQuery {
        selected,
        excluded,
        energy,
    })
}

pub fn query_energy(
    sim: &SimilarityMatrix,
    selected: &[usize],
    cfg: &MinimizerConfig,
) -> Result<EnergyBreakdown> {
    cfg.validate()?;
    let m = sim.size();
    if selected.is_empty() {
        return Err(Error::Contract("query selection is empty".into()));
    }
    let mut in_q = vec![false; m];
    for &i in selected {
        if i >= m {
            return Err(Error::Contract(format!("selected index {i} out of range 0..{m}")));
        }
        if std::mem::replace(&mut in_q[i], true) {
            return Err(Error::Contract(format!("selected index {i} appears twice")));
        }
    }
    let members: Vec<usize> = (0..m).filter(|&i| in_q[i]).collect();

    let xi_sum: f64 = if members.len() < 2 {
        0.0
    } else {
        members
            .iter()
            .map(|&i| {
                members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| sim.get(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let gamma_sum: f64 = (0..m)
        .filter(|&j| !in_q[j])
        .map(|j| {
            members
                .iter()
                .map(|&i| sim.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(EnergyBreakdown {
        xi_sum,
        gamma_sum,
        total: cfg.phi * xi_sum + gamma_sum,
    })
}

/// Minimum-energy selection among all subsets containing frame 0. Ties go
/// to the smaller subset, then to the lexicographically smaller index list.
pub fn exhaustive_minimize(sim: &SimilarityMatrix, cfg: &MinimizerConfig) -> Result<MinimizedQuery> {
    cfg.validate()?;
    let m = sim.size();
    if m == 0 {
        return Err(Error::Contract("cannot minimize an empty tube".into()));
    }
    if m > EXHAUSTIVE_MAX_FRAMES {
        return Err(Error::Size {
            m,
            max: EXHAUSTIVE_MAX_FRAMES,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in (1u32..(1 << m)).step_by(2) {
        let subset: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let total = query_energy(sim, &subset, cfg)?.total;
        let better = match &best {
            None => true,
            Some((best_total, best_subset)) => total
                .total_cmp(best_total)
                .then(subset.len().cmp(&best_subset.len()))
                .then_with(|| subset.cmp(best_subset))
                .is_lt(),
        };
        if better {
            best = Some((total, subset));
        }
    }
    let (_, selected) = best.expect("at least one subset");
    finish(sim, selected, cfg)
}
