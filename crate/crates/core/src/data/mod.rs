//! Trajectory ingestion, scene windowing and synthetic scene generation.
//!
//! The on-disk format is whitespace-delimited text, one observation per
//! line: `frame agent_id x y`. Frames and ids must be integral; the id
//! [`VEHICLE_ID`] (-1) is reserved for the vehicle track. Files written by
//! the synthetic generator use the same format, so every pipeline stage is
//! file-compatible.

mod augment;
mod ethucy;
mod sfm;
mod window;

pub use augment::{augment_flip, flip_scene, Flip};
pub use ethucy::{load_trajectory_file, parse_trajectory_text, write_trajectory_file};
pub use sfm::{generate_sfm, generate_template_scenes, SfmConfig, Template};
pub use window::{split_contiguous, window_scenes};

use thiserror::Error;

/// Reserved agent id marking vehicle observations in trajectory files.
pub const VEHICLE_ID: i64 = -1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid data: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// All observations of one agent, ordered by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrack {
    pub id: i64,
    /// `(frame, x, y)` triples with strictly increasing frames.
    pub obs: Vec<(i64, f64, f64)>,
}

/// A fixed-length window in which every included agent is fully observed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub ped_ids: Vec<i64>,
    /// `positions[agent][timestep]`, `obs_len + pred_len` steps per agent.
    pub positions: Vec<Vec<(f64, f64)>>,
    /// Vehicle track over the same window, when one is present throughout.
    pub vehicle: Option<Vec<(f64, f64)>>,
    pub obs_len: usize,
    /// First source frame of the window, for traceability.
    pub start_frame: i64,
    /// Source frames between consecutive timesteps.
    pub frame_step: i64,
    /// Seconds between consecutive timesteps.
    pub dt: f64,
}

impl Scene {
    pub fn n_agents(&self) -> usize {
        self.ped_ids.len()
    }

    pub fn total_len(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn pred_len(&self) -> usize {
        self.total_len() - self.obs_len
    }

    /// Observed part of agent `i`'s track (`t <= T_obs`).
    pub fn observed(&self, i: usize) -> &[(f64, f64)] {
        &self.positions[i][..self.obs_len]
    }

    /// Ground-truth future of agent `i` (`T_obs < t <= T_pred`).
    pub fn future(&self, i: usize) -> &[(f64, f64)] {
        &self.positions[i][self.obs_len..]
    }

    /// Last observed position of agent `i`.
    pub fn last_observed(&self, i: usize) -> (f64, f64) {
        self.positions[i][self.obs_len - 1]
    }

    /// Re-checks the completeness invariants: equal track lengths, an
    /// observation window shorter than the whole track, finite positions,
    /// and a vehicle track (when present) covering the full window.
    pub fn validate(&self) -> Result<()> {
        if self.ped_ids.len() != self.positions.len() {
            return Err(DataError::Invalid(format!(
                "{} ids for {} tracks",
                self.ped_ids.len(),
                self.positions.len()
            )));
        }
        if self.ped_ids.is_empty() {
            return Err(DataError::Invalid("scene with zero agents".into()));
        }
        let total = self.total_len();
        if self.obs_len == 0 || self.obs_len >= total {
            return Err(DataError::Invalid(format!(
                "observation window {} of total {}",
                self.obs_len, total
            )));
        }
        for (id, track) in self.ped_ids.iter().zip(&self.positions) {
            if track.len() != total {
                return Err(DataError::Invalid(format!(
                    "agent {} covers {} of {} frames",
                    id,
                    track.len(),
                    total
                )));
            }
            if track.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                return Err(DataError::Invalid(format!("agent {} has non-finite position", id)));
            }
        }
        if let Some(v) = &self.vehicle {
            if v.len() != total {
                return Err(DataError::Invalid(format!(
                    "vehicle covers {} of {} frames",
                    v.len(),
                    total
                )));
            }
        }
        Ok(())
    }
}
