//! The generator (LSTM encoder → GVAT pooling → zero-feed LSTM decoder →
//! MDN head) and the discriminator (embedding → LSTM encoder → MLP).
//!
//! Coordinate frame: before entering either network, a scene is shifted so
//! the pedestrian centroid at the last observed timestep is the origin;
//! predicted mixture means are shifted back before anything downstream sees
//! them. Training performs the same shift on ground truth, so generator,
//! discriminator and losses all operate in the normalized frame.

mod checkpoint;
mod discriminator;
mod generator;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_checkpoint};
pub use discriminator::{discriminate, discriminate_rows_vars};
pub use generator::{
    decode_vars, encode_vars, generate, generate_vars, gvat_pool_vars, EncoderState, GvatOutput,
};
pub use params::{
    BoundNet, DiscriminatorParams, DiscriminatorVars, GeneratorParams, GeneratorVars, GvatParams,
    Linear, LinearVars, LstmParams, LstmVars, Mlp, MlpVars,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Scene};
use crate::numerics::{seeded_rng, NumericsError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture hyperparameters, stored next to the weights in checkpoints
/// and validated on load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Mixture components per agent per timestep.
    pub k: usize,
    /// Observed timesteps fed to the encoder.
    pub obs_len: usize,
    /// Prediction horizon in timesteps.
    pub pred_len: usize,
    /// Width of the coordinate embeddings.
    pub embed_dim: usize,
    /// Width of the relative-position embedding inside GVAT.
    pub r_embed_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    /// Hidden width of both MLPs.
    pub mlp_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 6,
            obs_len: 8,
            pred_len: 12,
            embed_dim: 16,
            r_embed_dim: 16,
            gen_hidden: 32,
            disc_hidden: 64,
            mlp_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k", self.k),
            ("obs_len", self.obs_len),
            ("pred_len", self.pred_len),
            ("embed_dim", self.embed_dim),
            ("r_embed_dim", self.r_embed_dim),
            ("gen_hidden", self.gen_hidden),
            ("disc_hidden", self.disc_hidden),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::Checkpoint(format!(
                    "model config field {} must be positive",
                    name
                )));
            }
        }
        Ok(())
    }
}

/// All learnable weights of both networks plus the architecture they
/// instantiate.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

impl ModelParams {
    /// Fresh parameters: weights uniform in `[-1/sqrt(fan_in), ..]`, biases
    /// zero, drawn deterministically from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        ModelParams {
            config: config.clone(),
            generator: GeneratorParams::init(config, &mut rng),
            discriminator: DiscriminatorParams::init(config, &mut rng),
        }
    }
}

/// Centroid of pedestrian positions at the last observed timestep; the
/// origin of the normalized frame.
pub fn scene_offset(scene: &Scene) -> (f64, f64) {
    let t = scene.obs_len - 1;
    let n = scene.n_agents() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for track in &scene.positions {
        cx += track[t].0;
        cy += track[t].1;
    }
    (cx / n, cy / n)
}

/// Shifts every position (pedestrians and vehicle) by `-offset`.
pub fn normalize_scene(scene: &Scene) -> (Scene, (f64, f64)) {
    let offset = scene_offset(scene);
    let mut out = scene.clone();
    for track in &mut out.positions {
        for p in track.iter_mut() {
            p.0 -= offset.0;
            p.1 -= offset.1;
        }
    }
    if let Some(v) = &mut out.vehicle {
        for p in v.iter_mut() {
            p.0 -= offset.0;
            p.1 -= offset.1;
        }
    }
    (out, offset)
}
