//! Probabilistic multimodal pedestrian trajectory prediction.
//!
//! The crate implements an adversarially trained encoder–decoder model that
//! outputs a bivariate Gaussian mixture per agent per future timestep instead
//! of a single trajectory. Social context is pooled with a graph attention
//! layer (GVAT) whose pairwise features carry each agent's offset to a shared
//! vehicle, so the same network handles plain crowds and single-vehicle
//! scenes. Mixture outputs are condensed into "modal paths" by per-timestep
//! weighted clustering (MultiPAC); the highest-probability modal path is used
//! for evaluation, and all modal paths are scored by the discriminator during
//! training.
//!
//! Module map:
//! - [`numerics`]: dense f64 tensors, a reverse-mode tape, Adam.
//! - [`gmm`]: bivariate Gaussian mixtures, the MDN activation, NLL loss.
//! - [`model`]: generator (LSTM encoder → GVAT → zero-feed LSTM decoder →
//!   MDN head) and discriminator (embedding → LSTM → MLP).
//! - [`multipac`]: weighted DBSCAN over mixture components, modal-path trees.
//! - [`training`]: NLL warmup plus alternating adversarial updates.
//! - [`data`]: trajectory file ingestion, windowing, a social-force synthetic
//!   scene generator, flip augmentation.
//! - [`eval`]: ADE/FDE/MHD metrics, linear and constant-velocity baselines.

pub mod data;
pub mod eval;
pub mod gmm;
pub mod model;
pub mod multipac;
pub mod numerics;
pub mod training;
