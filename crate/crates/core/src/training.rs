//! Two-phase training: NLL-only warmup, then alternating adversarial
//! updates (one discriminator step, then one generator step, per batch).
//!
//! Losses follow the weighted binary-cross-entropy form with the modal-path
//! likelihood multiplying the discriminator score *inside* the log:
//!
//! - discriminator: `-[log D(X,Y) + sum_m log(1 - w_m * D(X, path_m))]`
//!   per agent, averaged over all agents in the batch;
//! - generator: `sum_m log(1 - w_m * D(X, path_m))` per agent averaged the
//!   same way, plus `alpha` times the NLL (a per-scene sum, averaged over
//!   the scenes of the batch).
//!
//! Scores are clamped to `[1e-7, 1 - 1e-7]` before any log. Gradients are
//! clipped to a global norm of 10 before each Adam step. Everything is
//! seeded; identical seeds produce identical reports and checkpoints.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Scene;
use crate::eval::{evaluate, EvalError, Predictor};
use crate::gmm::{nll_loss_vars, GmmSequence};
use crate::model::{
    discriminate_rows_vars, generate_vars, normalize_scene, save_checkpoint, DiscriminatorVars,
    GeneratorVars, ModelConfig, ModelError, ModelParams,
};
use crate::multipac::{build_tree, modal_paths_vars, MultipacConfig};
use crate::numerics::{clip_global_norm, seeded_rng, AdamState, NumericsError, Tape, Tensor, Var};

const SCORE_CLAMP: f64 = 1e-7;
const GRAD_CLIP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training aborted at epoch {epoch}, batch {batch}: {source}")]
    Aborted {
        epoch: usize,
        batch: usize,
        source: NumericsError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight on the NLL term of the generator objective.
    pub alpha: f64,
    pub seed: u64,
    /// Write a checkpoint every N epochs (0: only the final one).
    pub checkpoint_every: usize,
    /// Compute validation metrics every N epochs (0: never).
    pub validate_every: usize,
    pub model: ModelConfig,
    pub multipac: MultipacConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            warmup_epochs: 10,
            total_epochs: 100,
            batch_size: 32,
            learning_rate: 0.001,
            alpha: 0.1,
            seed: 0,
            checkpoint_every: 0,
            validate_every: 1,
            model: ModelConfig::default(),
            multipac: MultipacConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config(
                "total_epochs and batch_size must be positive".into(),
            ));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(TrainError::Config(format!(
                "warmup_epochs {} exceeds total_epochs {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.alpha < 0.0 {
            return Err(TrainError::Config("alpha must be non-negative".into()));
        }
        if self.alpha == 0.0 && self.warmup_epochs > 0 {
            return Err(TrainError::Config(
                "alpha = 0 contradicts a warmup phase: warmup trains on the NLL term \
                 that alpha = 0 removes from the objective"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Windowed, validated scenes for training plus a held-out validation set
/// (may be empty; validation metrics are then skipped).
pub struct TrainData {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-scene NLL over the epoch's training batches.
    pub l_lh: f64,
    /// Mean per-agent generator adversarial loss (adversarial phase only).
    pub g_adv: Option<f64>,
    pub d_loss: Option<f64>,
    pub val_ade: Option<f64>,
    pub val_fde: Option<f64>,
    pub val_mhd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,l_lh,g_adv,d_loss,val_ade,val_fde,val_mhd";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch,
                e.l_lh,
                opt(e.g_adv),
                opt(e.d_loss),
                opt(e.val_ade),
                opt(e.val_fde),
                opt(e.val_mhd),
            ));
        }
        out
    }
}

/// Per-agent fake-path scores with weights: `fake[i]` lists
/// `(score, weight)` for each modal path of agent `i`.
///
/// Plain-value form of the discriminator objective (the quantity the
/// discriminator maximizes, negated): per agent
/// `-[log D_real + sum_m log(1 - w_m * D_fake_m)]`, averaged over agents.
pub fn adversarial_discriminator_loss(
    real_scores: &[f64],
    fake: &[Vec<(f64, f64)>],
) -> Result<f64> {
    if real_scores.len() != fake.len() || real_scores.is_empty() {
        return Err(TrainError::Usage(format!(
            "{} real scores vs {} fake agents",
            real_scores.len(),
            fake.len()
        )));
    }
    let mut total = 0.0;
    for (real, paths) in real_scores.iter().zip(fake) {
        total -= clamped_log(*real)?;
        for &(score, weight) in paths {
            total -= log_one_minus_weighted(score, weight)?;
        }
    }
    Ok(total / real_scores.len() as f64)
}

/// Plain-value generator adversarial objective:
/// `sum_m log(1 - w_m * D_fake_m)` per agent, averaged over agents.
pub fn adversarial_generator_loss(fake: &[Vec<(f64, f64)>]) -> Result<f64> {
    if fake.is_empty() {
        return Err(TrainError::Usage("no agents in adversarial loss".into()));
    }
    let mut total = 0.0;
    for paths in fake {
        for &(score, weight) in paths {
            total += log_one_minus_weighted(score, weight)?;
        }
    }
    Ok(total / fake.len() as f64)
}

fn guard_score(score: f64) -> Result<f64> {
    if !(score > 0.0 && score < 1.0) {
        return Err(TrainError::Usage(format!(
            "discriminator score {} outside (0, 1)",
            score
        )));
    }
    Ok(score.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP))
}

fn clamped_log(score: f64) -> Result<f64> {
    Ok(guard_score(score)?.ln())
}

fn log_one_minus_weighted(score: f64, weight: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(TrainError::Usage(format!(
            "modal path weight {} outside [0, 1]",
            weight
        )));
    }
    Ok((1.0 - weight * guard_score(score)?).ln())
}

/// Trains from fresh parameters.
pub fn train(data: &TrainData, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    train_with(data, config, None, None)
}

/// Trains with optional output directory (report + checkpoints) and an
/// optional resume point `(params, completed_epochs)`. Resuming keeps the
/// epoch numbering but restarts optimizer moments.
pub fn train_with(
    data: &TrainData,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<(ModelParams, usize)>,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::Usage("training dataset is empty".into()));
    }
    for scene in data.train.iter().chain(&data.val) {
        scene.validate().map_err(ModelError::from)?;
        if scene.obs_len != config.model.obs_len || scene.pred_len() != config.model.pred_len {
            return Err(TrainError::Usage(format!(
                "scene window {}+{} does not match configured {}+{}",
                scene.obs_len,
                scene.pred_len(),
                config.model.obs_len,
                config.model.pred_len
            )));
        }
    }

    let (mut params, start_epoch) = match resume {
        Some((p, done)) => (p, done),
        None => (ModelParams::init(&config.model, config.seed), 0),
    };
    let mut gen_adam = AdamState::new(config.learning_rate);
    let mut disc_adam = AdamState::new(config.learning_rate);
    let mut report = TrainReport::default();

    for epoch in (start_epoch + 1)..=config.total_epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut rng = seeded_rng(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);

        let warmup = epoch <= config.warmup_epochs;
        let mut llh_sum = 0.0;
        let mut scene_count = 0usize;
        let mut g_adv_sum = 0.0;
        let mut d_loss_sum = 0.0;
        let mut batches = 0usize;

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let scenes: Vec<&Scene> = batch.iter().map(|&i| &data.train[i]).collect();
            let ctx = |source: NumericsError| TrainError::Aborted {
                epoch,
                batch: batch_idx,
                source,
            };
            if warmup {
                let llh = warmup_step(&mut params, &mut gen_adam, &scenes, config).map_err(
                    |e| match e {
                        TrainError::Numerics(n) => ctx(n),
                        other => other,
                    },
                )?;
                llh_sum += llh * scenes.len() as f64;
            } else {
                let d_loss = discriminator_step(&mut params, &mut disc_adam, &scenes, config)
                    .map_err(|e| match e {
                        TrainError::Numerics(n) => ctx(n),
                        other => other,
                    })?;
                let (llh, g_adv) = generator_step(&mut params, &mut gen_adam, &scenes, config)
                    .map_err(|e| match e {
                        TrainError::Numerics(n) => ctx(n),
                        other => other,
                    })?;
                llh_sum += llh * scenes.len() as f64;
                g_adv_sum += g_adv;
                d_loss_sum += d_loss;
            }
            scene_count += scenes.len();
            batches += 1;
        }

        let mut record = EpochRecord {
            epoch,
            l_lh: llh_sum / scene_count as f64,
            g_adv: (!warmup).then(|| g_adv_sum / batches as f64),
            d_loss: (!warmup).then(|| d_loss_sum / batches as f64),
            val_ade: None,
            val_fde: None,
            val_mhd: None,
        };
        if !record.l_lh.is_finite() {
            return Err(TrainError::Aborted {
                epoch,
                batch: 0,
                source: NumericsError::NonFinite { op: "epoch l_lh" },
            });
        }
        let validate_now = config.validate_every > 0
            && !data.val.is_empty()
            && (epoch % config.validate_every == 0 || epoch == config.total_epochs);
        if validate_now {
            let row = evaluate(
                &Predictor::Model {
                    params: &params,
                    multipac: config.multipac,
                },
                &data.val,
                config.model.pred_len,
                "val",
            )?;
            record.val_ade = Some(row.ade);
            record.val_fde = Some(row.fde);
            record.val_mhd = Some(row.mhd);
        }
        report.epochs.push(record);

        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                let path = dir.join(format!("checkpoint-{:04}.ckpt", epoch));
                save_checkpoint(&path, &params, epoch)?;
            }
        }
    }

    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("checkpoint-final.ckpt"), &params, config.total_epochs)?;
        let path = dir.join("report.csv");
        let mut file = std::fs::File::create(&path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(report.to_csv().as_bytes())
            .map_err(|source| TrainError::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    Ok((params, report))
}

/// Differentiable NLL of one normalized scene under the generator vars.
fn scene_nll(
    tape: &Tape,
    normalized: &Scene,
    gen: &GeneratorVars,
    config: &ModelConfig,
) -> crate::model::Result<(Var, Vec<crate::gmm::MdnStep>)> {
    let steps = generate_vars(tape, normalized, gen, config)?;
    let truth: Vec<Vec<(f64, f64)>> = (0..config.pred_len)
        .map(|t| {
            (0..normalized.n_agents())
                .map(|i| normalized.future(i)[t])
                .collect()
        })
        .collect();
    let nll = nll_loss_vars(tape, &steps, &truth)?;
    Ok((nll, steps))
}

fn warmup_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    scenes: &[&Scene],
    config: &TrainConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let bound = GeneratorVars::bind(&tape, &params.generator, true);
    let mut total: Option<Var> = None;
    for scene in scenes {
        let (normalized, _) = normalize_scene(scene);
        let (nll, _) = scene_nll(&tape, &normalized, &bound.vars, &config.model)?;
        total = Some(match total {
            Some(acc) => acc.add(&nll).map_err(TrainError::from)?,
            None => nll,
        });
    }
    let loss = total
        .expect("non-empty batch")
        .scale(1.0 / scenes.len() as f64)
        .map_err(TrainError::from)?;
    let value = loss.value().values()[0];
    let grads_map = tape.backward(&loss).map_err(TrainError::from)?;
    let mut grads: Vec<Tensor> = bound.ordered().iter().map(|v| grads_map.get(v)).collect();
    clip_global_norm(&mut grads, GRAD_CLIP);
    let mut fields = params.generator.fields_mut();
    let mut tensors: Vec<&mut Tensor> = fields.iter_mut().map(|(_, t)| &mut **t).collect();
    adam.step(&mut tensors, &grads).map_err(TrainError::from)?;
    Ok(value)
}

/// Generator forward (values only) for one scene: normalized scene plus
/// per-agent mixture sequences in the normalized frame.
fn forward_plain(
    params: &ModelParams,
    config: &ModelConfig,
    scene: &Scene,
) -> crate::model::Result<(Scene, Vec<GmmSequence>)> {
    let (normalized, _) = normalize_scene(scene);
    let tape = Tape::new();
    let bound = GeneratorVars::bind(&tape, &params.generator, false);
    let steps = generate_vars(&tape, &normalized, &bound.vars, config)?;
    let gmms = (0..normalized.n_agents())
        .map(|agent| GmmSequence {
            steps: steps.iter().map(|s| s.to_gmm_step(agent)).collect(),
        })
        .collect();
    Ok((normalized, gmms))
}

/// Builds the per-timestep `[R, 2]` constants for a batch of full tracks.
fn constant_track_steps(tape: &Tape, tracks: &[Vec<(f64, f64)>]) -> Vec<Var> {
    let rows = tracks.len();
    let len = tracks[0].len();
    (0..len)
        .map(|t| {
            let mut values = Vec::with_capacity(rows * 2);
            for track in tracks {
                values.push(track[t].0);
                values.push(track[t].1);
            }
            tape.constant(Tensor::new(vec![rows, 2], values).expect("track step"))
        })
        .collect()
}

fn clamp_scores(scores: &Var) -> crate::numerics::Result<Var> {
    scores.clamp_min(SCORE_CLAMP)?.clamp_max(1.0 - SCORE_CLAMP)
}

/// One discriminator update on a batch. Fake paths come from a fresh
/// generator forward pass and enter as constants.
fn discriminator_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    scenes: &[&Scene],
    config: &TrainConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let bound = DiscriminatorVars::bind(&tape, &params.discriminator, true);
    let mut loss_acc: Option<Var> = None;
    let mut agents_total = 0usize;
    for scene in scenes {
        let (normalized, gmms) = forward_plain(params, &config.model, scene)?;
        let n = normalized.n_agents();
        agents_total += n;

        // Real tracks: observed + ground-truth future, one row per agent.
        let real_tracks: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|i| normalized.positions[i].clone())
            .collect();
        let real_steps = constant_track_steps(&tape, &real_tracks);
        let real_scores = discriminate_rows_vars(&tape, &real_steps, &bound.vars)?;
        let real_term = clamp_scores(&real_scores)
            .map_err(TrainError::from)?
            .log()
            .map_err(TrainError::from)?
            .sum()
            .map_err(TrainError::from)?;

        // Fake tracks: observed + each modal path, one row per (agent, path).
        let mut fake_tracks = Vec::new();
        let mut weights = Vec::new();
        for (i, gmm) in gmms.iter().enumerate() {
            let tree = build_tree(gmm, &config.multipac).map_err(TrainError::from)?;
            let paths =
                crate::multipac::extract_modal_paths(&tree).map_err(TrainError::from)?;
            for path in paths {
                let mut track = normalized.observed(i).to_vec();
                track.extend(&path.points);
                fake_tracks.push(track);
                weights.push(path.weight);
            }
        }
        let fake_steps = constant_track_steps(&tape, &fake_tracks);
        let fake_scores = discriminate_rows_vars(&tape, &fake_steps, &bound.vars)?;
        let w = tape.constant(Tensor::new(vec![weights.len(), 1], weights).expect("weights"));
        let fake_term = clamp_scores(&fake_scores)
            .map_err(TrainError::from)?
            .mul(&w)
            .map_err(TrainError::from)?
            .neg()
            .map_err(TrainError::from)?
            .add_scalar(1.0)
            .map_err(TrainError::from)?
            .log()
            .map_err(TrainError::from)?
            .sum()
            .map_err(TrainError::from)?;

        let scene_term = real_term.add(&fake_term).map_err(TrainError::from)?;
        loss_acc = Some(match loss_acc {
            Some(acc) => acc.add(&scene_term).map_err(TrainError::from)?,
            None => scene_term,
        });
    }
    let loss = loss_acc
        .expect("non-empty batch")
        .scale(-1.0 / agents_total as f64)
        .map_err(TrainError::from)?;
    let value = loss.value().values()[0];
    let grads_map = tape.backward(&loss).map_err(TrainError::from)?;
    let mut grads: Vec<Tensor> = bound.ordered().iter().map(|v| grads_map.get(v)).collect();
    clip_global_norm(&mut grads, GRAD_CLIP);
    let mut fields = params.discriminator.fields_mut();
    let mut tensors: Vec<&mut Tensor> = fields.iter_mut().map(|(_, t)| &mut **t).collect();
    adam.step(&mut tensors, &grads).map_err(TrainError::from)?;
    Ok(value)
}

/// One generator update on a batch: adversarial term (through the
/// differentiable modal-path overlay and a frozen discriminator) plus
/// `alpha` times the NLL. Returns `(mean per-scene NLL, mean per-agent
/// adversarial loss)`.
fn generator_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    scenes: &[&Scene],
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let bound = GeneratorVars::bind(&tape, &params.generator, true);
    let disc = DiscriminatorVars::bind(&tape, &params.discriminator, false);

    let mut nll_acc: Option<Var> = None;
    let mut adv_acc: Option<Var> = None;
    let mut agents_total = 0usize;
    for scene in scenes {
        let (normalized, _) = normalize_scene(scene);
        let (nll, steps) = scene_nll(&tape, &normalized, &bound.vars, &config.model)?;
        nll_acc = Some(match nll_acc {
            Some(acc) => acc.add(&nll).map_err(TrainError::from)?,
            None => nll,
        });

        let n = normalized.n_agents();
        agents_total += n;
        for agent in 0..n {
            let gmm = GmmSequence {
                steps: steps.iter().map(|s| s.to_gmm_step(agent)).collect(),
            };
            let tree = build_tree(&gmm, &config.multipac).map_err(TrainError::from)?;
            let paths = modal_paths_vars(&tree, &steps, agent).map_err(TrainError::from)?;

            let observed = normalized.observed(agent);
            let obs_steps: Vec<Var> = (0..config.model.obs_len)
                .map(|t| {
                    let mut values = Vec::with_capacity(paths.len() * 2);
                    for _ in 0..paths.len() {
                        values.push(observed[t].0);
                        values.push(observed[t].1);
                    }
                    tape.constant(Tensor::new(vec![paths.len(), 2], values).expect("obs step"))
                })
                .collect();
            let mut track_steps = obs_steps;
            for t in 0..config.model.pred_len {
                let rows: Vec<Var> = paths
                    .iter()
                    .map(|p| {
                        tape.concat_cols(&[&p.points[t].0, &p.points[t].1])
                            .map_err(TrainError::from)
                    })
                    .collect::<Result<_>>()?;
                let refs: Vec<&Var> = rows.iter().collect();
                track_steps.push(tape.concat_rows(&refs).map_err(TrainError::from)?);
            }
            let scores = discriminate_rows_vars(&tape, &track_steps, &disc.vars)?;
            let weight_refs: Vec<&Var> = paths.iter().map(|p| &p.weight).collect();
            let weights = tape.concat_rows(&weight_refs).map_err(TrainError::from)?;
            let term = clamp_scores(&scores)
                .map_err(TrainError::from)?
                .mul(&weights)
                .map_err(TrainError::from)?
                .neg()
                .map_err(TrainError::from)?
                .add_scalar(1.0)
                .map_err(TrainError::from)?
                .log()
                .map_err(TrainError::from)?
                .sum()
                .map_err(TrainError::from)?;
            adv_acc = Some(match adv_acc {
                Some(acc) => acc.add(&term).map_err(TrainError::from)?,
                None => term,
            });
        }
    }

    let nll_mean = nll_acc
        .expect("non-empty batch")
        .scale(1.0 / scenes.len() as f64)
        .map_err(TrainError::from)?;
    let adv_mean = adv_acc
        .expect("agents present")
        .scale(1.0 / agents_total as f64)
        .map_err(TrainError::from)?;
    let loss = adv_mean
        .add(&nll_mean.scale(config.alpha).map_err(TrainError::from)?)
        .map_err(TrainError::from)?;

    let nll_value = nll_mean.value().values()[0];
    let adv_value = adv_mean.value().values()[0];
    let grads_map = tape.backward(&loss).map_err(TrainError::from)?;
    let mut grads: Vec<Tensor> = bound.ordered().iter().map(|v| grads_map.get(v)).collect();
    clip_global_norm(&mut grads, GRAD_CLIP);
    let mut fields = params.generator.fields_mut();
    let mut tensors: Vec<&mut Tensor> = fields.iter_mut().map(|(_, t)| &mut **t).collect();
    adam.step(&mut tensors, &grads).map_err(TrainError::from)?;
    Ok((nll_value, adv_value))
}
