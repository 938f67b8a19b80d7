//! Displacement metrics, trainingless baselines, and dataset evaluation.
//!
//! MHD here is the directed max-of-min distance from prediction points to
//! ground-truth points. The literature's usual modified Hausdorff uses a
//! mean of minima instead; that variant is provided as
//! [`mhd_mean_of_min`] for comparison but plays no part in the reported
//! metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Scene;
use crate::gmm::GmmSequence;
use crate::model::{generate, ModelError, ModelParams};
use crate::multipac::{modal_paths, most_likely_path, ModalPath, ModalPathTree, MultipacConfig};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Aggregate metrics for one dataset and horizon, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub horizon: usize,
    pub ade: f64,
    pub fde: f64,
    pub mhd: f64,
    pub scenes: usize,
    pub agents: usize,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "dataset,horizon,ade,fde,mhd,scenes,agents";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.dataset, self.horizon, self.ade, self.fde, self.mhd, self.scenes, self.agents
        )
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn check_same_nonempty(pred: &[(f64, f64)], truth: &[(f64, f64)], op: &'static str) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(NumericsError::Dimension {
            op,
            detail: format!("{} predicted vs {} truth points", pred.len(), truth.len()),
        }
        .into());
    }
    if pred.is_empty() {
        return Err(EvalError::Usage(format!("{} of empty trajectories", op)));
    }
    Ok(())
}

/// Average Euclidean distance over all predicted timesteps.
pub fn ade(pred: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    check_same_nonempty(pred, truth, "ade")?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| dist(*p, *t)).sum();
    Ok(total / pred.len() as f64)
}

/// Euclidean distance at the final predicted timestep only.
pub fn fde(pred: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    check_same_nonempty(pred, truth, "fde")?;
    Ok(dist(*pred.last().unwrap(), *truth.last().unwrap()))
}

/// Directed max-of-min distance: the largest distance from any predicted
/// point to its nearest ground-truth point. Lengths need not match.
pub fn mhd(pred: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(EvalError::Usage("mhd of empty trajectories".into()));
    }
    let mut worst = 0.0f64;
    for p in pred {
        let nearest = truth
            .iter()
            .map(|t| dist(*p, *t))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// The literature-standard directed modified Hausdorff (mean of minima),
/// provided for comparison only.
pub fn mhd_mean_of_min(pred: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(EvalError::Usage("mhd of empty trajectories".into()));
    }
    let total: f64 = pred
        .iter()
        .map(|p| {
            truth
                .iter()
                .map(|t| dist(*p, *t))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Constant-velocity baseline: extrapolates the final observed
/// displacement.
pub fn cvm_predict(observed: &[(f64, f64)], horizon: usize) -> Result<Vec<(f64, f64)>> {
    if observed.len() < 2 {
        return Err(EvalError::Usage(
            "constant-velocity prediction needs at least 2 observed points".into(),
        ));
    }
    let last = observed[observed.len() - 1];
    let prev = observed[observed.len() - 2];
    let v = (last.0 - prev.0, last.1 - prev.1);
    Ok((1..=horizon)
        .map(|s| (last.0 + v.0 * s as f64, last.1 + v.1 * s as f64))
        .collect())
}

/// Linear-regression baseline: least-squares line per dimension over the
/// observed timesteps, extrapolated over the horizon.
pub fn linear_predict(observed: &[(f64, f64)], horizon: usize) -> Result<Vec<(f64, f64)>> {
    let n = observed.len();
    if n < 2 {
        return Err(EvalError::Usage(
            "linear prediction needs at least 2 observed points".into(),
        ));
    }
    let t_mean = (n as f64 - 1.0) / 2.0;
    let mut sxx = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut x_mean, mut y_mean) = (0.0, 0.0);
    for p in observed {
        x_mean += p.0;
        y_mean += p.1;
    }
    x_mean /= n as f64;
    y_mean /= n as f64;
    for (t, p) in observed.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxx += dt * dt;
        sx += dt * (p.0 - x_mean);
        sy += dt * (p.1 - y_mean);
    }
    let slope = (sx / sxx, sy / sxx);
    let at = |t: f64| {
        (
            x_mean + slope.0 * (t - t_mean),
            y_mean + slope.1 * (t - t_mean),
        )
    };
    Ok((0..horizon).map(|s| at((n + s) as f64)).collect())
}

/// What produces predicted trajectories during evaluation.
pub enum Predictor<'a> {
    ConstantVelocity,
    Linear,
    /// The trained model: generate, build the modal-path tree, take the
    /// highest-probability modal path.
    Model {
        params: &'a ModelParams,
        multipac: MultipacConfig,
    },
}

impl Predictor<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::ConstantVelocity => "cvm",
            Predictor::Linear => "lin",
            Predictor::Model { .. } => "model",
        }
    }

    /// Predicted trajectories for every agent of one scene.
    pub fn predict_scene(&self, scene: &Scene) -> Result<Vec<Vec<(f64, f64)>>> {
        let horizon = scene.pred_len();
        match self {
            Predictor::ConstantVelocity => (0..scene.n_agents())
                .map(|i| cvm_predict(scene.observed(i), horizon))
                .collect(),
            Predictor::Linear => (0..scene.n_agents())
                .map(|i| linear_predict(scene.observed(i), horizon))
                .collect(),
            Predictor::Model { params, multipac } => {
                let gmms = generate(scene, &params.generator, &params.config)?;
                gmms.iter()
                    .map(|seq| {
                        let (_, paths) = modal_paths(seq, multipac)?;
                        Ok(most_likely_path(&paths)?.points.clone())
                    })
                    .collect()
            }
        }
    }
}

/// Runs the predictor over every agent of every scene and averages the
/// three metrics per agent (not per scene).
pub fn evaluate(
    predictor: &Predictor,
    scenes: &[Scene],
    horizon: usize,
    dataset: &str,
) -> Result<MetricsRow> {
    if scenes.is_empty() {
        return Err(EvalError::Usage("evaluate on an empty dataset".into()));
    }
    for scene in scenes {
        if scene.pred_len() != horizon {
            return Err(EvalError::Usage(format!(
                "scene has prediction horizon {}, expected {}",
                scene.pred_len(),
                horizon
            )));
        }
    }
    let (mut ade_sum, mut fde_sum, mut mhd_sum) = (0.0, 0.0, 0.0);
    let mut agents = 0usize;
    for scene in scenes {
        let preds = predictor.predict_scene(scene)?;
        for (i, pred) in preds.iter().enumerate() {
            let truth = scene.future(i);
            ade_sum += ade(pred, truth)?;
            fde_sum += fde(pred, truth)?;
            mhd_sum += mhd(pred, truth)?;
            agents += 1;
        }
    }
    let n = agents as f64;
    Ok(MetricsRow {
        dataset: dataset.to_string(),
        horizon,
        ade: ade_sum / n,
        fde: fde_sum / n,
        mhd: mhd_sum / n,
        scenes: scenes.len(),
        agents,
    })
}

/// Everything needed to plot one agent's prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPrediction {
    pub id: i64,
    pub observed: Vec<(f64, f64)>,
    pub truth: Vec<(f64, f64)>,
    pub gmm: GmmSequence,
    pub tree: ModalPathTree,
    pub modal_paths: Vec<ModalPath>,
}

/// Per-scene prediction dump, the JSON export behind external plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePrediction {
    pub scene_index: usize,
    pub start_frame: i64,
    pub vehicle: Option<Vec<(f64, f64)>>,
    pub agents: Vec<AgentPrediction>,
}

/// Runs the full model pipeline over the scenes and collects plot-ready
/// dumps (observed, truth, mixture parameters, modal paths with weights).
pub fn predict_scenes(
    params: &ModelParams,
    multipac: &MultipacConfig,
    scenes: &[Scene],
) -> Result<Vec<ScenePrediction>> {
    let mut out = Vec::with_capacity(scenes.len());
    for (scene_index, scene) in scenes.iter().enumerate() {
        let gmms = generate(scene, &params.generator, &params.config)?;
        let mut agents = Vec::with_capacity(scene.n_agents());
        for (i, gmm) in gmms.into_iter().enumerate() {
            let (tree, paths) = modal_paths(&gmm, multipac)?;
            agents.push(AgentPrediction {
                id: scene.ped_ids[i],
                observed: scene.observed(i).to_vec(),
                truth: scene.future(i).to_vec(),
                gmm,
                tree,
                modal_paths: paths,
            });
        }
        out.push(ScenePrediction {
            scene_index,
            start_frame: scene.start_frame,
            vehicle: scene.vehicle.clone(),
            agents,
        });
    }
    Ok(out)
}
