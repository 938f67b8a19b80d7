//! Discriminator forward pass: embed every point of a full track (observed
//! plus candidate future), run the LSTM encoder across all timesteps, and
//! classify the final hidden state through the MLP with a sigmoid output.

use crate::numerics::{NumericsError, Tape, Tensor, Var};

use super::params::DiscriminatorVars;
use super::{DiscriminatorParams, ModelConfig, Result};

/// Batched scoring: `track_steps[t]` holds row `r`'s position at timestep
/// `t` as an `[R, 2]` var (rows are independent agent/candidate pairs).
/// Returns `[R, 1]` scores, each strictly inside (0, 1).
pub fn discriminate_rows_vars(
    tape: &Tape,
    track_steps: &[Var],
    disc: &DiscriminatorVars,
) -> Result<Var> {
    let Some(first) = track_steps.first() else {
        return Err(NumericsError::Usage("discriminate on an empty track".into()).into());
    };
    let rows = first.shape()[0];
    let mut hidden = tape.constant(Tensor::zeros(&[rows, disc.encoder.hidden]));
    let mut cell = hidden.clone();
    for step in track_steps {
        if step.shape() != vec![rows, 2] {
            return Err(NumericsError::Dimension {
                op: "discriminate",
                detail: format!("track step shape {:?}, expected [{}, 2]", step.shape(), rows),
            }
            .into());
        }
        let embedded = disc.input_embedding.apply(step)?;
        let (new_hidden, new_cell) = disc.encoder.step(&embedded, &hidden, &cell)?;
        hidden = new_hidden;
        cell = new_cell;
    }
    Ok(disc.classifier.apply(&hidden)?.sigmoid()?)
}

/// Scores one observed/candidate pair. The candidate must have exactly the
/// configured prediction-horizon length; it is concatenated with the
/// observations to form the full track. Coordinates are expected in the
/// same (scene-normalized) frame the generator uses.
pub fn discriminate(
    observed: &[(f64, f64)],
    candidate: &[(f64, f64)],
    params: &DiscriminatorParams,
    config: &ModelConfig,
) -> Result<f64> {
    if candidate.len() != config.pred_len {
        return Err(NumericsError::Dimension {
            op: "discriminate",
            detail: format!(
                "candidate future has {} steps, expected {}",
                candidate.len(),
                config.pred_len
            ),
        }
        .into());
    }
    if observed.is_empty() {
        return Err(NumericsError::Usage("discriminate with no observations".into()).into());
    }
    let tape = Tape::new();
    let bound = super::params::DiscriminatorVars::bind(&tape, params, false);
    let steps: Vec<Var> = observed
        .iter()
        .chain(candidate)
        .map(|p| tape.constant(Tensor::new(vec![1, 2], vec![p.0, p.1]).expect("point")))
        .collect();
    let score = discriminate_rows_vars(&tape, &steps, &bound.vars)?;
    Ok(score.value().values()[0])
}
