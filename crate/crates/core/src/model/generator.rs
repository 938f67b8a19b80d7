//! Generator forward pass: encode, pool, decode.

use crate::data::Scene;
use crate::gmm::{mdn_activate_vars, GmmSequence, MdnStep};
use crate::numerics::{NumericsError, Tape, Tensor, Var};

use super::params::{GeneratorVars, GvatVars};
use super::{normalize_scene, GeneratorParams, ModelConfig, Result};

/// Per-agent hidden and cell states, `[N, hidden]` each.
#[derive(Clone)]
pub struct EncoderState {
    pub hidden: Var,
    pub cell: Var,
}

/// Result of attention pooling.
pub struct GvatOutput {
    /// Pooled social context per agent, `[N, hidden]`.
    pub pooled: Var,
    /// `concat(h_i, g_i)` per agent, `[N, 2*hidden]`.
    pub combined: Var,
    /// Attention rows (values only) for inspection: `attention[i][j]` is
    /// the weight agent `i` puts on its `j`-th neighbour in index order.
    pub attention: Vec<Vec<f64>>,
}

fn positions_at(obs: &[Vec<(f64, f64)>], t: usize) -> Tensor {
    let mut values = Vec::with_capacity(obs.len() * 2);
    for track in obs {
        values.push(track[t].0);
        values.push(track[t].1);
    }
    Tensor::new(vec![obs.len(), 2], values).expect("positions tensor")
}

/// Runs the shared-weight encoder LSTM over the observed window.
/// `observed[agent][t]` must cover every agent at every `t < obs_len`.
pub fn encode_vars(
    tape: &Tape,
    observed: &[Vec<(f64, f64)>],
    gen: &GeneratorVars,
    config: &ModelConfig,
) -> Result<EncoderState> {
    let n = observed.len();
    if n == 0 {
        return Err(NumericsError::Usage("encode on an empty scene".into()).into());
    }
    if observed.iter().any(|track| track.len() != config.obs_len) {
        return Err(NumericsError::Dimension {
            op: "encode",
            detail: format!("every agent must be observed for {} steps", config.obs_len),
        }
        .into());
    }
    let mut hidden = tape.constant(Tensor::zeros(&[n, config.gen_hidden]));
    let mut cell = hidden.clone();
    for t in 0..config.obs_len {
        let x = tape.constant(positions_at(observed, t));
        let embedded = gen.input_embedding.apply(&x)?;
        let (new_hidden, new_cell) = gen.encoder.step(&embedded, &hidden, &cell)?;
        hidden = new_hidden;
        cell = new_cell;
    }
    Ok(EncoderState { hidden, cell })
}

/// Attention pooling over pedestrian hidden states.
///
/// Pairwise features embed `(x_i - x_j, y_i - y_j, z_i)` where `z_i` is
/// agent `i`'s offset to the vehicle, or `(0, 0)` without one (or when
/// `force_zero_vehicle_offset` is set, which must be output-identical to
/// the no-vehicle case). A single agent has no neighbours; its pooled
/// vector is zero by convention, so solo agents degrade to a plain
/// encoder–decoder.
pub fn gvat_pool_vars(
    tape: &Tape,
    positions: &[(f64, f64)],
    vehicle: Option<(f64, f64)>,
    hidden: &Var,
    gvat: &GvatVars,
    force_zero_vehicle_offset: bool,
) -> Result<GvatOutput> {
    let n = positions.len();
    if hidden.shape()[0] != n {
        return Err(NumericsError::Dimension {
            op: "gvat_pool",
            detail: format!("{} positions vs {} hidden rows", n, hidden.shape()[0]),
        }
        .into());
    }
    let width = hidden.shape()[1];
    if n == 1 {
        let pooled = tape.constant(Tensor::zeros(&[1, width]));
        let combined = tape.concat_cols(&[hidden, &pooled])?;
        return Ok(GvatOutput {
            pooled,
            combined,
            attention: vec![Vec::new()],
        });
    }

    let mut pooled_rows = Vec::with_capacity(n);
    let mut attention = Vec::with_capacity(n);
    for i in 0..n {
        let (xi, yi) = positions[i];
        let offset = if force_zero_vehicle_offset {
            (0.0, 0.0)
        } else {
            vehicle
                .map(|(vx, vy)| (xi - vx, yi - vy))
                .unwrap_or((0.0, 0.0))
        };
        let neighbours: Vec<usize> = (0..n).filter(|j| *j != i).collect();
        let m = neighbours.len();

        let mut feature_values = Vec::with_capacity(m * 4);
        let mut select = Tensor::zeros(&[m, n]);
        for (row, &j) in neighbours.iter().enumerate() {
            feature_values.extend_from_slice(&[
                xi - positions[j].0,
                yi - positions[j].1,
                offset.0,
                offset.1,
            ]);
            select.values_mut()[row * n + j] = 1.0;
        }
        let features = tape.constant(Tensor::new(vec![m, 4], feature_values)?);
        let rel = gvat.relpos.apply(&features)?;

        let neighbour_hidden = tape.constant(select).matmul(hidden)?;
        let mut self_select = Tensor::zeros(&[1, n]);
        self_select.values_mut()[i] = 1.0;
        let self_hidden = tape.constant(self_select).matmul(hidden)?;
        let self_repeated = tape.constant(Tensor::ones(&[m, 1])).matmul(&self_hidden)?;

        let pair = tape.concat_cols(&[&rel, &neighbour_hidden, &self_repeated])?;
        let logits = gvat.score.apply(&pair)?.reshape(&[1, m])?;
        let weights = logits.softmax()?;
        attention.push(weights.value().values().to_vec());

        let scaled = neighbour_hidden.mul(&weights.reshape(&[m, 1])?)?;
        let valued = gvat.value.apply(&scaled)?;
        pooled_rows.push(valued.sum_rows()?);
    }
    let refs: Vec<&Var> = pooled_rows.iter().collect();
    let pooled = tape.concat_rows(&refs)?;
    let combined = tape.concat_cols(&[hidden, &pooled])?;
    Ok(GvatOutput {
        pooled,
        combined,
        attention,
    })
}

/// Zero-feed decoding: the first step consumes the embedded last observed
/// position, every later step a zero vector, in training and inference
/// alike (no sampling anywhere). Before each LSTM step the carried hidden
/// state is passed through the decoder MLP together with the pooled
/// context. Each step's hidden state maps through the MDN head.
pub fn decode_vars(
    tape: &Tape,
    encoder: &EncoderState,
    pooled: &Var,
    last_observed: &[(f64, f64)],
    horizon: usize,
    gen: &GeneratorVars,
    config: &ModelConfig,
) -> Result<Vec<MdnStep>> {
    if horizon == 0 {
        return Err(NumericsError::Usage("decode with horizon 0".into()).into());
    }
    let n = last_observed.len();
    let mut values = Vec::with_capacity(n * 2);
    for p in last_observed {
        values.push(p.0);
        values.push(p.1);
    }
    let last = tape.constant(Tensor::new(vec![n, 2], values)?);
    let first_input = gen.decoder_embedding.apply(&last)?;
    let zero_input = tape.constant(Tensor::zeros(&[n, config.embed_dim]));

    let mut hidden = encoder.hidden.clone();
    let mut cell = encoder.cell.clone();
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let input = if t == 0 { &first_input } else { &zero_input };
        let context = tape.concat_cols(&[&hidden, pooled])?;
        let transformed = gen.decoder_mlp.apply(&context)?;
        let (new_hidden, new_cell) = gen.decoder.step(input, &transformed, &cell)?;
        hidden = new_hidden;
        cell = new_cell;
        let raw = gen.mdn_head.apply(&hidden)?;
        steps.push(mdn_activate_vars(&raw, config.k)?);
    }
    Ok(steps)
}

/// Full generator pass on an already-normalized scene. Returns one
/// [`MdnStep`] per prediction timestep (agents batched as rows).
pub fn generate_vars(
    tape: &Tape,
    scene: &Scene,
    gen: &GeneratorVars,
    config: &ModelConfig,
) -> Result<Vec<MdnStep>> {
    let observed: Vec<Vec<(f64, f64)>> = (0..scene.n_agents())
        .map(|i| scene.observed(i).to_vec())
        .collect();
    let encoder = encode_vars(tape, &observed, gen, config)?;
    let last: Vec<(f64, f64)> = (0..scene.n_agents())
        .map(|i| scene.last_observed(i))
        .collect();
    let vehicle = scene
        .vehicle
        .as_ref()
        .map(|v| v[scene.obs_len - 1]);
    let gvat = gvat_pool_vars(tape, &last, vehicle, &encoder.hidden, &gen.gvat, false)?;
    decode_vars(
        tape,
        &encoder,
        &gvat.pooled,
        &last,
        scene.pred_len(),
        gen,
        config,
    )
}

/// Inference entry point: normalizes the scene, runs the generator with
/// frozen weights, and returns world-frame mixture sequences per agent.
pub fn generate(scene: &Scene, params: &GeneratorParams, config: &ModelConfig) -> Result<Vec<GmmSequence>> {
    scene.validate()?;
    if scene.pred_len() == 0 {
        return Err(NumericsError::Usage("scene has no prediction steps".into()).into());
    }
    let (normalized, offset) = normalize_scene(scene);
    let tape = Tape::new();
    let bound = GeneratorVars::bind(&tape, params, false);
    let steps = generate_vars(&tape, &normalized, &bound.vars, config)?;
    let mut sequences = Vec::with_capacity(scene.n_agents());
    for agent in 0..scene.n_agents() {
        let mut seq = GmmSequence {
            steps: steps.iter().map(|s| s.to_gmm_step(agent)).collect(),
        };
        for step in &mut seq.steps {
            for c in &mut step.components {
                c.mu.0 += offset.0;
                c.mu.1 += offset.1;
            }
        }
        sequences.push(seq);
    }
    Ok(sequences)
}
