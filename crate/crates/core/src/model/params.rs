//! Learnable parameters and their on-tape bindings.
//!
//! Every parameter tensor has a stable name (`module.layer.matrix`) used by
//! the checkpoint format and listed by [`GeneratorParams::fields`] /
//! [`DiscriminatorParams::fields`]. The `bind` functions create tape
//! variables in exactly the `fields` order, so gradients fetched through
//! [`BoundNet::ordered`] line up with `fields_mut` for the optimizer.

use crate::numerics::{uniform_fan_in, Result, Rng, Tape, Tensor, Var};

use super::ModelConfig;

/// A linear layer `x * weight + bias` with `weight: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(rng: &mut Rng, input: usize, output: usize) -> Self {
        Linear {
            weight: uniform_fan_in(rng, input, &[input, output]),
            bias: Tensor::zeros(&[1, output]),
        }
    }
}

/// LSTM cell parameters. Gates are packed along the output axis in the
/// order [input, forget, cell, output], each `hidden` wide.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input_weight: Tensor,
    pub recurrent_weight: Tensor,
    pub bias: Tensor,
    pub hidden: usize,
}

impl LstmParams {
    fn init(rng: &mut Rng, input: usize, hidden: usize) -> Self {
        LstmParams {
            input_weight: uniform_fan_in(rng, input, &[input, 4 * hidden]),
            recurrent_weight: uniform_fan_in(rng, hidden, &[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[1, 4 * hidden]),
            hidden,
        }
    }
}

/// Two-layer perceptron with a ReLU after the hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub hidden_layer: Linear,
    pub output_layer: Linear,
}

impl Mlp {
    fn init(rng: &mut Rng, input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            hidden_layer: Linear::init(rng, input, hidden),
            output_layer: Linear::init(rng, hidden, output),
        }
    }
}

/// Attention-pooling parameters: the relative-position embedding, the
/// scalar attention scorer, and the value transform applied to scaled
/// hidden states. Shared across all pedestrians.
#[derive(Clone, Debug, PartialEq)]
pub struct GvatParams {
    pub relpos: Linear,
    pub score: Linear,
    pub value: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub input_embedding: Linear,
    pub encoder: LstmParams,
    pub gvat: GvatParams,
    pub decoder_embedding: Linear,
    pub decoder_mlp: Mlp,
    pub decoder: LstmParams,
    pub mdn_head: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub input_embedding: Linear,
    pub encoder: LstmParams,
    pub classifier: Mlp,
}

impl GeneratorParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let h = config.gen_hidden;
        GeneratorParams {
            input_embedding: Linear::init(rng, 2, config.embed_dim),
            encoder: LstmParams::init(rng, config.embed_dim, h),
            gvat: GvatParams {
                relpos: Linear::init(rng, 4, config.r_embed_dim),
                score: Linear::init(rng, config.r_embed_dim + 2 * h, 1),
                value: Linear::init(rng, h, h),
            },
            decoder_embedding: Linear::init(rng, 2, config.embed_dim),
            decoder_mlp: Mlp::init(rng, 2 * h, config.mlp_hidden, h),
            decoder: LstmParams::init(rng, config.embed_dim, h),
            mdn_head: Linear::init(rng, h, 6 * config.k),
        }
    }

    pub fn fields(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        push_linear(&mut out, "generator.input_embedding", &self.input_embedding);
        push_lstm(&mut out, "generator.encoder", &self.encoder);
        push_linear(&mut out, "generator.gvat.relpos", &self.gvat.relpos);
        push_linear(&mut out, "generator.gvat.score", &self.gvat.score);
        push_linear(&mut out, "generator.gvat.value", &self.gvat.value);
        push_linear(&mut out, "generator.decoder_embedding", &self.decoder_embedding);
        push_linear(&mut out, "generator.decoder_mlp.hidden", &self.decoder_mlp.hidden_layer);
        push_linear(&mut out, "generator.decoder_mlp.output", &self.decoder_mlp.output_layer);
        push_lstm(&mut out, "generator.decoder", &self.decoder);
        push_linear(&mut out, "generator.mdn_head", &self.mdn_head);
        out
    }

    pub fn fields_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        push_linear_mut(&mut out, "generator.input_embedding", &mut self.input_embedding);
        push_lstm_mut(&mut out, "generator.encoder", &mut self.encoder);
        push_linear_mut(&mut out, "generator.gvat.relpos", &mut self.gvat.relpos);
        push_linear_mut(&mut out, "generator.gvat.score", &mut self.gvat.score);
        push_linear_mut(&mut out, "generator.gvat.value", &mut self.gvat.value);
        push_linear_mut(&mut out, "generator.decoder_embedding", &mut self.decoder_embedding);
        push_linear_mut(&mut out, "generator.decoder_mlp.hidden", &mut self.decoder_mlp.hidden_layer);
        push_linear_mut(&mut out, "generator.decoder_mlp.output", &mut self.decoder_mlp.output_layer);
        push_lstm_mut(&mut out, "generator.decoder", &mut self.decoder);
        push_linear_mut(&mut out, "generator.mdn_head", &mut self.mdn_head);
        out
    }
}

impl DiscriminatorParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        DiscriminatorParams {
            input_embedding: Linear::init(rng, 2, config.embed_dim),
            encoder: LstmParams::init(rng, config.embed_dim, config.disc_hidden),
            classifier: Mlp::init(rng, config.disc_hidden, config.mlp_hidden, 1),
        }
    }

    pub fn fields(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        push_linear(&mut out, "discriminator.input_embedding", &self.input_embedding);
        push_lstm(&mut out, "discriminator.encoder", &self.encoder);
        push_linear(&mut out, "discriminator.classifier.hidden", &self.classifier.hidden_layer);
        push_linear(&mut out, "discriminator.classifier.output", &self.classifier.output_layer);
        out
    }

    pub fn fields_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        push_linear_mut(&mut out, "discriminator.input_embedding", &mut self.input_embedding);
        push_lstm_mut(&mut out, "discriminator.encoder", &mut self.encoder);
        push_linear_mut(&mut out, "discriminator.classifier.hidden", &mut self.classifier.hidden_layer);
        push_linear_mut(&mut out, "discriminator.classifier.output", &mut self.classifier.output_layer);
        out
    }
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, l: &'a Linear) {
    out.push((format!("{}.weight", prefix), &l.weight));
    out.push((format!("{}.bias", prefix), &l.bias));
}

fn push_linear_mut<'a>(out: &mut Vec<(String, &'a mut Tensor)>, prefix: &str, l: &'a mut Linear) {
    out.push((format!("{}.weight", prefix), &mut l.weight));
    out.push((format!("{}.bias", prefix), &mut l.bias));
}

fn push_lstm<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, l: &'a LstmParams) {
    out.push((format!("{}.input_weight", prefix), &l.input_weight));
    out.push((format!("{}.recurrent_weight", prefix), &l.recurrent_weight));
    out.push((format!("{}.bias", prefix), &l.bias));
}

fn push_lstm_mut<'a>(out: &mut Vec<(String, &'a mut Tensor)>, prefix: &str, l: &'a mut LstmParams) {
    out.push((format!("{}.input_weight", prefix), &mut l.input_weight));
    out.push((format!("{}.recurrent_weight", prefix), &mut l.recurrent_weight));
    out.push((format!("{}.bias", prefix), &mut l.bias));
}

// -------------------------------------------------------------------------
// Tape bindings

#[derive(Clone)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn apply(&self, x: &Var) -> Result<Var> {
        x.matmul(&self.weight)?.add(&self.bias)
    }
}

#[derive(Clone)]
pub struct LstmVars {
    pub input_weight: Var,
    pub recurrent_weight: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmVars {
    /// One cell step over a batch of rows; returns the new `(hidden, cell)`.
    pub fn step(&self, x: &Var, h: &Var, c: &Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let gates = x
            .matmul(&self.input_weight)?
            .add(&h.matmul(&self.recurrent_weight)?)?
            .add(&self.bias)?;
        let input_gate = gates.slice_cols(0, n)?.sigmoid()?;
        let forget_gate = gates.slice_cols(n, n)?.sigmoid()?;
        let cell_gate = gates.slice_cols(2 * n, n)?.tanh()?;
        let output_gate = gates.slice_cols(3 * n, n)?.sigmoid()?;
        let new_cell = forget_gate.mul(c)?.add(&input_gate.mul(&cell_gate)?)?;
        let new_hidden = output_gate.mul(&new_cell.tanh()?)?;
        Ok((new_hidden, new_cell))
    }
}

#[derive(Clone)]
pub struct MlpVars {
    pub hidden_layer: LinearVars,
    pub output_layer: LinearVars,
}

impl MlpVars {
    pub fn apply(&self, x: &Var) -> Result<Var> {
        self.output_layer.apply(&self.hidden_layer.apply(x)?.relu()?)
    }
}

#[derive(Clone)]
pub struct GvatVars {
    pub relpos: LinearVars,
    pub score: LinearVars,
    pub value: LinearVars,
}

#[derive(Clone)]
pub struct GeneratorVars {
    pub input_embedding: LinearVars,
    pub encoder: LstmVars,
    pub gvat: GvatVars,
    pub decoder_embedding: LinearVars,
    pub decoder_mlp: MlpVars,
    pub decoder: LstmVars,
    pub mdn_head: LinearVars,
}

#[derive(Clone)]
pub struct DiscriminatorVars {
    pub input_embedding: LinearVars,
    pub encoder: LstmVars,
    pub classifier: MlpVars,
}

/// A network bound onto a tape, with its variables listed in `fields` order.
pub struct BoundNet<V> {
    pub vars: V,
    ordered: Vec<Var>,
}

impl<V> BoundNet<V> {
    /// Variables aligned with `fields()` / `fields_mut()`.
    pub fn ordered(&self) -> &[Var] {
        &self.ordered
    }
}

struct Binder<'t> {
    tape: &'t Tape,
    trainable: bool,
    order: Vec<Var>,
}

impl<'t> Binder<'t> {
    fn bind(&mut self, t: &Tensor) -> Var {
        let var = if self.trainable {
            self.tape.leaf(t.clone())
        } else {
            self.tape.constant(t.clone())
        };
        self.order.push(var.clone());
        var
    }

    fn linear(&mut self, l: &Linear) -> LinearVars {
        LinearVars {
            weight: self.bind(&l.weight),
            bias: self.bind(&l.bias),
        }
    }

    fn lstm(&mut self, l: &LstmParams) -> LstmVars {
        LstmVars {
            input_weight: self.bind(&l.input_weight),
            recurrent_weight: self.bind(&l.recurrent_weight),
            bias: self.bind(&l.bias),
            hidden: l.hidden,
        }
    }

    fn mlp(&mut self, m: &Mlp) -> MlpVars {
        MlpVars {
            hidden_layer: self.linear(&m.hidden_layer),
            output_layer: self.linear(&m.output_layer),
        }
    }
}

impl GeneratorVars {
    /// Binds the generator onto `tape`; `trainable` decides leaf vs
    /// constant. Binding order matches [`GeneratorParams::fields`].
    pub fn bind(tape: &Tape, p: &GeneratorParams, trainable: bool) -> BoundNet<GeneratorVars> {
        let mut b = Binder {
            tape,
            trainable,
            order: Vec::new(),
        };
        let vars = GeneratorVars {
            input_embedding: b.linear(&p.input_embedding),
            encoder: b.lstm(&p.encoder),
            gvat: GvatVars {
                relpos: b.linear(&p.gvat.relpos),
                score: b.linear(&p.gvat.score),
                value: b.linear(&p.gvat.value),
            },
            decoder_embedding: b.linear(&p.decoder_embedding),
            decoder_mlp: b.mlp(&p.decoder_mlp),
            decoder: b.lstm(&p.decoder),
            mdn_head: b.linear(&p.mdn_head),
        };
        BoundNet {
            vars,
            ordered: b.order,
        }
    }
}

impl DiscriminatorVars {
    /// Binds the discriminator onto `tape`; order matches
    /// [`DiscriminatorParams::fields`].
    pub fn bind(tape: &Tape, p: &DiscriminatorParams, trainable: bool) -> BoundNet<DiscriminatorVars> {
        let mut b = Binder {
            tape,
            trainable,
            order: Vec::new(),
        };
        let vars = DiscriminatorVars {
            input_embedding: b.linear(&p.input_embedding),
            encoder: b.lstm(&p.encoder),
            classifier: b.mlp(&p.classifier),
        };
        BoundNet {
            vars,
            ordered: b.order,
        }
    }
}
