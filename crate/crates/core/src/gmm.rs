//! Bivariate Gaussian mixtures: the model's per-timestep output.
//!
//! A raw head output of length `6K` is activated into `K` components laid
//! out as `[weight logits | mu_x | mu_y | sigma_x | sigma_y | rho]`:
//! weights go through a softmax, standard deviations through `exp` with a
//! floor of [`SIGMA_FLOOR`], correlations through `0.999 * tanh`, and means
//! pass through unchanged. The same activation exists in a plain-`f64` form
//! ([`mdn_activate`]) and an on-tape differentiable form
//! ([`mdn_activate_vars`]).
//!
//! Serialized JSON layout (consumed by the CLI export commands and the
//! modal-path file mode):
//!
//! ```json
//! {"agents": [{"steps": [{"components": [
//!     {"pi": 0.17, "mu": [x, y], "sigma": [sx, sy], "rho": 0.0}, ...
//! ]}, ...]}, ...]}
//! ```

use serde::{Deserialize, Serialize};

use crate::numerics::{NumericsError, Result, Tape, Tensor, Var};

/// Lower bound on activated standard deviations, in meters. Keeps the
/// density and its gradients finite if the mixture collapses.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Correlation coefficients are squashed into `(-RHO_CAP, RHO_CAP)`.
pub const RHO_CAP: f64 = 0.999;

const LN_2PI: f64 = 1.8378770664093453;

/// One bivariate Gaussian component of a mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    /// Mixture weight, non-negative.
    pub pi: f64,
    /// Mean (x, y) in meters.
    pub mu: (f64, f64),
    /// Standard deviation per dimension, strictly positive.
    pub sigma: (f64, f64),
    /// Correlation coefficient, |rho| < 1.
    pub rho: f64,
}

impl GmmComponent {
    /// Log density of the component at `point`.
    pub fn log_density(&self, point: (f64, f64)) -> f64 {
        let (sx, sy) = self.sigma;
        let dx = (point.0 - self.mu.0) / sx;
        let dy = (point.1 - self.mu.1) / sy;
        let omr = 1.0 - self.rho * self.rho;
        let quad = (dx * dx - 2.0 * self.rho * dx * dy + dy * dy) / (2.0 * omr);
        -(LN_2PI + sx.ln() + sy.ln() + 0.5 * omr.ln()) - quad
    }
}

/// The mixture for one agent at one prediction timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmStep {
    pub components: Vec<GmmComponent>,
}

impl GmmStep {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Checks the structural invariants: positive sigmas, bounded rho,
    /// non-negative weights summing to 1 within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.sigma.0 <= 0.0 || c.sigma.1 <= 0.0 || c.rho.abs() >= 1.0 || c.pi < 0.0 {
                return Err(NumericsError::Domain {
                    op: "GmmStep::validate",
                    detail: format!("component {} out of range: {:?}", i, c),
                });
            }
            total += c.pi;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(NumericsError::Domain {
                op: "GmmStep::validate",
                detail: format!("weights sum to {}, expected 1", total),
            });
        }
        Ok(())
    }

    /// Log of the mixture density at `point`, evaluated with log-sum-exp.
    pub fn log_pdf(&self, point: (f64, f64)) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.pi > 0.0)
            .map(|c| c.pi.ln() + c.log_density(point))
            .collect();
        log_sum_exp(&terms)
    }
}

/// Ordered mixture steps for one agent over the prediction horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSequence {
    pub steps: Vec<GmmStep>,
}

impl GmmSequence {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

/// Per-agent mixture sequences for a whole scene, the serialization root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmDump {
    pub agents: Vec<GmmSequence>,
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Plain-value MDN activation of a raw head output of length `6K`.
pub fn mdn_activate(raw: &[f64], k: usize) -> Result<GmmStep> {
    if raw.len() != 6 * k || k == 0 {
        return Err(NumericsError::Dimension {
            op: "mdn_activate",
            detail: format!("raw length {} for K={}", raw.len(), k),
        });
    }
    let logits = &raw[0..k];
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let norm: f64 = exps.iter().sum();
    let components = (0..k)
        .map(|i| GmmComponent {
            pi: exps[i] / norm,
            mu: (raw[k + i], raw[2 * k + i]),
            sigma: (
                raw[3 * k + i].exp().max(SIGMA_FLOOR),
                raw[4 * k + i].exp().max(SIGMA_FLOOR),
            ),
            rho: RHO_CAP * raw[5 * k + i].tanh(),
        })
        .collect();
    Ok(GmmStep { components })
}

/// Negative log-likelihood of ground-truth positions under per-agent
/// mixture sequences: the sum of `-log_pdf` over all agents and timesteps.
pub fn nll_loss(gmms: &[GmmSequence], truth: &[Vec<(f64, f64)>]) -> Result<f64> {
    if gmms.len() != truth.len() {
        return Err(NumericsError::Dimension {
            op: "nll_loss",
            detail: format!("{} agents vs {} truth tracks", gmms.len(), truth.len()),
        });
    }
    let mut total = 0.0;
    for (seq, track) in gmms.iter().zip(truth) {
        if seq.steps.len() != track.len() {
            return Err(NumericsError::Dimension {
                op: "nll_loss",
                detail: format!("{} steps vs {} truth points", seq.steps.len(), track.len()),
            });
        }
        for (step, point) in seq.steps.iter().zip(track) {
            total -= step.log_pdf(*point);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// On-tape (differentiable) counterparts. All matrices are [N agents, K].

/// Activated mixture parameters for all agents at one timestep.
#[derive(Clone)]
pub struct MdnStep {
    pub pi: Var,
    pub mu_x: Var,
    pub mu_y: Var,
    pub sigma_x: Var,
    pub sigma_y: Var,
    pub rho: Var,
}

impl MdnStep {
    pub fn agents(&self) -> usize {
        self.pi.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.pi.shape()[1]
    }

    /// Reads out the plain mixture for agent `i`.
    pub fn to_gmm_step(&self, agent: usize) -> GmmStep {
        let k = self.k();
        let read = |v: &Var| -> Vec<f64> {
            let t = v.value();
            t.values()[agent * k..(agent + 1) * k].to_vec()
        };
        let (pi, mx, my) = (read(&self.pi), read(&self.mu_x), read(&self.mu_y));
        let (sx, sy, rho) = (read(&self.sigma_x), read(&self.sigma_y), read(&self.rho));
        GmmStep {
            components: (0..k)
                .map(|i| GmmComponent {
                    pi: pi[i],
                    mu: (mx[i], my[i]),
                    sigma: (sx[i], sy[i]),
                    rho: rho[i],
                })
                .collect(),
        }
    }
}

/// Differentiable MDN activation: `raw` is `[N, 6K]`, the result holds the
/// activated `[N, K]` parameter matrices.
pub fn mdn_activate_vars(raw: &Var, k: usize) -> Result<MdnStep> {
    let shape = raw.shape();
    if shape.len() != 2 || shape[1] != 6 * k || k == 0 {
        return Err(NumericsError::Dimension {
            op: "mdn_activate_vars",
            detail: format!("raw shape {:?} for K={}", shape, k),
        });
    }
    let chunk = |i: usize| raw.slice_cols(i * k, k);
    Ok(MdnStep {
        pi: chunk(0)?.softmax()?,
        mu_x: chunk(1)?,
        mu_y: chunk(2)?,
        sigma_x: chunk(3)?.exp()?.clamp_min(SIGMA_FLOOR)?,
        sigma_y: chunk(4)?.exp()?.clamp_min(SIGMA_FLOOR)?,
        rho: chunk(5)?.tanh()?.scale(RHO_CAP)?,
    })
}

/// Differentiable per-agent log mixture density: `x`, `y` are `[N,1]`
/// constants of ground-truth coordinates; the result is `[N,1]`.
pub fn log_pdf_vars(step: &MdnStep, x: &Var, y: &Var) -> Result<Var> {
    let dx = step.mu_x.sub(x)?.div(&step.sigma_x)?;
    let dy = step.mu_y.sub(y)?.div(&step.sigma_y)?;
    let omr = step.rho.square()?.neg()?.add_scalar(1.0)?;
    let cross = step.rho.mul(&dx)?.mul(&dy)?.scale(2.0)?;
    let quad = dx
        .square()?
        .add(&dy.square()?)?
        .sub(&cross)?
        .div(&omr)?
        .scale(0.5)?;
    let log_norm = step
        .sigma_x
        .log()?
        .add(&step.sigma_y.log()?)?
        .add(&omr.log()?.scale(0.5)?)?
        .add_scalar(LN_2PI)?;
    // Guard against weight underflow for extreme logits; the floor only
    // bites where the component is already negligible.
    let log_pi = step.pi.clamp_min(1e-12)?.log()?;
    log_pi.sub(&log_norm)?.sub(&quad)?.logsumexp_cols()
}

/// Differentiable NLL: `truth[t][i]` is the ground-truth position of agent
/// `i` at prediction step `t`. Returns a scalar Var (sum over agents and
/// steps, matching [`nll_loss`]).
pub fn nll_loss_vars(tape: &Tape, steps: &[MdnStep], truth: &[Vec<(f64, f64)>]) -> Result<Var> {
    if steps.len() != truth.len() {
        return Err(NumericsError::Dimension {
            op: "nll_loss_vars",
            detail: format!("{} steps vs {} truth rows", steps.len(), truth.len()),
        });
    }
    let mut per_step = Vec::with_capacity(steps.len());
    for (step, points) in steps.iter().zip(truth) {
        let n = step.agents();
        if points.len() != n {
            return Err(NumericsError::Dimension {
                op: "nll_loss_vars",
                detail: format!("{} agents vs {} truth points", n, points.len()),
            });
        }
        let xs = tape.constant(Tensor::new(
            vec![n, 1],
            points.iter().map(|p| p.0).collect(),
        )?);
        let ys = tape.constant(Tensor::new(
            vec![n, 1],
            points.iter().map(|p| p.1).collect(),
        )?);
        per_step.push(log_pdf_vars(step, &xs, &ys)?);
    }
    let refs: Vec<&Var> = per_step.iter().collect();
    tape.concat_rows(&refs)?.sum()?.neg()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_component() -> GmmComponent {
        GmmComponent {
            pi: 1.0,
            mu: (0.0, 0.0),
            sigma: (1.0, 1.0),
            rho: 0.0,
        }
    }

    #[test]
    fn activation_at_zero_input() {
        let step = mdn_activate(&[0.0; 36], 6).unwrap();
        step.validate().unwrap();
        for c in &step.components {
            assert!((c.pi - 1.0 / 6.0).abs() < 1e-15);
            assert_eq!(c.mu, (0.0, 0.0));
            assert_eq!(c.sigma, (1.0, 1.0));
            assert_eq!(c.rho, 0.0);
        }
    }

    #[test]
    fn sigma_floor_applies() {
        let mut raw = vec![0.0; 6];
        raw[3] = -20.0; // sigma_x logit
        let step = mdn_activate(&raw, 1).unwrap();
        assert_eq!(step.components[0].sigma.0, SIGMA_FLOOR);
        assert_eq!(step.components[0].sigma.1, 1.0);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(mdn_activate(&[0.0; 35], 6).is_err());
    }

    #[test]
    fn log_pdf_standard_normal_at_mean() {
        let step = GmmStep {
            components: vec![unit_component()],
        };
        assert!((step.log_pdf((0.0, 0.0)) + 1.837877).abs() < 1e-6);
        assert!((step.log_pdf((1.0, 0.0)) + 2.337877).abs() < 1e-6);
    }

    #[test]
    fn log_pdf_matches_direct_summation() {
        // Independent oracle: direct summation of component densities
        // without log-sum-exp.
        let step = GmmStep {
            components: vec![
                GmmComponent {
                    pi: 0.5,
                    mu: (0.3, -0.2),
                    sigma: (0.7, 1.3),
                    rho: 0.4,
                },
                GmmComponent {
                    pi: 0.3,
                    mu: (-1.0, 0.8),
                    sigma: (1.1, 0.5),
                    rho: -0.6,
                },
                GmmComponent {
                    pi: 0.2,
                    mu: (2.0, 1.5),
                    sigma: (0.4, 0.9),
                    rho: 0.1,
                },
            ],
        };
        step.validate().unwrap();
        let point = (0.45, 0.31);
        let direct: f64 = step
            .components
            .iter()
            .map(|c| {
                let (sx, sy) = c.sigma;
                let omr = 1.0 - c.rho * c.rho;
                let dx = (point.0 - c.mu.0) / sx;
                let dy = (point.1 - c.mu.1) / sy;
                let norm = 1.0 / (2.0 * std::f64::consts::PI * sx * sy * omr.sqrt());
                c.pi * norm
                    * (-(dx * dx - 2.0 * c.rho * dx * dy + dy * dy) / (2.0 * omr)).exp()
            })
            .sum();
        assert!((step.log_pdf(point) - direct.ln()).abs() < 1e-10);
    }

    #[test]
    fn log_pdf_invariant_under_component_reordering() {
        let a = GmmComponent {
            pi: 0.6,
            mu: (1.0, 2.0),
            sigma: (0.5, 0.8),
            rho: 0.2,
        };
        let b = GmmComponent {
            pi: 0.4,
            mu: (-1.0, 0.0),
            sigma: (1.5, 0.3),
            rho: -0.7,
        };
        let fwd = GmmStep {
            components: vec![a.clone(), b.clone()],
        };
        let rev = GmmStep {
            components: vec![b, a],
        };
        let p = (0.2, 0.9);
        assert!((fwd.log_pdf(p) - rev.log_pdf(p)).abs() < 1e-12);
    }

    #[test]
    fn nll_at_mode_and_additivity() {
        let seq = GmmSequence {
            steps: vec![GmmStep {
                components: vec![unit_component()],
            }],
        };
        let one = nll_loss(&[seq.clone()], &[vec![(0.0, 0.0)]]).unwrap();
        assert!((one - 1.837877).abs() < 1e-6);
        let two = nll_loss(
            &[seq.clone(), seq],
            &[vec![(0.0, 0.0)], vec![(0.0, 0.0)]],
        )
        .unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_loop_oracle() {
        let mut rng = crate::numerics::seeded_rng(42);
        use rand::Rng as _;
        let mut sample_step = |k: usize| -> GmmStep {
            let raw: Vec<f64> = (0..6 * k).map(|_| rng.random_range(-1.5..1.5)).collect();
            mdn_activate(&raw, k).unwrap()
        };
        let gmms: Vec<GmmSequence> = (0..3)
            .map(|_| GmmSequence {
                steps: (0..4).map(|_| sample_step(5)).collect(),
            })
            .collect();
        let mut rng2 = crate::numerics::seeded_rng(43);
        let truth: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|_| {
                (0..4)
                    .map(|_| (rng2.random_range(-2.0..2.0), rng2.random_range(-2.0..2.0)))
                    .collect()
            })
            .collect();
        // Brute-force double loop over agents and timesteps.
        let mut expected = 0.0;
        for (a, seq) in gmms.iter().enumerate() {
            for (t, step) in seq.steps.iter().enumerate() {
                expected -= step.log_pdf(truth[a][t]);
            }
        }
        let got = nll_loss(&gmms, &truth).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn misaligned_lengths_rejected() {
        let seq = GmmSequence {
            steps: vec![GmmStep {
                components: vec![unit_component()],
            }],
        };
        assert!(nll_loss(&[seq], &[vec![(0.0, 0.0), (1.0, 1.0)]]).is_err());
    }

    #[test]
    fn var_activation_matches_plain() {
        let mut rng = crate::numerics::seeded_rng(7);
        use rand::Rng as _;
        let k = 4;
        let n = 3;
        let raw: Vec<f64> = (0..n * 6 * k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tape = Tape::new();
        let raw_var = tape.leaf(Tensor::new(vec![n, 6 * k], raw.clone()).unwrap());
        let step = mdn_activate_vars(&raw_var, k).unwrap();
        for agent in 0..n {
            let plain = mdn_activate(&raw[agent * 6 * k..(agent + 1) * 6 * k], k).unwrap();
            let from_var = step.to_gmm_step(agent);
            for (a, b) in plain.components.iter().zip(&from_var.components) {
                assert!((a.pi - b.pi).abs() < 1e-15);
                assert!((a.mu.0 - b.mu.0).abs() < 1e-15);
                assert!((a.sigma.0 - b.sigma.0).abs() < 1e-15);
                assert!((a.rho - b.rho).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn var_log_pdf_matches_plain() {
        let mut rng = crate::numerics::seeded_rng(11);
        use rand::Rng as _;
        let k = 6;
        let n = 2;
        let raw: Vec<f64> = (0..n * 6 * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tape = Tape::new();
        let raw_var = tape.constant(Tensor::new(vec![n, 6 * k], raw.clone()).unwrap());
        let step = mdn_activate_vars(&raw_var, k).unwrap();
        let pts = [(0.5, -0.25), (-1.2, 0.8)];
        let xs = tape.constant(Tensor::new(vec![n, 1], pts.iter().map(|p| p.0).collect()).unwrap());
        let ys = tape.constant(Tensor::new(vec![n, 1], pts.iter().map(|p| p.1).collect()).unwrap());
        let lp = log_pdf_vars(&step, &xs, &ys).unwrap();
        for agent in 0..n {
            let plain = mdn_activate(&raw[agent * 6 * k..(agent + 1) * 6 * k], k)
                .unwrap()
                .log_pdf(pts[agent]);
            assert!((lp.value().values()[agent] - plain).abs() < 1e-12);
        }
    }

    /// Gradient of the NLL with respect to the raw MDN output, against
    /// central finite differences.
    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = crate::numerics::seeded_rng(5);
        use rand::Rng as _;
        let k = 3;
        let n = 2;
        let steps_n = 2;
        let raws: Vec<Vec<f64>> = (0..steps_n)
            .map(|_| (0..n * 6 * k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let truth: Vec<Vec<(f64, f64)>> = (0..steps_n)
            .map(|_| {
                (0..n)
                    .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();

        let eval = |raws: &[Vec<f64>]| -> (f64, Vec<Tensor>) {
            let tape = Tape::new();
            let raw_vars: Vec<Var> = raws
                .iter()
                .map(|r| tape.leaf(Tensor::new(vec![n, 6 * k], r.clone()).unwrap()))
                .collect();
            let steps: Vec<MdnStep> = raw_vars
                .iter()
                .map(|rv| mdn_activate_vars(rv, k).unwrap())
                .collect();
            let loss = nll_loss_vars(&tape, &steps, &truth).unwrap();
            let grads = tape.backward(&loss).unwrap();
            (
                loss.value().values()[0],
                raw_vars.iter().map(|v| grads.get(v)).collect(),
            )
        };

        let (_, analytic) = eval(&raws);
        let h = 1e-5;
        for (si, raw) in raws.iter().enumerate() {
            for vi in 0..raw.len() {
                let mut plus = raws.clone();
                plus[si][vi] += h;
                let mut minus = raws.clone();
                minus[si][vi] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let a = analytic[si].values()[vi];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < 1e-4,
                    "step {} idx {}: analytic {} vs fd {}",
                    si,
                    vi,
                    a,
                    fd
                );
            }
        }
    }

    #[test]
    fn density_integrates_to_one_on_grid() {
        let mut rng = crate::numerics::seeded_rng(31);
        use rand::Rng as _;
        for _ in 0..3 {
            let raw: Vec<f64> = (0..36).map(|_| rng.random_range(-0.8..0.8)).collect();
            let step = mdn_activate(&raw, 6).unwrap();
            let integral = grid_integral(&step);
            assert!(
                (integral - 1.0).abs() < 1e-3,
                "integral {} not within 1e-3 of 1",
                integral
            );
        }
    }

    /// Trapezoid-rule integral of exp(log_pdf) over [-8 sigma, 8 sigma]^2.
    fn grid_integral(step: &GmmStep) -> f64 {
        let lo_x = step
            .components
            .iter()
            .map(|c| c.mu.0 - 8.0 * c.sigma.0)
            .fold(f64::INFINITY, f64::min);
        let hi_x = step
            .components
            .iter()
            .map(|c| c.mu.0 + 8.0 * c.sigma.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let lo_y = step
            .components
            .iter()
            .map(|c| c.mu.1 - 8.0 * c.sigma.1)
            .fold(f64::INFINITY, f64::min);
        let hi_y = step
            .components
            .iter()
            .map(|c| c.mu.1 + 8.0 * c.sigma.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_sigma = step
            .components
            .iter()
            .map(|c| c.sigma.0.min(c.sigma.1))
            .fold(f64::INFINITY, f64::min);
        let h = (min_sigma / 4.0).min(0.05);
        let nx = ((hi_x - lo_x) / h).ceil() as usize + 1;
        let ny = ((hi_y - lo_y) / h).ceil() as usize + 1;
        let (hx, hy) = ((hi_x - lo_x) / nx as f64, (hi_y - lo_y) / ny as f64);
        let mut total = 0.0;
        for i in 0..=nx {
            let wx = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let x = lo_x + i as f64 * hx;
            for j in 0..=ny {
                let wy = if j == 0 || j == ny { 0.5 } else { 1.0 };
                let y = lo_y + j as f64 * hy;
                total += wx * wy * step.log_pdf((x, y)).exp();
            }
        }
        total * hx * hy
    }

    proptest! {
        #[test]
        fn activation_invariants(raw in proptest::collection::vec(-30.0f64..30.0, 36)) {
            let step = mdn_activate(&raw, 6).unwrap();
            let total: f64 = step.components.iter().map(|c| c.pi).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for c in &step.components {
                prop_assert!(c.pi >= 0.0);
                prop_assert!(c.sigma.0 >= SIGMA_FLOOR && c.sigma.1 >= SIGMA_FLOOR);
                prop_assert!(c.rho.abs() < RHO_CAP + 1e-15);
            }
        }
    }
}
