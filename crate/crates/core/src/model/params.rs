use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, Stream};

/// Two-layer perceptron `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Mlp2 {
    fn init(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: glorot(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: glorot(hidden, output, rng),
            b2: Matrix::zeros(1, output),
        }
    }
}

/// Learnable weights. Matrices act on row vectors (`x W`), so a map from
/// `a` to `b` dimensions is stored as `a x b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Input transform applied to community-averaged features, `M x d`.
    pub xi_w: Matrix,
    pub xi_b: Matrix,
    /// One `d x d` weight per GCN layer.
    pub gcn_weights: Vec<Matrix>,
    /// Residual projection of the raw features, `M x d`.
    pub w_residual: Matrix,
    /// Attribute encoder, `M x d` plus a `1 x d` bias.
    pub attr_w: Matrix,
    pub attr_b: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Down-projection `2d x d`.
    pub w1: Matrix,
    /// Up-projection `d x 2d`.
    pub w2: Matrix,
    pub phi_x: Mlp2,
    pub mlp_mu: Mlp2,
    pub mlp_sigma: Mlp2,
}

/// Glorot-uniform matrix in `±sqrt(6 / (fan_in + fan_out))`.
fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
}

impl ModelParams {
    /// Seeded initialization for `num_features` input columns.
    pub fn init(num_features: usize, cfg: &ModelConfig) -> Self {
        let mut rng = seed::rng(cfg.seed, Stream::Init);
        let (m, d) = (num_features, cfg.hidden_dim);
        let xi_w = glorot(m, d, &mut rng);
        let gcn_weights = (0..cfg.gcn_layers).map(|_| glorot(d, d, &mut rng)).collect();
        let w_residual = glorot(m, d, &mut rng);
        let attr_w = glorot(m, d, &mut rng);
        let q = glorot(d, d, &mut rng);
        let k = glorot(d, d, &mut rng);
        let v = glorot(d, d, &mut rng);
        let w1 = glorot(2 * d, d, &mut rng);
        let w2 = glorot(d, 2 * d, &mut rng);
        let phi_x = Mlp2::init(d, d, m, &mut rng);
        let mlp_mu = Mlp2::init(d, d, d, &mut rng);
        let mlp_sigma = Mlp2::init(d, d, d, &mut rng);
        Self {
            xi_w,
            xi_b: Matrix::zeros(1, d),
            gcn_weights,
            w_residual,
            attr_w,
            attr_b: Matrix::zeros(1, d),
            q,
            k,
            v,
            w1,
            w2,
            phi_x,
            mlp_mu,
            mlp_sigma,
        }
    }

    /// Expected `(name, rows, cols)` for every tensor, in canonical order.
    pub fn layout(num_features: usize, cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
        let (m, d) = (num_features, cfg.hidden_dim);
        let mut out = alloc::vec![
            (String::from("xi_w"), m, d),
            (String::from("xi_b"), 1, d),
        ];
        for l in 0..cfg.gcn_layers {
            out.push((format!("gcn_weights.{l}"), d, d));
        }
        out.extend([
            (String::from("w_residual"), m, d),
            (String::from("attr_w"), m, d),
            (String::from("attr_b"), 1, d),
            (String::from("q"), d, d),
            (String::from("k"), d, d),
            (String::from("v"), d, d),
            (String::from("w1"), 2 * d, d),
            (String::from("w2"), d, 2 * d),
        ]);
        for (name, out_dim) in [("phi_x", m), ("mlp_mu", d), ("mlp_sigma", d)] {
            out.extend([
                (format!("{name}.w1"), d, d),
                (format!("{name}.b1"), 1, d),
                (format!("{name}.w2"), d, out_dim),
                (format!("{name}.b2"), 1, out_dim),
            ]);
        }
        out
    }

    /// Every tensor in canonical order (the order of [`ModelParams::layout`]).
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.xi_w, &self.xi_b];
        out.extend(self.gcn_weights.iter());
        out.extend([
            &self.w_residual,
            &self.attr_w,
            &self.attr_b,
            &self.q,
            &self.k,
            &self.v,
            &self.w1,
            &self.w2,
        ]);
        for mlp in [&self.phi_x, &self.mlp_mu, &self.mlp_sigma] {
            out.extend([&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.xi_w, &mut self.xi_b];
        out.extend(self.gcn_weights.iter_mut());
        out.extend([
            &mut self.w_residual,
            &mut self.attr_w,
            &mut self.attr_b,
            &mut self.q,
            &mut self.k,
            &mut self.v,
            &mut self.w1,
            &mut self.w2,
        ]);
        for mlp in [&mut self.phi_x, &mut self.mlp_mu, &mut self.mlp_sigma] {
            out.extend([&mut mlp.w1, &mut mlp.b1, &mut mlp.w2, &mut mlp.b2]);
        }
        out
    }

    /// Rebuilds parameters from tensors in canonical order, checking shapes.
    pub fn from_tensors(
        num_features: usize,
        cfg: &ModelConfig,
        tensors: Vec<Matrix>,
    ) -> Result<Self> {
        let mut params = Self::init(num_features, cfg);
        let layout = Self::layout(num_features, cfg);
        if tensors.len() != layout.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((slot, t), (name, r, c)) in params.tensors_mut().into_iter().zip(tensors).zip(&layout) {
            if t.shape() != (*r, *c) {
                return Err(Error::InvalidConfig(format!(
                    "parameter {name} has shape {:?}, expected ({r}, {c})",
                    t.shape()
                )));
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn validate(&self, num_features: usize, cfg: &ModelConfig) -> Result<()> {
        let layout = Self::layout(num_features, cfg);
        let tensors = self.tensors();
        if tensors.len() != layout.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (t, (name, r, c)) in tensors.iter().zip(&layout) {
            if t.shape() != (*r, *c) {
                return Err(Error::ShapeMismatch {
                    op: "params",
                    left: t.shape(),
                    right: (*r, *c),
                });
            }
            if !t.is_finite() {
                return Err(Error::InvalidConfig(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn norms(&self) -> Vec<f64> {
        self.tensors().iter().map(|t| t.frobenius_norm()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Result<Var> {
        let h = t.matmul(x, self.w1)?;
        let h = t.add_bias(h, self.b1)?;
        let h = t.relu(h)?;
        let o = t.matmul(h, self.w2)?;
        t.add_bias(o, self.b2)
    }
}

/// Parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub xi_w: Var,
    pub xi_b: Var,
    pub gcn_weights: Vec<Var>,
    pub w_residual: Var,
    pub attr_w: Var,
    pub attr_b: Var,
    pub q: Var,
    pub k: Var,
    pub v: Var,
    pub w1: Var,
    pub w2: Var,
    pub phi_x: MlpVars,
    pub mlp_mu: MlpVars,
    pub mlp_sigma: MlpVars,
}

impl ParamVars {
    pub fn register(tape: &mut Tape<'_>, p: &ModelParams) -> Self {
        let mlp = |m: &Mlp2, tape: &mut Tape<'_>| MlpVars {
            w1: tape.param(m.w1.clone()),
            b1: tape.param(m.b1.clone()),
            w2: tape.param(m.w2.clone()),
            b2: tape.param(m.b2.clone()),
        };
        let xi_w = tape.param(p.xi_w.clone());
        let xi_b = tape.param(p.xi_b.clone());
        let gcn_weights = p.gcn_weights.iter().map(|w| tape.param(w.clone())).collect();
        let w_residual = tape.param(p.w_residual.clone());
        let attr_w = tape.param(p.attr_w.clone());
        let attr_b = tape.param(p.attr_b.clone());
        let q = tape.param(p.q.clone());
        let k = tape.param(p.k.clone());
        let v = tape.param(p.v.clone());
        let w1 = tape.param(p.w1.clone());
        let w2 = tape.param(p.w2.clone());
        let phi_x = mlp(&p.phi_x, tape);
        let mlp_mu = mlp(&p.mlp_mu, tape);
        let mlp_sigma = mlp(&p.mlp_sigma, tape);
        Self {
            xi_w,
            xi_b,
            gcn_weights,
            w_residual,
            attr_w,
            attr_b,
            q,
            k,
            v,
            w1,
            w2,
            phi_x,
            mlp_mu,
            mlp_sigma,
        }
    }

    /// Handles in canonical order, matching [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = alloc::vec![self.xi_w, self.xi_b];
        out.extend(self.gcn_weights.iter().copied());
        out.extend([
            self.w_residual,
            self.attr_w,
            self.attr_b,
            self.q,
            self.k,
            self.v,
            self.w1,
            self.w2,
        ]);
        for m in [self.phi_x, self.mlp_mu, self.mlp_sigma] {
            out.extend([m.w1, m.b1, m.w2, m.b2]);
        }
        out
    }

    /// Gradients after backward, shaped like the parameters. Tensors that
    /// received no gradient come back as zeros.
    pub fn gradients(&self, tape: &Tape<'_>) -> Vec<Matrix> {
        self.vars()
            .into_iter()
            .map(|v| {
                tape.grad(v).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.value(v).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    }
}
