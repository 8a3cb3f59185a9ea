//! The detector network.
//!
//! ```text
//! x_avg ─ ξ ─ GCN × L ─┐
//!                      + ─ H1 ─┐                    ┌ H1'' ─ MLP_μ, exp∘MLP_σ ─ JSD vs neighbors
//! Â X W_residual ──────┘       ├ attention ─ W1 ─ W2 ┤
//! X ─ relu(X W + b) ──── H2 ───┘                    └ H2'' ─ Φ_x ─ ‖x − x̂‖²/M
//! ```

mod params;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use params::{Mlp2, MlpVars, ModelParams, ParamVars};

use crate::autodiff::{Tape, Var};
use crate::community::{community_average_features, CommunityAssignment};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Neighbors};
use crate::matrix::Matrix;
use crate::sparse::SparseAdjacency;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub lambda_x: f64,
    pub lambda_n: f64,
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            gcn_layers: 2,
            lambda_x: 1.0,
            lambda_n: 0.5,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if self.gcn_layers == 0 {
            return bad("gcn_layers must be at least 1");
        }
        if !(self.lambda_x.is_finite() && self.lambda_x >= 0.0) {
            return bad("lambda_x must be finite and non-negative");
        }
        if !(self.lambda_n.is_finite() && self.lambda_n >= 0.0) {
            return bad("lambda_n must be finite and non-negative");
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return bad("sigma_floor must be positive");
        }
        Ok(())
    }
}

/// Graph-derived constants, computed once per training run.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub a_hat: SparseAdjacency,
    pub features: Matrix,
    pub x_avg: Matrix,
    pub neighbors: Neighbors,
    /// `N x 1`, 1 for nodes with at least one neighbor.
    pub has_neighbors: Matrix,
}

impl ModelInputs {
    pub fn new(g: &AttributedGraph, communities: &CommunityAssignment) -> Result<Self> {
        let x_avg = community_average_features(g, communities)?;
        let mask: Vec<f64> = (0..g.num_nodes())
            .map(|i| if g.degree(i) > 0 { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            a_hat: g.normalized_adjacency(),
            features: g.features().clone(),
            x_avg,
            neighbors: g.neighbors().clone(),
            has_neighbors: Matrix::column(&mask),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }
}

/// Per-node losses and the averaged attention of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardOutput {
    /// Neighborhood reconstruction (JSD), 0 for isolated nodes.
    pub h_loss: Vec<f64>,
    /// Attribute reconstruction, mean squared error over feature columns.
    pub feature_loss: Vec<f64>,
    pub total_loss: f64,
    /// Row `i` is the attention of token `i` (0 = structural, 1 = attribute)
    /// over both tokens, averaged across nodes.
    pub attention_avg: [[f64; 2]; 2],
    /// Sigma entries raised to the floor during this pass.
    pub sigma_clamps: usize,
}

/// `H1 = relu(Â ... relu(Â relu(ξ(x_avg)) W1) ... W_L) + Â X W_residual`.
pub fn encode_structure<'a>(
    t: &mut Tape<'a>,
    inputs: &'a ModelInputs,
    p: &ParamVars,
) -> Result<Var> {
    let x_avg = t.constant_ref(&inputs.x_avg);
    let h = t.matmul(x_avg, p.xi_w)?;
    let h = t.add_bias(h, p.xi_b)?;
    let mut h = t.relu(h)?;
    for &w in &p.gcn_weights {
        let hw = t.matmul(h, w)?;
        let agg = t.spmm(&inputs.a_hat, hw)?;
        h = t.relu(agg)?;
    }
    let x = t.constant_ref(&inputs.features);
    let xw = t.matmul(x, p.w_residual)?;
    let residual = t.spmm(&inputs.a_hat, xw)?;
    t.add(h, residual)
}

/// `H2 = relu(X W + b)`.
pub fn encode_attributes<'a>(
    t: &mut Tape<'a>,
    inputs: &'a ModelInputs,
    p: &ParamVars,
) -> Result<Var> {
    let x = t.constant_ref(&inputs.features);
    let z = t.matmul(x, p.attr_w)?;
    let z = t.add_bias(z, p.attr_b)?;
    t.relu(z)
}

#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub h1: Var,
    pub h2: Var,
    /// `N x 2` attention rows of the structural and the attribute token.
    pub attn1: Var,
    pub attn2: Var,
    pub attention_avg: [[f64; 2]; 2],
}

fn row_dot(t: &mut Tape<'_>, a: Var, b: Var) -> Result<Var> {
    let prod = t.mul(a, b)?;
    t.row_sum(prod)
}

/// Two-token self-attention per node, then concat, down- and up-projection
/// and a positional split back into two `N x d` halves.
pub fn fuse(t: &mut Tape<'_>, h1: Var, h2: Var, p: &ParamVars) -> Result<Fused> {
    let (s1, s2) = (t.value(h1).shape(), t.value(h2).shape());
    if s1 != s2 {
        return Err(Error::ShapeMismatch {
            op: "fuse",
            left: s1,
            right: s2,
        });
    }
    let d = s1.1;
    let scale = 1.0 / libm::sqrt(d as f64);
    let (q1, q2) = (t.matmul(h1, p.q)?, t.matmul(h2, p.q)?);
    let (k1, k2) = (t.matmul(h1, p.k)?, t.matmul(h2, p.k)?);
    let (v1, v2) = (t.matmul(h1, p.v)?, t.matmul(h2, p.v)?);

    let attend = |t: &mut Tape<'_>, q: Var| -> Result<(Var, Var)> {
        let l1 = row_dot(t, q, k1)?;
        let l2 = row_dot(t, q, k2)?;
        let logits = t.concat_cols(l1, l2)?;
        let logits = t.scale(logits, scale)?;
        let attn = t.softmax_rows(logits)?;
        let (a1, a2) = t.split_cols(attn, 1)?;
        let m1 = t.mul_col(v1, a1)?;
        let m2 = t.mul_col(v2, a2)?;
        Ok((t.add(m1, m2)?, attn))
    };
    let (h1p, attn1) = attend(t, q1)?;
    let (h2p, attn2) = attend(t, q2)?;

    let z = t.concat_cols(h1p, h2p)?;
    let z_down = t.matmul(z, p.w1)?;
    let z_up = t.matmul(z_down, p.w2)?;
    let (h1pp, h2pp) = t.split_cols(z_up, d)?;

    let n = s1.0.max(1) as f64;
    let mut attention_avg = [[0.0; 2]; 2];
    for (row, attn) in [attn1, attn2].into_iter().enumerate() {
        let a = t.value(attn);
        for r in 0..a.rows() {
            attention_avg[row][0] += a.get(r, 0);
            attention_avg[row][1] += a.get(r, 1);
        }
        attention_avg[row][0] /= n;
        attention_avg[row][1] /= n;
    }
    Ok(Fused {
        h1: h1pp,
        h2: h2pp,
        attn1,
        attn2,
        attention_avg,
    })
}

/// `x̂ = Φ_x(H2'')`.
pub fn decode_attributes(t: &mut Tape<'_>, h2pp: Var, p: &ParamVars) -> Result<Var> {
    p.phi_x.forward(t, h2pp)
}

/// Target neighborhood statistics held fixed during one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTargets {
    pub mu: Matrix,
    pub sigma: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct NeighborhoodDecode {
    pub mu_gen: Var,
    pub sigma_gen: Var,
    pub mu_true: Var,
    pub sigma_true: Var,
}

/// Generated distribution from `H1''` and the target distribution of the
/// neighbors' `H1''` rows. The target side carries no gradient; `frozen`
/// substitutes precomputed targets (finite-difference checks use this to
/// evaluate the exact surrogate the tape differentiates).
pub fn decode_neighborhood<'a>(
    t: &mut Tape<'a>,
    h1pp: Var,
    inputs: &'a ModelInputs,
    p: &ParamVars,
    sigma_floor: f64,
    frozen: Option<&NeighborTargets>,
) -> Result<NeighborhoodDecode> {
    let mu_gen = p.mlp_mu.forward(t, h1pp)?;
    let log_sigma = p.mlp_sigma.forward(t, h1pp)?;
    let sigma_raw = t.exp(log_sigma)?;
    let sigma_gen = t.clamp_min(sigma_raw, sigma_floor)?;
    let (mu_true, sigma_true) = match frozen {
        Some(f) => (t.constant(f.mu.clone()), t.constant(f.sigma.clone())),
        None => {
            let target = t.detach(h1pp);
            let (mu, sigma) = t.segment_mean_std(target, &inputs.neighbors)?;
            (mu, t.clamp_min(sigma, sigma_floor)?)
        }
    };
    Ok(NeighborhoodDecode {
        mu_gen,
        sigma_gen,
        mu_true,
        sigma_true,
    })
}

fn ensure_finite(t: &Tape<'_>, v: Var, what: &'static str) -> Result<()> {
    let m = t.value(v);
    for r in 0..m.rows() {
        if m.row(r).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what, row: r });
        }
    }
    Ok(())
}

/// Jensen-Shannon divergence between diagonal Gaussians, per row, using the
/// moment-matched Gaussian midpoint
/// `μ_m = (μ_t + μ_g)/2`, `σ_m² = (σ_t² + σ_g²)/2 + ((μ_t − μ_g)/2)²`.
pub fn jsd_neighborhood_loss(
    t: &mut Tape<'_>,
    mu_t: Var,
    sigma_t: Var,
    mu_g: Var,
    sigma_g: Var,
    sigma_floor: f64,
) -> Result<Var> {
    for (v, what) in [
        (mu_t, "target mean"),
        (sigma_t, "target sigma"),
        (mu_g, "generated mean"),
        (sigma_g, "generated sigma"),
    ] {
        ensure_finite(t, v, what)?;
    }
    let sum_mu = t.add(mu_t, mu_g)?;
    let mu_m = t.scale(sum_mu, 0.5)?;
    let diff = t.sub(mu_t, mu_g)?;
    let half_diff = t.scale(diff, 0.5)?;
    let shift = t.square(half_diff)?;
    let var_t = t.square(sigma_t)?;
    let var_g = t.square(sigma_g)?;
    let var_sum = t.add(var_t, var_g)?;
    let var_avg = t.scale(var_sum, 0.5)?;
    let var_m = t.add(var_avg, shift)?;
    let sigma_m = t.sqrt(var_m)?;
    let kl_t = t.gaussian_kl(mu_t, sigma_t, mu_m, sigma_m, sigma_floor)?;
    let kl_g = t.gaussian_kl(mu_g, sigma_g, mu_m, sigma_m, sigma_floor)?;
    let both = t.add(kl_t, kl_g)?;
    t.scale(both, 0.5)
}

/// `‖x_u − x̂_u‖² / M` per node.
pub fn feature_loss(t: &mut Tape<'_>, x: Var, x_hat: Var) -> Result<Var> {
    let cols = t.value(x).cols().max(1);
    let diff = t.sub(x, x_hat)?;
    let sq = t.square(diff)?;
    let per_node = t.row_sum(sq)?;
    t.scale(per_node, 1.0 / cols as f64)
}

/// `λ_x Σ_u feature_loss_u + λ_n Σ_u h_loss_u`.
pub fn total_loss(
    t: &mut Tape<'_>,
    feature: Var,
    h_loss: Var,
    cfg: &ModelConfig,
) -> Result<Var> {
    let f = t.sum(feature)?;
    let f = t.scale(f, cfg.lambda_x)?;
    let h = t.sum(h_loss)?;
    let h = t.scale(h, cfg.lambda_n)?;
    t.add(f, h)
}

/// Handles to the interesting tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub params: ParamVars,
    pub h1: Var,
    pub h2: Var,
    pub fused: Fused,
    pub x_hat: Var,
    pub neighborhood: NeighborhoodDecode,
    pub h_loss: Var,
    pub feature_loss: Var,
    pub total: Var,
}

impl Trace {
    pub fn output(&self, t: &Tape<'_>) -> ForwardOutput {
        ForwardOutput {
            h_loss: t.value(self.h_loss).as_slice().to_vec(),
            feature_loss: t.value(self.feature_loss).as_slice().to_vec(),
            total_loss: t.value(self.total).get(0, 0),
            attention_avg: self.fused.attention_avg,
            sigma_clamps: t.clamp_events(),
        }
    }

    pub fn targets(&self, t: &Tape<'_>) -> NeighborTargets {
        NeighborTargets {
            mu: t.value(self.neighborhood.mu_true).clone(),
            sigma: t.value(self.neighborhood.sigma_true).clone(),
        }
    }
}

/// Records the full forward pass on `t`.
pub fn forward_on_tape<'a>(
    t: &mut Tape<'a>,
    inputs: &'a ModelInputs,
    cfg: &ModelConfig,
    params: &ModelParams,
    frozen: Option<&NeighborTargets>,
) -> Result<Trace> {
    let p = ParamVars::register(t, params);
    let h1 = encode_structure(t, inputs, &p)?;
    let h2 = encode_attributes(t, inputs, &p)?;
    let fused = fuse(t, h1, h2, &p)?;
    let x_hat = decode_attributes(t, fused.h2, &p)?;
    let neighborhood = decode_neighborhood(t, fused.h1, inputs, &p, cfg.sigma_floor, frozen)?;
    let jsd = jsd_neighborhood_loss(
        t,
        neighborhood.mu_true,
        neighborhood.sigma_true,
        neighborhood.mu_gen,
        neighborhood.sigma_gen,
        cfg.sigma_floor,
    )?;
    let mask = t.constant_ref(&inputs.has_neighbors);
    let h_loss = t.mul(jsd, mask)?;
    let x = t.constant_ref(&inputs.features);
    let feat = feature_loss(t, x, x_hat)?;
    let total = total_loss(t, feat, h_loss, cfg)?;
    Ok(Trace {
        params: p,
        h1,
        h2,
        fused,
        x_hat,
        neighborhood,
        h_loss,
        feature_loss: feat,
        total,
    })
}

/// Forward pass over a graph and its community partition.
pub fn forward(
    g: &AttributedGraph,
    communities: &CommunityAssignment,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<ForwardOutput> {
    let inputs = ModelInputs::new(g, communities)?;
    forward_inputs(&inputs, cfg, params)
}

/// Forward pass on precomputed inputs, without gradients.
pub fn forward_inputs(
    inputs: &ModelInputs,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<ForwardOutput> {
    let mut t = Tape::new();
    let trace = forward_on_tape(&mut t, inputs, cfg, params, None)?;
    Ok(trace.output(&t))
}

/// Forward plus backward: returns the output and the gradient of the total
/// loss for every parameter tensor in canonical order.
pub fn forward_backward(
    inputs: &ModelInputs,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<(ForwardOutput, Vec<Matrix>)> {
    let mut t = Tape::new();
    let trace = forward_on_tape(&mut t, inputs, cfg, params, None)?;
    t.backward(trace.total)?;
    Ok((trace.output(&t), trace.params.gradients(&t)))
}

#[cfg(test)]
mod tests;
