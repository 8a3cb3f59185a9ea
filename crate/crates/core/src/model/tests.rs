use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::community::louvain;
use crate::synthetic::generate_synthetic;

fn zero_params(m: usize, cfg: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::init(m, cfg);
    for t in p.tensors_mut() {
        t.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
    }
    p
}

fn small_cfg(d: usize) -> ModelConfig {
    ModelConfig {
        hidden_dim: d,
        ..ModelConfig::default()
    }
}

fn fixture(n: usize, m: usize, seed: u64) -> (AttributedGraph, CommunityAssignment) {
    let g = generate_synthetic(n, 4.0, m, 2, seed).unwrap();
    let c = louvain(&g, seed);
    (g, c)
}

fn path2(features: Matrix) -> AttributedGraph {
    AttributedGraph::new(2, [(0, 1)], features, None).unwrap()
}

#[test]
fn zero_weights_give_zero_structure_embedding() {
    let (g, c) = fixture(12, 3, 1);
    let cfg = small_cfg(4);
    let inputs = ModelInputs::new(&g, &c).unwrap();
    let params = zero_params(3, &cfg);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h1 = encode_structure(&mut t, &inputs, &p).unwrap();
    assert!(t.value(h1).as_slice().iter().all(|&x| x == 0.0));
    assert_eq!(t.value(h1).shape(), (12, 4));
}

#[test]
fn edgeless_graph_uses_own_community_average() {
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.5], vec![0.25, 4.0]]);
    let g = AttributedGraph::new(3, [], x, None).unwrap();
    let c = CommunityAssignment::singletons(3);
    let cfg = ModelConfig {
        hidden_dim: 2,
        gcn_layers: 2,
        ..ModelConfig::default()
    };
    let mut params = zero_params(2, &cfg);
    params.xi_w = Matrix::identity(2);
    params.gcn_weights = vec![Matrix::identity(2), Matrix::identity(2)];
    let inputs = ModelInputs::new(&g, &c).unwrap();
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h1 = encode_structure(&mut t, &inputs, &p).unwrap();
    assert_eq!(t.value(h1), g.features());
}

#[test]
fn two_node_path_hand_case() {
    let g = path2(Matrix::column(&[1.0, 3.0]));
    let c = CommunityAssignment::singletons(2);
    let cfg = ModelConfig {
        hidden_dim: 1,
        gcn_layers: 1,
        ..ModelConfig::default()
    };
    let mut params = zero_params(1, &cfg);
    params.xi_w = Matrix::filled(1, 1, 1.0);
    params.gcn_weights = vec![Matrix::filled(1, 1, 2.0)];
    params.w_residual = Matrix::filled(1, 1, 3.0);
    let inputs = ModelInputs::new(&g, &c).unwrap();
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h1 = encode_structure(&mut t, &inputs, &p).unwrap();
    // h0 = [1, 3]; Â = 0.5 everywhere; h1 = relu(0.5 * 4 * 2) = 4; residual 0.5 * 4 * 3 = 6
    assert!(t.value(h1).as_slice().iter().all(|&x| (x - 10.0).abs() < 1e-12));
}

#[test]
fn attribute_encoder_examples() {
    let cfg = ModelConfig {
        hidden_dim: 1,
        gcn_layers: 1,
        ..ModelConfig::default()
    };
    let g = path2(Matrix::column(&[2.0, -1.0]));
    let inputs = ModelInputs::new(&g, &CommunityAssignment::single(2)).unwrap();
    let mut params = zero_params(1, &cfg);
    params.attr_w = Matrix::filled(1, 1, 3.0);
    params.attr_b = Matrix::filled(1, 1, -1.0);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h2 = encode_attributes(&mut t, &inputs, &p).unwrap();
    // 2*3 - 1 = 5; -1*3 - 1 < 0 clamps to 0
    assert_eq!(t.value(h2).as_slice(), &[5.0, 0.0]);

    let zero = zero_params(1, &cfg);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &zero);
    let h2 = encode_attributes(&mut t, &inputs, &p).unwrap();
    assert_eq!(t.value(h2).as_slice(), &[0.0, 0.0]);
}

#[test]
fn identical_tokens_attend_uniformly() {
    let cfg = small_cfg(3);
    let params = ModelParams::init(2, &cfg);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.5, 0.2, -0.7]]);
    let h1 = t.constant(h.clone());
    let h2 = t.constant(h);
    let f = fuse(&mut t, h1, h2, &p).unwrap();
    for row in f.attention_avg {
        for x in row {
            assert!((x - 0.5).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_query_attends_uniformly() {
    let cfg = small_cfg(2);
    let mut params = ModelParams::init(2, &cfg);
    params.q = Matrix::zeros(2, 2);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h1 = t.constant(Matrix::from_rows(&[vec![1.0, 2.0]]));
    let h2 = t.constant(Matrix::from_rows(&[vec![-3.0, 0.5]]));
    let f = fuse(&mut t, h1, h2, &p).unwrap();
    assert_eq!(f.attention_avg, [[0.5, 0.5], [0.5, 0.5]]);
}

#[test]
fn fusion_one_dimensional_hand_case() {
    let cfg = ModelConfig {
        hidden_dim: 1,
        gcn_layers: 1,
        ..ModelConfig::default()
    };
    let mut params = zero_params(1, &cfg);
    params.q = Matrix::filled(1, 1, 1.0);
    params.k = Matrix::filled(1, 1, 1.0);
    params.v = Matrix::filled(1, 1, 1.0);
    params.w1 = Matrix::column(&[1.0, 1.0]);
    params.w2 = Matrix::from_rows(&[vec![1.0, 2.0]]);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h1 = t.constant(Matrix::filled(1, 1, 1.0));
    let h2 = t.constant(Matrix::filled(1, 1, 2.0));
    let f = fuse(&mut t, h1, h2, &p).unwrap();

    let softmax2 = |a: f64, b: f64| {
        let (ea, eb) = (libm::exp(a), libm::exp(b));
        (ea / (ea + eb), eb / (ea + eb))
    };
    // token 1 queries with 1: logits [1, 2]; token 2 with 2: logits [2, 4]
    let (a11, a12) = softmax2(1.0, 2.0);
    let (a21, a22) = softmax2(2.0, 4.0);
    let h1p = a11 * 1.0 + a12 * 2.0;
    let h2p = a21 * 1.0 + a22 * 2.0;
    let z = h1p + h2p;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    assert!(close(t.value(f.h1).get(0, 0), z));
    assert!(close(t.value(f.h2).get(0, 0), 2.0 * z));
    assert!(close(f.attention_avg[0][0], a11) && close(f.attention_avg[1][1], a22));
}

#[test]
fn attribute_decoder_examples() {
    let cfg = ModelConfig {
        hidden_dim: 1,
        gcn_layers: 1,
        ..ModelConfig::default()
    };
    let zero = zero_params(1, &cfg);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &zero);
    let h = t.constant(Matrix::column(&[0.7, 2.0, 3.0]));
    let x_hat = decode_attributes(&mut t, h, &p).unwrap();
    assert!(t.value(x_hat).as_slice().iter().all(|&x| x == 0.0));

    let mut id = zero.clone();
    id.phi_x.w1 = Matrix::identity(1);
    id.phi_x.w2 = Matrix::identity(1);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &id);
    let h = t.constant(Matrix::column(&[0.7, 2.0, 3.0]));
    let x_hat = decode_attributes(&mut t, h, &p).unwrap();
    assert_eq!(t.value(x_hat).as_slice(), &[0.7, 2.0, 3.0]);
}

#[test]
fn attribute_decoder_output_shape() {
    let cfg = small_cfg(3);
    let params = ModelParams::init(5, &cfg);
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h = t.constant(Matrix::filled(7, 3, 0.1));
    let x_hat = decode_attributes(&mut t, h, &p).unwrap();
    assert_eq!(t.value(x_hat).shape(), (7, 5));
}

#[test]
fn neighborhood_decoder_examples() {
    // star: hub 0 with leaves 1, 2
    let g = AttributedGraph::new(3, [(0, 1), (0, 2)], Matrix::filled(3, 1, 1.0), None).unwrap();
    let inputs = ModelInputs::new(&g, &CommunityAssignment::single(3)).unwrap();
    let cfg = ModelConfig {
        hidden_dim: 2,
        gcn_layers: 1,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(1, &cfg);
    params.mlp_sigma = zero_params(1, &cfg).mlp_sigma;
    let mut t = Tape::new();
    let p = ParamVars::register(&mut t, &params);
    let h = t.constant(Matrix::from_rows(&[vec![9.0, 9.0], vec![1.0, 2.0], vec![3.0, 6.0]]));
    let nd = decode_neighborhood(&mut t, h, &inputs, &p, cfg.sigma_floor, None).unwrap();
    assert!(t.value(nd.sigma_gen).as_slice().iter().all(|&s| s == 1.0));
    assert_eq!(t.value(nd.mu_true).row(0), &[2.0, 4.0]);
    // each leaf sees only the hub: single-sample std is floored
    assert_eq!(t.value(nd.sigma_true).row(1), &[cfg.sigma_floor; 2]);
    assert_eq!(t.value(nd.mu_true).row(2), &[9.0, 9.0]);
}

fn jsd_values(mu_t: &[f64], s_t: &[f64], mu_g: &[f64], s_g: &[f64]) -> f64 {
    let mut t = Tape::new();
    let row = |v: &[f64]| Matrix::from_rows(&[v.to_vec()]);
    let a = t.constant(row(mu_t));
    let b = t.constant(row(s_t));
    let c = t.constant(row(mu_g));
    let d = t.constant(row(s_g));
    let j = jsd_neighborhood_loss(&mut t, a, b, c, d, DEFAULT_SIGMA_FLOOR).unwrap();
    t.value(j).get(0, 0)
}

/// Per dimension the two KL terms to the moment-matched midpoint collapse
/// to `½ ln(σ_m² / (σ_t σ_g))`.
fn jsd_closed_form(mu_t: &[f64], s_t: &[f64], mu_g: &[f64], s_g: &[f64]) -> f64 {
    (0..mu_t.len())
        .map(|i| {
            let half = (mu_t[i] - mu_g[i]) / 2.0;
            let var_m = (s_t[i] * s_t[i] + s_g[i] * s_g[i]) / 2.0 + half * half;
            0.5 * libm::log(var_m / (s_t[i] * s_g[i]))
        })
        .sum()
}

#[test]
fn jsd_examples() {
    assert_eq!(jsd_values(&[0.3, -1.0], &[0.5, 2.0], &[0.3, -1.0], &[0.5, 2.0]), 0.0);
    let v = jsd_values(&[0.0], &[1.0], &[2.0], &[1.0]);
    assert!((v - 0.5 * libm::log(2.0)).abs() < 1e-12);
    let (a, b, c, d) = ([0.1, 2.0, -0.4], [0.3, 1.2, 0.9], [1.0, -0.5, 0.0], [2.0, 0.4, 0.9]);
    let fwd = jsd_values(&a, &b, &c, &d);
    let rev = jsd_values(&c, &d, &a, &b);
    assert!((fwd - rev).abs() < 1e-12);
    assert!((fwd - jsd_closed_form(&a, &b, &c, &d)).abs() < 1e-12);
    assert!(fwd > 0.0);
}

#[test]
fn jsd_rejects_non_finite_input() {
    let mut t = Tape::new();
    let a = t.constant(Matrix::filled(2, 1, 0.0));
    let b = t.constant(Matrix::filled(2, 1, 1.0));
    let c = t.constant(Matrix::column(&[0.0, f64::NAN]));
    let err = jsd_neighborhood_loss(&mut t, a, b, c, b, 1e-6).unwrap_err();
    assert_eq!(
        err,
        Error::NonFinite {
            what: "generated mean",
            row: 1
        }
    );
}

#[test]
fn feature_loss_examples() {
    let mut t = Tape::new();
    let x = t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 2.0]]));
    let x_hat = t.constant(Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]));
    let l = feature_loss(&mut t, x, x_hat).unwrap();
    assert_eq!(t.value(l).as_slice(), &[0.5, 0.0]);
}

#[test]
fn total_loss_weighting() {
    let mut t = Tape::new();
    let f = t.constant(Matrix::column(&[0.5, 1.5]));
    let h = t.constant(Matrix::column(&[0.25, 0.0]));
    let at = |t: &mut Tape<'_>, lx: f64, ln: f64| {
        let cfg = ModelConfig {
            lambda_x: lx,
            lambda_n: ln,
            ..ModelConfig::default()
        };
        let v = total_loss(t, f, h, &cfg).unwrap();
        t.value(v).get(0, 0)
    };
    assert_eq!(at(&mut t, 0.0, 1.0), 0.25);
    assert_eq!(at(&mut t, 1.0, 0.0), 2.0);
    assert_eq!(at(&mut t, 1.0, 1.0), 2.25);
}

#[test]
fn forward_output_invariants() {
    for seed in 0..5 {
        let (g, c) = fixture(30, 6, seed);
        let cfg = ModelConfig {
            seed,
            ..small_cfg(4)
        };
        let params = ModelParams::init(6, &cfg);
        let out = forward(&g, &c, &cfg, &params).unwrap();
        for row in out.attention_avg {
            assert!((row[0] + row[1] - 1.0).abs() <= 1e-9);
        }
        assert!(out.h_loss.iter().chain(&out.feature_loss).all(|&x| x >= 0.0));
        assert!(out.total_loss >= 0.0);
        for i in 0..g.num_nodes() {
            if g.degree(i) == 0 {
                assert_eq!(out.h_loss[i], 0.0);
            }
        }
    }
}

#[test]
fn permutation_equivariance() {
    let (g, c) = fixture(25, 5, 3);
    let cfg = small_cfg(4);
    let params = ModelParams::init(5, &cfg);
    let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
    let gp = g.permuted(&perm).unwrap();
    let cp = c.permuted(&perm);
    let a = forward(&g, &c, &cfg, &params).unwrap();
    let b = forward(&gp, &cp, &cfg, &params).unwrap();
    assert!((a.total_loss - b.total_loss).abs() <= 1e-9);
    for i in 0..25 {
        assert!((a.h_loss[i] - b.h_loss[perm[i]]).abs() <= 1e-9);
        assert!((a.feature_loss[i] - b.feature_loss[perm[i]]).abs() <= 1e-9);
    }
}

#[test]
fn frozen_targets_reproduce_the_unfrozen_pass() {
    let (g, c) = fixture(15, 4, 2);
    let cfg = small_cfg(3);
    let params = ModelParams::init(4, &cfg);
    let inputs = ModelInputs::new(&g, &c).unwrap();
    let mut t = Tape::new();
    let trace = forward_on_tape(&mut t, &inputs, &cfg, &params, None).unwrap();
    let targets = trace.targets(&t);
    let mut t2 = Tape::new();
    let again = forward_on_tape(&mut t2, &inputs, &cfg, &params, Some(&targets)).unwrap();
    assert_eq!(trace.output(&t), again.output(&t2));
}

#[test]
fn gradients_match_finite_differences() {
    let (g, c) = fixture(12, 4, 9);
    let cfg = small_cfg(3);
    let params = ModelParams::init(4, &cfg);
    let inputs = ModelInputs::new(&g, &c).unwrap();
    let mut t = Tape::new();
    let trace = forward_on_tape(&mut t, &inputs, &cfg, &params, None).unwrap();
    t.backward(trace.total).unwrap();
    let grads = trace.params.gradients(&t);
    let targets = trace.targets(&t);

    let loss_at = |p: &ModelParams| {
        let mut t = Tape::new();
        let tr = forward_on_tape(&mut t, &inputs, &cfg, p, Some(&targets)).unwrap();
        t.value(tr.total).get(0, 0)
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, grad) in grads.iter().enumerate() {
        for j in 0..grad.as_slice().len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].as_mut_slice()[j] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].as_mut_slice()[j] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let a = grad.as_slice()[j];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}
