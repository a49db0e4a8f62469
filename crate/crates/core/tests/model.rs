use har_core::model::{
    embed_and_encode, global_temporal_attention, init_params, positional_encoding, self_attention_block, sensor_attention, ForwardOptions,
    HarModel, ModelConfig,
};
use har_core::numerics::{finite_difference_grad, max_relative_error, Graph, Rng, Tensor};
use har_core::train::cross_entropy;
use proptest::prelude::*;

fn config(t: usize, s: usize, d: usize, heads: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        window_len: t,
        channels: s,
        classes,
        d_model: d,
        n_blocks: 1,
        n_heads: heads,
        k_filters: 3,
        dropout: 0.0,
        ..Default::default()
    }
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.5, 1.5))
}

#[test]
fn init_follows_xavier_bounds() {
    let cfg = ModelConfig::default();
    let a = init_params(&cfg, &mut Rng::new(1)).unwrap();
    let b = init_params(&cfg, &mut Rng::new(1)).unwrap();
    assert_eq!(a, b);
    for (name, t) in a.flatten() {
        if name.ends_with("_b") || name.ends_with(".b") || name.ends_with("bias") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name} not zero");
        }
        if name.ends_with("gain") {
            assert!(t.data().iter().all(|&v| v == 1.0), "{name} not one");
        }
    }
    // embed_w is S×d: fan_in S, fan_out d.
    let big = ModelConfig { channels: 100, d_model: 128, ..cfg };
    let p = init_params(&big, &mut Rng::new(2)).unwrap();
    let bound = (6.0f64 / (100.0 + 128.0)).sqrt();
    assert!(p.embed_w.len() >= 10_000);
    assert!(p.embed_w.data().iter().all(|v| v.abs() <= bound));
    assert!(p.embed_w.data().iter().any(|v| v.abs() > 0.9 * bound));
    let gs_bound = (6.0f64 / 256.0).sqrt();
    assert!(p.temporal.g_s.data().iter().all(|v| v.abs() <= gs_bound));
}

#[test]
fn sensor_attention_edge_cases() {
    let cfg = config(4, 1, 8, 2, 2);
    let p = init_params(&cfg, &mut Rng::new(3)).unwrap();
    let x = random(&[4, 1], &mut Rng::new(4));
    let mut g = Graph::new();
    let pv = p.map(&mut |_, t| g.leaf(t.clone()));
    let xv = g.leaf(x.clone());
    let (weighted, scores) = sensor_attention(&mut g, xv, &pv.sensor_attn, &[]).unwrap();
    assert!(g.value(scores).data().iter().all(|&v| v == 1.0));
    assert_eq!(g.value(weighted), &x);

    let cfg = config(5, 4, 8, 2, 2);
    let mut p = init_params(&cfg, &mut Rng::new(3)).unwrap();
    for t in [&mut p.sensor_attn.conv_w, &mut p.sensor_attn.proj_w] {
        *t = Tensor::zeros(t.shape());
    }
    let mut g = Graph::new();
    let pv = p.map(&mut |_, t| g.leaf(t.clone()));
    let xv = g.leaf(random(&[5, 4], &mut Rng::new(5)));
    let (_, scores) = sensor_attention(&mut g, xv, &pv.sensor_attn, &[]).unwrap();
    assert!(g.value(scores).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn embedding_scales_by_root_d() {
    let d = 4;
    let cfg = config(3, d, d, 2, 2);
    let mut p = init_params(&cfg, &mut Rng::new(6)).unwrap();
    p.embed_w = Tensor::eye(d);
    let x = random(&[3, d], &mut Rng::new(7));
    let pe = positional_encoding(3, d).unwrap();
    let mut g = Graph::new();
    let w = g.leaf(p.embed_w.clone());
    let b = g.leaf(p.embed_b.clone());
    let xv = g.leaf(x.clone());
    let out = embed_and_encode(&mut g, xv, w, b, &pe, 0.5, &mut Rng::new(0), false).unwrap();
    let without_pe = g.value(out).zip_map(&pe, |a, b| a - b);
    assert!(without_pe.max_abs_diff(&x.map(|v| v * 2.0)) < 1e-12);
}

#[test]
fn single_time_step_block_returns_values() {
    let cfg = ModelConfig { ffn_dim: Some(8), ..config(1, 2, 4, 1, 2) };
    let p = init_params(&cfg, &mut Rng::new(8)).unwrap();
    let mut g = Graph::new();
    let pv = p.map(&mut |_, t| g.leaf(t.clone()));
    let xv = g.leaf(random(&[1, 4], &mut Rng::new(9)));
    let (_, maps) = self_attention_block(&mut g, xv, &pv.blocks[0], &cfg, &mut Rng::new(0), false).unwrap();
    assert_eq!(g.value(maps[0]).data(), &[1.0]);
}

#[test]
fn temporal_attention_on_identical_rows() {
    let cfg = config(6, 2, 8, 2, 2);
    let p = init_params(&cfg, &mut Rng::new(10)).unwrap();
    let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
    let seq = Tensor::from_rows(&vec![row.clone(); 6]).unwrap();
    let mut g = Graph::new();
    let pv = p.map(&mut |_, t| g.leaf(t.clone()));
    let sv = g.leaf(seq);
    let (c, alpha) = global_temporal_attention(&mut g, sv, &pv.temporal).unwrap();
    assert!(g.value(alpha).data().iter().all(|a| (a - 1.0 / 6.0).abs() < 1e-15));
    assert!(g.value(c).max_abs_diff(&Tensor::new(vec![1, 8], row).unwrap()) < 1e-12);
}

#[test]
fn masked_sensor_is_ignored() {
    // With a sensor extent of 1 the masked channel cannot reach any logit.
    for kernel in [[3, 1], [1, 1]] {
        let cfg = ModelConfig { sa_kernel: kernel, ..config(6, 3, 8, 2, 3) };
        let model = HarModel::new(cfg, 11).unwrap();
        let opts = ForwardOptions {
            masked_sensors: vec![1],
            ..Default::default()
        };
        let mut rng = Rng::new(12);
        let x = random(&[6, 3], &mut rng);
        let base = model.forward_with(&x, &mut Rng::new(0), false, &opts, false).unwrap();
        for _ in 0..5 {
            let mut y = x.clone();
            for t in 0..6 {
                y.data_mut()[t * 3 + 1] = 100.0 * rng.normal();
            }
            let other = model.forward_with(&y, &mut Rng::new(0), false, &opts, false).unwrap();
            assert!(other.logits.max_abs_diff(&base.logits) <= 1e-6);
        }
    }
    // A 3×3 kernel still zeroes the masked channel's direct contribution.
    let cfg = config(6, 3, 8, 2, 3);
    let model = HarModel::new(cfg, 13).unwrap();
    let opts = ForwardOptions {
        masked_sensors: vec![2],
        ..Default::default()
    };
    let p = model.forward_with(&random(&[6, 3], &mut Rng::new(14)), &mut Rng::new(0), false, &opts, false).unwrap();
    for t in 0..6 {
        assert_eq!(p.artifacts.sensor_scores.at2(t, 2), 0.0);
        assert!((p.artifacts.sensor_scores.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn blocks_are_permutation_equivariant() {
    let cfg = config(7, 3, 8, 2, 2);
    let p = init_params(&cfg, &mut Rng::new(15)).unwrap();
    let mut rng = Rng::new(16);
    let x = random(&[7, 8], &mut rng);
    let run = |input: &Tensor| {
        let mut g = Graph::new();
        let pv = p.map(&mut |_, t| g.leaf(t.clone()));
        let xv = g.leaf(input.clone());
        let (out, _) = self_attention_block(&mut g, xv, &pv.blocks[0], &cfg, &mut Rng::new(0), false).unwrap();
        g.value(out).clone()
    };
    let base = run(&x);
    let mut perm: Vec<usize> = (0..7).collect();
    rng.shuffle(&mut perm);
    let permute = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    assert!(run(&permute(&x)).max_abs_diff(&permute(&base)) < 1e-12);
}

#[test]
fn positional_encoding_breaks_time_symmetry() {
    let cfg = ModelConfig { sa_kernel: [1, 3], ..config(5, 2, 8, 2, 2) };
    let model = HarModel::new(cfg, 17).unwrap();
    let x = random(&[5, 2], &mut Rng::new(18));
    let reversed = Tensor::from_rows(&(0..5).rev().map(|i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let a = model.infer(&x).unwrap().logits;
    let b = model.infer(&reversed).unwrap().logits;
    assert!(a.max_abs_diff(&b) > 1e-9);
}

#[test]
fn block_gradients_match_finite_differences() {
    let cfg = ModelConfig { ffn_dim: Some(16), ..config(5, 2, 8, 2, 2) };
    let p = init_params(&cfg, &mut Rng::new(19)).unwrap();
    let mut rng = Rng::new(20);
    let x = random(&[5, 8], &mut rng);
    let probe = random(&[5, 8], &mut rng);
    let block = &p.blocks[0];
    let loss = |b: &har_core::model::BlockParams| {
        let mut g = Graph::new();
        let bv = har_core::model::BlockParams {
            heads: b
                .heads
                .iter()
                .map(|h| har_core::model::HeadParams {
                    w_q: g.leaf(h.w_q.clone()),
                    w_k: g.leaf(h.w_k.clone()),
                    w_v: g.leaf(h.w_v.clone()),
                })
                .collect(),
            w_o: g.leaf(b.w_o.clone()),
            ln1_gain: g.leaf(b.ln1_gain.clone()),
            ln1_bias: g.leaf(b.ln1_bias.clone()),
            ffn_w1: g.leaf(b.ffn_w1.clone()),
            ffn_b1: g.leaf(b.ffn_b1.clone()),
            ffn_w2: g.leaf(b.ffn_w2.clone()),
            ffn_b2: g.leaf(b.ffn_b2.clone()),
            ln2_gain: g.leaf(b.ln2_gain.clone()),
            ln2_bias: g.leaf(b.ln2_bias.clone()),
        };
        let xv = g.leaf(x.clone());
        let (out, _) = self_attention_block(&mut g, xv, &bv, &cfg, &mut Rng::new(0), false).unwrap();
        let value: f64 = g.value(out).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        let grads = g.backward(out, probe.clone());
        let mut flat = vec![];
        for h in &bv.heads {
            flat.extend([h.w_q, h.w_k, h.w_v]);
        }
        flat.extend([bv.w_o, bv.ln1_gain, bv.ln1_bias, bv.ffn_w1, bv.ffn_b1, bv.ffn_w2, bv.ffn_b2, bv.ln2_gain, bv.ln2_bias]);
        (value, flat.into_iter().map(|v| grads.get(v).unwrap().clone()).collect::<Vec<_>>())
    };
    let (_, analytic) = loss(block);
    let getters: Vec<fn(&mut har_core::model::BlockParams) -> &mut Tensor> = vec![
        |b| &mut b.heads[0].w_q,
        |b| &mut b.heads[0].w_k,
        |b| &mut b.heads[0].w_v,
        |b| &mut b.heads[1].w_q,
        |b| &mut b.heads[1].w_k,
        |b| &mut b.heads[1].w_v,
        |b| &mut b.w_o,
        |b| &mut b.ln1_gain,
        |b| &mut b.ln1_bias,
        |b| &mut b.ffn_w1,
        |b| &mut b.ffn_b1,
        |b| &mut b.ffn_w2,
        |b| &mut b.ffn_b2,
        |b| &mut b.ln2_gain,
        |b| &mut b.ln2_bias,
    ];
    for (k, get) in getters.iter().enumerate() {
        let mut probe_block = block.clone();
        let start = get(&mut probe_block).clone();
        let numeric = finite_difference_grad(
            |t| {
                let mut b = block.clone();
                *get(&mut b) = t.clone();
                loss(&b).0
            },
            &start,
            1e-5,
        );
        let err = max_relative_error(&analytic[k], &numeric);
        assert!(err < 1e-4, "block parameter {k}: {err:e}");
    }
}

#[test]
fn end_to_end_gradient_of_sensor_conv() {
    let cfg = config(6, 3, 8, 2, 2);
    let model = HarModel::new(cfg.clone(), 21).unwrap();
    let x = random(&[6, 3], &mut Rng::new(22));
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let input = g.leaf(x.clone());
    let nodes = har_core::model::forward_graph(&mut g, input, &p, &cfg, &mut Rng::new(0), false, &ForwardOptions::default()).unwrap();
    let logits = Tensor::vector(g.value(nodes.logits).data().to_vec());
    let seed = har_core::train::cross_entropy_grad(&logits, 1, None).unwrap().reshape(&[1, 2]).unwrap();
    let grads = g.backward(nodes.logits, seed);
    let numeric = finite_difference_grad(
        |w| {
            let mut m = model.clone();
            m.params.sensor_attn.conv_w = w.clone();
            cross_entropy(&m.infer(&x).unwrap().logits, 1, None).unwrap()
        },
        &model.params.sensor_attn.conv_w,
        1e-5,
    );
    assert!(max_relative_error(grads.get(p.sensor_attn.conv_w).unwrap(), &numeric) < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn artifact_shapes(t in 1usize..10, s in 1usize..6, heads in 1usize..3, blocks in 1usize..3, seed in 0u64..1000) {
        let cfg = ModelConfig { n_blocks: blocks, ..config(t, s, 4 * heads, heads, 3) };
        let model = HarModel::new(cfg, seed).unwrap();
        let x = random(&[t, s], &mut Rng::new(seed));
        let p = model.forward_with(&x, &mut Rng::new(0), false, &ForwardOptions::default(), true).unwrap();
        prop_assert_eq!(p.artifacts.sensor_scores.shape(), &[t, s]);
        prop_assert_eq!(p.artifacts.temporal_alpha.shape(), &[t]);
        prop_assert_eq!(p.logits.shape(), &[3]);
        prop_assert!(p.artifacts.sensor_scores.data().iter().all(|&v| v >= 0.0));
        prop_assert!(p.artifacts.temporal_alpha.data().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(p.artifacts.per_head_maps.unwrap().len(), blocks);
    }
}
