mod common;

use common::*;
use mvt::backbone::{fold_from_tokens, unfold_to_tokens, Mv2Block, SiamMoViTBlock};
use mvt::ops::{AttentionSpec, EncoderLayer, LayerNormParams};
use mvt::weights::{RandomSource, Scope};
use mvt::{ModelConfig, MvtModel, Tensor};

fn mv2(seed: u64, cin: usize, cout: usize, stride: usize) -> Mv2Block {
    let mut src = RandomSource::with_random_norms(seed);
    let mut s = Scope::root(&mut src);
    Mv2Block::load(&mut s, cin, cout, stride, 4, 1e-5).unwrap()
}

fn siam(seed: u64, c: usize, d: usize, heads: usize, layers: usize) -> SiamMoViTBlock {
    let mut src = RandomSource::with_random_norms(seed);
    let mut s = Scope::root(&mut src);
    let spec = AttentionSpec::new(d, heads, 2 * d, layers).unwrap();
    SiamMoViTBlock::load(&mut s, c, spec, (2, 2), 1e-5).unwrap()
}

#[test]
fn mv2_matches_composed_oracle() {
    let mut r = rng(11);
    for (cin, cout, stride, residual) in [(8, 8, 1, true), (6, 10, 1, false), (8, 12, 2, false)] {
        let b = mv2(cin as u64 * 31 + stride as u64, cin, cout, stride);
        assert_eq!(b.residual, residual);
        let x = random_tensor(&mut r, &[cin, 9, 10], 1.0);
        let y = b.forward(&x).unwrap();
        let want = mv2_ref(&Map::from_tensor(&x), &b);
        assert_eq!(y.shape(), &[cout, want.h, want.w]);
        assert!(rel_err(y.data(), &want.d) < 1e-5, "{cin}->{cout} s{stride}");
    }
}

#[test]
fn siam_block_matches_composed_oracle() {
    let mut r = rng(12);
    let b = siam(3, 6, 8, 2, 2);
    let z = random_tensor(&mut r, &[6, 4, 4], 1.0);
    let x = random_tensor(&mut r, &[6, 8, 6], 1.0);
    for fusion in [true, false] {
        let (zo, xo) = b.forward(&z, &x, fusion).unwrap();
        let (wz, wx) = siam_ref(&Map::from_tensor(&z), &Map::from_tensor(&x), &b, fusion);
        assert!(rel_err(zo.data(), &wz.d) < 1e-5, "template, fusion {fusion}");
        assert!(rel_err(xo.data(), &wx.d) < 1e-5, "search, fusion {fusion}");
    }
}

#[test]
fn identity_encoder_reduces_to_convolutional_path() {
    let mut r = rng(13);
    let mut b = siam(4, 5, 8, 2, 2);
    let spec = b.attention;
    b.encoder = vec![EncoderLayer::passthrough(&spec); spec.layers];
    b.norm = LayerNormParams {
        gamma: random_tensor(&mut r, &[8], 1.0),
        beta: random_tensor(&mut r, &[8], 0.5),
    };
    let z = random_tensor(&mut r, &[5, 4, 6], 1.0);
    let x = random_tensor(&mut r, &[5, 8, 8], 1.0);
    // per-pixel LayerNorm over channels, no token plumbing involved
    let conv_path = |m: &Map| {
        let l = conv_layer_ref(&conv_bn_act_ref(m, &b.local), &b.to_tokens);
        let plane = l.h * l.w;
        let mut normed = l.clone();
        for i in 0..plane {
            let px: Vec<f64> = (0..l.c).map(|c| l.d[c * plane + i]).collect();
            let n = layer_norm_ref(&px, l.c, &b.norm);
            for c in 0..l.c {
                normed.d[c * plane + i] = n[c];
            }
        }
        let mapped = conv_bn_act_ref(&normed, &b.from_tokens);
        conv_bn_act_ref(&Map::concat(m, &mapped), &b.fuse)
    };
    for fusion in [true, false] {
        let (zo, xo) = b.forward(&z, &x, fusion).unwrap();
        assert!(rel_err(zo.data(), &conv_path(&Map::from_tensor(&z)).d) < 1e-5);
        assert!(rel_err(xo.data(), &conv_path(&Map::from_tensor(&x)).d) < 1e-5);
    }
}

#[test]
fn blocks_preserve_shapes_at_model_widths() {
    let mut r = rng(14);
    for (c, d, layers, zs, xs, tokens) in [(96, 144, 2, 16, 32, 320), (128, 192, 4, 8, 16, 80)] {
        let b = siam(c as u64, c, d, 4, layers);
        let z = random_tensor(&mut r, &[c, zs, zs], 1.0);
        let x = random_tensor(&mut r, &[c, xs, xs], 1.0);
        let t = unfold_to_tokens(&b.local_features(&z).unwrap(), &b.local_features(&x).unwrap(), 2, 2).unwrap();
        assert_eq!(t.tokens.shape(), &[4, tokens, d]);
        let (zo, xo) = b.forward(&z, &x, true).unwrap();
        assert_eq!(zo.shape(), z.shape());
        assert_eq!(xo.shape(), x.shape());
        assert!(zo.is_finite() && xo.is_finite());
    }
}

#[test]
fn fold_inverts_unfold_bit_exactly() {
    let mut r = rng(15);
    for (d, zs, xs) in [(144, 16, 32), (192, 8, 16)] {
        let z = random_tensor(&mut r, &[d, zs, zs], 10.0);
        let x = random_tensor(&mut r, &[d, xs, xs], 10.0);
        let t = unfold_to_tokens(&z, &x, 2, 2).unwrap();
        let (z2, x2) = fold_from_tokens(&t, (zs, zs), (xs, xs), 2, 2).unwrap();
        assert_eq!(z2, z);
        assert_eq!(x2, x);
    }
}

#[test]
fn fusion_switch_controls_cross_stream_flow() {
    let mut r = rng(16);
    let b = siam(5, 6, 8, 2, 1);
    let z = random_tensor(&mut r, &[6, 4, 4], 1.0);
    let x = random_tensor(&mut r, &[6, 8, 8], 1.0);
    let mut x2 = x.clone();
    x2.data_mut()[3 * 64 + 5 * 8 + 2] += 0.5;
    let off = |x: &Tensor| b.forward(&z, x, false).unwrap().0;
    let on = |x: &Tensor| b.forward(&z, x, true).unwrap().0;
    assert_eq!(off(&x), off(&x2));
    assert!(on(&x).max_abs_diff(&on(&x2)).unwrap() > 0.0);
}

#[test]
fn streams_share_weights() {
    let mut r = rng(17);
    let b = siam(6, 6, 8, 2, 2);
    let a = random_tensor(&mut r, &[6, 6, 6], 1.0);
    let (zo, xo) = b.forward(&a, &a, false).unwrap();
    assert_eq!(zo, xo);
    let m = mv2(7, 6, 6, 1);
    assert_eq!(m.forward(&a).unwrap(), m.forward(&a).unwrap());
}

#[test]
fn backbone_is_deterministic_across_thread_counts() {
    let model = MvtModel::random(&ModelConfig::default(), 21).unwrap();
    let mut r = rng(18);
    let z = random_tensor(&mut r, &[3, 128, 128], 1.0);
    let x = random_tensor(&mut r, &[3, 256, 256], 1.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| model.backbone.forward(&z, &x, true).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a.0.shape(), &[128, 8, 8]);
    assert_eq!(a.1.shape(), &[128, 16, 16]);
}

#[test]
fn zero_input_stays_finite() {
    let model = MvtModel::random(&ModelConfig::default(), 22).unwrap();
    let z = Tensor::zeros(&[3, 128, 128]).unwrap();
    let x = Tensor::zeros(&[3, 256, 256]).unwrap();
    let out = model.forward(&z, &x).unwrap();
    assert!(out.z_feat.is_finite() && out.x_feat.is_finite());
    assert!(out.head.score.is_finite());
}

#[test]
fn backbone_rejects_wrong_input_sizes() {
    let model = MvtModel::random(&ModelConfig::default(), 23).unwrap();
    let z = Tensor::zeros(&[3, 128, 128]).unwrap();
    let x = Tensor::zeros(&[3, 128, 128]).unwrap();
    assert!(model.backbone.forward(&z, &x, true).is_err());
}
