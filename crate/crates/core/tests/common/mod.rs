//! Brute-force f64 reference implementations shared by the integration tests.
#![allow(dead_code)]

use mvt::backbone::{Mv2Block, SiamMoViTBlock};
use mvt::head::Branch;
use mvt::layers::{BatchNorm, Conv, ConvBnAct};
use mvt::ops::{Activation, AttentionSpec, ConvSpec, EncoderLayer, LayerNormParams};
use mvt::{BBox, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..=scale)).unwrap()
}

/// Dense `[C, H, W]` map in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl Map {
    pub fn from_tensor(t: &Tensor) -> Self {
        let (c, h, w) = t.chw().unwrap();
        Self {
            c,
            h,
            w,
            d: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.d[(c * self.h + y) * self.w + x]
    }

    pub fn concat(a: &Map, b: &Map) -> Map {
        assert_eq!((a.h, a.w), (b.h, b.w));
        let mut d = a.d.clone();
        d.extend_from_slice(&b.d);
        Map { c: a.c + b.c, h: a.h, w: a.w, d }
    }
}

/// Largest deviation relative to the largest reference magnitude.
pub fn rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    got.iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn act(v: f64, a: Option<Activation>) -> f64 {
    match a {
        None => v,
        Some(Activation::Relu) => v.max(0.0),
        Some(Activation::Silu) => v / (1.0 + (-v).exp()),
        Some(Activation::Sigmoid) => 1.0 / (1.0 + (-v).exp()),
    }
}

/// Direct summation over every in-bounds tap.
pub fn conv_ref(x: &Map, spec: &ConvSpec, weight: &Tensor, bias: Option<&Tensor>) -> Map {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let ho = (x.h + 2 * spec.padding - kh) / spec.stride + 1;
    let wo = (x.w + 2 * spec.padding - kw) / spec.stride + 1;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let wd = weight.data();
    let mut d = vec![0.0; spec.out_channels * ho * wo];
    for o in 0..spec.out_channels {
        let g = o / cout_g;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias.map_or(0.0, |b| b.data()[o] as f64);
                for ci in 0..cin_g {
                    let c = g * cin_g + ci;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize * s - p + ky as isize;
                            let ix = ox as isize * s - p + kx as isize;
                            if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                continue;
                            }
                            let wv = wd[((o * cin_g + ci) * kh + ky) * kw + kx] as f64;
                            acc += wv * x.at(c, iy as usize, ix as usize);
                        }
                    }
                }
                d[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Map { c: spec.out_channels, h: ho, w: wo, d }
}

pub fn bn_ref(x: &Map, bn: &BatchNorm) -> Map {
    let plane = x.h * x.w;
    let mut out = x.clone();
    for c in 0..x.c {
        let (g, b) = (bn.gamma.data()[c] as f64, bn.beta.data()[c] as f64);
        let (m, v) = (bn.mean.data()[c] as f64, bn.var.data()[c] as f64);
        let inv = 1.0 / (v + bn.eps as f64).sqrt();
        for i in 0..plane {
            let e = &mut out.d[c * plane + i];
            *e = (*e - m) * inv * g + b;
        }
    }
    out
}

pub fn conv_layer_ref(x: &Map, l: &Conv) -> Map {
    conv_ref(x, &l.spec, &l.weight, l.bias.as_ref())
}

pub fn conv_bn_act_ref(x: &Map, l: &ConvBnAct) -> Map {
    let mut y = bn_ref(&conv_layer_ref(x, &l.conv), &l.bn);
    y.d.iter_mut().for_each(|v| *v = act(*v, l.act));
    y
}

pub fn mv2_ref(x: &Map, b: &Mv2Block) -> Map {
    let y = conv_bn_act_ref(x, &b.expand);
    let y = conv_bn_act_ref(&y, &b.depthwise);
    let mut y = conv_bn_act_ref(&y, &b.project);
    if b.residual {
        y.d.iter_mut().zip(&x.d).for_each(|(o, i)| *o += i);
    }
    y
}

/// Layer norm of each row of `[N, D]`.
pub fn layer_norm_ref(x: &[f64], d: usize, p: &LayerNormParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for (j, v) in row.iter().enumerate() {
            out.push((v - mean) * inv * p.gamma.data()[j] as f64 + p.beta.data()[j] as f64);
        }
    }
    out
}

/// `y = x · Wᵀ + b` with `W: [out, in]`.
pub fn linear_ref(x: &[f64], din: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let dout = w.shape()[0];
    let n = x.len() / din;
    let mut y = vec![0.0; n * dout];
    for i in 0..n {
        for o in 0..dout {
            let mut acc = b.data()[o] as f64;
            for k in 0..din {
                acc += x[i * din + k] * w.data()[o * din + k] as f64;
            }
            y[i * dout + o] = acc;
        }
    }
    y
}

pub fn self_attention_ref(normed: &[f64], layer: &EncoderLayer, spec: &AttentionSpec) -> Vec<f64> {
    let d = spec.embed_dim;
    let n = normed.len() / d;
    let (heads, dh) = (spec.num_heads, spec.head_dim());
    let qkv = linear_ref(normed, d, &layer.qkv_weight, &layer.qkv_bias);
    let at = |i: usize, part: usize, h: usize, k: usize| qkv[i * 3 * d + part * d + h * dh + k];
    let mut merged = vec![0.0; n * d];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..dh).map(|k| at(i, 0, h, k) * at(j, 1, h, k)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for k in 0..dh {
                merged[i * d + h * dh + k] = (0..n).map(|j| e[j] / z * at(j, 2, h, k)).sum();
            }
        }
    }
    linear_ref(&merged, d, &layer.out_weight, &layer.out_bias)
}

/// Pre-norm encoder stack on `[N, D]` tokens.
pub fn encoder_ref(tokens: &[f64], spec: &AttentionSpec, layers: &[EncoderLayer]) -> Vec<f64> {
    let d = spec.embed_dim;
    let mut x = tokens.to_vec();
    for l in layers {
        let a = self_attention_ref(&layer_norm_ref(&x, d, &l.norm1), l, spec);
        x.iter_mut().zip(&a).for_each(|(v, a)| *v += a);
        let h: Vec<f64> = linear_ref(&layer_norm_ref(&x, d, &l.norm2), d, &l.fc1_weight, &l.fc1_bias)
            .into_iter()
            .map(|v| act(v, Some(Activation::Silu)))
            .collect();
        let f = linear_ref(&h, spec.ffn_dim, &l.fc2_weight, &l.fc2_bias);
        x.iter_mut().zip(&f).for_each(|(v, f)| *v += f);
    }
    x
}

/// Token `(group, index)` for map position `(y, x)` with `w × h` patches.
pub fn token_slot(y: usize, x: usize, map_w: usize, pw: usize, ph: usize) -> (usize, usize) {
    let group = (y % ph) * pw + x % pw;
    let idx = (y / ph) * (map_w / pw) + x / pw;
    (group, idx)
}

/// Full Siam-MoViT block: local convs, joint (or split) encoding per group, fusion convs.
pub fn siam_ref(z: &Map, x: &Map, b: &SiamMoViTBlock, fusion: bool) -> (Map, Map) {
    let lz = conv_layer_ref(&conv_bn_act_ref(z, &b.local), &b.to_tokens);
    let lx = conv_layer_ref(&conv_bn_act_ref(x, &b.local), &b.to_tokens);
    let (pw, ph) = b.patch;
    let d = lz.c;
    let (ns, nt) = (lx.h * lx.w / (pw * ph), lz.h * lz.w / (pw * ph));
    let mut ez = lz.clone();
    let mut ex = lx.clone();
    for g in 0..pw * ph {
        let mut seq_s = vec![0.0; ns * d];
        let mut seq_t = vec![0.0; nt * d];
        let gather = |m: &Map, seq: &mut Vec<f64>| {
            for y in 0..m.h {
                for xx in 0..m.w {
                    let (gg, i) = token_slot(y, xx, m.w, pw, ph);
                    if gg == g {
                        for c in 0..d {
                            seq[i * d + c] = m.at(c, y, xx);
                        }
                    }
                }
            }
        };
        gather(&lx, &mut seq_s);
        gather(&lz, &mut seq_t);
        let encode = |t: &[f64]| layer_norm_ref(&encoder_ref(t, &b.attention, &b.encoder), d, &b.norm);
        let (os, ot) = if fusion {
            let mut joint = seq_s.clone();
            joint.extend_from_slice(&seq_t);
            let o = encode(&joint);
            (o[..ns * d].to_vec(), o[ns * d..].to_vec())
        } else {
            (encode(&seq_s), encode(&seq_t))
        };
        let scatter = |m: &mut Map, seq: &[f64]| {
            for y in 0..m.h {
                for xx in 0..m.w {
                    let (gg, i) = token_slot(y, xx, m.w, pw, ph);
                    if gg == g {
                        for c in 0..d {
                            let (h, w) = (m.h, m.w);
                            m.d[(c * h + y) * w + xx] = seq[i * d + c];
                        }
                    }
                }
            }
        };
        scatter(&mut ex, &os);
        scatter(&mut ez, &ot);
    }
    let tail = |input: &Map, enc: &Map| {
        let mapped = conv_bn_act_ref(enc, &b.from_tokens);
        conv_bn_act_ref(&Map::concat(input, &mapped), &b.fuse)
    };
    (tail(z, &ez), tail(x, &ex))
}

pub fn xcorr_ref(z: &Map, x: &Map) -> Map {
    let cells = z.h * z.w;
    let mut d = vec![0.0; cells * x.h * x.w];
    for ky in 0..z.h {
        for kx in 0..z.w {
            let k = ky * z.w + kx;
            for y in 0..x.h {
                for xx in 0..x.w {
                    d[(k * x.h + y) * x.w + xx] = (0..z.c).map(|c| z.at(c, ky, kx) * x.at(c, y, xx)).sum();
                }
            }
        }
    }
    Map { c: cells, h: x.h, w: x.w, d }
}

pub fn branch_ref(x: &Map, b: &Branch) -> Map {
    let mut y = x.clone();
    for blk in &b.blocks {
        y = conv_bn_act_ref(&y, blk);
    }
    let mut y = conv_layer_ref(&y, &b.out);
    y.d.iter_mut().for_each(|v| *v = act(*v, Some(Activation::Sigmoid)));
    y
}

/// Sample-counting areas of the two boxes, their intersection and their hull.
pub fn raster_areas(a: &BBox, b: &BBox, step: f64) -> (f64, f64, f64, f64) {
    let count = |x0: f64, x1: f64, y0: f64, y1: f64| {
        let nx = ((x0 / step).floor() as i64..(x1 / step).ceil() as i64)
            .filter(|&i| {
                let c = (i as f64 + 0.5) * step;
                c >= x0 && c < x1
            })
            .count() as f64;
        let ny = ((y0 / step).floor() as i64..(y1 / step).ceil() as i64)
            .filter(|&i| {
                let c = (i as f64 + 0.5) * step;
                c >= y0 && c < y1
            })
            .count() as f64;
        nx * ny * step * step
    };
    let aa = count(a.x, a.x + a.w, a.y, a.y + a.h);
    let ab = count(b.x, b.x + b.w, b.y, b.y + b.h);
    let (ix0, ix1) = (a.x.max(b.x), (a.x + a.w).min(b.x + b.w));
    let (iy0, iy1) = (a.y.max(b.y), (a.y + a.h).min(b.y + b.h));
    let inter = if ix1 > ix0 && iy1 > iy0 { count(ix0, ix1, iy0, iy1) } else { 0.0 };
    let hull = count(
        a.x.min(b.x),
        (a.x + a.w).max(b.x + b.w),
        a.y.min(b.y),
        (a.y + a.h).max(b.y + b.h),
    );
    (aa, ab, inter, hull)
}

pub fn raster_iou(a: &BBox, b: &BBox, step: f64) -> f64 {
    let (aa, ab, i, _) = raster_areas(a, b, step);
    i / (aa + ab - i)
}

/// Pixel-by-pixel 2-D count on a fine grid, for hand-sized examples.
pub fn raster_iou_2d(a: &BBox, b: &BBox, step: f64) -> (f64, f64) {
    let inside = |bx: &BBox, x: f64, y: f64| x >= bx.x && x < bx.x + bx.w && y >= bx.y && y < bx.y + bx.h;
    let (x0, y0) = (a.x.min(b.x), a.y.min(b.y));
    let (x1, y1) = ((a.x + a.w).max(b.x + b.w), (a.y + a.h).max(b.y + b.h));
    let (nx, ny) = (((x1 - x0) / step).round() as usize, ((y1 - y0) / step).round() as usize);
    let (mut inter, mut union) = (0usize, 0usize);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (x0 + (i as f64 + 0.5) * step, y0 + (j as f64 + 0.5) * step);
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    let hull = (nx * ny) as f64;
    let iou = inter as f64 / union as f64;
    (iou, iou - (hull - union as f64) / hull)
}

pub fn random_layer(rng: &mut ChaCha8Rng, spec: &AttentionSpec) -> EncoderLayer {
    let (d, f) = (spec.embed_dim, spec.ffn_dim);
    let ln = |rng: &mut ChaCha8Rng| LayerNormParams {
        gamma: Tensor::from_fn(&[d], |_| rng.gen_range(0.5..1.5)).unwrap(),
        beta: random_tensor(rng, &[d], 0.3),
    };
    EncoderLayer {
        norm1: ln(rng),
        qkv_weight: random_tensor(rng, &[3 * d, d], 0.5),
        qkv_bias: random_tensor(rng, &[3 * d], 0.1),
        out_weight: random_tensor(rng, &[d, d], 0.5),
        out_bias: random_tensor(rng, &[d], 0.1),
        norm2: ln(rng),
        fc1_weight: random_tensor(rng, &[f, d], 0.5),
        fc1_bias: random_tensor(rng, &[f], 0.1),
        fc2_weight: random_tensor(rng, &[d, f], 0.5),
        fc2_bias: random_tensor(rng, &[d], 0.1),
    }
}
