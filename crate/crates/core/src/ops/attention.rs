//! Pre-norm transformer encoder: `x + MHSA(LN(x))`, then `x + FFN(LN(x))`
//! with a SiLU feed-forward. No positional embeddings are ever added.

use super::activation::Activation;
use super::gemm::{gemm, gemm_bt};
use super::linear::linear;
use super::norm::layer_norm;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionSpec {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub layers: usize,
}

impl AttentionSpec {
    pub fn new(embed_dim: usize, num_heads: usize, ffn_dim: usize, layers: usize) -> Result<Self> {
        let spec = Self {
            embed_dim,
            num_heads,
            ffn_dim,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return Err(config_err!("attention spec has a zero dimension: {self:?}"));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(config_err!(
                "embed dim {} not divisible by {} heads",
                self.embed_dim,
                self.num_heads
            ));
        }
        if self.layers == 0 {
            return Err(config_err!("encoder needs at least one layer"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: Tensor::full(&[d], 1.0).expect("d >= 1"),
            beta: Tensor::zeros(&[d]).expect("d >= 1"),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, self.gamma.data(), self.beta.data(), LAYER_NORM_EPS)
    }
}

/// One encoder layer. Linear weights are `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNormParams,
    /// Fused `[3D, D]` projection: rows `0..D` are Q, `D..2D` K, `2D..3D` V.
    pub qkv_weight: Tensor,
    pub qkv_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
    pub norm2: LayerNormParams,
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
}

impl EncoderLayer {
    /// Layer whose residual branches are exactly zero, i.e. the identity map.
    pub fn passthrough(spec: &AttentionSpec) -> Self {
        let (d, f) = (spec.embed_dim, spec.ffn_dim);
        let z = |s: &[usize]| Tensor::zeros(s).expect("nonzero dims");
        Self {
            norm1: LayerNormParams::identity(d),
            qkv_weight: z(&[3 * d, d]),
            qkv_bias: z(&[3 * d]),
            out_weight: z(&[d, d]),
            out_bias: z(&[d]),
            norm2: LayerNormParams::identity(d),
            fc1_weight: z(&[f, d]),
            fc1_bias: z(&[f]),
            fc2_weight: z(&[d, f]),
            fc2_bias: z(&[d]),
        }
    }

    fn check(&self, spec: &AttentionSpec) -> Result<()> {
        let (d, f) = (spec.embed_dim, spec.ffn_dim);
        let expect: [(&str, &Tensor, Vec<usize>); 10] = [
            ("norm1.gamma", &self.norm1.gamma, vec![d]),
            ("norm1.beta", &self.norm1.beta, vec![d]),
            ("qkv_weight", &self.qkv_weight, vec![3 * d, d]),
            ("qkv_bias", &self.qkv_bias, vec![3 * d]),
            ("out_weight", &self.out_weight, vec![d, d]),
            ("out_bias", &self.out_bias, vec![d]),
            ("fc1_weight", &self.fc1_weight, vec![f, d]),
            ("fc1_bias", &self.fc1_bias, vec![f]),
            ("fc2_weight", &self.fc2_weight, vec![d, f]),
            ("fc2_bias", &self.fc2_bias, vec![d]),
        ];
        for (name, t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(config_err!(
                    "encoder {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                ));
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn split_head(qkv: &[f32], n: usize, d: usize, part: usize, head: usize, dh: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * dh);
    for i in 0..n {
        let base = i * 3 * d + part * d + head * dh;
        out.extend_from_slice(&qkv[base..base + dh]);
    }
    out
}

/// Row-stochastic attention matrices `[N, N]`, one per head, for already-normalized tokens.
pub fn attention_probs(normed: &Tensor, layer: &EncoderLayer, spec: &AttentionSpec) -> Result<Vec<Tensor>> {
    let qkv = linear(normed, &layer.qkv_weight, Some(&layer.qkv_bias))?;
    let n = normed.shape()[0];
    let (d, dh) = (spec.embed_dim, spec.head_dim());
    (0..spec.num_heads)
        .map(|h| {
            let q = split_head(qkv.data(), n, d, 0, h, dh);
            let k = split_head(qkv.data(), n, d, 1, h, dh);
            Tensor::new(&[n, n], probs(&q, &k, n, dh))
        })
        .collect()
}

fn probs(q: &[f32], k: &[f32], n: usize, dh: usize) -> Vec<f32> {
    let mut scores = vec![0.0; n * n];
    gemm_bt(q, k, &mut scores, n, dh, n);
    let scale = 1.0 / (dh as f32).sqrt();
    for row in scores.chunks_mut(n) {
        row.iter_mut().for_each(|s| *s *= scale);
        softmax_in_place(row);
    }
    scores
}

/// Multi-head self-attention sublayer (no residual) on normalized tokens.
pub fn self_attention(normed: &Tensor, layer: &EncoderLayer, spec: &AttentionSpec) -> Result<Tensor> {
    let n = normed.shape()[0];
    let (d, dh) = (spec.embed_dim, spec.head_dim());
    let qkv = linear(normed, &layer.qkv_weight, Some(&layer.qkv_bias))?;
    let mut merged = vec![0.0f32; n * d];
    let mut head_out = vec![0.0f32; n * dh];
    for h in 0..spec.num_heads {
        let q = split_head(qkv.data(), n, d, 0, h, dh);
        let k = split_head(qkv.data(), n, d, 1, h, dh);
        let v = split_head(qkv.data(), n, d, 2, h, dh);
        let p = probs(&q, &k, n, dh);
        gemm(&p, &v, &mut head_out, n, n, dh);
        for i in 0..n {
            merged[i * d + h * dh..i * d + (h + 1) * dh]
                .copy_from_slice(&head_out[i * dh..(i + 1) * dh]);
        }
    }
    linear(&Tensor::new(&[n, d], merged)?, &layer.out_weight, Some(&layer.out_bias))
}

fn feed_forward(normed: &Tensor, layer: &EncoderLayer) -> Result<Tensor> {
    let mut hidden = linear(normed, &layer.fc1_weight, Some(&layer.fc1_bias))?;
    Activation::Silu.apply_in_place(hidden.data_mut());
    linear(&hidden, &layer.fc2_weight, Some(&layer.fc2_bias))
}

pub fn encoder_layer(tokens: &Tensor, layer: &EncoderLayer, spec: &AttentionSpec) -> Result<Tensor> {
    let attn = self_attention(&layer.norm1.apply(tokens)?, layer, spec)?;
    let x = tokens.add(&attn)?;
    let ffn = feed_forward(&layer.norm2.apply(&x)?, layer)?;
    x.add(&ffn)
}

/// L-layer transformer encoder over `[N, D]` tokens.
pub fn multi_head_attention(
    tokens: &Tensor,
    spec: &AttentionSpec,
    layers: &[EncoderLayer],
) -> Result<Tensor> {
    spec.validate()?;
    match tokens.shape() {
        &[_, d] if d == spec.embed_dim => {}
        s => {
            return Err(config_err!(
                "attention expects [N, {}] tokens, got {s:?}",
                spec.embed_dim
            ))
        }
    }
    if layers.len() != spec.layers {
        return Err(config_err!(
            "attention spec wants {} layers, got weights for {}",
            spec.layers,
            layers.len()
        ));
    }
    let mut x = tokens.clone();
    for layer in layers {
        layer.check(spec)?;
        x = encoder_layer(&x, layer, spec)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        assert!(AttentionSpec::new(10, 4, 20, 1).is_err());
        assert!(AttentionSpec::new(8, 4, 16, 0).is_err());
    }

    #[test]
    fn passthrough_layers_are_identity() {
        let spec = AttentionSpec::new(8, 2, 16, 3).unwrap();
        let layers = vec![EncoderLayer::passthrough(&spec); 3];
        let x = Tensor::from_fn(&[5, 8], |i| (i as f32 * 0.37).cos()).unwrap();
        assert_eq!(multi_head_attention(&x, &spec, &layers).unwrap(), x);
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let mut row = [1000.0, 1000.0, -1000.0];
        softmax_in_place(&mut row);
        assert_eq!(row, [0.5, 0.5, 0.0]);
    }
}
