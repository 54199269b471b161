use rayon::prelude::*;

use crate::error::{config_err, Result};
use crate::tensor::Tensor;

/// Inference-mode batch norm over dim 0: `gamma·(x−mean)/sqrt(var+eps) + beta`.
pub fn batch_norm_inference(
    input: &Tensor,
    mean: &[f32],
    var: &[f32],
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> Result<Tensor> {
    let c = input.shape()[0];
    for (label, v) in [("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)] {
        if v.len() != c {
            return Err(config_err!(
                "batch norm {label} has length {}, input {:?} has {c} channels",
                v.len(),
                input.shape()
            ));
        }
    }
    if let Some(i) = var.iter().position(|&v| v < 0.0 || v.is_nan()) {
        return Err(config_err!("batch norm variance {} at channel {i} is negative", var[i]));
    }
    let mut out = input.clone();
    let plane = input.len() / c;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ch, xs)| {
            let scale = gamma[ch] / (var[ch] + eps).sqrt();
            let (m, b) = (mean[ch], beta[ch]);
            xs.iter_mut().for_each(|x| *x = (*x - m) * scale + b);
        });
    Ok(out)
}

/// Layer norm over the last dimension of a `[N, D]` tensor (biased variance).
pub fn layer_norm(input: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let d = *input.shape().last().expect("tensor rank >= 1");
    if gamma.len() != d || beta.len() != d {
        return Err(config_err!(
            "layer norm params ({}, {}) do not match feature dim {d}",
            gamma.len(),
            beta.len()
        ));
    }
    let mut out = input.clone();
    out.data_mut().par_chunks_mut(d).for_each(|row| {
        let n = d as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for ((v, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = ((*v as f64 - mean) * inv * g as f64 + b as f64) as f32;
        }
    });
    Ok(out)
}
