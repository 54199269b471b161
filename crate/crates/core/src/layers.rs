//! Parameterized building blocks assembled from a [`Scope`].

use crate::error::Result;
use crate::ops::{
    batch_norm_inference, conv2d, Activation, ConvSpec, EncoderLayer, LayerNormParams,
};
use crate::tensor::Tensor;
use crate::weights::{ParamKind, Scope};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub mean: Tensor,
    pub var: Tensor,
    pub eps: f32,
}

impl BatchNorm {
    pub fn load(s: &mut Scope<'_>, channels: usize, eps: f32) -> Result<Self> {
        Ok(Self {
            gamma: s.get("weight", &[channels], ParamKind::NormScale)?,
            beta: s.get("bias", &[channels], ParamKind::NormShift)?,
            mean: s.get("running_mean", &[channels], ParamKind::RunningMean)?,
            var: s.get("running_var", &[channels], ParamKind::RunningVar)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        batch_norm_inference(
            x,
            self.mean.data(),
            self.var.data(),
            self.gamma.data(),
            self.beta.data(),
            self.eps,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Conv {
    pub fn load(s: &mut Scope<'_>, spec: ConvSpec, bias: bool) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.weight_shape()[1..].iter().product();
        let weight = s.get("weight", &spec.weight_shape(), ParamKind::Weight { fan_in })?;
        let bias = if bias {
            Some(s.get("bias", &[spec.out_channels], ParamKind::Bias { fan_in })?)
        } else {
            None
        };
        Ok(Self { spec, weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.spec, &self.weight, self.bias.as_ref())
    }
}

/// Conv → BN → optional activation; names `conv.*` and `bn.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBnAct {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub act: Option<Activation>,
}

impl ConvBnAct {
    pub fn load(
        s: &mut Scope<'_>,
        spec: ConvSpec,
        conv_bias: bool,
        act: Option<Activation>,
        eps: f32,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv::load(&mut s.sub("conv"), spec, conv_bias)?,
            bn: BatchNorm::load(&mut s.sub("bn"), spec.out_channels, eps)?,
            act,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.bn.forward(&self.conv.forward(x)?)?;
        if let Some(a) = self.act {
            a.apply_in_place(y.data_mut());
        }
        Ok(y)
    }
}

pub fn load_layer_norm(s: &mut Scope<'_>, d: usize) -> Result<LayerNormParams> {
    Ok(LayerNormParams {
        gamma: s.get("weight", &[d], ParamKind::NormScale)?,
        beta: s.get("bias", &[d], ParamKind::NormShift)?,
    })
}

fn load_linear(s: &mut Scope<'_>, din: usize, dout: usize) -> Result<(Tensor, Tensor)> {
    Ok((
        s.get("weight", &[dout, din], ParamKind::Weight { fan_in: din })?,
        s.get("bias", &[dout], ParamKind::Bias { fan_in: din })?,
    ))
}

pub fn load_encoder_layer(s: &mut Scope<'_>, d: usize, ffn: usize) -> Result<EncoderLayer> {
    let norm1 = load_layer_norm(&mut s.sub("norm1"), d)?;
    let (qkv_weight, qkv_bias) = load_linear(&mut s.sub("attn.qkv"), d, 3 * d)?;
    let (out_weight, out_bias) = load_linear(&mut s.sub("attn.out"), d, d)?;
    let norm2 = load_layer_norm(&mut s.sub("norm2"), d)?;
    let (fc1_weight, fc1_bias) = load_linear(&mut s.sub("ffn.fc1"), d, ffn)?;
    let (fc2_weight, fc2_bias) = load_linear(&mut s.sub("ffn.fc2"), ffn, d)?;
    Ok(EncoderLayer {
        norm1,
        qkv_weight,
        qkv_bias,
        out_weight,
        out_bias,
        norm2,
        fc1_weight,
        fc1_bias,
        fc2_weight,
        fc2_bias,
    })
}
