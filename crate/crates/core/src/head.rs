//! Fully convolutional prediction head and box decoding.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{config_err, Result};
use crate::layers::{Conv, ConvBnAct};
use crate::ops::{Activation, ConvSpec};
use crate::tensor::Tensor;
use crate::weights::Scope;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// `[1, G, G]` target-presence probabilities.
    pub score: Tensor,
    /// `[2, G, G]` box width/height normalized by the search patch side.
    pub size: Tensor,
    /// `[2, G, G]` sub-cell x/y offsets.
    pub offset: Tensor,
}

/// Box relative to the search patch, all fields in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// `(x1, y1, x2, y2)` corners.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

/// Four Conv-BN-ReLU blocks and an output conv, sigmoid applied afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub blocks: Vec<ConvBnAct>,
    pub out: Conv,
}

impl Branch {
    fn load(s: &mut Scope<'_>, cfg: &ModelConfig, out_channels: usize) -> Result<Self> {
        let mut cin = cfg.neck_channels.1;
        let mut blocks = Vec::with_capacity(cfg.head_channels.len());
        for (i, &c) in cfg.head_channels.iter().enumerate() {
            blocks.push(ConvBnAct::load(&mut s.sub(i), ConvSpec::square(cin, c, 3, 1), true, Some(Activation::Relu), cfg.bn_eps)?);
            cin = c;
        }
        let out = Conv::load(&mut s.sub(blocks.len()), ConvSpec::square(cin, out_channels, 3, 1), true)?;
        Ok(Self { blocks, out })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        let mut y = self.out.forward(&y)?;
        Activation::Sigmoid.apply_in_place(y.data_mut());
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub score: Branch,
    pub offset: Branch,
    pub size: Branch,
}

impl Head {
    pub fn load(s: &mut Scope<'_>, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            score: Branch::load(&mut s.sub("score"), cfg, 1)?,
            offset: Branch::load(&mut s.sub("offset"), cfg, 2)?,
            size: Branch::load(&mut s.sub("size"), cfg, 2)?,
        })
    }

    pub fn forward(&self, adjusted: &Tensor) -> Result<HeadOutput> {
        Ok(HeadOutput {
            score: self.score.forward(adjusted)?,
            offset: self.offset.forward(adjusted)?,
            size: self.size.forward(adjusted)?,
        })
    }
}

/// Index of the largest value; ties resolve to the smallest row-major index, NaNs are skipped.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Elementwise `score ⊙ window` over a `[1, G, G]` score map.
pub fn apply_window(score: &Tensor, window: &Tensor) -> Result<Tensor> {
    let (_, gh, gw) = score.chw()?;
    if window.shape() != [gh, gw] {
        return Err(config_err!(
            "window {:?} does not match score grid {gh}x{gw}",
            window.shape()
        ));
    }
    let data = score
        .data()
        .iter()
        .zip(window.data())
        .map(|(s, w)| s * w)
        .collect();
    Tensor::new(score.shape(), data)
}

/// Arg-max location of the (optionally windowed) score map and its box.
pub fn decode_box(out: &HeadOutput, window: Option<&Tensor>) -> Result<NormBox> {
    let (_, gh, gw) = out.score.chw()?;
    for (name, t) in [("size", &out.size), ("offset", &out.offset)] {
        if t.shape() != [2, gh, gw] {
            return Err(config_err!("{name} map {:?} does not match score grid {gh}x{gw}", t.shape()));
        }
    }
    let idx = match window {
        Some(w) => argmax(apply_window(&out.score, w)?.data()),
        None => argmax(out.score.data()),
    };
    let (iy, ix) = (idx / gw, idx % gw);
    Ok(NormBox {
        cx: (ix as f64 + out.offset.at3(0, iy, ix) as f64) / gw as f64,
        cy: (iy as f64 + out.offset.at3(1, iy, ix) as f64) / gh as f64,
        w: out.size.at3(0, iy, ix) as f64,
        h: out.size.at3(1, iy, ix) as f64,
    })
}
