//! Architecture hyperparameters in one validated record.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::loss::LossWeights;

/// One Siamese MobileViT stage: transformer depth and token width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiamStage {
    pub layers: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Template patch side in pixels (square).
    pub template_size: usize,
    /// Search patch side in pixels (square).
    pub search_size: usize,
    /// Feature channels after each backbone layer, starting from the RGB input.
    pub channels: [usize; 5 + 1],
    /// Number of MV2 blocks in layer 2.
    pub layer2_repeats: usize,
    pub expand_ratio: usize,
    /// Patch width `w` and height `h` for token unfolding.
    pub patch: (usize, usize),
    /// Siamese MobileViT stages of layers 3 and 4.
    pub stages: [SiamStage; 2],
    pub num_heads: usize,
    pub ffn_multiplier: usize,
    pub stride: usize,
    /// Channel-adjust layer of the neck: `(in, out)`.
    pub neck_channels: (usize, usize),
    /// Hidden widths of each head branch before its output conv.
    pub head_channels: [usize; 4],
    pub bn_eps: f32,
    /// Joint template/search attention inside the Siamese MobileViT blocks.
    /// `false` attends within each region separately (the ablation architecture).
    pub fusion: bool,
    pub loss: LossWeights,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            template_size: 128,
            search_size: 256,
            channels: [3, 16, 32, 64, 96, 128],
            layer2_repeats: 3,
            expand_ratio: 4,
            patch: (2, 2),
            stages: [
                SiamStage { layers: 2, dim: 144 },
                SiamStage { layers: 4, dim: 192 },
            ],
            num_heads: 4,
            ffn_multiplier: 2,
            stride: 16,
            neck_channels: (64, 256),
            head_channels: [256, 128, 64, 32],
            bn_eps: 1e-5,
            fusion: true,
            loss: LossWeights::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_fusion(mut self, fusion: bool) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn template_grid(&self) -> usize {
        self.template_size / self.stride
    }

    pub fn search_grid(&self) -> usize {
        self.search_size / self.stride
    }

    pub fn backbone_out_channels(&self) -> usize {
        self.channels[5]
    }

    pub fn patch_area(&self) -> usize {
        self.patch.0 * self.patch.1
    }

    pub fn validate(&self) -> Result<()> {
        if self.search_size != 2 * self.template_size {
            return Err(config_err!(
                "search size {} must be twice the template size {}",
                self.search_size,
                self.template_size
            ));
        }
        // stem, layer2, layer3 and layer4 each halve the resolution
        if self.stride != 16 {
            return Err(config_err!("backbone stride is fixed at 16, got {}", self.stride));
        }
        if !self.template_size.is_multiple_of(self.stride) || !self.search_size.is_multiple_of(self.stride) {
            return Err(config_err!(
                "stride {} must divide input sizes {}/{}",
                self.stride,
                self.template_size,
                self.search_size
            ));
        }
        if self.channels[0] != 3 || self.channels.contains(&0) {
            return Err(config_err!("channel schedule {:?} must start at 3", self.channels));
        }
        let (pw, ph) = self.patch;
        if pw == 0 || ph == 0 {
            return Err(config_err!("patch dims must be positive"));
        }
        // feature side at layer 3 is input/8, at layer 4 input/16
        for (stage, div) in [(0, 8), (1, 16)] {
            for side in [self.template_size / div, self.search_size / div] {
                if side % pw != 0 || side % ph != 0 {
                    return Err(config_err!(
                        "stage {} feature side {side} not divisible by patch {pw}x{ph}",
                        stage + 3
                    ));
                }
            }
        }
        for s in &self.stages {
            if s.layers == 0 || s.dim == 0 || s.dim % self.num_heads.max(1) != 0 || self.num_heads == 0 {
                return Err(config_err!(
                    "stage {s:?} needs layers >= 1 and dim divisible by {} heads",
                    self.num_heads
                ));
            }
        }
        if self.layer2_repeats == 0 || self.expand_ratio == 0 || self.ffn_multiplier == 0 {
            return Err(config_err!("repeat counts and ratios must be positive"));
        }
        let cells = self.template_grid() * self.template_grid();
        if self.neck_channels.0 != cells {
            return Err(config_err!(
                "neck input channels {} must equal template grid cells {cells}",
                self.neck_channels.0
            ));
        }
        if self.head_channels.contains(&0) || self.neck_channels.1 == 0 {
            return Err(config_err!("head/neck widths must be positive"));
        }
        if !(self.loss.l1 >= 0.0 && self.loss.giou >= 0.0) {
            return Err(config_err!("loss weights must be non-negative"));
        }
        Ok(())
    }
}
