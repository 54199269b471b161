//! Parameter-free pointwise cross-correlation followed by a 1×1 channel adjust.

use crate::config::ModelConfig;
use crate::error::{config_err, Result};
use crate::layers::{BatchNorm, Conv};
use crate::ops::gemm::gemm;
use crate::ops::ConvSpec;
use crate::tensor::Tensor;
use crate::weights::Scope;

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    /// One response channel per template cell, `[Hz·Wz, Hx, Wx]`.
    pub f_zx: Tensor,
    pub adjusted: Tensor,
}

/// Channel `k = ky·Wz + kx` at `(y, x)` is `Σ_c z[c, ky, kx] · x[c, y, x]`.
pub fn pointwise_xcorr(z_feat: &Tensor, x_feat: &Tensor) -> Result<Tensor> {
    let (cz, hz, wz) = z_feat.chw()?;
    let (cx, hx, wx) = x_feat.chw()?;
    if cz != cx {
        return Err(config_err!(
            "xcorr channel mismatch: template {:?}, search {:?}",
            z_feat.shape(),
            x_feat.shape()
        ));
    }
    let (cells, plane) = (hz * wz, hx * wx);
    let zd = z_feat.data();
    let mut zt = vec![0.0f32; cells * cz];
    for c in 0..cz {
        for k in 0..cells {
            zt[k * cz + c] = zd[c * cells + k];
        }
    }
    let mut out = vec![0.0f32; cells * plane];
    gemm(&zt, x_feat.data(), &mut out, cells, cz, plane);
    Tensor::new(&[cells, hx, wx], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neck {
    /// Shared by both feature maps.
    pub bn: BatchNorm,
    pub adjust: Conv,
}

impl Neck {
    pub fn load(s: &mut Scope<'_>, cfg: &ModelConfig) -> Result<Self> {
        let (cin, cout) = cfg.neck_channels;
        Ok(Self {
            bn: BatchNorm::load(&mut s.sub("bn"), cfg.backbone_out_channels(), cfg.bn_eps)?,
            adjust: Conv::load(&mut s.sub("adjust"), ConvSpec::square(cin, cout, 1, 1), true)?,
        })
    }

    pub fn forward(&self, z_feat: &Tensor, x_feat: &Tensor) -> Result<FusedFeatures> {
        let f_zx = pointwise_xcorr(&self.bn.forward(z_feat)?, &self.bn.forward(x_feat)?)?;
        let adjusted = self.adjust.forward(&f_zx)?;
        Ok(FusedFeatures { f_zx, adjusted })
    }
}
