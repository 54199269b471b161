use std::time::{Duration, Instant};

use crate::backbone::Backbone;
use crate::config::ModelConfig;
use crate::error::Result;
use crate::head::{Head, HeadOutput};
use crate::neck::{FusedFeatures, Neck};
use crate::tensor::Tensor;
use crate::weights::{random_init, ParamSource, Scope, StoreSource, WeightStore};

/// Backbone, neck and head of the tracker network.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtModel {
    pub cfg: ModelConfig,
    pub backbone: Backbone,
    pub neck: Neck,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub z_feat: Tensor,
    pub x_feat: Tensor,
    pub fused: FusedFeatures,
    pub head: HeadOutput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub backbone: Duration,
    pub neck: Duration,
    pub head: Duration,
}

impl MvtModel {
    /// Builds the network, pulling every parameter from `source` in canonical order.
    pub fn assemble(cfg: &ModelConfig, source: &mut dyn ParamSource) -> Result<Self> {
        cfg.validate()?;
        let mut root = Scope::root(source);
        Ok(Self {
            cfg: cfg.clone(),
            backbone: Backbone::load(&mut root.sub("backbone"), cfg)?,
            neck: Neck::load(&mut root.sub("neck"), cfg)?,
            head: Head::load(&mut root.sub("head"), cfg)?,
        })
    }

    /// Builds from a store that must match the manifest of `cfg` exactly.
    pub fn from_store(cfg: &ModelConfig, store: &WeightStore) -> Result<Self> {
        store.conform(&crate::weights::build_manifest(cfg)?)?;
        Self::assemble(cfg, &mut StoreSource { store })
    }

    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Self::from_store(cfg, &random_init(cfg, seed)?)
    }

    pub fn fusion(&self) -> bool {
        self.cfg.fusion
    }

    pub fn set_fusion(&mut self, on: bool) {
        self.cfg.fusion = on;
    }

    pub fn forward(&self, z_in: &Tensor, x_in: &Tensor) -> Result<ForwardOutput> {
        Ok(self.forward_timed(z_in, x_in)?.0)
    }

    pub fn forward_timed(&self, z_in: &Tensor, x_in: &Tensor) -> Result<(ForwardOutput, StageTimes)> {
        let t0 = Instant::now();
        let (z_feat, x_feat) = self.backbone.forward(z_in, x_in, self.cfg.fusion)?;
        let t1 = Instant::now();
        let fused = self.neck.forward(&z_feat, &x_feat)?;
        let t2 = Instant::now();
        let head = self.head.forward(&fused.adjusted)?;
        let t3 = Instant::now();
        Ok((
            ForwardOutput {
                z_feat,
                x_feat,
                fused,
                head,
            },
            StageTimes {
                backbone: t1 - t0,
                neck: t2 - t1,
                head: t3 - t2,
            },
        ))
    }
}
