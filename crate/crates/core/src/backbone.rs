//! Backbone: MobileNetV2 inverted residual blocks plus the Siamese MobileViT
//! block that tokenizes template and search features jointly.
//!
//! Token layout: for a `w×h` patch grid every token group `p = dy·w + dx`
//! collects the pixel at in-patch offset `(dx, dy)` of every patch, patches
//! enumerated row-major. Search tokens come first along `N`, template tokens
//! after them.

use rayon::prelude::*;

use crate::config::ModelConfig;
use crate::error::{config_err, Result};
use crate::layers::{load_encoder_layer, load_layer_norm, Conv, ConvBnAct};
use crate::ops::{multi_head_attention, Activation, AttentionSpec, ConvSpec, EncoderLayer, LayerNormParams};
use crate::tensor::Tensor;
use crate::weights::Scope;

/// `P × N × D` tokens with the search/template split along `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBlock {
    pub tokens: Tensor,
    pub n_search: usize,
    pub n_template: usize,
}

impl TokenBlock {
    pub fn groups(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.tokens.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `[N, D]` tokens of group `p`.
    pub fn group(&self, p: usize) -> &[f32] {
        let stride = self.len() * self.dim();
        &self.tokens.data()[p * stride..(p + 1) * stride]
    }
}

fn check_patchable(name: &str, feat: &Tensor, w: usize, h: usize) -> Result<(usize, usize, usize)> {
    let (d, fh, fw) = feat.chw()?;
    if w == 0 || h == 0 || fh % h != 0 || fw % w != 0 {
        return Err(config_err!(
            "{name} map {fh}x{fw} not divisible into {w}x{h} patches"
        ));
    }
    Ok((d, fh, fw))
}

/// Writes `feat` into `dst` laid out as `[P][n_total][D]`, starting at token `offset`.
fn scatter_tokens(feat: &Tensor, w: usize, h: usize, dst: &mut [f32], n_total: usize, offset: usize) {
    let (d, fh, fw) = feat.chw().expect("checked");
    let (gw, gh) = (fw / w, fh / h);
    let src = feat.data();
    for dy in 0..h {
        for dx in 0..w {
            let p = dy * w + dx;
            for py in 0..gh {
                for px in 0..gw {
                    let n = offset + py * gw + px;
                    let (y, x) = (py * h + dy, px * w + dx);
                    let base = (p * n_total + n) * d;
                    for c in 0..d {
                        dst[base + c] = src[c * fh * fw + y * fw + x];
                    }
                }
            }
        }
    }
}

fn gather_tokens(src: &[f32], d: usize, (fh, fw): (usize, usize), w: usize, h: usize, n_total: usize, offset: usize) -> Tensor {
    let (gw, gh) = (fw / w, fh / h);
    let mut out = vec![0.0f32; d * fh * fw];
    for dy in 0..h {
        for dx in 0..w {
            let p = dy * w + dx;
            for py in 0..gh {
                for px in 0..gw {
                    let n = offset + py * gw + px;
                    let (y, x) = (py * h + dy, px * w + dx);
                    let base = (p * n_total + n) * d;
                    for c in 0..d {
                        out[c * fh * fw + y * fw + x] = src[base + c];
                    }
                }
            }
        }
    }
    Tensor::new(&[d, fh, fw], out).expect("dims >= 1")
}

/// Tokenizes a single `[D, H, W]` map into `[P, H·W/P, D]`.
pub fn unfold_map(feat: &Tensor, w: usize, h: usize) -> Result<Tensor> {
    let (d, fh, fw) = check_patchable("feature", feat, w, h)?;
    let n = fh * fw / (w * h);
    let mut data = vec![0.0; d * fh * fw];
    scatter_tokens(feat, w, h, &mut data, n, 0);
    Tensor::new(&[w * h, n, d], data)
}

/// Joint tokenization: search tokens `[0, n_search)`, template tokens after.
pub fn unfold_to_tokens(z_feat: &Tensor, x_feat: &Tensor, w: usize, h: usize) -> Result<TokenBlock> {
    let (dz, zh, zw) = check_patchable("template", z_feat, w, h)?;
    let (dx, xh, xw) = check_patchable("search", x_feat, w, h)?;
    if dz != dx {
        return Err(config_err!("template has {dz} channels, search has {dx}"));
    }
    let p = w * h;
    let (n_template, n_search) = (zh * zw / p, xh * xw / p);
    let n = n_template + n_search;
    let mut data = vec![0.0; p * n * dz];
    scatter_tokens(x_feat, w, h, &mut data, n, 0);
    scatter_tokens(z_feat, w, h, &mut data, n, n_search);
    Ok(TokenBlock {
        tokens: Tensor::new(&[p, n, dz], data)?,
        n_search,
        n_template,
    })
}

/// Inverse of [`unfold_to_tokens`]; `z_hw`/`x_hw` are the target map sizes.
pub fn fold_from_tokens(
    block: &TokenBlock,
    z_hw: (usize, usize),
    x_hw: (usize, usize),
    w: usize,
    h: usize,
) -> Result<(Tensor, Tensor)> {
    if block.tokens.rank() != 3 {
        return Err(config_err!("tokens must be [P, N, D], got {:?}", block.tokens.shape()));
    }
    let p = w * h;
    let ok_grid = |(fh, fw): (usize, usize)| fh > 0 && fw > 0 && fh % h == 0 && fw % w == 0;
    if !ok_grid(z_hw) || !ok_grid(x_hw) {
        return Err(config_err!("fold targets {z_hw:?}/{x_hw:?} not divisible by patch {w}x{h}"));
    }
    let (n_t, n_s) = (z_hw.0 * z_hw.1 / p, x_hw.0 * x_hw.1 / p);
    if block.groups() != p
        || block.n_template != n_t
        || block.n_search != n_s
        || block.len() != n_t + n_s
    {
        return Err(config_err!(
            "token block {:?} (search {}, template {}) inconsistent with maps {z_hw:?}/{x_hw:?} and P={p}",
            block.tokens.shape(),
            block.n_search,
            block.n_template
        ));
    }
    let d = block.dim();
    let n = block.len();
    let x = gather_tokens(block.tokens.data(), d, x_hw, w, h, n, 0);
    let z = gather_tokens(block.tokens.data(), d, z_hw, w, h, n, n_s);
    Ok((z, x))
}

/// MobileNetV2 inverted residual: 1×1 expand → 3×3 depthwise → 1×1 project.
#[derive(Debug, Clone, PartialEq)]
pub struct Mv2Block {
    pub expand: ConvBnAct,
    pub depthwise: ConvBnAct,
    pub project: ConvBnAct,
    pub residual: bool,
}

impl Mv2Block {
    pub fn load(
        s: &mut Scope<'_>,
        cin: usize,
        cout: usize,
        stride: usize,
        expand_ratio: usize,
        eps: f32,
    ) -> Result<Self> {
        if !(stride == 1 || stride == 2) {
            return Err(config_err!("MV2 stride must be 1 or 2, got {stride}"));
        }
        let hidden = cin * expand_ratio;
        Ok(Self {
            expand: ConvBnAct::load(&mut s.sub("expand"), ConvSpec::square(cin, hidden, 1, 1), false, Some(Activation::Silu), eps)?,
            depthwise: ConvBnAct::load(&mut s.sub("dw"), ConvSpec::depthwise(hidden, 3, stride), false, Some(Activation::Silu), eps)?,
            project: ConvBnAct::load(&mut s.sub("project"), ConvSpec::square(hidden, cout, 1, 1), false, None, eps)?,
            residual: stride == 1 && cin == cout,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.expand.forward(x)?;
        let y = self.depthwise.forward(&y)?;
        let y = self.project.forward(&y)?;
        if self.residual {
            y.add(x)
        } else {
            Ok(y)
        }
    }
}

/// Free-function form of [`Mv2Block::forward`].
pub fn mv2_block(input: &Tensor, block: &Mv2Block) -> Result<Tensor> {
    block.forward(input)
}

/// Siamese MobileViT block shared by the template and search streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SiamMoViTBlock {
    pub local: ConvBnAct,
    pub to_tokens: Conv,
    pub attention: AttentionSpec,
    pub encoder: Vec<EncoderLayer>,
    pub norm: LayerNormParams,
    pub from_tokens: ConvBnAct,
    pub fuse: ConvBnAct,
    pub patch: (usize, usize),
}

impl SiamMoViTBlock {
    pub fn load(
        s: &mut Scope<'_>,
        channels: usize,
        attention: AttentionSpec,
        patch: (usize, usize),
        eps: f32,
    ) -> Result<Self> {
        attention.validate()?;
        let (c, d) = (channels, attention.embed_dim);
        let local = ConvBnAct::load(&mut s.sub("local"), ConvSpec::square(c, c, 3, 1), false, Some(Activation::Silu), eps)?;
        let to_tokens = Conv::load(&mut s.sub("to_tokens"), ConvSpec::square(c, d, 1, 1), false)?;
        let encoder = (0..attention.layers)
            .map(|i| load_encoder_layer(&mut s.sub(format!("encoder.{i}")), d, attention.ffn_dim))
            .collect::<Result<Vec<_>>>()?;
        let norm = load_layer_norm(&mut s.sub("norm"), d)?;
        let from_tokens = ConvBnAct::load(&mut s.sub("from_tokens"), ConvSpec::square(d, c, 1, 1), false, Some(Activation::Silu), eps)?;
        let fuse = ConvBnAct::load(&mut s.sub("fuse"), ConvSpec::square(2 * c, c, 3, 1), false, Some(Activation::Silu), eps)?;
        Ok(Self {
            local,
            to_tokens,
            attention,
            encoder,
            norm,
            from_tokens,
            fuse,
            patch,
        })
    }

    /// Per-region convolutional front end (3×3 then 1×1 to `D` channels).
    pub fn local_features(&self, feat: &Tensor) -> Result<Tensor> {
        self.to_tokens.forward(&self.local.forward(feat)?)
    }

    /// Transformer over each token group; with `fusion` off the search and
    /// template tokens of a group are encoded as independent sequences.
    pub fn encode_tokens(&self, block: &TokenBlock, fusion: bool) -> Result<TokenBlock> {
        let (n, d) = (block.len(), block.dim());
        let encode = |tokens: &[f32], len: usize| -> Result<Vec<f32>> {
            let t = Tensor::new(&[len, d], tokens.to_vec())?;
            let y = multi_head_attention(&t, &self.attention, &self.encoder)?;
            Ok(self.norm.apply(&y)?.into_data())
        };
        let groups: Vec<Vec<f32>> = (0..block.groups())
            .into_par_iter()
            .map(|p| {
                let g = block.group(p);
                if fusion {
                    encode(g, n)
                } else {
                    let split = block.n_search * d;
                    let mut out = encode(&g[..split], block.n_search)?;
                    out.extend(encode(&g[split..], block.n_template)?);
                    Ok(out)
                }
            })
            .collect::<Result<_>>()?;
        Ok(TokenBlock {
            tokens: Tensor::new(block.tokens.shape(), groups.concat())?,
            n_search: block.n_search,
            n_template: block.n_template,
        })
    }

    pub fn forward(&self, z: &Tensor, x: &Tensor, fusion: bool) -> Result<(Tensor, Tensor)> {
        let (cz, zh, zw) = z.chw()?;
        let (cx, xh, xw) = x.chw()?;
        let c = self.local.conv.spec.in_channels;
        if cz != c || cx != c {
            return Err(config_err!(
                "Siam-MoViT block expects {c} channels, got template {cz} / search {cx}"
            ));
        }
        let (pw, ph) = self.patch;
        let tokens = unfold_to_tokens(&self.local_features(z)?, &self.local_features(x)?, pw, ph)?;
        let encoded = self.encode_tokens(&tokens, fusion)?;
        let (zt, xt) = fold_from_tokens(&encoded, (zh, zw), (xh, xw), pw, ph)?;
        let head = |input: &Tensor, t: &Tensor| -> Result<Tensor> {
            let mapped = self.from_tokens.forward(t)?;
            self.fuse.forward(&Tensor::concat_channels(input, &mapped)?)
        };
        let (z_out, x_out) = (head(z, &zt)?, head(x, &xt)?);
        debug_assert_eq!(z_out.shape(), z.shape());
        debug_assert_eq!(x_out.shape(), x.shape());
        Ok((z_out, x_out))
    }
}

/// The four-stage backbone (stem counted inside layer 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub stem: ConvBnAct,
    pub layer1: Mv2Block,
    pub layer2: Vec<Mv2Block>,
    pub layer3: (Mv2Block, SiamMoViTBlock),
    pub layer4: (Mv2Block, SiamMoViTBlock),
    pub template_size: usize,
    pub search_size: usize,
}

impl Backbone {
    pub fn load(s: &mut Scope<'_>, cfg: &ModelConfig) -> Result<Self> {
        let ch = cfg.channels;
        let (e, eps) = (cfg.expand_ratio, cfg.bn_eps);
        let mut l1 = s.sub("layer1");
        let stem = ConvBnAct::load(&mut l1.sub("0"), ConvSpec::square(ch[0], ch[1], 3, 2), false, Some(Activation::Silu), eps)?;
        let layer1 = Mv2Block::load(&mut l1.sub("1"), ch[1], ch[2], 1, e, eps)?;
        let mut l2 = s.sub("layer2");
        let layer2 = (0..cfg.layer2_repeats)
            .map(|i| {
                let (cin, stride) = if i == 0 { (ch[2], 2) } else { (ch[3], 1) };
                Mv2Block::load(&mut l2.sub(i), cin, ch[3], stride, e, eps)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut stage = |name: &str, k: usize| -> Result<(Mv2Block, SiamMoViTBlock)> {
            let st = cfg.stages[k];
            let spec = AttentionSpec::new(st.dim, cfg.num_heads, cfg.ffn_multiplier * st.dim, st.layers)?;
            let mut l = s.sub(name);
            let mv2 = Mv2Block::load(&mut l.sub("0"), ch[3 + k], ch[4 + k], 2, e, eps)?;
            let block = SiamMoViTBlock::load(&mut l.sub("1"), ch[4 + k], spec, cfg.patch, eps)?;
            Ok((mv2, block))
        };
        let layer3 = stage("layer3", 0)?;
        let layer4 = stage("layer4", 1)?;
        Ok(Self {
            stem,
            layer1,
            layer2,
            layer3,
            layer4,
            template_size: cfg.template_size,
            search_size: cfg.search_size,
        })
    }

    /// Layers 1–2, applied to one stream.
    pub fn early_layers(&self, input: &Tensor) -> Result<Tensor> {
        let mut y = self.layer1.forward(&self.stem.forward(input)?)?;
        for b in &self.layer2 {
            y = b.forward(&y)?;
        }
        Ok(y)
    }

    pub fn forward(&self, z_in: &Tensor, x_in: &Tensor, fusion: bool) -> Result<(Tensor, Tensor)> {
        for (name, t, side) in [("template", z_in, self.template_size), ("search", x_in, self.search_size)] {
            if t.shape() != [3, side, side] {
                return Err(config_err!(
                    "{name} input must be [3, {side}, {side}], got {:?}",
                    t.shape()
                ));
            }
        }
        let mut z = self.early_layers(z_in)?;
        let mut x = self.early_layers(x_in)?;
        for (mv2, block) in [&self.layer3, &self.layer4] {
            let (zd, xd) = (mv2.forward(&z)?, mv2.forward(&x)?);
            (z, x) = block.forward(&zd, &xd, fusion)?;
        }
        Ok((z, x))
    }
}
