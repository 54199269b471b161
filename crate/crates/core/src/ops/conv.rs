use rayon::prelude::*;

use super::gemm::gemm;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution. `groups == in_channels` gives a depthwise conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Square `k×k` conv with "same"-style padding `k/2`.
    pub fn square(in_channels: usize, out_channels: usize, k: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride,
            padding: k / 2,
            groups: 1,
        }
    }

    pub fn depthwise(channels: usize, k: usize, stride: usize) -> Self {
        Self {
            groups: channels,
            ..Self::square(channels, channels, k, stride)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            groups,
            ..
        } = *self;
        if in_channels == 0 || out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(config_err!("conv spec has a zero dimension: {self:?}"));
        }
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(config_err!(
                "conv channels {in_channels}->{out_channels} not divisible by groups {groups}"
            ));
        }
        if stride == 0 {
            return Err(config_err!("conv stride must be >= 1"));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < kh || pw < kw {
            return Err(config_err!(
                "input {h}x{w} (padded {ph}x{pw}) smaller than kernel {kh}x{kw}"
            ));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.groups == self.out_channels
    }
}

/// Direct 2-D convolution (cross-correlation, as in every deep learning framework).
pub fn conv2d(
    input: &Tensor,
    spec: &ConvSpec,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    spec.validate()?;
    let (c, h, w) = input.chw()?;
    if c != spec.in_channels {
        return Err(config_err!(
            "conv2d expects {} input channels, got {c} (input {:?})",
            spec.in_channels,
            input.shape()
        ));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(config_err!(
            "conv2d weight shape {:?}, expected {:?}",
            weight.shape(),
            spec.weight_shape()
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(config_err!(
                "conv2d bias shape {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            ));
        }
    }
    let (ho, wo) = spec.output_hw(h, w)?;
    let mut out = vec![0.0f32; spec.out_channels * ho * wo];
    if spec.is_depthwise() {
        depthwise(input.data(), spec, weight.data(), (h, w), (ho, wo), &mut out);
    } else {
        grouped(input.data(), spec, weight.data(), (h, w), (ho, wo), &mut out);
    }
    if let Some(b) = bias {
        let plane = ho * wo;
        out.par_chunks_mut(plane)
            .zip(b.data().par_iter())
            .for_each(|(ch, &bv)| ch.iter_mut().for_each(|v| *v += bv));
    }
    Tensor::new(&[spec.out_channels, ho, wo], out)
}

fn depthwise(
    input: &[f32],
    spec: &ConvSpec,
    weight: &[f32],
    (h, w): (usize, usize),
    (ho, wo): (usize, usize),
    out: &mut [f32],
) {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(ch, o)| {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        let k = &weight[ch * kh * kw..(ch + 1) * kh * kw];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0f32;
                for ky in 0..kh {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &src[iy as usize * w..(iy as usize + 1) * w];
                    for kx in 0..kw {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += k[ky * kw + kx] * row[ix as usize];
                    }
                }
                o[oy * wo + ox] = acc;
            }
        }
    });
}

/// Unroll `[C, H, W]` into `[C·kh·kw, Ho·Wo]` patches (zero-filled padding).
fn im2col(
    input: &[f32],
    channels: usize,
    spec: &ConvSpec,
    (h, w): (usize, usize),
    (ho, wo): (usize, usize),
) -> Vec<f32> {
    let (kh, kw) = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let cols = ho * wo;
    let mut buf = vec![0.0f32; channels * kh * kw * cols];
    buf.par_chunks_mut(cols).enumerate().for_each(|(r, dst)| {
        let c = r / (kh * kw);
        let ky = (r / kw) % kh;
        let kx = r % kw;
        let src = &input[c * h * w..(c + 1) * h * w];
        for oy in 0..ho {
            let iy = oy as isize * s - p + ky as isize;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            let row = &src[iy as usize * w..(iy as usize + 1) * w];
            let d = &mut dst[oy * wo..(oy + 1) * wo];
            for (ox, dv) in d.iter_mut().enumerate() {
                let ix = ox as isize * s - p + kx as isize;
                if ix >= 0 && ix < w as isize {
                    *dv = row[ix as usize];
                }
            }
        }
    });
    buf
}

fn grouped(
    input: &[f32],
    spec: &ConvSpec,
    weight: &[f32],
    hw: (usize, usize),
    out_hw: (usize, usize),
    out: &mut [f32],
) {
    let g = spec.groups;
    let (cin_g, cout_g) = (spec.in_channels / g, spec.out_channels / g);
    let kk = cin_g * spec.kernel.0 * spec.kernel.1;
    let (plane_in, plane_out) = (hw.0 * hw.1, out_hw.0 * out_hw.1);
    let pointwise = spec.kernel == (1, 1) && spec.stride == 1 && spec.padding == 0;
    for gi in 0..g {
        let src = &input[gi * cin_g * plane_in..(gi + 1) * cin_g * plane_in];
        let wgt = &weight[gi * cout_g * kk..(gi + 1) * cout_g * kk];
        let dst = &mut out[gi * cout_g * plane_out..(gi + 1) * cout_g * plane_out];
        if pointwise {
            gemm(wgt, src, dst, cout_g, kk, plane_out);
        } else {
            let cols = im2col(src, cin_g, spec, hw, out_hw);
            gemm(wgt, &cols, dst, cout_g, kk, plane_out);
        }
    }
}
