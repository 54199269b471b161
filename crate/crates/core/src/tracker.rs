//! Frame-loop inference: template crop at init, search crop around the last
//! estimate every frame, Hanning-windowed arg-max, mapping back to pixels.
//! Nothing learned is updated after [`Tracker::init`].

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{decode_box, NormBox};
use crate::model::MvtModel;
use crate::tensor::Tensor;

/// RGB normalization of the pretrained backbone.
pub const IMAGE_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGE_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Axis-aligned box in image pixels, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }
}

/// 3-channel 8-bit image, interleaved RGB rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Invalid(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("size checked at construction")
    }

    #[inline]
    fn px(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c] as f32
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Hanning taper `0.5·(1 − cos(2πi/(m−1)))`; `[1]` for `m == 1`.
pub fn hanning_window(m: usize) -> Vec<f64> {
    if m <= 1 {
        return vec![1.0; m];
    }
    (0..m)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (m - 1) as f64).cos()))
        .collect()
}

/// Outer product of two Hanning windows as an `[m, m]` tensor.
pub fn hanning_2d(m: usize) -> Tensor {
    let w = hanning_window(m);
    Tensor::from_fn(&[m, m], |k| (w[k / m] * w[k % m]) as f32).expect("m >= 1")
}

/// Placement of a square crop in the source image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropGeometry {
    /// Top-left corner of the crop window in image pixels (may be outside the image).
    pub x0: f64,
    pub y0: f64,
    /// Side of the crop window in image pixels.
    pub side: f64,
    pub out_size: usize,
}

impl CropGeometry {
    /// Image pixels per output pixel.
    pub fn scale(&self) -> f64 {
        self.side / self.out_size as f64
    }

    /// Patch-relative box to image pixels.
    pub fn to_image(&self, b: &NormBox) -> BBox {
        BBox::from_center(
            self.x0 + b.cx * self.side,
            self.y0 + b.cy * self.side,
            b.w * self.side,
            b.h * self.side,
        )
    }

    pub fn to_norm(&self, b: &BBox) -> NormBox {
        let (cx, cy) = b.center();
        NormBox::new(
            (cx - self.x0) / self.side,
            (cy - self.y0) / self.side,
            b.w / self.side,
            b.h / self.side,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    /// Normalized `[3, out, out]` patch.
    pub patch: Tensor,
    pub geometry: CropGeometry,
    /// Output pixels that sampled at least one out-of-image tap.
    pub padded_pixels: usize,
}

/// Square crop of side `side_factor·√(w·h)` around `center`, bilinearly resized.
///
/// Taps outside the image read the per-channel mean of the in-image part of the window.
pub fn crop_patch(
    frame: &ImageFrame,
    center: (f64, f64),
    target_wh: (f64, f64),
    side_factor: f64,
    out_size: usize,
) -> Result<Crop> {
    let (tw, th) = target_wh;
    if !(tw > 0.0 && th > 0.0 && tw.is_finite() && th.is_finite()) {
        return Err(Error::Invalid(format!("degenerate target size {tw}x{th}")));
    }
    if !(side_factor > 0.0) || out_size == 0 || !center.0.is_finite() || !center.1.is_finite() {
        return Err(Error::Invalid("crop needs positive factor/size and a finite center".into()));
    }
    let side = side_factor * (tw * th).sqrt();
    let geometry = CropGeometry {
        x0: center.0 - side / 2.0,
        y0: center.1 - side / 2.0,
        side,
        out_size,
    };
    let fill = window_mean(frame, &geometry);
    let scale = geometry.scale();
    let plane = out_size * out_size;
    let mut data = vec![0.0f32; 3 * plane];
    let mut padded = 0;
    let (fw, fh) = (frame.width as isize, frame.height as isize);
    for oy in 0..out_size {
        let sy = geometry.y0 + (oy as f64 + 0.5) * scale - 0.5;
        let y0 = sy.floor();
        let fy = (sy - y0) as f32;
        for ox in 0..out_size {
            let sx = geometry.x0 + (ox as f64 + 0.5) * scale - 0.5;
            let x0 = sx.floor();
            let fx = (sx - x0) as f32;
            let taps = [
                (x0 as isize, y0 as isize, (1.0 - fx) * (1.0 - fy)),
                (x0 as isize + 1, y0 as isize, fx * (1.0 - fy)),
                (x0 as isize, y0 as isize + 1, (1.0 - fx) * fy),
                (x0 as isize + 1, y0 as isize + 1, fx * fy),
            ];
            let mut acc = [0.0f32; 3];
            let mut outside = false;
            for (tx, ty, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                let inside = tx >= 0 && ty >= 0 && tx < fw && ty < fh;
                outside |= !inside;
                for c in 0..3 {
                    let v = if inside {
                        frame.px(tx as usize, ty as usize, c)
                    } else {
                        fill[c]
                    };
                    acc[c] += wt * v;
                }
            }
            padded += outside as usize;
            for c in 0..3 {
                data[c * plane + oy * out_size + ox] = (acc[c] / 255.0 - IMAGE_MEAN[c]) / IMAGE_STD[c];
            }
        }
    }
    Ok(Crop {
        patch: Tensor::new(&[3, out_size, out_size], data)?,
        geometry,
        padded_pixels: padded,
    })
}

/// Per-channel mean of the image pixels covered by the crop window (whole image if none).
fn window_mean(frame: &ImageFrame, g: &CropGeometry) -> [f32; 3] {
    let clampi = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi);
    let (xa, xb) = (clampi(g.x0.floor(), frame.width), clampi((g.x0 + g.side).ceil(), frame.width));
    let (ya, yb) = (clampi(g.y0.floor(), frame.height), clampi((g.y0 + g.side).ceil(), frame.height));
    let (xa, xb, ya, yb) = if xa < xb && ya < yb {
        (xa, xb, ya, yb)
    } else {
        (0, frame.width, 0, frame.height)
    };
    let mut sum = [0.0f64; 3];
    for y in ya..yb {
        for x in xa..xb {
            for (c, s) in sum.iter_mut().enumerate() {
                *s += frame.px(x, y, c) as f64;
            }
        }
    }
    let n = ((xb - xa) * (yb - ya)) as f64;
    sum.map(|s| (s / n) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub template_factor: f64,
    pub search_factor: f64,
    pub window: bool,
    /// Lower bound on the emitted box side, in pixels.
    pub min_size: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            template_factor: 2.0,
            search_factor: 4.0,
            window: true,
            min_size: 4.0,
        }
    }
}

/// Per-sequence state; the template patch is fixed at init.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub template: Tensor,
    pub last_crop: Option<CropGeometry>,
    pub frame_size: (usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTiming {
    pub crop: Duration,
    pub backbone: Duration,
    pub neck: Duration,
    pub head: Duration,
    pub post: Duration,
    pub total: Duration,
}

impl FrameTiming {
    pub fn stage_sum(&self) -> Duration {
        self.crop + self.backbone + self.neck + self.head + self.post
    }
}

pub struct Tracker<'m> {
    model: &'m MvtModel,
    cfg: TrackerConfig,
    window: Tensor,
    state: Option<TrackState>,
}

impl<'m> Tracker<'m> {
    pub fn new(model: &'m MvtModel, cfg: TrackerConfig) -> Self {
        Self {
            model,
            cfg,
            window: hanning_2d(model.cfg.search_grid()),
            state: None,
        }
    }

    pub fn state(&self) -> Option<&TrackState> {
        self.state.as_ref()
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn init(&mut self, frame: &ImageFrame, gt: BBox) -> Result<&TrackState> {
        if !gt.is_valid() {
            return Err(Error::Invalid(format!("degenerate initial box {gt:?}")));
        }
        let (cx, cy) = gt.center();
        let center = (cx.clamp(0.0, frame.width as f64), cy.clamp(0.0, frame.height as f64));
        let crop = crop_patch(
            frame,
            center,
            (gt.w, gt.h),
            self.cfg.template_factor,
            self.model.cfg.template_size,
        )?;
        Ok(self.state.insert(TrackState {
            center,
            size: (gt.w, gt.h),
            template: crop.patch,
            last_crop: None,
            frame_size: (frame.width, frame.height),
        }))
    }

    pub fn track(&mut self, frame: &ImageFrame) -> Result<BBox> {
        Ok(self.track_timed(frame)?.0)
    }

    pub fn track_timed(&mut self, frame: &ImageFrame) -> Result<(BBox, FrameTiming)> {
        let t0 = Instant::now();
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Usage("track() called before init()".into()))?;
        let crop = crop_patch(
            frame,
            state.center,
            state.size,
            self.cfg.search_factor,
            self.model.cfg.search_size,
        )?;
        let t1 = Instant::now();
        let (out, stages) = self.model.forward_timed(&state.template, &crop.patch)?;
        let t2 = Instant::now();
        let window = self.cfg.window.then_some(&self.window);
        let nb = decode_box(&out.head, window)?;
        let raw = crop.geometry.to_image(&nb);
        let (fw, fh) = (frame.width as f64, frame.height as f64);
        let (cx, cy) = raw.center();
        let sane = |v: f64, lo: f64, hi: f64, fallback: f64| {
            if v.is_finite() {
                v.clamp(lo, hi)
            } else {
                fallback
            }
        };
        let min = self.cfg.min_size;
        let w = sane(raw.w, min, fw.max(min), state.size.0);
        let h = sane(raw.h, min, fh.max(min), state.size.1);
        let cx = sane(cx, 0.0, fw, state.center.0);
        let cy = sane(cy, 0.0, fh, state.center.1);
        state.center = (cx, cy);
        state.size = (w, h);
        state.last_crop = Some(crop.geometry);
        state.frame_size = (frame.width, frame.height);
        let t3 = Instant::now();
        let timing = FrameTiming {
            crop: t1 - t0,
            backbone: stages.backbone,
            neck: stages.neck,
            head: stages.head,
            post: (t2 - t1).saturating_sub(stages.backbone + stages.neck + stages.head) + (t3 - t2),
            total: t3 - t0,
        };
        Ok((BBox::from_center(cx, cy, w, h), timing))
    }
}
