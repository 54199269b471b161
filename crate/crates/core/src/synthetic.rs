//! Deterministic synthetic sequences for smoke tests, examples and benchmarks.

use std::fs;
use std::path::Path;

use crate::dataset::{format_boxes, GROUNDTRUTH_FILE};
use crate::error::Result;
use crate::tracker::{BBox, ImageFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingSquare {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub side: usize,
    /// Pixels moved per frame along x and y.
    pub velocity: (f64, f64),
}

impl Default for MovingSquare {
    fn default() -> Self {
        Self {
            frames: 50,
            width: 320,
            height: 240,
            side: 40,
            velocity: (2.0, 1.0),
        }
    }
}

impl MovingSquare {
    /// Square top-left at frame `t`, bouncing inside the image.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let bounce = |start: f64, v: f64, span: f64| {
            let p = (start + v * t as f64).rem_euclid(2.0 * span);
            if p > span {
                2.0 * span - p
            } else {
                p
            }
        };
        let span_x = (self.width - self.side) as f64;
        let span_y = (self.height - self.side) as f64;
        (
            bounce(span_x / 4.0, self.velocity.0, span_x).round(),
            bounce(span_y / 3.0, self.velocity.1, span_y).round(),
        )
    }

    pub fn groundtruth(&self) -> Vec<BBox> {
        (0..self.frames)
            .map(|t| {
                let (x, y) = self.position(t);
                BBox::new(x, y, self.side as f64, self.side as f64)
            })
            .collect()
    }

    pub fn frame(&self, t: usize) -> ImageFrame {
        let (sx, sy) = self.position(t);
        let (sx, sy) = (sx as usize, sy as usize);
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                let inside = x >= sx && x < sx + self.side && y >= sy && y < sy + self.side;
                let px = if inside {
                    // checker texture on the target
                    if ((x - sx) / 5 + (y - sy) / 5) % 2 == 0 {
                        [230, 40, 40]
                    } else {
                        [250, 220, 60]
                    }
                } else {
                    let g = ((x * 7 + y * 13) % 64) as u8;
                    [40 + g, 60 + g / 2, 90 + g / 3]
                };
                data.extend_from_slice(&px);
            }
        }
        ImageFrame::new(self.width, self.height, data).expect("consistent size")
    }

    pub fn frames(&self) -> Vec<ImageFrame> {
        (0..self.frames).map(|t| self.frame(t)).collect()
    }

    /// Writes `00000001.png…` and `groundtruth.txt` into `dir`.
    pub fn write_sequence(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in 0..self.frames {
            self.frame(t)
                .to_rgb_image()
                .save(dir.join(format!("{:08}.png", t + 1)))?;
        }
        fs::write(dir.join(GROUNDTRUTH_FILE), format_boxes(&self.groundtruth()))?;
        Ok(())
    }
}
