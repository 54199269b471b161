//! Training objectives with hand-derived gradients, evaluated in f64:
//! `L = L_cls + λ1·L_1 + λ2·L_giou`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::NormBox;

pub const PROB_CLAMP: f64 = 1e-7;
pub const FOCAL_ALPHA: f64 = 2.0;
pub const FOCAL_BETA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// λ1, weight of the ℓ1 box term.
    pub l1: f64,
    /// λ2, weight of the GIoU term.
    pub giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l1: 5.0, giou: 2.0 }
    }
}

impl LossWeights {
    pub fn combine(&self, cls: f64, l1: f64, giou: f64) -> f64 {
        cls + self.l1 * l1 + self.giou * giou
    }
}

/// Gaussian label map on the score grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub grid: usize,
    pub values: Vec<f64>,
}

impl TargetMap {
    /// Label map from explicit values; every value must lie in `[0, 1]`.
    pub fn from_values(grid: usize, values: Vec<f64>) -> Result<Self> {
        if grid == 0 || values.len() != grid * grid {
            return Err(Error::Invalid(format!(
                "target map needs {grid}x{grid} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("target value {v} outside [0, 1]")));
        }
        Ok(Self { grid, values })
    }

    /// Peak 1 at the cell holding the box centre, `σ` = box diagonal in cells / 6.
    pub fn gaussian(gt: &NormBox, grid: usize) -> Result<Self> {
        if !(gt.w > 0.0 && gt.h > 0.0) {
            return Err(Error::Invalid(format!("degenerate target box {gt:?}")));
        }
        let g = grid as f64;
        let cell = |c: f64| ((c * g).floor().max(0.0) as usize).min(grid - 1);
        let (ci, cj) = (cell(gt.cx), cell(gt.cy));
        let sigma = ((gt.w * g).powi(2) + (gt.h * g).powi(2)).sqrt() / 6.0;
        let denom = 2.0 * sigma * sigma;
        let values = (0..grid * grid)
            .map(|k| {
                let (y, x) = ((k / grid) as f64, (k % grid) as f64);
                let d2 = (x - ci as f64).powi(2) + (y - cj as f64).powi(2);
                (-d2 / denom).exp()
            })
            .collect();
        Ok(Self { grid, values })
    }

    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1.0).count()
    }
}

/// Penalty-reduced focal loss and its gradient w.r.t. each predicted probability.
pub fn focal_loss(pred: &[f64], target: &TargetMap, alpha: f64, beta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.values.len() {
        return Err(Error::Invalid(format!(
            "prediction has {} cells, target {}",
            pred.len(),
            target.values.len()
        )));
    }
    let n_pos = target.positives();
    if n_pos == 0 {
        return Err(Error::Invalid("target map has no positive cell".into()));
    }
    let norm = 1.0 / n_pos as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (&raw, &y)) in pred.iter().zip(&target.values).enumerate() {
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let clamped = p != raw;
        let (term, dterm) = if y == 1.0 {
            let q = 1.0 - p;
            let t = q.powf(alpha) * p.ln();
            let dt = -alpha * q.powf(alpha - 1.0) * p.ln() + q.powf(alpha) / p;
            (t, dt)
        } else {
            let wy = (1.0 - y).powf(beta);
            let l = (1.0 - p).ln();
            let t = wy * p.powf(alpha) * l;
            let dt = wy * (alpha * p.powf(alpha - 1.0) * l - p.powf(alpha) / (1.0 - p));
            (t, dt)
        };
        loss -= norm * term;
        if !clamped {
            grad[i] = -norm * dterm;
        }
    }
    Ok((loss, grad))
}

/// Mean absolute difference over `(cx, cy, w, h)` and its (sub)gradient w.r.t. `pred`.
pub fn l1_box_loss(pred: &NormBox, gt: &NormBox) -> (f64, [f64; 4]) {
    let d = [pred.cx - gt.cx, pred.cy - gt.cy, pred.w - gt.w, pred.h - gt.h];
    let loss = d.iter().map(|v| v.abs()).sum::<f64>() / 4.0;
    (loss, d.map(|v| v.signum() * if v == 0.0 { 0.0 } else { 0.25 }))
}

fn check_box(b: &NormBox, what: &str) -> Result<()> {
    if !(b.w > 0.0 && b.h > 0.0) || ![b.cx, b.cy, b.w, b.h].iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid(format!("{what} box {b:?} is degenerate")));
    }
    Ok(())
}

/// Generalized IoU of two center-format boxes.
pub fn giou(pred: &NormBox, gt: &NormBox) -> Result<f64> {
    Ok(1.0 - giou_loss(pred, gt)?.0)
}

/// `1 − GIoU` and its gradient w.r.t. `pred` as `(cx, cy, w, h)`.
pub fn giou_loss(pred: &NormBox, gt: &NormBox) -> Result<(f64, [f64; 4])> {
    check_box(pred, "predicted")?;
    check_box(gt, "groundtruth")?;
    let (x1, y1, x2, y2) = pred.corners();
    let (gx1, gy1, gx2, gy2) = gt.corners();

    let iw_raw = x2.min(gx2) - x1.max(gx1);
    let ih_raw = y2.min(gy2) - y1.max(gy1);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let area_p = pred.w * pred.h;
    let union = area_p + gt.w * gt.h - inter;
    let cw = x2.max(gx2) - x1.min(gx1);
    let ch = y2.max(gy2) - y1.min(gy1);
    let hull = cw * ch;
    let loss = 2.0 - inter / union - union / hull;

    // partials w.r.t. corners [x1, y1, x2, y2]
    let d_iw = [
        if iw_raw > 0.0 && x1 > gx1 { -1.0 } else { 0.0 },
        0.0,
        if iw_raw > 0.0 && x2 < gx2 { 1.0 } else { 0.0 },
        0.0,
    ];
    let d_ih = [
        0.0,
        if ih_raw > 0.0 && y1 > gy1 { -1.0 } else { 0.0 },
        0.0,
        if ih_raw > 0.0 && y2 < gy2 { 1.0 } else { 0.0 },
    ];
    let (pw, ph) = (x2 - x1, y2 - y1);
    let d_area = [-ph, -pw, ph, pw];
    let d_cw = [if x1 < gx1 { -1.0 } else { 0.0 }, 0.0, if x2 > gx2 { 1.0 } else { 0.0 }, 0.0];
    let d_ch = [0.0, if y1 < gy1 { -1.0 } else { 0.0 }, 0.0, if y2 > gy2 { 1.0 } else { 0.0 }];
    let mut d_corner = [0.0; 4];
    for k in 0..4 {
        let d_inter = d_iw[k] * ih + iw * d_ih[k];
        let d_union = d_area[k] - d_inter;
        let d_hull = d_cw[k] * ch + cw * d_ch[k];
        let d_iou = (d_inter * union - inter * d_union) / (union * union);
        let d_ratio = (d_union * hull - union * d_hull) / (hull * hull);
        d_corner[k] = -d_iou - d_ratio;
    }
    let [g_x1, g_y1, g_x2, g_y2] = d_corner;
    let grad = [
        g_x1 + g_x2,
        g_y1 + g_y2,
        0.5 * (g_x2 - g_x1),
        0.5 * (g_y2 - g_y1),
    ];
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    /// Gradient of `total` w.r.t. the score map.
    pub grad_score: Vec<f64>,
    /// Gradient of `total` w.r.t. the predicted `(cx, cy, w, h)`.
    pub grad_box: [f64; 4],
}

/// Classification term over the score map plus the weighted box terms at the target cell.
pub fn total_loss(
    score: &[f64],
    target: &TargetMap,
    pred_box: &NormBox,
    gt_box: &NormBox,
    weights: &LossWeights,
) -> Result<TotalLoss> {
    let (cls, grad_score) = focal_loss(score, target, FOCAL_ALPHA, FOCAL_BETA)?;
    let (l1, g1) = l1_box_loss(pred_box, gt_box);
    let (lg, gg) = giou_loss(pred_box, gt_box)?;
    let mut grad_box = [0.0; 4];
    for k in 0..4 {
        grad_box[k] = weights.l1 * g1[k] + weights.giou * gg[k];
    }
    Ok(TotalLoss {
        total: weights.combine(cls, l1, lg),
        cls,
        l1,
        giou: lg,
        grad_score,
        grad_box,
    })
}
