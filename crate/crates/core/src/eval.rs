//! Benchmark metrics: overlap ratio (AUC), success rate, precision,
//! normalized precision, failure rate, speed, and attribute slices.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{Attribute, SequenceAnnotation, TrackRun};
use crate::error::{Error, Result};
use crate::tracker::BBox;

/// `|a ∩ b| / |a ∪ b|`; 0 for disjoint or invalid boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if !(a.is_valid() && b.is_valid()) {
        return 0.0;
    }
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

pub fn center_error(pred: &BBox, gt: &BBox) -> f64 {
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    ((px - gx).powi(2) + (py - gy).powi(2)).sqrt()
}

/// Center error with each axis divided by the groundtruth extent.
pub fn normalized_center_error(pred: &BBox, gt: &BBox) -> f64 {
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    (((px - gx) / gt.w).powi(2) + ((py - gy) / gt.h).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    /// Points on the success curve, spanning IoU thresholds `[0, 1]`.
    pub success_points: usize,
    /// Center-error threshold for precision, in pixels (strict `<`).
    pub precision_px: f64,
    /// Upper end of the normalized precision curve.
    pub norm_precision_max: f64,
    pub norm_precision_points: usize,
    /// Thresholds reported as `SR@τ`.
    pub success_rates: Vec<f64>,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            success_points: 101,
            precision_px: 20.0,
            norm_precision_max: 0.5,
            norm_precision_points: 51,
            success_rates: vec![0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub frames: usize,
    pub overlap: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSlice {
    pub frames: usize,
    pub sequences: usize,
    pub failure_rate: f64,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sequences: usize,
    /// Frames with groundtruth that entered the averages.
    pub frames: usize,
    /// Mean IoU over evaluated frames.
    pub overlap: f64,
    /// Trapezoidal integral of the success curve at 1e-3 resolution.
    pub success_auc: f64,
    /// `(τ, SR@τ)` for each requested threshold.
    pub success_rate: Vec<(f64, f64)>,
    /// `(τ, fraction with IoU > τ)`.
    pub success_curve: Vec<(f64, f64)>,
    pub precision: f64,
    pub norm_precision: f64,
    pub failure_rate: f64,
    pub fps: Option<f64>,
    pub per_sequence: Vec<SequenceMetrics>,
    pub attribute_slices: BTreeMap<String, AttributeSlice>,
}

impl MetricsReport {
    pub fn sr(&self, tau: f64) -> Option<f64> {
        self.success_rate
            .iter()
            .find(|(t, _)| (t - tau).abs() < 1e-12)
            .map(|&(_, v)| v)
    }
}

/// Fraction of IoUs strictly above `tau`.
pub fn success_rate(ious: &[f64], tau: f64) -> f64 {
    if ious.is_empty() {
        return 0.0;
    }
    ious.iter().filter(|&&v| v > tau).count() as f64 / ious.len() as f64
}

/// Success curve at `points` evenly spaced thresholds in `[0, 1]`.
pub fn success_curve(ious: &[f64], points: usize) -> Vec<(f64, f64)> {
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            (t, success_rate(ious, t))
        })
        .collect()
}

/// Trapezoidal area under a sampled curve.
pub fn trapezoid_area(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Clone, Copy)]
struct FrameRecord {
    iou: f64,
    err: f64,
    norm_err: f64,
}

fn aggregate(records: &[FrameRecord]) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let n = records.len() as f64;
    let or = records.iter().map(|r| r.iou).sum::<f64>() / n;
    let fr = records.iter().filter(|r| r.iou == 0.0).count() as f64 / n;
    (or, fr)
}

/// Pools every evaluated frame of every sequence.
pub fn compute_metrics(
    runs: &[TrackRun],
    anns: &[SequenceAnnotation],
    th: &MetricThresholds,
) -> Result<MetricsReport> {
    let by_name: HashMap<&str, &TrackRun> = runs.iter().map(|r| (r.name.as_str(), r)).collect();
    let ann_names: HashMap<&str, ()> = anns.iter().map(|a| (a.name.as_str(), ())).collect();
    let mut problems = Vec::new();
    for a in anns {
        match by_name.get(a.name.as_str()) {
            None => problems.push(format!("{}: no results", a.name)),
            Some(r) if r.boxes.len() != a.num_frames() => problems.push(format!(
                "{}: {} predictions for {} frames",
                a.name,
                r.boxes.len(),
                a.num_frames()
            )),
            Some(_) => {}
        }
    }
    for r in runs {
        if !ann_names.contains_key(r.name.as_str()) {
            problems.push(format!("{}: no annotation", r.name));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Mismatch(problems.join("; ")));
    }

    let mut all = Vec::new();
    let mut per_sequence = Vec::with_capacity(anns.len());
    let mut slices: BTreeMap<Attribute, (Vec<FrameRecord>, usize)> = BTreeMap::new();
    let (mut frames_timed, mut seconds) = (0usize, 0.0f64);
    for a in anns {
        let run = by_name[a.name.as_str()];
        let recs: Vec<FrameRecord> = a
            .groundtruth
            .iter()
            .zip(&run.boxes)
            .filter_map(|(gt, pred)| {
                gt.map(|gt| FrameRecord {
                    iou: iou(pred, &gt),
                    err: center_error(pred, &gt),
                    norm_err: normalized_center_error(pred, &gt),
                })
            })
            .collect();
        let (or, fr) = aggregate(&recs);
        per_sequence.push(SequenceMetrics {
            name: a.name.clone(),
            frames: recs.len(),
            overlap: or,
            failure_rate: fr,
        });
        if !run.times.is_empty() {
            frames_timed += run.times.len();
            seconds += run.times.iter().sum::<f64>();
        }
        for &attr in &a.attributes {
            let slot = slices.entry(attr).or_default();
            slot.1 += 1;
            slot.0.extend(recs.iter().copied());
        }
        all.extend(recs);
    }

    let ious: Vec<f64> = all.iter().map(|r| r.iou).collect();
    let n = all.len().max(1) as f64;
    let (overlap, failure_rate) = aggregate(&all);
    let precision = all.iter().filter(|r| r.err < th.precision_px).count() as f64 / n;
    let np_steps = th.norm_precision_points.max(2) - 1;
    let np_curve: Vec<(f64, f64)> = (0..=np_steps)
        .map(|i| {
            let t = th.norm_precision_max * i as f64 / np_steps as f64;
            (t, all.iter().filter(|r| r.norm_err <= t).count() as f64 / n)
        })
        .collect();
    let norm_precision = trapezoid_area(&np_curve) / th.norm_precision_max;

    Ok(MetricsReport {
        sequences: anns.len(),
        frames: all.len(),
        overlap,
        success_auc: trapezoid_area(&success_curve(&ious, 1001)),
        success_rate: th.success_rates.iter().map(|&t| (t, success_rate(&ious, t))).collect(),
        success_curve: success_curve(&ious, th.success_points),
        precision,
        norm_precision,
        failure_rate,
        fps: (seconds > 0.0).then(|| frames_timed as f64 / seconds),
        per_sequence,
        attribute_slices: slices
            .into_iter()
            .map(|(attr, (recs, seqs))| {
                let (or, fr) = aggregate(&recs);
                (
                    attr.code().to_string(),
                    AttributeSlice {
                        frames: recs.len(),
                        sequences: seqs,
                        failure_rate: fr,
                        overlap: or,
                    },
                )
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        let c = BBox::new(5.0, 5.0, 1.0, 1.0);
        assert_eq!(iou(&a, &c), 0.0);
        // touching edges do not overlap
        assert_eq!(iou(&a, &BBox::new(2.0, 0.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn curve_is_monotone() {
        let ious = [0.0, 0.2, 0.5, 0.5, 0.9, 1.0];
        let c = success_curve(&ious, 101);
        assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(c[0].1, 5.0 / 6.0);
        assert_eq!(c[100].1, 0.0);
    }
}
