//! Metrics on a hand-built two-sequence benchmark.

use mvt::cli::write_report_table;
use mvt::dataset::{SequenceAnnotation, TrackRun};
use mvt::eval::{compute_metrics, MetricThresholds};
use mvt::BBox;

fn main() -> mvt::Result<()> {
    let gt_a: Vec<BBox> = (0..20).map(|t| BBox::new(10.0 + 3.0 * t as f64, 40.0, 30.0, 30.0)).collect();
    // falls behind by 0.2 px per frame, then loses the target at frame 14
    let pred_a = gt_a
        .iter()
        .enumerate()
        .map(|(t, g)| if t < 14 { BBox::new(g.x - 0.2 * t as f64, g.y, g.w, g.h) } else { BBox::new(300.0, 300.0, 30.0, 30.0) })
        .collect();
    let gt_b: Vec<BBox> = (0..10).map(|t| BBox::new(100.0, 100.0 - t as f64, 50.0 + t as f64, 40.0)).collect();
    let pred_b = gt_b.iter().map(|g| BBox::new(g.x + 5.0, g.y, g.w, g.h)).collect();

    let ann = |name: &str, gt: Vec<BBox>| SequenceAnnotation {
        name: name.into(),
        frames: Vec::new(),
        groundtruth: gt.into_iter().map(Some).collect(),
        attributes: Vec::new(),
    };
    let run = |name: &str, boxes: Vec<BBox>| TrackRun { name: name.into(), boxes, times: Vec::new() };
    let report = compute_metrics(
        &[run("walk", pred_a), run("grow", pred_b)],
        &[ann("walk", gt_a), ann("grow", gt_b)],
        &MetricThresholds::default(),
    )?;
    write_report_table(&report, &mut std::io::stdout())?;
    Ok(())
}
