//! Track a synthetic moving square with random weights and report per-frame IoU.
//!
//! Random weights carry no notion of "the target", so expect the box to wander and
//! swell. The point is the loop itself: crop, forward, decode, map back.

use mvt::eval::iou;
use mvt::synthetic::MovingSquare;
use mvt::{ModelConfig, MvtModel, Tracker, TrackerConfig};

fn main() -> mvt::Result<()> {
    let frames = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let scene = MovingSquare { frames, ..MovingSquare::default() };
    let gt = scene.groundtruth();
    let model = MvtModel::random(&ModelConfig::default(), 0)?;
    let mut tracker = Tracker::new(&model, TrackerConfig::default());
    tracker.init(&scene.frame(0), gt[0])?;
    println!("frame 0 init {:?}", gt[0]);
    for t in 1..frames {
        let (b, timing) = tracker.track_timed(&scene.frame(t))?;
        println!(
            "frame {t:>2}  box ({:6.1}, {:6.1}, {:5.1}, {:5.1})  IoU {:.3}  {:.0} ms",
            b.x,
            b.y,
            b.w,
            b.h,
            iou(&b, &gt[t]),
            timing.total.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
