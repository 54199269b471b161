//! Training objective on one prediction: focal + 5·L1 + 2·GIoU, with its gradients.

use mvt::loss::{giou, total_loss, LossWeights, TargetMap};
use mvt::NormBox;

fn main() -> mvt::Result<()> {
    let gt = NormBox::new(0.52, 0.47, 0.20, 0.30);
    let pred = NormBox::new(0.55, 0.45, 0.25, 0.28);
    let target = TargetMap::gaussian(&gt, 16)?;
    let peak = target.values.iter().position(|&y| y == 1.0).expect("one positive cell");
    println!("target peak at cell ({}, {}), {} positive", peak / 16, peak % 16, target.positives());

    // a score map that is confident near the target and uncertain elsewhere
    let score: Vec<f64> = target.values.iter().map(|&y| 0.05 + 0.9 * y).collect();
    let t = total_loss(&score, &target, &pred, &gt, &LossWeights::default())?;
    println!("cls {:.5}  l1 {:.5}  giou {:.5}  total {:.5}", t.cls, t.l1, t.giou, t.total);
    println!("GIoU(pred, gt) = {:.5}", giou(&pred, &gt)?);
    println!("d total / d (cx, cy, w, h) = {:?}", t.grad_box.map(|g| (g * 1e4).round() / 1e4));
    let (i, g) = t
        .grad_score
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty map");
    println!("largest score gradient {g:.4} at cell ({}, {})", i / 16, i % 16);
    Ok(())
}
