//! Template features with and without joint template/search attention.
//!
//! With fusion off the template stream never sees search tokens, so editing the
//! search image cannot move it. With fusion on, one pixel is enough.

use mvt::{ModelConfig, MvtModel, Tensor};

fn main() -> mvt::Result<()> {
    let mut model = MvtModel::random(&ModelConfig::default(), 1)?;
    let z = Tensor::from_fn(&[3, 128, 128], |i| ((i * 7919 % 251) as f32 / 125.0) - 1.0)?;
    let x = Tensor::from_fn(&[3, 256, 256], |i| ((i * 104729 % 241) as f32 / 120.0) - 1.0)?;
    let mut poked = x.clone();
    poked.data_mut()[200 * 256 + 31] += 1.0;

    for fusion in [false, true] {
        model.set_fusion(fusion);
        let a = model.backbone.forward(&z, &x, fusion)?.0;
        let b = model.backbone.forward(&z, &poked, fusion)?.0;
        let diff = a.max_abs_diff(&b).unwrap_or(f32::NAN);
        println!("fusion {:<3}  max |Δ template features| = {diff:.3e}", if fusion { "on" } else { "off" });
    }
    Ok(())
}
