//! Feature shapes through a randomly initialized model, and where the parameters live.

use mvt::{build_manifest, ModelConfig, MvtModel, Tensor};

fn main() -> mvt::Result<()> {
    let cfg = ModelConfig::default();
    let manifest = build_manifest(&cfg)?;
    println!("parameters: {}", manifest.parameter_count());
    for prefix in ["backbone.layer1", "backbone.layer2", "backbone.layer3", "backbone.layer4", "neck", "head"] {
        println!("  {prefix:<16} {:>9}", manifest.parameter_count_under(prefix));
    }

    let model = MvtModel::random(&cfg, 0)?;
    let z = Tensor::full(&[3, cfg.template_size, cfg.template_size], 0.1)?;
    let x = Tensor::full(&[3, cfg.search_size, cfg.search_size], -0.2)?;
    let (out, times) = model.forward_timed(&z, &x)?;
    println!("template features {:?}", out.z_feat.shape());
    println!("search features   {:?}", out.x_feat.shape());
    println!("correlation       {:?}", out.fused.f_zx.shape());
    println!("adjusted          {:?}", out.fused.adjusted.shape());
    println!("score/offset/size {:?} {:?} {:?}", out.head.score.shape(), out.head.offset.shape(), out.head.size.shape());
    println!(
        "backbone {:.0} ms, neck {:.1} ms, head {:.0} ms",
        times.backbone.as_secs_f64() * 1e3,
        times.neck.as_secs_f64() * 1e3,
        times.head.as_secs_f64() * 1e3
    );
    Ok(())
}
