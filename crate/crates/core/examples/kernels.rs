//! The from-scratch kernels on tiny inputs.

use mvt::neck::pointwise_xcorr;
use mvt::ops::{attention_probs, conv2d, multi_head_attention, AttentionSpec, ConvSpec, EncoderLayer};
use mvt::Tensor;

fn main() -> mvt::Result<()> {
    let x = Tensor::from_fn(&[1, 4, 4], |i| i as f32)?;
    let box3 = Tensor::full(&[1, 1, 3, 3], 1.0)?;
    let y = conv2d(&x, &ConvSpec::square(1, 1, 3, 1), &box3, None)?;
    println!("3x3 box filter over a 4x4 ramp:");
    for row in y.data().chunks(4) {
        println!("  {row:?}");
    }

    let dw = ConvSpec::depthwise(2, 3, 2);
    let x2 = Tensor::from_fn(&[2, 6, 6], |i| (i % 7) as f32)?;
    let w = Tensor::full(&dw.weight_shape(), 1.0 / 9.0)?;
    println!("depthwise stride 2: {:?} -> {:?}", x2.shape(), conv2d(&x2, &dw, &w, None)?.shape());

    let spec = AttentionSpec::new(8, 2, 16, 1)?;
    let mut layer = EncoderLayer::passthrough(&spec);
    layer.qkv_weight = Tensor::from_fn(&[24, 8], |i| ((i * 37 % 11) as f32 - 5.0) / 10.0)?;
    let tokens = Tensor::from_fn(&[5, 8], |i| ((i * 13 % 7) as f32 - 3.0) / 3.0)?;
    let probs = attention_probs(&layer.norm1.apply(&tokens)?, &layer, &spec)?;
    println!("head 0 attention rows:");
    for row in probs[0].data().chunks(5) {
        println!("  {:?}  sum {:.6}", row.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>(), row.iter().sum::<f32>());
    }
    let out = multi_head_attention(&tokens, &spec, &[layer])?;
    println!("encoder output {:?}", out.shape());

    let z = Tensor::full(&[4, 2, 2], 0.5)?;
    let s = Tensor::from_fn(&[4, 6, 6], |i| (i % 5) as f32)?;
    println!("pointwise xcorr {:?} x {:?} -> {:?}", z.shape(), s.shape(), pointwise_xcorr(&z, &s)?.shape());
    Ok(())
}
