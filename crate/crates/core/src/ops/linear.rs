use super::gemm::gemm_bt;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

/// `y = x·Wᵀ + b` for tokens `x: [N, in]`, `weight: [out, in]`, `bias: [out]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, din) = match x.shape() {
        &[n, d] => (n, d),
        s => return Err(config_err!("linear expects [N, D] tokens, got {s:?}")),
    };
    let dout = match weight.shape() {
        &[o, i] if i == din => o,
        s => return Err(config_err!("linear weight {s:?} incompatible with input dim {din}")),
    };
    let mut out = vec![0.0; n * dout];
    gemm_bt(x.data(), weight.data(), &mut out, n, din, dout);
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return Err(config_err!("linear bias {:?}, expected [{dout}]", b.shape()));
        }
        for row in out.chunks_mut(dout) {
            row.iter_mut().zip(b.data()).for_each(|(v, &bv)| *v += bv);
        }
    }
    Tensor::new(&[n, dout], out)
}
