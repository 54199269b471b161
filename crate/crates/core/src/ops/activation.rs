use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Sigmoid,
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Silu => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn apply_in_place(self, values: &mut [f32]) {
        values.iter_mut().for_each(|v| *v = self.apply_scalar(*v));
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.apply_scalar(v))
}
