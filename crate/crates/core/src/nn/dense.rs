use super::layer::{Binder, Layer};
use crate::error::Result;
use crate::tensor::{Tensor, Var};

/// Fully connected map from (n, cin) to (n, cout).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        DenseLayer { weights: Tensor::zeros(vec![cin, cout]), bias: Tensor::zeros(vec![cout]) }
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn forward<'t>(&self, binder: &mut Binder<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let [w, b] = binder.bind_layer(self);
        affine(x, w, b)
    }
}

/// `x @ w + b` with the bias broadcast over rows.
pub fn affine<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let n = b.value().numel();
    x.matmul(w)?.add(b.reshape(vec![1, n])?)
}

impl Layer for DenseLayer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weights", &self.weights), ("bias", &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}
