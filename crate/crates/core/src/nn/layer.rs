use crate::tensor::{Tape, Tensor, Var};

/// Whether batch statistics or running statistics drive normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A container of named parameter tensors.
///
/// `parameters` lists trainable tensors in binding order; `buffers` lists
/// non-trainable state (batch-norm running statistics) that still counts
/// toward the parameter total.
pub trait Layer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    /// Trainable tensors followed by buffers, mutably.
    fn all_mut(&mut self) -> Vec<&mut Tensor> {
        self.parameters_mut()
    }

    fn param_count(&self) -> usize {
        self.parameters().iter().chain(self.buffers().iter()).map(|(_, t)| t.numel()).sum()
    }
}

/// Places layer parameters on a tape, remembering the leaves in order so
/// their gradients can be matched back to the parameter tensors.
pub struct Binder<'t> {
    tape: &'t Tape,
    trainable: bool,
    leaves: Vec<Var<'t>>,
}

impl<'t> Binder<'t> {
    /// Parameters become trainable leaves.
    pub fn training(tape: &'t Tape) -> Self {
        Binder { tape, trainable: true, leaves: Vec::new() }
    }

    /// Parameters become constants; no gradients are tracked.
    pub fn frozen(tape: &'t Tape) -> Self {
        Binder { tape, trainable: false, leaves: Vec::new() }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn bind(&mut self, t: &Tensor) -> Var<'t> {
        let v = if self.trainable { self.tape.leaf(t.clone()) } else { self.tape.constant(t.clone()) };
        self.leaves.push(v);
        v
    }

    pub fn bind_layer<const N: usize>(&mut self, layer: &impl Layer) -> [Var<'t>; N] {
        let vars: Vec<Var<'t>> = layer.parameters().into_iter().map(|(_, t)| self.bind(t)).collect();
        vars.try_into().unwrap_or_else(|v: Vec<_>| panic!("layer has {} parameters, expected {N}", v.len()))
    }

    pub fn leaves(&self) -> &[Var<'t>] {
        &self.leaves
    }
}
