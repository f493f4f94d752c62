#![allow(clippy::should_implement_trait)]

use super::tape::Var;
use crate::error::{Error, Result};

/// Complex tensor carried as a (real, imaginary) pair of real variables.
#[derive(Clone, Copy, Debug)]
pub struct ComplexVar<'t> {
    pub re: Var<'t>,
    pub im: Var<'t>,
}

impl<'t> ComplexVar<'t> {
    pub fn new(re: Var<'t>, im: Var<'t>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape(format!("complex parts disagree: re {} vs im {}", re.shape(), im.shape())));
        }
        Ok(ComplexVar { re, im })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.re.dims()
    }

    pub fn conj(self) -> Self {
        ComplexVar { re: self.re, im: self.im.neg() }
    }

    pub fn add(self, other: Self) -> Result<Self> {
        ComplexVar::new(self.re.add(other.re)?, self.im.add(other.im)?)
    }

    /// Elementwise complex product (broadcasting like the real ops).
    pub fn mul(self, other: Self) -> Result<Self> {
        let re = self.re.mul(other.re)?.sub(self.im.mul(other.im)?)?;
        let im = self.re.mul(other.im)?.add(self.im.mul(other.re)?)?;
        ComplexVar::new(re, im)
    }

    /// Split ReLU: rectifies the real and imaginary parts independently.
    pub fn crelu(self) -> Self {
        ComplexVar { re: self.re.relu(), im: self.im.relu() }
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        ComplexVar::new(self.re.reshape(dims.to_vec())?, self.im.reshape(dims.to_vec())?)
    }

    /// Real view: real part followed by imaginary part along `axis`.
    pub fn to_real_concat(self, axis: usize) -> Result<Var<'t>> {
        Var::concat(&[self.re, self.im], axis)
    }
}
