use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Elementwise max(0, x). Backward masks gradient where the input was <= 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    cached_input: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { cached_input: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.cached_input = Some(x.clone());
        y
    }

    pub fn backward(&self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::dim("relu backward before forward"))?;
        if x.shape() != dy.shape() {
            return Err(Error::dim("relu backward: dy shape mismatch"));
        }
        let mut dx = dy.clone();
        for (g, &xi) in dx.data_mut().iter_mut().zip(x.data()) {
            if xi <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(dx)
    }
}

/// Elementwise logistic sigmoid. Backward uses the cached output.
#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    cached_output: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid { cached_output: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        self.cached_output = Some(y.clone());
        y
    }

    pub fn backward(&self, dy: &Tensor) -> Result<Tensor> {
        let y = self
            .cached_output
            .as_ref()
            .ok_or_else(|| Error::dim("sigmoid backward before forward"))?;
        let mut dx = dy.clone();
        for (g, &yi) in dx.data_mut().iter_mut().zip(y.data()) {
            *g *= yi * (1.0 - yi);
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let mut relu = Relu::new();
        let y = relu.forward(&Tensor::vector(&[-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_identity_on_positive() {
        let mut relu = Relu::new();
        let x = Tensor::vector(&[0.5, 1.0, 3.0]);
        assert_eq!(relu.forward(&x).data(), x.data());
    }

    #[test]
    fn relu_masks_gradient_at_negative_input() {
        let mut relu = Relu::new();
        relu.forward(&Tensor::vector(&[-1.0]));
        let dx = relu.backward(&Tensor::vector(&[5.0])).unwrap();
        assert_eq!(dx.data(), &[0.0]);
    }

    #[test]
    fn sigmoid_midpoint() {
        let mut s = Sigmoid::new();
        let y = s.forward(&Tensor::vector(&[0.0]));
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        let dx = s.backward(&Tensor::vector(&[1.0])).unwrap();
        assert!((dx.data()[0] - 0.25).abs() < 1e-12);
    }
}
