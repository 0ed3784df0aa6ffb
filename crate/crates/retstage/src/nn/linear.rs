use crate::error::{Error, Result};
use crate::nn::ParamSlot;
use crate::tensor::Tensor;

/// Dense affine layer `y = x W^T + b` with `W` stored `[out x in]`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    pub w: Tensor,
    pub b: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    cached_input: Option<Tensor>,
}

impl LinearLayer {
    /// Uniform init in (-1/sqrt(in_dim), +1/sqrt(in_dim)) for both W and b.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl rand::Rng) -> Self {
        LinearLayer {
            in_dim,
            out_dim,
            w: Tensor::init_uniform(vec![out_dim, in_dim], in_dim, rng),
            b: Tensor::init_uniform(vec![out_dim], in_dim, rng),
            dw: Tensor::zeros(vec![out_dim, in_dim]),
            db: Tensor::zeros(vec![out_dim]),
            cached_input: None,
        }
    }

    pub fn from_parts(w: Tensor, b: Tensor) -> Result<Self> {
        if w.shape().len() != 2 || b.shape().len() != 1 || w.shape()[0] != b.shape()[0] {
            return Err(Error::dim(format!(
                "linear parts mismatch: W {:?} vs b {:?}",
                w.shape(),
                b.shape()
            )));
        }
        let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
        Ok(LinearLayer {
            in_dim,
            out_dim,
            w,
            b,
            dw: Tensor::zeros(vec![out_dim, in_dim]),
            db: Tensor::zeros(vec![out_dim]),
            cached_input: None,
        })
    }

    /// Identity map; requires a square layer. Handy in tests.
    pub fn identity(dim: usize) -> Self {
        let mut w = Tensor::zeros(vec![dim, dim]);
        for i in 0..dim {
            w.set(i, i, 1.0);
        }
        LinearLayer {
            in_dim: dim,
            out_dim: dim,
            w,
            b: Tensor::zeros(vec![dim]),
            dw: Tensor::zeros(vec![dim, dim]),
            db: Tensor::zeros(vec![dim]),
            cached_input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `x` is `[n x in]`; returns `[n x out]` and caches `x` for backward.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.in_dim {
            return Err(Error::dim(format!(
                "linear forward: input has {} cols, layer wants {}",
                x.cols(),
                self.in_dim
            )));
        }
        let n = x.rows();
        let mut y = Tensor::zeros(vec![n, self.out_dim]);
        for i in 0..n {
            let xi = x.row(i);
            let yi = y.row_mut(i);
            for o in 0..self.out_dim {
                let wo = self.w.row(o);
                let mut acc = self.b.data()[o];
                for k in 0..self.in_dim {
                    acc += xi[k] * wo[k];
                }
                yi[o] = acc;
            }
        }
        self.cached_input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates dW, db from `dy` and returns dx. Must follow a `forward`
    /// call with the matching batch.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::dim("linear backward before forward"))?;
        if dy.cols() != self.out_dim || dy.rows() != x.rows() {
            return Err(Error::dim(format!(
                "linear backward: dy is {}x{}, expected {}x{}",
                dy.rows(),
                dy.cols(),
                x.rows(),
                self.out_dim
            )));
        }
        let n = x.rows();
        let mut dx = Tensor::zeros(vec![n, self.in_dim]);
        for i in 0..n {
            let xi = x.row(i);
            let dyi = dy.row(i);
            let dxi = dx.row_mut(i);
            for o in 0..self.out_dim {
                let g = dyi[o];
                if g == 0.0 {
                    continue;
                }
                self.db.data_mut()[o] += g;
                let wo_offset = o * self.in_dim;
                let dwo = &mut self.dw.data_mut()[wo_offset..wo_offset + self.in_dim];
                for k in 0..self.in_dim {
                    dwo[k] += g * xi[k];
                }
                let wo = &self.w.data()[wo_offset..wo_offset + self.in_dim];
                for k in 0..self.in_dim {
                    dxi[k] += g * wo[k];
                }
            }
        }
        Ok(dx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        vec![
            ParamSlot {
                name: "w".to_string(),
                value: &mut self.w,
                grad: &mut self.dw,
            },
            ParamSlot {
                name: "b".to_string(),
                value: &mut self.b,
                grad: &mut self.db,
            },
        ]
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }
}
