use crate::error::{Error, Result};
use crate::nn::ParamSlot;
use crate::tensor::Tensor;

/// Per-row normalization to zero mean / unit variance (population variance),
/// then scale-shift by learned gamma/beta.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    dim: usize,
    pub eps: f64,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
    cache: Option<LnCache>,
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            dim,
            eps: 1e-5,
            gamma: Tensor::filled(vec![dim], 1.0),
            beta: Tensor::zeros(vec![dim]),
            dgamma: Tensor::zeros(vec![dim]),
            dbeta: Tensor::zeros(vec![dim]),
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim {
            return Err(Error::dim(format!(
                "layer_norm: input has {} cols, expected {}",
                x.cols(),
                self.dim
            )));
        }
        let n = x.rows();
        let d = self.dim as f64;
        let mut y = Tensor::zeros(vec![n, self.dim]);
        let mut xhat = Tensor::zeros(vec![n, self.dim]);
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let xi = x.row(i);
            let mean = xi.iter().sum::<f64>() / d;
            let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[i] = inv;
            let xh = xhat.row_mut(i);
            for k in 0..self.dim {
                xh[k] = (xi[k] - mean) * inv;
            }
            let yi = y.row_mut(i);
            for k in 0..self.dim {
                yi[k] = self.gamma.data()[k] * xhat.at(i, k) + self.beta.data()[k];
            }
        }
        self.cache = Some(LnCache { xhat, inv_std });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::dim("layer_norm backward before forward"))?;
        let n = cache.xhat.rows();
        if dy.rows() != n || dy.cols() != self.dim {
            return Err(Error::dim("layer_norm backward: dy shape mismatch"));
        }
        let d = self.dim as f64;
        let mut dx = Tensor::zeros(vec![n, self.dim]);
        for i in 0..n {
            let dyi = dy.row(i);
            let xh = cache.xhat.row(i);
            let inv = cache.inv_std[i];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for k in 0..self.dim {
                let dxhat = dyi[k] * self.gamma.data()[k];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xh[k];
                self.dgamma.data_mut()[k] += dyi[k] * xh[k];
                self.dbeta.data_mut()[k] += dyi[k];
            }
            let dxi = dx.row_mut(i);
            for k in 0..self.dim {
                let dxhat = dyi[k] * self.gamma.data()[k];
                dxi[k] = inv * (dxhat - sum_dxhat / d - xh[k] * sum_dxhat_xhat / d);
            }
        }
        Ok(dx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        vec![
            ParamSlot {
                name: "gamma".to_string(),
                value: &mut self.gamma,
                grad: &mut self.dgamma,
            },
            ParamSlot {
                name: "beta".to_string(),
                value: &mut self.beta,
                grad: &mut self.dbeta,
            },
        ]
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(0.0);
        self.dbeta.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Batch normalization over the batch dimension, per feature column.
/// Train mode uses batch statistics (population variance) and updates the
/// running estimates with momentum; eval mode uses the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    dim: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    mode: NormMode,
}

impl BatchNorm1d {
    pub fn new(dim: usize) -> Self {
        BatchNorm1d {
            dim,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Tensor::filled(vec![dim], 1.0),
            beta: Tensor::zeros(vec![dim]),
            dgamma: Tensor::zeros(vec![dim]),
            dbeta: Tensor::zeros(vec![dim]),
            running_mean: Tensor::zeros(vec![dim]),
            running_var: Tensor::filled(vec![dim], 1.0),
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&mut self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        if x.cols() != self.dim {
            return Err(Error::dim(format!(
                "batch_norm: input has {} cols, expected {}",
                x.cols(),
                self.dim
            )));
        }
        let n = x.rows();
        if mode == NormMode::Train && n < 2 {
            return Err(Error::data(
                "batch_norm train mode needs a batch of at least 2 samples",
            ));
        }
        let nf = n as f64;
        let mut y = Tensor::zeros(vec![n, self.dim]);
        let mut xhat = Tensor::zeros(vec![n, self.dim]);
        let mut inv_std = vec![0.0; self.dim];
        for j in 0..self.dim {
            let (mean, var) = match mode {
                NormMode::Train => {
                    let mut m = 0.0;
                    for i in 0..n {
                        m += x.at(i, j);
                    }
                    m /= nf;
                    let mut v = 0.0;
                    for i in 0..n {
                        let c = x.at(i, j) - m;
                        v += c * c;
                    }
                    v /= nf;
                    self.running_mean.data_mut()[j] =
                        (1.0 - self.momentum) * self.running_mean.data()[j] + self.momentum * m;
                    self.running_var.data_mut()[j] =
                        (1.0 - self.momentum) * self.running_var.data()[j] + self.momentum * v;
                    (m, v)
                }
                NormMode::Eval => (self.running_mean.data()[j], self.running_var.data()[j]),
            };
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[j] = inv;
            for i in 0..n {
                let xh = (x.at(i, j) - mean) * inv;
                xhat.set(i, j, xh);
                y.set(i, j, self.gamma.data()[j] * xh + self.beta.data()[j]);
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::dim("batch_norm backward before forward"))?;
        let n = cache.xhat.rows();
        if dy.rows() != n || dy.cols() != self.dim {
            return Err(Error::dim("batch_norm backward: dy shape mismatch"));
        }
        let nf = n as f64;
        let mut dx = Tensor::zeros(vec![n, self.dim]);
        for j in 0..self.dim {
            let inv = cache.inv_std[j];
            let g = self.gamma.data()[j];
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..n {
                sum_dy += dy.at(i, j);
                sum_dy_xhat += dy.at(i, j) * cache.xhat.at(i, j);
            }
            self.dbeta.data_mut()[j] += sum_dy;
            self.dgamma.data_mut()[j] += sum_dy_xhat;
            for i in 0..n {
                let d = match cache.mode {
                    NormMode::Train => {
                        g * inv
                            * (dy.at(i, j)
                                - sum_dy / nf
                                - cache.xhat.at(i, j) * sum_dy_xhat / nf)
                    }
                    // Running statistics are constants in eval mode.
                    NormMode::Eval => g * inv * dy.at(i, j),
                };
                dx.set(i, j, d);
            }
        }
        Ok(dx)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        vec![
            ParamSlot {
                name: "gamma".to_string(),
                value: &mut self.gamma,
                grad: &mut self.dgamma,
            },
            ParamSlot {
                name: "beta".to_string(),
                value: &mut self.beta,
                grad: &mut self.dbeta,
            },
        ]
    }

    pub fn state_slots(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("running_mean".to_string(), &mut self.running_mean),
            ("running_var".to_string(), &mut self.running_var),
        ]
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(0.0);
        self.dbeta.fill(0.0);
    }
}
