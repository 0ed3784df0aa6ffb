//! Versioned binary model container.
//!
//! Layout: magic `MRNC`, version u32 = 1, model kind u32, strategy tag u32
//! (0 = none), tensor count u32, then per tensor: name length u32 + UTF-8
//! name, ndim u32, dims u32 each, little-endian f32 payload (row-major, the
//! same numeric layout as the embedding container). Holds trainable
//! parameters plus non-trainable state such as batch-norm running statistics.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::Strategy;
use crate::nn::HasParams;
use crate::util;

pub const CKPT_MAGIC: &[u8; 4] = b"MRNC";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tabular,
    Fusion,
    Deferral,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::Tabular => 0,
            ModelKind::Fusion => 1,
            ModelKind::Deferral => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(ModelKind::Tabular),
            1 => Ok(ModelKind::Fusion),
            2 => Ok(ModelKind::Deferral),
            other => Err(Error::format(8, format!("unknown model kind {other}"))),
        }
    }
}

fn strategy_code(strategy: Option<Strategy>) -> u32 {
    match strategy {
        None => 0,
        Some(Strategy::Concat) => 1,
        Some(Strategy::Fc) => 2,
        Some(Strategy::CrossAttention) => 3,
    }
}

fn strategy_from_code(code: u32) -> Result<Option<Strategy>> {
    match code {
        0 => Ok(None),
        1 => Ok(Some(Strategy::Concat)),
        2 => Ok(Some(Strategy::Fc)),
        3 => Ok(Some(Strategy::CrossAttention)),
        other => Err(Error::format(12, format!("unknown strategy tag {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub strategy: Option<Strategy>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Snapshot a model's parameters and state.
    pub fn capture(kind: ModelKind, strategy: Option<Strategy>, model: &mut impl HasParams) -> Self {
        let mut tensors = Vec::new();
        for slot in model.param_slots() {
            tensors.push(NamedTensor {
                name: slot.name,
                shape: slot.value.shape().to_vec(),
                data: slot.value.data().iter().map(|&v| v as f32).collect(),
            });
        }
        for (name, tensor) in model.state_slots() {
            tensors.push(NamedTensor {
                name: format!("state.{name}"),
                shape: tensor.shape().to_vec(),
                data: tensor.data().iter().map(|&v| v as f32).collect(),
            });
        }
        Checkpoint {
            kind,
            strategy,
            tensors,
        }
    }

    /// Copy stored tensors back into a freshly constructed model. Names and
    /// shapes must match the model exactly.
    pub fn restore(&self, model: &mut impl HasParams) -> Result<()> {
        let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut fill = |name: String, value: &mut crate::tensor::Tensor| -> Result<()> {
            let stored = by_name.remove(name.as_str()).ok_or_else(|| {
                Error::data(format!("checkpoint is missing tensor '{name}'"))
            })?;
            if stored.shape != value.shape() {
                return Err(Error::dim(format!(
                    "checkpoint tensor '{name}' has shape {:?}, model wants {:?}",
                    stored.shape,
                    value.shape()
                )));
            }
            for (dst, &src) in value.data_mut().iter_mut().zip(&stored.data) {
                *dst = f64::from(src);
            }
            Ok(())
        };
        for slot in model.param_slots() {
            fill(slot.name, slot.value)?;
        }
        for (name, tensor) in model.state_slots() {
            fill(format!("state.{name}"), tensor)?;
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::data(format!(
                "checkpoint has unexpected tensor '{extra}'"
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CKPT_MAGIC);
        bytes.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&self.kind.code().to_le_bytes());
        bytes.extend_from_slice(&strategy_code(self.strategy).to_le_bytes());
        bytes.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
            bytes.extend_from_slice(name);
            bytes.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                bytes.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        util::atomic_write(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let bytes = util::read_bytes(path)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
            if *pos + len > bytes.len() {
                return Err(Error::format(
                    bytes.len() as u64,
                    format!("checkpoint truncated at byte {}", *pos),
                ));
            }
            let slice = &bytes[*pos..*pos + len];
            *pos += len;
            Ok(slice)
        };
        let u32_at = |pos: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };

        if take(&mut pos, 4)? != CKPT_MAGIC {
            return Err(Error::format(0, "bad checkpoint magic"));
        }
        let version = u32_at(&mut pos)?;
        if version != CKPT_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_code(u32_at(&mut pos)?)?;
        let strategy = strategy_from_code(u32_at(&mut pos)?)?;
        let count = u32_at(&mut pos)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u32_at(&mut pos)? as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| Error::format(pos as u64, "tensor name is not UTF-8"))?;
            let ndim = u32_at(&mut pos)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u32_at(&mut pos)? as usize);
            }
            let values: usize = shape.iter().product();
            let mut data = Vec::with_capacity(values);
            for chunk in take(&mut pos, values * 4)?.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            tensors.push(NamedTensor { name, shape, data });
        }
        if pos != bytes.len() {
            return Err(Error::format(
                pos as u64,
                format!("{} trailing bytes after checkpoint", bytes.len() - pos),
            ));
        }
        Ok(Checkpoint {
            kind,
            strategy,
            tensors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deferral::ContrastiveNet;
    use crate::fusion::FusionModel;
    use crate::nn::NormMode;
    use crate::tensor::Tensor;

    #[test]
    fn fusion_round_trip_preserves_outputs() {
        let mut model = FusionModel::new(Strategy::CrossAttention, 42);
        let ckpt = Checkpoint::capture(ModelKind::Fusion, Some(model.strategy), &mut model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.write(&path).unwrap();
        let loaded = Checkpoint::read(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.strategy, Some(Strategy::CrossAttention));

        let mut restored = FusionModel::new(Strategy::CrossAttention, 7);
        loaded.restore(&mut restored).unwrap();
        // after restore, both models produce f32-identical parameters, so
        // identical outputs on the same inputs
        let img = Tensor::filled(vec![2, 512], 0.3);
        let tab = Tensor::matrix(&[vec![0.1, -0.4, 1.0, 0.0], vec![1.0, 0.2, -0.2, 0.5]]).unwrap();
        let a = {
            let mut m = FusionModel::new(Strategy::CrossAttention, 99);
            loaded.restore(&mut m).unwrap();
            m.forward(&img, &tab).unwrap()
        };
        let b = restored.forward(&img, &tab).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn deferral_checkpoint_includes_batchnorm_state() {
        let mut net = ContrastiveNet::new(5);
        // move the running stats away from their init
        let x = Tensor::new(
            vec![4, 1024],
            (0..4 * 1024).map(|i| (i % 13) as f64 * 0.1).collect(),
        )
        .unwrap();
        net.project(&x, NormMode::Train).unwrap();
        let ckpt = Checkpoint::capture(ModelKind::Deferral, None, &mut net);
        assert!(ckpt.tensors.iter().any(|t| t.name == "state.bn.running_mean"));

        let mut restored = ContrastiveNet::new(6);
        ckpt.restore(&mut restored).unwrap();
        let proj_a = net.project(&x, NormMode::Eval).unwrap();
        let proj_b = restored.project(&x, NormMode::Eval).unwrap();
        for (a, b) in proj_a.data().iter().zip(proj_b.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_strategy_restore_fails() {
        let mut model = FusionModel::new(Strategy::Fc, 1);
        let ckpt = Checkpoint::capture(ModelKind::Fusion, Some(Strategy::Fc), &mut model);
        let mut wrong = FusionModel::new(Strategy::Concat, 1);
        assert!(ckpt.restore(&mut wrong).is_err());
    }

    #[test]
    fn corrupt_magic_and_truncation_are_format_errors() {
        let mut model = FusionModel::new(Strategy::Concat, 1);
        let ckpt = Checkpoint::capture(ModelKind::Fusion, Some(Strategy::Concat), &mut model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'Z';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Format { .. })));

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Format { .. })));
    }
}
