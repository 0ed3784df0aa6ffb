//! Binary embedding container.
//!
//! Layout: magic `MRNE`, version u32 = 1, rows u32, cols u32, then
//! rows*cols little-endian f32 values, row-major. Sample ids live in a text
//! sidecar, one id per line, row order. Round-trips are bit-exact.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util;

pub const EMBED_MAGIC: &[u8; 4] = b"MRNE";
pub const EMBED_VERSION: u32 = 1;

/// Image embeddings carry 512 columns; fused embeddings carry 1024.
pub const IMAGE_EMBED_DIM: usize = 512;
pub const FUSED_EMBED_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    cols: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingFile {
    pub fn new(cols: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::dim("embedding cols must be positive"));
        }
        if ids.len() * cols != data.len() {
            return Err(Error::dim(format!(
                "{} ids x {cols} cols != {} values",
                ids.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding payload".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate sample id '{id}'")));
            }
        }
        Ok(EmbeddingFile {
            cols,
            ids,
            data,
            index,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row for a sample id, or an unknown-id error.
    pub fn lookup(&self, id: &str) -> Result<&[f32]> {
        self.index
            .get(id)
            .map(|&i| self.row(i))
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Whole payload as an f64 tensor `[rows x cols]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.rows(), self.cols],
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("lengths agree by construction")
    }

    /// Conventional sidecar path: same file name with `.ids` appended.
    pub fn sidecar_path(bin: &Path) -> std::path::PathBuf {
        let mut os = bin.as_os_str().to_owned();
        os.push(".ids");
        std::path::PathBuf::from(os)
    }

    pub fn write(&self, bin: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + self.data.len() * 4);
        bytes.extend_from_slice(EMBED_MAGIC);
        bytes.extend_from_slice(&EMBED_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        util::atomic_write(bin, &bytes)?;
        let mut ids_text = String::new();
        for id in &self.ids {
            ids_text.push_str(id);
            ids_text.push('\n');
        }
        util::atomic_write(&Self::sidecar_path(bin), ids_text.as_bytes())
    }

    pub fn read(bin: &Path) -> Result<Self> {
        let bytes = util::read_bytes(bin)?;
        if bytes.len() < 16 {
            return Err(Error::format(
                bytes.len() as u64,
                "file shorter than the 16-byte header",
            ));
        }
        if &bytes[0..4] != EMBED_MAGIC {
            return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != EMBED_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let values = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(8, "rows*cols overflows"))?;
        let payload = values
            .checked_mul(4)
            .ok_or_else(|| Error::format(8, "payload size overflows"))?;
        if bytes.len() != 16 + payload {
            return Err(Error::format(
                bytes.len() as u64,
                format!(
                    "payload truncated: header wants {} bytes, file has {}",
                    16 + payload,
                    bytes.len()
                ),
            ));
        }
        let mut data = Vec::with_capacity(values);
        for chunk in bytes[16..].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }

        let ids_path = Self::sidecar_path(bin);
        let ids_text = util::read_string(&ids_path)?;
        let ids: Vec<String> = ids_text.lines().map(str::to_string).collect();
        if ids.len() != rows {
            return Err(Error::data(format!(
                "sidecar {} has {} ids, embedding file has {rows} rows",
                ids_path.display(),
                ids.len()
            )));
        }
        EmbeddingFile::new(cols, ids, data)
    }
}
