//! Model checkpoint file.
//!
//! Layout, little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `AGMXCKPT` |
//! | 4 | u32 format version (1) |
//! | 8 | u64 run seed |
//! | 4 × 3 | u32 features F, hidden H, classes C |
//! | 8 | f64 dropout |
//! | 4·F·H | f32 `w0`, row-major |
//! | 4·H·C | f32 `w1`, row-major |

use std::fs;
use std::path::Path;

use super::GcnModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"AGMXCKPT";
const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8 + 12 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub model: GcnModel<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out =
            Vec::with_capacity(HEADER + 4 * (m.w0.as_slice().len() + m.w1.as_slice().len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for d in [m.num_features(), m.hidden(), m.num_classes()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&m.dropout.to_le_bytes());
        for v in m.w0.as_slice().iter().chain(m.w1.as_slice()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: String| Error::Corruption {
            file: "checkpoint".into(),
            msg,
        };
        if bytes.len() < HEADER {
            return Err(corrupt(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format {
                file: "checkpoint".into(),
                msg: "bad magic".into(),
            });
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Format {
                file: "checkpoint".into(),
                msg: format!("unsupported version {version}"),
            });
        }
        let seed = u64::from_le_bytes(bytes[12..20].try_into().expect("8"));
        let (f, h, c) = (
            u32_at(20) as usize,
            u32_at(24) as usize,
            u32_at(28) as usize,
        );
        let dropout = f64::from_le_bytes(bytes[32..40].try_into().expect("8"));
        let want = HEADER + 4 * (f * h + h * c);
        if bytes.len() != want {
            return Err(corrupt(format!(
                "expected {want} bytes, found {}",
                bytes.len()
            )));
        }
        let floats: Vec<f32> = bytes[HEADER..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4")))
            .collect();
        let (a, b) = floats.split_at(f * h);
        let model = GcnModel::from_weights(
            Matrix::from_vec(f, h, a.to_vec())?,
            Matrix::from_vec(h, c, b.to_vec())?,
            dropout,
        )?;
        Ok(Self { seed, model })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
