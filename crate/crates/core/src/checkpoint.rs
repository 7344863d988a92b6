//! Binary checkpoint of weights, momentum buffers and the completed epoch.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0   8 bytes   magic "QNNCKPT\0"
//! 8   u32       format version (1)
//! 12  u64       completed epochs
//! 20  u32       number of weight matrices K
//! 24  K x (u32 rows, u32 cols)
//!     u8        1 if momentum buffers follow the weights, else 0
//!     f64 x Σ rows·cols   weights, matrix by matrix, row-major
//!     f64 x Σ rows·cols   momentum buffers (only if flagged)
//!     32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Values are stored as `f64` whatever the in-memory scalar, so `f32` runs
//! round-trip exactly.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Matrix, NetworkParams};
use crate::scalar::Scalar;
use crate::training::{OptimizerState, TrainState};

pub const MAGIC: &[u8; 8] = b"QNNCKPT\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: NetworkParams<T>,
    pub opt: Option<OptimizerState<T>>,
    pub epoch: usize,
}

impl<T: Scalar> From<TrainState<T>> for Checkpoint<T> {
    fn from(state: TrainState<T>) -> Self {
        Self { params: state.params, opt: Some(state.opt), epoch: state.epoch }
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_state(state: &TrainState<T>) -> Self {
        state.clone().into()
    }

    /// Train state to resume from; missing momentum buffers restart at zero.
    pub fn into_state(self) -> TrainState<T> {
        let opt = self.opt.unwrap_or_else(|| OptimizerState::zeros_like(&self.params));
        TrainState { params: self.params, opt, epoch: self.epoch }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let weights = self.params.weights();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
        for w in weights {
            out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
        }
        out.push(u8::from(self.opt.is_some()));
        let mut put = |matrices: &[Matrix<T>]| {
            for x in matrices.iter().flat_map(|m| m.data()) {
                out.extend_from_slice(&x.widen().to_le_bytes());
            }
        };
        put(weights);
        if let Some(opt) = &self.opt {
            put(&opt.velocity);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CheckpointCorrupt(msg.to_string());
        if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut reader = Reader { bytes: body, pos: MAGIC.len() };
        let version = reader.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointCorrupt(format!("unsupported version {version}")));
        }
        let epoch = reader.u64()? as usize;
        let count = reader.u32()? as usize;
        let shapes = (0..count)
            .map(|_| Ok((reader.u32()? as usize, reader.u32()? as usize)))
            .collect::<Result<Vec<_>>>()?;
        let has_velocity = match reader.take(1)?[0] {
            0 => false,
            1 => true,
            _ => return Err(corrupt("bad optimizer flag")),
        };
        let read_matrices = |reader: &mut Reader| {
            shapes
                .iter()
                .map(|&(rows, cols)| {
                    let data = (0..rows * cols).map(|_| reader.f64().map(T::of)).collect::<Result<Vec<T>>>()?;
                    Matrix::from_vec(rows, cols, data)
                })
                .collect::<Result<Vec<_>>>()
        };
        let weights = read_matrices(&mut reader)?;
        let velocity = if has_velocity { Some(read_matrices(&mut reader)?) } else { None };
        if reader.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let params = NetworkParams::new(weights).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
        Ok(Self { params, opt: velocity.map(|velocity| OptimizerState { velocity }), epoch })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&end| end <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CheckpointCorrupt("unexpected end of data".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
