//! Named-tensor checkpoint container.
//!
//! Layout: u32 LE header length, JSON header, then every tensor's data as
//! f32 LE in header order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::LearnError;

pub const CHECKPOINT_FORMAT: &str = "ris-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint kind {found:?}, expected {expected:?}")]
    Kind { expected: String, found: String },
    #[error("tensor {0:?} missing from checkpoint")]
    Missing(String),
    #[error(transparent)]
    Shape(#[from] LearnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_array2(name: impl Into<String>, a: &Array2<f64>) -> Self {
        Self { name: name.into(), shape: a.shape().to_vec(), data: a.iter().map(|&x| x as f32).collect() }
    }

    pub fn from_array1(name: impl Into<String>, a: &Array1<f64>) -> Self {
        Self { name: name.into(), shape: vec![a.len()], data: a.iter().map(|&x| x as f32).collect() }
    }

    pub fn to_array2(&self) -> Result<Array2<f64>, LearnError> {
        if self.shape.len() != 2 {
            return Err(LearnError::Dimension { what: "tensor rank", expected: 2, got: self.shape.len() });
        }
        let data = self.data.iter().map(|&x| x as f64).collect();
        Array2::from_shape_vec((self.shape[0], self.shape[1]), data).map_err(|_| LearnError::Dimension {
            what: "tensor element count",
            expected: self.shape[0] * self.shape[1],
            got: self.data.len(),
        })
    }

    pub fn to_array1(&self) -> Result<Array1<f64>, LearnError> {
        if self.shape.len() != 1 || self.shape[0] != self.data.len() {
            return Err(LearnError::Dimension { what: "tensor rank-1 length", expected: self.data.len(), got: self.shape.iter().product() });
        }
        Ok(self.data.iter().map(|&x| x as f64).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value, tensors: Vec<Tensor>) -> Self {
        Self { kind: kind.into(), meta, tensors }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind { expected: kind.into(), found: self.kind.clone() })
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        };
        let bytes = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(&bytes)?;
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(CheckpointError::Header(format!("tensor {:?} shape does not match data", t.name)));
            }
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut buf)?;
        let header: Header = serde_json::from_slice(&buf).map_err(|e| CheckpointError::Header(e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Header(format!("unsupported {} v{}", header.format, header.version)));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            r.read_exact(&mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
        }
        Ok(Self { kind: header.kind, meta: header.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_preserves_everything() {
        let ck = Checkpoint::new(
            "test",
            serde_json::json!({"d_model": 4, "note": "x"}),
            vec![
                Tensor::from_array2("w", &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]]),
                Tensor::from_array1("b", &array![-1.0, 0.25]),
            ],
        );
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.get("w").unwrap().to_array2().unwrap()[[1, 2]], 6.5);
        assert!(back.get("missing").is_err());
        assert!(back.expect_kind("other").is_err());
    }

    #[test]
    fn truncation_and_garbage_fail() {
        let ck = Checkpoint::new("t", serde_json::Value::Null, vec![Tensor::from_array1("b", &array![1.0, 2.0])]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
        let junk = [3u8, 0, 0, 0, b'a', b'b', b'c'];
        assert!(matches!(Checkpoint::read_from(&mut junk.as_slice()), Err(CheckpointError::Header(_))));
    }

    #[test]
    fn rank_mismatch_is_reported() {
        let t = Tensor::from_array1("b", &array![1.0]);
        assert!(t.to_array2().is_err());
    }
}
