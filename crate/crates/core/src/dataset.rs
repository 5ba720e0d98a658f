//! Binary channel dataset container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! u32                 header length in bytes
//! [u8; header_len]    UTF-8 JSON header (DatasetHeader)
//! records × {
//!     h_d  K×N  complex as interleaved (re, im) f32, row-major
//!     G    M×N  complex as interleaved (re, im) f32, row-major
//!     h_r  K×M  complex as interleaved (re, im) f32, row-major
//!     blocked  K × u8 (0 = LoS, 1 = NLoS)
//! }
//! ```

use std::io::{self, Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelRealization;
use crate::C64;

pub const DATASET_FORMAT: &str = "ris-channel-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("record {index} has dimensions inconsistent with the header")]
    Shape { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub records: usize,
    /// First environment seed; record i was drawn from seed `seed_start + i`.
    pub seed_start: u64,
}

impl DatasetHeader {
    pub fn new(n: usize, m: usize, k: usize, records: usize, seed_start: u64) -> Self {
        Self { format: DATASET_FORMAT.into(), version: DATASET_VERSION, n, m, k, records, seed_start }
    }

    /// Bytes per record.
    pub fn record_bytes(&self) -> usize {
        8 * (self.k * self.n + self.m * self.n + self.k * self.m) + self.k
    }

    fn encoded(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("header serializes")
    }

    /// Exact file size for this header.
    pub fn file_bytes(&self) -> usize {
        4 + self.encoded().len() + self.records * self.record_bytes()
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<C64>) -> io::Result<()> {
    for z in m.iter() {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> io::Result<Array2<C64>> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    let vals: Vec<C64> = buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), vals).expect("buffer sized from dims"))
}

pub fn write_dataset<W: Write>(
    w: &mut W,
    header: &DatasetHeader,
    records: &[ChannelRealization],
) -> Result<(), DatasetError> {
    if header.records != records.len() {
        return Err(DatasetError::Header(format!(
            "header declares {} records, {} supplied",
            header.records,
            records.len()
        )));
    }
    let bytes = header.encoded();
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(&bytes)?;
    for (index, rec) in records.iter().enumerate() {
        if rec.h_d.dim() != (header.k, header.n)
            || rec.g.dim() != (header.m, header.n)
            || rec.h_r.dim() != (header.k, header.m)
            || rec.blocked.len() != header.k
        {
            return Err(DatasetError::Shape { index });
        }
        write_matrix(w, &rec.h_d)?;
        write_matrix(w, &rec.g)?;
        write_matrix(w, &rec.h_r)?;
        let flags: Vec<u8> = rec.blocked.iter().map(|&b| u8::from(b)).collect();
        w.write_all(&flags)?;
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<DatasetHeader, DatasetError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let header: DatasetHeader =
        serde_json::from_slice(&buf).map_err(|e| DatasetError::Header(e.to_string()))?;
    if header.format != DATASET_FORMAT {
        return Err(DatasetError::Header(format!("unknown format {:?}", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(DatasetError::Header(format!("unsupported version {}", header.version)));
    }
    Ok(header)
}

pub fn read_dataset<R: Read>(
    r: &mut R,
) -> Result<(DatasetHeader, Vec<ChannelRealization>), DatasetError> {
    let header = read_header(r)?;
    let mut records = Vec::with_capacity(header.records);
    for _ in 0..header.records {
        let h_d = read_matrix(r, header.k, header.n)?;
        let g = read_matrix(r, header.m, header.n)?;
        let h_r = read_matrix(r, header.k, header.m)?;
        let mut flags = vec![0u8; header.k];
        r.read_exact(&mut flags)?;
        records.push(ChannelRealization { h_d, g, h_r, blocked: flags.iter().map(|&f| f != 0).collect() });
    }
    Ok((header, records))
}

/// Long-format CSV: `record,link,row,col,re,im` plus one `blocked` row per user.
pub fn write_dataset_csv<W: Write>(w: &mut W, records: &[ChannelRealization]) -> io::Result<()> {
    writeln!(w, "record,link,row,col,re,im")?;
    for (i, rec) in records.iter().enumerate() {
        for (name, m) in [("h_d", &rec.h_d), ("g", &rec.g), ("h_r", &rec.h_r)] {
            for ((r, c), z) in m.indexed_iter() {
                writeln!(w, "{i},{name},{r},{c},{},{}", z.re as f32, z.im as f32)?;
            }
        }
        for (u, &b) in rec.blocked.iter().enumerate() {
            writeln!(w, "{i},blocked,{u},0,{},0", u8::from(b))?;
        }
    }
    Ok(())
}
