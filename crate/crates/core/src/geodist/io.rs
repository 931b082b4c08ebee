//! Dense grid arrays: binary layout is a little-endian `u64` header length,
//! a JSON header, then the row-major `f64` payload in little-endian order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GridDomain;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("payload has {got} values, header announces {expected}")]
    Payload { expected: usize, got: usize },
    #[error("grid of {0} points is too large for CSV export")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    dtype: String,
    endianness: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridArray {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub data: Vec<f64>,
}

/// Largest grid written by [`GridArray::to_csv`].
pub const CSV_LIMIT: usize = 1 << 20;

impl GridArray {
    pub fn from_field(dom: &GridDomain, data: Vec<f64>) -> Self {
        Self {
            dims: dom.shape().to_vec(),
            spacing: dom.spacing(),
            origin: dom.bounds().iter().map(|b| b.0).collect(),
            data,
        }
    }

    /// Masks are stored as 0.0 / 1.0.
    pub fn from_mask(dom: &GridDomain, mask: &[bool]) -> Self {
        Self::from_field(dom, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), IoError> {
        let header = Header {
            dims: self.dims.clone(),
            spacing: self.spacing.clone(),
            origin: self.origin.clone(),
            dtype: "float64".into(),
            endianness: "little".into(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| IoError::Header(e.to_string()))?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, IoError> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(IoError::Header(format!("header length {len} is implausible")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json).map_err(|e| IoError::Header(e.to_string()))?;
        if h.dtype != "float64" || h.endianness != "little" {
            return Err(IoError::Header(format!("unsupported {} / {}", h.dtype, h.endianness)));
        }
        if h.spacing.len() != h.dims.len() || h.origin.len() != h.dims.len() {
            return Err(IoError::Header("dims, spacing and origin differ in length".into()));
        }
        let expected: usize = h.dims.iter().product();
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != 8 * expected {
            return Err(IoError::Payload { expected, got: raw.len() / 8 });
        }
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { dims: h.dims, spacing: h.spacing, origin: h.origin, data })
    }

    /// One row per grid point: coordinates then value.
    pub fn to_csv(&self) -> Result<String, IoError> {
        if self.data.len() > CSV_LIMIT {
            return Err(IoError::TooLarge(self.data.len()));
        }
        let d = self.dims.len();
        let mut out: String = (1..=d).map(|i| format!("x{i},")).collect();
        out.push_str("value\n");
        for (idx, v) in self.data.iter().enumerate() {
            let mut rest = idx;
            let mut m = vec![0; d];
            for a in (0..d).rev() {
                m[a] = rest % self.dims[a];
                rest /= self.dims[a];
            }
            for a in 0..d {
                out.push_str(&format!("{},", self.origin[a] + m[a] as f64 * self.spacing[a]));
            }
            out.push_str(&format!("{v}\n"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dom = GridDomain::new(vec![(0.0, 1.0), (-1.0, 1.0)], vec![3, 4]).unwrap();
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        let arr = GridArray::from_field(&dom, data);
        let bytes = arr.to_bytes();
        let back = GridArray::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, arr);
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 8 + hlen + 96);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dom = GridDomain::new(vec![(0.0, 1.0)], vec![4]).unwrap();
        let bytes = GridArray::from_mask(&dom, &[true, false, true, true]).to_bytes();
        let cut = &bytes[..bytes.len() - 8];
        assert!(matches!(GridArray::read_from(&mut &cut[..]), Err(IoError::Payload { .. })));
    }

    #[test]
    fn csv_rows() {
        let dom = GridDomain::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![2, 3]).unwrap();
        let csv = GridArray::from_field(&dom, (0..6).map(f64::from).collect()).to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x1,x2,value");
        assert_eq!(lines[2], "0,1,1");
        assert_eq!(lines[6], "1,2,5");
    }
}
