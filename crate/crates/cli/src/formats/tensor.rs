//! Tensor binary and CSV formats.
//!
//! Binary: a 16-byte header of four little-endian `u32` dims `(n, c, h, w)`
//! followed by `n * c * h * w` little-endian `f64` values in row-major order.
//!
//! CSV: one line per `(n, c)` plane holding its `h * w` values row-major,
//! each printed as the shortest decimal that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use duc_hdc_core::{Shape, Tensor};

use super::{read_file, write_file};
use crate::error::{Error, Result};

const HEADER: usize = 16;

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * t.len());
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER {
        return Err(Error::format("tensor", format!("{} bytes is shorter than the header", bytes.len())));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3))?;
    let body = &bytes[HEADER..];
    if body.len() != 8 * shape.len() {
        return Err(Error::format(
            "tensor",
            format!("shape {shape} needs {} data bytes, found {}", 8 * shape.len(), body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Tensor::from_vec(shape, data)?)
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    write_file(path, &encode(t))
}

pub fn read(path: &Path) -> Result<Tensor> {
    decode(&read_file(path)?)
}

pub fn to_csv(t: &Tensor) -> String {
    let s = t.shape();
    let mut out = String::new();
    for n in 0..s.n {
        for c in 0..s.c {
            let row: Vec<String> = t.plane(n, c).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new((1, 2, 3, 4), 0.5).unwrap();
        let b = encode(&t);
        assert_eq!(b.len(), 16 + 24 * 8);
        assert_eq!(&b[..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(&b[16..24], &0.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_truncated() {
        let t = Tensor::new((1, 1, 2, 2), 1.0).unwrap();
        let b = encode(&t);
        assert!(decode(&b[..b.len() - 1]).is_err());
        assert!(decode(&b[..10]).is_err());
        let mut zero_dim = b.clone();
        zero_dim[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode(&zero_dim).is_err());
    }

    #[test]
    fn csv_rows_per_plane() {
        let t = Tensor::from_vec(Shape::new(1, 2, 1, 2).unwrap(), vec![1.0, 0.1, -2.5, 3.0]).unwrap();
        assert_eq!(to_csv(&t), "1,0.1\n-2.5,3\n");
    }
}
