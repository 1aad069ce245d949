//! Binary tensor container and JSON debug dump.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BCT1"
//! 4       1     kind: 0 = real64, 1 = fixed
//! 5       1     bitwidth (64 for real64)
//! 6       1     fraction bits (0 for real64)
//! 7       1     reserved, must be 0
//! 8       4*4   dims n, c, h, w as u32
//! 24      ..    payload: f64 per value (real64) or i16 per value (fixed)
//! ```
//!
//! Fixed payload values are raw codes; 4/8/16-bit formats all serialize as
//! i16. Values are validated against the declared format on read.

use std::io::{Read, Write};
use std::path::Path;

use crate::format::ScalarFormat;
use crate::tensor::{Dims, Tensor4D, TensorData};
use crate::TensorError;

const MAGIC: &[u8; 4] = b"BCT1";

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor4D) -> Result<(), TensorError> {
    w.write_all(MAGIC)?;
    let (kind, bits, frac) = match t.format {
        ScalarFormat::Real64 => (0u8, 64u8, 0u8),
        ScalarFormat::Fixed { bits, frac } => (1, bits as u8, frac as u8),
    };
    w.write_all(&[kind, bits, frac, 0])?;
    for d in [t.dims.n, t.dims.c, t.dims.h, t.dims.w] {
        let d = u32::try_from(d).map_err(|_| TensorError::Container("dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    match &t.data {
        TensorData::Real(values) => {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        TensorData::Fixed(raw) => {
            for &v in raw {
                let v = i16::try_from(v)
                    .map_err(|_| TensorError::Container(format!("raw value {v} exceeds i16 payload")))?;
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor4D, TensorError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Container("bad magic".into()));
    }
    let mut head = [0u8; 4];
    r.read_exact(&mut head)?;
    if head[3] != 0 {
        return Err(TensorError::Container("reserved header byte must be 0".into()));
    }
    let format = match head[0] {
        0 => {
            if head[1] != 64 || head[2] != 0 {
                return Err(TensorError::Container("real64 header must be (64, 0)".into()));
            }
            ScalarFormat::Real64
        }
        1 => ScalarFormat::fixed(u32::from(head[1]), u32::from(head[2]))?,
        k => return Err(TensorError::Container(format!("unknown kind byte {k}"))),
    };
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    let dims = Dims::new(dims[0], dims[1], dims[2], dims[3]);
    let len = dims.len();
    let data = match format {
        ScalarFormat::Real64 => {
            let mut values = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            TensorData::Real(values)
        }
        ScalarFormat::Fixed { .. } => {
            let mut raw = Vec::with_capacity(len);
            let mut buf = [0u8; 2];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                raw.push(i64::from(i16::from_le_bytes(buf)));
            }
            TensorData::Fixed(raw)
        }
    };
    Tensor4D::new(dims, format, data)
}

pub fn save_tensor(path: &Path, t: &Tensor4D) -> Result<(), TensorError> {
    let file = std::fs::File::create(path)?;
    write_tensor(std::io::BufWriter::new(file), t)
}

pub fn load_tensor(path: &Path) -> Result<Tensor4D, TensorError> {
    let file = std::fs::File::open(path)?;
    read_tensor(std::io::BufReader::new(file))
}

/// Human-readable dump of the same content.
pub fn tensor_to_json(t: &Tensor4D) -> Result<String, TensorError> {
    Ok(serde_json::to_string_pretty(t)?)
}

pub fn tensor_from_json(s: &str) -> Result<Tensor4D, TensorError> {
    let t: Tensor4D = serde_json::from_str(s)?;
    t.validate_range()?;
    if t.data.len() != t.dims.len() {
        return Err(TensorError::LengthMismatch { expected: t.dims.len(), actual: t.data.len() });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_fixed_and_real() {
        let f = ScalarFormat::fixed(8, 4).unwrap();
        let t = Tensor4D::seeded_random(Dims::new(2, 3, 4, 5), f, 9);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 24 + 2 * t.dims.len());
        let back = read_tensor(buf.as_slice()).unwrap();
        assert_eq!(back, t);

        let r = Tensor4D::seeded_random(Dims::new(1, 1, 3, 3), ScalarFormat::Real64, 10);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &r).unwrap();
        assert_eq!(read_tensor(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn rejects_corrupt_headers() {
        let t = Tensor4D::zeros(Dims::new(1, 1, 2, 2), ScalarFormat::Real64);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        buf[0] = b'X';
        assert!(read_tensor(buf.as_slice()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = ScalarFormat::fixed(4, 2).unwrap();
        let t = Tensor4D::seeded_random(Dims::new(1, 2, 2, 2), f, 3);
        let s = tensor_to_json(&t).unwrap();
        assert_eq!(tensor_from_json(&s).unwrap(), t);
    }
}
