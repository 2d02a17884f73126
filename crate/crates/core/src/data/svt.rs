//! The SVT tensor container.
//!
//! ```text
//! bytes 0..4   magic "SVT1"
//! byte  4      dtype (1 = f32, 2 = u8)
//! byte  5      ndim
//! bytes 6..12  reserved, zero
//! then         ndim x u64 little-endian dims
//! then         row-major little-endian payload, no padding
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const MAGIC: &[u8; 4] = b"SVT1";
const HEADER_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    U8 = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SvtTensor {
    F32(Tensor<f32>),
    U8 { shape: Vec<usize>, data: Vec<u8> },
}

impl SvtTensor {
    pub fn dtype(&self) -> DType {
        match self {
            SvtTensor::F32(_) => DType::F32,
            SvtTensor::U8 { .. } => DType::U8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            SvtTensor::F32(t) => t.shape(),
            SvtTensor::U8 { shape, .. } => shape,
        }
    }

    pub fn into_f32(self) -> Result<Tensor<f32>> {
        match self {
            SvtTensor::F32(t) => Ok(t),
            SvtTensor::U8 { .. } => Err(Error::Format {
                offset: 4,
                message: "expected f32 payload, found u8".into(),
            }),
        }
    }
}

pub fn encode(t: &SvtTensor) -> Result<Vec<u8>> {
    let shape = t.shape();
    let ndim = u8::try_from(shape.len())
        .map_err(|_| Error::shape(format!("rank {} too large for SVT", shape.len())))?;
    let payload = match t {
        SvtTensor::F32(x) => x.numel() * 4,
        SvtTensor::U8 { data, .. } => data.len(),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * shape.len() + payload);
    out.extend_from_slice(MAGIC);
    out.push(t.dtype() as u8);
    out.push(ndim);
    out.extend_from_slice(&[0u8; 6]);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match t {
        SvtTensor::F32(x) => {
            for v in x.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        SvtTensor::U8 { shape, data } => {
            if shape.iter().product::<usize>() != data.len() {
                return Err(Error::shape("u8 payload does not match its shape"));
            }
            out.extend_from_slice(data);
        }
    }
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<SvtTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    let dtype = match bytes[4] {
        1 => DType::F32,
        2 => DType::U8,
        other => return Err(format_err(4, format!("unknown dtype code {other}"))),
    };
    let ndim = bytes[5] as usize;
    if let Some(i) = bytes[6..12].iter().position(|&b| b != 0) {
        return Err(format_err(6 + i, "reserved header byte is not zero"));
    }
    let dims_end = HEADER_LEN + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(format_err(bytes.len(), "truncated dimension table"));
    }
    let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(HEADER_LEN, "dimension product overflows"))?;
    let width = match dtype {
        DType::F32 => 4,
        DType::U8 => 1,
    };
    let payload = &bytes[dims_end..];
    if Some(payload.len()) != count.checked_mul(width) {
        return Err(format_err(
            dims_end,
            format!(
                "payload holds {} bytes but dims {shape:?} need {}",
                payload.len(),
                count.saturating_mul(width)
            ),
        ));
    }
    Ok(match dtype {
        DType::F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect();
            SvtTensor::F32(Tensor::new(shape, data)?)
        }
        DType::U8 => SvtTensor::U8 {
            shape,
            data: payload.to_vec(),
        },
    })
}

pub fn write_svt(path: &Path, t: &SvtTensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}

pub fn read_svt(path: &Path) -> Result<SvtTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Writes an f32 tensor.
pub fn write_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    write_svt(path, &SvtTensor::F32(t.clone()))
}

/// Reads an f32 tensor.
pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    read_svt(path)?.into_f32()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn f32_roundtrip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = Tensor::<f32>::randn(&[17, 32, 48, 3], 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.svt");
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&SvtTensor::U8 {
            shape: vec![2, 3],
            data: vec![1, 2, 3, 4, 5, 6],
        })
        .unwrap();
        assert_eq!(&bytes[..4], b"SVT1");
        assert_eq!(bytes[4], 2);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..12], &[0; 6]);
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &3u64.to_le_bytes());
        assert_eq!(&bytes[28..], &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&SvtTensor::F32(Tensor::zeros(&[2]))).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn payload_mismatch() {
        let mut bytes = encode(&SvtTensor::F32(Tensor::zeros(&[2, 2]))).unwrap();
        bytes.truncate(bytes.len() - 1);
        match decode(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 12 + 16),
            other => panic!("{other:?}"),
        }
        let mut bytes = encode(&SvtTensor::F32(Tensor::zeros(&[2, 2]))).unwrap();
        bytes.extend_from_slice(&[0; 4]);
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_and_reserved() {
        assert!(matches!(decode(b"SVT1"), Err(Error::Format { offset: 4, .. })));
        let mut bytes = encode(&SvtTensor::F32(Tensor::zeros(&[1]))).unwrap();
        bytes[9] = 1;
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 9, .. })));
        let mut bytes = encode(&SvtTensor::F32(Tensor::zeros(&[1]))).unwrap();
        bytes[4] = 7;
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    proptest! {
        #[test]
        fn u8_roundtrip(dims in proptest::collection::vec(1usize..5, 0..4), seed in any::<u8>()) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let t = SvtTensor::U8 { shape: dims, data };
            prop_assert_eq!(decode(&encode(&t).unwrap()).unwrap(), t);
        }
    }
}
