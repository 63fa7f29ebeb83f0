//! Binary dump format for fields.
//!
//! ```text
//! offset  size        content
//! 0       8           magic  b"QCLKARR\0"
//! 8       4           schema version, u32 little-endian
//! 12      1           dtype tag: 1 = complex128, 2 = float64
//! 13      3           zero padding
//! 16      4           ndim, u32 little-endian
//! 20      8 * ndim    dims, u64 little-endian, outermost first
//! ...                 body, row-major little-endian f64; complex values as (re, im)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::{ScalarField2D, SpinorField2D, WaveFunction1D, C64};

pub const MAGIC: &[u8; 8] = b"QCLKARR\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    Complex128 = 1,
    Float64 = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Complex(Vec<C64>),
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub dims: Vec<u64>,
    pub data: ArrayData,
}

impl ArrayFile {
    pub fn complex(dims: Vec<u64>, data: Vec<C64>) -> Self {
        Self {
            dims,
            data: ArrayData::Complex(data),
        }
    }

    pub fn real(dims: Vec<u64>, data: Vec<f64>) -> Self {
        Self {
            dims,
            data: ArrayData::Real(data),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            ArrayData::Complex(_) => DType::Complex128,
            ArrayData::Real(_) => DType::Float64,
        }
    }

    fn len(&self) -> usize {
        match &self.data {
            ArrayData::Complex(v) => v.len(),
            ArrayData::Real(v) => v.len(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let expected: u64 = self.dims.iter().product();
        if expected != self.len() as u64 {
            return Err(Error::Format(format!(
                "dims {:?} hold {expected} values, data has {}",
                self.dims,
                self.len()
            )));
        }
        w.write_all(MAGIC)?;
        w.write_all(&crate::SCHEMA_VERSION.to_le_bytes())?;
        w.write_all(&[self.dtype() as u8, 0, 0, 0])?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        match &self.data {
            ArrayData::Complex(v) => {
                for z in v {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
            ArrayData::Real(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != crate::SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema version {version}")));
        }
        let mut tag = [0u8; 4];
        r.read_exact(&mut tag)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            dims.push(u64::from_le_bytes(b));
        }
        let n = dims
            .iter()
            .try_fold(1u64, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::Format("dimension overflow".into()))? as usize;
        let data = match tag[0] {
            1 => ArrayData::Complex(
                (0..n)
                    .map(|_| Ok(C64::new(read_f64(&mut r)?, read_f64(&mut r)?)))
                    .collect::<Result<_>>()?,
            ),
            2 => ArrayData::Real((0..n).map(|_| read_f64(&mut r)).collect::<Result<_>>()?),
            t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
        };
        Ok(Self { dims, data })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl From<&WaveFunction1D> for ArrayFile {
    fn from(psi: &WaveFunction1D) -> Self {
        ArrayFile::complex(vec![psi.grid().len() as u64], psi.amplitudes().to_vec())
    }
}

impl From<&ScalarField2D> for ArrayFile {
    fn from(f: &ScalarField2D) -> Self {
        let g = f.grid();
        ArrayFile::complex(vec![g.n_x() as u64, g.n_t() as u64], f.amplitudes().to_vec())
    }
}

impl From<&SpinorField2D> for ArrayFile {
    fn from(f: &SpinorField2D) -> Self {
        let g = f.grid();
        ArrayFile::complex(
            vec![g.n_x() as u64, g.n_t() as u64, 4],
            f.amplitudes().to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Grid1D, Grid2D};
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let a = ArrayFile::complex(vec![2], vec![C64::new(1.0, -2.0), C64::new(0.5, 0.0)]);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf[12], 1);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[36..44].try_into().unwrap()), -2.0);
        assert_eq!(buf.len(), 28 + 32);
    }

    #[test]
    fn spinor_dump_is_row_major() {
        let g = Grid2D::new(
            Grid1D::new(2, 0.0, 1.0).unwrap(),
            Grid1D::new(4, 0.0, 1.0).unwrap(),
        );
        let f = SpinorField2D::from_fn(g, |x, t| {
            [C64::new(x, t), C64::new(1.0, 0.0), C64::default(), C64::new(0.0, x + t)]
        });
        let a = ArrayFile::from(&f);
        assert_eq!(a.dims, vec![2, 4, 4]);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(ArrayFile::read_from(&buf[..]).unwrap(), a);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ArrayFile::read_from(&b"NOTANARRAY000000"[..]).is_err());
        let bad = ArrayFile::real(vec![3], vec![1.0]);
        assert!(bad.write_to(Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dims in proptest::collection::vec(1u64..4, 0..4), seed in any::<u64>()) {
            let n: u64 = dims.iter().product();
            let data: Vec<C64> = (0..n).map(|i| C64::new((seed ^ i) as f64, -(i as f64))).collect();
            let a = ArrayFile::complex(dims, data);
            let mut buf = Vec::new();
            a.write_to(&mut buf).unwrap();
            prop_assert_eq!(ArrayFile::read_from(&buf[..]).unwrap(), a);
        }
    }
}
