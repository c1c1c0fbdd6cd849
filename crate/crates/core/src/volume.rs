//! Raw volume files for external inspection.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `MIGR`                            |
//! | 4      | 4    | version (u32, currently 1)              |
//! | 8      | 4    | N (u32)                                 |
//! | 12     | 4    | flags (u32, bit 0 set: complex samples) |
//! | 16     | 8    | L (f64)                                 |
//! | 24     | 8    | m (f64)                                 |
//! | 32     | 8    | seed (u64)                              |
//! | 40     | 8    | sample index (u64)                      |
//! | 48     | 16   | reserved, zero                          |
//!
//! The header is followed by `N^3` f64 samples in grid storage order, or
//! `N^3` (re, im) pairs when the complex flag is set.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{ComplexField3, Grid3};
use crate::scalar::Scalar;

pub const VOLUME_MAGIC: [u8; 4] = *b"MIGR";
pub const VOLUME_VERSION: u32 = 1;
pub const VOLUME_HEADER_LEN: usize = 64;
const FLAG_COMPLEX: u32 = 1;

/// Header metadata of a volume file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeHeader {
    pub n: u32,
    pub half_width: f64,
    pub m: f64,
    pub seed: u64,
    pub sample_index: u64,
    pub complex: bool,
}

/// Writes a volume; only real parts are stored unless `complex` is set.
pub fn write_volume<T: Scalar, W: Write>(
    out: &mut W,
    field: &ComplexField3<T>,
    m: f64,
    seed: u64,
    sample_index: u64,
    complex: bool,
) -> Result<()> {
    let grid = field.grid();
    out.write_all(&VOLUME_MAGIC)?;
    out.write_u32::<LittleEndian>(VOLUME_VERSION)?;
    out.write_u32::<LittleEndian>(grid.n() as u32)?;
    out.write_u32::<LittleEndian>(if complex { FLAG_COMPLEX } else { 0 })?;
    out.write_f64::<LittleEndian>(grid.half_width().to_f64_lossy())?;
    out.write_f64::<LittleEndian>(m)?;
    out.write_u64::<LittleEndian>(seed)?;
    out.write_u64::<LittleEndian>(sample_index)?;
    out.write_all(&[0u8; 16])?;
    let mut buf = Vec::with_capacity(field.values().len() * if complex { 16 } else { 8 });
    for v in field.values() {
        buf.write_f64::<LittleEndian>(v.re.to_f64_lossy())?;
        if complex {
            buf.write_f64::<LittleEndian>(v.im.to_f64_lossy())?;
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_volume<T: Scalar, R: Read>(input: &mut R) -> Result<(VolumeHeader, ComplexField3<T>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != VOLUME_MAGIC {
        return Err(Error::Format("volume magic mismatch".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VOLUME_VERSION {
        return Err(Error::Format(format!("unsupported volume version {version}")));
    }
    let n = input.read_u32::<LittleEndian>()?;
    let flags = input.read_u32::<LittleEndian>()?;
    let half_width = input.read_f64::<LittleEndian>()?;
    let m = input.read_f64::<LittleEndian>()?;
    let seed = input.read_u64::<LittleEndian>()?;
    let sample_index = input.read_u64::<LittleEndian>()?;
    let mut reserved = [0u8; 16];
    input.read_exact(&mut reserved)?;
    let complex = flags & FLAG_COMPLEX != 0;
    let grid = Grid3::new(n as usize, T::of(half_width))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = input.read_f64::<LittleEndian>()?;
        let im = if complex {
            input.read_f64::<LittleEndian>()?
        } else {
            0.0
        };
        values.push(Complex::new(T::of(re), T::of(im)));
    }
    let header = VolumeHeader {
        n,
        half_width,
        m,
        seed,
        sample_index,
        complex,
    };
    Ok((header, ComplexField3::from_values(grid, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_real_and_complex() {
        let grid = Grid3::new(8, 1.25).unwrap();
        let f = ComplexField3::from_fn(grid, |x| Complex::new(x[0] - 2.0 * x[2], x[1]));
        for complex in [false, true] {
            let mut buf = Vec::new();
            write_volume(&mut buf, &f, 3.0, 42, 5, complex).unwrap();
            let per = if complex { 16 } else { 8 };
            assert_eq!(buf.len(), VOLUME_HEADER_LEN + per * grid.len());
            let (h, g) = read_volume::<f64, _>(&mut buf.as_slice()).unwrap();
            assert_eq!((h.n, h.seed, h.sample_index, h.complex), (8, 42, 5, complex));
            for (a, b) in f.values().iter().zip(g.values()) {
                assert_eq!(a.re, b.re);
                assert_eq!(if complex { a.im } else { 0.0 }, b.im);
            }
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = vec![0u8; 80];
        assert!(matches!(
            read_volume::<f64, _>(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
