//! Far-field archives: the measured data set of one realization.
//!
//! Binary layout (`FFAR`, little-endian throughout):
//!
//! ```text
//! magic "FFAR"        4 bytes
//! version             u32
//! alpha               u8
//! mode                u8   (0 passive, 1 backscatter)
//! n_dir, n_k, n_tau   u32 each
//! dk, k_min           f64 each
//! seed                u64
//! N                   u32
//! L, m_f, m_q         f64 each
//! directions          n_dir * 3 f64
//! k table             n_k f64 (base lattice k_min + i dk)
//! tau table           n_tau f64
//! samples until EOF   dir_index u32, k f64, d_present u8, d 3 f64, re f64, im f64
//! ```
//!
//! Samples are ordered by direction index, then by k.

use std::collections::HashMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex;

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"FFAR";
pub const ARCHIVE_VERSION: u32 = 1;
const SAMPLE_BYTES: usize = 4 + 8 + 1 + 24 + 16;

/// Which data set an archive holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepMode {
    /// No incident wave; the source alone radiates.
    Passive,
    /// Incident plane wave from `d = -x̂`.
    Backscatter,
}

impl SweepMode {
    pub fn code(self) -> u8 {
        match self {
            SweepMode::Passive => 0,
            SweepMode::Backscatter => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SweepMode::Passive),
            1 => Ok(SweepMode::Backscatter),
            other => Err(Error::Format(format!("unknown archive mode {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Passive => "passive",
            SweepMode::Backscatter => "backscatter",
        }
    }

    pub fn alpha(self) -> u8 {
        match self {
            SweepMode::Passive => 0,
            SweepMode::Backscatter => 1,
        }
    }
}

/// Everything in an archive except the samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveMeta {
    pub alpha: u8,
    pub mode: SweepMode,
    pub dk: f64,
    pub k_min: f64,
    pub n_k: usize,
    pub seed: u64,
    pub grid_n: u32,
    pub half_width: f64,
    pub m_f: f64,
    pub m_q: f64,
    pub directions: Vec<[f64; 3]>,
    pub taus: Vec<f64>,
}

impl ArchiveMeta {
    /// `k_min + index * dk`, the only way lattice wavenumbers are formed.
    #[inline]
    pub fn lattice_k(&self, index: i64) -> f64 {
        self.k_min + index as f64 * self.dk
    }

    /// Lattice index of `k`, if `k` is on the lattice.
    pub fn lattice_index(&self, k: f64) -> Option<i64> {
        let t = (k - self.k_min) / self.dk;
        let r = t.round();
        if (t - r).abs() <= 1e-6 {
            Some(r as i64)
        } else {
            None
        }
    }

    pub fn k_table(&self) -> Vec<f64> {
        (0..self.n_k as i64).map(|i| self.lattice_k(i)).collect()
    }

    /// Index of the archived direction equal to `x` within `1e-9`.
    pub fn direction_index(&self, x: [f64; 3]) -> Option<usize> {
        self.directions.iter().position(|d| {
            (d[0] - x[0]).abs() <= 1e-9 && (d[1] - x[1]).abs() <= 1e-9 && (d[2] - x[2]).abs() <= 1e-9
        })
    }
}

/// One far-field measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FarFieldSample {
    pub dir_index: u32,
    pub direction: [f64; 3],
    pub k: f64,
    /// Incident direction; `None` for passive data.
    pub incident: Option<[f64; 3]>,
    pub value: Complex<f64>,
    pub realization_seed: u64,
}

/// Far-field data of one realization with its provenance.
#[derive(Clone, Debug)]
pub struct FarFieldArchive {
    meta: ArchiveMeta,
    samples: Vec<FarFieldSample>,
    lookup: HashMap<(u32, i64), usize>,
}

impl PartialEq for FarFieldArchive {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta && self.samples == other.samples
    }
}

impl FarFieldArchive {
    /// Builds an archive; samples are sorted by (direction, k).
    pub fn new(meta: ArchiveMeta, mut samples: Vec<FarFieldSample>) -> Result<Self> {
        if !(meta.dk > 0.0 && meta.dk.is_finite()) {
            return Err(Error::Format(format!("invalid dk {}", meta.dk)));
        }
        samples.sort_by(|a, b| a.dir_index.cmp(&b.dir_index).then(a.k.total_cmp(&b.k)));
        let mut lookup = HashMap::with_capacity(samples.len());
        for (pos, s) in samples.iter().enumerate() {
            if s.dir_index as usize >= meta.directions.len() {
                return Err(Error::Format(format!(
                    "sample references direction {} of {}",
                    s.dir_index,
                    meta.directions.len()
                )));
            }
            let idx = meta.lattice_index(s.k).ok_or_else(|| {
                Error::Format(format!("sample wavenumber {} is off the k lattice", s.k))
            })?;
            lookup.insert((s.dir_index, idx), pos);
        }
        Ok(Self {
            meta,
            samples,
            lookup,
        })
    }

    pub fn meta(&self) -> &ArchiveMeta {
        &self.meta
    }

    pub fn samples(&self) -> &[FarFieldSample] {
        &self.samples
    }

    pub fn mode(&self) -> SweepMode {
        self.meta.mode
    }

    /// Value at lattice index `k_index` for direction `dir_index`.
    pub fn value_at_index(&self, dir_index: usize, k_index: i64) -> Result<Complex<f64>> {
        self.lookup
            .get(&(dir_index as u32, k_index))
            .map(|&p| self.samples[p].value)
            .ok_or(Error::MissingSample {
                k: self.meta.lattice_k(k_index),
                direction: dir_index,
            })
    }

    pub fn value_at(&self, dir_index: usize, k: f64) -> Result<Complex<f64>> {
        let idx = self.meta.lattice_index(k).ok_or(Error::MissingSample {
            k,
            direction: dir_index,
        })?;
        self.value_at_index(dir_index, idx)
    }

    /// Copy with every value multiplied by `c`.
    pub fn scaled(&self, c: Complex<f64>) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| s.value *= c);
        out
    }

    /// Copy with the values replaced by `f(sample)`.
    pub fn map_values(&self, f: impl Fn(&FarFieldSample) -> Complex<f64>) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| s.value = f(s));
        out
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let m = &self.meta;
        let mut buf = Vec::with_capacity(96 + self.samples.len() * SAMPLE_BYTES);
        buf.write_all(&ARCHIVE_MAGIC)?;
        buf.write_u32::<LittleEndian>(ARCHIVE_VERSION)?;
        buf.write_u8(m.alpha)?;
        buf.write_u8(m.mode.code())?;
        buf.write_u32::<LittleEndian>(m.directions.len() as u32)?;
        buf.write_u32::<LittleEndian>(m.n_k as u32)?;
        buf.write_u32::<LittleEndian>(m.taus.len() as u32)?;
        buf.write_f64::<LittleEndian>(m.dk)?;
        buf.write_f64::<LittleEndian>(m.k_min)?;
        buf.write_u64::<LittleEndian>(m.seed)?;
        buf.write_u32::<LittleEndian>(m.grid_n)?;
        buf.write_f64::<LittleEndian>(m.half_width)?;
        buf.write_f64::<LittleEndian>(m.m_f)?;
        buf.write_f64::<LittleEndian>(m.m_q)?;
        for d in &m.directions {
            for c in d {
                buf.write_f64::<LittleEndian>(*c)?;
            }
        }
        for k in m.k_table() {
            buf.write_f64::<LittleEndian>(k)?;
        }
        for t in &m.taus {
            buf.write_f64::<LittleEndian>(*t)?;
        }
        for s in &self.samples {
            buf.write_u32::<LittleEndian>(s.dir_index)?;
            buf.write_f64::<LittleEndian>(s.k)?;
            buf.write_u8(u8::from(s.incident.is_some()))?;
            for c in s.incident.unwrap_or([0.0; 3]) {
                buf.write_f64::<LittleEndian>(c)?;
            }
            buf.write_f64::<LittleEndian>(s.value.re)?;
            buf.write_f64::<LittleEndian>(s.value.im)?;
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != ARCHIVE_MAGIC {
            return Err(Error::Format("archive magic mismatch".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let alpha = r.read_u8()?;
        let mode = SweepMode::from_code(r.read_u8()?)?;
        let n_dir = r.read_u32::<LittleEndian>()? as usize;
        let n_k = r.read_u32::<LittleEndian>()? as usize;
        let n_tau = r.read_u32::<LittleEndian>()? as usize;
        let dk = r.read_f64::<LittleEndian>()?;
        let k_min = r.read_f64::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let grid_n = r.read_u32::<LittleEndian>()?;
        let half_width = r.read_f64::<LittleEndian>()?;
        let m_f = r.read_f64::<LittleEndian>()?;
        let m_q = r.read_f64::<LittleEndian>()?;
        let mut directions = Vec::with_capacity(n_dir);
        for _ in 0..n_dir {
            directions.push([
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
            ]);
        }
        let mut k_table = Vec::with_capacity(n_k);
        for _ in 0..n_k {
            k_table.push(r.read_f64::<LittleEndian>()?);
        }
        let mut taus = Vec::with_capacity(n_tau);
        for _ in 0..n_tau {
            taus.push(r.read_f64::<LittleEndian>()?);
        }
        let meta = ArchiveMeta {
            alpha,
            mode,
            dk,
            k_min,
            n_k,
            seed,
            grid_n,
            half_width,
            m_f,
            m_q,
            directions,
            taus,
        };
        if k_table != meta.k_table() {
            return Err(Error::Format("k table disagrees with k_min and dk".into()));
        }
        if r.len() % SAMPLE_BYTES != 0 {
            return Err(Error::Format(format!(
                "{} trailing bytes do not form whole samples",
                r.len()
            )));
        }
        let mut samples = Vec::with_capacity(r.len() / SAMPLE_BYTES);
        while !r.is_empty() {
            let dir_index = r.read_u32::<LittleEndian>()?;
            let k = r.read_f64::<LittleEndian>()?;
            let present = r.read_u8()? != 0;
            let d = [
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
            ];
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            let direction = *meta.directions.get(dir_index as usize).ok_or_else(|| {
                Error::Format(format!("sample references missing direction {dir_index}"))
            })?;
            samples.push(FarFieldSample {
                dir_index,
                direction,
                k,
                incident: present.then_some(d),
                value: Complex::new(re, im),
                realization_seed: seed,
            });
        }
        Self::new(meta, samples)
    }

    /// CSV mirror: `dir_x,dir_y,dir_z,k,d_x,d_y,d_z,re,im`; `d` is empty for passive data.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut text = String::from("dir_x,dir_y,dir_z,k,d_x,d_y,d_z,re,im\n");
        for s in &self.samples {
            let d = match s.incident {
                Some(d) => format!("{},{},{}", d[0], d[1], d[2]),
                None => ",,".to_string(),
            };
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.direction[0], s.direction[1], s.direction[2], s.k, d, s.value.re, s.value.im
            ));
        }
        out.write_all(text.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_archive() -> FarFieldArchive {
        let meta = ArchiveMeta {
            alpha: 1,
            mode: SweepMode::Backscatter,
            dk: 0.25,
            k_min: 4.0,
            n_k: 3,
            seed: 99,
            grid_n: 16,
            half_width: 1.0,
            m_f: 3.0,
            m_q: 3.2,
            directions: vec![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]],
            taus: vec![0.0, 0.5],
        };
        let mut samples = Vec::new();
        for (di, d) in meta.directions.clone().iter().enumerate().rev() {
            for i in 0..4 {
                samples.push(FarFieldSample {
                    dir_index: di as u32,
                    direction: *d,
                    k: meta.lattice_k(i),
                    incident: Some([-d[0], -d[1], -d[2]]),
                    value: Complex::new(i as f64 + 0.1, -(di as f64)),
                    realization_seed: 99,
                });
            }
        }
        FarFieldArchive::new(meta, samples).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let a = sample_archive();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = FarFieldArchive::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(a, b);
        let mut again = Vec::new();
        b.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(b.samples()[0].dir_index, 0);
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        sample_archive().write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FFAR");
        assert_eq!(buf[8], 1);
        assert_eq!(buf[9], 1);
        let header = 4 + 4 + 1 + 1 + 12 + 8 + 8 + 8 + 4 + 24;
        assert_eq!(buf.len(), header + 6 * 8 + 3 * 8 + 2 * 8 + 8 * SAMPLE_BYTES);
    }

    #[test]
    fn lookup_and_missing_samples() {
        let a = sample_archive();
        assert_eq!(a.value_at(1, 4.5).unwrap(), Complex::new(2.1, -1.0));
        assert!(matches!(a.value_at(0, 9.0), Err(Error::MissingSample { .. })));
        assert!(matches!(a.value_at(0, 4.1), Err(Error::MissingSample { .. })));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        sample_archive().write_to(&mut buf).unwrap();
        buf.pop();
        assert!(FarFieldArchive::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_expected_shape() {
        let mut out = Vec::new();
        sample_archive().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "dir_x,dir_y,dir_z,k,d_x,d_y,d_z,re,im");
        assert_eq!(lines.len(), 9);
        assert!(lines.iter().all(|l| l.split(',').count() == 9));
    }
}
