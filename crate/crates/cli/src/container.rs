//! Binary dataset container (`LPSK1`) and dense matrix files (`LPSM1`).
//!
//! All integers are little-endian `u32`, complex values are pairs of
//! little-endian `f32` (real, imaginary).
//!
//! ```text
//! LPSK1
//!   magic "LPSK1" | version | n_x | n_y | q | c | layout (u8: 0 Cartesian, 1 pseudo-radial)
//!   q x { count | count x (kx, ky) }           sampled k-space points per frame
//!   c x n complex                              coil maps, pixel index x * n_y + y
//!   q x { c * count_k complex }                measurements, coil-major
//! LPSM1
//!   magic "LPSM1" | version | rows | cols | rows * cols complex (column-major)
//! ```
//!
//! k-space coordinates are centered: `(n_x / 2, n_y / 2)` is DC. Measurements
//! follow the unitary DFT convention of [`lps_core::operators::FourierGrid`].

use std::sync::Arc;

use lps_core::operators::{compose_multicoil, CoilMaps, MeasurementOp, SamplingMask};
use lps_core::{ComplexMatrix, ComplexVector, Frame, FrameSet, C64};
use num_complex::Complex32;
use thiserror::Error;

pub const DATASET_MAGIC: &[u8; 5] = b"LPSK1";
pub const MATRIX_MAGIC: &[u8; 5] = b"LPSM1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

fn parse_err(offset: usize, message: impl Into<String>) -> ContainerError {
    ContainerError::Parse { offset, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Cartesian,
    PseudoRadial,
}

impl Layout {
    fn code(self) -> u8 {
        match self {
            Layout::Cartesian => 0,
            Layout::PseudoRadial => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::Cartesian => "cartesian",
            Layout::PseudoRadial => "pseudo-radial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub nx: u32,
    pub ny: u32,
    pub layout: Layout,
    pub masks: Vec<Vec<(u32, u32)>>,
    pub coils: Vec<Vec<Complex32>>,
    pub measurements: Vec<Vec<Complex32>>,
}

fn to_c32(v: C64) -> Complex32 {
    Complex32::new(v.re as f32, v.im as f32)
}

fn to_c64(v: Complex32) -> C64 {
    C64::new(v.re as f64, v.im as f64)
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn q(&self) -> usize {
        self.masks.len()
    }

    pub fn coil_count(&self) -> usize {
        self.coils.len()
    }

    /// `m_k = c * |mask_k|`
    pub fn frame_rows(&self) -> Vec<usize> {
        self.masks.iter().map(|m| m.len() * self.coil_count()).collect()
    }

    /// Measures the columns of `truth` through multi-coil masked Fourier operators.
    pub fn simulate(
        (nx, ny): (usize, usize),
        layout: Layout,
        masks: Vec<SamplingMask>,
        coils: &Arc<CoilMaps>,
        truth: &ComplexMatrix,
    ) -> anyhow::Result<Self> {
        anyhow::ensure!(truth.nrows() == nx * ny, "truth has {} rows for a {nx}x{ny} grid", truth.nrows());
        anyhow::ensure!(truth.ncols() == masks.len(), "{} masks for {} frames", masks.len(), truth.ncols());
        let mut measurements = Vec::with_capacity(masks.len());
        let mut mask_lists = Vec::with_capacity(masks.len());
        for (k, mask) in masks.into_iter().enumerate() {
            mask_lists.push(mask.indices.clone());
            let op = compose_multicoil(mask, coils)?;
            let y = op.apply(&truth.column(k).into_owned());
            measurements.push(y.iter().copied().map(to_c32).collect());
        }
        Ok(Self {
            nx: nx as u32,
            ny: ny as u32,
            layout,
            masks: mask_lists,
            coils: coils.maps().iter().map(|m| m.iter().copied().map(to_c32).collect()).collect(),
            measurements,
        })
    }

    pub fn coil_maps(&self) -> Result<CoilMaps, ContainerError> {
        let maps = self.coils.iter().map(|m| ComplexVector::from_iterator(m.len(), m.iter().copied().map(to_c64))).collect();
        CoilMaps::new((self.nx as usize, self.ny as usize), maps).map_err(|e| ContainerError::Inconsistent(e.to_string()))
    }

    /// Operators and measurements in double precision.
    pub fn frame_set(&self) -> Result<FrameSet, ContainerError> {
        let coils = Arc::new(self.coil_maps()?);
        let shape = (self.nx as usize, self.ny as usize);
        let frames = self
            .masks
            .iter()
            .zip(&self.measurements)
            .enumerate()
            .map(|(k, (mask, y))| {
                let mask = SamplingMask::new(k, mask.clone(), shape).map_err(|e| ContainerError::Inconsistent(e.to_string()))?;
                let op = compose_multicoil(mask, &coils).map_err(|e| ContainerError::Inconsistent(e.to_string()))?;
                let y = ComplexVector::from_iterator(y.len(), y.iter().copied().map(to_c64));
                Ok(Frame { op: Arc::new(op), y })
            })
            .collect::<Result<Vec<_>, ContainerError>>()?;
        FrameSet::new(frames).map_err(|e| ContainerError::Inconsistent(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        for v in [VERSION, self.nx, self.ny, self.q() as u32, self.coil_count() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.layout.code());
        for mask in &self.masks {
            out.extend_from_slice(&(mask.len() as u32).to_le_bytes());
            for &(kx, ky) in mask {
                out.extend_from_slice(&kx.to_le_bytes());
                out.extend_from_slice(&ky.to_le_bytes());
            }
        }
        for map in &self.coils {
            put_complex(&mut out, map);
        }
        for y in &self.measurements {
            put_complex(&mut out, y);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(DATASET_MAGIC)?;
        r.version()?;
        let nx = r.u32("n_x")?;
        let ny = r.u32("n_y")?;
        let q = r.u32("q")?;
        let c = r.u32("c")?;
        if nx == 0 || ny == 0 || c == 0 {
            return Err(parse_err(9, format!("empty geometry n_x={nx} n_y={ny} c={c}")));
        }
        let at = r.pos;
        let layout = match r.u8("layout")? {
            0 => Layout::Cartesian,
            1 => Layout::PseudoRadial,
            other => return Err(parse_err(at, format!("unknown layout flag {other}"))),
        };
        let n = nx as usize * ny as usize;
        let mut masks = Vec::with_capacity((q as usize).min(1 << 16));
        for k in 0..q {
            let count = r.u32("mask length")? as usize;
            r.need(count.saturating_mul(8), "mask indices")?;
            let mut mask = Vec::with_capacity(count);
            for _ in 0..count {
                let at = r.pos;
                let kx = r.u32("kx")?;
                let ky = r.u32("ky")?;
                if kx >= nx || ky >= ny {
                    return Err(parse_err(at, format!("frame {k}: mask index ({kx}, {ky}) outside {nx}x{ny} grid")));
                }
                mask.push((kx, ky));
            }
            masks.push(mask);
        }
        let coils = (0..c).map(|_| r.complex(n, "coil map")).collect::<Result<Vec<_>, _>>()?;
        let measurements = masks
            .iter()
            .map(|m| r.complex(m.len() * c as usize, "measurements"))
            .collect::<Result<Vec<_>, _>>()?;
        r.end()?;
        Ok(Self { nx, ny, layout, masks, coils, measurements })
    }
}

fn put_complex(out: &mut Vec<u8>, values: &[Complex32]) {
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

/// Dense complex matrix stored in single precision.
pub fn matrix_to_bytes(m: &ComplexMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    for v in [VERSION, m.nrows() as u32, m.ncols() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let values: Vec<Complex32> = m.iter().copied().map(to_c32).collect();
    put_complex(&mut out, &values);
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<ComplexMatrix, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(MATRIX_MAGIC)?;
    r.version()?;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let values = r.complex(rows.saturating_mul(cols), "matrix entries")?;
    r.end()?;
    Ok(ComplexMatrix::from_iterator(rows, cols, values.into_iter().map(to_c64)))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn need(&self, len: usize, what: &str) -> Result<(), ContainerError> {
        let left = self.bytes.len() - self.pos;
        if left < len {
            return Err(parse_err(self.pos, format!("truncated {what}: need {len} bytes, {left} left")));
        }
        Ok(())
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&[u8], ContainerError> {
        self.need(len, what)?;
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, ContainerError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32, ContainerError> {
        let at = self.pos;
        let v = f32::from_bits(self.u32(what)?);
        if !v.is_finite() {
            return Err(parse_err(at, format!("non-finite value in {what}")));
        }
        Ok(v)
    }

    fn complex(&mut self, len: usize, what: &str) -> Result<Vec<Complex32>, ContainerError> {
        self.need(len.saturating_mul(8), what)?;
        (0..len).map(|_| Ok(Complex32::new(self.f32(what)?, self.f32(what)?))).collect()
    }

    fn magic(&mut self, expected: &[u8; 5]) -> Result<(), ContainerError> {
        let got = self.take(5, "magic")?;
        if got != expected {
            return Err(parse_err(0, format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(expected))));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<(), ContainerError> {
        let at = self.pos;
        let v = self.u32("version")?;
        if v != VERSION {
            return Err(parse_err(at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn end(&self) -> Result<(), ContainerError> {
        if self.pos != self.bytes.len() {
            return Err(parse_err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lps_core::operators::make_pseudo_radial_masks;

    fn sample() -> Dataset {
        let coils = Arc::new(CoilMaps::synthetic(6, 4, 2));
        let masks = make_pseudo_radial_masks(6, 4, 3, 2, 0).unwrap();
        let z = ComplexMatrix::from_fn(24, 3, |i, k| C64::new(i as f64 * 0.1, k as f64 - 1.0));
        Dataset::simulate((6, 4), Layout::PseudoRadial, masks, &coils, &z).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let d = sample();
        let bytes = d.to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..5], b"LPSK1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 2);
        assert_eq!(bytes[25], 1);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        for cut in [3, 12, 26, 40, bytes.len() - 1] {
            match Dataset::from_bytes(&bytes[..cut]) {
                Err(ContainerError::Parse { offset, .. }) => assert!(offset <= cut, "cut {cut} offset {offset}"),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(ContainerError::Parse { offset: 0, .. })));

        let mut bytes = sample().to_bytes();
        bytes[25] = 7;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(ContainerError::Parse { offset: 25, .. })));

        // first kx of frame 0 out of range
        let mut bytes = sample().to_bytes();
        bytes[30..34].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&bytes), Err(ContainerError::Parse { offset: 30, .. })));

        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(Dataset::from_bytes(&bytes).is_err());
    }

    #[test]
    fn frame_set_reproduces_measurements() {
        let d = sample();
        let fs = d.frame_set().unwrap();
        assert_eq!(fs.q(), 3);
        assert_eq!(fs.n(), 24);
        for (k, rows) in d.frame_rows().into_iter().enumerate() {
            assert_eq!(fs.frame(k).op.rows(), rows);
        }
    }

    #[test]
    fn matrix_round_trip() {
        let m = ComplexMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 + 0.25, -(j as f64)));
        let bytes = matrix_to_bytes(&m);
        assert_eq!(matrix_from_bytes(&bytes).unwrap(), m);
        assert!(matrix_from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
