//! Dense H×W×D rasters and the DTXL on-disk format.
//!
//! Values are stored as `f64` in row-major order with the channel index
//! varying fastest, i.e. element `(row, col, ch)` lives at
//! `(row * width + col) * channels + ch`. DTXL files carry `f32` payloads;
//! conversion happens only at the file boundary.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DTXL_MAGIC: &[u8; 4] = b"DTXL";
pub const DTXL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "tensor dims must be >= 1");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::DimMismatch(format!(
                "tensor dims must be >= 1, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimMismatch(format!(
                "{} values for a {height}x{width}x{channels} tensor",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::DimMismatch(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(height, width, channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    let i = t.offset(r, c, ch);
                    t.data[i] = f(r, c, ch);
                }
            }
        }
        t
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize, ch: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && ch < self.channels);
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.offset(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.offset(row, col, ch);
        self.data[i] = value;
    }

    /// All channels of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = self.offset(row, col, 0);
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = self.offset(row, col, 0);
        &mut self.data[start..start + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Population variance over every element.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Round every value through `f32`, the precision of DTXL files and the wire.
    pub fn quantize_f32(&self) -> Self {
        self.map(|v| v as f32 as f64)
    }

    pub fn to_dtxl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 + 3 * 8 + self.data.len() * 4);
        out.extend_from_slice(DTXL_MAGIC);
        out.extend_from_slice(&DTXL_VERSION.to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        for d in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Accepts rank 2 (`H×W`, one channel) and rank 3 (`H×W×D`) payloads.
    pub fn from_dtxl_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        Self::read_dtxl(&mut cursor)
    }

    pub fn read_dtxl(reader: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != DTXL_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(reader)?;
        if version != DTXL_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let rank = read_u32(reader)?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let mut buf = [0u8; 8];
            reader.read_exact(&mut buf)?;
            dims.push(u64::from_le_bytes(buf) as usize);
        }
        let (h, w, d) = match dims.as_slice() {
            [h, w] => (*h, *w, 1),
            [h, w, d] => (*h, *w, *d),
            _ => return Err(Error::Format(format!("unsupported rank {rank}"))),
        };
        let count = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let mut payload = vec![0u8; count * 4];
        reader.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_vec(h, w, d, data)
    }

    pub fn write_dtxl(&self, writer: &mut impl Write) -> Result<()> {
        writer.write_all(&self.to_dtxl_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_dtxl_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_dtxl_bytes(&bytes)
    }

    /// Hex SHA-256 of the DTXL encoding.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_dtxl_bytes())
    }
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Binary raster with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimMismatch(format!(
                "{} mask values for {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::DimMismatch("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Fill the half-open cell rectangle `[r0, r1) × [c0, c1)`, clipped to bounds.
    pub fn fill_rect(&mut self, r0: usize, c0: usize, r1: usize, c1: usize) {
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                self.set(r, c, true);
            }
        }
    }
}
