//! Feature grids and the FTN binary tensor format.
//!
//! An FTN file is a fixed 8-byte preamble followed by the dims and a raw
//! little-endian `f32` payload:
//!
//! ```text
//! 0..4   magic "FTN1" (46 54 4E 31)
//! 4      dtype code, 0x01 = f32
//! 5      ndim, always 3
//! 6..8   reserved, zero
//! 8..20  dims as u32 LE: H, W, C
//! 20..   H*W*C f32 LE, row-major, channel fastest
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FTN1";
pub const DTYPE_F32: u8 = 0x01;
pub const NDIM: u8 = 3;
pub const HEADER_LEN: usize = 8 + 4 * NDIM as usize;

/// One layer's `H x W x C` feature grid for one image.
///
/// Values are stored row-major with the channel index fastest, so the
/// C-vector at `(x, y)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    /// Builds a map after checking dims, payload length and finiteness.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidShape(format!(
                "dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::InvalidShape("dims overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidShape(format!(
                "{height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    /// Builds a map by evaluating `f(x, y)` for every pixel; `f` must return
    /// exactly `channels` values.
    pub fn from_fn<F>(height: usize, width: usize, channels: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<f32>,
    {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                if v.len() != channels {
                    return Err(Error::InvalidShape(format!(
                        "pixel ({x}, {y}) produced {} channels, expected {channels}",
                        v.len()
                    )));
                }
                data.extend_from_slice(&v);
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(H, W, C)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// The C-vector at column `x`, row `y`.
    #[inline]
    pub fn vector(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Replaces the vector at `(x, y)`; the new values must be finite.
    pub fn set_vector(&mut self, x: usize, y: usize, v: &[f32]) -> Result<()> {
        if v.len() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "vector has {} channels, map has {}",
                v.len(),
                self.channels
            )));
        }
        check_finite(v)?;
        let start = (y * self.width + x) * self.channels;
        self.data[start..start + self.channels].copy_from_slice(v);
        Ok(())
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

/// Serializes `t` into FTN bytes.
pub fn encode_tensor(t: &FeatureMap) -> Result<Vec<u8>> {
    check_finite(&t.data)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data.len());
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.push(NDIM);
    out.extend_from_slice(&[0, 0]);
    for dim in [t.height, t.width, t.channels] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::InvalidShape(format!("dim {dim} exceeds u32")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses FTN bytes. `path` is only used for error messages.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<FeatureMap> {
    if bytes.len() < 4 || bytes[0..4] != MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!("dtype code {:#04x}", bytes[4]),
        });
    }
    if bytes[5] != NDIM {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!("ndim {}", bytes[5]),
        });
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: "reserved header bytes are not zero".into(),
        });
    }
    let dim = |i: usize| {
        let off = 8 + 4 * i;
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
    };
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let count = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::InvalidShape(format!("dims {h}x{w}x{c} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = count * 4;
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN + expected,
            found: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes {
            path: path.into(),
            found: payload.len() - expected,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMap::new(h, w, c, data)
}

/// Writes `t` to `path` in FTN format.
pub fn write_tensor(path: impl AsRef<Path>, t: &FeatureMap) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(t)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an FTN file written by [`write_tensor`] (or any compatible writer).
pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.into()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}
