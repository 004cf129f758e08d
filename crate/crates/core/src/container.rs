//! Minimal binary raster container.
//!
//! ```text
//! offset  size  field
//!      0     6  magic "PGNLM1"
//!      6     1  kind: 1 = SLC, 2 = guide, 3 = covariance, 4 = labels
//!      7     4  height, u32 LE
//!     11     4  width, u32 LE
//!     15     2  bands, u16 LE (3 for SLC, B for guide, 9 for covariance, 1 for labels)
//!     17     -  payload, row-major, channel-interleaved, little endian
//! ```
//!
//! SLC pixels are `[Re HH, Im HH, Re HV, Im HV, Re VV, Im VV]` as `f32`;
//! covariance pixels are `[c11, c22, c33, Re c12, Im c12, Re c13, Im c13,
//! Re c23, Im c23]` as `f32`; guides are `bands` values of `f32`; labels are
//! one `u16`. Values are held as `f64` in memory and narrowed on write.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix3;
use crate::types::{CovarianceField, GuideImage, LabelRaster, ScatteringImage, TargetVector};

pub const MAGIC: &[u8; 6] = b"PGNLM1";
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RasterKind {
    Slc = 1,
    Guide = 2,
    Covariance = 3,
    Labels = 4,
}

impl RasterKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Slc),
            2 => Some(Self::Guide),
            3 => Some(Self::Covariance),
            4 => Some(Self::Labels),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Slc => "SLC",
            Self::Guide => "guide",
            Self::Covariance => "covariance",
            Self::Labels => "label",
        }
    }

    /// Payload bytes per pixel for `bands` channels.
    fn pixel_bytes(self, bands: usize) -> usize {
        match self {
            Self::Slc => bands * 2 * 4,
            Self::Guide | Self::Covariance => bands * 4,
            Self::Labels => bands * 2,
        }
    }
}

/// Any raster that can live in a container.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Slc(ScatteringImage),
    Guide(GuideImage),
    Covariance(CovarianceField),
    Labels(LabelRaster),
}

impl Raster {
    pub fn kind(&self) -> RasterKind {
        match self {
            Raster::Slc(_) => RasterKind::Slc,
            Raster::Guide(_) => RasterKind::Guide,
            Raster::Covariance(_) => RasterKind::Covariance,
            Raster::Labels(_) => RasterKind::Labels,
        }
    }

    pub fn height(&self) -> usize {
        self.dims().0
    }

    pub fn width(&self) -> usize {
        self.dims().1
    }

    /// Values per pixel: 3 complex channels, guide bands, 9 covariance reals or 1 label.
    pub fn bands(&self) -> usize {
        self.dims().2
    }

    fn dims(&self) -> (usize, usize, usize) {
        match self {
            Raster::Slc(r) => (r.height(), r.width(), 3),
            Raster::Guide(r) => (r.height(), r.width(), r.bands()),
            Raster::Covariance(r) => (r.height(), r.width(), 9),
            Raster::Labels(r) => (r.height(), r.width(), 1),
        }
    }

    fn wrong(&self, expected: &'static str) -> Error {
        Error::WrongKind {
            expected,
            found: self.kind().name(),
        }
    }

    pub fn into_slc(self) -> Result<ScatteringImage> {
        match self {
            Raster::Slc(r) => Ok(r),
            other => Err(other.wrong("SLC")),
        }
    }

    pub fn into_guide(self) -> Result<GuideImage> {
        match self {
            Raster::Guide(r) => Ok(r),
            other => Err(other.wrong("guide")),
        }
    }

    pub fn into_covariance(self) -> Result<CovarianceField> {
        match self {
            Raster::Covariance(r) => Ok(r),
            other => Err(other.wrong("covariance")),
        }
    }

    pub fn into_labels(self) -> Result<LabelRaster> {
        match self {
            Raster::Labels(r) => Ok(r),
            other => Err(other.wrong("label")),
        }
    }
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Serialises a raster; the same raster always gives the same bytes.
pub fn encode(raster: &Raster) -> Result<Vec<u8>> {
    let (h, w, bands) = raster.dims();
    let height = u32::try_from(h).map_err(|_| Error::InvalidRaster(format!("height {h} exceeds u32")))?;
    let width = u32::try_from(w).map_err(|_| Error::InvalidRaster(format!("width {w} exceeds u32")))?;
    let bands16 =
        u16::try_from(bands).map_err(|_| Error::InvalidRaster(format!("{bands} bands exceed u16")))?;
    let kind = raster.kind();
    let mut out = Vec::with_capacity(HEADER_LEN + h * w * kind.pixel_bytes(bands));
    out.extend_from_slice(MAGIC);
    out.push(kind as u8);
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&bands16.to_le_bytes());
    match raster {
        Raster::Slc(img) => {
            for s in img.data() {
                for z in s.as_array() {
                    push_f32(&mut out, z.re);
                    push_f32(&mut out, z.im);
                }
            }
        }
        Raster::Guide(g) => g.data().iter().for_each(|&v| push_f32(&mut out, v)),
        Raster::Covariance(c) => {
            for m in c.data() {
                m.to_reals().iter().for_each(|&v| push_f32(&mut out, v));
            }
        }
        Raster::Labels(l) => l
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

/// Parses and validates a container; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Raster> {
    let path = origin.to_path_buf();
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path,
            found: bytes[..bytes.len().min(MAGIC.len())].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path,
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let kind = RasterKind::from_u8(bytes[6]).ok_or(Error::BadKind {
        path: path.clone(),
        kind: bytes[6],
    })?;
    let h = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let bands = u16::from_le_bytes(bytes[15..17].try_into().unwrap()) as usize;
    let header_err = |reason: String| Error::BadHeader {
        path: path.clone(),
        reason,
    };
    if h == 0 || w == 0 {
        return Err(header_err(format!("empty dimensions {h}x{w}")));
    }
    let fixed = match kind {
        RasterKind::Slc => Some(3),
        RasterKind::Covariance => Some(9),
        RasterKind::Labels => Some(1),
        RasterKind::Guide => None,
    };
    if fixed.is_some_and(|b| b != bands) || bands == 0 {
        return Err(header_err(format!(
            "{} container cannot have {bands} bands",
            kind.name()
        )));
    }
    let expected = (HEADER_LEN + h * w * kind.pixel_bytes(bands)) as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path,
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            path,
            extra: actual - expected,
        });
    }
    let payload = &bytes[HEADER_LEN..];

    let floats = || -> Result<Vec<f64>> {
        payload
            .chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(f64::from(v))
                } else {
                    Err(Error::NonFinitePayload {
                        path: path.clone(),
                        index: i,
                    })
                }
            })
            .collect()
    };

    Ok(match kind {
        RasterKind::Slc => {
            let v = floats()?;
            let data = v
                .chunks_exact(6)
                .map(|p| {
                    TargetVector::new(
                        Complex64::new(p[0], p[1]),
                        Complex64::new(p[2], p[3]),
                        Complex64::new(p[4], p[5]),
                    )
                })
                .collect();
            Raster::Slc(ScatteringImage::new(h, w, data)?)
        }
        RasterKind::Guide => Raster::Guide(GuideImage::new(h, w, bands, floats()?)?),
        RasterKind::Covariance => {
            let v = floats()?;
            let data = v
                .chunks_exact(9)
                .map(|p| HermitianMatrix3::from_reals(p.try_into().unwrap()))
                .collect();
            Raster::Covariance(CovarianceField::new(h, w, data)?)
        }
        RasterKind::Labels => Raster::Labels(LabelRaster::new(
            h,
            w,
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        )?),
    })
}

pub fn write_container(raster: &Raster, path: &Path) -> Result<()> {
    let bytes = encode(raster)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
