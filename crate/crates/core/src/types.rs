//! Raster and pixel types shared by every stage of the pipeline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix3;

/// Pixel position as (row, column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Lexicographic target vector `[S_HH, S_HV, S_VV]` of one SLC pixel.
///
/// The cross-polarised channel is expected to already hold the reciprocal
/// average of HV and VH.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetVector {
    pub hh: Complex64,
    pub hv: Complex64,
    pub vv: Complex64,
}

impl TargetVector {
    pub const ZERO: TargetVector = TargetVector {
        hh: Complex64::new(0.0, 0.0),
        hv: Complex64::new(0.0, 0.0),
        vv: Complex64::new(0.0, 0.0),
    };

    pub const fn new(hh: Complex64, hv: Complex64, vv: Complex64) -> Self {
        Self { hh, hv, vv }
    }

    /// Vector with purely real components.
    pub const fn real(hh: f64, hv: f64, vv: f64) -> Self {
        Self {
            hh: Complex64::new(hh, 0.0),
            hv: Complex64::new(hv, 0.0),
            vv: Complex64::new(vv, 0.0),
        }
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.hh, self.hv, self.vv]
    }

    pub fn from_array(a: [Complex64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Squared Euclidean norm `s^H s`.
    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.hh.norm_sqr() + self.hv.norm_sqr() + self.vv.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.hh.is_finite() && self.hv.is_finite() && self.vv.is_finite()
    }

    pub fn scale(&self, z: Complex64) -> Self {
        Self::new(self.hh * z, self.hv * z, self.vv * z)
    }

    /// Rank-one covariance `s s^H`.
    pub fn outer_product(&self) -> HermitianMatrix3 {
        HermitianMatrix3::outer_product(self)
    }
}

/// Mirror (reflect-without-repeat) index into `0..n`, defined for any signed offset.
///
/// `-1 -> 1`, `n -> n - 2`; offsets larger than the image keep reflecting.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// How samples outside the raster are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Reflect about the edge pixel without repeating it.
    #[default]
    Mirror,
}

impl BorderPolicy {
    #[inline]
    pub fn resolve(self, i: isize, n: usize) -> usize {
        match self {
            BorderPolicy::Mirror => mirror_index(i, n),
        }
    }
}

/// Square patch of side `2 * half + 1` centered on a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub half: usize,
}

impl Patch {
    pub const fn new(half: usize) -> Self {
        Self { half }
    }

    pub const fn side(&self) -> usize {
        2 * self.half + 1
    }

    /// Number of offsets in the patch.
    pub const fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    /// Offsets `(drow, dcol)` in raster order.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize)> {
        let h = self.half as isize;
        (-h..=h).flat_map(move |dr| (-h..=h).map(move |dc| (dr, dc)))
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidRaster(format!(
            "dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Single-look complex polarimetric image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringImage {
    height: usize,
    width: usize,
    data: Vec<TargetVector>,
}

impl ScatteringImage {
    pub fn new(height: usize, width: usize, data: Vec<TargetVector>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidRaster(format!(
                "expected {} pixels for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                row: i / width,
                col: i % width,
            });
        }
        Ok(Self { height, width, data })
    }

    /// Image with every pixel equal to `s`.
    pub fn constant(height: usize, width: usize, s: TargetVector) -> Result<Self> {
        Self::new(height, width, vec![s; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[TargetVector] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &TargetVector {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn at(&self, p: Pixel) -> &TargetVector {
        self.get(p.row, p.col)
    }

    /// Pixel at a possibly out-of-image position, resolved by `border`.
    #[inline]
    pub fn get_padded(&self, row: isize, col: isize, border: BorderPolicy) -> &TargetVector {
        self.get(border.resolve(row, self.height), border.resolve(col, self.width))
    }

    /// Every pixel multiplied by the same complex scalar.
    pub fn scaled(&self, z: Complex64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.data.iter().map(|s| s.scale(z)).collect(),
        )
    }

    /// Per-pixel intensity of one channel (`0 = HH`, `1 = HV`, `2 = VV`).
    pub fn channel_intensity(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .map(|s| s.as_array()[channel].norm_sqr())
            .collect()
    }
}

/// Coregistered real-valued guide image with `bands` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideImage {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
}

impl GuideImage {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if bands == 0 {
            return Err(Error::InvalidRaster("guide needs at least one band".into()));
        }
        if data.len() != height * width * bands {
            return Err(Error::InvalidRaster(format!(
                "expected {} guide values for {height}x{width}x{bands}, got {}",
                height * width * bands,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let px = i / bands;
            return Err(Error::NonFinite {
                row: px / width,
                col: px % width,
            });
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let data = values
            .iter()
            .copied()
            .cycle()
            .take(height * width * values.len())
            .collect();
        Self::new(height, width, values.len(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.bands;
        &self.data[i..i + self.bands]
    }

    #[inline]
    pub fn pixel_padded(&self, row: isize, col: isize, border: BorderPolicy) -> &[f64] {
        self.pixel(border.resolve(row, self.height), border.resolve(col, self.width))
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.bands,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    pub fn ensure_matches(&self, img: &ScatteringImage) -> Result<()> {
        if self.height != img.height() || self.width != img.width() {
            return Err(Error::DimensionMismatch {
                expected_h: img.height(),
                expected_w: img.width(),
                got_h: self.height,
                got_w: self.width,
            });
        }
        Ok(())
    }
}

/// Per-pixel covariance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceField {
    height: usize,
    width: usize,
    data: Vec<HermitianMatrix3>,
}

impl CovarianceField {
    pub fn new(height: usize, width: usize, data: Vec<HermitianMatrix3>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidRaster(format!(
                "expected {} matrices for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                row: i / width,
                col: i % width,
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[HermitianMatrix3] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &HermitianMatrix3 {
        &self.data[row * self.width + col]
    }

    /// Per-pixel outer products, i.e. the unfiltered single-look estimate.
    pub fn single_look(img: &ScatteringImage) -> Self {
        Self {
            height: img.height(),
            width: img.width(),
            data: img.data().iter().map(|s| s.outer_product()).collect(),
        }
    }

    /// Largest per-pixel relative Frobenius difference `|A - B| / max(|A|, |B|)`.
    pub fn max_relative_difference(&self, other: &CovarianceField) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch {
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let scale = a.frobenius_norm().max(b.frobenius_norm());
                if scale == 0.0 {
                    0.0
                } else {
                    a.sub(b).frobenius_norm() / scale
                }
            })
            .fold(0.0, f64::max))
    }
}

/// Per-pixel `u16` labels (class ids, group ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    height: usize,
    width: usize,
    data: Vec<u16>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, data: Vec<u16>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidRaster(format!(
                "expected {} labels for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }
}
