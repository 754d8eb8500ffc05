//! Image preprocessing: decoding, decolorization, histograms and histogram
//! equalization.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{CeiqError, Result};

/// Number of gray levels in an 8-bit image.
pub const LEVELS: usize = 256;

/// Luma weights applied to the red, green and blue channels.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// An 8-bit RGB image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        check_dims(width, height, width * height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Replicates a gray image into three identical channels.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            pixels: gray.pixels.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Applies `f` to every channel value independently.
    pub fn map_channels(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| [f(p[0]), f(p[1]), f(p[2])]).collect(),
        }
    }
}

/// An 8-bit single-channel image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        check_dims(width, height, width * height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(CeiqError::invalid(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(CeiqError::invalid(format!(
            "pixel buffer has {len} entries, expected {width}x{height}"
        )));
    }
    Ok(())
}

/// Rounds to the nearest integer with ties away from zero and clamps to
/// the 8-bit range.
#[inline]
pub fn round_to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Converts an RGB image to gray with the NTSC luma weights.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| round_to_u8(wr * f64::from(r) + wg * f64::from(g) + wb * f64::from(b)))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Gray-level histogram with `bins` equal-width bins over [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: Vec<u64>,
    probabilities: Vec<f64>,
}

impl Histogram {
    /// Builds a histogram from raw counts. An all-zero histogram is allowed
    /// here; its probabilities are all zero.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(CeiqError::invalid("histogram needs at least one bin"));
        }
        let total: u64 = counts.iter().sum();
        let probabilities = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            let total = total as f64;
            counts.iter().map(|&c| c as f64 / total).collect()
        };
        Ok(Self {
            counts,
            probabilities,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram of `img` with `bins` bins; level `v` falls in bin
/// `floor(v * bins / 256)`.
pub fn compute_histogram(img: &GrayImage, bins: usize) -> Result<Histogram> {
    if !(1..=LEVELS).contains(&bins) {
        return Err(CeiqError::invalid(format!(
            "histogram bins must be in [1, 256], got {bins}"
        )));
    }
    let levels = level_counts(img);
    let mut counts = vec![0u64; bins];
    for (v, &c) in levels.iter().enumerate() {
        counts[v * bins / LEVELS] += c;
    }
    Histogram::from_counts(counts)
}

fn level_counts(img: &GrayImage) -> [u64; LEVELS] {
    let mut counts = [0u64; LEVELS];
    for &v in &img.pixels {
        counts[v as usize] += 1;
    }
    counts
}

/// The 256-entry level mapping used by [`equalize`]:
/// `T(k) = round(255 * cdf(k))`.
pub fn equalization_map(img: &GrayImage) -> [u8; LEVELS] {
    let counts = level_counts(img);
    let n = img.pixels.len() as f64;
    let mut map = [0u8; LEVELS];
    let mut cumulative = 0u64;
    for (k, &c) in counts.iter().enumerate() {
        cumulative += c;
        map[k] = round_to_u8(255.0 * (cumulative as f64 / n));
    }
    map
}

/// Classical global histogram equalization over 256 levels.
pub fn equalize(img: &GrayImage) -> GrayImage {
    let map = equalization_map(img);
    img.map(|v| map[v as usize])
}

/// A decoded 8-bit image. Single-channel files are kept as gray and skip
/// decolorization.
#[derive(Debug, Clone)]
pub enum DecodedImage {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl DecodedImage {
    pub fn to_gray(&self) -> GrayImage {
        match self {
            DecodedImage::Rgb(rgb) => to_gray(rgb),
            DecodedImage::Gray(gray) => gray.clone(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            DecodedImage::Rgb(img) => img.width(),
            DecodedImage::Gray(img) => img.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            DecodedImage::Rgb(img) => img.height(),
            DecodedImage::Gray(img) => img.height(),
        }
    }
}

/// Decodes a PNG, JPEG or BMP file. Alpha channels are dropped; 16-bit and
/// floating-point images are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<DecodedImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CeiqError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes, path)
}

/// Decodes an in-memory image; `path` is only used for diagnostics.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<DecodedImage> {
    let decoded = ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|source| CeiqError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|source| CeiqError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    from_dynamic(decoded, path)
}

fn from_dynamic(img: DynamicImage, path: &Path) -> Result<DecodedImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(DecodedImage::Gray(GrayImage::new(w, h, buf.into_raw())?)),
        DynamicImage::ImageLumaA8(buf) => {
            let pixels = buf.pixels().map(|p| p.0[0]).collect();
            Ok(DecodedImage::Gray(GrayImage::new(w, h, pixels)?))
        }
        DynamicImage::ImageRgb8(buf) => {
            let pixels = buf.pixels().map(|p| p.0).collect();
            Ok(DecodedImage::Rgb(RgbImage::new(w, h, pixels)?))
        }
        DynamicImage::ImageRgba8(buf) => {
            let pixels = buf.pixels().map(|p| [p.0[0], p.0[1], p.0[2]]).collect();
            Ok(DecodedImage::Rgb(RgbImage::new(w, h, pixels)?))
        }
        other => Err(CeiqError::UnsupportedImage {
            path: path.to_path_buf(),
            reason: format!("only 8-bit gray or RGB images are accepted, got {:?}", other.color()),
        }),
    }
}
