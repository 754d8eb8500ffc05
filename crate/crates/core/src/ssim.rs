//! Structural similarity between a gray image and its equalized version.
//!
//! Local statistics are computed with a normalized Gaussian window over the
//! "valid" region only (no padding). Large images are optionally box-filtered
//! and subsampled first so that the shorter side is close to 256 pixels,
//! which is what the widely distributed reference implementation does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CeiqError, Result};
use crate::imageops::GrayImage;

/// A full-reference similarity index between two gray images of equal size.
///
/// The feature extractor only depends on this trait, so other similarity
/// measures can be dropped in for ablation.
pub trait Similarity: Sync {
    fn similarity(&self, a: &GrayImage, b: &GrayImage) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window_size: usize,
    pub window_sigma: f64,
    /// Exponents of the luminance, contrast and structure terms.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub auto_downsample: bool,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            window_size: 11,
            window_sigma: 1.5,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            auto_downsample: true,
        }
    }
}

impl SsimParams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(CeiqError::invalid("k1 and k2 must be positive"));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(CeiqError::invalid("dynamic range must be positive"));
        }
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(CeiqError::invalid(format!(
                "window size must be odd and at least 3, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0) {
            return Err(CeiqError::invalid("window sigma must be positive"));
        }
        if ![self.alpha, self.beta, self.gamma].iter().all(|e| e.is_finite()) {
            return Err(CeiqError::invalid("SSIM exponents must be finite"));
        }
        Ok(())
    }

    fn unit_exponents(&self) -> bool {
        self.alpha == 1.0 && self.beta == 1.0 && self.gamma == 1.0
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

impl Similarity for SsimParams {
    fn similarity(&self, a: &GrayImage, b: &GrayImage) -> Result<f64> {
        ssim(a, b, self).map(|r| r.mean_ssim)
    }
}

/// A dense real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimResult {
    pub mean_ssim: f64,
    /// Per-pixel index over the valid region of the (possibly downsampled)
    /// images.
    pub ssim_map: Plane,
}

/// Downsampling factor applied when `auto_downsample` is on.
pub fn downsample_factor(width: usize, height: usize) -> usize {
    let f = (width.min(height) as f64 / 256.0).round() as usize;
    f.max(1)
}

/// Averages `f x f` blocks with symmetric border extension (kernel anchored
/// like an image-processing "same" filter) and keeps every `f`-th sample
/// starting at the origin.
pub fn downsample(plane: &Plane, f: usize) -> Plane {
    if f <= 1 {
        return plane.clone();
    }
    let back = (f - 1) / 2;
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        // A kernel never reaches more than one period past the edge here.
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - i - 1;
        }
        i.clamp(0, n - 1) as usize
    };
    let out_w = plane.width.div_ceil(f);
    let out_h = plane.height.div_ceil(f);
    let norm = 1.0 / (f * f) as f64;
    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let y0 = (oy * f) as isize - back as isize;
        for ox in 0..out_w {
            let x0 = (ox * f) as isize - back as isize;
            let mut acc = 0.0;
            for dy in 0..f as isize {
                let y = reflect(y0 + dy, plane.height);
                for dx in 0..f as isize {
                    acc += plane.at(reflect(x0 + dx, plane.width), y);
                }
            }
            data.push(acc * norm);
        }
    }
    Plane {
        width: out_w,
        height: out_h,
        data,
    }
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Windowed first and second moments over the valid region.
struct Moments {
    width: usize,
    height: usize,
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    aa: Vec<f64>,
    bb: Vec<f64>,
    ab: Vec<f64>,
}

fn local_moments(a: &Plane, b: &Plane, kernel: &[f64]) -> Moments {
    let k = kernel.len();
    let out_w = a.width + 1 - k;
    let out_h = a.height + 1 - k;

    // Horizontal pass: five channels per row.
    let horizontal: Vec<[Vec<f64>; 5]> = (0..a.height)
        .into_par_iter()
        .map(|y| {
            let ra = &a.data[y * a.width..(y + 1) * a.width];
            let rb = &b.data[y * b.width..(y + 1) * b.width];
            let mut rows: [Vec<f64>; 5] = Default::default();
            for r in rows.iter_mut() {
                r.reserve_exact(out_w);
            }
            for x in 0..out_w {
                let mut s = [0.0; 5];
                for (t, &w) in kernel.iter().enumerate() {
                    let va = ra[x + t];
                    let vb = rb[x + t];
                    s[0] += w * va;
                    s[1] += w * vb;
                    s[2] += w * va * va;
                    s[3] += w * vb * vb;
                    s[4] += w * va * vb;
                }
                for (r, v) in rows.iter_mut().zip(s) {
                    r.push(v);
                }
            }
            rows
        })
        .collect();

    // Vertical pass.
    let vertical: Vec<[Vec<f64>; 5]> = (0..out_h)
        .into_par_iter()
        .map(|y| {
            let mut rows: [Vec<f64>; 5] = Default::default();
            for (c, r) in rows.iter_mut().enumerate() {
                *r = (0..out_w)
                    .map(|x| {
                        kernel
                            .iter()
                            .enumerate()
                            .map(|(t, &w)| w * horizontal[y + t][c][x])
                            .sum()
                    })
                    .collect();
            }
            rows
        })
        .collect();

    let mut m = Moments {
        width: out_w,
        height: out_h,
        mu_a: Vec::with_capacity(out_w * out_h),
        mu_b: Vec::with_capacity(out_w * out_h),
        aa: Vec::with_capacity(out_w * out_h),
        bb: Vec::with_capacity(out_w * out_h),
        ab: Vec::with_capacity(out_w * out_h),
    };
    for [mu_a, mu_b, aa, bb, ab] in vertical {
        m.mu_a.extend(mu_a);
        m.mu_b.extend(mu_b);
        m.aa.extend(aa);
        m.bb.extend(bb);
        m.ab.extend(ab);
    }
    m
}

/// Local SSIM index from windowed moments.
///
/// With unit exponents this is the usual two-factor form. Otherwise the
/// luminance, contrast and structure terms are raised separately; a negative
/// structure term keeps its sign.
#[inline]
pub fn local_index(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, params: &SsimParams) -> f64 {
    let c1 = params.c1();
    let c2 = params.c2();
    if params.unit_exponents() {
        return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
            / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
    let c3 = c2 / 2.0;
    let sd_a = var_a.max(0.0).sqrt();
    let sd_b = var_b.max(0.0).sqrt();
    let l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
    let c = (2.0 * sd_a * sd_b + c2) / (var_a + var_b + c2);
    let s = (cov + c3) / (sd_a * sd_b + c3);
    l.powf(params.alpha) * c.powf(params.beta) * s.signum() * s.abs().powf(params.gamma)
}

/// Mean SSIM between `a` and `b`.
pub fn ssim(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> Result<SsimResult> {
    params.validate()?;
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CeiqError::invalid(format!(
            "image dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut pa = Plane::from_gray(a);
    let mut pb = Plane::from_gray(b);
    if params.auto_downsample {
        let f = downsample_factor(a.width(), a.height());
        pa = downsample(&pa, f);
        pb = downsample(&pb, f);
    }
    ssim_planes(&pa, &pb, params)
}

/// SSIM on real-valued planes, without any downsampling.
pub fn ssim_planes(a: &Plane, b: &Plane, params: &SsimParams) -> Result<SsimResult> {
    params.validate()?;
    if a.width != b.width || a.height != b.height {
        return Err(CeiqError::invalid("plane dimensions differ"));
    }
    if a.width < params.window_size || a.height < params.window_size {
        return Err(CeiqError::invalid(format!(
            "image of {}x{} is smaller than the {}x{} SSIM window",
            a.width, a.height, params.window_size, params.window_size
        )));
    }
    let kernel = gaussian_kernel(params.window_size, params.window_sigma);
    let m = local_moments(a, b, &kernel);
    let values: Vec<f64> = (0..m.mu_a.len())
        .map(|i| {
            let (mu_a, mu_b) = (m.mu_a[i], m.mu_b[i]);
            let var_a = m.aa[i] - mu_a * mu_a;
            let var_b = m.bb[i] - mu_b * mu_b;
            let cov = m.ab[i] - mu_a * mu_b;
            local_index(mu_a, mu_b, var_a, var_b, cov, params)
        })
        .collect();
    let mean_ssim = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SsimResult {
        mean_ssim,
        ssim_map: Plane {
            width: m.width,
            height: m.height,
            data: values,
        },
    })
}
