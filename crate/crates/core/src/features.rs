//! Entropy and cross-entropy features and assembly of the 5-dimensional
//! quality feature vector.

use serde::{Deserialize, Serialize};

use crate::error::{CeiqError, Result};
use crate::imageops::{self, compute_histogram, equalize, DecodedImage, GrayImage, Histogram, RgbImage};
use crate::ssim::{Similarity, SsimParams};

pub const DEFAULT_BINS: usize = 128;

/// Number of entries in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 5;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["s_ge", "e_g", "e_e", "e_ge", "e_eg"];

/// Similarity to the equalized image, the two entropies and the two cross
/// entropies, in that order. Entropies are in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub s_ge: f64,
    pub e_g: f64,
    pub e_e: f64,
    pub e_ge: f64,
    pub e_eg: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [self.s_ge, self.e_g, self.e_e, self.e_ge, self.e_eg]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            s_ge: v[0],
            e_g: v[1],
            e_e: v[2],
            e_ge: v[3],
            e_eg: v[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Looks up a feature by its column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.to_array()[i])
    }
}

/// Shannon entropy in bits, skipping empty bins.
pub fn entropy(h: &Histogram) -> Result<f64> {
    if h.total() == 0 {
        return Err(CeiqError::invalid("entropy of an empty histogram"));
    }
    let e = h
        .probabilities()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>();
    // -0.0 for a single occupied bin
    Ok(e + 0.0)
}

/// Cross entropy `-sum p(i) log2 q(i)` over bins where both histograms are
/// nonzero. Skipped bins are not renormalized.
pub fn cross_entropy(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(CeiqError::invalid(format!(
            "histograms have {} and {} bins",
            p.bins(),
            q.bins()
        )));
    }
    let mut common = false;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probabilities().iter().zip(q.probabilities()) {
        if pi > 0.0 && qi > 0.0 {
            common = true;
            acc -= pi * qi.log2();
        }
    }
    if !common {
        return Err(CeiqError::degenerate("histograms share no occupied bin"));
    }
    Ok(acc + 0.0)
}

/// Knobs for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bins: usize,
    pub ssim: SsimParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            ssim: SsimParams::default(),
        }
    }
}

/// Features of an RGB image with the default configuration.
pub fn extract_features(img: &RgbImage) -> Result<FeatureVector> {
    extract_from_gray(&imageops::to_gray(img), &FeatureConfig::default())
}

pub fn extract_decoded(img: &DecodedImage, config: &FeatureConfig) -> Result<FeatureVector> {
    extract_from_gray(&img.to_gray(), config)
}

pub fn extract_from_gray(gray: &GrayImage, config: &FeatureConfig) -> Result<FeatureVector> {
    extract_with(gray, &config.ssim, config.bins)
}

/// Runs the pipeline on an already decolorized image with any similarity
/// index.
///
/// A constant image yields zero entropies. If its equalized version lands in
/// a different histogram bin the cross entropies are undefined and a
/// [`CeiqError::Degenerate`] error is returned.
pub fn extract_with(gray: &GrayImage, similarity: &dyn Similarity, bins: usize) -> Result<FeatureVector> {
    let equalized = equalize(gray);
    let s_ge = similarity.similarity(gray, &equalized)?;
    let h_g = compute_histogram(gray, bins)?;
    let h_e = compute_histogram(&equalized, bins)?;
    let fv = FeatureVector {
        s_ge,
        e_g: entropy(&h_g)?,
        e_e: entropy(&h_e)?,
        e_ge: cross_entropy(&h_g, &h_e)?,
        e_eg: cross_entropy(&h_e, &h_g)?,
    };
    if !fv.is_finite() {
        return Err(CeiqError::degenerate("non-finite feature value"));
    }
    Ok(fv)
}
