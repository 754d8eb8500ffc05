//! Built-in synthetic corpus of contrast-distorted images.
//!
//! Reference images are procedural scenes (blobs, gratings, a gradient and
//! fine texture) whose gray levels are rank-mapped onto a flat histogram, so
//! every reference starts from full, evenly used dynamic range. Each
//! reference is then degraded with linear contrast reduction around mid-gray,
//! mean shift with clipping, and gamma change.
//!
//! The subjective score of a distortion depends only on its transfer curve
//! `T` over the 256 gray levels. It averages how many levels survive
//! (entropy of `T` applied to uniformly used levels) and how far levels move:
//!
//! ```text
//!   score = 100 * (H(T) / 16 + (1 - mean_v |T(v) - v| / 127.5) / 2)
//! ```
//!
//! so a pristine image scores 100 and the score decreases with distortion
//! strength within every family.

use serde::{Deserialize, Serialize};

use crate::error::{CeiqError, Result};
use crate::eval::{DatasetManifest, ManifestEntry, Polarity};
use crate::imageops::{round_to_u8, GrayImage, RgbImage};
use crate::rng;

pub const MID_GRAY: f64 = 127.5;

/// A global gray-level distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Distortion {
    /// `v -> 127.5 + c (v - 127.5)`
    Contrast(f64),
    /// `v -> v + d`, clipped
    MeanShift(f64),
    /// `v -> 255 (v / 255)^g`
    Gamma(f64),
}

impl Distortion {
    pub fn apply_level(&self, v: u8) -> u8 {
        let v = f64::from(v);
        round_to_u8(match *self {
            Distortion::Contrast(c) => MID_GRAY + c * (v - MID_GRAY),
            Distortion::MeanShift(d) => v + d,
            Distortion::Gamma(g) => 255.0 * (v / 255.0).powf(g),
        })
    }

    pub fn transfer_curve(&self) -> [u8; 256] {
        std::array::from_fn(|v| self.apply_level(v as u8))
    }

    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let lut = self.transfer_curve();
        img.map_channels(|v| lut[v as usize])
    }

    pub fn apply_gray(&self, img: &GrayImage) -> GrayImage {
        let lut = self.transfer_curve();
        img.map(|v| lut[v as usize])
    }

    /// Synthetic subjective score in [0, 100].
    pub fn score(&self) -> f64 {
        let lut = self.transfer_curve();
        let mut counts = [0u32; 256];
        for &t in &lut {
            counts[t as usize] += 1;
        }
        let levels_entropy: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = f64::from(c) / 256.0;
                -p * p.log2()
            })
            .sum();
        let mean_dev = lut
            .iter()
            .enumerate()
            .map(|(v, &t)| (f64::from(t) - v as f64).abs())
            .sum::<f64>()
            / 256.0;
        100.0 * (levels_entropy / 16.0 + (1.0 - mean_dev / MID_GRAY) / 2.0)
    }

    pub fn label(&self) -> String {
        match *self {
            Distortion::Contrast(c) => format!("contrast{c:.2}"),
            Distortion::MeanShift(d) => format!("shift{d:+.0}"),
            Distortion::Gamma(g) => format!("gamma{g:.2}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distortion::Contrast(c) => c > 0.0 && c <= 1.0,
            Distortion::MeanShift(d) => d.is_finite() && d.abs() < 255.0,
            Distortion::Gamma(g) => g > 0.0 && g.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(CeiqError::invalid(format!("invalid distortion {self:?}")))
        }
    }
}

/// Linear contrast factors 0.1, 0.2, ..., 1.0.
pub fn contrast_levels() -> Vec<Distortion> {
    (1..=10).map(|k| Distortion::Contrast(k as f64 / 10.0)).collect()
}

/// The default per-reference distortion set: ten contrast levels (the last
/// one pristine), five mean shifts and five gamma values.
pub fn default_distortions() -> Vec<Distortion> {
    let mut d = contrast_levels();
    d.extend([-90.0, -50.0, 30.0, 60.0, 100.0].map(Distortion::MeanShift));
    d.extend([0.35, 0.6, 1.5, 2.2, 3.2].map(Distortion::Gamma));
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub references: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub distortions: Vec<Distortion>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            references: 10,
            width: 128,
            height: 128,
            seed: 2018,
            distortions: default_distortions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub ref_id: String,
    pub distortion: Distortion,
    pub score: f64,
    pub image: RgbImage,
}

impl SynthImage {
    pub fn file_name(&self) -> String {
        format!("{}_{}.png", self.ref_id, self.distortion.label())
    }
}

/// Procedural reference scene with a flat gray-level histogram.
///
/// Every scene mixes the same components at fixed scales and strengths
/// (smooth blobs, two gratings, a gradient and value-noise texture); only
/// positions, orientations, phases and signs vary with the seed. This keeps
/// local-variance statistics comparable across references.
pub fn reference_image(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    let mut r = rng::seeded(seed);
    let mut u = move || rng::unit(&mut r);
    let (w, h) = (width as f64, height as f64);
    let scale = w.max(h);

    // (cx, cy, radius, amplitude)
    let blobs: Vec<(f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            let sign = if u() < 0.5 { -1.0 } else { 1.0 };
            (u() * w, u() * h, 0.15 * scale, sign)
        })
        .collect();
    let gratings: Vec<(f64, f64, f64)> = [5.0, 9.0]
        .iter()
        .map(|&cycles| {
            let angle = u() * std::f64::consts::PI;
            let freq = cycles * std::f64::consts::TAU / scale;
            (angle.cos() * freq, angle.sin() * freq, u() * std::f64::consts::TAU)
        })
        .collect();
    let angle = u() * std::f64::consts::TAU;
    let (gx, gy) = (angle.cos(), angle.sin());
    let cell = 4usize;
    let (nw, nh) = (width / cell + 2, height / cell + 2);
    let lattice: Vec<f64> = (0..nw * nh).map(|_| u() - 0.5).collect();

    let mut field = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let mut v = (gx * fx + gy * fy) / scale;
            for &(cx, cy, rad, amp) in &blobs {
                let d2 = ((fx - cx).powi(2) + (fy - cy).powi(2)) / (rad * rad);
                v += amp * (-d2 / 2.0).exp();
            }
            for &(kx, ky, phase) in &gratings {
                v += 0.4 * (kx * fx + ky * fy + phase).sin();
            }
            let (lx, ly) = (fx / cell as f64, fy / cell as f64);
            let (ix, iy) = (lx as usize, ly as usize);
            let (tx, ty) = (lx - ix as f64, ly - iy as f64);
            let at = |i: usize, j: usize| lattice[j * nw + i];
            let noise = at(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + at(ix + 1, iy) * tx * (1.0 - ty)
                + at(ix, iy + 1) * (1.0 - tx) * ty
                + at(ix + 1, iy + 1) * tx * ty;
            v += 0.5 * noise;
            field.push(v);
        }
    }

    // Rank-map onto evenly used levels.
    let n = field.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let mut pixels = vec![0u8; n];
    for (rank, &i) in order.iter().enumerate() {
        pixels[i] = (rank * 256 / n) as u8;
    }
    GrayImage::new(width, height, pixels)
}

/// Generates the full corpus in reference-major order.
pub fn generate(config: &SynthConfig) -> Result<Vec<SynthImage>> {
    if config.references == 0 || config.distortions.is_empty() {
        return Err(CeiqError::invalid("synthetic corpus needs references and distortions"));
    }
    for d in &config.distortions {
        d.validate()?;
    }
    let mut out = Vec::with_capacity(config.references * config.distortions.len());
    for r in 0..config.references {
        let base = reference_image(config.width, config.height, config.seed.wrapping_add(r as u64))?;
        let base = RgbImage::from_gray(&base);
        let ref_id = format!("ref{r:02}");
        for &d in &config.distortions {
            out.push(SynthImage {
                ref_id: ref_id.clone(),
                distortion: d,
                score: d.score(),
                image: d.apply(&base),
            });
        }
    }
    Ok(out)
}

/// Manifest describing `images` as stored under `dir` with
/// [`SynthImage::file_name`].
pub fn manifest_for(images: &[SynthImage], dir: &str) -> Result<DatasetManifest> {
    let entries = images
        .iter()
        .map(|img| ManifestEntry {
            image_path: if dir.is_empty() {
                img.file_name()
            } else {
                format!("{dir}/{}", img.file_name())
            },
            score: img.score,
            ref_id: img.ref_id.clone(),
        })
        .collect();
    DatasetManifest::new("synthetic", entries, Polarity::Mos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::compute_histogram;

    #[test]
    fn scores_of_simple_curves() {
        assert_eq!(Distortion::Contrast(1.0).score(), 100.0);
        assert_eq!(Distortion::MeanShift(0.0).score(), 100.0);
        assert_eq!(Distortion::Gamma(1.0).score(), 100.0);
        let levels = contrast_levels();
        let scores: Vec<f64> = levels.iter().map(Distortion::score).collect();
        assert!(scores.windows(2).all(|w| w[0] < w[1]), "{scores:?}");
        assert!(Distortion::MeanShift(100.0).score() < Distortion::MeanShift(30.0).score());
        assert!(Distortion::Gamma(3.2).score() < Distortion::Gamma(1.5).score());
    }

    #[test]
    fn contrast_is_centred() {
        let d = Distortion::Contrast(0.5);
        assert_eq!(d.apply_level(0), 64);
        assert_eq!(d.apply_level(255), 191);
    }

    #[test]
    fn references_use_levels_evenly() {
        let img = reference_image(64, 64, 1).unwrap();
        let h = compute_histogram(&img, 256).unwrap();
        assert!(h.counts().iter().all(|&c| c == 16));
        assert_ne!(img, reference_image(64, 64, 2).unwrap());
        assert_eq!(img, reference_image(64, 64, 1).unwrap());
    }

    #[test]
    fn corpus_layout() {
        let cfg = SynthConfig {
            references: 2,
            width: 32,
            height: 24,
            ..SynthConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        assert_eq!(corpus.len(), 40);
        let m = manifest_for(&corpus, "imgs").unwrap();
        assert_eq!(m.ref_ids(), vec!["ref00", "ref01"]);
        assert!(m.entries[0].image_path.starts_with("imgs/ref00_"));
        assert!(generate(&SynthConfig { distortions: vec![Distortion::Contrast(0.0)], ..cfg }).is_err());
    }
}
