//! Per-stage wall-clock timings of feature extraction.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ceiq::eval::median;
use ceiq::features::{cross_entropy, entropy, extract_decoded, FeatureConfig};
use ceiq::imageops::{compute_histogram, equalize, load_image, DecodedImage};
use ceiq::ssim::ssim;

use crate::emit;
use crate::error::{CliError, Result};

pub const STAGES: [&str; 5] = ["decolorize", "equalize", "ssim", "histograms_entropies", "total"];

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

fn seconds<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

/// Times each stage `repetitions` times. `total` is a separate end-to-end
/// extraction, not the sum of the stages.
pub fn measure(img: &DecodedImage, repetitions: usize, config: &FeatureConfig) -> Result<Vec<StageTiming>> {
    if repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be positive".into()));
    }
    let mut samples = vec![Vec::with_capacity(repetitions); STAGES.len()];
    for _ in 0..repetitions {
        let (gray, t) = seconds(|| img.to_gray());
        samples[0].push(t);
        let (eq, t) = seconds(|| equalize(&gray));
        samples[1].push(t);
        let (s, t) = seconds(|| ssim(&gray, &eq, &config.ssim));
        s?;
        samples[2].push(t);
        let (h, t) = seconds(|| -> ceiq::Result<()> {
            let hg = compute_histogram(&gray, config.bins)?;
            let he = compute_histogram(&eq, config.bins)?;
            entropy(&hg)?;
            entropy(&he)?;
            cross_entropy(&hg, &he)?;
            cross_entropy(&he, &hg)?;
            Ok(())
        });
        h?;
        samples[3].push(t);
        let (fv, t) = seconds(|| extract_decoded(img, config));
        fv?;
        samples[4].push(t);
    }
    Ok(STAGES
        .iter()
        .zip(samples)
        .map(|(&stage, s)| StageTiming {
            stage,
            median: median(&s).expect("nonempty"),
            min: s.iter().copied().fold(f64::INFINITY, f64::min),
            max: s.iter().copied().fold(0.0, f64::max),
        })
        .collect())
}

pub fn bench(path: &Path, repetitions: usize, config: &FeatureConfig, output: Option<&Path>, out: &mut dyn Write, diag: &mut dyn Write) -> Result<()> {
    let img = load_image(path)?;
    let timings = measure(&img, repetitions, config)?;
    let mut text = String::from("stage,median_seconds,min_seconds,max_seconds,repetitions\n");
    for t in &timings {
        text.push_str(&format!("{},{:.6},{:.6},{:.6},{repetitions}\n", t.stage, t.median, t.min, t.max));
    }
    emit(output, out, &text)?;
    writeln!(diag, "{} ({}x{}), median of {repetitions}:", path.display(), img.width(), img.height())?;
    for t in &timings {
        writeln!(diag, "  {:<22}{:>10.2} ms", t.stage, t.median * 1e3)?;
    }
    Ok(())
}
