//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Set `CEIQ_DATASETS` to a directory holding `csiq.csv`, `tid2013.csv`,
//! `cid2013.csv` and/or `ccid2014.csv` manifests (contrast subsets) to check
//! published numbers; otherwise criterion 5 runs on the synthetic corpus.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ceiq::eval::{krocc, median, run_protocol, split_ratio_sweep, srocc, FeatureDataset, SplitProtocol};
use ceiq::features::{cross_entropy, entropy, extract_decoded, extract_features, FeatureConfig, FeatureVector};
use ceiq::imageops::{compute_histogram, equalize, load_image, to_gray, DecodedImage, GrayImage, Histogram, RgbImage};
use ceiq::rng;
use ceiq::ssim::{ssim, SsimParams};
use ceiq::svr::{self, primal_objective, SvrParams, TrainingSet};
use ceiq::synth::{self, contrast_levels, Distortion, SynthConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str, failures: &mut Vec<String>) {
    if (got - want).abs() > tol {
        failures.push(format!("{what}: {got} vs {want}"));
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

fn natural(name: &str) -> RgbImage {
    match load_image(data_dir().join(name)).unwrap() {
        DecodedImage::Rgb(img) => img,
        DecodedImage::Gray(g) => RgbImage::from_gray(&g),
    }
}

fn synthetic_dataset(config: &SynthConfig) -> FeatureDataset {
    let corpus = synth::generate(config).unwrap();
    let features = corpus.iter().map(|s| extract_features(&s.image).unwrap()).collect();
    FeatureDataset::new(synth::manifest_for(&corpus, "").unwrap(), features).unwrap()
}

fn formula_units() -> Outcome {
    let mut f = Vec::new();
    let gray = |rgb: [u8; 3]| to_gray(&RgbImage::new(1, 1, vec![rgb]).unwrap()).pixels()[0];
    for (rgb, want) in [([255, 255, 255], 255), ([0, 0, 0], 0), ([255, 0, 0], 76)] {
        if gray(rgb) != want {
            f.push(format!("gray{rgb:?} = {}", gray(rgb)));
        }
    }
    let hist = |p: &[u64]| Histogram::from_counts(p.to_vec()).unwrap();
    close(entropy(&hist(&[1, 3])).unwrap(), 0.811278, 1e-6, "entropy(0.25, 0.75)", &mut f);
    close(entropy(&hist(&[1; 128])).unwrap(), 7.0, 1e-6, "entropy(uniform 128)", &mut f);
    close(entropy(&hist(&[0, 5, 0])).unwrap(), 0.0, 1e-6, "entropy(single bin)", &mut f);
    close(cross_entropy(&hist(&[1, 1]), &hist(&[1, 3])).unwrap(), 1.207519, 1e-6, "cross(0.5,0.5 | 0.25,0.75)", &mut f);
    close(cross_entropy(&hist(&[1, 0]), &hist(&[1, 1])).unwrap(), 1.0, 1e-6, "cross(1,0 | 0.5,0.5)", &mut f);
    let p = hist(&[2, 7, 1, 5]);
    close(cross_entropy(&p, &p).unwrap(), entropy(&p).unwrap(), 1e-12, "cross(p, p)", &mut f);

    let h = compute_histogram(&GrayImage::new(4, 1, vec![0, 2, 4, 6]).unwrap(), 128).unwrap();
    if h.counts()[..4] != [1, 1, 1, 1] {
        f.push("histogram of {0,2,4,6}".into());
    }
    let eq = equalize(&GrayImage::new(2, 1, vec![0, 255]).unwrap());
    if eq.pixels() != [128, 255] {
        f.push(format!("equalize {{0,255}} = {:?}", eq.pixels()));
    }

    let mut r = rng::seeded(1);
    let img = GrayImage::from_fn(64, 64, |_, _| rng::uniform_below(&mut r, 256) as u8).unwrap();
    let params = SsimParams::default();
    close(ssim(&img, &img, &params).unwrap().mean_ssim, 1.0, 1e-12, "ssim(x, x)", &mut f);
    let black = GrayImage::from_fn(64, 64, |_, _| 0).unwrap();
    let white = GrayImage::from_fn(64, 64, |_, _| 255).unwrap();
    let s = ssim(&black, &white, &params).unwrap().mean_ssim;
    close(s, 1.0e-4, 1e-6, "ssim(black, white)", &mut f);
    check(f.is_empty(), if f.is_empty() { format!("gray, entropy, cross entropy, HE and SSIM values exact; black vs white {s:.4e}") } else { f.join("; ") })
}

fn oracle_equivalence() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng::seeded(0xACC);
    let params = SsimParams {
        auto_downsample: false,
        ..SsimParams::default()
    };
    let mut ssim_err = 0.0f64;
    for pair in 0..20 {
        let a = GrayImage::from_fn(32, 32, |_, _| rng::uniform_below(&mut r, 256) as u8).unwrap();
        let b = if pair % 2 == 0 {
            GrayImage::from_fn(32, 32, |_, _| rng::uniform_below(&mut r, 256) as u8).unwrap()
        } else {
            let noise: Vec<u8> = (0..32 * 32).map(|_| rng::uniform_below(&mut r, 40) as u8).collect();
            GrayImage::from_fn(32, 32, |x, y| a.get(x, y).saturating_add(noise[y * 32 + x])).unwrap()
        };
        let fv = |g: &GrayImage| g.pixels().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        let fast = ssim(&a, &b, &params).unwrap().mean_ssim;
        let slow = oracles::brute_force_ssim(&fv(&a), &fv(&b), 32, 32, 11, 1.5, 0.01, 0.03, 255.0);
        ssim_err = ssim_err.max((fast - slow).abs());
    }
    if ssim_err >= 1e-8 {
        f.push(format!("SSIM error {ssim_err:e}"));
    }

    let mut srocc_err = 0.0f64;
    let mut krocc_mismatch = 0;
    for trial in 0..200 {
        let n = 2 + rng::uniform_below(&mut r, 49) as usize;
        let levels = if trial % 3 == 0 { 1000 } else { 2 + rng::uniform_below(&mut r, 8) };
        let x: Vec<f64> = (0..n).map(|_| rng::uniform_below(&mut r, levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng::uniform_below(&mut r, levels) as f64).collect();
        let want = oracles::spearman_oracle(&x, &y);
        if let Ok(got) = srocc(&x, &y) {
            srocc_err = srocc_err.max((got - want).abs());
        } else if want.is_finite() {
            f.push(format!("SROCC failed where oracle gave {want}"));
        }
        let want = oracles::kendall_oracle(&x, &y);
        match krocc(&x, &y) {
            Ok(got) if got == want => {}
            Err(_) if !want.is_finite() => {}
            _ => krocc_mismatch += 1,
        }
    }
    if srocc_err >= 1e-12 {
        f.push(format!("SROCC error {srocc_err:e}"));
    }
    if krocc_mismatch > 0 {
        f.push(format!("{krocc_mismatch} KROCC mismatches"));
    }

    let configs = [(1.0, 0.1), (10.0, 0.1), (1.0, 0.5), (100.0, 0.0), (0.1, 0.2)];
    let mut svr_rel = 0.0f64;
    for case in 0..10u64 {
        let n = 20 + (case as usize * 19) % 181;
        let (c, eps) = configs[case as usize % configs.len()];
        let mut r = rng::seeded(500 + case);
        let truth: [f64; 5] = std::array::from_fn(|_| 4.0 * rng::unit(&mut r) - 2.0);
        let samples = (0..n)
            .map(|_| {
                let x: [f64; 5] = std::array::from_fn(|j| rng::unit(&mut r) * (1.0 + j as f64));
                let q = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + (rng::unit(&mut r) - 0.5);
                (FeatureVector::from_array(x), q)
            })
            .collect();
        let ts = TrainingSet::new(samples);
        let params = SvrParams {
            c,
            epsilon: eps,
            seed: case,
            ..SvrParams::default()
        };
        let model = svr::train(&ts, &params).unwrap();
        let x: Vec<[f64; 5]> = ts.samples.iter().map(|(fv, _)| model.scaling.apply(fv)).collect();
        let y: Vec<f64> = ts.samples.iter().map(|s| s.1).collect();
        let ours = primal_objective(&x, &y, &model.weights, model.bias, c, eps);
        let oracle = oracles::svr_oracle(&x, &y, c, eps, 200_000);
        svr_rel = svr_rel.max((ours - oracle.primal).abs() / oracle.primal.abs().max(1e-12));
    }
    if svr_rel > 1e-4 {
        f.push(format!("SVR objective relative error {svr_rel:e}"));
    }
    check(
        f.is_empty(),
        if f.is_empty() {
            format!("SSIM max error {ssim_err:.1e}, SROCC {srocc_err:.1e}, KROCC exact, SVR objective {svr_rel:.1e} relative")
        } else {
            f.join("; ")
        },
    )
}

fn premise() -> Outcome {
    let names = ["coffee.png", "chelsea.png", "astronaut.png", "rocket.png", "camera.png", "coins.png", "motorcycle_left.png"];
    let mut increasing = Vec::new();
    for name in names {
        let img = natural(name);
        let s: Vec<f64> = [0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&c| extract_features(&Distortion::Contrast(c).apply(&img)).unwrap().s_ge)
            .collect();
        if s.windows(2).all(|w| w[0] < w[1]) {
            increasing.push(name);
        }
    }

    let config = SynthConfig {
        distortions: contrast_levels(),
        ..SynthConfig::default()
    };
    let corpus = synth::generate(&config).unwrap();
    let s_ge: Vec<f64> = corpus.iter().map(|s| extract_features(&s.image).unwrap().s_ge).collect();
    let factor: Vec<f64> = corpus
        .iter()
        .map(|s| match s.distortion {
            Distortion::Contrast(c) => c,
            _ => unreachable!(),
        })
        .collect();
    let per_ref = config.distortions.len();
    let per_ref_min = (0..config.references)
        .map(|r| srocc(&s_ge[r * per_ref..(r + 1) * per_ref], &factor[r * per_ref..(r + 1) * per_ref]).unwrap())
        .fold(f64::INFINITY, f64::min);
    let pooled = srocc(&s_ge, &factor).unwrap();
    let mut sorted_s = s_ge.clone();
    sorted_s.sort_by(f64::total_cmp);
    let mut sorted_f = factor.clone();
    sorted_f.sort_by(f64::total_cmp);
    let bound = srocc(&sorted_s, &sorted_f).unwrap();

    let detail = format!(
        "strictly increasing on {}/{} natural images {increasing:?}; synthetic per-reference SROCC min {per_ref_min}, pooled {pooled:.6} (tie bound {bound:.6})",
        increasing.len(),
        names.len()
    );
    check(increasing.len() >= 3 && per_ref_min == 1.0 && pooled == bound, detail)
}

fn ceiq_bin(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ceiq"));
    cmd.args(args).env_remove("CEIQ_THREADS");
    if let Some(t) = threads {
        cmd.env("CEIQ_THREADS", t);
    }
    cmd.output().unwrap()
}

fn reproducibility(workdir: &Path) -> Outcome {
    let dir = workdir.join("repro");
    let o = ceiq_bin(&["synthesize", dir.to_str().unwrap()], None);
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    let manifest = dir.join("manifest.csv");
    let m = manifest.to_str().unwrap();
    let args = ["evaluate", m, "--repetitions", "1000", "--seed", "42"];

    let start = Instant::now();
    let first = ceiq_bin(&args, None);
    let cold = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let second = ceiq_bin(&args, None);
    let warm = start.elapsed().as_secs_f64();
    let single = ceiq_bin(&args, Some("1"));
    let three = ceiq_bin(&args, Some("3"));
    let ok_runs = [&first, &second, &single, &three].iter().all(|o| o.status.success());
    let identical = first.stdout == second.stdout && first.stdout == single.stdout && first.stdout == three.stdout;
    let images = serde_json::from_slice::<serde_json::Value>(&first.stdout).map(|v| v["images"].clone()).unwrap_or_default();
    check(
        ok_runs && identical && images == 200 && cold < 60.0,
        format!("{images} images x 1000 repetitions: byte-identical across runs and 1/3/all threads: {identical}; {cold:.1} s with extraction, {warm:.1} s from cache"),
    )
}

/// Published medians: (manifest stem, trained SROCC, s_ge-only SROCC).
const PUBLISHED: [(&str, f64, f64); 4] = [("csiq", 0.9475, 0.6154), ("tid2013", 0.8193, 0.6491), ("cid2013", 0.8934, 0.8431), ("ccid2014", 0.8363, 0.8120)];

fn published_numbers(earlier_passed: bool) -> Outcome {
    let dir = std::env::var_os("CEIQ_DATASETS").map(PathBuf::from);
    let available: Vec<_> = PUBLISHED
        .iter()
        .filter_map(|&(name, trained, s_only)| {
            let path = dir.as_ref()?.join(format!("{name}.csv"));
            path.exists().then_some((name, path, trained, s_only))
        })
        .collect();
    if available.is_empty() {
        let data = synthetic_dataset(&SynthConfig::default());
        let report = run_protocol(&data, &SplitProtocol::default(), &SvrParams::default()).unwrap();
        return check(
            earlier_passed && report.median_srocc >= 0.95,
            format!(
                "databases not available; synthetic corpus median SROCC {:.4} over 1000 splits, criteria 1-4 {}",
                report.median_srocc,
                if earlier_passed { "passed" } else { "did not all pass" }
            ),
        );
    }
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, path, trained, s_only) in available {
        let manifest = ceiq::DatasetManifest::load(&path).unwrap();
        let config = FeatureConfig::default();
        let features: Vec<FeatureVector> = manifest
            .entries
            .iter()
            .map(|e| {
                let p = path.parent().unwrap().join(&e.image_path);
                extract_decoded(&load_image(&p).unwrap(), &config).unwrap()
            })
            .collect();
        let s_ge: Vec<f64> = features.iter().map(|f| f.s_ge).collect();
        let raw = srocc(&s_ge, &manifest.scores()).unwrap().abs();
        let data = FeatureDataset::new(manifest, features).unwrap();
        let med = run_protocol(&data, &SplitProtocol::default(), &SvrParams::default()).unwrap().median_srocc.abs();
        let good = (med - trained).abs() <= 0.05 && (raw - s_only).abs() <= 0.03;
        ok &= good;
        lines.push(format!("{name}: median {med:.4} (published {trained}), s_ge {raw:.4} (published {s_only})"));
    }
    check(ok, lines.join("; "))
}

fn runtime(workdir: &Path) -> Outcome {
    // 768x512 RGB image: a natural photo upscaled by pixel replication.
    let src = natural("coffee.png");
    let (sw, sh) = (src.width(), src.height());
    let img = RgbImage::from_fn(768, 512, |x, y| src.get(x * sw / 768, y * sh / 512)).unwrap();
    let decoded = DecodedImage::Rgb(img.clone());
    let config = FeatureConfig::default();
    extract_decoded(&decoded, &config).unwrap();
    let times: Vec<f64> = (0..11)
        .map(|_| {
            let start = Instant::now();
            extract_decoded(&decoded, &config).unwrap();
            start.elapsed().as_secs_f64()
        })
        .collect();
    let med = median(&times).unwrap();

    let path = workdir.join("bench768.png");
    let bytes: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    image::save_buffer(&path, &bytes, 768, 512, image::ExtendedColorType::Rgb8).unwrap();
    let o = ceiq_bin(&["bench", path.to_str().unwrap(), "--repetitions", "5"], None);
    let csv = String::from_utf8_lossy(&o.stdout).into_owned();
    let stages: Vec<&str> = csv.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
    let breakdown = o.status.success() && stages == ceiq_cli::bench::STAGES;
    check(
        med < 0.2 && breakdown,
        format!("768x512 extraction median {:.1} ms over 11 runs; bench stages {stages:?}", med * 1e3),
    )
}

fn ratio_sweep() -> Outcome {
    let data = synthetic_dataset(&SynthConfig::default());
    let ratios: Vec<f64> = (1..=8).map(|k| k as f64 / 10.0).collect();
    let protocol = SplitProtocol {
        repetitions: 200,
        ..SplitProtocol::default()
    };
    let sweep = split_ratio_sweep(&data, &ratios, &protocol, &SvrParams::default()).unwrap();
    let values: Vec<f64> = sweep.iter().map(|p| p.median_srocc).collect();
    let spread = values.iter().copied().fold(f64::MIN, f64::max) - values.iter().copied().fold(f64::MAX, f64::min);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    check(spread <= 0.08, format!("median SROCC at 0.1..0.8 = [{}], spread {spread:.4}", shown.join(", ")))
}

type Record = (u32, &'static str, Outcome);

fn run(results: &mut Vec<Record>, id: u32, name: &'static str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = f();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id} {tag} {name} ({:.1} s): {detail}", start.elapsed().as_secs_f64()).unwrap();
    results.push((id, name, outcome));
}

fn main() {
    let workdir = std::env::temp_dir().join(format!("ceiq-acceptance-{}", std::process::id()));
    fs::create_dir_all(&workdir).unwrap();
    let mut results = Vec::new();
    run(&mut results, 1, "formula units", formula_units);
    run(&mut results, 2, "oracle equivalence", oracle_equivalence);
    run(&mut results, 3, "contrast premise", premise);
    run(&mut results, 4, "protocol reproducibility", || reproducibility(&workdir));
    let earlier = results.iter().all(|r| r.2.is_ok());
    run(&mut results, 5, "published numbers", || published_numbers(earlier));
    run(&mut results, 6, "runtime", || runtime(&workdir));
    run(&mut results, 7, "split-ratio sweep", ratio_sweep);
    let _ = fs::remove_dir_all(&workdir);

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len()).unwrap();
    if !failed.is_empty() {
        writeln!(out, "failed: {failed:?}").unwrap();
        std::process::exit(1);
    }
}
