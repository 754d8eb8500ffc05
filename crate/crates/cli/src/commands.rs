use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ceiq::eval::{self, cross_database_with, run_protocol, srocc, EvaluationReport, FeatureDataset, SplitProtocol};
use ceiq::features::{FeatureConfig, FEATURE_NAMES};
use ceiq::imageops::load_image;
use ceiq::svr::{self, SvrModel, TrainingSet};
use ceiq::synth::{self, SynthConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{self, FeatureCache};
use crate::error::{CliError, Result};
use crate::{emit, format_significant, Command, FeatureName, SynthArgs};

pub fn dispatch(command: Command, out: &mut dyn Write, diag: &mut dyn Write) -> Result<()> {
    match command {
        Command::Extract {
            images,
            manifest,
            output,
            features,
        } => extract(&images, manifest.as_deref(), output.as_deref(), &features.config()?, out, diag),
        Command::Train {
            manifest,
            output,
            svr,
            seed,
            features,
            cache,
        } => train(&manifest, &output, &svr.params(seed)?, &features.config()?, !cache.no_cache, diag),
        Command::Predict { model, images, features } => predict(&model, &images, &features.config()?, out),
        Command::Evaluate {
            manifest,
            protocol,
            svr,
            output,
            splits_csv,
            features,
            cache,
        } => {
            let protocol = SplitProtocol {
                train_fraction: protocol.fraction,
                repetitions: protocol.repetitions,
                base_seed: protocol.seed,
                logistic: protocol.logistic.into(),
            };
            let splits_csv = splits_csv.or_else(|| output.as_ref().map(|o| sibling(o, "splits.csv")));
            evaluate(
                &manifest,
                &protocol,
                &svr.params(protocol.base_seed)?,
                &features.config()?,
                !cache.no_cache,
                output.as_deref(),
                splits_csv.as_deref(),
                out,
                diag,
            )
        }
        Command::Crossdb {
            train_manifest,
            test_manifest,
            svr,
            seed,
            logistic,
            output,
            features,
            cache,
        } => {
            let config = features.config()?;
            let (train, _) = cache::load_dataset(&train_manifest, &config, !cache.no_cache)?;
            let (test, _) = cache::load_dataset(&test_manifest, &config, !cache.no_cache)?;
            let report = cross_database_with(&train, &test, &svr.params(seed)?, logistic.into())?;
            writeln!(
                diag,
                "trained on {} ({}), tested on {} ({}): SROCC {:.4} PLCC {:.4} KROCC {:.4}",
                report.train_dataset, report.train_polarity, report.test_dataset, report.test_polarity, report.srocc, report.plcc, report.krocc
            )?;
            let doc = Document::new(&config, &report);
            emit(output.as_deref(), out, &to_json(&doc)?)
        }
        Command::Bench {
            image,
            repetitions,
            output,
            features,
        } => crate::bench::bench(&image, repetitions, &features.config()?, output.as_deref(), out, diag),
        Command::Scatter {
            manifest,
            synthesize,
            feature,
            output,
            synth,
            features,
            cache,
        } => {
            let manifest = match (manifest, synthesize) {
                (_, Some(dir)) => synthesize_corpus(&dir, &synth, diag)?,
                (Some(m), None) => m,
                (None, None) => return Err(CliError::Usage("give a manifest or --synthesize DIR".into())),
            };
            scatter(&manifest, feature, &features.config()?, !cache.no_cache, output.as_deref(), out, diag)
        }
        Command::Synthesize { dir, synth } => synthesize_corpus(&dir, &synth, diag).map(|_| ()),
    }
}

/// `dir/stem.suffix` for an output file `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// JSON envelope shared by report-producing commands.
#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    features: &'a FeatureConfig,
    #[serde(flatten)]
    report: &'a T,
}

impl<'a, T: Serialize> Document<'a, T> {
    fn new(features: &'a FeatureConfig, report: &'a T) -> Self {
        Self {
            tool: "ceiq",
            version: env!("CARGO_PKG_VERSION"),
            features,
            report,
        }
    }
}

pub fn extract(images: &[PathBuf], manifest: Option<&Path>, output: Option<&Path>, config: &FeatureConfig, out: &mut dyn Write, diag: &mut dyn Write) -> Result<()> {
    // (label printed in the CSV, path on disk)
    let mut items: Vec<(String, PathBuf)> = Vec::new();
    if let Some(m) = manifest {
        for e in cache::load_manifest(m)?.entries {
            let path = cache::resolve(m, &e.image_path);
            items.push((e.image_path, path));
        }
    }
    items.extend(images.iter().map(|p| (p.display().to_string(), p.clone())));
    if items.is_empty() {
        return Err(CliError::Usage("no images given".into()));
    }

    let paths: Vec<PathBuf> = items.iter().map(|(_, p)| p.clone()).collect();
    let results = cache::extract_paths(&paths, config, &mut FeatureCache::in_memory());
    let mut text = format!("image_path,{}\n", FEATURE_NAMES.join(","));
    let mut first_error = None;
    let mut ok = 0usize;
    for ((label, _), result) in items.iter().zip(results) {
        match result {
            Ok(fv) => {
                let cells: Vec<String> = fv.to_array().iter().map(|v| format_significant(*v, 9)).collect();
                text.push_str(&format!("{},{}\n", csv_field(label), cells.join(",")));
                ok += 1;
            }
            Err(e) => {
                writeln!(diag, "warning: skipped: {e}")?;
                first_error.get_or_insert(e);
            }
        }
    }
    if ok == 0 {
        let e = first_error.expect("at least one item");
        return Err(match e {
            CliError::Io(m) => CliError::Io(format!("no image could be processed; first error: {m}")),
            CliError::Parse(m) => CliError::Parse(format!("no image could be processed; first error: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("no image could be processed; first error: {m}")),
            CliError::Usage(m) => CliError::Usage(format!("no image could be processed; first error: {m}")),
        });
    }
    emit(output, out, &text)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn training_set(data: &FeatureDataset) -> TrainingSet {
    TrainingSet {
        samples: data.features.iter().copied().zip(data.manifest.scores()).collect(),
        name: data.manifest.name.clone(),
        polarity: data.manifest.polarity,
    }
}

pub fn train(manifest: &Path, output: &Path, params: &svr::SvrParams, config: &FeatureConfig, use_cache: bool, diag: &mut dyn Write) -> Result<()> {
    let (data, cache) = cache::load_dataset(manifest, config, use_cache)?;
    writeln!(diag, "features: {} cached, {} extracted", cache.hits, cache.misses)?;
    let mut model = svr::train(&training_set(&data), params)?;
    model.comments = vec![
        format!("dataset {} ({}), {} samples", data.manifest.name, data.manifest.polarity, data.manifest.len()),
        format!("features {}", cache::config_key(config)),
        format!("seed {}", params.seed),
    ];
    fs::write(output, model.serialize()).map_err(|e| CliError::io(output, e))
}

pub fn predict(model_path: &Path, images: &[PathBuf], config: &FeatureConfig, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(model_path).map_err(|e| CliError::io(model_path, e))?;
    let model = SvrModel::deserialize(&text).map_err(|e| CliError::Parse(format!("{}: {e}", model_path.display())))?;
    let scores: Vec<Result<f64>> = images
        .par_iter()
        .map(|p| {
            let img = load_image(p)?;
            let fv = ceiq::features::extract_decoded(&img, config).map_err(|e| prefix(p, e))?;
            Ok(model.predict(&fv)?)
        })
        .collect();
    for (path, score) in images.iter().zip(scores) {
        writeln!(out, "{}\t{}", path.display(), format_significant(score?, 9))?;
    }
    Ok(())
}

fn prefix(path: &Path, e: ceiq::CeiqError) -> CliError {
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        CliError::Numeric(m) => CliError::Numeric(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    manifest: &Path,
    protocol: &SplitProtocol,
    params: &svr::SvrParams,
    config: &FeatureConfig,
    use_cache: bool,
    output: Option<&Path>,
    splits_csv: Option<&Path>,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<()> {
    if !(protocol.train_fraction > 0.0 && protocol.train_fraction < 1.0) {
        return Err(CliError::Usage(format!("--fraction must lie strictly between 0 and 1, got {}", protocol.train_fraction)));
    }
    if protocol.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be positive".into()));
    }
    let (data, cache) = cache::load_dataset(manifest, config, use_cache)?;
    writeln!(diag, "features: {} cached, {} extracted", cache.hits, cache.misses)?;
    let report = run_protocol(&data, protocol, params)?;
    writeln!(
        diag,
        "{} ({}): median SROCC {:.4} PLCC {:.4} KROCC {:.4} over {} splits, {} skipped",
        report.dataset,
        report.polarity,
        report.median_srocc,
        report.median_plcc,
        report.median_krocc,
        report.per_split.len(),
        report.skipped_count
    )?;
    if let Some(path) = splits_csv {
        fs::write(path, splits_table(&report)).map_err(|e| CliError::io(path, e))?;
    }
    emit(output, out, &to_json(&Document::new(config, &report))?)
}

/// Per-split CSV: one row per repetition in index order, skipped ones with
/// empty statistics.
pub fn splits_table(report: &EvaluationReport) -> String {
    let betas = match report.protocol.logistic {
        eval::LogisticKind::FiveParameter => 5,
        eval::LogisticKind::FourParameter => 4,
    };
    let mut text = String::from("repetition,seed,status,n_train,n_test,srocc,plcc,krocc");
    for k in 1..=betas {
        text.push_str(&format!(",beta{k}"));
    }
    text.push('\n');
    let mut rows: Vec<(usize, String)> = report
        .per_split
        .iter()
        .map(|s| {
            let params: Vec<String> = s.logistic_params.iter().map(f64::to_string).collect();
            (
                s.repetition,
                format!("{},{},ok,{},{},{},{},{},{}\n", s.repetition, s.seed, s.n_train, s.n_test, s.srocc, s.plcc, s.krocc, params.join(",")),
            )
        })
        .chain(
            report
                .skipped
                .iter()
                .map(|s| (s.repetition, format!("{},{},skipped,,,,,{}\n", s.repetition, s.seed, ",".repeat(betas)))),
        )
        .collect();
    rows.sort_by_key(|r| r.0);
    rows.into_iter().for_each(|(_, r)| text.push_str(&r));
    text
}

pub fn scatter(manifest: &Path, feature: FeatureName, config: &FeatureConfig, use_cache: bool, output: Option<&Path>, out: &mut dyn Write, diag: &mut dyn Write) -> Result<()> {
    let (data, _) = cache::load_dataset(manifest, config, use_cache)?;
    let values: Vec<f64> = data.features.iter().map(|f| f.get(feature.as_str()).expect("known feature")).collect();
    let scores = data.manifest.scores();
    let rho = srocc(&values, &scores)?;
    let mut text = format!("{},{}\n", data.manifest.polarity.to_string().to_lowercase(), feature.as_str());
    for (q, v) in scores.iter().zip(&values) {
        text.push_str(&format!("{q},{v}\n"));
    }
    emit(output, out, &text)?;
    writeln!(diag, "SROCC({}, {}) = {rho:.4}", feature.as_str(), data.manifest.polarity)?;
    Ok(())
}

/// Writes the synthetic corpus as grayscale PNGs plus `manifest.csv` and
/// returns the manifest path.
pub fn synthesize_corpus(dir: &Path, args: &SynthArgs, diag: &mut dyn Write) -> Result<PathBuf> {
    let config = SynthConfig {
        references: args.references,
        width: args.width,
        height: args.height,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let corpus = synth::generate(&config)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    corpus.par_iter().try_for_each(|s| {
        let path = dir.join(s.file_name());
        let gray: Vec<u8> = s.image.pixels().iter().map(|p| p[0]).collect();
        image::save_buffer(&path, &gray, s.image.width() as u32, s.image.height() as u32, image::ExtendedColorType::L8).map_err(|e| CliError::io(&path, e))
    })?;
    let manifest = synth::manifest_for(&corpus, "")?;
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest.to_csv()).map_err(|e| CliError::io(&path, e))?;
    writeln!(diag, "wrote {} images and {}", corpus.len(), path.display())?;
    Ok(path)
}
