//! Feature extraction over image files with an on-disk cache keyed by the
//! SHA-256 of each file's bytes and the feature configuration.
//!
//! The cache is a CSV file with header
//! `sha256,config,s_ge,e_g,e_e,e_ge,e_eg`. Values are written in shortest
//! round-trip form, so cached and freshly extracted features are identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ceiq::eval::{DatasetManifest, FeatureDataset};
use ceiq::features::{extract_decoded, FeatureConfig, FeatureVector, FEATURE_NAMES};
use ceiq::imageops::decode_image;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn config_key(config: &FeatureConfig) -> String {
    let s = &config.ssim;
    format!(
        "bins={};k1={};k2={};L={};win={};sigma={};exp={}/{}/{};ds={}",
        config.bins,
        s.k1,
        s.k2,
        s.dynamic_range,
        s.window_size,
        s.window_sigma,
        s.alpha,
        s.beta,
        s.gamma,
        u8::from(s.auto_downsample)
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct FeatureCache {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, String), FeatureVector>,
    dirty: bool,
    pub hits: usize,
    pub misses: usize,
}

impl FeatureCache {
    /// A cache that lives only for this process.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Cache stored next to `manifest` as `<stem>.features.csv`. An unreadable
    /// or malformed cache file is ignored and rewritten.
    pub fn beside(manifest: &Path) -> Self {
        let stem = manifest.file_stem().map_or_else(|| "manifest".into(), |s| s.to_string_lossy().into_owned());
        let path = manifest.with_file_name(format!("{stem}.features.csv"));
        let entries = fs::read_to_string(&path).ok().and_then(|text| parse_cache(&text)).unwrap_or_default();
        Self {
            path: Some(path),
            entries,
            ..Self::default()
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn get(&self, hash: &str, key: &str) -> Option<FeatureVector> {
        self.entries.get(&(hash.to_string(), key.to_string())).copied()
    }

    fn insert(&mut self, hash: String, key: String, fv: FeatureVector) {
        self.entries.insert((hash, key), fv);
        self.dirty = true;
    }

    pub fn save(&mut self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if !self.dirty {
            return Ok(());
        }
        let mut text = format!("sha256,config,{}\n", FEATURE_NAMES.join(","));
        for ((hash, key), fv) in &self.entries {
            let values: Vec<String> = fv.to_array().iter().map(f64::to_string).collect();
            text.push_str(&format!("{hash},{key},{}\n", values.join(",")));
        }
        let tmp = path.with_extension("csv.tmp");
        fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| CliError::io(path, e))?;
        self.dirty = false;
        Ok(())
    }
}

fn parse_cache(text: &str) -> Option<BTreeMap<(String, String), FeatureVector>> {
    let mut lines = text.lines();
    if lines.next()? != format!("sha256,config,{}", FEATURE_NAMES.join(",")) {
        return None;
    }
    let mut out = BTreeMap::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + FEATURE_NAMES.len() {
            return None;
        }
        let mut v = [0.0; 5];
        for (slot, field) in v.iter_mut().zip(&fields[2..]) {
            *slot = field.parse().ok()?;
        }
        out.insert((fields[0].to_string(), fields[1].to_string()), FeatureVector::from_array(v));
    }
    Some(out)
}

/// Extracts features for each path, in input order. Work runs on the current
/// rayon pool; results do not depend on its size.
pub fn extract_paths(paths: &[PathBuf], config: &FeatureConfig, cache: &mut FeatureCache) -> Vec<Result<FeatureVector>> {
    let key = config_key(config);
    let hashed: Vec<Result<(Vec<u8>, String)>> = paths
        .par_iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            let hash = sha256_hex(&bytes);
            Ok((bytes, hash))
        })
        .collect();

    let fresh: Vec<Option<Result<FeatureVector>>> = hashed
        .par_iter()
        .zip(paths)
        .map(|(item, path)| match item {
            Ok((bytes, hash)) if cache.get(hash, &key).is_none() => Some(
                decode_image(bytes, path)
                    .and_then(|img| extract_decoded(&img, config))
                    .map_err(|e| with_path(path, e)),
            ),
            _ => None,
        })
        .collect();

    hashed
        .into_iter()
        .zip(fresh)
        .map(|(item, fresh)| {
            let (_, hash) = item?;
            match fresh {
                None => {
                    cache.hits += 1;
                    Ok(cache.get(&hash, &key).expect("cached"))
                }
                Some(result) => {
                    cache.misses += 1;
                    let fv = result?;
                    cache.insert(hash, key.clone(), fv);
                    Ok(fv)
                }
            }
        })
        .collect()
}

fn with_path(path: &Path, e: ceiq::CeiqError) -> CliError {
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        CliError::Numeric(m) => CliError::Numeric(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Image paths in a manifest are relative to the manifest's directory.
pub fn resolve(manifest_path: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new("")).join(p)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let name = path.file_stem().map_or_else(|| "manifest".into(), |s| s.to_string_lossy().into_owned());
    DatasetManifest::parse_csv(name, &text).map_err(|e| match CliError::from(e) {
        CliError::Parse(m) | CliError::Usage(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads a manifest and extracts every entry's features. Any failing image
/// aborts with an error naming its path.
pub fn load_dataset(path: &Path, config: &FeatureConfig, use_cache: bool) -> Result<(FeatureDataset, FeatureCache)> {
    let manifest = load_manifest(path)?;
    let mut cache = if use_cache {
        FeatureCache::beside(path)
    } else {
        FeatureCache::in_memory()
    };
    let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| resolve(path, &e.image_path)).collect();
    let features = extract_paths(&paths, config, &mut cache).into_iter().collect::<Result<Vec<_>>>()?;
    cache.save()?;
    Ok((FeatureDataset::new(manifest, features)?, cache))
}
