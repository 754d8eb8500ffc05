//! Evaluation against subjective scores: rank and linear correlation,
//! logistic mapping, reference-disjoint repeated splits, cross-database
//! runs and training-ratio sweeps.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CeiqError, Result};
use crate::features::FeatureVector;
use crate::rng;
use crate::svr::{self, SvrParams, TrainingSet};

/// Orientation of subjective scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Mean opinion score, higher is better.
    #[default]
    #[serde(rename = "MOS")]
    Mos,
    /// Differential mean opinion score, lower is better.
    #[serde(rename = "DMOS")]
    Dmos,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Mos => "MOS",
            Polarity::Dmos => "DMOS",
        })
    }
}

impl FromStr for Polarity {
    type Err = CeiqError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MOS" => Ok(Polarity::Mos),
            "DMOS" => Ok(Polarity::Dmos),
            other => Err(CeiqError::invalid(format!("unknown polarity `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: String,
    pub score: f64,
    pub ref_id: String,
}

/// A list of images with subjective scores, grouped by reference image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
    pub polarity: Polarity,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, entries: Vec<ManifestEntry>, polarity: Polarity) -> Result<Self> {
        let m = Self {
            name: name.into(),
            entries,
            polarity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(CeiqError::invalid(format!("manifest `{}` has no entries", self.name)));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_path.as_str()) {
                return Err(CeiqError::invalid(format!("duplicate image path `{}`", e.image_path)));
            }
            if e.ref_id.is_empty() {
                return Err(CeiqError::invalid(format!("empty ref_id for `{}`", e.image_path)));
            }
            if !e.score.is_finite() {
                return Err(CeiqError::invalid(format!("non-finite score for `{}`", e.image_path)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    /// Distinct reference ids in sorted order.
    pub fn ref_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.ref_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Parses the CSV manifest format: header `image_path,score,ref_id` and
    /// an optional `# polarity=MOS|DMOS` comment line.
    pub fn parse_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut polarity = Polarity::Mos;
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(comment) = t.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    if key.trim().eq_ignore_ascii_case("polarity") {
                        polarity = value.parse().map_err(|_| CeiqError::Parse {
                            line: i + 1,
                            column: line.find('=').map_or(1, |c| c + 2),
                            message: format!("bad polarity `{}`", value.trim()),
                        })?;
                    }
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| csv_error(&e, 1))?.clone();
        let expected = ["image_path", "score", "ref_id"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(CeiqError::Parse {
                line: headers.position().map_or(1, |p| p.line() as usize),
                column: 1,
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&e, 0))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let score: f64 = record[1].parse().map_err(|_| CeiqError::Parse {
                line,
                column: record[0].len() + 2,
                message: format!("invalid score `{}`", &record[1]),
            })?;
            entries.push(ManifestEntry {
                image_path: record[0].to_string(),
                score,
                ref_id: record[2].to_string(),
            });
        }
        Self::new(name, entries, polarity)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CeiqError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_csv(name, &text)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image_path", "score", "ref_id"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.image_path.as_str(), &e.score.to_string(), e.ref_id.as_str()])
                .expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        format!("# polarity={}\n{body}", self.polarity)
    }
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> CeiqError {
    CeiqError::Parse {
        line: e.position().map_or(fallback_line, |p| p.line() as usize),
        column: 1,
        message: e.to_string(),
    }
}

/// A manifest with one feature vector per entry, in entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub manifest: DatasetManifest,
    pub features: Vec<FeatureVector>,
}

impl FeatureDataset {
    pub fn new(manifest: DatasetManifest, features: Vec<FeatureVector>) -> Result<Self> {
        if manifest.len() != features.len() {
            return Err(CeiqError::invalid(format!(
                "{} manifest entries but {} feature vectors",
                manifest.len(),
                features.len()
            )));
        }
        Ok(Self { manifest, features })
    }

    fn training_set(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            samples: indices
                .iter()
                .map(|&i| (self.features[i], self.manifest.entries[i].score))
                .collect(),
            name: self.manifest.name.clone(),
            polarity: self.manifest.polarity,
        }
    }
}

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(CeiqError::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < min_len {
        return Err(CeiqError::invalid(format!(
            "need at least {min_len} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CeiqError::invalid("non-finite observation"));
    }
    Ok(())
}

/// Pearson linear correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CeiqError::degenerate("correlation with a constant vector"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation with average ranks for ties.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall tau-b by exhaustive pair comparison.
pub fn krocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 {
                ties_x += 1;
            }
            if dy == 0 {
                ties_y += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = ((pairs - ties_x) as f64) * ((pairs - ties_y) as f64);
    if denom == 0.0 {
        return Err(CeiqError::degenerate("Kendall tau of a constant vector"));
    }
    Ok((concordant - discordant) as f64 / denom.sqrt())
}

/// Monotonic mapping family used before computing PLCC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogisticKind {
    /// `b1 * (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5`
    #[default]
    FiveParameter,
    /// `(b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2`
    FourParameter,
}

impl LogisticKind {
    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            LogisticKind::FiveParameter => p[0] * (0.5 - 1.0 / (1.0 + (p[1] * (x - p[2])).exp())) + p[3] * x + p[4],
            LogisticKind::FourParameter => (p[0] - p[1]) / (1.0 + (-(x - p[2]) / p[3].abs()).exp()) + p[1],
        }
    }

    fn initial_guesses(&self, x: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
        let (mx, sx) = mean_std(x);
        let (my, _) = mean_std(y);
        let (ymin, ymax) = min_max(y);
        let sx = if sx > 0.0 { sx } else { 1.0 };
        match self {
            LogisticKind::FiveParameter => {
                let (slope, intercept) = least_squares_line(x, y);
                vec![
                    vec![ymax - ymin, 1.0 / sx, mx, 0.0, my],
                    vec![ymax - ymin, -1.0 / sx, mx, 0.0, my],
                    // Linear sub-family: the fit starts from the best line.
                    vec![0.0, 1.0 / sx, mx, slope, intercept],
                ]
            }
            LogisticKind::FourParameter => vec![
                vec![ymax, ymin, mx, sx],
                vec![ymin, ymax, mx, sx],
                vec![ymax, ymin, mx, 3.0 * sx],
            ],
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Settings of the derivative-free simplex search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Stop once the objective spread across the simplex is below this,
    /// relative to the best value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 2000,
        }
    }
}

/// Nelder-Mead minimization with the standard reflection, expansion,
/// contraction and shrink coefficients (1, 2, 1/2, 1/2). Non-finite
/// objective values are treated as +inf.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], opts: SimplexOptions) -> (Vec<f64>, f64) {
    let dim = start.len();
    let eval = |p: &[f64]| {
        let v = f(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] = if p[i] != 0.0 { p[i] * 1.05 } else { 0.00025 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    for _ in 0..opts.max_iterations {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[dim]);
        if worst - best <= opts.tolerance * best.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs() / b.abs().max(1e-12)))
            .fold(0.0, f64::max);
        if x_spread < 1e-14 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|p| p[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let p = along(0.5);
            let v = eval(&p);
            (p, v)
        } else {
            let p = along(-0.5);
            let v = eval(&p);
            (p, v)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, p)| b + 0.5 * (p - b))
                .collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty simplex");
    (simplex[best].clone(), values[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub kind: LogisticKind,
    pub params: Vec<f64>,
    pub sse: f64,
}

impl LogisticFit {
    pub fn map(&self, x: f64) -> f64 {
        self.kind.eval(&self.params, x)
    }
}

/// Least-squares fit of the logistic mapping from `objective` to
/// `subjective`, keeping the best of the deterministic restarts.
pub fn fit_logistic(objective: &[f64], subjective: &[f64], kind: LogisticKind) -> Result<LogisticFit> {
    check_pair(objective, subjective, 5)?;
    let (_, sy) = mean_std(subjective);
    if sy == 0.0 {
        return Err(CeiqError::degenerate("subjective scores are constant"));
    }
    let (_, sx) = mean_std(objective);
    if sx == 0.0 {
        return Err(CeiqError::degenerate("objective scores are constant"));
    }
    let sse = |p: &[f64]| -> f64 {
        objective
            .iter()
            .zip(subjective)
            .map(|(&x, &y)| {
                let r = y - kind.eval(p, x);
                r * r
            })
            .sum()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in kind.initial_guesses(objective, subjective) {
        let (p, v) = nelder_mead(sse, &start, SimplexOptions::default());
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((p, v));
        }
    }
    let (params, sse) = best.expect("at least one restart");
    Ok(LogisticFit { kind, params, sse })
}

/// PLCC after a 5-parameter logistic mapping, with the fitted parameters.
pub fn plcc_logistic(objective: &[f64], subjective: &[f64]) -> Result<(f64, [f64; 5])> {
    let fit = fit_logistic(objective, subjective, LogisticKind::FiveParameter)?;
    let plcc = plcc_with_fit(objective, subjective, &fit)?;
    let params: [f64; 5] = fit.params.as_slice().try_into().expect("five parameters");
    Ok((plcc, params))
}

pub fn plcc_with_fit(objective: &[f64], subjective: &[f64], fit: &LogisticFit) -> Result<f64> {
    let mapped: Vec<f64> = objective.iter().map(|&x| fit.map(x)).collect();
    pearson(&mapped, subjective)
}

/// Partitions the manifest by reference image. Reference ids are sorted,
/// shuffled with the seeded generator, and the first
/// `round(train_fraction * refs)` (at least one, leaving at least one) go to
/// training.
pub fn split_by_reference(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CeiqError::invalid(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut refs = manifest.ref_ids();
    if refs.len() < 2 {
        return Err(CeiqError::invalid(format!(
            "need at least 2 reference groups to split, got {}",
            refs.len()
        )));
    }
    rng::shuffle(&mut refs, &mut rng::seeded(seed));
    let n_train = ((train_fraction * refs.len() as f64).round() as usize).clamp(1, refs.len() - 1);
    let train_refs: BTreeSet<&str> = refs[..n_train].iter().copied().collect();
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..manifest.len()).partition(|&i| train_refs.contains(manifest.entries[i].ref_id.as_str()));
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitProtocol {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub logistic: LogisticKind,
}

impl Default for SplitProtocol {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            repetitions: 1000,
            base_seed: 0,
            logistic: LogisticKind::FiveParameter,
        }
    }
}

/// Correlations of predicted against subjective scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub srocc: f64,
    pub plcc: f64,
    pub krocc: f64,
}

/// SROCC, KROCC and PLCC after fitting a logistic of the given kind; also
/// returns the fitted parameters.
pub fn correlations(predicted: &[f64], subjective: &[f64], kind: LogisticKind) -> Result<(Correlations, Vec<f64>)> {
    let srocc = srocc(predicted, subjective)?;
    let krocc = krocc(predicted, subjective)?;
    let fit = fit_logistic(predicted, subjective, kind)?;
    let plcc = plcc_with_fit(predicted, subjective, &fit)?;
    Ok((Correlations { srocc, plcc, krocc }, fit.params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub repetition: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub srocc: f64,
    pub plcc: f64,
    pub krocc: f64,
    pub logistic_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSplit {
    pub repetition: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub polarity: Polarity,
    pub images: usize,
    pub references: usize,
    pub protocol: SplitProtocol,
    pub svr: SvrParams,
    pub median_srocc: f64,
    pub median_plcc: f64,
    pub median_krocc: f64,
    pub skipped_count: usize,
    pub per_split: Vec<SplitRecord>,
    pub skipped: Vec<SkippedSplit>,
}

/// Exact median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn run_split(data: &FeatureDataset, protocol: &SplitProtocol, seed: u64, svr_params: &SvrParams) -> Result<(usize, usize, Correlations, Vec<f64>)> {
    let (train_idx, test_idx) = split_by_reference(&data.manifest, protocol.train_fraction, seed)?;
    let params = SvrParams { seed, ..*svr_params };
    let model = svr::train(&data.training_set(&train_idx), &params)?;
    let predicted = test_idx
        .iter()
        .map(|&i| model.predict(&data.features[i]))
        .collect::<Result<Vec<_>>>()?;
    let subjective: Vec<f64> = test_idx.iter().map(|&i| data.manifest.entries[i].score).collect();
    let (corr, params) = correlations(&predicted, &subjective, protocol.logistic)?;
    Ok((train_idx.len(), test_idx.len(), corr, params))
}

/// Repeated reference-disjoint train/test evaluation. Repetition `r` uses
/// seed `base_seed + r` for both the split and the solver. Repetitions run
/// in parallel; the report does not depend on the thread count.
pub fn run_protocol(data: &FeatureDataset, protocol: &SplitProtocol, svr_params: &SvrParams) -> Result<EvaluationReport> {
    svr_params.validate()?;
    if protocol.repetitions == 0 {
        return Err(CeiqError::invalid("repetitions must be positive"));
    }
    // Surface configuration errors once instead of as per-split skips.
    split_by_reference(&data.manifest, protocol.train_fraction, protocol.base_seed)?;

    let outcomes: Vec<(usize, u64, Result<_>)> = (0..protocol.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = protocol.base_seed.wrapping_add(r as u64);
            (r, seed, run_split(data, protocol, seed, svr_params))
        })
        .collect();

    let mut per_split = Vec::new();
    let mut skipped = Vec::new();
    for (repetition, seed, outcome) in outcomes {
        match outcome {
            Ok((n_train, n_test, c, logistic_params)) => per_split.push(SplitRecord {
                repetition,
                seed,
                n_train,
                n_test,
                srocc: c.srocc,
                plcc: c.plcc,
                krocc: c.krocc,
                logistic_params,
            }),
            Err(e) => skipped.push(SkippedSplit {
                repetition,
                seed,
                reason: e.to_string(),
            }),
        }
    }
    let column = |f: fn(&SplitRecord) -> f64| per_split.iter().map(f).collect::<Vec<_>>();
    let no_splits = || {
        CeiqError::degenerate(format!(
            "all {} repetitions were skipped; first reason: {}",
            protocol.repetitions,
            skipped.first().map_or("none", |s| s.reason.as_str())
        ))
    };
    let median_srocc = median(&column(|s| s.srocc)).ok_or_else(no_splits)?;
    let median_plcc = median(&column(|s| s.plcc)).ok_or_else(no_splits)?;
    let median_krocc = median(&column(|s| s.krocc)).ok_or_else(no_splits)?;
    Ok(EvaluationReport {
        dataset: data.manifest.name.clone(),
        polarity: data.manifest.polarity,
        images: data.manifest.len(),
        references: data.manifest.ref_ids().len(),
        protocol: *protocol,
        svr: *svr_params,
        median_srocc,
        median_plcc,
        median_krocc,
        skipped_count: skipped.len(),
        per_split,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatabaseReport {
    pub train_dataset: String,
    pub train_polarity: Polarity,
    pub test_dataset: String,
    pub test_polarity: Polarity,
    pub svr: SvrParams,
    pub srocc: f64,
    pub plcc: f64,
    pub krocc: f64,
    pub logistic_params: Vec<f64>,
}

/// Trains on every entry of `train` and evaluates on every entry of `test`.
pub fn cross_database(train: &FeatureDataset, test: &FeatureDataset, svr_params: &SvrParams) -> Result<CrossDatabaseReport> {
    cross_database_with(train, test, svr_params, LogisticKind::FiveParameter)
}

pub fn cross_database_with(train: &FeatureDataset, test: &FeatureDataset, svr_params: &SvrParams, logistic: LogisticKind) -> Result<CrossDatabaseReport> {
    let all: Vec<usize> = (0..train.manifest.len()).collect();
    let model = svr::train(&train.training_set(&all), svr_params)?;
    let predicted = test
        .features
        .iter()
        .map(|fv| model.predict(fv))
        .collect::<Result<Vec<_>>>()?;
    let (c, logistic_params) = correlations(&predicted, &test.manifest.scores(), logistic)?;
    Ok(CrossDatabaseReport {
        train_dataset: train.manifest.name.clone(),
        train_polarity: train.manifest.polarity,
        test_dataset: test.manifest.name.clone(),
        test_polarity: test.manifest.polarity,
        svr: *svr_params,
        srocc: c.srocc,
        plcc: c.plcc,
        krocc: c.krocc,
        logistic_params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub median_srocc: f64,
    pub skipped: usize,
}

/// Median SROCC of the repeated protocol at each training ratio.
pub fn split_ratio_sweep(data: &FeatureDataset, ratios: &[f64], protocol: &SplitProtocol, svr_params: &SvrParams) -> Result<Vec<SweepPoint>> {
    if ratios.is_empty() {
        return Err(CeiqError::invalid("no ratios given"));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let p = SplitProtocol {
                train_fraction: ratio,
                ..*protocol
            };
            let report = run_protocol(data, &p, svr_params)?;
            Ok(SweepPoint {
                ratio,
                median_srocc: report.median_srocc,
                skipped: report.skipped_count,
            })
        })
        .collect()
}
