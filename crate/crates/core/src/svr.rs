//! Linear epsilon-insensitive support vector regression.
//!
//! The model minimizes
//!
//! ```text
//!   1/2 |w|^2 + C * sum_i max(0, |y_i - (w . x_i + b)| - epsilon)
//! ```
//!
//! over min-max scaled features with an unregularized bias `b`. Training runs
//! coordinate descent on the dual
//!
//! ```text
//!   max  -1/2 |sum_i beta_i x_i|^2 + sum_i y_i beta_i - epsilon * sum_i |beta_i|
//!   s.t. sum_i beta_i = 0,  -C <= beta_i <= C
//! ```
//!
//! Because of the equality constraint each update moves a pair of
//! coordinates. The first coordinate of each pair follows a seeded
//! permutation; its partner is the most violating coordinate. Every pair
//! subproblem is a one-dimensional convex piecewise quadratic and is solved
//! exactly. After each pass the solver evaluates the primal objective with
//! the optimal bias for the current weights and stops once the duality gap
//! is below the relative tolerance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CeiqError, Result};
use crate::eval::Polarity;
use crate::features::{FeatureVector, FEATURE_COUNT};
use crate::rng;

pub type Features = [f64; FEATURE_COUNT];

pub const MODEL_MAGIC: &str = "CEIQ-MODEL";
pub const MODEL_VERSION: u32 = 1;

/// Feature vectors paired with subjective scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<(FeatureVector, f64)>,
    pub name: String,
    pub polarity: Polarity,
}

impl TrainingSet {
    pub fn new(samples: Vec<(FeatureVector, f64)>) -> Self {
        Self {
            samples,
            name: String::new(),
            polarity: Polarity::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-feature min-max scaling learned from training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub min: Features,
    pub max: Features,
}

impl FeatureScaling {
    pub fn fit(train: &TrainingSet) -> Result<Self> {
        let first = train
            .samples
            .first()
            .ok_or_else(|| CeiqError::invalid("cannot fit scaling on an empty training set"))?
            .0
            .to_array();
        let (mut min, mut max) = (first, first);
        for (fv, _) in &train.samples[1..] {
            for (j, v) in fv.to_array().into_iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps training-range values into [0, 1]; values outside the range
    /// extrapolate linearly. Degenerate dimensions map to 0.
    pub fn apply(&self, fv: &FeatureVector) -> Features {
        let x = fv.to_array();
        let mut out = [0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            let span = self.max[j] - self.min[j];
            if span > 0.0 {
                out[j] = (x[j] - self.min[j]) / span;
            }
        }
        out
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        self.max[j] <= self.min[j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Relative duality-gap tolerance.
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            seed: 0,
            tolerance: 1e-6,
            max_passes: 10_000,
        }
    }
}

impl SvrParams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CeiqError::invalid(format!("C must be positive and finite, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(CeiqError::invalid(format!(
                "epsilon must be nonnegative and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(CeiqError::invalid("tolerance must be positive"));
        }
        if self.max_passes == 0 {
            return Err(CeiqError::invalid("max_passes must be positive"));
        }
        Ok(())
    }
}

/// A trained quality predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Features,
    pub bias: f64,
    pub scaling: FeatureScaling,
    pub c: f64,
    pub epsilon: f64,
    pub format_version: u32,
    /// Free-form training metadata, written as `#` lines.
    pub comments: Vec<String>,
}

impl SvrModel {
    pub fn predict(&self, fv: &FeatureVector) -> Result<f64> {
        if !fv.is_finite() {
            return Err(CeiqError::invalid("feature vector has non-finite entries"));
        }
        Ok(self.predict_scaled(&self.scaling.apply(fv)))
    }

    pub fn predict_scaled(&self, x: &Features) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Text serialization. Reals are written with 17 significant digits so
    /// that parsing restores them exactly.
    pub fn serialize(&self) -> String {
        let mut out = format!("{MODEL_MAGIC} v{}\n", self.format_version);
        for c in &self.comments {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "C = {}", fmt_real(self.c));
        let _ = writeln!(out, "epsilon = {}", fmt_real(self.epsilon));
        let _ = writeln!(out, "bias = {}", fmt_real(self.bias));
        let _ = writeln!(out, "weights = {}", fmt_reals(&self.weights));
        let _ = writeln!(out, "feature_min = {}", fmt_reals(&self.scaling.min));
        let _ = writeln!(out, "feature_max = {}", fmt_reals(&self.scaling.max));
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        parse_model(text)
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_reals(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(" ")
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> CeiqError {
    CeiqError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_model(text: &str) -> Result<SvrModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_error(1, 1, "empty model file"))?;
    let header = header.trim_end();
    let version = header
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.strip_prefix(" v"))
        .ok_or_else(|| parse_error(1, 1, format!("expected header `{MODEL_MAGIC} v{MODEL_VERSION}`")))?;
    let version: u32 = version
        .parse()
        .map_err(|_| parse_error(1, MODEL_MAGIC.len() + 3, format!("bad version `{version}`")))?;
    if version != MODEL_VERSION {
        return Err(parse_error(
            1,
            MODEL_MAGIC.len() + 3,
            format!("unsupported model version {version}, expected {MODEL_VERSION}"),
        ));
    }

    let mut comments = Vec::new();
    let mut c = None;
    let mut epsilon = None;
    let mut bias = None;
    let mut weights = None;
    let mut fmin = None;
    let mut fmax = None;
    let mut last_line = 1;

    for (no, raw) in lines {
        last_line = no;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            comments.push(comment.strip_prefix(' ').unwrap_or(comment).to_string());
            continue;
        }
        let eq = line
            .find('=')
            .ok_or_else(|| parse_error(no, 1, "expected `key = value`"))?;
        let key = line[..eq].trim();
        let value_col = eq + 2;
        let value = &line[eq + 1..];
        let reals = parse_reals(value, no, value_col)?;
        let scalar = |slot: &mut Option<f64>| -> Result<()> {
            if slot.is_some() {
                return Err(parse_error(no, 1, format!("duplicate key `{key}`")));
            }
            if reals.len() != 1 {
                return Err(parse_error(no, value_col, format!("`{key}` takes one value, got {}", reals.len())));
            }
            *slot = Some(reals[0]);
            Ok(())
        };
        let vector = |slot: &mut Option<Features>| -> Result<()> {
            if slot.is_some() {
                return Err(parse_error(no, 1, format!("duplicate key `{key}`")));
            }
            let arr: Features = reals.as_slice().try_into().map_err(|_| {
                parse_error(
                    no,
                    value_col,
                    format!("`{key}` takes {FEATURE_COUNT} values, got {}", reals.len()),
                )
            })?;
            *slot = Some(arr);
            Ok(())
        };
        match key {
            "C" => scalar(&mut c)?,
            "epsilon" => scalar(&mut epsilon)?,
            "bias" => scalar(&mut bias)?,
            "weights" => vector(&mut weights)?,
            "feature_min" => vector(&mut fmin)?,
            "feature_max" => vector(&mut fmax)?,
            other => return Err(parse_error(no, 1, format!("unknown key `{other}`"))),
        }
    }

    let missing = |name: &str| parse_error(last_line + 1, 1, format!("missing key `{name}` (truncated file?)"));
    let scaling = FeatureScaling {
        min: fmin.ok_or_else(|| missing("feature_min"))?,
        max: fmax.ok_or_else(|| missing("feature_max"))?,
    };
    if (0..FEATURE_COUNT).any(|j| scaling.min[j] > scaling.max[j]) {
        return Err(parse_error(last_line, 1, "feature_min exceeds feature_max"));
    }
    let model = SvrModel {
        weights: weights.ok_or_else(|| missing("weights"))?,
        bias: bias.ok_or_else(|| missing("bias"))?,
        scaling,
        c: c.ok_or_else(|| missing("C"))?,
        epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
        format_version: version,
        comments,
    };
    Ok(model)
}

fn parse_reals(value: &str, line: usize, base_col: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for token in value.split(' ') {
        let col = base_col + offset;
        offset += token.len() + 1;
        if token.is_empty() {
            continue;
        }
        let v: f64 = token
            .parse()
            .map_err(|_| parse_error(line, col, format!("invalid number `{token}`")))?;
        if !v.is_finite() {
            return Err(parse_error(line, col, format!("non-finite value `{token}`")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(parse_error(line, base_col, "missing value"));
    }
    Ok(out)
}

#[inline]
fn dot(a: &Features, b: &Features) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal objective `1/2 |w|^2 + C * sum of epsilon-insensitive losses`.
pub fn primal_objective(x: &[Features], y: &[f64], weights: &Features, bias: f64, c: f64, epsilon: f64) -> f64 {
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| ((yi - dot(weights, xi) - bias).abs() - epsilon).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c * loss
}

/// The bias minimizing the primal objective for fixed weights, chosen as the
/// point of the optimal interval closest to `hint`.
///
/// With residuals `r_i = y_i - w . x_i`, the loss sum equals
/// `1/2 sum_k |p_k - b| - n * epsilon` over the `2n` points `r_i +/- epsilon`,
/// so any median of those points is optimal.
pub fn optimal_bias(residuals: &[f64], epsilon: f64, hint: f64) -> f64 {
    let mut pts: Vec<f64> = residuals
        .iter()
        .flat_map(|&r| [r - epsilon, r + epsilon])
        .collect();
    pts.sort_by(f64::total_cmp);
    let n = residuals.len();
    let (lo, hi) = (pts[n - 1], pts[n]);
    hint.clamp(lo, hi)
}

/// Diagnostics of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub passes: usize,
    /// Primal objective of the best iterate after each pass.
    pub objective_trace: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl TrainingReport {
    pub fn duality_gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }
}

pub fn train(train: &TrainingSet, params: &SvrParams) -> Result<SvrModel> {
    train_with_report(train, params).map(|(m, _)| m)
}

pub fn train_with_report(train: &TrainingSet, params: &SvrParams) -> Result<(SvrModel, TrainingReport)> {
    params.validate()?;
    if train.len() < 2 {
        return Err(CeiqError::invalid(format!(
            "training needs at least 2 samples, got {}",
            train.len()
        )));
    }
    for (i, (fv, q)) in train.samples.iter().enumerate() {
        if !fv.is_finite() || !q.is_finite() {
            return Err(CeiqError::invalid(format!("sample {i} has non-finite values")));
        }
    }
    let scaling = FeatureScaling::fit(train)?;
    let x: Vec<Features> = train.samples.iter().map(|(fv, _)| scaling.apply(fv)).collect();
    let y: Vec<f64> = train.samples.iter().map(|&(_, q)| q).collect();
    let fit = solve_dual(&x, &y, params)?;

    let mut comments = Vec::new();
    if !train.name.is_empty() {
        comments.push(format!("dataset = {}", train.name));
    }
    comments.push(format!(
        "samples = {}, polarity = {}, seed = {}, passes = {}",
        train.len(),
        train.polarity,
        params.seed,
        fit.report.passes
    ));
    let model = SvrModel {
        weights: fit.weights,
        bias: fit.bias,
        scaling,
        c: params.c,
        epsilon: params.epsilon,
        format_version: MODEL_VERSION,
        comments,
    };
    Ok((model, fit.report))
}

/// Result of the dual solver on already scaled data.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub weights: Features,
    pub bias: f64,
    pub dual: Vec<f64>,
    pub report: TrainingReport,
}

struct PairStep {
    t: f64,
    gain: f64,
}

/// Exactly minimizes `1/2 a t^2 + g t + eps (|bi + t| + |bj - t|)` over
/// `t` in `[lo, hi]`.
fn solve_pair(a: f64, g: f64, eps: f64, bi: f64, bj: f64, lo: f64, hi: f64) -> PairStep {
    let phi = |t: f64| 0.5 * a * t * t + g * t + eps * ((bi + t).abs() + (bj - t).abs());
    let base = phi(0.0);
    let mut candidates = [lo, hi, -bi, bj, 0.0, 0.0, 0.0];
    if a > 0.0 {
        for (slot, k) in candidates[4..].iter_mut().zip([-2.0, 0.0, 2.0]) {
            *slot = -(g + eps * k) / a;
        }
    }
    let mut best = PairStep { t: 0.0, gain: 0.0 };
    for t in candidates {
        let t = t.clamp(lo, hi);
        let gain = base - phi(t);
        if gain > best.gain {
            best = PairStep { t, gain };
        }
    }
    best
}

/// Dual coordinate descent on scaled features.
pub fn solve_dual(x: &[Features], y: &[f64], params: &SvrParams) -> Result<DualSolution> {
    params.validate()?;
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(CeiqError::invalid("dual solver needs at least 2 aligned samples"));
    }
    let (c, eps) = (params.c, params.epsilon);
    let mut beta = vec![0.0f64; n];
    let mut w = [0.0f64; FEATURE_COUNT];
    let mut rng = rng::seeded(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0f64; n];

    let mut best: Option<(Features, f64, f64)> = None;
    let mut trace = Vec::new();

    for pass in 1..=params.max_passes {
        rng::shuffle(&mut order, &mut rng);
        let mut moved = false;
        for &i in &order {
            for (k, g) in grad.iter_mut().enumerate() {
                *g = dot(&w, &x[k]) - y[k];
            }
            // Cost of raising beta_i and gain of lowering beta_j, per unit.
            let up = |k: usize| {
                if beta[k] >= c {
                    f64::INFINITY
                } else if beta[k] >= 0.0 {
                    grad[k] + eps
                } else {
                    grad[k] - eps
                }
            };
            let down = |k: usize| {
                if beta[k] <= -c {
                    f64::NEG_INFINITY
                } else if beta[k] <= 0.0 {
                    grad[k] - eps
                } else {
                    grad[k] + eps
                }
            };
            let (up_i, down_i) = (up(i), down(i));
            let mut partner = None;
            let mut worst = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = (down(j) - up_i).max(down_i - up(j));
                if v > worst {
                    worst = v;
                    partner = Some(j);
                }
            }
            let Some(j) = partner else { continue };
            let mut diff = [0.0; FEATURE_COUNT];
            for (d, (a, b)) in diff.iter_mut().zip(x[i].iter().zip(&x[j])) {
                *d = a - b;
            }
            let lo = (-c - beta[i]).max(beta[j] - c);
            let hi = (c - beta[i]).min(beta[j] + c);
            let step = solve_pair(dot(&diff, &diff), grad[i] - grad[j], eps, beta[i], beta[j], lo, hi);
            if step.gain <= 0.0 || step.t == 0.0 {
                continue;
            }
            beta[i] += step.t;
            beta[j] -= step.t;
            for (wk, dk) in w.iter_mut().zip(diff) {
                *wk += step.t * dk;
            }
            moved = true;
        }

        // Refresh w from beta to keep rounding drift out of the objective.
        w = [0.0; FEATURE_COUNT];
        for (bk, xk) in beta.iter().zip(x) {
            for (wj, xj) in w.iter_mut().zip(xk) {
                *wj += bk * xj;
            }
        }
        let dual_obj = -0.5 * dot(&w, &w) + beta.iter().zip(y).map(|(b, yk)| b * yk).sum::<f64>()
            - eps * beta.iter().map(|b| b.abs()).sum::<f64>();

        let residuals: Vec<f64> = x.iter().zip(y).map(|(xk, yk)| yk - dot(&w, xk)).collect();
        let bias = optimal_bias(&residuals, eps, kkt_bias(&residuals, &beta, c, eps));
        let primal = primal_objective(x, y, &w, bias, c, eps);
        if best.is_none_or(|(_, _, p)| primal < p) {
            best = Some((w, bias, primal));
        }
        let (bw, bb, bp) = best.expect("set above");
        trace.push(bp);

        let gap = bp - dual_obj;
        if gap <= params.tolerance * bp.abs().max(1.0) || !moved {
            return Ok(DualSolution {
                weights: bw,
                bias: bb,
                dual: beta,
                report: TrainingReport {
                    passes: pass,
                    objective_trace: trace,
                    primal_objective: bp,
                    dual_objective: dual_obj,
                },
            });
        }
    }
    Err(CeiqError::NotConverged {
        iterations: params.max_passes,
        objective: best.map_or(f64::NAN, |b| b.2),
    })
}

/// Bias implied by the dual KKT conditions: the midpoint between the
/// tightest feasible upper and lower bounds on `-b`.
fn kkt_bias(residuals: &[f64], beta: &[f64], c: f64, eps: f64) -> f64 {
    let mut min_up = f64::INFINITY;
    let mut max_down = f64::NEG_INFINITY;
    for (&r, &b) in residuals.iter().zip(beta) {
        let g = -r;
        if b < c {
            min_up = min_up.min(if b >= 0.0 { g + eps } else { g - eps });
        }
        if b > -c {
            max_down = max_down.max(if b <= 0.0 { g - eps } else { g + eps });
        }
    }
    match (min_up.is_finite(), max_down.is_finite()) {
        (true, true) => -(min_up + max_down) / 2.0,
        (true, false) => -min_up,
        (false, true) => -max_down,
        (false, false) => 0.0,
    }
}
