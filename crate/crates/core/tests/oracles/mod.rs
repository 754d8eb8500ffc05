//! Reference implementations used only by tests. Each one takes a different
//! computational route from the library code it checks.

#![allow(dead_code, clippy::too_many_arguments)]

/// SSIM by direct per-window double loops with a 2-D Gaussian window,
/// two-pass variances and the three-term luminance/contrast/structure
/// product. No downsampling.
pub fn brute_force_ssim(a: &[f64], b: &[f64], width: usize, height: usize, size: usize, sigma: f64, k1: f64, k2: f64, range: f64) -> f64 {
    let half = (size / 2) as f64;
    let mut window = vec![0.0; size * size];
    for j in 0..size {
        for i in 0..size {
            let dx = i as f64 - half;
            let dy = j as f64 - half;
            window[j * size + i] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = window.iter().sum();
    window.iter_mut().for_each(|w| *w /= total);

    let c1 = (k1 * range).powi(2);
    let c2 = (k2 * range).powi(2);
    let c3 = c2 / 2.0;
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=height - size {
        for x0 in 0..=width - size {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..size {
                for i in 0..size {
                    let w = window[j * size + i];
                    let idx = (y0 + j) * width + x0 + i;
                    ma += w * a[idx];
                    mb += w * b[idx];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..size {
                for i in 0..size {
                    let w = window[j * size + i];
                    let idx = (y0 + j) * width + x0 + i;
                    let da = a[idx] - ma;
                    let db = b[idx] - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            let (sa, sb) = (va.sqrt(), vb.sqrt());
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let c = (2.0 * sa * sb + c2) / (va + vb + c2);
            let s = (cov + c3) / (sa * sb + c3);
            acc += l * c * s;
            count += 1;
        }
    }
    acc / count as f64
}

/// Mid-ranks by counting: `1 + #less + #equal_others / 2`.
pub fn counting_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().enumerate().filter(|&(j, &y)| j != i && y == x).count() as f64;
            1.0 + less + equal / 2.0
        })
        .collect()
}

/// Textbook Pearson correlation, computed from raw moment sums with
/// compensated summation.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = |v: &[f64]| kahan(v.iter().copied()) / n;
    let (mx, my) = (mean(x), mean(y));
    let sxy = kahan(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = kahan(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = kahan(y.iter().map(|b| (b - my) * (b - my)));
    sxy / (sxx * syy).sqrt()
}

fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&counting_ranks(x), &counting_ranks(y))
}

/// Kendall tau-b over all ordered pairs; every unordered pair is visited
/// twice and the counts halved at the end.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty, mut pairs) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            pairs += 1;
            let sx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
            let sy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
            s += sx * sy;
            tx += i64::from(sx == 0);
            ty += i64::from(sy == 0);
        }
    }
    let (s, tx, ty, pairs) = (s / 2, tx / 2, ty / 2, pairs / 2);
    s as f64 / (((pairs - tx) * (pairs - ty)) as f64).sqrt()
}

/// Primal epsilon-SVR objective minimized over the bias by checking every
/// breakpoint `r_i +/- epsilon` (the objective is piecewise linear in b).
pub fn primal_with_best_bias(x: &[[f64; 5]], y: &[f64], w: &[f64; 5], c: f64, eps: f64) -> (f64, f64) {
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let objective = |b: f64| reg + c * residuals.iter().map(|r| ((r - b).abs() - eps).max(0.0)).sum::<f64>();
    residuals
        .iter()
        .flat_map(|&r| [r - eps, r + eps])
        .map(|b| (objective(b), b))
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .expect("nonempty")
}

pub struct SvrOracle {
    pub primal: f64,
    pub dual: f64,
    pub weights: [f64; 5],
    pub bias: f64,
}

/// Accelerated proximal gradient (FISTA with adaptive restart) on the
/// epsilon-SVR dual. The proximal step projects onto the box intersected
/// with the hyperplane `sum beta = 0` by bisection on the multiplier.
pub fn svr_oracle(x: &[[f64; 5]], y: &[f64], c: f64, eps: f64, max_iter: usize) -> SvrOracle {
    let n = x.len();
    // Lipschitz constant of the smooth part: largest eigenvalue of X^T X.
    let mut gram = [[0.0f64; 5]; 5];
    for xi in x {
        for a in 0..5 {
            for b in 0..5 {
                gram[a][b] += xi[a] * xi[b];
            }
        }
    }
    let mut v = [1.0f64; 5];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut nv = [0.0; 5];
        for a in 0..5 {
            for b in 0..5 {
                nv[a] += gram[a][b] * v[b];
            }
        }
        let norm = nv.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm / v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v = nv.map(|t| t / norm);
    }
    let step = 1.0 / (lambda * 1.01 + 1e-12);

    let weights_of = |beta: &[f64]| {
        let mut w = [0.0; 5];
        for (b, xi) in beta.iter().zip(x) {
            for k in 0..5 {
                w[k] += b * xi[k];
            }
        }
        w
    };
    // Minimization form of the dual.
    let dual_min = |beta: &[f64]| {
        let w = weights_of(beta);
        0.5 * w.iter().map(|t| t * t).sum::<f64>() - beta.iter().zip(y).map(|(b, yi)| b * yi).sum::<f64>()
            + eps * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let prox = |v: &[f64]| -> Vec<f64> {
        let t = step * eps;
        let at = |lam: f64| -> Vec<f64> {
            v.iter()
                .map(|&vi| {
                    let z = vi - lam;
                    let soft = z.signum() * (z.abs() - t).max(0.0);
                    soft.clamp(-c, c)
                })
                .collect()
        };
        let (vmin, vmax) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (mut lo, mut hi) = (vmin - c - t, vmax + c + t);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = at(mid).iter().sum();
            if s > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    };

    let mut beta = vec![0.0; n];
    let mut z = beta.clone();
    let mut t_k = 1.0f64;
    let mut f_prev = dual_min(&beta);
    let mut best_primal = f64::INFINITY;
    let mut best = ([0.0; 5], 0.0);
    let mut best_dual = f64::NEG_INFINITY;
    for it in 0..max_iter {
        let w = weights_of(&z);
        let grad: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - yi)
            .collect();
        let moved: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect();
        let next = prox(&moved);
        let f_next = dual_min(&next);
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        if f_next > f_prev {
            // adaptive restart
            t_k = 1.0;
            z = beta.clone();
            continue;
        }
        z = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| a + (t_k - 1.0) / t_next * (a - b))
            .collect();
        beta = next;
        t_k = t_next;
        f_prev = f_next;

        if it % 20 == 0 || it + 1 == max_iter {
            best_dual = best_dual.max(-f_prev);
            let w = weights_of(&beta);
            let (p, b) = primal_with_best_bias(x, y, &w, c, eps);
            if p < best_primal {
                best_primal = p;
                best = (w, b);
            }
            if best_primal - best_dual <= 1e-7 * best_primal.abs().max(1.0) {
                break;
            }
        }
    }
    SvrOracle {
        primal: best_primal,
        dual: best_dual,
        weights: best.0,
        bias: best.1,
    }
}
