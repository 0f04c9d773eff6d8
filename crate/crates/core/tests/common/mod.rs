//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use capalloc::models::ShiftedLognormalAsset;

/// Log-density of `E = exp(Y)`, `Y ~ N(mu, sigma^2)`, up to a constant.
fn log_g(x: &ShiftedLognormalAsset, t: f64) -> f64 {
    let d = (t.ln() - x.mu) / x.sigma;
    -0.5 * d * d - t.ln() - x.sigma.ln()
}

/// Points `(E_1, ..., E_n)` of a midpoint grid on the simplex
/// `sum_i E_i = S`, with unnormalized conditional weights. `n` is 2 or 3.
fn simplex_grid(assets: &[ShiftedLognormalAsset], s: f64, cells: usize) -> Vec<(Vec<f64>, f64)> {
    let h = s / cells as f64;
    let mut pts = Vec::new();
    match assets.len() {
        2 => {
            for i in 0..cells {
                let t = (i as f64 + 0.5) * h;
                pts.push((vec![t, s - t], log_g(&assets[0], t) + log_g(&assets[1], s - t)));
            }
        }
        3 => {
            for i in 0..cells {
                let t1 = (i as f64 + 0.5) * h;
                for k in 0..cells - i {
                    let t2 = (k as f64 + 0.5) * h;
                    let t3 = s - t1 - t2;
                    if t3 <= 0.0 {
                        continue;
                    }
                    let lw = log_g(&assets[0], t1) + log_g(&assets[1], t2) + log_g(&assets[2], t3);
                    pts.push((vec![t1, t2, t3], lw));
                }
            }
        }
        n => panic!("grid oracle supports 2 or 3 assets, got {n}"),
    }
    let max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = pts.iter().map(|p| (p.1 - max).exp()).sum();
    pts.into_iter().map(|(e, lw)| (e, (lw - max).exp() / total)).collect()
}

fn level_sum(assets: &[ShiftedLognormalAsset], var_level: f64) -> f64 {
    assets.iter().map(|x| x.a).sum::<f64>() + var_level
}

/// `-E[X_i | sum_j X_j = -var_level]` by quadrature on the level set.
pub fn level_set_allocations(assets: &[ShiftedLognormalAsset], var_level: f64, cells: usize) -> Vec<f64> {
    let s = level_sum(assets, var_level);
    let pts = simplex_grid(assets, s, cells);
    (0..assets.len())
        .map(|i| pts.iter().map(|(e, p)| p * e[i]).sum::<f64>() - assets[i].a)
        .collect()
}

/// Conditional probabilities of `E_1 / S` falling in `bins` equal bins of
/// `(0, 1)`, for two assets.
pub fn level_set_bins(assets: &[ShiftedLognormalAsset], var_level: f64, bins: usize) -> Vec<f64> {
    let s = level_sum(assets, var_level);
    let mut out = vec![0.0; bins];
    for (e, p) in simplex_grid(assets, s, 200 * bins) {
        out[((e[0] / s) * bins as f64) as usize] += p;
    }
    out
}

/// Histogram of values in `bins` equal bins of `(0, 1)`.
pub fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; bins];
    let mut n = 0.0;
    for v in values {
        out[((v * bins as f64) as usize).min(bins - 1)] += 1.0;
        n += 1.0;
    }
    out.iter().map(|c| c / n).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
