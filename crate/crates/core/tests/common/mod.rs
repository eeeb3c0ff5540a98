//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's numerics.
#![allow(dead_code)]

/// `-(1/beta) ln sum_i exp(-beta (x - m_i)^2 / 2)` in 1D, max-shifted.
pub fn energy_1d(memories: &[f64], beta: f64, x: f64) -> f64 {
    let logits: Vec<f64> = memories.iter().map(|m| -beta * (x - m).powi(2) / 2.0).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|l| (l - top).exp()).sum();
    -(top + s.ln()) / beta
}

pub fn weights_1d(memories: &[f64], beta: f64, x: f64) -> Vec<f64> {
    let logits: Vec<f64> = memories.iter().map(|m| -beta * (x - m).powi(2) / 2.0).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn denergy_1d(memories: &[f64], beta: f64, x: f64) -> f64 {
    let w = weights_1d(memories, beta, x);
    x - w.iter().zip(memories).map(|(w, m)| w * m).sum::<f64>()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Critical points of the 1D energy on `[lo, hi]`: a fine grid locates sign
/// changes of the derivative, bisection refines them. Returns
/// `(minima, maxima)`.
pub fn critical_points_1d(memories: &[f64], beta: f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let f = |x: f64| denergy_1d(memories, beta, x);
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    for w in xs.windows(2) {
        let (a, b) = (f(w[0]), f(w[1]));
        if a < 0.0 && b >= 0.0 {
            minima.push(bisect(f, w[0], w[1]));
        } else if a > 0.0 && b <= 0.0 {
            maxima.push(bisect(f, w[0], w[1]));
        }
    }
    (minima, maxima)
}

/// Spearman rank correlation with average ranks for ties; 0 if either side
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Standard normal CDF via the complementary error function (Numerical
/// Recipes erfc approximation, |error| < 1.2e-7).
pub fn normal_cdf(z: f64) -> f64 {
    let x = -z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * x.abs());
    let y = t
        * (-x * x - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    let erfc = if x >= 0.0 { y } else { 2.0 - y };
    0.5 * erfc
}

/// Red share after one 2x2 majority step with fair tie-breaks, by listing
/// all 16 block configurations.
pub fn enumerated_one_step(p: f64) -> f64 {
    let mut share = 0.0;
    for mask in 0u32..16 {
        let reds = mask.count_ones() as i32;
        let prob = p.powi(reds) * (1.0 - p).powi(4 - reds);
        share += prob
            * match reds {
                3 | 4 => 1.0,
                2 => 0.5,
                _ => 0.0,
            };
    }
    share
}
