//! Reference implementations used only by tests. Each one takes a different
//! algorithmic route from the library code it checks.
#![allow(dead_code)]

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

/// Excess kurtosis from a single-pass streaming moment update.
pub fn kurtosis_streaming(xs: &[f64]) -> f64 {
    let (mut n, mut mean, mut m2, mut m3, mut m4) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for &x in xs {
        let n1 = n;
        n += 1.0;
        let delta = x - mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2 - 4.0 * delta_n * m3;
        m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
    }
    n * m4 / (m2 * m2) - 3.0
}

/// Pearson r from raw sums (computational formula).
pub fn pearson_textbook(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn student_t_density(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// Adaptive Simpson quadrature of `f` over [a, b].
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-tailed p-value of Pearson r by integrating the t density.
pub fn pearson_p_by_quadrature(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let t = (r * (df / (1.0 - r * r)).sqrt()).abs();
    let central = adaptive_simpson(&|s| student_t_density(s, df), 0.0, t, 1e-13);
    (1.0 - 2.0 * central).max(0.0)
}

/// Normalizes values from `[lo, hi]` onto the clamped unit interval.
pub fn normalize(ys: &[f64], lo: f64, hi: f64, eps: f64) -> Vec<f64> {
    ys.iter()
        .map(|y| ((y - lo) / (hi - lo)).clamp(eps, 1.0 - eps))
        .collect()
}

/// Beta MLE by exhaustive grid search over (0, 20]² at step 0.01.
pub fn beta_grid_mle(us: &[f64]) -> (f64, f64) {
    const STEPS: usize = 2000;
    const H: f64 = 0.01;
    let n = us.len() as f64;
    let a_bar = us.iter().map(|u| u.ln()).sum::<f64>() / n;
    let b_bar = us.iter().map(|u| (1.0 - u).ln()).sum::<f64>() / n;
    let lg: Vec<f64> = (0..=2 * STEPS).map(|k| if k == 0 { f64::NAN } else { ln_gamma(k as f64 * H) }).collect();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for i in 1..=STEPS {
        for j in 1..=STEPS {
            let (a, b) = (i as f64 * H, j as f64 * H);
            let ll = (a - 1.0) * a_bar + (b - 1.0) * b_bar - (lg[i] + lg[j] - lg[i + j]);
            if ll > best.0 {
                best = (ll, i, j);
            }
        }
    }
    (best.1 as f64 * H, best.2 as f64 * H)
}

/// Beta(a, b) probability of [x0, x1] ⊂ [0, 1] by adaptive Simpson on the density.
pub fn beta_bin_mass(a: f64, b: f64, x0: f64, x1: f64) -> f64 {
    let lb = ln_beta(a, b);
    let pdf = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - lb).exp()
        }
    };
    adaptive_simpson(&pdf, x0, x1, 1e-14)
}
