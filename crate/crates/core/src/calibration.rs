//! Generative calibration of sampled judge scores.
//!
//! The judge's label marginal p(y) is estimated from a pool of sampled
//! scores, the gold prior q(y) comes from a Beta fit to gold scores
//! integrated over unit bins, and each example's samples are averaged with
//! weights proportional to q(y)/p(y).

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::ScoreRange;
use crate::scoring::{FinalScore, SampleSet};
use crate::special::{self, SpecialError};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("empty score pool with zero smoothing: label marginal undefined")]
    EmptyPool,
    #[error("smoothing must be a finite value >= 0, got {0}")]
    InvalidSmoothing(f64),
    #[error("score {value} lies outside the support {range}")]
    OutsideSupport { value: i64, range: ScoreRange },
    #[error("need at least {need} gold values for a Beta fit, got {got}")]
    TooFewGold { need: usize, got: usize },
    #[error("gold value {value} lies outside the calibration domain [{lo}, {hi}]")]
    GoldOutsideDomain { value: f64, lo: f64, hi: f64 },
    #[error("gold scores have zero variance; Beta fit undefined")]
    ZeroVarianceGold,
    #[error("Beta fit undefined: {0}")]
    BetaUndefined(String),
    #[error("invalid Beta parameters alpha={alpha}, beta={beta}")]
    InvalidParams { alpha: f64, beta: f64 },
    #[error("incomplete beta failed: {0}")]
    IncompleteBeta(#[from] SpecialError),
    #[error("no samples to calibrate")]
    NoSamples,
    #[error("label marginal p({0}) is zero; enable smoothing")]
    ZeroMarginal(i64),
    #[error("all importance weights vanish for samples {0:?}")]
    ZeroWeights(Vec<i64>),
    #[error("marginal and prior cover different supports ({0} vs {1})")]
    SupportMismatch(ScoreRange, ScoreRange),
    #[error("example {example_id}: {source}")]
    Example {
        example_id: String,
        #[source]
        source: Box<CalibrationError>,
    },
}

/// A probability table over the integer support of a score range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportTable {
    pub range: ScoreRange,
    pub prob: Vec<f64>,
}

impl SupportTable {
    pub fn get(&self, y: i64) -> Option<f64> {
        self.range.index_of(y).map(|i| self.prob[i])
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum()
    }

    pub fn to_csv(&self, column: &str) -> String {
        let mut out = format!("support,{column}\n");
        for (y, p) in self.range.support().zip(&self.prob) {
            out.push_str(&format!("{y},{p:?}\n"));
        }
        out
    }
}

/// The judge's unconditional score distribution p(y).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelMarginal {
    #[serde(flatten)]
    pub table: SupportTable,
    pub smoothing: f64,
    pub pool_size: usize,
}

/// Target score distribution q(y) derived from gold scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldPrior {
    #[serde(flatten)]
    pub table: SupportTable,
}

impl GoldPrior {
    /// Uses the judge marginal itself as the target, which makes
    /// calibration the identity. Handy as a smoke configuration.
    pub fn from_marginal(p: &LabelMarginal) -> Self {
        Self {
            table: p.table.clone(),
        }
    }
}

/// Draws `pool_size` scores by picking an example uniformly, then one of
/// its rounded valid samples uniformly. Examples without valid samples are
/// skipped.
pub fn draw_marginal_pool(sets: &[SampleSet], pool_size: usize, seed: u64) -> Vec<i64> {
    let usable: Vec<Vec<i64>> = sets
        .iter()
        .map(SampleSet::rounded)
        .filter(|r| !r.is_empty())
        .collect();
    if usable.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pool_size)
        .map(|_| {
            let ex = &usable[rng.gen_range(0..usable.len())];
            ex[rng.gen_range(0..ex.len())]
        })
        .collect()
}

/// p(y) = (count(y) + s) / (N + s·|support|).
pub fn estimate_marginal(
    pool: &[i64],
    range: ScoreRange,
    smoothing: f64,
) -> Result<LabelMarginal, CalibrationError> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(CalibrationError::InvalidSmoothing(smoothing));
    }
    if pool.is_empty() && smoothing == 0.0 {
        return Err(CalibrationError::EmptyPool);
    }
    let mut counts = vec![0usize; range.len()];
    for &y in pool {
        let i = range
            .index_of(y)
            .ok_or(CalibrationError::OutsideSupport { value: y, range })?;
        counts[i] += 1;
    }
    let denom = pool.len() as f64 + smoothing * range.len() as f64;
    let prob: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 + smoothing) / denom)
        .collect();
    if prob.iter().any(|&p| p == 0.0) {
        warn!("label marginal has zero-probability scores; calibration will fail on them");
    }
    Ok(LabelMarginal {
        table: SupportTable { range, prob },
        smoothing,
        pool_size: pool.len(),
    })
}

/// Clamp applied to normalized gold values before the likelihood is formed.
pub const BETA_EPS: f64 = 1e-6;
pub const BETA_MAX_NEWTON_ITER: usize = 200;
pub const BETA_MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Newton,
    MomentsFallback,
}

/// A Beta distribution placed on `[domain_lo, domain_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub method: FitMethod,
    pub iterations: usize,
}

impl BetaParams {
    /// Beta(α, β) on the calibration domain `[range.min, range.max + 1]`.
    pub fn on_range(alpha: f64, beta: f64, range: ScoreRange) -> Result<Self, CalibrationError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(CalibrationError::InvalidParams { alpha, beta });
        }
        let (domain_lo, domain_hi) = calibration_domain(range);
        Ok(Self {
            alpha,
            beta,
            domain_lo,
            domain_hi,
            method: FitMethod::Newton,
            iterations: 0,
        })
    }

    fn normalize(&self, t: f64) -> f64 {
        ((t - self.domain_lo) / (self.domain_hi - self.domain_lo)).clamp(0.0, 1.0)
    }
}

/// Integer bins `[y, y+1)` for every y in the range tile this interval.
pub fn calibration_domain(range: ScoreRange) -> (f64, f64) {
    (range.min() as f64, (range.max() + 1) as f64)
}

/// Method-of-moments Beta estimate from values in (0, 1):
/// α0 = μ·c, β0 = (1 − μ)·c with c = μ(1 − μ)/v − 1.
pub fn beta_moments(us: &[f64]) -> Result<(f64, f64), CalibrationError> {
    let n = us.len() as f64;
    let mean = us.iter().sum::<f64>() / n;
    let var = us.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(CalibrationError::ZeroVarianceGold);
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    if !(common > 0.0) {
        return Err(CalibrationError::BetaUndefined(format!(
            "variance {var} too large for mean {mean}"
        )));
    }
    Ok((mean * common, (1.0 - mean) * common))
}

/// Beta log-likelihood per observation given the sufficient statistics
/// mean(ln u) and mean(ln(1 − u)).
pub fn beta_mean_log_likelihood(alpha: f64, beta: f64, mean_ln_u: f64, mean_ln_1mu: f64) -> f64 {
    -special::ln_beta(alpha, beta) + (alpha - 1.0) * mean_ln_u + (beta - 1.0) * mean_ln_1mu
}

/// Maximum-likelihood Beta fit to gold scores already mapped into `range`.
///
/// Values are normalized onto the calibration domain and clamped into
/// [ε, 1 − ε]; Newton iterations on the digamma score equations start from
/// the moment estimate, which is also returned if Newton does not converge.
pub fn fit_beta(gold_rescaled: &[f64], range: ScoreRange) -> Result<BetaParams, CalibrationError> {
    if gold_rescaled.len() < BETA_MIN_POINTS {
        return Err(CalibrationError::TooFewGold {
            need: BETA_MIN_POINTS,
            got: gold_rescaled.len(),
        });
    }
    let (lo, hi) = calibration_domain(range);
    let mut us = Vec::with_capacity(gold_rescaled.len());
    for &g in gold_rescaled {
        if !(g >= lo && g <= hi) {
            return Err(CalibrationError::GoldOutsideDomain { value: g, lo, hi });
        }
        us.push(((g - lo) / (hi - lo)).clamp(BETA_EPS, 1.0 - BETA_EPS));
    }
    if gold_rescaled.iter().all(|&g| g == gold_rescaled[0]) {
        return Err(CalibrationError::ZeroVarianceGold);
    }

    let (a0, b0) = beta_moments(&us)?;
    let n = us.len() as f64;
    let s1 = us.iter().map(|u| u.ln()).sum::<f64>() / n;
    let s2 = us.iter().map(|u| (-u).ln_1p()).sum::<f64>() / n;

    let fallback = BetaParams {
        alpha: a0,
        beta: b0,
        domain_lo: lo,
        domain_hi: hi,
        method: FitMethod::MomentsFallback,
        iterations: BETA_MAX_NEWTON_ITER,
    };
    match newton_beta(a0, b0, s1, s2) {
        Some((alpha, beta, iterations)) => Ok(BetaParams {
            alpha,
            beta,
            method: FitMethod::Newton,
            iterations,
            ..fallback
        }),
        None => {
            warn!("Beta MLE did not converge; using the moment estimate");
            Ok(fallback)
        }
    }
}

fn newton_beta(mut a: f64, mut b: f64, s1: f64, s2: f64) -> Option<(f64, f64, usize)> {
    for iter in 1..=BETA_MAX_NEWTON_ITER {
        let psi_ab = special::digamma(a + b);
        let g1 = psi_ab - special::digamma(a) + s1;
        let g2 = psi_ab - special::digamma(b) + s2;
        let t_ab = special::trigamma(a + b);
        let h11 = t_ab - special::trigamma(a);
        let h22 = t_ab - special::trigamma(b);
        let h12 = t_ab;
        let det = h11 * h22 - h12 * h12;
        if !det.is_finite() || det == 0.0 {
            return None;
        }
        // Newton step: -H^{-1} g
        let mut da = -(h22 * g1 - h12 * g2) / det;
        let mut db = -(h11 * g2 - h12 * g1) / det;
        while a + da <= 0.0 || b + db <= 0.0 {
            da *= 0.5;
            db *= 0.5;
        }
        a += da;
        b += db;
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        if da.abs() <= 1e-12 * a.max(1.0) && db.abs() <= 1e-12 * b.max(1.0) {
            return Some((a, b, iter));
        }
    }
    None
}

/// q(y) = I_{u(y+1)}(α, β) − I_{u(y)}(α, β) for each integer y of `range`.
///
/// Bins in the upper half are differenced on the complementary tail so that
/// small masses near u = 1 keep their precision.
pub fn interval_masses(params: &BetaParams, range: ScoreRange) -> Result<GoldPrior, CalibrationError> {
    let (a, b) = (params.alpha, params.beta);
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(CalibrationError::InvalidParams { alpha: a, beta: b });
    }
    let mean = a / (a + b);
    let mut prob = Vec::with_capacity(range.len());
    for y in range.support() {
        let lo = params.normalize(y as f64);
        let hi = params.normalize((y + 1) as f64);
        let mass = if lo >= mean {
            special::reg_inc_beta(b, a, 1.0 - lo)? - special::reg_inc_beta(b, a, 1.0 - hi)?
        } else {
            special::reg_inc_beta(a, b, hi)? - special::reg_inc_beta(a, b, lo)?
        };
        prob.push(mass.max(0.0));
    }
    Ok(GoldPrior {
        table: SupportTable { range, prob },
    })
}

fn importance_ratios(
    samples: &[i64],
    p: &LabelMarginal,
    q: &GoldPrior,
) -> Result<Vec<f64>, CalibrationError> {
    if p.table.range != q.table.range {
        return Err(CalibrationError::SupportMismatch(p.table.range, q.table.range));
    }
    if samples.is_empty() {
        return Err(CalibrationError::NoSamples);
    }
    let range = p.table.range;
    samples
        .iter()
        .map(|&y| {
            let py = p
                .table
                .get(y)
                .ok_or(CalibrationError::OutsideSupport { value: y, range })?;
            if py <= 0.0 {
                return Err(CalibrationError::ZeroMarginal(y));
            }
            Ok(q.table.get(y).expect("same support") / py)
        })
        .collect()
}

/// Normalized importance weights w_i = (q(y_i)/p(y_i)) / Σ_j q(y_j)/p(y_j).
pub fn calibration_weights(
    samples: &[i64],
    p: &LabelMarginal,
    q: &GoldPrior,
) -> Result<Vec<f64>, CalibrationError> {
    let ratios = importance_ratios(samples, p, q)?;
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err(CalibrationError::ZeroWeights(samples.to_vec()));
    }
    Ok(ratios.into_iter().map(|r| r / total).collect())
}

/// Importance-weighted average of one example's integer samples.
pub fn calibrate_score(
    samples: &[i64],
    p: &LabelMarginal,
    q: &GoldPrior,
) -> Result<f64, CalibrationError> {
    let ratios = importance_ratios(samples, p, q)?;
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err(CalibrationError::ZeroWeights(samples.to_vec()));
    }
    // Σ r_i y_i / Σ r_i: with equal ratios this is exactly the plain mean.
    let weighted: f64 = ratios.iter().zip(samples).map(|(r, &y)| r * y as f64).sum();
    let lo = *samples.iter().min().expect("non-empty") as f64;
    let hi = *samples.iter().max().expect("non-empty") as f64;
    Ok((weighted / total).clamp(lo, hi))
}

/// Calibrates every example's rounded clipped samples; examples without
/// valid samples stay absent.
pub fn calibrate_dataset(
    sets: &[SampleSet],
    p: &LabelMarginal,
    q: &GoldPrior,
) -> Result<Vec<FinalScore>, CalibrationError> {
    sets.par_iter()
        .map(|set| {
            let rounded = set.rounded();
            let value = if rounded.is_empty() {
                None
            } else {
                Some(calibrate_score(&rounded, p, q).map_err(|e| CalibrationError::Example {
                    example_id: set.example_id.clone(),
                    source: Box::new(e),
                })?)
            };
            Ok(FinalScore {
                example_id: set.example_id.clone(),
                value,
                n_valid: rounded.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r09() -> ScoreRange {
        ScoreRange::new(0, 9).unwrap()
    }

    #[test]
    fn marginal_direct_frequencies() {
        let mut pool = vec![8; 900];
        pool.extend([9; 100]);
        let p = estimate_marginal(&pool, r09(), 0.0).unwrap();
        assert_eq!(p.table.get(8), Some(0.9));
        assert_eq!(p.table.get(9), Some(0.1));
        assert_eq!(p.table.get(0), Some(0.0));
    }

    #[test]
    fn marginal_add_one() {
        let mut pool = vec![8; 900];
        pool.extend([9; 100]);
        let p = estimate_marginal(&pool, r09(), 1.0).unwrap();
        assert!((p.table.get(0).unwrap() - 1.0 / 1010.0).abs() < 1e-15);
        assert!((p.table.get(8).unwrap() - 901.0 / 1010.0).abs() < 1e-15);
        assert!((p.table.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_empty_pool() {
        let p = estimate_marginal(&[], r09(), 1.0).unwrap();
        assert!(p.table.prob.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        assert_eq!(estimate_marginal(&[], r09(), 0.0), Err(CalibrationError::EmptyPool));
        assert!(matches!(
            estimate_marginal(&[10], r09(), 1.0),
            Err(CalibrationError::OutsideSupport { value: 10, .. })
        ));
    }

    fn table(entries: &[(i64, f64)]) -> SupportTable {
        let mut prob = vec![0.0; 10];
        for &(y, v) in entries {
            prob[y as usize] = v;
        }
        SupportTable { range: r09(), prob }
    }

    #[test]
    fn calibrate_hand_case() {
        let p = LabelMarginal {
            table: table(&[(8, 0.7), (9, 0.1)]),
            smoothing: 0.0,
            pool_size: 0,
        };
        let q = GoldPrior {
            table: table(&[(8, 0.2), (9, 0.3)]),
        };
        let y = calibrate_score(&[8, 8, 9], &p, &q).unwrap();
        // ratios 2/7, 2/7 and 3: (8·4/7 + 9·3) / (4/7 + 3) = 221/25
        let want = (8.0 * 4.0 / 7.0 + 27.0) / (4.0 / 7.0 + 3.0);
        assert!((y - want).abs() < 1e-12);
        assert!((y - 8.84).abs() < 1e-4);
        let w = calibration_weights(&[8, 8, 9], &p, &q).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[2] / w[0] - 10.5).abs() < 1e-12);
    }

    #[test]
    fn zero_marginal_is_an_error() {
        let p = LabelMarginal {
            table: table(&[(8, 1.0)]),
            smoothing: 0.0,
            pool_size: 1,
        };
        let q = GoldPrior {
            table: table(&[(8, 0.5), (9, 0.5)]),
        };
        assert_eq!(
            calibrate_score(&[8, 9], &p, &q),
            Err(CalibrationError::ZeroMarginal(9))
        );
        assert_eq!(calibrate_score(&[], &p, &q), Err(CalibrationError::NoSamples));
    }

    #[test]
    fn identical_samples_are_fixed_points() {
        let p = estimate_marginal(&[1, 2, 3], r09(), 1.0).unwrap();
        let q = interval_masses(&BetaParams::on_range(2.0, 5.0, r09()).unwrap(), r09()).unwrap();
        assert_eq!(calibrate_score(&[6, 6, 6, 6], &p, &q).unwrap(), 6.0);
    }

    #[test]
    fn uniform_beta_gives_equal_masses() {
        let q = interval_masses(&BetaParams::on_range(1.0, 1.0, r09()).unwrap(), r09()).unwrap();
        for &v in &q.table.prob {
            assert!((v - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn masses_sum_to_one_over_many_params() {
        for &(a, b) in &[(0.3, 0.7), (2.0, 5.0), (40.0, 3.0), (1.0, 90.0), (0.5, 0.5)] {
            for range in [r09(), ScoreRange::new(1, 5).unwrap(), ScoreRange::new(1, 100).unwrap()] {
                let q = interval_masses(&BetaParams::on_range(a, b, range).unwrap(), range).unwrap();
                assert!((q.table.total() - 1.0).abs() < 1e-9, "a={a} b={b} {range}");
                assert!(q.table.prob.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn moments_closed_form() {
        let us = [0.1, 0.2, 0.3, 0.25, 0.4, 0.15];
        let n = us.len() as f64;
        let mu = us.iter().sum::<f64>() / n;
        let v = us.iter().map(|u| (u - mu) * (u - mu)).sum::<f64>() / n;
        let (a0, b0) = beta_moments(&us).unwrap();
        assert!((a0 - mu * (mu * (1.0 - mu) / v - 1.0)).abs() < 1e-12);
        assert!((b0 - (1.0 - mu) * (mu * (1.0 - mu) / v - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fit_beta_errors() {
        assert!(matches!(
            fit_beta(&[1.0; 5], r09()),
            Err(CalibrationError::TooFewGold { need: 10, got: 5 })
        ));
        assert_eq!(fit_beta(&[4.0; 20], r09()), Err(CalibrationError::ZeroVarianceGold));
        let mut bad = vec![1.0; 19];
        bad.push(11.0);
        assert!(matches!(
            fit_beta(&bad, r09()),
            Err(CalibrationError::GoldOutsideDomain { .. })
        ));
    }

    #[test]
    fn fit_beta_symmetric_data() {
        let base: Vec<f64> = (1..=40).map(|i| i as f64 * 0.11).collect();
        let mut gold = base.clone();
        gold.extend(base.iter().map(|g| 10.0 - g));
        let fit = fit_beta(&gold, r09()).unwrap();
        assert_eq!(fit.method, FitMethod::Newton);
        assert!((fit.alpha - fit.beta).abs() < 0.1);
    }
}
