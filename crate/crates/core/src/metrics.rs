//! Excess kurtosis, score histograms and Pearson correlation with a
//! two-tailed t-test.

use serde::Serialize;
use thiserror::Error;

use crate::dataset::ScoreRange;
use crate::special::{self, SpecialError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("zero variance: distribution is fully concentrated")]
    Degenerate,
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Significance threshold used to star correlations.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

fn central_moment_sums(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m4 / n)
}

// Variance this small relative to the values' magnitude is rounding residue.
fn is_degenerate(mean: f64, m2: f64) -> bool {
    m2 <= 1e-26 * (1.0 + mean * mean)
}

/// Excess kurtosis with the population (moment) estimator: m4 / m2² − 3.
pub fn excess_kurtosis(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() < 4 {
        return Err(MetricsError::TooFew {
            need: 4,
            got: xs.len(),
        });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (mean, m2, m4) = central_moment_sums(xs);
    if is_degenerate(mean, m2) {
        return Err(MetricsError::Degenerate);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

impl CorrelationResult {
    pub fn significant(&self) -> bool {
        significance_star(self.p_value)
    }
}

/// Product-moment correlation with a two-tailed p-value from Student's t
/// on n − 2 degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(MetricsError::TooFew { need: 3, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if is_degenerate(mx, sxx / nf) {
        return Err(MetricsError::ZeroVariance("x"));
    }
    if is_degenerate(my, syy / nf) {
        return Err(MetricsError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = correlation_p_value(r, n)?;
    Ok(CorrelationResult { r, p_value, n })
}

/// Two-tailed p for H0: ρ = 0. With t = r·√((n−2)/(1−r²)) the t-tail
/// argument df/(df+t²) reduces to 1 − r².
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64, MetricsError> {
    let df = (n - 2) as f64;
    let one_minus_r2 = (1.0 - r * r).max(0.0);
    if one_minus_r2 == 0.0 {
        return Ok(0.0);
    }
    Ok(special::reg_inc_beta(0.5 * df, 0.5, one_minus_r2)?)
}

pub fn significance_star(p: f64) -> bool {
    p < SIGNIFICANCE_LEVEL
}

/// Counts of rounded scores over the integer support of a range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreDistribution {
    pub support: Vec<i64>,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl ScoreDistribution {
    pub fn count_of(&self, value: i64) -> Option<u64> {
        let first = *self.support.first()?;
        self.counts.get(usize::try_from(value - first).ok()?).copied()
    }

    /// Support value with the highest count (larger value on ties).
    pub fn argmax(&self) -> Option<i64> {
        if self.n == 0 {
            return None;
        }
        self.support
            .iter()
            .zip(&self.counts)
            .fold(None, |best: Option<(i64, u64)>, (&v, &c)| match best {
                Some((_, bc)) if bc > c => best,
                _ => Some((v, c)),
            })
            .map(|(v, _)| v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("support,count\n");
        for (s, c) in self.support.iter().zip(&self.counts) {
            out.push_str(&format!("{s},{c}\n"));
        }
        out
    }
}

/// Histogram of `round(score)`. Values are expected inside `range`; any
/// that round outside it are clamped onto the nearest end.
pub fn histogram(scores: &[f64], range: ScoreRange) -> ScoreDistribution {
    let support: Vec<i64> = range.support().collect();
    let mut counts = vec![0u64; support.len()];
    for &s in scores {
        let v = (s.round() as i64).clamp(range.min(), range.max());
        counts[(v - range.min()) as usize] += 1;
    }
    ScoreDistribution {
        support,
        counts,
        n: scores.len() as u64,
    }
}
