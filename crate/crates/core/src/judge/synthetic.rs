use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenerationConfig, GenerationRequest, Judge, JudgeError, RawGeneration};
use crate::dataset::ScoreRange;

/// Parameters of the synthetic biased judge.
///
/// Each draw emits `mode_value` with probability λ(T), otherwise the rounded
/// gold score jittered by a uniform integer in `[-noise_halfwidth, noise_halfwidth]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticJudgeParams {
    pub mode_value: i64,
    pub base_concentration: f64,
    pub reference_temperature: f64,
    pub noise_halfwidth: u32,
    pub seed: u64,
}

impl SyntheticJudgeParams {
    /// λ(T) = clamp(λ0 · T_ref / T, 0, 1). At T = 0 this is the limit value.
    pub fn concentration(&self, temperature: f64) -> f64 {
        if temperature <= 0.0 {
            return if self.base_concentration > 0.0 { 1.0 } else { 0.0 };
        }
        (self.base_concentration * self.reference_temperature / temperature).clamp(0.0, 1.0)
    }

    pub fn validate(&self, range: ScoreRange) -> Result<(), JudgeError> {
        if !range.contains(self.mode_value) {
            return Err(JudgeError::Config(format!(
                "synthetic mode {} lies outside score range {range}",
                self.mode_value
            )));
        }
        if !(0.0..=1.0).contains(&self.base_concentration) {
            return Err(JudgeError::Config(format!(
                "base concentration must be in [0, 1], got {}",
                self.base_concentration
            )));
        }
        if !(self.reference_temperature > 0.0 && self.reference_temperature.is_finite()) {
            return Err(JudgeError::Config(format!(
                "reference temperature must be positive, got {}",
                self.reference_temperature
            )));
        }
        Ok(())
    }

    fn rng_for(&self, example_id: &str, cfg: &GenerationConfig) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((example_id.len() as u64).to_le_bytes());
        h.update(example_id.as_bytes());
        h.update(cfg.temperature.to_bits().to_le_bytes());
        h.update((cfg.n_samples as u64).to_le_bytes());
        h.update(cfg.max_tokens.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Draws `cfg.n_samples` texts for one example. Deterministic in
    /// `(seed, example_id, cfg)`.
    pub fn sample(
        &self,
        example_id: &str,
        gold_rescaled: f64,
        range: ScoreRange,
        cfg: &GenerationConfig,
    ) -> RawGeneration {
        let lambda = self.concentration(cfg.temperature);
        let h = self.noise_halfwidth as i64;
        let (lo, hi) = (range.min() as f64, range.max() as f64);
        let mut rng = self.rng_for(example_id, cfg);
        let texts = (0..cfg.n_samples)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < lambda {
                    self.mode_value.to_string()
                } else {
                    let jitter = rng.gen_range(-h..=h) as f64;
                    let v = (gold_rescaled + jitter).round().clamp(lo, hi) as i64;
                    v.to_string()
                }
            })
            .collect();
        RawGeneration {
            example_id: example_id.to_string(),
            texts,
        }
    }
}

/// User-facing synthetic judge settings. Without an explicit mode the judge
/// concentrates on `range.max - 1`, so the mode follows the range in sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub mode_value: Option<i64>,
    pub base_concentration: f64,
    pub reference_temperature: f64,
    pub noise_halfwidth: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            mode_value: None,
            base_concentration: 0.9,
            reference_temperature: 0.7,
            noise_halfwidth: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn params(&self, range: ScoreRange, seed: u64) -> SyntheticJudgeParams {
        SyntheticJudgeParams {
            mode_value: self.mode_value.unwrap_or(range.max() - 1),
            base_concentration: self.base_concentration,
            reference_temperature: self.reference_temperature,
            noise_halfwidth: self.noise_halfwidth,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticJudge {
    params: SyntheticJudgeParams,
}

impl SyntheticJudge {
    pub fn new(params: SyntheticJudgeParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &SyntheticJudgeParams {
        &self.params
    }
}

impl Judge for SyntheticJudge {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RawGeneration, JudgeError> {
        self.params.validate(req.range)?;
        Ok(self
            .params
            .sample(req.example_id, req.gold_rescaled, req.range, req.cfg))
    }

    fn backend_name(&self) -> &'static str {
        "synthetic"
    }
}
