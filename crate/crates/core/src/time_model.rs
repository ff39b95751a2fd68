//! Operation time distributions.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};

/// Rejections allowed before the truncated normal sampler gives up and
/// returns `mean / 100`.
const MAX_REJECTIONS: usize = 100;

/// Distribution of the time an agent needs for one operation, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeModel {
    Constant { mean: f64 },
    /// Normal(mean, sd) conditioned on being positive.
    TruncNormal { mean: f64, sd: f64 },
    /// Log-normal with the given mean and standard deviation (of the
    /// variable itself, not of its logarithm).
    LogNormal { mean: f64, sd: f64 },
    Empirical { samples: Vec<f64> },
}

impl TimeModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Consistency(msg));
        match self {
            TimeModel::Constant { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return bad(format!("constant time must be positive, got {mean}"));
                }
            }
            TimeModel::TruncNormal { mean, sd } | TimeModel::LogNormal { mean, sd } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return bad(format!("mean must be positive, got {mean}"));
                }
                if !(sd.is_finite() && *sd >= 0.0) {
                    return bad(format!("sd must be non-negative, got {sd}"));
                }
            }
            TimeModel::Empirical { samples } => {
                if samples.is_empty() {
                    return bad("empirical model needs at least one sample".into());
                }
                if let Some(s) = samples.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return bad(format!("empirical samples must be positive, got {s}"));
                }
            }
        }
        Ok(())
    }

    pub fn expected(&self) -> f64 {
        match self {
            TimeModel::Constant { mean } | TimeModel::LogNormal { mean, .. } => *mean,
            TimeModel::TruncNormal { mean, sd } => {
                if *sd == 0.0 {
                    return *mean;
                }
                let std = StdNormal::new(0.0, 1.0).expect("standard normal");
                let alpha = -mean / sd;
                let tail = 1.0 - std.cdf(alpha);
                if tail <= f64::MIN_POSITIVE {
                    // Essentially all mass is below zero; the sampler clamps.
                    return mean / 100.0;
                }
                mean + sd * std.pdf(alpha) / tail
            }
            TimeModel::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            TimeModel::Constant { .. } => 0.0,
            TimeModel::TruncNormal { sd, .. } | TimeModel::LogNormal { sd, .. } => *sd,
            TimeModel::Empirical { samples } => {
                let n = samples.len() as f64;
                let m = self.expected();
                (samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n).sqrt()
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            TimeModel::Constant { .. } => true,
            TimeModel::TruncNormal { sd, .. } | TimeModel::LogNormal { sd, .. } => *sd == 0.0,
            TimeModel::Empirical { samples } => samples.iter().all(|s| *s == samples[0]),
        }
    }

    /// Same shape with every time multiplied by `factor`; the coefficient of
    /// variation is unchanged.
    pub fn scaled(&self, factor: f64) -> TimeModel {
        match self {
            TimeModel::Constant { mean } => TimeModel::Constant {
                mean: mean * factor,
            },
            TimeModel::TruncNormal { mean, sd } => TimeModel::TruncNormal {
                mean: mean * factor,
                sd: sd * factor,
            },
            TimeModel::LogNormal { mean, sd } => TimeModel::LogNormal {
                mean: mean * factor,
                sd: sd * factor,
            },
            TimeModel::Empirical { samples } => TimeModel::Empirical {
                samples: samples.iter().map(|s| s * factor).collect(),
            },
        }
    }

    /// Method-of-moments log-normal fit.
    pub fn fit_lognormal(samples: &[f64]) -> Result<TimeModel> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "log-normal fit needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let model = TimeModel::LogNormal {
            mean,
            sd: var.sqrt(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TimeModel::Constant { mean } => *mean,
            TimeModel::TruncNormal { mean, sd } => {
                if *sd == 0.0 {
                    return *mean;
                }
                let normal = Normal::new(*mean, *sd).expect("validated parameters");
                for _ in 0..MAX_REJECTIONS {
                    let x = normal.sample(rng);
                    if x > 0.0 {
                        return x;
                    }
                }
                mean / 100.0
            }
            TimeModel::LogNormal { mean, sd } => {
                if *sd == 0.0 {
                    return *mean;
                }
                let sigma2 = (1.0 + (sd / mean).powi(2)).ln();
                let mu = mean.ln() - sigma2 / 2.0;
                LogNormal::new(mu, sigma2.sqrt())
                    .expect("validated parameters")
                    .sample(rng)
            }
            TimeModel::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }
}
