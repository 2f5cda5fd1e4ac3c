//! Duration distributions: fitting by moments / maximum likelihood and
//! selection by CDF standard error.

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma, LogNormal, Normal, Triangular};

use super::ParameterError;

/// Attempts at redrawing a negative sample before clamping to zero.
const RESAMPLE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Pdf {
    Normal {
        mean: f64,
        std: f64,
    },
    Exponential {
        mean: f64,
    },
    Uniform {
        min: f64,
        max: f64,
    },
    #[serde(rename = "fixed_value")]
    Fixed {
        value: f64,
    },
    Triangular {
        min: f64,
        mode: f64,
        max: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    #[serde(rename = "log_normal")]
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl Pdf {
    pub fn family(&self) -> &'static str {
        match self {
            Pdf::Normal { .. } => "Normal",
            Pdf::Exponential { .. } => "Exponential",
            Pdf::Uniform { .. } => "Uniform",
            Pdf::Fixed { .. } => "FixedValue",
            Pdf::Triangular { .. } => "Triangular",
            Pdf::Gamma { .. } => "Gamma",
            Pdf::LogNormal { .. } => "LogNormal",
        }
    }

    /// Number of free parameters.
    pub fn arity(&self) -> usize {
        match self {
            Pdf::Fixed { .. } => 0,
            Pdf::Exponential { .. } => 1,
            Pdf::Triangular { .. } => 3,
            _ => 2,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Pdf::Normal { mean, .. } | Pdf::Exponential { mean } => mean,
            Pdf::Uniform { min, max } => (min + max) / 2.0,
            Pdf::Fixed { value } => value,
            Pdf::Triangular { min, mode, max } => (min + mode + max) / 3.0,
            Pdf::Gamma { shape, scale } => shape * scale,
            Pdf::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    pub fn validate(&self) -> Result<(), ParameterError> {
        let ok = match *self {
            Pdf::Normal { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            Pdf::Exponential { mean } => mean.is_finite() && mean > 0.0,
            Pdf::Uniform { min, max } => min.is_finite() && max.is_finite() && min <= max,
            Pdf::Fixed { value } => value.is_finite() && value >= 0.0,
            Pdf::Triangular { min, mode, max } => {
                [min, mode, max].iter().all(|v| v.is_finite()) && min <= mode && mode <= max && min < max
            }
            Pdf::Gamma { shape, scale } => shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0,
            Pdf::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ParameterError::InvalidDistribution(*self))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Pdf::Normal { mean, std } => Normal::new(mean, std).map_or(f64::NAN, |d| d.cdf(x)),
            Pdf::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x / mean).exp()
                }
            }
            Pdf::Uniform { min, max } => {
                if x < min {
                    0.0
                } else if x >= max {
                    1.0
                } else {
                    (x - min) / (max - min)
                }
            }
            Pdf::Fixed { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Pdf::Triangular { min, mode, max } => Triangular::new(min, max, mode).map_or(f64::NAN, |d| d.cdf(x)),
            Pdf::Gamma { shape, scale } => Gamma::new(shape, 1.0 / scale).map_or(f64::NAN, |d| d.cdf(x)),
            Pdf::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).map_or(f64::NAN, |d| d.cdf(x)),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Pdf::Normal { mean, std } => rand_distr::Normal::new(mean, std).map_or(mean, |d| d.sample(rng)),
            Pdf::Exponential { mean } => rand_distr::Exp::new(1.0 / mean).map_or(mean, |d| d.sample(rng)),
            Pdf::Uniform { min, max } => {
                if min < max {
                    rng.random_range(min..max)
                } else {
                    min
                }
            }
            Pdf::Fixed { value } => value,
            Pdf::Triangular { min, mode, max } => {
                rand_distr::Triangular::new(min, max, mode).map_or(mode, |d| d.sample(rng))
            }
            Pdf::Gamma { shape, scale } => {
                rand_distr::Gamma::new(shape, scale).map_or(shape * scale, |d| d.sample(rng))
            }
            Pdf::LogNormal { mu, sigma } => rand_distr::LogNormal::new(mu, sigma).map_or(mu.exp(), |d| d.sample(rng)),
        }
    }

    /// Draws a non-negative value, redrawing negatives a few times before clamping.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        for _ in 0..RESAMPLE_LIMIT {
            let x = self.draw(rng);
            if x >= 0.0 {
                return x;
            }
        }
        0.0
    }
}

/// A fitted distribution with its standard error against the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    #[serde(flatten)]
    pub pdf: Pdf,
    #[serde(default)]
    pub fit_error: f64,
}

impl Distribution {
    pub fn exact(pdf: Pdf) -> Self {
        Self { pdf, fit_error: 0.0 }
    }

    pub fn fixed(value: f64) -> Self {
        Self::exact(Pdf::Fixed { value })
    }

    pub fn mean(&self) -> f64 {
        self.pdf.mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.pdf.sample(rng)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Candidate fits of every family applicable to `samples`.
pub fn candidates(samples: &[f64]) -> Vec<Pdf> {
    let (mean, var) = mean_var(samples);
    let std = var.sqrt();
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![
        Pdf::Normal { mean, std },
        Pdf::Exponential { mean },
        Pdf::Uniform { min, max },
        Pdf::Fixed { value: mean },
        Pdf::Triangular {
            min,
            mode: (3.0 * mean - min - max).clamp(min, max),
            max,
        },
        Pdf::Gamma {
            shape: mean * mean / var,
            scale: var / mean,
        },
    ];
    if min > 0.0 {
        let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
        let (mu, lvar) = mean_var(&logs);
        out.push(Pdf::LogNormal { mu, sigma: lvar.sqrt() });
    }
    out.retain(|p| p.validate().is_ok());
    out
}

/// Root-mean-square gap between the fitted CDF and the empirical CDF
/// `(i - 0.5) / n` at the sorted samples.
pub fn standard_error(pdf: &Pdf, sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let sse: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (pdf.cdf(x) - (i as f64 + 0.5) / n).powi(2))
        .sum();
    (sse / n).sqrt()
}

/// Fits every family and keeps the one with the smallest standard error.
/// Families whose error is within sampling noise of the minimum count as
/// tied, and the one with fewer parameters wins. Zero-variance (or single)
/// samples resolve to a fixed value.
pub fn fit_distribution(samples: &[f64]) -> Result<Distribution, ParameterError> {
    if samples.is_empty() {
        return Err(ParameterError::NoSamples);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(ParameterError::NonFiniteSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(Distribution::fixed(sorted[0]));
    }
    let fits: Vec<Distribution> = candidates(&sorted)
        .into_iter()
        .map(|pdf| Distribution {
            pdf,
            fit_error: standard_error(&pdf, &sorted),
        })
        .filter(|d| d.fit_error.is_finite())
        .collect();
    let Some(min_error) = fits.iter().map(|d| d.fit_error).min_by(f64::total_cmp) else {
        return Ok(Distribution::fixed(sorted.iter().sum::<f64>() / sorted.len() as f64));
    };
    // expected RMSE of an empirical CDF against its own true CDF
    let noise = (6.0 * sorted.len() as f64).sqrt().recip();
    let best = fits
        .into_iter()
        .filter(|d| d.fit_error <= min_error + noise)
        .min_by(|a, b| {
            a.pdf
                .arity()
                .cmp(&b.pdf.arity())
                .then(a.fit_error.total_cmp(&b.fit_error))
        })
        .expect("the minimum is within tolerance");
    Ok(best)
}

/// Forces an exponential with the sample mean, bypassing selection.
pub fn fit_exponential(samples: &[f64]) -> Result<Distribution, ParameterError> {
    if samples.is_empty() {
        return Err(ParameterError::NoSamples);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if mean <= 0.0 {
        return Ok(Distribution::fixed(0.0));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pdf = Pdf::Exponential { mean };
    Ok(Distribution {
        pdf,
        fit_error: standard_error(&pdf, &sorted),
    })
}
