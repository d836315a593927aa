//! Priors for the null simulations: seeded variate generation with derived
//! streams, maximum-likelihood fitting, and goodness-of-fit diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub type Seed = u64;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid distribution parameters: {0}")]
    InvalidSpec(String),
    #[error("lognormal fit requires strictly positive values; found {0}")]
    NonPositiveValueForLognormal(f64),
    #[error("need at least 4 values to fit, got {0}")]
    TooFewValues(usize),
    #[error("truncation bound {0} leaves no probability mass in f64 range")]
    TruncationInfeasible(f64),
}

/// Independent generator for (seed, stream). The rule is fixed: the seed is
/// expanded to a ChaCha8 key by the SplitMix64 seeding of `seed_from_u64`,
/// and the stream index selects the 64-bit ChaCha stream. Any partition of
/// work over stream indices yields the same draws per index.
pub fn derive_rng(seed: Seed, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic sub-seed for a named lane of a larger experiment
/// (one per table row, per grid cell, ...). SplitMix64 over seed ⊕ salt.
pub fn derive_seed(seed: Seed, salt: u64) -> Seed {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The priors the null distributions are simulated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Normal { mu: f64, sigma: f64 },
    Lognormal { mu_log: f64, sigma_log: f64 },
    TruncatedNormal { mu: f64, sigma: f64, lower: f64 },
}

impl DistributionSpec {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self, DistError> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(DistError::InvalidSpec(format!("normal({mu}, {sigma})")));
        }
        Ok(DistributionSpec::Normal { mu, sigma })
    }

    pub fn lognormal(mu_log: f64, sigma_log: f64) -> Result<Self, DistError> {
        if !(sigma_log > 0.0) || !mu_log.is_finite() || !sigma_log.is_finite() {
            return Err(DistError::InvalidSpec(format!(
                "lognormal({mu_log}, {sigma_log})"
            )));
        }
        Ok(DistributionSpec::Lognormal { mu_log, sigma_log })
    }

    pub fn truncated_normal(mu: f64, sigma: f64, lower: f64) -> Result<Self, DistError> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() || !lower.is_finite() {
            return Err(DistError::InvalidSpec(format!(
                "truncated_normal({mu}, {sigma}, {lower})"
            )));
        }
        Ok(DistributionSpec::TruncatedNormal { mu, sigma, lower })
    }

    /// Affine-equivalent standard form used as the table cache key: h* is
    /// invariant under positive affine maps, so the location/scale of a
    /// normal drops out entirely, the log-location of a lognormal drops
    /// out (a scale factor on the raw values), and a truncated normal
    /// keeps only its standardised bound.
    pub fn standardized(&self) -> DistributionSpec {
        match *self {
            DistributionSpec::Normal { .. } => DistributionSpec::Normal { mu: 0.0, sigma: 1.0 },
            DistributionSpec::Lognormal { sigma_log, .. } => DistributionSpec::Lognormal {
                mu_log: 0.0,
                sigma_log,
            },
            DistributionSpec::TruncatedNormal { mu, sigma, lower } => {
                DistributionSpec::TruncatedNormal {
                    mu: 0.0,
                    sigma: 1.0,
                    lower: (lower - mu) / sigma,
                }
            }
        }
    }

    /// Short stable token for file names and table headers.
    pub fn cache_key(&self) -> String {
        match self.standardized() {
            DistributionSpec::Normal { .. } => "normal".to_string(),
            DistributionSpec::Lognormal { sigma_log, .. } => {
                if (sigma_log - 1.0).abs() < 1e-12 {
                    "lognormal".to_string()
                } else {
                    format!("lognormal-s{sigma_log:.4}")
                }
            }
            DistributionSpec::TruncatedNormal { lower, .. } => {
                format!("truncnormal-l{lower:.4}")
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DistributionSpec::Normal { .. } => "normal",
            DistributionSpec::Lognormal { .. } => "lognormal",
            DistributionSpec::TruncatedNormal { .. } => "truncated_normal",
        }
    }

    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<(), DistError> {
        match *self {
            DistributionSpec::Normal { mu, sigma } => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = mu + sigma * z;
                }
            }
            DistributionSpec::Lognormal { mu_log, sigma_log } => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = (mu_log + sigma_log * z).exp();
                }
            }
            DistributionSpec::TruncatedNormal { mu, sigma, lower } => {
                for v in out.iter_mut() {
                    *v = draw_truncated_normal(rng, mu, sigma, lower)?;
                }
            }
        }
        Ok(())
    }
}

/// One truncated-normal variate via the inverse cdf on the tail region,
/// written in the complementary form so far bounds keep their precision.
pub fn draw_truncated_normal(
    rng: &mut ChaCha8Rng,
    mu: f64,
    sigma: f64,
    lower: f64,
) -> Result<f64, DistError> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let a = (lower - mu) / sigma;
    let tail = std.cdf(-a); // Φ(−a) = 1 − Φ(a), exact by symmetry
    if tail <= 0.0 {
        return Err(DistError::TruncationInfeasible(lower));
    }
    let u: f64 = rng.gen::<f64>();
    // tail mass of the draw is tail·(1−u) ∈ (0, tail]; quantile by reflection
    let t = tail * (1.0 - u);
    let z = -std.inverse_cdf(t.max(f64::MIN_POSITIVE));
    let x = mu + sigma * z;
    Ok(if x > lower { x } else { lower + f64::MIN_POSITIVE })
}

/// Deterministic draws: stream 0 of the given seed.
pub fn sample(spec: &DistributionSpec, count: usize, seed: Seed) -> Result<Vec<f64>, DistError> {
    let mut rng = derive_rng(seed, 0);
    let mut out = vec![0.0; count];
    spec.draw_into(&mut rng, &mut out)?;
    Ok(out)
}

/// Which family to fit to the ordinary data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Normal,
    Lognormal,
}

/// Goodness-of-fit test identity for the fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GofTest {
    /// Anderson–Darling for normality with the parameters-estimated
    /// correction; tail-sensitive.
    #[default]
    AndersonDarling,
    /// Kolmogorov–Smirnov with the Lilliefors correction for estimated
    /// parameters (Dallal–Wilkinson approximation).
    LillieforsKs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fitted: DistributionSpec,
    pub gof_test: GofTest,
    pub gof_statistic: f64,
    pub gof_p_value: f64,
    /// (theoretical quantile of the fitted law, sample quantile), one pair
    /// per observation at plotting positions (i − ½)/n.
    pub qq_points: Vec<(f64, f64)>,
}

/// Maximum-likelihood fit plus GoF p-value and Q-Q points.
pub fn fit(values: &[f64], kind: FitKind, gof: GofTest) -> Result<FitDiagnostics, DistError> {
    if values.len() < 4 {
        return Err(DistError::TooFewValues(values.len()));
    }
    let work: Vec<f64> = match kind {
        FitKind::Normal => values.to_vec(),
        FitKind::Lognormal => {
            if let Some(bad) = values.iter().find(|v| **v <= 0.0) {
                return Err(DistError::NonPositiveValueForLognormal(*bad));
            }
            values.iter().map(|v| v.ln()).collect()
        }
    };
    let n = work.len() as f64;
    let mean = work.iter().sum::<f64>() / n;
    let sd = (work.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(DistError::InvalidSpec(
            "constant data: fitted sigma is zero".to_string(),
        ));
    }

    let mut sorted = work.clone();
    sorted.sort_by(f64::total_cmp);
    let (stat, p) = match gof {
        GofTest::AndersonDarling => anderson_darling_normal(&sorted, mean, sd),
        GofTest::LillieforsKs => lilliefors_ks_normal(&sorted, mean, sd),
    };

    let std = Normal::new(mean, sd).expect("fitted normal");
    let qq: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let q = std.inverse_cdf((i as f64 + 0.5) / n);
            match kind {
                FitKind::Normal => (q, *v),
                FitKind::Lognormal => (q.exp(), v.exp()),
            }
        })
        .collect();

    let fitted = match kind {
        FitKind::Normal => DistributionSpec::normal(mean, sd)?,
        FitKind::Lognormal => DistributionSpec::lognormal(mean, sd)?,
    };
    Ok(FitDiagnostics {
        fitted,
        gof_test: gof,
        gof_statistic: stat,
        gof_p_value: p,
        qq_points: qq,
    })
}

/// A² with the Stephens small-sample correction and the D'Agostino–Stephens
/// p-value branches for the all-parameters-estimated normal case.
fn anderson_darling_normal(sorted: &[f64], mean: f64, sd: f64) -> (f64, f64) {
    let n = sorted.len();
    let nf = n as f64;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut acc = 0.0;
    for i in 0..n {
        let zi = std.cdf((sorted[i] - mean) / sd).clamp(1e-300, 1.0 - 1e-16);
        let zr = std
            .cdf((sorted[n - 1 - i] - mean) / sd)
            .clamp(1e-300, 1.0 - 1e-16);
        acc += (2.0 * i as f64 + 1.0) * (zi.ln() + (1.0 - zr).ln());
    }
    let a2 = -nf - acc / nf;
    let a2s = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a2s >= 0.6 {
        (1.2937 - 5.709 * a2s + 0.0186 * a2s * a2s).exp()
    } else if a2s >= 0.34 {
        (0.9177 - 4.279 * a2s - 1.38 * a2s * a2s).exp()
    } else if a2s >= 0.2 {
        1.0 - (-8.318 + 42.796 * a2s - 59.938 * a2s * a2s).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a2s - 223.73 * a2s * a2s).exp()
    };
    (a2, p.clamp(0.0, 1.0))
}

/// KS distance against the fitted normal with the Dallal–Wilkinson (1986)
/// p-value approximation for the Lilliefors setting.
fn lilliefors_ks_normal(sorted: &[f64], mean: f64, sd: f64) -> (f64, f64) {
    let n = sorted.len();
    let nf = n as f64;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut d: f64 = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        let z = std.cdf((v - mean) / sd);
        let hi = (i as f64 + 1.0) / nf - z;
        let lo = z - i as f64 / nf;
        d = d.max(hi).max(lo);
    }
    let (dm, nn) = if n > 100 {
        (d * (nf / 100.0).powf(0.49), 100.0)
    } else {
        (d, nf)
    };
    let p = (-7.01256 * dm * dm * (nn + 2.78019) + 2.99587 * dm * (nn + 2.78019).sqrt()
        - 0.122119
        + 0.974598 / nn.sqrt()
        + 1.67997 / nn)
        .exp();
    (d, p.clamp(0.0, 1.0))
}
