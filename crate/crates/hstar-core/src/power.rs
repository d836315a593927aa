//! Simulation studies: power curves over effect sizes and confidence
//! levels, the sample-size accumulation study, and regression summaries.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{derive_rng, derive_seed, DistError, DistributionSpec, Seed};
use crate::montecarlo::{McError, NullStore};
use crate::stat::h_star_of_max;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("effect sizes must be positive, got {0}")]
    BadEffectSize(f64),
    #[error("confidence levels must lie in (0, 1), got {0}")]
    BadConfidenceLevel(f64),
    #[error("sample sizes must be at least 4, got {0}")]
    SampleSizeTooSmall(usize),
    #[error("schedule must be strictly increasing")]
    NonIncreasingSchedule,
    #[error("need at least {needed} points for the regression, got {got}")]
    DegenerateDesign { needed: usize, got: usize },
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Default sample-size grid: every size 4..=32, then steps of 10 to 102 and
/// steps of 100 to 1002, mirroring the tabulated rows.
pub fn default_size_grid() -> Vec<usize> {
    let mut v: Vec<usize> = (4..=32).collect();
    v.extend((42..=102).step_by(10));
    v.extend((202..=1002).step_by(100));
    v
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerStudySpec {
    pub effect_sizes: Vec<f64>,
    pub confidence_levels: Vec<f64>,
    pub sizes: Vec<usize>,
    pub trials: u64,
    /// Trials for each critical-value null.
    pub null_trials: u64,
    pub seed: Seed,
}

impl Default for PowerStudySpec {
    fn default() -> Self {
        PowerStudySpec {
            effect_sizes: vec![1.7, 3.7, 6.6],
            confidence_levels: vec![0.90, 0.95, 0.99],
            sizes: default_size_grid(),
            trials: 10_000,
            null_trials: 1_000_000,
            seed: 0,
        }
    }
}

impl PowerStudySpec {
    fn validate(&self) -> Result<(), PowerError> {
        for &d in &self.effect_sizes {
            if !(d >= 0.0) {
                return Err(PowerError::BadEffectSize(d));
            }
        }
        for &cl in &self.confidence_levels {
            if !(cl > 0.0 && cl < 1.0) {
                return Err(PowerError::BadConfidenceLevel(cl));
            }
        }
        for &n in &self.sizes {
            if n < 4 {
                return Err(PowerError::SampleSizeTooSmall(n));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerPoint {
    pub effect: f64,
    pub confidence_level: f64,
    pub n: usize,
    pub power: f64,
}

/// Power of the test: n−1 standard normal draws plus one outlier mean-
/// shifted by the effect size; power is the fraction of trials whose h*
/// (sample max as candidate) exceeds the critical value at 1 − CL.
pub fn power_curve(
    spec: &PowerStudySpec,
    store: &NullStore,
) -> Result<Vec<PowerPoint>, PowerError> {
    spec.validate()?;
    let prior = DistributionSpec::normal(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for (ei, &effect) in spec.effect_sizes.iter().enumerate() {
        for &n in &spec.sizes {
            let null = store.get_or_simulate(&prior, n, spec.null_trials, spec.seed)?;
            // one stream family per (effect, n) cell so cells are
            // independent yet reproducible
            let cell_seed = derive_seed(spec.seed, 0x7077 ^ ((ei as u64) << 32) ^ n as u64);
            let crits: Vec<f64> = spec
                .confidence_levels
                .iter()
                .map(|cl| null.critical_value(1.0 - cl))
                .collect::<Result<_, _>>()?;
            let hits: Vec<u64> = (0..spec.trials as usize)
                .into_par_iter()
                .with_min_len(256)
                .fold(
                    || (vec![0u64; crits.len()], vec![0.0f64; n]),
                    |(mut hits, mut buf): (Vec<u64>, Vec<f64>), t: usize| {
                        let mut rng = derive_rng(cell_seed, t as u64);
                        fill_standard_normal(&mut rng, &mut buf);
                        buf[0] += effect;
                        let h = h_star_of_max(&buf);
                        for (k, c) in crits.iter().enumerate() {
                            if h > *c {
                                hits[k] += 1;
                            }
                        }
                        (hits, buf)
                    },
                )
                .map(|(hits, _)| hits)
                .reduce(
                    || vec![0u64; crits.len()],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        a
                    },
                );
            for (k, &cl) in spec.confidence_levels.iter().enumerate() {
                out.push(PowerPoint {
                    effect,
                    confidence_level: cl,
                    n,
                    power: hits[k] as f64 / spec.trials as f64,
                });
            }
        }
    }
    Ok(out)
}

/// Figure-ready CSV: `effect,cl,n,power`.
pub fn write_power_csv<W: Write>(points: &[PowerPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "effect,cl,n,power")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.effect, p.confidence_level, p.n, p.power)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccumulationSpec {
    pub effect_size: f64,
    /// Strictly increasing sample sizes (including the outlier).
    pub schedule: Vec<usize>,
    pub trials: u64,
    /// Confidence level for the power column.
    pub confidence_level: f64,
    /// Trials for each per-size critical-value null.
    pub null_trials: u64,
    pub seed: Seed,
}

impl Default for AccumulationSpec {
    fn default() -> Self {
        AccumulationSpec {
            effect_size: 1.7,
            schedule: default_size_grid(),
            trials: 1_000,
            confidence_level: 0.95,
            null_trials: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AccumulationPoint {
    pub n: usize,
    pub mean_h: f64,
    pub sd_h: f64,
    pub power: f64,
    pub mean_h_tilde: f64,
}

/// Accumulating observations with one persistent surprise. Each trial draws
/// its ordinary sequence once and a single positive offset from the
/// truncated normal (mean = effect size, unit variance, lower bound 0);
/// the outlier sits at the running maximum of the ordinary data plus that
/// fixed offset, so it stays greater than the entire ordinary data at every
/// size while h* is recorded along the schedule.
pub fn accumulation_study(
    spec: &AccumulationSpec,
    store: &NullStore,
) -> Result<Vec<AccumulationPoint>, PowerError> {
    if !(spec.effect_size > 0.0) {
        return Err(PowerError::BadEffectSize(spec.effect_size));
    }
    if spec.schedule.is_empty() || spec.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PowerError::NonIncreasingSchedule);
    }
    if spec.schedule[0] < 4 {
        return Err(PowerError::SampleSizeTooSmall(spec.schedule[0]));
    }
    if !(spec.confidence_level > 0.0 && spec.confidence_level < 1.0) {
        return Err(PowerError::BadConfidenceLevel(spec.confidence_level));
    }

    let prior = DistributionSpec::normal(0.0, 1.0).expect("unit normal");
    let alpha = 1.0 - spec.confidence_level;
    let mut crits = Vec::with_capacity(spec.schedule.len());
    for &n in &spec.schedule {
        let null = store.get_or_simulate(&prior, n, spec.null_trials, spec.seed)?;
        crits.push(null.critical_value(alpha)?);
    }

    let n_max = *spec.schedule.last().unwrap();
    let k = spec.schedule.len();
    let study_seed = derive_seed(spec.seed, 0xacc0);

    struct Acc {
        sum_h: Vec<f64>,
        sum_h2: Vec<f64>,
        sum_ht: Vec<f64>,
        hits: Vec<u64>,
    }
    impl Acc {
        fn new(k: usize) -> Self {
            Acc {
                sum_h: vec![0.0; k],
                sum_h2: vec![0.0; k],
                sum_ht: vec![0.0; k],
                hits: vec![0; k],
            }
        }
        fn merge(mut self, o: Acc) -> Acc {
            for i in 0..self.sum_h.len() {
                self.sum_h[i] += o.sum_h[i];
                self.sum_h2[i] += o.sum_h2[i];
                self.sum_ht[i] += o.sum_ht[i];
                self.hits[i] += o.hits[i];
            }
            self
        }
    }

    let schedule = &spec.schedule;
    let crits_ref = &crits;
    let acc = (0..spec.trials as usize)
        .into_par_iter()
        .with_min_len(8)
        .fold(
            || (Acc::new(k), vec![0.0f64; n_max]),
            |(mut acc, mut buf): (Acc, Vec<f64>), t: usize| {
                let mut rng = derive_rng(study_seed, t as u64);
                fill_standard_normal(&mut rng, &mut buf[..n_max - 1]);
                let offset =
                    crate::dist::draw_truncated_normal(&mut rng, spec.effect_size, 1.0, 0.0)
                        .expect("bound 0 always feasible");
                let mut run_max = f64::NEG_INFINITY;
                let mut next = 0usize;
                for (i, s) in schedule.iter().enumerate() {
                    let ordinary = s - 1;
                    while next < ordinary {
                        run_max = run_max.max(buf[next]);
                        next += 1;
                    }
                    let outlier = run_max + offset;
                    let h = h_star_with_appended(&buf[..ordinary], outlier);
                    let ht = (2.0 / (*s as f64 - 2.0)).sqrt() * h;
                    acc.sum_h[i] += h;
                    acc.sum_h2[i] += h * h;
                    acc.sum_ht[i] += ht;
                    if h > crits_ref[i] {
                        acc.hits[i] += 1;
                    }
                }
                (acc, buf)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(|| Acc::new(k), Acc::merge);

    let t = spec.trials as f64;
    Ok(spec
        .schedule
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mean = acc.sum_h[i] / t;
            let var = (acc.sum_h2[i] / t - mean * mean).max(0.0);
            AccumulationPoint {
                n,
                mean_h: mean,
                sd_h: var.sqrt(),
                power: acc.hits[i] as f64 / t,
                mean_h_tilde: acc.sum_ht[i] / t,
            }
        })
        .collect())
}

/// h* of ordinary ∪ {outlier} with the outlier as candidate, without
/// materialising the joined sample.
fn h_star_with_appended(ordinary: &[f64], outlier: f64) -> f64 {
    let n = ordinary.len() as f64 + 1.0;
    let mean = (ordinary.iter().sum::<f64>() + outlier) / n;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for v in ordinary {
        let y = v - mean;
        s1 += y;
        s2 += y * y;
    }
    let ys = outlier - mean;
    s1 += ys;
    s2 += ys * ys;
    let num = s2 - 2.0 * ys * s1 + n * ys * ys;
    let den = (n - 1.0) * (s2 - ys * ys) - (s1 - ys) * (s1 - ys);
    if den <= 0.0 {
        return f64::INFINITY;
    }
    ((n - 2.0) / 2.0 * num / den).sqrt()
}

fn fill_standard_normal(rng: &mut rand_chacha::ChaCha8Rng, out: &mut [f64]) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Figure-ready CSV: `effect,n,mean_h,sd_h,mean_htilde,power`.
pub fn write_accumulation_csv<W: Write>(
    effect: f64,
    points: &[AccumulationPoint],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "effect,n,mean_h,sd_h,mean_htilde,power")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            effect, p.n, p.mean_h, p.sd_h, p.mean_h_tilde, p.power
        )?;
    }
    Ok(())
}

/// Predictor transform for the regression summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XTransform {
    Log10N,
    SqrtN,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub slope: f64,
    pub intercept: f64,
    pub adjusted_r2: f64,
    pub points: usize,
}

/// Ordinary least squares with adjusted R². Needs at least 5 points in the
/// declared linear region.
pub fn regress(points: &[(f64, f64)]) -> Result<RegressionSummary, PowerError> {
    let n = points.len();
    if n < 5 {
        return Err(PowerError::DegenerateDesign { needed: 5, got: n });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(PowerError::DegenerateDesign { needed: 2, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    let adjusted_r2 = 1.0 - (1.0 - r2) * (nf - 1.0) / (nf - 2.0);
    Ok(RegressionSummary {
        slope,
        intercept,
        adjusted_r2,
        points: n,
    })
}

/// Regression of ⟨h*⟩ on the transformed sample size over the linear-region
/// window (default n ≥ 20).
pub fn regress_mean_h(
    points: &[AccumulationPoint],
    transform: XTransform,
    min_n: usize,
) -> Result<RegressionSummary, PowerError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.n >= min_n)
        .map(|p| {
            let x = match transform {
                XTransform::Log10N => (p.n as f64).log10(),
                XTransform::SqrtN => (p.n as f64).sqrt(),
            };
            (x, p.mean_h)
        })
        .collect();
    regress(&pts)
}

/// Power-law exponent of ⟨h̃*⟩: slope of log₁₀⟨h̃*⟩ against log₁₀ n over
/// the same window.
pub fn h_tilde_exponent(
    points: &[AccumulationPoint],
    min_n: usize,
) -> Result<RegressionSummary, PowerError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.n >= min_n && p.mean_h_tilde > 0.0)
        .map(|p| ((p.n as f64).log10(), p.mean_h_tilde.log10()))
        .collect();
    regress(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::NullStore;

    #[test]
    fn exact_line_regression() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let r = regress(&pts).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert!((r.adjusted_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_design() {
        let pts = vec![(1.0, 2.0), (1.0, 3.0)];
        assert!(matches!(
            regress(&pts),
            Err(PowerError::DegenerateDesign { .. })
        ));
    }

    #[test]
    fn null_calibration_and_monotone_effect() {
        let store = NullStore::in_memory();
        let spec = PowerStudySpec {
            effect_sizes: vec![0.0, 1.7, 3.7],
            confidence_levels: vec![0.95],
            sizes: vec![10],
            trials: 4_000,
            null_trials: 200_000,
            seed: 7,
        };
        let pts = power_curve(&spec, &store).unwrap();
        let by_effect: Vec<f64> = pts.iter().map(|p| p.power).collect();
        // at delta = 0 the rejection rate is alpha within binomial noise
        assert!(
            (by_effect[0] - 0.05).abs() < 0.015,
            "null calibration {by_effect:?}"
        );
        // power grows with the effect size
        assert!(by_effect[1] > by_effect[0]);
        assert!(by_effect[2] > by_effect[1]);
    }

    #[test]
    fn power_csv_schema() {
        let pts = vec![PowerPoint {
            effect: 1.7,
            confidence_level: 0.95,
            n: 10,
            power: 0.25,
        }];
        let mut buf = Vec::new();
        write_power_csv(&pts, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("effect,cl,n,power\n"));
        assert!(s.contains("1.7,0.95,10,0.25"));
    }

    #[test]
    fn accumulation_shapes() {
        let store = NullStore::in_memory();
        let spec = AccumulationSpec {
            effect_size: 3.7,
            schedule: vec![4, 8, 16, 32, 64, 128],
            trials: 200,
            confidence_level: 0.95,
            null_trials: 50_000,
            seed: 3,
        };
        let pts = accumulation_study(&spec, &store).unwrap();
        assert_eq!(pts.len(), 6);
        // h̃* falls with n for large samples
        assert!(pts[5].mean_h_tilde < pts[2].mean_h_tilde);
        // power well above alpha with a moderate persistent outlier
        assert!(pts[5].power > 0.9, "{:?}", pts[5]);
        for p in &pts {
            assert!(p.mean_h.is_finite() && p.sd_h >= 0.0);
        }
    }

    #[test]
    fn accumulation_deterministic() {
        let store = NullStore::in_memory();
        let spec = AccumulationSpec {
            effect_size: 1.7,
            schedule: vec![4, 10, 20],
            trials: 50,
            confidence_level: 0.95,
            null_trials: 20_000,
            seed: 9,
        };
        let a = accumulation_study(&spec, &store).unwrap();
        let b = accumulation_study(&spec, &store).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean_h, y.mean_h);
            assert_eq!(x.power, y.power);
        }
    }

    #[test]
    fn bad_specs_rejected() {
        let store = NullStore::in_memory();
        let spec = AccumulationSpec {
            schedule: vec![10, 10],
            ..AccumulationSpec::default()
        };
        assert!(matches!(
            accumulation_study(&spec, &store),
            Err(PowerError::NonIncreasingSchedule)
        ));
        let pspec = PowerStudySpec {
            confidence_levels: vec![1.5],
            ..PowerStudySpec::default()
        };
        assert!(matches!(
            power_curve(&pspec, &store),
            Err(PowerError::BadConfidenceLevel(_))
        ));
    }
}
