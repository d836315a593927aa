//! Bayesian outlier inference on h*: contamination-model likelihoods from
//! simulated laws, marginalisation over the effect size, and per-candidate
//! and combined posteriors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{derive_rng, derive_seed, Seed};
use crate::montecarlo::{McError, DEFAULT_BIN_WIDTH, NORMAL_OVERFLOW_CAP};
use crate::stat::{h_star_of_max, H_STAR_MIN};

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("tau must be positive, got {0}")]
    BadTau(f64),
    #[error("h_obs {0} lies below the support minimum 1/sqrt(2)")]
    OutOfSupport(f64),
    #[error("combined-posterior normaliser underflowed to {0}")]
    DegenerateNormalizer(f64),
    #[error("need at least one candidate")]
    NoCandidates,
    #[error("sample size must be at least 4, got {0}")]
    SampleSizeTooSmall(usize),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Configuration of the contamination model and its quadratures. The
/// outlier probability prior is fixed at Beta(1/2, 1/2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesSpec {
    /// Scale of the half-normal effect-size hyperprior.
    pub tau: f64,
    /// Effect-size grid nodes on (0, k·tau], midpoint rule.
    pub delta_nodes: usize,
    /// Grid truncation multiple k.
    pub tau_multiple: f64,
    /// Nodes of the outlier-probability integral after the sin² substitution.
    pub pi_nodes: usize,
    /// Whether the combined-posterior outcome family includes the all-null
    /// outcome in its normaliser (the displayed sum excludes it).
    pub include_null_outcome: bool,
}

impl Default for BayesSpec {
    fn default() -> Self {
        BayesSpec {
            tau: 5.0,
            delta_nodes: 64,
            tau_multiple: 4.0,
            pi_nodes: 128,
            include_null_outcome: false,
        }
    }
}

impl BayesSpec {
    pub fn delta_grid(&self) -> Vec<f64> {
        let width = self.tau_multiple * self.tau / self.delta_nodes as f64;
        (0..self.delta_nodes)
            .map(|i| (i as f64 + 0.5) * width)
            .collect()
    }
}

/// Smoothed binned law of h* used as a likelihood; bins share the null-
/// distribution layout (width 0.0025 from 1/√2, overflow above the cap).
#[derive(Debug, Clone)]
pub struct BinnedLaw {
    /// Smoothed, normalised bin masses (the likelihood values).
    mass: Vec<f64>,
    /// Raw empirical masses, for quantile queries.
    raw: Vec<f64>,
    bin_origin: f64,
    bin_width: f64,
    cap: f64,
}

impl BinnedLaw {
    /// Bin mass at h (the overflow bin collects everything at or above the
    /// cap). Already Laplace-smoothed and normalised to sum to one.
    pub fn mass_at(&self, h: f64) -> f64 {
        let idx = if h >= self.cap || h.is_infinite() {
            self.mass.len() - 1
        } else {
            ((((h - self.bin_origin) / self.bin_width) as usize).min(self.mass.len() - 2))
                .max(0)
        };
        self.mass[idx]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// h at the empirical quantile q (bin midpoint) of the raw law, for
    /// building sweeps; the smoothing mass is excluded on purpose.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut cum = 0.0;
        for (i, m) in self.raw.iter().enumerate() {
            cum += m;
            if cum >= q {
                return self.bin_origin + (i as f64 + 0.5) * self.bin_width;
            }
        }
        self.cap
    }

    /// Law from a density evaluated at bin midpoints on the standard
    /// layout, normalised to unit mass. Lets the quadrature machinery be
    /// exercised against exact laws, free of sampling noise.
    pub fn from_density(f: impl Fn(f64) -> f64) -> BinnedLaw {
        let origin = H_STAR_MIN;
        let width = DEFAULT_BIN_WIDTH;
        let cap = NORMAL_OVERFLOW_CAP;
        let nbins = ((cap - origin) / width).ceil() as usize + 1;
        let mut mass: Vec<f64> = (0..nbins - 1)
            .map(|i| f(origin + (i as f64 + 0.5) * width).max(0.0) * width)
            .collect();
        mass.push(0.0);
        let total: f64 = mass.iter().sum();
        for m in mass.iter_mut() {
            *m /= total;
        }
        BinnedLaw {
            raw: mass.clone(),
            mass,
            bin_origin: origin,
            bin_width: width,
            cap,
        }
    }
}

/// Likelihood tables for one sample size: the law of h* with no outlier and
/// one law per effect-size grid node (one draw shifted by δ).
#[derive(Debug, Clone)]
pub struct LikelihoodTables {
    pub n: usize,
    pub spec: BayesSpec,
    pub null_law: BinnedLaw,
    pub shifted_laws: Vec<BinnedLaw>,
    pub trials_per_law: u64,
    pub seed: Seed,
}

/// Simulate the binned law of h* for standardized normal ordinary data with
/// one draw mean-shifted by `delta` (zero for the no-outlier law).
pub fn simulate_shifted_law(
    n: usize,
    delta: f64,
    trials: u64,
    seed: Seed,
) -> Result<BinnedLaw, BayesError> {
    if n < 4 {
        return Err(BayesError::SampleSizeTooSmall(n));
    }
    let origin = H_STAR_MIN;
    let width = DEFAULT_BIN_WIDTH;
    let cap = NORMAL_OVERFLOW_CAP;
    let nbins = ((cap - origin) / width).ceil() as usize + 1; // + overflow
    let min_len = (trials / 64).clamp(4096, 1 << 20) as usize;
    let counts = (0..trials as usize)
        .into_par_iter()
        .with_min_len(min_len)
        .fold(
            || (vec![0u64; nbins], vec![0.0f64; n]),
            |(mut counts, mut buf): (Vec<u64>, Vec<f64>), t: usize| {
                let mut rng = derive_rng(seed, t as u64);
                for v in buf.iter_mut() {
                    use rand::Rng;
                    *v = rng.sample(rand_distr::StandardNormal);
                }
                buf[0] += delta;
                let h = h_star_of_max(&buf);
                let idx = if h >= cap || h.is_infinite() {
                    nbins - 1
                } else {
                    (((h - origin) / width) as usize).min(nbins - 2)
                };
                counts[idx] += 1;
                (counts, buf)
            },
        )
        .map(|(c, _)| c)
        .reduce(
            || vec![0u64; nbins],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    // Laplace smoothing: epsilon = 1/(10·trials) per bin, renormalised
    let eps = 1.0 / (10.0 * trials as f64);
    let norm: f64 = 1.0 + eps * nbins as f64;
    let raw: Vec<f64> = counts.iter().map(|c| *c as f64 / trials as f64).collect();
    let mass: Vec<f64> = raw.iter().map(|r| (r + eps) / norm).collect();
    Ok(BinnedLaw {
        mass,
        raw,
        bin_origin: origin,
        bin_width: width,
        cap,
    })
}

/// Build the no-outlier law and one mean-shifted law per grid node.
pub fn likelihood_tables(
    n: usize,
    spec: &BayesSpec,
    trials: u64,
    seed: Seed,
) -> Result<LikelihoodTables, BayesError> {
    if !(spec.tau > 0.0) {
        return Err(BayesError::BadTau(spec.tau));
    }
    let null_law = simulate_shifted_law(n, 0.0, trials, derive_seed(seed, 0))?;
    let grid = spec.delta_grid();
    let mut shifted_laws = Vec::with_capacity(grid.len());
    for (i, &delta) in grid.iter().enumerate() {
        shifted_laws.push(simulate_shifted_law(
            n,
            delta,
            trials,
            derive_seed(seed, 1 + i as u64),
        )?);
    }
    Ok(LikelihoodTables {
        n,
        spec: spec.clone(),
        null_law,
        shifted_laws,
        trials_per_law: trials,
        seed,
    })
}

/// Marginal likelihoods (P(h|L=1), P(h|L=0)): the L=1 side integrates the
/// per-node laws against the half-normal effect-size density by the
/// midpoint rule on (0, k·tau].
pub fn marginal_likelihood(
    h_obs: f64,
    tables: &LikelihoodTables,
) -> Result<(f64, f64), BayesError> {
    if h_obs < H_STAR_MIN {
        return Err(BayesError::OutOfSupport(h_obs));
    }
    let spec = &tables.spec;
    let grid = spec.delta_grid();
    let width = spec.tau_multiple * spec.tau / spec.delta_nodes as f64;
    let mut p1 = 0.0;
    for (law, &delta) in tables.shifted_laws.iter().zip(&grid) {
        // half-normal density 2·φ(δ/τ)/τ
        let z = delta / spec.tau;
        let dens = 2.0 / (spec.tau * (2.0 * std::f64::consts::PI).sqrt())
            * (-0.5 * z * z).exp();
        p1 += law.mass_at(h_obs) * dens * width;
    }
    let p0 = tables.null_law.mass_at(h_obs);
    Ok((p1, p0))
}

/// Posterior outlier probability: the likelihood-ratio integrand averaged
/// over the Beta(1/2,1/2) prior via the π = sin²θ substitution (the
/// endpoint singularities become a flat measure in θ).
pub fn posterior(h_obs: f64, tables: &LikelihoodTables) -> Result<f64, BayesError> {
    let (p1, p0) = marginal_likelihood(h_obs, tables)?;
    Ok(posterior_from_likelihoods(p1, p0, tables.spec.pi_nodes))
}

/// Eq.-level core, exposed for the collapse and refinement checks.
pub fn posterior_from_likelihoods(p1: f64, p0: f64, pi_nodes: usize) -> f64 {
    let m = pi_nodes.max(2);
    let dx = std::f64::consts::FRAC_PI_2 / m as f64;
    let mut acc = 0.0;
    for i in 0..m {
        let theta = (i as f64 + 0.5) * dx;
        let s2 = theta.sin().powi(2);
        let num = p1 * s2;
        let den = num + p0 * (1.0 - s2);
        if den > 0.0 {
            acc += num / den;
        }
    }
    (2.0 / std::f64::consts::PI) * acc * dx
}

/// Per-candidate posteriors plus the combined verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorResult {
    /// (candidate index, h_obs, P(L=1 | h_obs)), most extreme first.
    pub per_candidate: Vec<(usize, f64, f64)>,
    /// P(all candidates are outliers | observations), normalised over the
    /// threshold outcome family.
    pub combined: f64,
    /// The normalisation constant over that family.
    pub normalizer: f64,
}

/// Combined posterior over the threshold outcomes "the top m extrema are
/// outliers", m = 1..n′ (candidates ordered most extreme first). With
/// `include_null_outcome` the all-null outcome joins the family.
pub fn combined_posterior(
    per_candidate: &[(usize, f64, f64)],
    spec: &BayesSpec,
) -> Result<PosteriorResult, BayesError> {
    if per_candidate.is_empty() {
        return Err(BayesError::NoCandidates);
    }
    let probs: Vec<f64> = per_candidate.iter().map(|(_, _, p)| *p).collect();
    let np = probs.len();
    let mut k_norm = 0.0;
    for m in 1..=np {
        let mut term = 1.0;
        for (j, p) in probs.iter().enumerate() {
            term *= if j < m { *p } else { 1.0 - *p };
        }
        k_norm += term;
    }
    if spec.include_null_outcome {
        let mut term = 1.0;
        for p in &probs {
            term *= 1.0 - *p;
        }
        k_norm += term;
    }
    if !(k_norm > f64::MIN_POSITIVE) {
        return Err(BayesError::DegenerateNormalizer(k_norm));
    }
    let all: f64 = probs.iter().product();
    Ok(PosteriorResult {
        per_candidate: per_candidate.to_vec(),
        combined: all / k_norm,
        normalizer: k_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_tables(n: usize, nodes: usize, trials: u64) -> LikelihoodTables {
        let spec = BayesSpec {
            delta_nodes: nodes,
            ..BayesSpec::default()
        };
        likelihood_tables(n, &spec, trials, 77).unwrap()
    }

    #[test]
    fn laws_normalised() {
        let law = simulate_shifted_law(6, 0.0, 20_000, 5).unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
        let shifted = simulate_shifted_law(6, 6.0, 20_000, 6).unwrap();
        assert!((shifted.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_shift_matches_null_law() {
        // KS distance between the δ=0 law and the no-outlier law is small
        let a = simulate_shifted_law(8, 0.0, 50_000, 7).unwrap();
        let b = simulate_shifted_law(8, 0.0, 50_000, 8).unwrap();
        let mut ca = 0.0;
        let mut cb = 0.0;
        let mut d: f64 = 0.0;
        for (x, y) in a.raw.iter().zip(&b.raw) {
            ca += x;
            cb += y;
            d = d.max((ca - cb).abs());
        }
        // two-sample KS 1% critical distance at m = n = 50k
        let crit = 1.63 * (2.0 / 50_000.0f64).sqrt();
        assert!(d < crit, "d = {d}, crit = {crit}");
    }

    #[test]
    fn large_shift_moves_mass_right() {
        let null = simulate_shifted_law(10, 0.0, 50_000, 9).unwrap();
        let shifted = simulate_shifted_law(10, 6.0, 50_000, 10).unwrap();
        let med_shifted = shifted.quantile(0.5);
        let q95_null = null.quantile(0.95);
        assert!(
            med_shifted > q95_null,
            "median {med_shifted} vs null q95 {q95_null}"
        );
    }

    #[test]
    fn equal_likelihood_collapse() {
        // P(h|L=1) = P(h|L=0) exactly: posterior is the prior mean 1/2
        let p = posterior_from_likelihoods(0.37, 0.37, 128);
        assert!((p - 0.5).abs() < 1e-9, "{p}");
    }

    #[test]
    fn posterior_limits() {
        // likelihood ratio → ∞ drives the posterior to 1, and 0 to 0
        assert!(posterior_from_likelihoods(1.0, 0.0, 128) > 0.999);
        assert!(posterior_from_likelihoods(0.0, 1.0, 128) < 1e-12);
    }

    #[test]
    fn posterior_mode_and_tail() {
        let tables = quick_tables(10, 24, 200_000);
        // at the null mode the no-outlier likelihood dominates
        let mode = tables.null_law.quantile(0.5);
        let (p1, p0) = marginal_likelihood(mode, &tables).unwrap();
        assert!(p0 > p1, "p0 {p0} p1 {p1}");
        // far in the tail the ratio is large
        let far = tables.null_law.quantile(0.999) * 1.2;
        let (p1t, p0t) = marginal_likelihood(far, &tables).unwrap();
        assert!(p1t / p0t > 100.0, "ratio {}", p1t / p0t);
        // posterior is monotone along a quantile sweep
        let sweep = [0.5, 0.75, 0.9, 0.95, 0.99, 0.999];
        let mut prev = 0.0;
        for q in sweep {
            let h = tables.null_law.quantile(q);
            let p = posterior(h, &tables).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!(p >= prev - 1e-9, "not monotone at q={q}: {p} < {prev}");
            prev = p;
        }
    }

    #[test]
    fn out_of_support() {
        let tables = quick_tables(6, 8, 20_000);
        assert!(matches!(
            posterior(0.5, &tables),
            Err(BayesError::OutOfSupport(_))
        ));
    }

    #[test]
    fn combined_two_candidates_hand_enumeration() {
        let spec = BayesSpec::default();
        let pc = vec![(1usize, 4.0, 0.9), (2usize, 3.0, 0.7)];
        let r = combined_posterior(&pc, &spec).unwrap();
        // outcomes: top-1 only (0.9·0.3) and both (0.9·0.7)
        let k = 0.9 * (1.0 - 0.7) + 0.9 * 0.7;
        assert!((r.normalizer - k).abs() < 1e-15);
        assert!((r.combined - 0.9 * 0.7 / k).abs() < 1e-15);
        // which algebraically is the second candidate's posterior
        assert!((r.combined - 0.7).abs() < 1e-12);
    }

    #[test]
    fn combined_single_candidate_families() {
        let spec = BayesSpec::default();
        let pc = vec![(1usize, 4.0, 0.83)];
        // displayed sum: the single outcome renormalises to 1
        let r = combined_posterior(&pc, &spec).unwrap();
        assert!((r.combined - 1.0).abs() < 1e-12);
        // with the all-null outcome the family is {L=1, L=0} and the
        // combined value recovers the per-candidate posterior
        let spec_with_null = BayesSpec {
            include_null_outcome: true,
            ..spec
        };
        let r2 = combined_posterior(&pc, &spec_with_null).unwrap();
        assert!((r2.combined - 0.83).abs() < 1e-12);
    }

    #[test]
    fn combined_near_one_limit() {
        let spec = BayesSpec::default();
        for eps in [1e-3, 1e-6, 1e-9] {
            let p = 1.0 - eps;
            let pc = vec![(1usize, 5.0, p), (2usize, 5.0, p), (3usize, 5.0, p)];
            let r = combined_posterior(&pc, &spec).unwrap();
            assert!(r.combined > 1.0 - 4.0 * eps);
        }
    }

    #[test]
    fn degenerate_normalizer() {
        let spec = BayesSpec::default();
        let pc = vec![(1usize, 4.0, 0.0), (2usize, 3.0, 0.0)];
        assert!(matches!(
            combined_posterior(&pc, &spec),
            Err(BayesError::DegenerateNormalizer(_))
        ));
    }

    /// Analytic stand-in tables: exact laws at the bin level, so grid
    /// refinement measures quadrature error alone.
    fn analytic_tables(nodes: usize) -> LikelihoodTables {
        let spec = BayesSpec {
            delta_nodes: nodes,
            ..BayesSpec::default()
        };
        let null_law = BinnedLaw::from_density(|h| (-(h - 2.0) * (h - 2.0) / 0.32).exp());
        let shifted_laws = spec
            .delta_grid()
            .iter()
            .map(|&d| {
                let c = 2.0 + 0.6 * d;
                BinnedLaw::from_density(move |h| (-(h - c) * (h - c) / 0.5).exp())
            })
            .collect();
        LikelihoodTables {
            n: 10,
            spec,
            null_law,
            shifted_laws,
            trials_per_law: 0,
            seed: 0,
        }
    }

    #[test]
    fn quadrature_refinement_stable() {
        let coarse = analytic_tables(64);
        let fine = analytic_tables(128);
        for h in [2.0, 2.5, 3.5, 5.0, 8.0] {
            let (p1a, p0a) = marginal_likelihood(h, &coarse).unwrap();
            let (p1b, p0b) = marginal_likelihood(h, &fine).unwrap();
            assert_eq!(p0a, p0b);
            assert!(
                (p1a - p1b).abs() / p1b < 0.005,
                "h={h}: {p1a} vs {p1b}"
            );
            let pa = posterior_from_likelihoods(p1a, p0a, 128);
            let pb = posterior_from_likelihoods(p1b, p0b, 256);
            assert!((pa - pb).abs() / pb.max(1e-12) < 0.01, "h={h}: {pa} vs {pb}");
        }
    }
}
