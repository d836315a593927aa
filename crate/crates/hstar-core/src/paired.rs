//! Paired-samples treatment-effect test on h*: per-subject values before
//! and after an intervention, Wilcoxon signed-rank on those values, and the
//! full pipeline from raw paired scores.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dist::{FitKind, Seed};
use crate::iut::{self, IutError, ScanSelection, SelectionRule, TrialReport, TrialSpec};
use crate::montecarlo::{McError, NullStore};
use crate::stat::{h_star_at, Side, StatError};

#[derive(Debug, Error)]
pub enum PairedError {
    #[error("pre and post lists differ in length: {pre} vs {post}")]
    LengthMismatch { pre: usize, post: usize },
    #[error("need at least {needed} non-zero differences, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("exact mode enumerates 2^n sign assignments and needs n <= 25, got {0}")]
    ExactTooLarge(usize),
    #[error("subject {0} is listed among the inliers")]
    SubjectIsInlier(usize),
    #[error("need at least 4 inliers, got {0}")]
    TooFewInliers(usize),
    #[error("no outliers identified in the pretest scan")]
    NoPretestOutliers,
    #[error("log scale requires positive scores; found {0}")]
    NonPositiveScore(f64),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Iut(#[from] IutError),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// h* of (inliers ∪ {subject}) with the subject as the designated
/// candidate, on log scores when the prior is lognormal.
pub fn per_subject_h(
    scores: &[f64],
    subject: usize,
    inlier_ids: &[usize],
    prior: FitKind,
) -> Result<f64, PairedError> {
    if inlier_ids.contains(&subject) {
        return Err(PairedError::SubjectIsInlier(subject));
    }
    if inlier_ids.len() < 4 {
        return Err(PairedError::TooFewInliers(inlier_ids.len()));
    }
    let transform = |v: f64| -> Result<f64, PairedError> {
        match prior {
            FitKind::Normal => Ok(v),
            FitKind::Lognormal => {
                if v <= 0.0 {
                    Err(PairedError::NonPositiveScore(v))
                } else {
                    Ok(v.ln())
                }
            }
        }
    };
    let mut values = Vec::with_capacity(inlier_ids.len() + 1);
    for &i in inlier_ids {
        values.push(transform(scores[i])?);
    }
    values.push(transform(scores[subject])?);
    let (h, _) = h_star_at(&values, values.len() - 1);
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMode {
    /// Normal approximation with continuity correction (and the tie
    /// correction in the variance).
    NormalApproxCc,
    /// Full enumeration of the 2^n sign assignments.
    Exact,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences (midranks for ties).
    pub w: f64,
    pub p_two_sided: f64,
    pub p_one_sided_greater: f64,
    pub n_used: usize,
    pub mode: WilcoxonMode,
}

/// Wilcoxon signed-rank test on paired observations. Differences are
/// pre − post; zero differences are dropped; tied magnitudes take midranks.
pub fn wilcoxon_signed_rank(
    pre: &[f64],
    post: &[f64],
    mode: WilcoxonMode,
) -> Result<WilcoxonResult, PairedError> {
    if pre.len() != post.len() {
        return Err(PairedError::LengthMismatch {
            pre: pre.len(),
            post: post.len(),
        });
    }
    let mut diffs: Vec<f64> = pre
        .iter()
        .zip(post)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(PairedError::AllZeroDifferences);
    }
    if diffs.len() < 5 {
        return Err(PairedError::TooFewPairs {
            needed: 5,
            got: diffs.len(),
        });
    }
    let n = diffs.len();
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // midranks over |d|, remembering tie group sizes for the variance
    let mut ranks = vec![0.0; n];
    let mut tie_sizes: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = midrank;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    let w: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let (p_two, p_greater) = match mode {
        WilcoxonMode::NormalApproxCc => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
            for &t in &tie_sizes {
                let tf = t as f64;
                var -= (tf * tf * tf - tf) / 48.0;
            }
            let sd = var.sqrt();
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            let z = if w == mean {
                0.0
            } else {
                (w - mean - 0.5 * (w - mean).signum()) / sd
            };
            let p_two = 2.0 * std.cdf(-z.abs());
            let z_greater = (w - mean - 0.5) / sd;
            (p_two.min(1.0), std.cdf(-z_greater))
        }
        WilcoxonMode::Exact => {
            if n > 25 {
                return Err(PairedError::ExactTooLarge(n));
            }
            // distribution of W over sign flips by convolution on doubled
            // ranks (midranks step in halves)
            let ranks2: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
            let top: u64 = ranks2.iter().sum();
            let mut counts = vec![0.0f64; top as usize + 1];
            counts[0] = 1.0;
            for &r in &ranks2 {
                for s in (0..=(top - r) as usize).rev() {
                    if counts[s] > 0.0 {
                        counts[s + r as usize] += counts[s];
                    }
                }
            }
            let total: f64 = (n as f64).exp2();
            let w2 = (2.0 * w).round() as usize;
            let above: f64 = counts[w2..].iter().sum();
            let below: f64 = counts[..=w2].iter().sum();
            let p_greater = above / total;
            let p_two = (2.0 * (above.min(below)) / total).min(1.0);
            (p_two, p_greater)
        }
    };
    Ok(WilcoxonResult {
        w,
        p_two_sided: p_two,
        p_one_sided_greater: p_greater,
        n_used: n,
        mode,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedStudy {
    pub ids: Vec<usize>,
    pub pre_scores: Vec<f64>,
    pub post_scores: Vec<f64>,
    pub log_transform: bool,
    pub alpha: f64,
    pub max_candidates: usize,
    pub null_trials: u64,
    pub seed: Seed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectEffect {
    pub id: usize,
    pub h_pre: f64,
    pub h_post: f64,
    /// Set when the posttest value still exceeds the alpha critical value
    /// of the null for the inliers-plus-subject sample size.
    pub post_still_extreme: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedReport {
    pub schema_version: u32,
    pub alpha: f64,
    pub log_transform: bool,
    /// Ids selected by the pretest scan, most extreme first.
    pub outlier_ids: Vec<usize>,
    pub pretest_selection: Option<ScanSelection>,
    pub posttest_outliers_found: bool,
    pub subjects: Vec<SubjectEffect>,
    pub wilcoxon_approx: Option<WilcoxonResult>,
    pub wilcoxon_exact: Option<WilcoxonResult>,
    pub significant: Option<bool>,
    pub warnings: Vec<String>,
}

/// The full paired pipeline: pretest scan selects the outliers, the
/// posttest scan is checked for none, per-subject h* values are computed
/// on both waves against the same inlier set, and the Wilcoxon signed-rank
/// test decides whether the intervention moved the extreme cases.
pub fn paired_pipeline(
    study: &PairedStudy,
    store: &NullStore,
) -> Result<(PairedReport, Vec<Result<TrialReport, IutError>>), PairedError> {
    if study.pre_scores.len() != study.post_scores.len() {
        return Err(PairedError::LengthMismatch {
            pre: study.pre_scores.len(),
            post: study.post_scores.len(),
        });
    }
    let mut warnings = Vec::new();
    let mut base = TrialSpec::new(Side::Max, 1);
    base.alpha = study.alpha;
    base.log_transform = study.log_transform;
    base.null_trials = study.null_trials;
    base.seed = study.seed;

    // pretest: max side (the treatment targets the high extremes)
    let pre_scan = iut::scan_trials(
        &study.pre_scores,
        study.max_candidates,
        &[Side::Max],
        &base,
        SelectionRule::LargestRejecting,
        store,
    );
    let mut all_reports = pre_scan.reports;
    let selection = pre_scan.selections.into_iter().next();
    let Some(selection) = selection else {
        return Err(PairedError::NoPretestOutliers);
    };
    // 1-based scan indices to 0-based positions
    let outlier_pos: Vec<usize> = selection.indices.iter().map(|i| i - 1).collect();
    let outlier_ids: Vec<usize> = outlier_pos.iter().map(|p| study.ids[*p]).collect();

    // posttest: both ends must stay quiet
    let post_scan = iut::scan_trials(
        &study.post_scores,
        study.max_candidates,
        &[Side::Max, Side::Min],
        &base,
        SelectionRule::LargestRejecting,
        store,
    );
    let posttest_outliers_found = !post_scan.selections.is_empty();
    if posttest_outliers_found {
        warnings.push("posttest scan still identifies outliers".to_string());
    }
    all_reports.extend(post_scan.reports);

    let inliers: Vec<usize> = (0..study.pre_scores.len())
        .filter(|p| !outlier_pos.contains(p))
        .collect();
    let kind = if study.log_transform {
        FitKind::Lognormal
    } else {
        FitKind::Normal
    };
    let prior = crate::dist::DistributionSpec::normal(0.0, 1.0).expect("unit normal");
    let size = inliers.len() + 1;
    let crit = store.critical_value_at(&prior, size, study.alpha, study.null_trials, study.seed)?;

    let mut subjects = Vec::with_capacity(outlier_pos.len());
    for (&pos, &id) in outlier_pos.iter().zip(&outlier_ids) {
        let h_pre = per_subject_h(&study.pre_scores, pos, &inliers, kind)?;
        let h_post = per_subject_h(&study.post_scores, pos, &inliers, kind)?;
        subjects.push(SubjectEffect {
            id,
            h_pre,
            h_post,
            post_still_extreme: h_post > crit,
        });
    }

    let h_pre: Vec<f64> = subjects.iter().map(|s| s.h_pre).collect();
    let h_post: Vec<f64> = subjects.iter().map(|s| s.h_post).collect();
    let (wilcoxon_approx, wilcoxon_exact, significant) = if subjects.len() < 5 {
        warnings.push(format!(
            "only {} pretest outlier(s); the paired test needs at least 5 pairs and was skipped",
            subjects.len()
        ));
        (None, None, None)
    } else {
        let approx = wilcoxon_signed_rank(&h_pre, &h_post, WilcoxonMode::NormalApproxCc)?;
        let exact = if subjects.len() <= 25 {
            Some(wilcoxon_signed_rank(&h_pre, &h_post, WilcoxonMode::Exact)?)
        } else {
            None
        };
        let significant = approx.p_two_sided < study.alpha;
        (Some(approx), exact, Some(significant))
    };

    Ok((
        PairedReport {
            schema_version: 1,
            alpha: study.alpha,
            log_transform: study.log_transform,
            outlier_ids,
            pretest_selection: Some(selection),
            posttest_outliers_found,
            subjects,
            wilcoxon_approx,
            wilcoxon_exact,
            significant,
            warnings,
        },
        all_reports,
    ))
}
