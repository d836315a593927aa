//! The outlier-identification procedure: extrema selection, ordinary-data
//! fit, per-candidate h* tests against the simulated null, and the
//! intersection-union decision over a scan of candidate counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{self, DistError, FitDiagnostics, FitKind, GofTest, Seed};
use crate::montecarlo::{McError, NullStore};
use crate::stat::{h_star_at, Side, StatError};

#[derive(Debug, Error)]
pub enum IutError {
    #[error("too few ordinary points: {left} remain after removing {removed} candidates")]
    TooFewOrdinary { left: usize, removed: usize },
    #[error("prior fit rejected (GoF p = {p:.4} < floor {floor})")]
    FitRejected { p: f64, floor: f64 },
    #[error("log transform requires positive data; found {0}")]
    NonPositiveForLog(f64),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("need at least one candidate")]
    NoCandidates,
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Configuration of a single trial with n′ candidate extrema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSpec {
    pub side: Side,
    pub n_prime: usize,
    pub fit_kind: FitKind,
    pub gof_test: GofTest,
    pub alpha: f64,
    pub log_transform: bool,
    /// GoF p-values below this raise the fit warning.
    pub fit_floor: f64,
    /// When set, a failed fit aborts the trial instead of warning.
    pub strict_fit: bool,
    /// Trials per simulated null when no cached law is available.
    pub null_trials: u64,
    pub seed: Seed,
}

impl TrialSpec {
    pub fn new(side: Side, n_prime: usize) -> Self {
        TrialSpec {
            side,
            n_prime,
            fit_kind: FitKind::Normal,
            gof_test: GofTest::default(),
            alpha: 0.05,
            log_transform: false,
            fit_floor: 0.01,
            strict_fit: false,
            null_trials: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    DoNotReject,
}

/// One IUT trial: candidates, fit diagnostics, per-candidate p-values,
/// joint decision. Indices are 1-based positions in the input data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub schema_version: u32,
    pub side: Side,
    pub requested_n_prime: usize,
    /// Ties at the cut pull every tied value into the candidate set, so
    /// this can exceed the requested count.
    pub effective_n_prime: usize,
    pub alpha: f64,
    pub log_transform: bool,
    /// (index, value on the analysis scale), most extreme first.
    pub candidates: Vec<(usize, f64)>,
    pub fit: FitDiagnostics,
    /// (index, h*, p-value), most extreme first.
    pub per_candidate: Vec<(usize, f64, f64)>,
    pub decision: Decision,
    pub warnings: Vec<String>,
}

/// Split into ordinary and candidate index sets. `work` is on the analysis
/// scale (negated for the min side), so candidates are the largest values;
/// everything tied with the cut joins the candidate set.
fn split_extrema(work: &[f64], n_prime: usize) -> (Vec<usize>, Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..work.len()).collect();
    order.sort_by(|a, b| work[*a].total_cmp(&work[*b]));
    let cut = work[order[work.len() - n_prime]];
    let cand: Vec<usize> = order.iter().copied().filter(|i| work[*i] >= cut).collect();
    let ordinary: Vec<usize> = order.iter().copied().filter(|i| work[*i] < cut).collect();
    let effective = cand.len();
    (ordinary, cand, effective)
}

/// Run one trial: remove the n′ extrema, fit the prior to the ordinary
/// data, test each candidate against the null for size n − n′ + 1, and
/// decide by intersection-union (reject only if every candidate rejects).
pub fn run_trial(
    data: &[f64],
    spec: &TrialSpec,
    store: &NullStore,
) -> Result<TrialReport, IutError> {
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(IutError::BadAlpha(spec.alpha));
    }
    if spec.n_prime == 0 {
        return Err(IutError::NoCandidates);
    }
    let mut warnings = Vec::new();

    // analysis scale: optional log, then negation for the min side
    let logged: Vec<f64> = if spec.log_transform {
        if let Some(bad) = data.iter().find(|v| **v <= 0.0) {
            return Err(IutError::NonPositiveForLog(*bad));
        }
        data.iter().map(|v| v.ln()).collect()
    } else {
        data.to_vec()
    };
    let work: Vec<f64> = match spec.side {
        Side::Max => logged.clone(),
        Side::Min => logged.iter().map(|v| -v).collect(),
    };

    let (ordinary_idx, cand_idx, effective) = split_extrema(&work, spec.n_prime);
    if effective > spec.n_prime {
        warnings.push(format!(
            "ties at the cut: candidate count adjusted from {} to {}",
            spec.n_prime, effective
        ));
    }
    if ordinary_idx.len() < 4 {
        return Err(IutError::TooFewOrdinary {
            left: ordinary_idx.len(),
            removed: effective,
        });
    }

    let ordinary: Vec<f64> = ordinary_idx.iter().map(|i| work[*i]).collect();
    // the fit runs on the analysis scale; a raw lognormal prior is only
    // meaningful untransformed and on the max side (its left tail has no
    // tabulated law)
    let (fit, null_prior) = match (spec.fit_kind, spec.log_transform) {
        (FitKind::Normal, _) => (
            dist::fit(&ordinary, FitKind::Normal, spec.gof_test)?,
            dist::DistributionSpec::normal(0.0, 1.0).expect("unit normal"),
        ),
        (FitKind::Lognormal, true) => {
            return Err(IutError::UnsupportedConfig(
                "log-transformed data with a lognormal prior would take logs twice; \
                 use the normal prior"
                    .to_string(),
            ))
        }
        (FitKind::Lognormal, false) => {
            if spec.side == Side::Min {
                return Err(IutError::UnsupportedConfig(
                    "min-side test with a raw lognormal prior has no tabulated null; \
                     use the log transform with a normal prior"
                        .to_string(),
                ));
            }
            let fit = dist::fit(&ordinary, FitKind::Lognormal, spec.gof_test)?;
            let sigma_log = match fit.fitted {
                dist::DistributionSpec::Lognormal { sigma_log, .. } => sigma_log,
                _ => unreachable!("lognormal fit returns a lognormal spec"),
            };
            (
                fit,
                dist::DistributionSpec::lognormal(0.0, sigma_log).expect("fitted sigma"),
            )
        }
    };
    if fit.gof_p_value < spec.fit_floor {
        if spec.strict_fit {
            return Err(IutError::FitRejected {
                p: fit.gof_p_value,
                floor: spec.fit_floor,
            });
        }
        warnings.push(format!(
            "prior fit rejected (GoF p = {:.4} < {}); re-examination of the \
             prior distribution or dataset may be advised",
            fit.gof_p_value, spec.fit_floor
        ));
    }

    // candidates most extreme first
    let mut cand_sorted = cand_idx.clone();
    cand_sorted.sort_by(|a, b| work[*b].total_cmp(&work[*a]));

    let size = ordinary.len() + 1;
    let mut per_candidate = Vec::with_capacity(cand_sorted.len());
    let mut buf = Vec::with_capacity(size);
    for &c in &cand_sorted {
        buf.clear();
        buf.extend_from_slice(&ordinary);
        buf.push(work[c]);
        let (h, _) = h_star_at(&buf, size - 1);
        let p = store.p_value_at(&null_prior, size, h, spec.null_trials, spec.seed)?;
        per_candidate.push((c + 1, h, p));
    }

    let decision = if per_candidate.iter().all(|(_, _, p)| *p < spec.alpha) {
        Decision::Reject
    } else {
        Decision::DoNotReject
    };

    let candidates = cand_sorted.iter().map(|&c| (c + 1, logged[c])).collect();

    Ok(TrialReport {
        schema_version: 1,
        side: spec.side,
        requested_n_prime: spec.n_prime,
        effective_n_prime: effective,
        alpha: spec.alpha,
        log_transform: spec.log_transform,
        candidates,
        fit,
        per_candidate,
        decision,
        warnings,
    })
}

/// Which trial of a scan to prefer when several reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// The largest rejecting candidate count.
    #[default]
    LargestRejecting,
    /// The smallest rejecting candidate count (sensitivity analysis).
    SmallestRejecting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanSelection {
    pub side: Side,
    pub n_prime: usize,
    /// 1-based indices of the selected outliers, most extreme first.
    pub indices: Vec<usize>,
}

#[derive(Debug)]
pub struct ScanOutcome {
    /// One entry per (side, requested n′), in scan order.
    pub reports: Vec<Result<TrialReport, IutError>>,
    /// Per requested side, the selected outlier set if any trial rejects.
    pub selections: Vec<ScanSelection>,
}

/// Run trials for n′ = 1..=max_candidates on each requested side and apply
/// the selection rule per side. Per-trial errors are recorded without
/// aborting the scan.
pub fn scan_trials(
    data: &[f64],
    max_candidates: usize,
    sides: &[Side],
    base: &TrialSpec,
    rule: SelectionRule,
    store: &NullStore,
) -> ScanOutcome {
    let mut reports = Vec::new();
    let mut selections = Vec::new();
    for &side in sides {
        let mut best: Option<(usize, Vec<usize>)> = None;
        for n_prime in 1..=max_candidates {
            let spec = TrialSpec {
                side,
                n_prime,
                ..base.clone()
            };
            let res = run_trial(data, &spec, store);
            if let Ok(report) = &res {
                if report.decision == Decision::Reject {
                    let ids: Vec<usize> = report.candidates.iter().map(|(i, _)| *i).collect();
                    let take = match rule {
                        SelectionRule::LargestRejecting => true,
                        SelectionRule::SmallestRejecting => best.is_none(),
                    };
                    if take {
                        best = Some((report.effective_n_prime, ids));
                    }
                }
            }
            reports.push(res);
        }
        if let Some((n_prime, indices)) = best {
            selections.push(ScanSelection {
                side,
                n_prime,
                indices,
            });
        }
    }
    ScanOutcome {
        reports,
        selections,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

/// Render a trial report. The text form is line-stable; the JSON form is
/// the serde view of [`TrialReport`] with its schema_version field.
pub fn render_report(report: &TrialReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Text => {
            let mut s = String::new();
            let side = match report.side {
                Side::Max => "max",
                Side::Min => "min",
            };
            s.push_str(&format!(
                "h*-test trial: side={side} n'={} (effective {}) alpha={}\n",
                report.requested_n_prime, report.effective_n_prime, report.alpha
            ));
            let fitted = match report.fit.fitted {
                dist::DistributionSpec::Normal { mu, sigma } => {
                    format!("normal(mu={mu:.4}, sigma={sigma:.4})")
                }
                dist::DistributionSpec::Lognormal { mu_log, sigma_log } => {
                    format!("lognormal(mu_log={mu_log:.4}, sigma_log={sigma_log:.4})")
                }
                dist::DistributionSpec::TruncatedNormal { mu, sigma, lower } => {
                    format!("truncated_normal(mu={mu:.4}, sigma={sigma:.4}, lower={lower:.4})")
                }
            };
            s.push_str(&format!(
                "fitted prior: {fitted} on the analysis scale; GoF p={:.4}\n",
                report.fit.gof_p_value
            ));
            s.push_str("candidates:\n");
            for ((idx, val), (_, h, p)) in report.candidates.iter().zip(&report.per_candidate) {
                s.push_str(&format!("  #{idx}: value={val:.4} h*={h:.4} p={p:.4}\n"));
            }
            let verdict = match report.decision {
                Decision::Reject => "Reject",
                Decision::DoNotReject => "Do not reject",
            };
            s.push_str(&format!("decision: {verdict}\n"));
            for w in &report.warnings {
                s.push_str(&format!("warning: {w}\n"));
            }
            s.into_bytes()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::NullStore;

    fn small_spec(side: Side, n_prime: usize) -> TrialSpec {
        let mut s = TrialSpec::new(side, n_prime);
        s.null_trials = 50_000;
        s.seed = 42;
        s
    }

    /// Ordinary data plus one glaring outlier rejects at n' = 1.
    #[test]
    fn single_far_outlier_rejects() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            7,
        )
        .unwrap();
        data.push(9.0);
        let store = NullStore::in_memory();
        let report = run_trial(&data, &small_spec(Side::Max, 1), &store).unwrap();
        assert_eq!(report.decision, Decision::Reject);
        assert_eq!(report.candidates[0].0, 31); // 1-based position
        assert!(report.per_candidate[0].2 < 0.001);
    }

    /// Two clustered far points: n'=1 fails (the near twin pulls h* down),
    /// n'=2 rejects them collectively.
    #[test]
    fn clustered_pair_needs_joint_trial() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            11,
        )
        .unwrap();
        data.push(3.8);
        data.push(3.9);
        let store = NullStore::in_memory();
        let r1 = run_trial(&data, &small_spec(Side::Max, 1), &store).unwrap();
        assert_eq!(r1.decision, Decision::DoNotReject, "{:?}", r1.per_candidate);
        let r2 = run_trial(&data, &small_spec(Side::Max, 2), &store).unwrap();
        assert_eq!(r2.decision, Decision::Reject, "{:?}", r2.per_candidate);
    }

    #[test]
    fn min_side_mirrors_negated_max() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            13,
        )
        .unwrap();
        data.push(-8.5);
        let store = NullStore::in_memory();
        let report = run_trial(&data, &small_spec(Side::Min, 1), &store).unwrap();
        assert_eq!(report.decision, Decision::Reject);
        assert_eq!(report.candidates[0].0, 31);
        // candidate value is reported on the analysis (un-negated) scale
        assert_eq!(report.candidates[0].1, -8.5);
    }

    #[test]
    fn ties_at_cut_adjust_upward() {
        let mut data = vec![0.1, -0.2, 0.3, -0.4, 0.5, 0.0, 0.2, -0.1, 0.15, -0.3];
        data.push(6.0);
        data.push(6.0);
        let store = NullStore::in_memory();
        let report = run_trial(&data, &small_spec(Side::Max, 1), &store).unwrap();
        assert_eq!(report.requested_n_prime, 1);
        assert_eq!(report.effective_n_prime, 2);
        assert!(report.warnings.iter().any(|w| w.contains("ties")));
        assert_eq!(report.per_candidate.len(), 2);
    }

    #[test]
    fn too_few_ordinary() {
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let store = NullStore::in_memory();
        assert!(matches!(
            run_trial(&data, &small_spec(Side::Max, 3), &store),
            Err(IutError::TooFewOrdinary { .. })
        ));
    }

    #[test]
    fn strict_fit_aborts_warn_mode_decides() {
        // lognormal data fitted as normal: the fit is decisively rejected
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::lognormal(0.0, 1.0).unwrap(),
            80,
            17,
        )
        .unwrap();
        data.push(600.0);
        let mut spec = small_spec(Side::Max, 1);
        let report = run_trial(&data, &spec, &NullStore::in_memory()).unwrap();
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("prior fit rejected")));
        spec.strict_fit = true;
        assert!(matches!(
            run_trial(&data, &spec, &NullStore::in_memory()),
            Err(IutError::FitRejected { .. })
        ));
        // the log transform fixes the fit
        spec.strict_fit = false;
        spec.log_transform = true;
        let report = run_trial(&data, &spec, &NullStore::in_memory()).unwrap();
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    }

    #[test]
    fn raw_lognormal_prior_route() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::lognormal(0.0, 1.0).unwrap(),
            60,
            41,
        )
        .unwrap();
        data.push(2000.0);
        let mut spec = small_spec(Side::Max, 1);
        spec.fit_kind = FitKind::Lognormal;
        let report = run_trial(&data, &spec, &NullStore::in_memory()).unwrap();
        assert_eq!(report.decision, Decision::Reject);
        assert!(matches!(
            report.fit.fitted,
            crate::dist::DistributionSpec::Lognormal { .. }
        ));
        // min side with a raw lognormal prior is rejected up front
        spec.side = Side::Min;
        assert!(matches!(
            run_trial(&data, &spec, &NullStore::in_memory()),
            Err(IutError::UnsupportedConfig(_))
        ));
    }

    #[test]
    fn log_transform_requires_positive() {
        let data = vec![1.0, 2.0, -3.0, 4.0, 5.0, 6.0];
        let mut spec = small_spec(Side::Max, 1);
        spec.log_transform = true;
        assert!(matches!(
            run_trial(&data, &spec, &NullStore::in_memory()),
            Err(IutError::NonPositiveForLog(_))
        ));
    }

    #[test]
    fn iut_logic_on_report() {
        // decision must equal "max per-candidate p < alpha"
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            25,
            19,
        )
        .unwrap();
        data.push(8.0);
        data.push(1.9);
        let store = NullStore::in_memory();
        let report = run_trial(&data, &small_spec(Side::Max, 2), &store).unwrap();
        let worst = report
            .per_candidate
            .iter()
            .map(|(_, _, p)| *p)
            .fold(0.0, f64::max);
        assert_eq!(report.decision == Decision::Reject, worst < report.alpha);
    }

    #[test]
    fn scan_selects_largest_rejecting() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            23,
        )
        .unwrap();
        data.push(3.8);
        data.push(3.9);
        let store = NullStore::in_memory();
        let base = small_spec(Side::Max, 1);
        let outcome = scan_trials(
            &data,
            3,
            &[Side::Max],
            &base,
            SelectionRule::default(),
            &store,
        );
        assert_eq!(outcome.reports.len(), 3);
        let sel = &outcome.selections[0];
        assert_eq!(sel.n_prime, 2, "{sel:?}");
        assert_eq!(sel.indices.len(), 2);

        let smallest = scan_trials(
            &data,
            3,
            &[Side::Max],
            &base,
            SelectionRule::SmallestRejecting,
            &store,
        );
        assert_eq!(smallest.selections[0].n_prime, 2);
    }

    #[test]
    fn scan_on_pure_noise_selects_nothing() {
        let data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            60,
            29,
        )
        .unwrap();
        let store = NullStore::in_memory();
        let base = small_spec(Side::Max, 1);
        let outcome = scan_trials(
            &data,
            2,
            &[Side::Max, Side::Min],
            &base,
            SelectionRule::default(),
            &store,
        );
        assert_eq!(outcome.reports.len(), 4);
        // per-trial errors (none expected here) must not abort the scan
        assert!(outcome.reports.iter().all(|r| r.is_ok()));
    }

    #[test]
    fn render_text_and_json() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            31,
        )
        .unwrap();
        data.push(9.0);
        let store = NullStore::in_memory();
        let report = run_trial(&data, &small_spec(Side::Max, 1), &store).unwrap();
        let text = String::from_utf8(render_report(&report, ReportFormat::Text)).unwrap();
        assert!(text.contains("Reject"));
        assert!(text.contains("p=0.")); // p at 4 decimals
        let json = render_report(&report, ReportFormat::Json);
        let back: TrialReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back.schema_version, 1);
        assert_eq!(back.decision, report.decision);
        assert_eq!(back.per_candidate.len(), report.per_candidate.len());
    }

    #[test]
    fn scan_is_deterministic() {
        let mut data: Vec<f64> = crate::dist::sample(
            &crate::dist::DistributionSpec::normal(0.0, 1.0).unwrap(),
            30,
            37,
        )
        .unwrap();
        data.push(6.0);
        let store = NullStore::in_memory();
        let base = small_spec(Side::Max, 1);
        let a = scan_trials(
            &data,
            2,
            &[Side::Max],
            &base,
            SelectionRule::default(),
            &store,
        );
        let b = scan_trials(
            &data,
            2,
            &[Side::Max],
            &base,
            SelectionRule::default(),
            &store,
        );
        let ja: Vec<_> = a
            .reports
            .iter()
            .map(|r| render_report(r.as_ref().unwrap(), ReportFormat::Json))
            .collect();
        let jb: Vec<_> = b
            .reports
            .iter()
            .map(|r| render_report(r.as_ref().unwrap(), ReportFormat::Json))
            .collect();
        assert_eq!(ja, jb);
    }
}
