//! The I-index of novelty (occurrence frequency over sample size) and the
//! four-quadrant classification against statistical exceptionality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UniqueError {
    #[error("invalid counts: need 1 <= f <= n0, got f={f}, n0={n0}")]
    InvalidCounts { f: u64, n0: u64 },
    #[error("cumulative sample sizes must be strictly increasing past n0")]
    NonIncreasingSamples,
    #[error("i threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
}

/// I = f / n0.
pub fn i_index(f: u64, n0: u64) -> Result<f64, UniqueError> {
    if f < 1 || n0 < 1 || f > n0 {
        return Err(UniqueError::InvalidCounts { f, n0 });
    }
    Ok(f as f64 / n0 as f64)
}

/// Occurrence record: the initial sample plus cumulative checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessIndex {
    /// Occurrences in the initial sample.
    pub f: u64,
    /// Initial sample size.
    pub n0: u64,
    /// (cumulative sample size, cumulative occurrence count) checkpoints,
    /// strictly increasing in size.
    pub cumulative_samples: Vec<(u64, u64)>,
}

impl UniquenessIndex {
    pub fn new(
        f: u64,
        n0: u64,
        cumulative_samples: Vec<(u64, u64)>,
    ) -> Result<Self, UniqueError> {
        if f < 1 || n0 < 1 || f > n0 {
            return Err(UniqueError::InvalidCounts { f, n0 });
        }
        let mut prev = n0;
        for &(n, fc) in &cumulative_samples {
            if n <= prev {
                return Err(UniqueError::NonIncreasingSamples);
            }
            if fc < 1 || fc > n {
                return Err(UniqueError::InvalidCounts { f: fc, n0: n });
            }
            prev = n;
        }
        Ok(UniquenessIndex {
            f,
            n0,
            cumulative_samples,
        })
    }
}

/// Verdict of the novelty inequality at one checkpoint: the reference rate
/// 1/n0 against the cumulative rate f_cum / Σn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyVerdict {
    Holds,
    Equal,
    Violated,
}

/// Compare 1/n0 with the cumulative occurrence rate at every checkpoint.
/// Exact integer cross-multiplication, no rounding.
pub fn novelty_holds(idx: &UniquenessIndex) -> Vec<NoveltyVerdict> {
    idx.cumulative_samples
        .iter()
        .map(|&(n, fc)| {
            // 1/n0 vs fc/n  <=>  n vs fc·n0
            let lhs = n as u128;
            let rhs = fc as u128 * idx.n0 as u128;
            match lhs.cmp(&rhs) {
                std::cmp::Ordering::Greater => NoveltyVerdict::Holds,
                std::cmp::Ordering::Equal => NoveltyVerdict::Equal,
                std::cmp::Ordering::Less => NoveltyVerdict::Violated,
            }
        })
        .collect()
}

/// The four cells of the exceptionality-by-uniqueness taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadrantLabel {
    /// High h*, high I: outlying and frequently observed.
    RecurringExceptional,
    /// High h*, low I: outlying and rarely observed.
    UniqueGenius,
    /// Low h*, high I: unexceptional and common.
    CommonAboveAverage,
    /// Low h*, low I: unexceptional and rare.
    RareOrdinary,
}

impl QuadrantLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuadrantLabel::RecurringExceptional => "recurring-exceptional",
            QuadrantLabel::UniqueGenius => "unique-genius",
            QuadrantLabel::CommonAboveAverage => "common-above-average",
            QuadrantLabel::RareOrdinary => "rare-ordinary",
        }
    }
}

/// Map (h*-significant, I against an explicit threshold) to its quadrant.
pub fn classify_quadrant(
    h_significant: bool,
    i_value: f64,
    i_threshold: f64,
) -> Result<QuadrantLabel, UniqueError> {
    if !(i_threshold > 0.0 && i_threshold <= 1.0) {
        return Err(UniqueError::BadThreshold(i_threshold));
    }
    let high_i = i_value >= i_threshold;
    Ok(match (h_significant, high_i) {
        (true, true) => QuadrantLabel::RecurringExceptional,
        (true, false) => QuadrantLabel::UniqueGenius,
        (false, true) => QuadrantLabel::CommonAboveAverage,
        (false, false) => QuadrantLabel::RareOrdinary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i_index_values() {
        assert_eq!(i_index(1, 10).unwrap(), 0.1);
        assert_eq!(i_index(1, 1).unwrap(), 1.0);
        assert_eq!(i_index(7, 7).unwrap(), 1.0);
        assert!(matches!(
            i_index(0, 10),
            Err(UniqueError::InvalidCounts { .. })
        ));
        assert!(matches!(
            i_index(11, 10),
            Err(UniqueError::InvalidCounts { .. })
        ));
    }

    #[test]
    fn i_index_monotone_in_n0() {
        let mut prev = f64::INFINITY;
        for n0 in [1u64, 10, 100, 100_000] {
            let v = i_index(1, n0).unwrap();
            assert!(v <= prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn novelty_sequences() {
        // 1/10 > 1/100 > 1/1000: novelty holds throughout
        let idx = UniquenessIndex::new(1, 10, vec![(100, 1), (1000, 1)]).unwrap();
        assert_eq!(
            novelty_holds(&idx),
            vec![NoveltyVerdict::Holds, NoveltyVerdict::Holds]
        );
        // 1/10 = 10/100 = 100/1000: proportional growth
        let idx = UniquenessIndex::new(1, 10, vec![(100, 10), (1000, 100)]).unwrap();
        assert_eq!(
            novelty_holds(&idx),
            vec![NoveltyVerdict::Equal, NoveltyVerdict::Equal]
        );
        // 1/10 < 20/100 < 500/1000: the initial sample was too small
        let idx = UniquenessIndex::new(1, 10, vec![(100, 20), (1000, 500)]).unwrap();
        assert_eq!(
            novelty_holds(&idx),
            vec![NoveltyVerdict::Violated, NoveltyVerdict::Violated]
        );
    }

    #[test]
    fn invalid_sequences() {
        assert!(matches!(
            UniquenessIndex::new(1, 10, vec![(10, 1)]),
            Err(UniqueError::NonIncreasingSamples)
        ));
        assert!(matches!(
            UniquenessIndex::new(1, 10, vec![(100, 1), (50, 1)]),
            Err(UniqueError::NonIncreasingSamples)
        ));
    }

    #[test]
    fn quadrants() {
        assert_eq!(
            classify_quadrant(true, 0.9, 0.5).unwrap(),
            QuadrantLabel::RecurringExceptional
        );
        assert_eq!(
            classify_quadrant(true, 0.01, 0.5).unwrap(),
            QuadrantLabel::UniqueGenius
        );
        assert_eq!(
            classify_quadrant(false, 0.9, 0.5).unwrap(),
            QuadrantLabel::CommonAboveAverage
        );
        assert_eq!(
            classify_quadrant(false, 0.01, 0.5).unwrap(),
            QuadrantLabel::RareOrdinary
        );
        assert!(matches!(
            classify_quadrant(true, 0.5, 0.0),
            Err(UniqueError::BadThreshold(_))
        ));
    }
}
