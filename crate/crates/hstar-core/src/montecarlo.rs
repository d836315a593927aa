//! Simulated null distributions of h* and critical-value tables: building,
//! querying, caching, and CSV persistence.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

use crate::dist::{derive_rng, DistError, DistributionSpec, Seed};
use crate::stat::{h_star_of_max, H_STAR_MIN};

pub const DEFAULT_BIN_WIDTH: f64 = 0.0025;
/// Overflow caps: values at or above go to the exact spill list.
pub const NORMAL_OVERFLOW_CAP: f64 = 200.0;
pub const LOGNORMAL_OVERFLOW_CAP: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum McError {
    #[error("sample size must be at least 4, got {0}")]
    SampleSizeTooSmall(usize),
    #[error("need at least 10^4 trials, got {0}")]
    TooFewTrials(u64),
    #[error("not enough tail mass: alpha {alpha} needs at least {needed} trials, have {total}")]
    InsufficientTailMass { alpha: f64, needed: u64, total: u64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("malformed table file: {0}")]
    MalformedTableFile(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binned empirical law of h* under a prior for a given sample size.
///
/// Bins of `bin_width` start at `bin_origin` = 1/√2 (the lower edge of the
/// support). Values at or above the overflow cap are counted in the
/// overflow bin and kept exactly in a sorted spill list so deep-tail
/// quantiles stay available.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    pub prior: DistributionSpec,
    pub n: usize,
    pub nu: usize,
    pub bin_width: f64,
    pub bin_origin: f64,
    pub cap: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub spill: Vec<f64>,
    pub total: u64,
    pub seed: Seed,
    /// Trial count above `h` for each bin boundary, built once.
    above: Vec<u64>,
}

fn default_cap(prior: &DistributionSpec) -> f64 {
    match prior {
        DistributionSpec::Lognormal { .. } => LOGNORMAL_OVERFLOW_CAP,
        _ => NORMAL_OVERFLOW_CAP,
    }
}

struct BinAccum {
    counts: Vec<u64>,
    overflow: u64,
    spill: Vec<f64>,
}

impl BinAccum {
    fn new(nbins: usize) -> Self {
        BinAccum {
            counts: vec![0; nbins],
            overflow: 0,
            spill: Vec::new(),
        }
    }

    #[inline]
    fn record(&mut self, h: f64, origin: f64, width: f64, cap: f64) {
        if h >= cap || !h.is_finite() {
            self.overflow += 1;
            self.spill.push(h);
        } else {
            let idx = ((h - origin) / width) as usize;
            let idx = idx.min(self.counts.len() - 1);
            self.counts[idx] += 1;
        }
    }

    fn merge(mut self, other: BinAccum) -> BinAccum {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.spill.extend(other.spill);
        self
    }
}

/// Simulate the null law of h* for `n` i.i.d. draws from `prior`, with the
/// sample maximum as candidate. Trial `t` uses stream `t` of `seed`, so the
/// merged counts are identical for any partition of the trial range and any
/// thread count.
pub fn simulate_null(
    prior: &DistributionSpec,
    n: usize,
    trials: u64,
    seed: Seed,
) -> Result<NullDistribution, McError> {
    if n < 4 {
        return Err(McError::SampleSizeTooSmall(n));
    }
    if trials < 10_000 {
        return Err(McError::TooFewTrials(trials));
    }
    let prior = prior.standardized();
    let cap = default_cap(&prior);
    let origin = H_STAR_MIN;
    let width = DEFAULT_BIN_WIDTH;
    let nbins = ((cap - origin) / width).ceil() as usize;

    let min_len = (trials / 64).clamp(4096, 1 << 20) as usize;
    let acc = (0..trials as usize)
        .into_par_iter()
        .with_min_len(min_len)
        .fold(
            || (BinAccum::new(nbins), vec![0.0f64; n]),
            |(mut acc, mut buf): (BinAccum, Vec<f64>), t: usize| {
                let mut rng = derive_rng(seed, t as u64);
                draw_standardized(&prior, &mut rng, &mut buf);
                let h = h_star_of_max(&buf);
                acc.record(h, origin, width, cap);
                (acc, buf)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(|| BinAccum::new(nbins), BinAccum::merge);

    let mut spill = acc.spill;
    spill.sort_by(f64::total_cmp);

    let mut null = NullDistribution {
        prior,
        n,
        nu: n - 2,
        bin_width: width,
        bin_origin: origin,
        cap,
        counts: acc.counts,
        overflow: acc.overflow,
        spill,
        total: trials,
        seed,
        above: Vec::new(),
    };
    null.rebuild_tail_sums();
    Ok(null)
}

/// Standardized-form draws; infallible for the families used in nulls.
fn draw_standardized(prior: &DistributionSpec, rng: &mut rand_chacha::ChaCha8Rng, out: &mut [f64]) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    match *prior {
        DistributionSpec::Normal { .. } => {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        DistributionSpec::Lognormal { sigma_log, .. } => {
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = (sigma_log * z).exp();
            }
        }
        DistributionSpec::TruncatedNormal { lower, .. } => {
            for v in out.iter_mut() {
                *v = crate::dist::draw_truncated_normal(rng, 0.0, 1.0, lower)
                    .expect("validated bound");
            }
        }
    }
}

impl NullDistribution {
    fn rebuild_tail_sums(&mut self) {
        let mut above = vec![0u64; self.counts.len() + 1];
        let mut run = self.overflow;
        above[self.counts.len()] = run;
        for i in (0..self.counts.len()).rev() {
            run += self.counts[i];
            above[i] = run;
        }
        self.above = above;
    }

    /// Checks Σcounts + overflow = total and a nonincreasing tail.
    pub fn validate(&self) -> Result<(), McError> {
        let sum: u64 = self.counts.iter().sum::<u64>() + self.overflow;
        if sum != self.total {
            return Err(McError::MalformedTableFile(format!(
                "counts sum to {sum}, total says {}",
                self.total
            )));
        }
        if self.spill.len() as u64 != self.overflow {
            return Err(McError::MalformedTableFile(
                "spill length disagrees with overflow count".to_string(),
            ));
        }
        Ok(())
    }

    #[inline]
    fn bin_of(&self, h: f64) -> usize {
        (((h - self.bin_origin) / self.bin_width) as usize).min(self.counts.len() - 1)
    }

    /// Smallest bin right-edge `h` with empirical P(h* > h) ≤ α, right-
    /// continuous and conservative. Deep-tail queries fall through to the
    /// exact spill values.
    pub fn critical_value(&self, alpha: f64) -> Result<f64, McError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(McError::BadAlpha(alpha));
        }
        let needed = (100.0 / alpha).ceil() as u64;
        if self.total < needed {
            return Err(McError::InsufficientTailMass {
                alpha,
                needed,
                total: self.total,
            });
        }
        let limit = alpha * self.total as f64;
        if (self.overflow as f64) > limit {
            // the cut lies inside the overflow region: walk the exact values
            let spill_rank = self.spill.len() - {
                // largest k with k ≤ limit ⇒ keep k values strictly above
                limit.floor() as usize
            };
            let v = self.spill[spill_rank.saturating_sub(1).min(self.spill.len() - 1)];
            return Ok(v);
        }
        // first boundary index whose tail count fits under the limit
        let mut lo = 0usize;
        let mut hi = self.counts.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if (self.above[mid] as f64) <= limit {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(self.bin_origin + lo as f64 * self.bin_width)
    }

    /// Empirical P(h* ≥ h_obs), conservative: an observation inside a bin
    /// counts the whole bin. Clamped to [1/total, 1] for finite h_obs;
    /// +∞ maps to exactly 0.
    pub fn p_value(&self, h_obs: f64) -> f64 {
        if h_obs.is_infinite() && h_obs > 0.0 {
            return 0.0;
        }
        if h_obs <= self.bin_origin {
            return 1.0;
        }
        let count = if h_obs >= self.cap {
            // exact tail: spill values ≥ h_obs
            let pos = self.spill.partition_point(|v| *v < h_obs);
            (self.spill.len() - pos) as u64
        } else {
            self.above[self.bin_of(h_obs)]
        };
        let p = count as f64 / self.total as f64;
        p.clamp(1.0 / self.total as f64, 1.0)
    }

    /// Merge two simulations of the same configuration (associative,
    /// order-independent count sum).
    pub fn merge(mut self, other: &NullDistribution) -> Result<NullDistribution, McError> {
        if self.n != other.n
            || self.prior != other.prior
            || self.bin_width != other.bin_width
            || self.counts.len() != other.counts.len()
        {
            return Err(McError::MalformedTableFile(
                "cannot merge incompatible null distributions".to_string(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.spill.extend_from_slice(&other.spill);
        self.spill.sort_by(f64::total_cmp);
        self.total += other.total;
        self.rebuild_tail_sums();
        Ok(self)
    }

    /// Write the binned law as `h_bin_left,count` rows under the standard
    /// comment header. Only occupied bins are written; spill values are
    /// written exactly, one row each.
    pub fn save(&self, path: &Path) -> Result<(), McError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "# prior={}, sims={}, seed={}, bin={}",
            self.prior.cache_key(),
            self.total,
            self.seed,
            self.bin_width
        )?;
        writeln!(w, "# n={}, nu={}, cap={}", self.n, self.nu, self.cap)?;
        writeln!(w, "h_bin_left,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            if *c > 0 {
                let left = self.bin_origin + i as f64 * self.bin_width;
                writeln!(w, "{left:.17e},{c}")?;
            }
        }
        for v in &self.spill {
            writeln!(w, "{v:.17e},1")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NullDistribution, McError> {
        let f = std::fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let head1 = lines
            .next()
            .ok_or_else(|| McError::MalformedTableFile("empty file".into()))??;
        let meta1 = parse_header(&head1)?;
        let head2 = lines
            .next()
            .ok_or_else(|| McError::MalformedTableFile("missing size header".into()))??;
        let meta2 = parse_header(&head2)?;
        let col = lines
            .next()
            .ok_or_else(|| McError::MalformedTableFile("missing column header".into()))??;
        if col.trim() != "h_bin_left,count" {
            return Err(McError::MalformedTableFile(format!(
                "unexpected column header: {col}"
            )));
        }

        let prior = prior_from_key(
            meta1
                .get("prior")
                .ok_or_else(|| McError::MalformedTableFile("missing prior".into()))?,
        )?;
        let total: u64 = field(&meta1, "sims")?;
        let seed: u64 = field(&meta1, "seed")?;
        let bin_width: f64 = field(&meta1, "bin")?;
        let n: usize = field(&meta2, "n")?;
        let cap: f64 = field(&meta2, "cap")?;

        let origin = H_STAR_MIN;
        let nbins = ((cap - origin) / bin_width).ceil() as usize;
        let mut counts = vec![0u64; nbins];
        let mut overflow = 0u64;
        let mut spill = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (hs, cs) = line
                .split_once(',')
                .ok_or_else(|| McError::MalformedTableFile(format!("bad row: {line}")))?;
            let h: f64 = hs
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad h value: {hs}")))?;
            let c: u64 = cs
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad count: {cs}")))?;
            if h >= cap || h.is_infinite() {
                overflow += c;
                for _ in 0..c {
                    spill.push(h);
                }
            } else {
                let idx = (((h - origin) / bin_width).round() as usize).min(nbins - 1);
                counts[idx] += c;
            }
        }
        spill.sort_by(f64::total_cmp);
        let mut null = NullDistribution {
            prior,
            n,
            nu: n - 2,
            bin_width,
            bin_origin: origin,
            cap,
            counts,
            overflow,
            spill,
            total,
            seed,
            above: Vec::new(),
        };
        null.rebuild_tail_sums();
        null.validate()?;
        Ok(null)
    }
}

fn parse_header(line: &str) -> Result<HashMap<String, String>, McError> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| McError::MalformedTableFile(format!("expected comment header: {line}")))?;
    let mut map = HashMap::new();
    for part in body.split(',') {
        if let Some((k, v)) = part.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T, McError> {
    map.get(key)
        .ok_or_else(|| McError::MalformedTableFile(format!("missing header field {key}")))?
        .parse()
        .map_err(|_| McError::MalformedTableFile(format!("bad header field {key}")))
}

fn prior_from_key(key: &str) -> Result<DistributionSpec, McError> {
    if key == "normal" {
        return Ok(DistributionSpec::Normal { mu: 0.0, sigma: 1.0 });
    }
    if key == "lognormal" {
        return Ok(DistributionSpec::Lognormal {
            mu_log: 0.0,
            sigma_log: 1.0,
        });
    }
    if let Some(s) = key.strip_prefix("lognormal-s") {
        let sigma: f64 = s
            .parse()
            .map_err(|_| McError::MalformedTableFile(format!("bad prior key {key}")))?;
        return Ok(DistributionSpec::Lognormal {
            mu_log: 0.0,
            sigma_log: sigma,
        });
    }
    if let Some(s) = key.strip_prefix("truncnormal-l") {
        let lower: f64 = s
            .parse()
            .map_err(|_| McError::MalformedTableFile(format!("bad prior key {key}")))?;
        return Ok(DistributionSpec::TruncatedNormal {
            mu: 0.0,
            sigma: 1.0,
            lower,
        });
    }
    Err(McError::MalformedTableFile(format!("unknown prior {key}")))
}

/// The ten tabulated single-tail significance levels.
pub const TABLE_ALPHAS: [f64; 10] = [0.40, 0.30, 0.20, 0.15, 0.10, 0.05, 0.02, 0.01, 0.002, 0.001];

/// Critical values of h* over a grid of sample sizes and levels.
#[derive(Debug, Clone)]
pub struct CriticalValueTable {
    pub prior: DistributionSpec,
    pub levels: Vec<f64>,
    /// (n, ν, critical value per level), ascending in n.
    pub rows: Vec<(usize, usize, Vec<f64>)>,
    pub sims_per_row: u64,
    pub seed: Seed,
    pub bin_width: f64,
}

impl CriticalValueTable {
    /// Critical values must strictly increase as α decreases within a row.
    pub fn validate(&self) -> Result<(), McError> {
        for (n, nu, vals) in &self.rows {
            if *nu != n - 2 || vals.len() != self.levels.len() {
                return Err(McError::MalformedTableFile(format!("bad row n={n}")));
            }
            for w in vals.windows(2) {
                if w[1] <= w[0] {
                    return Err(McError::MalformedTableFile(format!(
                        "non-monotone critical values in row n={n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV: comment header then `n,nu,alpha,h_crit` rows, 4-decimal h_crit.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), McError> {
        writeln!(
            w,
            "# prior={}, sims={}, seed={}, bin={}",
            self.prior.cache_key(),
            self.sims_per_row,
            self.seed,
            self.bin_width
        )?;
        writeln!(w, "n,nu,alpha,h_crit")?;
        for (n, nu, vals) in &self.rows {
            for (alpha, h) in self.levels.iter().zip(vals) {
                writeln!(w, "{n},{nu},{alpha},{h:.4}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), McError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        self.write_to(BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<CriticalValueTable, McError> {
        let f = std::fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let head = lines
            .next()
            .ok_or_else(|| McError::MalformedTableFile("empty file".into()))??;
        let meta = parse_header(&head)?;
        let prior = prior_from_key(
            meta.get("prior")
                .ok_or_else(|| McError::MalformedTableFile("missing prior".into()))?,
        )?;
        let sims: u64 = field(&meta, "sims")?;
        let seed: u64 = field(&meta, "seed")?;
        let bin_width: f64 = field(&meta, "bin")?;
        let col = lines
            .next()
            .ok_or_else(|| McError::MalformedTableFile("missing column header".into()))??;
        if col.trim() != "n,nu,alpha,h_crit" {
            return Err(McError::MalformedTableFile(format!(
                "unexpected column header: {col}"
            )));
        }
        let mut levels: Vec<f64> = Vec::new();
        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(McError::MalformedTableFile(format!("bad row: {line}")));
            }
            let n: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad n: {line}")))?;
            let nu: usize = parts[1]
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad nu: {line}")))?;
            let alpha: f64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad alpha: {line}")))?;
            let h: f64 = parts[3]
                .trim()
                .parse()
                .map_err(|_| McError::MalformedTableFile(format!("bad h_crit: {line}")))?;
            match rows.last_mut() {
                Some((last_n, _, vals)) if *last_n == n => {
                    vals.push(h);
                    if rows.len() == 1 {
                        levels.push(alpha);
                    }
                }
                _ => {
                    if rows.is_empty() {
                        levels.push(alpha);
                    }
                    rows.push((n, nu, vec![h]));
                }
            }
        }
        let table = CriticalValueTable {
            prior,
            levels,
            rows,
            sims_per_row: sims,
            seed,
            bin_width,
        };
        table.validate()?;
        Ok(table)
    }
}

/// Build a table by simulating one null per sample size. Row n draws from
/// the sub-seed `derive_seed(seed, n)`.
pub fn build_table(
    prior: &DistributionSpec,
    sizes: &[usize],
    alphas: &[f64],
    trials: u64,
    seed: Seed,
    store: Option<&NullStore>,
) -> Result<CriticalValueTable, McError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let null = match store {
            Some(s) => s.get_or_simulate(prior, n, trials, seed)?,
            None => Arc::new(simulate_null(
                prior,
                n,
                trials,
                crate::dist::derive_seed(seed, n as u64),
            )?),
        };
        let mut vals = Vec::with_capacity(alphas.len());
        for &a in alphas {
            vals.push(null.critical_value(a)?);
        }
        rows.push((n, n - 2, vals));
    }
    Ok(CriticalValueTable {
        prior: prior.standardized(),
        levels: alphas.to_vec(),
        rows,
        sims_per_row: trials,
        seed,
        bin_width: DEFAULT_BIN_WIDTH,
    })
}

/// Cache of simulated nulls keyed by (standardized prior, n), backed by an
/// optional directory. A cached law is reused only when its bin width
/// matches and it carries at least the requested trial count.
pub struct NullStore {
    cache_dir: Option<PathBuf>,
    mem: Mutex<HashMap<(String, usize), Arc<NullDistribution>>>,
}

impl NullStore {
    pub fn in_memory() -> Self {
        NullStore {
            cache_dir: None,
            mem: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        NullStore {
            cache_dir: Some(dir.into()),
            mem: Mutex::new(HashMap::new()),
        }
    }

    fn file_for(&self, key: &str, n: usize) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("null_{key}_n{n}.csv")))
    }

    /// Fetch the null for (prior, n), simulating and caching when absent or
    /// when the cached law has fewer trials than requested.
    pub fn get_or_simulate(
        &self,
        prior: &DistributionSpec,
        n: usize,
        trials: u64,
        seed: Seed,
    ) -> Result<Arc<NullDistribution>, McError> {
        let key = prior.cache_key();
        {
            let mem = self.mem.lock().unwrap();
            if let Some(null) = mem.get(&(key.clone(), n)) {
                if null.total >= trials && null.bin_width == DEFAULT_BIN_WIDTH {
                    return Ok(Arc::clone(null));
                }
            }
        }
        if let Some(path) = self.file_for(&key, n) {
            if path.exists() {
                if let Ok(null) = NullDistribution::load(&path) {
                    if null.total >= trials
                        && null.bin_width == DEFAULT_BIN_WIDTH
                        && null.n == n
                        && null.prior == prior.standardized()
                    {
                        let arc = Arc::new(null);
                        self.mem
                            .lock()
                            .unwrap()
                            .insert((key, n), Arc::clone(&arc));
                        return Ok(arc);
                    }
                }
            }
        }
        let null = simulate_null(prior, n, trials, crate::dist::derive_seed(seed, n as u64))?;
        if let Some(path) = self.file_for(&key, n) {
            null.save(&path)?;
        }
        let arc = Arc::new(null);
        self.mem
            .lock()
            .unwrap()
            .insert((key, n), Arc::clone(&arc));
        Ok(arc)
    }

    /// Sizes currently cached (memory or disk) for a prior.
    fn cached_sizes(&self, key: &str) -> Vec<usize> {
        let mut sizes: Vec<usize> = self
            .mem
            .lock()
            .unwrap()
            .keys()
            .filter(|(k, _)| k == key)
            .map(|(_, n)| *n)
            .collect();
        if let Some(dir) = &self.cache_dir {
            if let Ok(rd) = std::fs::read_dir(dir) {
                for e in rd.flatten() {
                    let name = e.file_name().to_string_lossy().to_string();
                    if let Some(rest) = name
                        .strip_prefix(&format!("null_{key}_n"))
                        .and_then(|r| r.strip_suffix(".csv"))
                    {
                        if let Ok(n) = rest.parse() {
                            sizes.push(n);
                        }
                    }
                }
            }
        }
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }

    /// p-value of `h_obs` at sample size `n`. When the exact size is not
    /// cached but neighbours on both sides are, interpolate linearly in
    /// 1/ν between them; otherwise simulate the exact size on demand.
    pub fn p_value_at(
        &self,
        prior: &DistributionSpec,
        n: usize,
        h_obs: f64,
        trials: u64,
        seed: Seed,
    ) -> Result<f64, McError> {
        let key = prior.cache_key();
        let cached = self.cached_sizes(&key);
        if !cached.contains(&n) {
            let below = cached.iter().rev().find(|m| **m < n).copied();
            let above = cached.iter().find(|m| **m > n).copied();
            if let (Some(lo), Some(hi)) = (below, above) {
                let nl = self.get_or_simulate(prior, lo, trials, seed)?;
                let nh = self.get_or_simulate(prior, hi, trials, seed)?;
                if nl.total >= trials && nh.total >= trials {
                    let pl = nl.p_value(h_obs);
                    let ph = nh.p_value(h_obs);
                    let x = 1.0 / (n as f64 - 2.0);
                    let xl = 1.0 / (lo as f64 - 2.0);
                    let xh = 1.0 / (hi as f64 - 2.0);
                    let t = (x - xl) / (xh - xl);
                    return Ok(pl + t * (ph - pl));
                }
            }
        }
        let null = self.get_or_simulate(prior, n, trials, seed)?;
        Ok(null.p_value(h_obs))
    }

    /// Critical value at sample size `n`, same neighbour-interpolation rule
    /// as `p_value_at`.
    pub fn critical_value_at(
        &self,
        prior: &DistributionSpec,
        n: usize,
        alpha: f64,
        trials: u64,
        seed: Seed,
    ) -> Result<f64, McError> {
        let key = prior.cache_key();
        let cached = self.cached_sizes(&key);
        if !cached.contains(&n) {
            let below = cached.iter().rev().find(|m| **m < n).copied();
            let above = cached.iter().find(|m| **m > n).copied();
            if let (Some(lo), Some(hi)) = (below, above) {
                let nl = self.get_or_simulate(prior, lo, trials, seed)?;
                let nh = self.get_or_simulate(prior, hi, trials, seed)?;
                if nl.total >= trials && nh.total >= trials {
                    let cl = nl.critical_value(alpha)?;
                    let ch = nh.critical_value(alpha)?;
                    let x = 1.0 / (n as f64 - 2.0);
                    let xl = 1.0 / (lo as f64 - 2.0);
                    let xh = 1.0 / (hi as f64 - 2.0);
                    let t = (x - xl) / (xh - xl);
                    return Ok(cl + t * (ch - cl));
                }
            }
        }
        let null = self.get_or_simulate(prior, n, trials, seed)?;
        null.critical_value(alpha)
    }
}
