//! hstar: outlier evaluation with the h* statistic from the command line.

mod ingest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hstar_core::dist::{DistributionSpec, FitKind, GofTest};
use hstar_core::iut::{self, ReportFormat, SelectionRule, TrialSpec};
use hstar_core::montecarlo::{build_table, NullStore, TABLE_ALPHAS};
use hstar_core::power::{
    accumulation_study, h_tilde_exponent, power_curve, regress_mean_h, write_accumulation_csv,
    write_power_csv, AccumulationSpec, PowerStudySpec, XTransform,
};
use hstar_core::stat::Side;
use hstar_core::{bayes, paired, unique};

#[derive(Parser)]
#[command(
    name = "hstar",
    about = "Outlier evaluation with the h* test statistic",
    version,
    after_help = "\
Examples:
  hstar test data.csv --column score --side max --max-candidates 3 --alpha 0.05 --seed 42
  hstar table --prior normal --n 4..32 --alphas .05,.01 --trials 1e6 --seed 7 --out t.csv
  hstar power --effects 1.7,3.7,6.6 --cls .95 --n 4..32 --seed 1 --out power.csv
  hstar accumulate --effect 1.7 --trials 1e3 --seed 1 --out acc.csv
  hstar bayes data.csv --column score --n-prime 2 --seed 5
  hstar paired data/paired_scores.csv --log --seed 3
  hstar unique --f 1 --n0 10 --samples 100:1,1000:1"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Max,
    Min,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriorArg {
    Normal,
    Lognormal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GofArg {
    /// Anderson-Darling with the parameters-estimated correction.
    Ad,
    /// Lilliefors-corrected Kolmogorov-Smirnov.
    Ks,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectionArg {
    Largest,
    Smallest,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// RNG seed; generated and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the primary output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Null-distribution cache directory (HSTAR_CACHE_DIR overrides the
    /// default ".hstar-cache").
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Worker threads ("auto" or a count).
    #[arg(long, default_value = "auto")]
    threads: String,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a data column for outliers with the intersection-union test.
    Test {
        file: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, value_enum, default_value_t = SideArg::Both)]
        side: SideArg,
        #[arg(long, default_value_t = 3)]
        max_candidates: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = PriorArg::Normal)]
        prior: PriorArg,
        /// Analyse the natural log of the data.
        #[arg(long)]
        log: bool,
        /// Trials per simulated null (accepts forms like 1e6).
        #[arg(long, default_value = "1e6")]
        trials: String,
        #[arg(long, value_enum, default_value_t = GofArg::Ad)]
        gof: GofArg,
        /// GoF p-value floor that raises the fit warning.
        #[arg(long, default_value_t = 0.01)]
        fit_floor: f64,
        /// Abort (exit 3) when the prior fit is rejected instead of warning.
        #[arg(long)]
        strict_fit: bool,
        #[arg(long, value_enum, default_value_t = SelectionArg::Largest)]
        selection: SelectionArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Generate a critical-value table over a grid of sample sizes.
    Table {
        #[arg(long, value_enum, default_value_t = PriorArg::Normal)]
        prior: PriorArg,
        /// Sample sizes: ranges and lists, e.g. 4..32 or 4..8,10,20..30:5.
        #[arg(long, default_value = "4..32")]
        n: String,
        /// Significance levels (defaults to the ten tabulated ones).
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long, default_value = "1e6")]
        trials: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Power of the test against a mean-shifted outlier.
    Power {
        #[arg(long, default_value = "1.7,3.7,6.6")]
        effects: String,
        #[arg(long, default_value = "0.90,0.95,0.99")]
        cls: String,
        #[arg(long, default_value = "4..32,42..102:10")]
        n: String,
        #[arg(long, default_value = "1e4")]
        trials: String,
        #[arg(long, default_value = "1e6")]
        null_trials: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Accumulating-observations study with a persistent outlier.
    Accumulate {
        #[arg(long, default_value_t = 1.7)]
        effect: f64,
        /// Schedule of sample sizes, e.g. 4..32,42..102:10,202..1002:100.
        #[arg(long, default_value = "4..32,42..102:10,202..1002:100")]
        schedule: String,
        #[arg(long, default_value = "1e3")]
        trials: String,
        #[arg(long, default_value_t = 0.95)]
        cl: f64,
        #[arg(long, default_value = "1e5")]
        null_trials: String,
        /// Append regression summaries over the linear region (n >= window).
        #[arg(long)]
        regress: bool,
        /// Smallest n of the linear-region window.
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Bayesian posterior outlier probabilities for the top candidates.
    Bayes {
        file: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 1)]
        n_prime: usize,
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        #[arg(long, default_value_t = 64)]
        delta_nodes: usize,
        #[arg(long, default_value_t = 128)]
        pi_nodes: usize,
        /// Trials per likelihood law.
        #[arg(long, default_value = "1e5")]
        trials: String,
        #[arg(long)]
        log: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Paired-samples treatment-effect pipeline on id,pre,post data.
    Paired {
        file: PathBuf,
        /// Analyse log scores (lognormal prior).
        #[arg(long)]
        log: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 6)]
        max_candidates: usize,
        #[arg(long, default_value = "1e6")]
        trials: String,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// The I-index of novelty and its cumulative-sample verdicts.
    Unique {
        #[arg(long)]
        f: u64,
        #[arg(long)]
        n0: u64,
        /// Cumulative checkpoints as size:count pairs, e.g. 100:1,1000:1.
        #[arg(long)]
        samples: Option<String>,
        /// Combine with an h* verdict into the four-quadrant label.
        #[arg(long)]
        h_significant: Option<bool>,
        /// Threshold on I for the quadrant mapping (required with
        /// --h-significant; no default on purpose).
        #[arg(long)]
        i_threshold: Option<f64>,
    },
}

enum AppError {
    Usage(String),
    Data(String),
    Stat(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Stat(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Stat(m) => m,
        }
    }
}

impl From<ingest::IngestError> for AppError {
    fn from(e: ingest::IngestError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(format!("io error: {e}"))
    }
}

impl From<hstar_core::montecarlo::McError> for AppError {
    fn from(e: hstar_core::montecarlo::McError) -> Self {
        AppError::Stat(e.to_string())
    }
}

impl From<hstar_core::power::PowerError> for AppError {
    fn from(e: hstar_core::power::PowerError) -> Self {
        AppError::Stat(e.to_string())
    }
}

impl From<hstar_core::bayes::BayesError> for AppError {
    fn from(e: hstar_core::bayes::BayesError) -> Self {
        AppError::Stat(e.to_string())
    }
}

impl From<hstar_core::paired::PairedError> for AppError {
    fn from(e: hstar_core::paired::PairedError) -> Self {
        match e {
            paired::PairedError::LengthMismatch { .. }
            | paired::PairedError::NonPositiveScore(_) => AppError::Data(e.to_string()),
            other => AppError::Stat(other.to_string()),
        }
    }
}

impl From<hstar_core::unique::UniqueError> for AppError {
    fn from(e: hstar_core::unique::UniqueError) -> Self {
        AppError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // help and version are not usage errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_count(s: &str) -> Result<u64, AppError> {
    let v: f64 = s
        .parse()
        .map_err(|_| AppError::Usage(format!("cannot parse count '{s}'")))?;
    if !(v >= 1.0 && v.is_finite()) {
        return Err(AppError::Usage(format!("count must be at least 1, got {s}")));
    }
    Ok(v as u64)
}

/// Ranges and lists: "4..32", "4..32:2", "4,6,10..20:5".
fn parse_sizes(s: &str) -> Result<Vec<usize>, AppError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (range, step) = match part.split_once(':') {
            Some((r, st)) => (
                r,
                st.parse::<usize>()
                    .map_err(|_| AppError::Usage(format!("bad step in '{part}'")))?,
            ),
            None => (part, 1),
        };
        if step == 0 {
            return Err(AppError::Usage(format!("step must be positive in '{part}'")));
        }
        if let Some((a, b)) = range.split_once("..") {
            let a: usize = a
                .trim()
                .parse()
                .map_err(|_| AppError::Usage(format!("bad range start in '{part}'")))?;
            let b: usize = b
                .trim()
                .parse()
                .map_err(|_| AppError::Usage(format!("bad range end in '{part}'")))?;
            if b < a {
                return Err(AppError::Usage(format!("empty range '{part}'")));
            }
            out.extend((a..=b).step_by(step));
        } else {
            out.push(
                range
                    .parse()
                    .map_err(|_| AppError::Usage(format!("bad size '{part}'")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(AppError::Usage("no sample sizes given".to_string()));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, AppError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse()
                .map_err(|_| AppError::Usage(format!("bad {what} value '{part}'")))?,
        );
    }
    if out.is_empty() {
        return Err(AppError::Usage(format!("no {what} values given")));
    }
    Ok(out)
}

struct Runtime {
    seed: u64,
    store: NullStore,
    out: Option<PathBuf>,
}

impl Runtime {
    fn new(common: &CommonOpts) -> Result<Self, AppError> {
        if common.threads != "auto" {
            let n: usize = common
                .threads
                .parse()
                .map_err(|_| AppError::Usage(format!("bad thread count '{}'", common.threads)))?;
            if n == 0 {
                return Err(AppError::Usage("thread count must be positive".to_string()));
            }
            // ignore the error when a global pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let seed = common.seed.unwrap_or_else(rand::random::<u64>);
        let dir = common
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os("HSTAR_CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".hstar-cache"));
        Ok(Runtime {
            seed,
            store: NullStore::with_dir(dir),
            out: common.out.clone(),
        })
    }

    fn write_output(&self, bytes: &[u8]) -> Result<(), AppError> {
        match &self.out {
            Some(path) => std::fs::write(path, bytes)?,
            None => std::io::stdout().write_all(bytes)?,
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Test {
            file,
            column,
            side,
            max_candidates,
            alpha,
            prior,
            log,
            trials,
            gof,
            fit_floor,
            strict_fit,
            selection,
            format,
            common,
        } => {
            if max_candidates == 0 {
                return Err(AppError::Usage("--max-candidates must be positive".into()));
            }
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(AppError::Usage(format!(
                    "--alpha must lie in (0,1), got {alpha}"
                )));
            }
            let trials = parse_count(&trials)?;
            let rt = Runtime::new(&common)?;
            let data = ingest::ingest_column(&file, &column)?;
            let sides: Vec<Side> = match side {
                SideArg::Max => vec![Side::Max],
                SideArg::Min => vec![Side::Min],
                SideArg::Both => vec![Side::Max, Side::Min],
            };
            let mut base = TrialSpec::new(Side::Max, 1);
            base.alpha = alpha;
            base.log_transform = log;
            base.fit_kind = match prior {
                PriorArg::Normal => FitKind::Normal,
                PriorArg::Lognormal => FitKind::Lognormal,
            };
            base.gof_test = match gof {
                GofArg::Ad => GofTest::AndersonDarling,
                GofArg::Ks => GofTest::LillieforsKs,
            };
            base.fit_floor = fit_floor;
            base.strict_fit = strict_fit;
            base.null_trials = trials;
            base.seed = rt.seed;
            let rule = match selection {
                SelectionArg::Largest => SelectionRule::LargestRejecting,
                SelectionArg::Smallest => SelectionRule::SmallestRejecting,
            };
            let outcome = iut::scan_trials(&data, max_candidates, &sides, &base, rule, &rt.store);
            if strict_fit {
                for r in &outcome.reports {
                    if let Err(iut::IutError::FitRejected { p, floor }) = r {
                        return Err(AppError::Stat(format!(
                            "prior fit rejected (GoF p = {p:.4} < floor {floor}); \
                             re-examination of the prior distribution or dataset may be advised"
                        )));
                    }
                }
            }
            let mut buf: Vec<u8> = Vec::new();
            match format {
                FormatArg::Text => {
                    writeln!(buf, "# seed={}, trials={trials}", rt.seed)?;
                    for r in &outcome.reports {
                        match r {
                            Ok(report) => {
                                buf.extend(iut::render_report(report, ReportFormat::Text));
                                writeln!(buf)?;
                            }
                            Err(e) => writeln!(buf, "trial error: {e}\n")?,
                        }
                    }
                    if outcome.selections.is_empty() {
                        writeln!(buf, "selection: no outliers identified")?;
                    }
                    for sel in &outcome.selections {
                        let ids: Vec<String> =
                            sel.indices.iter().map(|i| format!("#{i}")).collect();
                        writeln!(
                            buf,
                            "selection: side={} n'={} outliers: {}",
                            match sel.side {
                                Side::Max => "max",
                                Side::Min => "min",
                            },
                            sel.n_prime,
                            ids.join(", ")
                        )?;
                    }
                }
                FormatArg::Json => {
                    let reports: Vec<serde_json::Value> = outcome
                        .reports
                        .iter()
                        .map(|r| match r {
                            Ok(rep) => serde_json::to_value(rep).expect("report serializes"),
                            Err(e) => serde_json::json!({ "error": e.to_string() }),
                        })
                        .collect();
                    let doc = serde_json::json!({
                        "schema_version": 1,
                        "seed": rt.seed,
                        "trials": trials,
                        "reports": reports,
                        "selections": outcome.selections,
                    });
                    serde_json::to_writer_pretty(&mut buf, &doc).expect("doc serializes");
                    buf.push(b'\n');
                }
            }
            rt.write_output(&buf)
        }

        Command::Table {
            prior,
            n,
            alphas,
            trials,
            common,
        } => {
            let trials = parse_count(&trials)?;
            let sizes = parse_sizes(&n)?;
            let alphas = match alphas {
                Some(s) => parse_f64_list(&s, "alpha")?,
                None => TABLE_ALPHAS.to_vec(),
            };
            for a in &alphas {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(AppError::Usage(format!("alpha {a} outside (0,1)")));
                }
            }
            let rt = Runtime::new(&common)?;
            let spec = match prior {
                PriorArg::Normal => DistributionSpec::normal(0.0, 1.0),
                PriorArg::Lognormal => DistributionSpec::lognormal(0.0, 1.0),
            }
            .map_err(|e| AppError::Usage(e.to_string()))?;
            let table = build_table(&spec, &sizes, &alphas, trials, rt.seed, Some(&rt.store))?;
            let mut buf = Vec::new();
            table.write_to(&mut buf)?;
            rt.write_output(&buf)
        }

        Command::Power {
            effects,
            cls,
            n,
            trials,
            null_trials,
            common,
        } => {
            let rt = Runtime::new(&common)?;
            let spec = PowerStudySpec {
                effect_sizes: parse_f64_list(&effects, "effect")?,
                confidence_levels: parse_f64_list(&cls, "confidence level")?,
                sizes: parse_sizes(&n)?,
                trials: parse_count(&trials)?,
                null_trials: parse_count(&null_trials)?,
                seed: rt.seed,
            };
            let points = power_curve(&spec, &rt.store)?;
            let mut buf = Vec::new();
            writeln!(
                buf,
                "# seed={}, trials={}, null_trials={}",
                rt.seed, spec.trials, spec.null_trials
            )?;
            write_power_csv(&points, &mut buf)?;
            rt.write_output(&buf)
        }

        Command::Accumulate {
            effect,
            schedule,
            trials,
            cl,
            null_trials,
            regress,
            window,
            common,
        } => {
            let rt = Runtime::new(&common)?;
            let spec = AccumulationSpec {
                effect_size: effect,
                schedule: parse_sizes(&schedule)?,
                trials: parse_count(&trials)?,
                confidence_level: cl,
                null_trials: parse_count(&null_trials)?,
                seed: rt.seed,
            };
            let points = accumulation_study(&spec, &rt.store)?;
            let mut buf = Vec::new();
            writeln!(
                buf,
                "# seed={}, trials={}, null_trials={}, cl={}",
                rt.seed, spec.trials, spec.null_trials, cl
            )?;
            write_accumulation_csv(effect, &points, &mut buf)?;
            if regress {
                let lin = regress_mean_h(&points, XTransform::Log10N, window)?;
                let sq = regress_mean_h(&points, XTransform::SqrtN, window)?;
                let ht = h_tilde_exponent(&points, window)?;
                writeln!(
                    buf,
                    "# regression window n>={window}: mean_h~log10(n) slope={:.4} intercept={:.4} adj_r2={:.4}",
                    lin.slope, lin.intercept, lin.adjusted_r2
                )?;
                writeln!(
                    buf,
                    "# regression window n>={window}: mean_h~sqrt(n) slope={:.4} intercept={:.4} adj_r2={:.4}",
                    sq.slope, sq.intercept, sq.adjusted_r2
                )?;
                writeln!(
                    buf,
                    "# regression window n>={window}: log10(mean_htilde)~log10(n) exponent={:.4} adj_r2={:.4}",
                    ht.slope, ht.adjusted_r2
                )?;
            }
            rt.write_output(&buf)
        }

        Command::Bayes {
            file,
            column,
            n_prime,
            tau,
            delta_nodes,
            pi_nodes,
            trials,
            log,
            common,
        } => {
            if n_prime == 0 {
                return Err(AppError::Usage("--n-prime must be positive".into()));
            }
            let trials = parse_count(&trials)?;
            let rt = Runtime::new(&common)?;
            let raw = ingest::ingest_column(&file, &column)?;
            let data: Vec<f64> = if log {
                if let Some(bad) = raw.iter().find(|v| **v <= 0.0) {
                    return Err(AppError::Data(format!(
                        "log transform requires positive data; found {bad}"
                    )));
                }
                raw.iter().map(|v| v.ln()).collect()
            } else {
                raw
            };
            if data.len() < n_prime + 4 {
                return Err(AppError::Data(format!(
                    "need at least {} rows for {n_prime} candidates, got {}",
                    n_prime + 4,
                    data.len()
                )));
            }
            // top n' extrema (ties pulled in), most extreme first
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.sort_by(|a, b| data[*a].total_cmp(&data[*b]));
            let cut = data[order[data.len() - n_prime]];
            let cand: Vec<usize> = order
                .iter()
                .rev()
                .copied()
                .filter(|i| data[*i] >= cut)
                .collect();
            let ordinary: Vec<f64> = order
                .iter()
                .copied()
                .filter(|i| data[*i] < cut)
                .map(|i| data[i])
                .collect();
            if ordinary.len() < 4 {
                return Err(AppError::Data(format!(
                    "only {} ordinary points remain after removing the candidates",
                    ordinary.len()
                )));
            }
            let size = ordinary.len() + 1;
            let spec = bayes::BayesSpec {
                tau,
                delta_nodes,
                pi_nodes,
                ..bayes::BayesSpec::default()
            };
            let tables = bayes::likelihood_tables(size, &spec, trials, rt.seed)?;
            let mut per_candidate = Vec::new();
            for &c in &cand {
                let mut sample = ordinary.clone();
                sample.push(data[c]);
                let out = hstar_core::h_star_with_candidate(&sample, sample.len() - 1)
                    .map_err(|e| AppError::Data(e.to_string()))?;
                let post = bayes::posterior(out.h_star, &tables)?;
                per_candidate.push((c + 1, out.h_star, post));
            }
            let combined = bayes::combined_posterior(&per_candidate, &spec)?;
            let doc = serde_json::json!({
                "schema_version": 1,
                "seed": rt.seed,
                "trials_per_law": trials,
                "spec": &spec,
                "n": size,
                "per_candidate": combined.per_candidate.iter().map(|(i, h, p)| {
                    serde_json::json!({ "index": i, "h_star": h, "posterior": p })
                }).collect::<Vec<_>>(),
                "combined": combined.combined,
                "normalizer": combined.normalizer,
            });
            let mut buf = serde_json::to_vec_pretty(&doc).expect("doc serializes");
            buf.push(b'\n');
            rt.write_output(&buf)
        }

        Command::Paired {
            file,
            log,
            alpha,
            max_candidates,
            trials,
            format,
            common,
        } => {
            let trials = parse_count(&trials)?;
            let rt = Runtime::new(&common)?;
            let (ids, pre, post) = ingest::ingest_paired(&file)?;
            let study = paired::PairedStudy {
                ids,
                pre_scores: pre,
                post_scores: post,
                log_transform: log,
                alpha,
                max_candidates,
                null_trials: trials,
                seed: rt.seed,
            };
            let (report, _trial_reports) = paired::paired_pipeline(&study, &rt.store)?;
            let mut buf: Vec<u8> = Vec::new();
            match format {
                FormatArg::Json => {
                    let doc = serde_json::json!({
                        "seed": rt.seed,
                        "report": &report,
                    });
                    serde_json::to_writer_pretty(&mut buf, &doc).expect("doc serializes");
                    buf.push(b'\n');
                }
                FormatArg::Text => {
                    writeln!(buf, "# seed={}, trials={trials}", rt.seed)?;
                    writeln!(
                        buf,
                        "pretest outliers ({}): {}",
                        report.outlier_ids.len(),
                        report
                            .outlier_ids
                            .iter()
                            .map(|i| format!("#{i}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    )?;
                    writeln!(
                        buf,
                        "posttest outliers: {}",
                        if report.posttest_outliers_found {
                            "found (see warnings)"
                        } else {
                            "none"
                        }
                    )?;
                    writeln!(buf, "subject h* before/after:")?;
                    for s in &report.subjects {
                        writeln!(
                            buf,
                            "  #{}: pre={:.4} post={:.4}{}",
                            s.id,
                            s.h_pre,
                            s.h_post,
                            if s.post_still_extreme {
                                " (still in the rejection region)"
                            } else {
                                ""
                            }
                        )?;
                    }
                    if let Some(w) = &report.wilcoxon_approx {
                        writeln!(
                            buf,
                            "wilcoxon signed-rank: W={} p={:.4} (normal approximation, \
                             continuity corrected; one-sided {:.4})",
                            w.w, w.p_two_sided, w.p_one_sided_greater
                        )?;
                    }
                    if let Some(w) = &report.wilcoxon_exact {
                        writeln!(
                            buf,
                            "wilcoxon signed-rank (exact): W={} p={:.5} (one-sided {:.5})",
                            w.w, w.p_two_sided, w.p_one_sided_greater
                        )?;
                    }
                    match report.significant {
                        Some(true) => writeln!(
                            buf,
                            "verdict: the intervention moved the extreme cases (p < {alpha})"
                        )?,
                        Some(false) => writeln!(
                            buf,
                            "verdict: no significant effect on the extreme cases at alpha={alpha}"
                        )?,
                        None => writeln!(buf, "verdict: paired test not run")?,
                    }
                    for w in &report.warnings {
                        writeln!(buf, "warning: {w}")?;
                    }
                }
            }
            rt.write_output(&buf)
        }

        Command::Unique {
            f,
            n0,
            samples,
            h_significant,
            i_threshold,
        } => {
            let i = unique::i_index(f, n0)?;
            println!("I = {f}/{n0} = {i}");
            if let Some(samples) = samples {
                let mut checkpoints = Vec::new();
                for part in samples.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    let (n, fc) = part.split_once(':').ok_or_else(|| {
                        AppError::Usage(format!("bad checkpoint '{part}', expected size:count"))
                    })?;
                    let n: u64 = n
                        .trim()
                        .parse()
                        .map_err(|_| AppError::Usage(format!("bad size in '{part}'")))?;
                    let fc: u64 = fc
                        .trim()
                        .parse()
                        .map_err(|_| AppError::Usage(format!("bad count in '{part}'")))?;
                    checkpoints.push((n, fc));
                }
                let idx = unique::UniquenessIndex::new(f, n0, checkpoints)?;
                let verdicts = unique::novelty_holds(&idx);
                for ((n, fc), v) in idx.cumulative_samples.iter().zip(&verdicts) {
                    let sym = match v {
                        unique::NoveltyVerdict::Holds => "holds",
                        unique::NoveltyVerdict::Equal => "equal",
                        unique::NoveltyVerdict::Violated => "violated",
                    };
                    println!("  1/{n0} vs {fc}/{n}: {sym}");
                }
            }
            if let Some(h_sig) = h_significant {
                let thr = i_threshold.ok_or_else(|| {
                    AppError::Usage(
                        "--i-threshold is required with --h-significant (no default)".to_string(),
                    )
                })?;
                let label = unique::classify_quadrant(h_sig, i, thr)?;
                println!("quadrant: {}", label.as_str());
            }
            Ok(())
        }
    }
}
