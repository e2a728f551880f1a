//! Command-line front end. The `chirp` binary parses [`Cli`] and calls
//! [`execute`]; every command records the files it writes so that a failed
//! run leaves nothing behind, and persists its parsed arguments as
//! `<command>.config.json` for [`Command::Rerun`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Bin, CorrelationReport, PairedSample};
use crate::chirp::{self, derive_seed, DistanceMatrix, SamplingConfig};
use crate::clustering::{k_medoids, ClusterAssignment};
use crate::gridworld::{random_variant, GridMdp, GridOptions};
use crate::io;
use crate::lifelong::{self, EpisodeRecord, ReuseStrategy, SuccessRate, SuccessReport, DEFAULT_BANDIT_EPSILON};
use crate::sopr::{self, PolicyPair};
use crate::{Error, Result};

/// Studies smaller than this are flagged in their report.
pub const RECOMMENDED_MIN_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "chirp", version, about = "CHIRP distances, regret validation and policy reuse experiments")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs; relative `--out` paths resolve against it.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for pair-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Random variant pairs: exact distance vs regret, correlation and calibration.
    StudySimplegrid(StudyArgs),
    /// Signed error of sampled estimates against exact distances.
    EstimatorStudy(EstimatorArgs),
    /// Regret for pairs of variants.
    Sopr(SoprArgs),
    /// Distance matrix over a list of variants.
    Chirp {
        #[command(subcommand)]
        mode: ChirpMode,
    },
    /// Correlation and calibration of paired samples.
    Analyze {
        #[command(subcommand)]
        action: AnalyzeCmd,
    },
    /// k-medoids over a distance matrix.
    Cluster(ClusterArgs),
    /// Lifelong policy reuse runs and reports.
    Lifelong {
        #[command(subcommand)]
        action: LifelongCmd,
    },
    /// Matrix, clustering and all three reuse strategies over several seeds.
    PipelineCpr(PipelineArgs),
    /// Re-runs a persisted `<command>.config.json`.
    Rerun {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimatorArgs {
    #[arg(long, default_value_t = 200)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = 15)]
    pub n_s: usize,
    #[arg(long, default_value_t = 1)]
    pub n_t: usize,
    #[arg(long, value_delimiter = ',', default_values = ["random", "reward-shaped"])]
    pub schemes: Vec<Scheme>,
    #[arg(long, default_value = "errors.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Random,
    RewardShaped,
}

impl Scheme {
    fn config(self, n_s: usize, n_t: usize, seed: u64) -> SamplingConfig {
        match self {
            Scheme::Random => SamplingConfig::random(n_s, n_t, seed),
            Scheme::RewardShaped => SamplingConfig::reward_shaped(n_s, n_t, seed),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Scheme::Random => "random",
            Scheme::RewardShaped => "reward_shaped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SoprArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "sopr.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChirpMode {
    /// Exact distances (slip-free variants only).
    Exact(ChirpArgs),
    /// Median of sampled estimates per pair.
    Estimate(ChirpArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ChirpArgs {
    #[arg(long)]
    pub variants: PathBuf,
    /// Sampling TOML (required for `estimate`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value = "matrix.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeCmd {
    Correlate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        #[arg(long, default_value = "curve.json")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "assignment.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Cpr,
    Lpr,
    Single,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifelongCmd {
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyKind,
        /// Policy count (cpr and lpr).
        #[arg(long)]
        k: Option<usize>,
        /// Distance matrix over the scenario tasks for cpr (computed if absent).
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BANDIT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value = "runlog.csv")]
        out: PathBuf,
    },
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: usize,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Comma list (`0,3,7`) or half-open range (`0..10`).
    #[arg(long, default_value = "0..10")]
    pub seeds: String,
    #[arg(long, default_value_t = DEFAULT_BANDIT_EPSILON)]
    pub epsilon: f64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::StudySimplegrid(_) => "study-simplegrid",
            Command::EstimatorStudy(_) => "estimator-study",
            Command::Sopr(_) => "sopr",
            Command::Chirp { mode: ChirpMode::Exact(_) } => "chirp-exact",
            Command::Chirp { mode: ChirpMode::Estimate(_) } => "chirp-estimate",
            Command::Analyze { action: AnalyzeCmd::Correlate { .. } } => "analyze-correlate",
            Command::Analyze { action: AnalyzeCmd::Calibrate { .. } } => "analyze-calibrate",
            Command::Cluster(_) => "cluster",
            Command::Lifelong { action: LifelongCmd::Run { .. } } => "lifelong-run",
            Command::Lifelong { action: LifelongCmd::Report { .. } } => "lifelong-report",
            Command::PipelineCpr(_) => "pipeline-cpr",
            Command::Rerun { .. } => "rerun",
        }
    }
}

/// Machine-readable error body printed by the binary.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Tracks written files so a failed command can remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    fn write(&mut self, p: &Path, bytes: &[u8]) -> Result<()> {
        let path = self.resolve(p);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        // record before writing so a half-written file is also removed
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, p: &Path, value: &T) -> Result<()> {
        self.write(p, io::to_json_string(value)?.as_bytes())
    }

    fn csv<T: Serialize>(&mut self, p: &Path, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(p, &bytes)
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Runs a parsed command line and returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    match cli.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(|| execute_inner(cli)),
        None => execute_inner(cli),
    }
}

fn execute_inner(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Command::Rerun { config } = &cli.command {
        let stored: Cli = io::read_json(config)?;
        if matches!(stored.command, Command::Rerun { .. }) {
            return Err(Error::Config("a persisted config cannot itself be a rerun".into()));
        }
        return execute_inner(&stored);
    }
    fs::create_dir_all(&cli.out_dir)?;
    let mut out = Outputs { dir: cli.out_dir.clone(), written: Vec::new() };
    let result = dispatch(cli, &mut out).and_then(|()| {
        let name = format!("{}.config.json", cli.command.name());
        out.json(Path::new(&name), cli)
    });
    match result {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.cleanup();
            Err(e)
        }
    }
}

fn dispatch(cli: &Cli, out: &mut Outputs) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::StudySimplegrid(a) => cmd_study(a, seed, out),
        Command::EstimatorStudy(a) => cmd_estimator(a, seed, out),
        Command::Sopr(a) => cmd_sopr(a, out),
        Command::Chirp { mode } => cmd_chirp(mode, out),
        Command::Analyze { action: AnalyzeCmd::Correlate { input, permutations, out: path } } => {
            let samples = io::read_pairs_csv(input)?;
            let report = analysis::correlate(&samples, *permutations, seed)?;
            out.json(path, &report)
        }
        Command::Analyze { action: AnalyzeCmd::Calibrate { input, bins, out: path } } => {
            let samples = io::read_pairs_csv(input)?;
            let curve = analysis::fit_calibration(&analysis::bin_equal_volume(&samples, *bins)?)?;
            out.json(path, &curve)
        }
        Command::Cluster(a) => {
            let d = io::read_matrix_csv(&a.matrix)?;
            let assignment = k_medoids(&d, a.k, seed)?;
            out.json(&a.out, &AssignmentFile::new(&d, &assignment))
        }
        Command::Lifelong { action } => cmd_lifelong(action, seed, out),
        Command::PipelineCpr(a) => cmd_pipeline(a, seed, out),
        Command::Rerun { .. } => unreachable!("handled by execute"),
    }
}

/// `n` random slip-free variant pairs with distinct members.
pub fn sample_variant_pairs(n: usize, seed: u64) -> Result<Vec<(GridMdp, GridMdp)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GridOptions::default();
    (0..n)
        .map(|_| {
            let a = random_variant(&mut rng, 0.0, &opts)?;
            loop {
                let b = random_variant(&mut rng, 0.0, &opts)?;
                if b != a {
                    return Ok((a, b));
                }
            }
        })
        .collect()
}

/// Exact distance and regret for every pair, in input order.
pub fn study_samples(pairs: &[(GridMdp, GridMdp)]) -> Result<Vec<PairedSample>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            Ok(PairedSample {
                pair_id: format!("{k}:{}:{}", a.id(), b.id()),
                chirp: chirp::chirp_exact(a, b)?,
                sopr: sopr::sopr(a, b)?.value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n_pairs: usize,
    pub seed: u64,
    pub correlation: CorrelationReport,
    pub bins: Vec<Bin>,
    pub small_sample: bool,
    pub warnings: Vec<String>,
}

fn cmd_study(a: &StudyArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let pairs = sample_variant_pairs(a.n_pairs, seed)?;
    let samples = study_samples(&pairs)?;
    out.csv(Path::new("pairs.csv"), &samples)?;
    let correlation = analysis::correlate(&samples, a.permutations, derive_seed(&[seed, 1]))?;
    let bins = analysis::bin_equal_volume(&samples, a.bins)?;
    let curve = analysis::fit_calibration(&bins)?;
    let small_sample = a.n_pairs < RECOMMENDED_MIN_PAIRS;
    let warnings = if small_sample {
        vec![format!("{} pairs is below the recommended minimum of {RECOMMENDED_MIN_PAIRS}", a.n_pairs)]
    } else {
        Vec::new()
    };
    out.json(Path::new("curve.json"), &curve)?;
    out.json(Path::new("report.json"), &StudyReport { n_pairs: a.n_pairs, seed, correlation, bins, small_sample, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub pair_id: String,
    pub scheme: String,
    pub exact: Option<f64>,
    pub estimate: Option<f64>,
    pub error: f64,
}

/// Per pair and scheme: exact value, estimate and signed error
/// (`estimate - exact`). Pairs come from [`sample_variant_pairs`].
pub fn estimator_rows(n_pairs: usize, n_s: usize, n_t: usize, schemes: &[Scheme], seed: u64) -> Result<Vec<EstimatorRow>> {
    let pairs = sample_variant_pairs(n_pairs, seed)?;
    let per_pair: Vec<Vec<EstimatorRow>> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let exact = chirp::chirp_exact(a, b)?;
            schemes
                .iter()
                .enumerate()
                .map(|(s, scheme)| {
                    let cfg = scheme.config(n_s, n_t, derive_seed(&[seed, k as u64, s as u64]));
                    let estimate = chirp::estimate_chirp(a, b, &cfg)?;
                    Ok(EstimatorRow {
                        pair_id: format!("{k}:{}:{}", a.id(), b.id()),
                        scheme: scheme.name().into(),
                        exact: Some(exact),
                        estimate: Some(estimate),
                        error: estimate - exact,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn cmd_estimator(a: &EstimatorArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    if a.schemes.is_empty() {
        return Err(Error::Config("no sampling schemes given".into()));
    }
    let mut rows = estimator_rows(a.n_pairs, a.n_s, a.n_t, &a.schemes, seed)?;
    for scheme in &a.schemes {
        let errs: Vec<f64> = rows.iter().filter(|r| r.scheme == scheme.name()).map(|r| r.error).collect();
        let (mean, std) = mean_std(&errs);
        for (label, v) in [("summary_mean", mean), ("summary_std", std)] {
            rows.push(EstimatorRow { pair_id: label.into(), scheme: scheme.name().into(), exact: None, estimate: None, error: v });
        }
    }
    out.csv(&a.out, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SoprRow {
    i: usize,
    j: usize,
    sopr: f64,
    numerator: f64,
    denominator: f64,
}

fn cmd_sopr(a: &SoprArgs, out: &mut Outputs) -> Result<()> {
    let file: io::PairsFile = io::read_json(&a.pairs)?;
    let (mdps, pairs) = file.build()?;
    let solved: Vec<PolicyPair> = mdps.par_iter().map(PolicyPair::solve).collect::<Result<_>>()?;
    let rows: Vec<SoprRow> = pairs
        .par_iter()
        .map(|&[i, j]| {
            let r = sopr::sopr_with(&mdps[i], &solved[i].best, &mdps[j], &solved[j], &[(mdps[j].start, 1.0)])?;
            Ok(SoprRow { i, j, sopr: r.value, numerator: r.numerator, denominator: r.denominator })
        })
        .collect::<Result<_>>()?;
    out.csv(&a.out, &rows)
}

fn cmd_chirp(mode: &ChirpMode, out: &mut Outputs) -> Result<()> {
    let (args, exact) = match mode {
        ChirpMode::Exact(a) => (a, true),
        ChirpMode::Estimate(a) => (a, false),
    };
    let variants: io::VariantsFile = io::read_json(&args.variants)?;
    let mdps = variants.build()?;
    let d = if exact {
        chirp::exact_distance_matrix(&mdps)?
    } else {
        let path = args.config.as_ref().ok_or_else(|| Error::Config("estimate requires --config sampling.toml".into()))?;
        chirp::distance_matrix(&mdps, &io::read_sampling_config(path)?, args.repeats)?
    };
    out.write(&args.out, &io::matrix_to_csv(&d)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentFile {
    pub medoids: Vec<String>,
    pub labels: BTreeMap<String, String>,
    pub cost: f64,
}

impl AssignmentFile {
    pub fn new(d: &DistanceMatrix, a: &ClusterAssignment) -> Self {
        let ids = d.ids();
        AssignmentFile {
            medoids: a.medoids.iter().map(|&m| ids[m].clone()).collect(),
            labels: a.labels.iter().enumerate().map(|(i, &m)| (ids[i].clone(), ids[m].clone())).collect(),
            cost: a.cost,
        }
    }
}

/// Distance matrix over scenario tasks: exact when every task is slip-free,
/// otherwise the median of 5 random-sampling estimates per pair.
pub fn task_matrix(tasks: &[GridMdp], seed: u64) -> Result<DistanceMatrix> {
    if tasks.iter().all(|t| t.slip_prob == 0.0) {
        chirp::exact_distance_matrix(tasks)
    } else {
        chirp::distance_matrix(tasks, &SamplingConfig::random(256, 4, derive_seed(&[seed, 2])), 5)
    }
}

fn strategy_for(
    kind: StrategyKind,
    k: Option<usize>,
    epsilon: f64,
    tasks: &[GridMdp],
    matrix: Option<&DistanceMatrix>,
    seed: u64,
) -> Result<ReuseStrategy> {
    let need_k = || k.ok_or_else(|| Error::Config("--k is required for cpr and lpr".into()));
    Ok(match kind {
        StrategyKind::Single => ReuseStrategy::Single,
        StrategyKind::Lpr => ReuseStrategy::Lpr { k: need_k()?, epsilon, warm_start: None },
        StrategyKind::Cpr => {
            let k = need_k()?;
            let computed;
            let d = match matrix {
                Some(d) => d,
                None => {
                    computed = task_matrix(tasks, seed)?;
                    &computed
                }
            };
            if d.len() != tasks.len() {
                return Err(Error::Shape(format!("matrix covers {} tasks, scenario has {}", d.len(), tasks.len())));
            }
            ReuseStrategy::Cpr { task_to_policy: lifelong::cpr_policy_map(d, k, seed)? }
        }
    })
}

fn cmd_lifelong(action: &LifelongCmd, seed: u64, out: &mut Outputs) -> Result<()> {
    match action {
        LifelongCmd::Run { scenario, strategy, k, matrix, epsilon, out: path } => {
            let s = io::read_scenario(scenario)?.build()?;
            let d = matrix.as_deref().map(io::read_matrix_csv).transpose()?;
            let strat = strategy_for(*strategy, *k, *epsilon, &s.tasks, d.as_ref(), seed)?;
            let log = lifelong::run_scenario(&s, &strat, seed)?;
            out.csv(path, &log.records)
        }
        LifelongCmd::Report { input, window, out: path } => {
            let records = io::read_runlog_csv(input)?;
            out.json(path, &lifelong::evaluate_success(&records, *window)?)
        }
    }
}

/// Parses `0,3,7` or the half-open range `0..10`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list {spec:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub overall: SuccessRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub mean_rate: f64,
    /// Pooled final-window successes across seeds.
    pub pooled: SuccessRate,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub k: usize,
    pub eval_window: usize,
    pub task_to_policy: Vec<usize>,
    pub strategies: Vec<StrategySummary>,
}

fn cmd_pipeline(a: &PipelineArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let s = io::read_scenario(&a.scenario)?.build()?;
    let seeds = parse_seeds(&a.seeds)?;
    let d = task_matrix(&s.tasks, seed)?;
    out.write(Path::new("matrix.csv"), &io::matrix_to_csv(&d)?)?;
    let assignment = k_medoids(&d, a.k, seed)?;
    out.json(Path::new("assignment.json"), &AssignmentFile::new(&d, &assignment))?;
    let kinds = [StrategyKind::Cpr, StrategyKind::Lpr, StrategyKind::Single];
    let strategies: Vec<ReuseStrategy> = kinds
        .iter()
        .map(|&kind| strategy_for(kind, Some(a.k), a.epsilon, &s.tasks, Some(&d), seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..kinds.len()).flat_map(|k| seeds.iter().map(move |&sd| (k, sd))).collect();
    let logs: Vec<Vec<EpisodeRecord>> = jobs
        .par_iter()
        .map(|&(k, sd)| Ok(lifelong::run_scenario(&s, &strategies[k], sd)?.records))
        .collect::<Result<_>>()?;
    let mut summaries = Vec::new();
    for (k, strat) in strategies.iter().enumerate() {
        let mut runs = Vec::new();
        let (mut succ, mut trials) = (0, 0);
        for ((_, sd), records) in jobs.iter().zip(&logs).filter(|((kk, _), _)| *kk == k) {
            out.csv(Path::new(&format!("runlogs/{}_seed{sd}.csv", strat.kind())), records)?;
            let rep: SuccessReport = lifelong::evaluate_success(records, s.eval_window)?;
            succ += rep.overall.successes;
            trials += rep.overall.trials;
            runs.push(RunSummary { seed: *sd, overall: rep.overall });
        }
        summaries.push(StrategySummary {
            strategy: strat.kind().into(),
            mean_rate: runs.iter().map(|r| r.overall.rate).sum::<f64>() / runs.len() as f64,
            pooled: lifelong::wilson_interval(succ, trials)?,
            runs,
        });
    }
    let task_to_policy = assignment.cluster_ids();
    out.json(Path::new("comparison.json"), &Comparison { k: a.k, eval_window: s.eval_window, task_to_policy, strategies: summaries })
}
