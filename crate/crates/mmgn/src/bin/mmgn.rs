//! Command-line front end: generate synthetic instances, solve them, select
//! ranks, evaluate estimates, ingest ratings files, and run seeded
//! experiment sweeps that emit plot-ready CSV/JSON.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags), 1 on runtime
//! errors (missing files, dimension mismatches, solver failures).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mmgn::ingest::{self, RatingsFormat};
use mmgn::metrics;
use mmgn::solver::{self, SolverConfig};
use mmgn::synth;
use mmgn::{derive_seed, Error, InitKind, LinkModel, ObservationSet, Result};

// Stage tags for deriving stream-disjoint seeds from one master seed.
const SEED_TRUTH: u64 = 0x11;
const SEED_OMEGA: u64 = 0x12;
const SEED_LABELS: u64 = 0x13;
const SEED_SOLVER: u64 = 0x14;

#[derive(Parser)]
#[command(
    name = "mmgn",
    version,
    about = "One-bit matrix completion via majorization-minimization with Gauss-Newton steps"
)]
struct Cli {
    /// Worker threads for sweeps and rank selection (default: all cores).
    #[arg(long, global = true, value_parser = parse_jobs)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground truth, observations, and a manifest.
    Generate(GenerateArgs),
    /// Fit factors to observations (optionally selecting the rank first).
    Solve(SolveArgs),
    /// Score factors against a truth matrix or a held-out set.
    Evaluate(EvaluateArgs),
    /// Run a seeded experiment grid and emit plot-ready tables.
    Sweep(SweepArgs),
    /// Parse a ratings file, binarize it, and split train/held-out.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GeneratorKindArg {
    /// Uniform factors, product rescaled to max-entry one.
    Nonspiky,
    /// Student-t factors (requires --nu).
    Spiky,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKindArg {
    Probit,
    Logistic,
}

impl ModelKindArg {
    fn as_str(self) -> &'static str {
        match self {
            ModelKindArg::Probit => "probit",
            ModelKindArg::Logistic => "logistic",
        }
    }

    fn build(self, sigma: f64) -> Result<LinkModel> {
        match self {
            ModelKindArg::Probit => LinkModel::probit(sigma),
            ModelKindArg::Logistic => LinkModel::logistic(sigma),
        }
    }
}

fn init_as_str(init: InitKind) -> &'static str {
    match init {
        InitKind::Spectral => "spectral",
        InitKind::Random => "random",
    }
}

fn parse_jobs(s: &str) -> std::result::Result<usize, String> {
    let jobs: usize = s.parse().map_err(|e| format!("{e}"))?;
    if jobs == 0 {
        return Err("--jobs must be at least 1".into());
    }
    Ok(jobs)
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(format!("must be a positive finite number, got {v}"));
    }
    Ok(v)
}

fn parse_density(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !v.is_finite() || v <= 0.0 || v > 1.0 {
        return Err(format!("observation density must lie in (0, 1], got {v}"));
    }
    Ok(v)
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !v.is_finite() || v <= 0.0 || v >= 1.0 {
        return Err(format!("fraction must lie strictly between 0 and 1, got {v}"));
    }
    Ok(v)
}

fn parse_nu(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !v.is_finite() || v <= 2.0 {
        return Err(format!("degrees of freedom must exceed 2, got {v}"));
    }
    Ok(v)
}

fn parse_init(s: &str) -> std::result::Result<InitKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Comma-separated strictly increasing value-group edges, e.g. "-2.5,2.5".
#[derive(Clone, Debug)]
struct GroupEdges(Vec<f64>);

fn parse_groups(s: &str) -> std::result::Result<GroupEdges, String> {
    let edges: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad edge {t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if edges.iter().any(|e| !e.is_finite()) {
        return Err("edges must be finite".into());
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err("edges must be strictly increasing".into());
    }
    Ok(GroupEdges(edges))
}

/// Rating scale "lo,hi".
#[derive(Clone, Copy, Debug)]
struct ScaleArg(f64, f64);

fn parse_scale(s: &str) -> std::result::Result<ScaleArg, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi, got {s:?}"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(format!("scale bounds must be finite with lo < hi, got {lo},{hi}"));
    }
    Ok(ScaleArg(lo, hi))
}

#[derive(Args)]
struct GenerateArgs {
    /// Factor ensemble.
    #[arg(long, value_enum, default_value_t = GeneratorKindArg::Nonspiky)]
    kind: GeneratorKindArg,
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 500)]
    cols: usize,
    /// Rank of the generated truth.
    #[arg(long, default_value_t = 1)]
    rank_star: usize,
    /// Student-t degrees of freedom (spiky ensemble only; must exceed 2).
    #[arg(long, value_parser = parse_nu, required_if_eq("kind", "spiky"))]
    nu: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelKindArg::Probit)]
    model: ModelKindArg,
    /// Link noise scale.
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    sigma: f64,
    /// Fraction of entries observed.
    #[arg(long, default_value_t = 0.8, value_parser = parse_density)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving truth.bin, observations.csv, and manifest.json.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Observations CSV (header i,j,y; 1-based indices).
    #[arg(long)]
    observations: PathBuf,
    /// Row count, when larger than the largest observed row index.
    #[arg(long)]
    rows: Option<usize>,
    /// Column count, when larger than the largest observed column index.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModelKindArg::Probit)]
    model: ModelKindArg,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    sigma: f64,
    /// Fit this rank directly (default 1 when --ranks is absent).
    #[arg(long, conflicts_with = "ranks")]
    rank: Option<usize>,
    /// Candidate ranks, comma-separated; the best by held-out likelihood is
    /// refit on all observations.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Relative objective-decrease stopping tolerance.
    #[arg(long, default_value_t = 1e-4, value_parser = parse_positive)]
    tol: f64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Inner least-squares tolerance.
    #[arg(long, default_value_t = 1e-6, value_parser = parse_positive)]
    inner_tol: f64,
    /// Inner least-squares iteration cap.
    #[arg(long)]
    inner_max_iter: Option<usize>,
    /// Initialization: spectral or random.
    #[arg(long, default_value = "spectral", value_parser = parse_init)]
    init: InitKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving factors.bin and report.json.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["truth", "heldout"])))]
struct EvaluateArgs {
    /// Factors file written by `solve`.
    #[arg(long)]
    factors: PathBuf,
    /// Truth matrix file: emits relative error and Hellinger distance.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Held-out observations CSV: emits sign accuracy.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Aligned original-ratings CSV (from `ingest`) for a per-rating
    /// accuracy breakdown.
    #[arg(long, requires = "heldout")]
    ratings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelKindArg::Probit)]
    model: ModelKindArg,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    sigma: f64,
    /// Value-group edges, e.g. "-2.5,2.5" (truth mode only).
    #[arg(long, value_parser = parse_groups, allow_hyphen_values = true, conflicts_with = "heldout")]
    groups: Option<GroupEdges>,
    /// Solve wall-clock seconds to embed in the report.
    #[arg(long, default_value_t = 0.0)]
    runtime: f64,
    /// Report file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment grid description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving rows.csv, medians.csv, slopes.json, and the
    /// sweep manifest.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Delimited ratings file (user, item, rating, optional timestamp).
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value = "::")]
    delimiter: String,
    /// Declared rating scale (out-of-scale values are kept with a warning).
    #[arg(long, value_parser = parse_scale, default_value = "1,5")]
    scale: ScaleArg,
    /// Fraction of observations held out for evaluation.
    #[arg(long, default_value_t = 0.05, value_parser = parse_fraction)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.csv, heldout.csv, heldout_ratings.csv,
    /// and ingest.json.
    #[arg(long)]
    output: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignore the error if a pool already exists (e.g. under test).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Ingest(args) => cmd_ingest(&args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(format!("serializing JSON: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- generate

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    fs::create_dir_all(&args.output)?;
    let truth = match args.kind {
        GeneratorKindArg::Nonspiky => synth::gen_nonspiky(
            args.rows,
            args.cols,
            args.rank_star,
            derive_seed(args.seed, &[SEED_TRUTH]),
        )?,
        GeneratorKindArg::Spiky => synth::gen_spiky(
            args.rows,
            args.cols,
            args.rank_star,
            args.nu.expect("clap enforces --nu for spiky"),
            derive_seed(args.seed, &[SEED_TRUTH]),
        )?,
    };
    let omega = synth::sample_omega(
        args.rows,
        args.cols,
        args.rho,
        derive_seed(args.seed, &[SEED_OMEGA]),
    )?;
    let model = args.model.build(args.sigma)?;
    let obs = synth::sample_labels(&truth, &omega, &model, derive_seed(args.seed, &[SEED_LABELS]))?;

    let truth_path = args.output.join("truth.bin");
    let obs_path = args.output.join("observations.csv");
    mmgn::io::write_truth(&truth_path, &truth.theta_star)?;
    mmgn::io::write_observations_csv(&obs_path, &obs)?;
    let manifest = serde_json::json!({
        "command": "generate",
        "kind": match args.kind { GeneratorKindArg::Nonspiky => "nonspiky", GeneratorKindArg::Spiky => "spiky" },
        "rows": args.rows,
        "cols": args.cols,
        "rank_star": args.rank_star,
        "nu": args.nu,
        "model": args.model.as_str(),
        "sigma": args.sigma,
        "rho": args.rho,
        "seed": args.seed,
        "spikiness": truth.spikiness,
        "observed": obs.len(),
        "files": { "truth": "truth.bin", "observations": "observations.csv" },
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&args.output.join("manifest.json"), &manifest)?;
    println!(
        "generated {}x{} rank-{} instance (spikiness {:.2}, {} observations) -> {}",
        args.rows,
        args.cols,
        args.rank_star,
        truth.spikiness,
        obs.len(),
        args.output.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- solve

#[derive(Serialize)]
struct ValidationRow {
    rank: usize,
    log_likelihood: f64,
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    fs::create_dir_all(&args.output)?;
    let obs = mmgn::io::read_observations_csv(&args.observations, args.rows, args.cols)?;
    let model = args.model.build(args.sigma)?;
    let mut config = SolverConfig {
        tol: args.tol,
        max_outer_iter: args.max_iter,
        inner_tol: args.inner_tol,
        inner_max_iter: args.inner_max_iter,
        init: args.init,
        seed: args.seed,
        ..SolverConfig::default()
    };

    let selection = match &args.ranks {
        Some(ranks) => Some(solver::select_rank(&obs, &model, ranks, &config)?),
        None => None,
    };
    config.rank = match &selection {
        Some(sel) => sel.chosen_rank,
        None => args.rank.unwrap_or(1),
    };
    let report = solver::solve(&obs, &model, &config)?;

    let factors_path = args.output.join("factors.bin");
    mmgn::io::write_factors(&factors_path, &report.factors)?;
    let mut summary = serde_json::json!({
        "command": "solve",
        "m": obs.m(),
        "n": obs.n(),
        "observed": obs.len(),
        "model": args.model.as_str(),
        "sigma": args.sigma,
        "rank": config.rank,
        "tol": config.tol,
        "max_outer_iter": config.max_outer_iter,
        "init": init_as_str(config.init),
        "seed": config.seed,
        "stop_reason": report.stop_reason.as_str(),
        "outer_iterations": report.outer_iterations,
        "runtime_seconds": report.runtime_seconds,
        "ll_trace": report.ll_trace,
        "step_sizes": report.step_sizes,
        "inner_iterations": report.inner_iterations,
        "files": { "factors": "factors.bin" },
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let Some(sel) = &selection {
        let rows: Vec<ValidationRow> = sel
            .validation_ll
            .iter()
            .map(|&(rank, log_likelihood)| ValidationRow { rank, log_likelihood })
            .collect();
        summary["chosen_rank"] = serde_json::json!(sel.chosen_rank);
        summary["validation_ll"] = serde_json::to_value(rows)
            .map_err(|e| Error::parse(format!("serializing JSON: {e}")))?;
    }
    write_json(&args.output.join("report.json"), &summary)?;
    println!(
        "solved rank {} ({} outer iterations, stop: {}, {:.2} s) -> {}",
        config.rank,
        report.outer_iterations,
        report.stop_reason,
        report.runtime_seconds,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn read_aligned_ratings(path: &Path, heldout: &ObservationSet) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(format!("cannot open {}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(heldout.len());
    let mut expect = heldout.iter();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::parse(format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::parse(format!(
                "line {line}: expected 3 fields i,j,rating, got {}",
                record.len()
            )));
        }
        let i: u64 = record[0]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad row index: {e}")))?;
        let j: u64 = record[1]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad column index: {e}")))?;
        let rating: f64 = record[2]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad rating: {e}")))?;
        match expect.next() {
            Some((ei, ej, _)) if u64::from(ei) + 1 == i && u64::from(ej) + 1 == j => {
                values.push(rating);
            }
            _ => {
                return Err(Error::parse(format!(
                    "line {line}: ratings file is not aligned with the held-out set"
                )))
            }
        }
    }
    if values.len() != heldout.len() {
        return Err(Error::parse(format!(
            "ratings file has {} rows but the held-out set has {} entries",
            values.len(),
            heldout.len()
        )));
    }
    Ok(values)
}

fn emit(args_output: Option<&PathBuf>, value: &serde_json::Value) -> Result<()> {
    match args_output {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| Error::parse(format!("serializing JSON: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let factors = mmgn::io::read_factors(&args.factors)?;
    if let Some(truth_path) = &args.truth {
        let truth = mmgn::io::read_truth(truth_path)?;
        let model = args.model.build(args.sigma)?;
        let edges = args.groups.as_ref().map(|g| g.0.as_slice());
        let report = metrics::evaluate(&factors, &truth, &model, args.runtime, edges)?;
        let value = serde_json::to_value(&report)
            .map_err(|e| Error::parse(format!("serializing JSON: {e}")))?;
        emit(args.output.as_ref(), &value)?;
    } else {
        let heldout_path = args.heldout.as_ref().expect("clap enforces the target group");
        let heldout = mmgn::io::read_observations_csv(
            heldout_path,
            Some(factors.m()),
            Some(factors.n()),
        )?;
        let ratings = match &args.ratings {
            Some(path) => Some(read_aligned_ratings(path, &heldout)?),
            None => None,
        };
        let accuracy = metrics::sign_accuracy(&factors, &heldout, ratings.as_deref())?;
        let value = serde_json::to_value(&accuracy)
            .map_err(|e| Error::parse(format!("serializing JSON: {e}")))?;
        emit(args.output.as_ref(), &value)?;
    }
    Ok(())
}

// ------------------------------------------------------------------ ingest

fn write_aligned_ratings(path: &Path, obs: &ObservationSet, ratings: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::parse(format!("cannot open {}: {e}", path.display())))?;
    writer
        .write_record(["i", "j", "rating"])
        .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
    for ((i, j, _), &r) in obs.iter().zip(ratings) {
        writer
            .write_record([
                (u64::from(i) + 1).to_string(),
                (u64::from(j) + 1).to_string(),
                r.to_string(),
            ])
            .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
    }
    writer.flush().map_err(|e| Error::parse(format!("csv flush failed: {e}")))?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    fs::create_dir_all(&args.output)?;
    let format = RatingsFormat {
        delimiter: args.delimiter.clone(),
        scale: Some((args.scale.0, args.scale.1)),
    };
    let table = ingest::read_ratings(&args.ratings, &format)?;
    let binarized = ingest::binarize(&table)?;
    let split = ingest::holdout_split(&binarized.obs, args.test_fraction, args.seed)?;
    let heldout_ratings = binarized.ratings_for(&split.heldout)?;

    mmgn::io::write_observations_csv(&args.output.join("train.csv"), &split.train)?;
    mmgn::io::write_observations_csv(&args.output.join("heldout.csv"), &split.heldout)?;
    write_aligned_ratings(
        &args.output.join("heldout_ratings.csv"),
        &split.heldout,
        &heldout_ratings,
    )?;
    let manifest = serde_json::json!({
        "command": "ingest",
        "ratings_file": args.ratings.display().to_string(),
        "delimiter": args.delimiter,
        "scale": [args.scale.0, args.scale.1],
        "users": table.n_users(),
        "items": table.n_items(),
        "ratings": table.len(),
        "average_rating": binarized.average,
        "test_fraction": args.test_fraction,
        "seed": args.seed,
        "train_count": split.train.len(),
        "heldout_count": split.heldout.len(),
        "files": {
            "train": "train.csv",
            "heldout": "heldout.csv",
            "heldout_ratings": "heldout_ratings.csv",
        },
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&args.output.join("ingest.json"), &manifest)?;
    println!(
        "ingested {} ratings from {} users x {} items (average {:.3}) -> {}",
        table.len(),
        table.n_users(),
        table.n_items(),
        binarized.average,
        args.output.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- sweep

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    name: Option<String>,
    generator: GeneratorSpec,
    model: ModelSpec,
    #[serde(default)]
    solver: SolverSpec,
    /// Base observation density (required unless rho is the swept parameter).
    rho: Option<f64>,
    sweep: SweepSpec,
    replicates: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSpec {
    kind: String,
    m: usize,
    n: usize,
    rank_star: usize,
    nu: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    kind: String,
    sigma: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSpec {
    rank: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    init: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpec {
    parameter: String,
    values: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SweepParameter {
    Rho,
    Sigma,
    N,
    RankStar,
    Nu,
}

impl SweepParameter {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(Self::Rho),
            "sigma" => Ok(Self::Sigma),
            "n" => Ok(Self::N),
            "rank_star" => Ok(Self::RankStar),
            "nu" => Ok(Self::Nu),
            other => Err(Error::parse(format!(
                "unknown sweep parameter {other:?} (expected rho, sigma, n, rank_star, or nu)"
            ))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Rho => "rho",
            Self::Sigma => "sigma",
            Self::N => "n",
            Self::RankStar => "rank_star",
            Self::Nu => "nu",
        }
    }
}

/// One grid point's fully resolved instance parameters.
struct PointSettings {
    m: usize,
    n: usize,
    rank_star: usize,
    nu: Option<f64>,
    sigma: f64,
    rho: f64,
    solver_rank: usize,
}

const SWEEP_METRICS: [&str; 5] = [
    "relative_error",
    "hellinger",
    "runtime_seconds",
    "spikiness",
    "full_step_fraction",
];

fn integral(value: f64, what: &str) -> Result<usize> {
    if !value.is_finite() || value < 1.0 || value.fract() != 0.0 {
        return Err(Error::domain(format!("{what} must be a positive integer, got {value}")));
    }
    Ok(value as usize)
}

fn resolve_point(cfg: &SweepConfig, parameter: SweepParameter, value: f64) -> Result<PointSettings> {
    let mut m = cfg.generator.m;
    let mut n = cfg.generator.n;
    let mut rank_star = cfg.generator.rank_star;
    let mut nu = cfg.generator.nu;
    let mut sigma = cfg.model.sigma;
    let mut rho = cfg.rho.unwrap_or(0.8);
    match parameter {
        SweepParameter::Rho => rho = value,
        SweepParameter::Sigma => sigma = value,
        SweepParameter::N => {
            let side = integral(value, "swept n")?;
            m = side;
            n = side;
        }
        SweepParameter::RankStar => rank_star = integral(value, "swept rank_star")?,
        SweepParameter::Nu => nu = Some(value),
    }
    let solver_rank = cfg.solver.rank.unwrap_or(rank_star);
    Ok(PointSettings { m, n, rank_star, nu, sigma, rho, solver_rank })
}

fn generator_kind(cfg: &SweepConfig) -> Result<GeneratorKindArg> {
    match cfg.generator.kind.as_str() {
        "nonspiky" => Ok(GeneratorKindArg::Nonspiky),
        "spiky" => Ok(GeneratorKindArg::Spiky),
        other => Err(Error::parse(format!(
            "unknown generator kind {other:?} (expected nonspiky or spiky)"
        ))),
    }
}

fn model_kind(cfg: &SweepConfig) -> Result<ModelKindArg> {
    match cfg.model.kind.as_str() {
        "probit" => Ok(ModelKindArg::Probit),
        "logistic" => Ok(ModelKindArg::Logistic),
        other => Err(Error::parse(format!(
            "unknown model kind {other:?} (expected probit or logistic)"
        ))),
    }
}

fn run_sweep_job(
    cfg: &SweepConfig,
    kind: GeneratorKindArg,
    model_kind: ModelKindArg,
    parameter: SweepParameter,
    gi: usize,
    value: f64,
    rep: usize,
) -> Result<Vec<(&'static str, f64)>> {
    let p = resolve_point(cfg, parameter, value)?;
    let rep_seed = derive_seed(cfg.seed, &[gi as u64, rep as u64]);
    let truth = match kind {
        GeneratorKindArg::Nonspiky => synth::gen_nonspiky(
            p.m,
            p.n,
            p.rank_star,
            derive_seed(rep_seed, &[SEED_TRUTH]),
        )?,
        GeneratorKindArg::Spiky => {
            let nu = p.nu.ok_or_else(|| {
                Error::domain("the spiky generator needs nu (set generator.nu or sweep it)")
            })?;
            synth::gen_spiky(p.m, p.n, p.rank_star, nu, derive_seed(rep_seed, &[SEED_TRUTH]))?
        }
    };
    let omega = synth::sample_omega(p.m, p.n, p.rho, derive_seed(rep_seed, &[SEED_OMEGA]))?;
    let model = model_kind.build(p.sigma)?;
    let obs = synth::sample_labels(&truth, &omega, &model, derive_seed(rep_seed, &[SEED_LABELS]))?;
    let config = SolverConfig {
        rank: p.solver_rank,
        tol: cfg.solver.tol.unwrap_or(1e-4),
        max_outer_iter: cfg.solver.max_iter.unwrap_or(300),
        init: match &cfg.solver.init {
            Some(s) => s.parse()?,
            None => InitKind::Spectral,
        },
        seed: derive_seed(rep_seed, &[SEED_SOLVER]),
        ..SolverConfig::default()
    };
    let report = solver::solve(&obs, &model, &config)?;
    let relative_error = metrics::relative_error(&report.factors, &truth.theta_star)?;
    let hellinger = metrics::hellinger_factors(&report.factors, &truth.theta_star, &model)?;
    let full_steps = report.step_sizes.iter().filter(|&&a| a == 1.0).count();
    let full_step_fraction = if report.step_sizes.is_empty() {
        1.0
    } else {
        full_steps as f64 / report.step_sizes.len() as f64
    };
    Ok(vec![
        ("relative_error", relative_error),
        ("hellinger", hellinger),
        ("runtime_seconds", report.runtime_seconds),
        ("spikiness", truth.spikiness),
        ("full_step_fraction", full_step_fraction),
    ])
}

struct SweepRow {
    gi: usize,
    value: f64,
    rep: usize,
    seed: u64,
    outcome: Result<Vec<(&'static str, f64)>>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let cfg: SweepConfig = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}: {e}", args.config.display())))?;
    let parameter = SweepParameter::parse(&cfg.sweep.parameter)?;
    let kind = generator_kind(&cfg)?;
    let mk = model_kind(&cfg)?;
    if cfg.sweep.values.is_empty() {
        return Err(Error::domain("sweep.values must not be empty"));
    }
    if cfg.replicates == 0 {
        return Err(Error::domain("replicates must be at least 1"));
    }
    if cfg.rho.is_none() && parameter != SweepParameter::Rho {
        return Err(Error::domain("set a base rho when it is not the swept parameter"));
    }
    // Fail fast on unresolvable grid points (bad integral values etc.).
    for &value in &cfg.sweep.values {
        resolve_point(&cfg, parameter, value)?;
    }
    fs::create_dir_all(&args.output)?;

    let jobs: Vec<(usize, f64, usize)> = cfg
        .sweep
        .values
        .iter()
        .enumerate()
        .flat_map(|(gi, &value)| (0..cfg.replicates).map(move |rep| (gi, value, rep)))
        .collect();
    use rayon::prelude::*;
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(gi, value, rep)| SweepRow {
            gi,
            value,
            rep,
            seed: derive_seed(cfg.seed, &[gi as u64, rep as u64]),
            outcome: run_sweep_job(&cfg, kind, mk, parameter, gi, value, rep),
        })
        .collect();

    // Long-format rows: one line per replicate per grid point per metric.
    let rows_path = args.output.join("rows.csv");
    let mut writer = csv::Writer::from_path(&rows_path)
        .map_err(|e| Error::parse(format!("cannot open {}: {e}", rows_path.display())))?;
    writer
        .write_record(["parameter", "value", "replicate", "seed", "metric", "result"])
        .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
    let mut failures = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(measured) => {
                for (metric, result) in measured {
                    writer
                        .write_record([
                            parameter.as_str().to_owned(),
                            row.value.to_string(),
                            row.rep.to_string(),
                            row.seed.to_string(),
                            (*metric).to_owned(),
                            result.to_string(),
                        ])
                        .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
                }
            }
            Err(err) => {
                failures += 1;
                writer
                    .write_record([
                        parameter.as_str().to_owned(),
                        row.value.to_string(),
                        row.rep.to_string(),
                        row.seed.to_string(),
                        "error".to_owned(),
                        err.to_string(),
                    ])
                    .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
            }
        }
    }
    writer.flush().map_err(|e| Error::parse(format!("csv flush failed: {e}")))?;

    // Medians: exactly one row per (grid point, metric).
    let medians_path = args.output.join("medians.csv");
    let mut med_writer = csv::Writer::from_path(&medians_path)
        .map_err(|e| Error::parse(format!("cannot open {}: {e}", medians_path.display())))?;
    med_writer
        .write_record(["parameter", "value", "metric", "median", "replicates"])
        .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
    let mut median_table: Vec<(f64, &'static str, f64)> = Vec::new();
    for (gi, &value) in cfg.sweep.values.iter().enumerate() {
        for metric in SWEEP_METRICS {
            let mut samples: Vec<f64> = rows
                .iter()
                .filter(|r| r.gi == gi)
                .filter_map(|r| r.outcome.as_ref().ok())
                .flat_map(|measured| {
                    measured.iter().filter(|(name, _)| *name == metric).map(|&(_, v)| v)
                })
                .collect();
            let count = samples.len();
            if let Some(med) = median(&mut samples) {
                median_table.push((value, metric, med));
                med_writer
                    .write_record([
                        parameter.as_str().to_owned(),
                        value.to_string(),
                        metric.to_owned(),
                        med.to_string(),
                        count.to_string(),
                    ])
                    .map_err(|e| Error::parse(format!("csv write failed: {e}")))?;
            }
        }
    }
    med_writer.flush().map_err(|e| Error::parse(format!("csv flush failed: {e}")))?;

    // Log-log slopes for the density and dimension sweeps.
    if matches!(parameter, SweepParameter::Rho | SweepParameter::N) {
        let mut fits = Vec::new();
        for metric in ["relative_error", "hellinger"] {
            let points: Vec<(f64, f64)> = median_table
                .iter()
                .filter(|(_, name, _)| *name == metric)
                .map(|&(value, _, med)| (value, med))
                .collect();
            if let Some((slope, intercept)) = log_log_fit(&points) {
                fits.push(serde_json::json!({
                    "metric": metric,
                    "slope": slope,
                    "intercept": intercept,
                    "points": points.len(),
                }));
            }
        }
        let slopes = serde_json::json!({
            "parameter": parameter.as_str(),
            "fits": fits,
        });
        write_json(&args.output.join("slopes.json"), &slopes)?;
    }

    let manifest = serde_json::json!({
        "command": "sweep",
        "name": cfg.name,
        "config": serde_json::from_str::<serde_json::Value>(&text)
            .map_err(|e| Error::parse(format!("re-reading config: {e}")))?,
        "grid_points": cfg.sweep.values.len(),
        "replicates": cfg.replicates,
        "failures": failures,
        "files": {
            "rows": "rows.csv",
            "medians": "medians.csv",
            "slopes": if matches!(parameter, SweepParameter::Rho | SweepParameter::N) {
                serde_json::Value::String("slopes.json".into())
            } else {
                serde_json::Value::Null
            },
        },
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&args.output.join("sweep_manifest.json"), &manifest)?;
    println!(
        "swept {} over {} points x {} replicates ({} failures) -> {}",
        parameter.as_str(),
        cfg.sweep.values.len(),
        cfg.replicates,
        failures,
        args.output.display()
    );
    Ok(())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}

/// Ordinary least squares on `(ln x, ln y)`; `None` with fewer than two
/// usable points or a degenerate abscissa.
fn log_log_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept))
}
