use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sra_core::allocation::{allocate_optimal, allocate_optimal_n, tradeoff_curve, AllocationProblem};
use sra_core::conllu::{parse_conllu, ParseReport};
use sra_core::format::sig17;
use sra_core::io;
use sra_core::memory_model::{
    error_derivative, expected_error, gaussian_surprisal, monotonicity_regime, monte_carlo_error,
    EncodingPrecision, GaussianBelief, MonotonicityRegime, RNG_ALGORITHM,
};
use sra_core::pipeline::{
    apply_exclusions, attach_frequency, attach_surprisal, build_rt_table, extract_dependencies,
    filter_relation, merge_corpus, ExclusionPolicy, ExclusionReport, FrequencyReport, Region,
    RelationClass, RtOptions, RtReport, DEFAULT_MAX_SURPRISAL_BITS, DEFAULT_MIN_SENTENCE_LEN,
    DEFAULT_RT_MAX_MS, DEFAULT_RT_MIN_MS,
};
use sra_core::stats::{run_study1_regression, run_study2_regression, LengthMeasure, Study1Options, Study2Options};

mod config;

use config::{pick, switch, Config, LengthArg, RegionArg, SubsetArg};

const DEFAULT_SEED: u64 = 20240601;
const DEFAULT_SAMPLES: usize = 100_000;
const DEFAULT_FREQUENCY_FALLBACK: f64 = -9.0;

/// Noisy-memory laboratory and dependency-locality corpus pipeline.
///
/// Reals in CSV output are written with 17 significant digits.
#[derive(Parser)]
#[command(name = "sra", version)]
struct Cli {
    /// TOML file with defaults for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo check of the closed-form expected error over a grid.
    Simulate(SimulateArgs),
    /// Optimal split of a precision budget between items.
    Allocate(AllocateArgs),
    /// Expected error of one input as a function of encoding precision.
    Tradeoff(TradeoffArgs),
    /// Dependency records and an exclusion report from a treebank.
    AnalyzeCorpus(CorpusArgs),
    /// Reading-time rows for the critical and spillover regions.
    RtTable(RtTableArgs),
    /// Fixed-effects regression on records or reading-time rows.
    Regress(RegressArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be finite and > 0, got {v}"))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo draws per cell.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    prior_mean: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0, 10.0])]
    tau0: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0, 10.0])]
    tau_w: Vec<f64>,
    /// Distances |w - w0|.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0, 4.0])]
    distance: Vec<f64>,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    prior_mean: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    tau0: f64,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    w1: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    w2: f64,
    /// Any number of items; replaces --w1/--w2.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    words: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    budget: f64,
    #[arg(long, default_value_t = 1e-12, value_parser = positive)]
    tol: f64,
}

#[derive(Args)]
struct TradeoffArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    w: f64,
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    tau_max: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
}

#[derive(Args)]
struct CorpusInput {
    /// CoNLL-U treebank.
    #[arg(long)]
    input: PathBuf,
    /// TSV: doc_id, sent_id, token_index, form, surprisal_bits.
    #[arg(long)]
    surprisal: PathBuf,
    /// TSV: form, log_frequency.
    #[arg(long)]
    frequency: Option<PathBuf>,
    /// Log frequency given to forms missing from the lexicon.
    #[arg(long, allow_negative_numbers = true)]
    frequency_fallback: Option<f64>,
    #[arg(long)]
    max_surprisal_bits: Option<f64>,
    #[arg(long)]
    min_sentence_len: Option<usize>,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// Dependency records CSV.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; defaults to the output path with its extension replaced by `report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
}

#[derive(Args)]
struct RtTableArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// TSV: participant, sent_id, token_index, rt_ms.
    #[arg(long)]
    rt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
    /// Keep one region only.
    #[arg(long, value_enum)]
    region: Option<RegionArg>,
    #[arg(long)]
    rt_min_ms: Option<f64>,
    #[arg(long)]
    rt_max_ms: Option<f64>,
}

#[derive(Args)]
struct RegressArgs {
    /// 1: dependency length; 2: log reading time.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    study: u8,
    /// Records CSV (study 1) or reading-time CSV (study 2).
    #[arg(long)]
    input: PathBuf,
    /// Fit JSON.
    #[arg(long)]
    out: PathBuf,
    /// Coefficient CSV; defaults to the output path with its extension replaced by `coefficients.csv`.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    #[arg(long, value_enum)]
    length_measure: Option<LengthArg>,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
    #[arg(long, value_enum)]
    region: Option<RegionArg>,
    #[arg(long)]
    dep_type_dummies: bool,
    #[arg(long)]
    participant_dummies: bool,
    /// Drop records whose antecedent frequency is the fallback value.
    #[arg(long)]
    strict_frequency: bool,
}

fn check_input(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "input file {} does not exist", path.display());
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    ensure!(!path.is_dir(), "output {} is a directory", path.display());
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure!(parent.is_dir(), "output directory {} does not exist", parent.display());
    Ok(())
}

fn sidecar(out: &Path, explicit: Option<&PathBuf>, suffix: &str) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| out.with_extension(suffix))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn subset_class(s: SubsetArg) -> Option<RelationClass> {
    match s {
        SubsetArg::All => None,
        SubsetArg::Subject => Some(RelationClass::Subject),
        SubsetArg::Object => Some(RelationClass::Object),
    }
}

fn region(r: RegionArg) -> Region {
    match r {
        RegionArg::Critical => Region::Critical,
        RegionArg::Spillover => Region::Spillover,
    }
}

fn measure(m: LengthArg) -> LengthMeasure {
    match m {
        LengthArg::Words => LengthMeasure::Orthographic,
        LengthArg::Bits => LengthMeasure::InfoTheoretic,
    }
}

fn csv_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    rng: &'a str,
    seed: u64,
    cell_seed: &'a str,
    samples: usize,
    prior_mean: f64,
}

fn simulate(args: &SimulateArgs, cfg: &Config) -> Result<()> {
    let meta_path = sidecar(&args.out, None, "meta.json");
    check_output(&args.out)?;
    check_output(&meta_path)?;
    let seed = pick(args.seed, cfg.seed, DEFAULT_SEED);
    let samples = pick(args.samples, cfg.samples, DEFAULT_SAMPLES);
    ensure!(samples >= 2, "--samples must be at least 2");
    for &t in &args.tau0 {
        GaussianBelief::new(args.prior_mean, t)?;
    }
    for &t in &args.tau_w {
        EncodingPrecision::new(t)?;
    }

    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &tau0 in &args.tau0 {
        let prior = GaussianBelief::new(args.prior_mean, tau0)?;
        for &tw in &args.tau_w {
            let tau = EncodingPrecision::new(tw)?;
            for &d in &args.distance {
                let w = args.prior_mean + d;
                let analytic = expected_error(&prior, tau, w);
                let (mc, se) = if tw > 0.0 {
                    let est = monte_carlo_error(&prior, tau, w, samples, seed.wrapping_add(cell))?;
                    (sig17(est.estimate), sig17(est.std_error))
                } else {
                    ("NA".to_string(), "NA".to_string())
                };
                rows.push(vec![sig17(tau0), sig17(tw), sig17(d), sig17(analytic), mc, se]);
                cell += 1;
            }
        }
    }
    let bytes = csv_rows(&["tau0", "tau_w", "distance", "analytic", "mc_estimate", "mc_se"], rows)?;
    write(&args.out, bytes)?;
    let meta = SimulateMeta {
        rng: RNG_ALGORITHM,
        seed,
        cell_seed: "seed + cell index in row order (wrapping)",
        samples,
        prior_mean: args.prior_mean,
    };
    write(&meta_path, json(&meta)?)
}

fn allocate(args: &AllocateArgs, _cfg: &Config) -> Result<()> {
    check_output(&args.out)?;
    let prior = GaussianBelief::new(args.prior.prior_mean, args.prior.tau0)?;
    let bits = |w: f64| sig17(gaussian_surprisal(&prior, w).bits());
    let bytes = if let Some(words) = &args.words {
        let taus = allocate_optimal_n(&prior, words, args.budget, args.tol)?;
        let rows = words.iter().zip(&taus).enumerate().map(|(i, (&w, &t))| {
            let err = expected_error(&prior, EncodingPrecision::new(t.max(0.0)).expect("finite"), w);
            vec![(i + 1).to_string(), sig17(w), bits(w), sig17(t), sig17(err)]
        });
        csv_rows(&["item", "w", "surprisal_bits", "tau", "error"], rows)?
    } else {
        let problem = AllocationProblem::new(prior, args.w1, args.w2, args.budget)?;
        let r = allocate_optimal(&problem, args.tol)?;
        let row = vec![
            sig17(args.prior.prior_mean),
            sig17(args.prior.tau0),
            sig17(args.w1),
            sig17(args.w2),
            sig17(args.budget),
            bits(args.w1),
            bits(args.w2),
            sig17(r.tau1),
            sig17(r.tau2),
            sig17(r.total_error),
            format!("{:?}", r.situation),
            r.at_boundary.to_string(),
        ];
        csv_rows(
            &[
                "prior_mean",
                "tau0",
                "w1",
                "w2",
                "budget_c",
                "surprisal1_bits",
                "surprisal2_bits",
                "tau1",
                "tau2",
                "total_error",
                "situation",
                "at_boundary",
            ],
            [row],
        )?
    };
    write(&args.out, bytes)
}

fn tradeoff(args: &TradeoffArgs, _cfg: &Config) -> Result<()> {
    check_output(&args.out)?;
    ensure!(args.points >= 2, "--points must be at least 2");
    let prior = GaussianBelief::new(args.prior.prior_mean, args.prior.tau0)?;
    let last = args.points - 1;
    let grid: Vec<f64> = (0..args.points)
        .map(|i| if i == last { args.tau_max } else { args.tau_max * i as f64 / last as f64 })
        .collect();
    let curve = tradeoff_curve(&prior, args.w, &grid)?;
    let regime = match monotonicity_regime(&prior, args.w) {
        MonotonicityRegime::MonotoneDecreasing => "MonotoneDecreasing",
        MonotonicityRegime::NonMonotone => "NonMonotone",
    };
    let rows = curve.iter().map(|p| {
        let g = error_derivative(&prior, EncodingPrecision::new(p.tau).expect("grid is valid"), args.w);
        vec![sig17(p.tau), sig17(p.error), sig17(g), regime.to_string()]
    });
    write(&args.out, csv_rows(&["tau", "error", "derivative", "regime"], rows)?)
}

#[derive(Serialize)]
struct CorpusReport {
    parse: ParseReport,
    frequency: Option<FrequencyReport>,
    exclusion: ExclusionReport,
    policy: ExclusionPolicy,
    dependencies: usize,
    subset: String,
}

struct PreparedCorpus {
    corpus: sra_core::conllu::Corpus,
    parse: ParseReport,
    frequency: Option<FrequencyReport>,
    exclusion: ExclusionReport,
    policy: ExclusionPolicy,
}

fn check_corpus_inputs(c: &CorpusInput) -> Result<()> {
    check_input(&c.input)?;
    check_input(&c.surprisal)?;
    if let Some(f) = &c.frequency {
        check_input(f)?;
    }
    Ok(())
}

fn prepare_corpus(c: &CorpusInput, cfg: &Config) -> Result<PreparedCorpus> {
    let bytes = fs::read(&c.input).with_context(|| format!("reading {}", c.input.display()))?;
    let parsed = parse_conllu(&bytes).with_context(|| format!("parsing {}", c.input.display()))?;
    let table = io::read_surprisal_table(
        fs::File::open(&c.surprisal).with_context(|| format!("opening {}", c.surprisal.display()))?,
    )
    .with_context(|| format!("reading {}", c.surprisal.display()))?;
    let corpus = attach_surprisal(parsed.corpus, &table)
        .with_context(|| format!("aligning {} with {}", c.surprisal.display(), c.input.display()))?;
    let (corpus, frequency) = match &c.frequency {
        Some(path) => {
            let lex = io::read_frequency_lexicon(fs::File::open(path)?)
                .with_context(|| format!("reading {}", path.display()))?;
            let fallback = pick(c.frequency_fallback, cfg.frequency_fallback, DEFAULT_FREQUENCY_FALLBACK);
            let (corpus, report) = attach_frequency(corpus, &lex, fallback);
            (corpus, Some(report))
        }
        None => (corpus, None),
    };
    let policy = ExclusionPolicy {
        max_surprisal_bits: pick(c.max_surprisal_bits, cfg.max_surprisal_bits, DEFAULT_MAX_SURPRISAL_BITS),
        min_sentence_len: pick(c.min_sentence_len, cfg.min_sentence_len, DEFAULT_MIN_SENTENCE_LEN),
    };
    let (corpus, exclusion) = apply_exclusions(merge_corpus(corpus), &policy)?;
    Ok(PreparedCorpus {
        corpus,
        parse: parsed.report,
        frequency,
        exclusion,
        policy,
    })
}

fn analyze_corpus(args: &CorpusArgs, cfg: &Config) -> Result<()> {
    let report_path = sidecar(&args.out, args.report.as_ref(), "report.json");
    check_corpus_inputs(&args.corpus)?;
    check_output(&args.out)?;
    check_output(&report_path)?;
    let prep = prepare_corpus(&args.corpus, cfg)?;
    let subset = pick(args.subset, cfg.subset, SubsetArg::All);
    let records = filter_relation(&extract_dependencies(&prep.corpus)?, subset_class(subset));
    let mut buf = Vec::new();
    io::write_dependency_records(&records, &mut buf)?;
    write(&args.out, buf)?;
    let report = CorpusReport {
        parse: prep.parse,
        frequency: prep.frequency,
        exclusion: prep.exclusion,
        policy: prep.policy,
        dependencies: records.len(),
        subset: format!("{subset:?}").to_lowercase(),
    };
    write(&report_path, json(&report)?)
}

#[derive(Serialize)]
struct RtTableReport {
    exclusion: ExclusionReport,
    reading_times: RtReport,
    rt_min_ms: f64,
    rt_max_ms: f64,
}

fn rt_table(args: &RtTableArgs, cfg: &Config) -> Result<()> {
    let report_path = sidecar(&args.out, args.report.as_ref(), "report.json");
    check_corpus_inputs(&args.corpus)?;
    check_input(&args.rt)?;
    check_output(&args.out)?;
    check_output(&report_path)?;
    let opts = RtOptions {
        rt_min_ms: pick(args.rt_min_ms, cfg.rt_min_ms, DEFAULT_RT_MIN_MS),
        rt_max_ms: pick(args.rt_max_ms, cfg.rt_max_ms, DEFAULT_RT_MAX_MS),
        include_spillover: args.region.or(cfg.region) != Some(RegionArg::Critical),
    };
    ensure!(opts.rt_min_ms < opts.rt_max_ms, "reading-time bounds are empty");
    let prep = prepare_corpus(&args.corpus, cfg)?;
    let subset = pick(args.subset, cfg.subset, SubsetArg::All);
    let deps = filter_relation(&extract_dependencies(&prep.corpus)?, subset_class(subset));
    let rt = io::read_reading_times(fs::File::open(&args.rt)?)
        .with_context(|| format!("reading {}", args.rt.display()))?;
    let (mut rows, report) = build_rt_table(&prep.corpus, &deps, &rt, &opts)
        .with_context(|| format!("aligning {} with {}", args.rt.display(), args.corpus.input.display()))?;
    if let Some(r) = args.region.or(cfg.region) {
        let keep = region(r);
        rows.retain(|row| row.region == keep);
    }
    let mut buf = Vec::new();
    io::write_rt_rows(&rows, &mut buf)?;
    write(&args.out, buf)?;
    let report = RtTableReport {
        exclusion: prep.exclusion,
        reading_times: report,
        rt_min_ms: opts.rt_min_ms,
        rt_max_ms: opts.rt_max_ms,
    };
    write(&report_path, json(&report)?)
}

fn regress(args: &RegressArgs, cfg: &Config) -> Result<()> {
    let coef_path = sidecar(&args.out, args.coefficients.as_ref(), "coefficients.csv");
    check_input(&args.input)?;
    check_output(&args.out)?;
    check_output(&coef_path)?;
    let length_measure = measure(pick(args.length_measure, cfg.length_measure, LengthArg::Bits));
    let subset = subset_class(pick(args.subset, cfg.subset, SubsetArg::All));
    let dep_type_dummies = switch(args.dep_type_dummies, cfg.dep_type_dummies);
    let file = fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let fit = match args.study {
        1 => {
            if args.region.is_some() || args.participant_dummies {
                bail!("--region and --participant-dummies apply to --study 2 only");
            }
            let records = io::read_dependency_records(file)
                .with_context(|| format!("reading {}", args.input.display()))?;
            let opts = Study1Options {
                length_measure,
                subset,
                dep_type_dummies,
                strict_frequency: switch(args.strict_frequency, cfg.strict_frequency),
            };
            run_study1_regression(&records, &opts)?
        }
        _ => {
            let rows = io::read_rt_rows(file).with_context(|| format!("reading {}", args.input.display()))?;
            let opts = Study2Options {
                region: region(pick(args.region, cfg.region, RegionArg::Critical)),
                length_measure,
                subset,
                participant_dummies: switch(args.participant_dummies, cfg.participant_dummies),
                dep_type_dummies,
            };
            run_study2_regression(&rows, &opts)?
        }
    };
    let mut coef = Vec::new();
    fit.write_csv(&mut coef)?;
    write(&args.out, json(&fit)?)?;
    write(&coef_path, coef)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cfg),
        Command::Allocate(a) => allocate(a, &cfg),
        Command::Tradeoff(a) => tradeoff(a, &cfg),
        Command::AnalyzeCorpus(a) => analyze_corpus(a, &cfg),
        Command::RtTable(a) => rt_table(a, &cfg),
        Command::Regress(a) => regress(a, &cfg),
    }
}
