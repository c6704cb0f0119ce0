//! `msood`: validate → score → eval → report, plus synthetic fixtures.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use msood::container::{resolve_manifest_path, validate_bundle, Bundle, ContainerError};
use msood::fixtures::{gen_fixture, FixtureSpec};
use msood::frameworks::{FrameworkError, FrameworkKind};
use msood::metrics::MetricReport;
use msood::pipeline::{
    evaluate_scores, label_bundle, read_scores, score_bundle, scored_partitions, write_scores, PipelineError, ScoreSet,
    SCORE_INDEX_FILE,
};
use msood::reporting::{
    emit_histograms, emit_scatter, emit_topk, write_histogram_csv, write_json, write_metric_table, write_paired_table,
    write_scatter_csv, write_topk_csv, AccuracySelector, MetricSelector,
};
use msood::scoring::Method;
use msood::vim::Centering;

use crate::config::RunConfig;

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "msood", version, about = "Model-specific OOD detection evaluation")]
struct Cli {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a bundle's manifest and arrays.
    Validate { bundle: Option<PathBuf> },
    /// Score every partition of a bundle with the chosen methods.
    Score(ScoreArgs),
    /// Threshold and evaluate stored scores under the chosen frameworks.
    Eval(EvalArgs),
    /// Emit scatter, histogram or top-k data.
    Report(ReportArgs),
    /// Write a synthetic bundle.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
struct ScoreArgs {
    bundle: Option<PathBuf>,
    /// Comma-separated methods, or `all`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    energy_temperature: Option<f64>,
    #[arg(long)]
    odin_temperature: Option<f64>,
    #[arg(long)]
    vim_dim: Option<usize>,
    #[arg(long)]
    vim_centering: Option<String>,
    /// Score directory (default: <output_dir>/scores).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    bundle: Option<PathBuf>,
    /// Score directory (default: <output_dir>/scores).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    frameworks: Option<Vec<String>>,
    #[arg(long)]
    target_tpr: Option<f64>,
    /// Report directory (default: <output_dir>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportMode {
    Scatter,
    Hist,
    Topk,
}

#[derive(Debug, Args)]
struct ReportArgs {
    mode: ReportMode,
    /// Bundle (hist, topk).
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Score directory (hist, topk; default: <output_dir>/scores).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Method to report (hist, topk); default: every scored method.
    #[arg(long)]
    method: Option<String>,
    /// Report files from `eval` (scatter; default: <output_dir>/reports.json).
    #[arg(long, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Only use reports of this framework (scatter).
    #[arg(long)]
    framework: Option<String>,
    /// Accuracy selector: acc_id or acc_cood:<partition> (scatter).
    #[arg(long, default_value = "acc_id")]
    x: String,
    /// Metric selector, e.g. fpr_id_neg, mean_sood_fpr, sood_fpr:<p>, f1:<p> (scatter).
    #[arg(long, default_value = "fpr_id_neg")]
    y: String,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Output directory (default: <output_dir>/report).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FixtureArgs {
    /// FixtureSpec JSON; without it a small default spec is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bundle directory to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_CONFIG, error: anyhow::anyhow!("{e}") }
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_RUNTIME, error: e.into() }
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        let code = match &e {
            ContainerError::Invalid(_) | ContainerError::Decode { .. } | ContainerError::ManifestParse { .. } => {
                EXIT_VALIDATION
            }
            _ => EXIT_RUNTIME,
        };
        Self { code, error: e.into() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Container(c) => c.into(),
            PipelineError::Framework(FrameworkError::MissingPartition { .. })
            | PipelineError::MissingFeatures { .. }
            | PipelineError::MissingHead
            | PipelineError::MissingTrainFeatures
            | PipelineError::MissingScores { .. }
            | PipelineError::ModelMismatch { .. } => Self::config(e),
            other => Self::runtime(other),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::config)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Validate { bundle } => {
            override_opt(&mut cfg.bundle, bundle);
            cmd_validate(&cfg)
        }
        Command::Score(a) => {
            override_opt(&mut cfg.bundle, a.bundle);
            override_opt(&mut cfg.methods, a.methods);
            override_opt(&mut cfg.energy_temperature, a.energy_temperature);
            override_opt(&mut cfg.odin_temperature, a.odin_temperature);
            override_opt(&mut cfg.vim_principal_dim, a.vim_dim);
            if let Some(c) = a.vim_centering {
                cfg.vim_centering = Some(c.parse::<Centering>().map_err(Failure::config)?);
            }
            override_opt(&mut cfg.output_dir, a.output_dir);
            override_opt(&mut cfg.scores_dir, a.out);
            cmd_score(&cfg)
        }
        Command::Eval(a) => {
            override_opt(&mut cfg.bundle, a.bundle);
            override_opt(&mut cfg.scores_dir, a.scores);
            if let Some(names) = a.frameworks {
                let parsed: Result<Vec<FrameworkKind>, String> = names.iter().map(|n| n.parse()).collect();
                cfg.frameworks = Some(parsed.map_err(Failure::config)?);
            }
            override_opt(&mut cfg.target_tpr, a.target_tpr);
            override_opt(&mut cfg.output_dir, a.output_dir);
            let out = a.out.unwrap_or_else(|| cfg.output_dir());
            cmd_eval(&cfg, &out)
        }
        Command::Report(a) => {
            override_opt(&mut cfg.bundle, a.bundle.clone());
            override_opt(&mut cfg.scores_dir, a.scores.clone());
            override_opt(&mut cfg.bins, a.bins);
            override_opt(&mut cfg.k, a.k);
            override_opt(&mut cfg.output_dir, a.output_dir.clone());
            cmd_report(&cfg, &a)
        }
        Command::Fixture(a) => {
            override_opt(&mut cfg.seed, a.seed);
            if let Some(path) = &a.spec {
                let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                let spec: FixtureSpec = serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("{}: invalid fixture spec: {e}", path.display())))?;
                cfg.fixture = Some(spec);
            }
            let out = a.out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| Failure::config("fixture needs --out"))?;
            cmd_fixture(&cfg, &out)
        }
    }
}

fn override_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

/// A missing manifest is a usage problem rather than a broken bundle.
fn require_manifest(bundle: &Path) -> CmdResult {
    let manifest = resolve_manifest_path(bundle);
    if manifest.is_file() {
        Ok(())
    } else {
        Err(Failure::config(format!("{}: manifest not found", manifest.display())))
    }
}

fn load_scores(cfg: &RunConfig) -> Result<ScoreSet, Failure> {
    let dir = cfg.scores_dir();
    let index = dir.join(SCORE_INDEX_FILE);
    if !index.is_file() {
        return Err(Failure::config(format!("{}: score index not found (run `msood score` first)", index.display())));
    }
    Ok(read_scores(&dir)?)
}

fn load_bundle(cfg: &RunConfig) -> Result<Bundle, Failure> {
    let path = cfg.bundle().map_err(Failure::config)?;
    require_manifest(path)?;
    Ok(Bundle::load(path)?)
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(Failure::runtime)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> CmdResult {
    let file = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(Failure::runtime)?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|()| Ok(w.flush()?))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::runtime)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> CmdResult {
    let path = cfg.bundle().map_err(Failure::config)?;
    require_manifest(path)?;
    let report = validate_bundle(path)?;
    if report.is_valid() {
        println!("{}: valid", path.display());
        Ok(())
    } else {
        print!("{report}");
        Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow::anyhow!("{}: {} violation(s)", path.display(), report.violations.len()),
        })
    }
}

fn cmd_score(cfg: &RunConfig) -> CmdResult {
    let score_cfg = cfg.score_config().map_err(Failure::config)?;
    let bundle = load_bundle(cfg)?;
    let set = score_bundle(&bundle, &score_cfg)?;
    let dir = cfg.scores_dir();
    write_scores(&set, &dir)?;
    println!("{} score tables written to {}", set.tables.len(), dir.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, out: &Path) -> CmdResult {
    let target = cfg.target_tpr().map_err(Failure::config)?;
    let frameworks = cfg.frameworks().map_err(Failure::config)?;
    let bundle = load_bundle(cfg)?;
    let scores = load_scores(cfg)?;
    let eval = evaluate_scores(&bundle, &scores, &frameworks, target)?;
    create_dir(out)?;
    write_file(&out.join("reports.json"), |w| Ok(write_json(&eval.reports, w)?))?;
    write_file(&out.join("metrics.csv"), |w| Ok(write_metric_table(&eval.reports, w)?))?;
    write_file(&out.join("paired.json"), |w| Ok(write_json(&eval.paired, w)?))?;
    write_file(&out.join("paired.csv"), |w| Ok(write_paired_table(&eval.paired, w)?))?;
    println!("{} reports written to {}", eval.reports.len(), out.display());
    Ok(())
}

fn report_methods(requested: Option<&str>, scored: Vec<Method>) -> Result<Vec<Method>, Failure> {
    match requested {
        Some(name) => Ok(vec![name.parse::<Method>().map_err(Failure::config)?]),
        None => Ok(scored),
    }
}

fn cmd_report(cfg: &RunConfig, a: &ReportArgs) -> CmdResult {
    let out = a.out.clone().unwrap_or_else(|| cfg.output_dir().join("report"));
    match a.mode {
        ReportMode::Scatter => {
            if a.bundle.is_some() || a.scores.is_some() || a.method.is_some() {
                return Err(Failure::config(
                    "scatter reads eval reports; --bundle, --scores and --method do not apply",
                ));
            }
            let x: AccuracySelector = a.x.parse().map_err(Failure::config)?;
            let y: MetricSelector = a.y.parse().map_err(Failure::config)?;
            let framework =
                a.framework.as_deref().map(str::parse::<FrameworkKind>).transpose().map_err(Failure::config)?;
            let paths =
                if a.reports.is_empty() { vec![cfg.output_dir().join("reports.json")] } else { a.reports.clone() };
            let mut reports: Vec<MetricReport> = Vec::new();
            for p in &paths {
                let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
                let batch: Vec<MetricReport> = serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("{}: not a report file: {e}", p.display())))?;
                reports.extend(batch.into_iter().filter(|r| framework.is_none_or(|f| r.framework == Some(f))));
            }
            let rows = emit_scatter(&reports, &x, &y).map_err(Failure::runtime)?;
            create_dir(&out)?;
            write_file(&out.join("scatter.csv"), |w| Ok(write_scatter_csv(&rows, &x, &y, w)?))?;
            write_file(&out.join("scatter.json"), |w| Ok(write_json(&rows, w)?))?;
            println!("{} scatter rows written to {}", rows.len(), out.display());
        }
        ReportMode::Hist | ReportMode::Topk => {
            if !a.reports.is_empty() || a.framework.is_some() {
                return Err(Failure::config(
                    "hist and topk read a bundle and its scores; --reports and --framework do not apply",
                ));
            }
            let bins = cfg.bins().map_err(Failure::config)?;
            let k = cfg.k.unwrap_or(10);
            let bundle = load_bundle(cfg)?;
            let scores = load_scores(cfg)?;
            let labelings = label_bundle(&bundle)?;
            create_dir(&out)?;
            for method in report_methods(a.method.as_deref(), scores.methods())? {
                let parts = scored_partitions(&bundle, &labelings, &scores, method)?;
                if a.mode == ReportMode::Hist {
                    let h = emit_histograms(&parts, bins).map_err(Failure::runtime)?;
                    write_file(&out.join(format!("hist_{method}.csv")), |w| Ok(write_histogram_csv(&h, w)?))?;
                    write_file(&out.join(format!("hist_{method}.json")), |w| Ok(write_json(&h, w)?))?;
                } else {
                    let t = emit_topk(&parts, k).map_err(Failure::config)?;
                    write_file(&out.join(format!("topk_{method}.csv")), |w| Ok(write_topk_csv(&t, w)?))?;
                    write_file(&out.join(format!("topk_{method}.json")), |w| Ok(write_json(&t, w)?))?;
                }
            }
            println!("report data written to {}", out.display());
        }
    }
    Ok(())
}

fn cmd_fixture(cfg: &RunConfig, out: &Path) -> CmdResult {
    let mut spec = cfg.fixture.clone().unwrap_or_else(|| FixtureSpec::small(0));
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let bundle = gen_fixture(&spec).map_err(Failure::config)?;
    bundle.write(out)?;
    println!("fixture (seed {}) written to {}", spec.seed, out.display());
    Ok(())
}
