use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use dualspace::anova::{rank_features, Grouping};
use dualspace::cohort::{clean, load_csv, write_csv, CleanPolicy, Comparison, Hemisphere, SchemaMode};
use dualspace::gda::{CovarianceMode, Estimator, PriorMode, ShrinkTarget};
use dualspace::pipeline::{self, cmd_grid, cmd_run, error_json, grid_table, write_json, Mode, RunConfig};
use dualspace::selection::Strategy;
use dualspace::synth::{self, CohortSpec};
use dualspace::{Error, Result};

#[derive(Parser)]
#[command(name = "dualspace", version, about = "ANOVA ranking, GDA dual decision spaces and cross-validated evaluation for morphometric cohorts")]
struct Cli {
    /// Seed for splits, folds and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML or JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV.
    Synth(SynthArgs),
    /// Validate and clean an input table.
    Ingest(RunArgs),
    /// ANOVA ranking of every feature per hemisphere.
    Rank(RankArgs),
    /// Feature selection only; writes trajectory.json.
    Select(RunArgs),
    /// Full pipeline for one comparison.
    Run(RunArgs),
    /// All ranking x classifier x comparison cells.
    Grid(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Start from the paper-scale preset (190/305/133 subjects, 9 zero-corrupted).
    #[arg(long)]
    paper_scale: bool,
    /// Effect multiplier for the paper-scale preset.
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    /// Right-hemisphere effects relative to the left, for the preset.
    #[arg(long, default_value_t = synth::DEFAULT_RIGHT_SCALE)]
    right_scale: f64,
    /// Subjects per class as CN,MCI,AD.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    n_per_class: Option<Vec<usize>>,
}

fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args, Default)]
struct RunArgs {
    /// Input cohort CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// strict_175 or infer.
    #[arg(long, value_parser = parse_name::<SchemaMode>)]
    schema: Option<SchemaMode>,
    /// Treat values with |x| <= tolerance as the zero sentinel.
    #[arg(long)]
    zero_tolerance: Option<f64>,
    /// Keep subjects with zero values.
    #[arg(long)]
    keep_all: bool,
    /// cn-mci, cn-ad or mci-ad.
    #[arg(long, value_parser = parse_name::<Comparison>)]
    comparison: Option<Comparison>,
    /// local or global.
    #[arg(long, value_parser = parse_name::<Mode>)]
    ranking: Option<Mode>,
    /// local or global.
    #[arg(long, value_parser = parse_name::<Mode>)]
    classifier: Option<Mode>,
    /// Significance level for the ANOVA filter.
    #[arg(long)]
    los: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Held-out fraction per class.
    #[arg(long)]
    holdout: Option<f64>,
    /// shared or per_class.
    #[arg(long, value_parser = parse_name::<CovarianceMode>)]
    covariance: Option<CovarianceMode>,
    #[arg(long)]
    shrinkage: Option<f64>,
    /// diagonal or scaled_identity.
    #[arg(long, value_parser = parse_name::<ShrinkTarget>)]
    shrink_target: Option<ShrinkTarget>,
    /// empirical or uniform.
    #[arg(long, value_parser = parse_name::<PriorMode>)]
    priors: Option<PriorMode>,
    /// maximum_likelihood or unbiased.
    #[arg(long, value_parser = parse_name::<Estimator>)]
    estimator: Option<Estimator>,
    /// greedy_keep_if_improves or prefix_argmax.
    #[arg(long, value_parser = parse_name::<Strategy>)]
    strategy: Option<Strategy>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    run: RunArgs,
    /// all, cn-mci, cn-ad or mci-ad.
    #[arg(long, default_value = "all")]
    grouping: Grouping,
    /// left, right or both.
    #[arg(long, default_value = "both")]
    hemisphere: String,
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunArgs {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        set!(c.schema_mode, self.schema);
        set!(c.comparison, self.comparison);
        set!(c.ranking, self.ranking);
        set!(c.classifier, self.classifier);
        set!(c.los, self.los);
        set!(c.folds, self.folds);
        set!(c.holdout, self.holdout);
        set!(c.gda.covariance_mode, self.covariance);
        set!(c.gda.shrinkage, self.shrinkage);
        set!(c.gda.shrink_target, self.shrink_target);
        set!(c.gda.prior_mode, self.priors);
        set!(c.gda.estimator, self.estimator);
        set!(c.strategy, self.strategy);
        if self.patience.is_some() {
            c.patience = self.patience;
        }
        if let Some(t) = self.zero_tolerance {
            c.clean = CleanPolicy::DropZeroSubjects { tolerance: t };
        }
        if self.keep_all {
            c.clean = CleanPolicy::KeepAll;
        }
    }
}

fn run_config(cli: &Cli, args: &RunArgs) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    args.apply(&mut c);
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    c.validate()?;
    Ok(c)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn synth_cmd(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let mut spec: CohortSpec = match (&cli.config, args.paper_scale) {
        (Some(p), _) => read_config(p)?,
        (None, true) => CohortSpec::paper_scale_lateralized(seed, args.strength, args.right_scale),
        (None, false) => CohortSpec::default(),
    };
    if cli.seed.is_some() {
        spec.seed = seed;
    }
    if let Some(n) = &args.n_per_class {
        spec.n_per_class = [n[0], n[1], n[2]];
    }
    let table = synth::generate(&spec)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    ensure_dir(&out)?;
    let csv = out.join("cohort.csv");
    write_csv(&table, &csv)?;
    synth::write_meta(&spec, out.join("cohort_meta.json"))?;
    print_json(&serde_json::json!({
        "csv": csv.display().to_string(),
        "subjects": table.len(),
        "counts": table.class_counts(),
    }));
    Ok(())
}

fn ingest_cmd(config: &RunConfig) -> Result<()> {
    let input = config.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
    let table = load_csv(input, config.schema_mode)?;
    let (cleaned, removed) = clean(&table, config.clean)?;
    ensure_dir(&config.out)?;
    write_csv(&cleaned, config.out.join("cleaned.csv"))?;
    let log_path = config.out.join("cleaning_log.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| io_error(&log_path, e))?;
    for entry in &cleaned.provenance.cleaning_log {
        let line = serde_json::to_string(entry)?;
        writeln!(log, "{line}").map_err(|e| io_error(&log_path, e))?;
    }
    print_json(&serde_json::json!({
        "loaded": table.len(),
        "removed": removed,
        "counts_before": table.class_counts(),
        "counts_after": cleaned.class_counts(),
    }));
    Ok(())
}

fn rank_cmd(config: &RunConfig, args: &RankArgs) -> Result<()> {
    let input = config.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
    let (table, _) = clean(&load_csv(input, config.schema_mode)?, config.clean)?;
    let hemis: Vec<Hemisphere> = match args.hemisphere.as_str() {
        "left" => vec![Hemisphere::Left],
        "right" => vec![Hemisphere::Right],
        "both" => Hemisphere::BOTH.to_vec(),
        other => return Err(Error::Config(format!("unknown hemisphere {other:?}"))),
    };
    ensure_dir(&config.out)?;
    for h in hemis {
        let ranked = rank_features(&table, h, args.grouping, config.los)?;
        let name = format!("rank_{}.json", if h == Hemisphere::Left { "left" } else { "right" });
        write_json(config.out.join(&name), &ranked.to_report())?;
        println!("{name}: {} significant of {}", ranked.significant().len(), ranked.scores.len());
    }
    Ok(())
}

fn select_cmd(config: &RunConfig) -> Result<()> {
    let prepared = pipeline::prepare(config)?;
    let (pair_train, ranked) = pipeline::rank_both(&prepared, config)?;
    let trajectories = pipeline::select(&pair_train, &ranked, config)?;
    ensure_dir(&config.out)?;
    let file = pipeline::TrajectoryFile {
        comparison: config.comparison,
        ranking_mode: config.ranking,
        classifier_mode: config.classifier,
        seed: config.seed,
        trajectories,
    };
    write_json(config.out.join(pipeline::TRAJECTORY_FILE), &file)?;
    for t in &file.trajectories {
        println!(
            "{:?}: left {} right {} features, cv f1 {:.4}",
            t.scope,
            t.left_subset.len(),
            t.right_subset.len(),
            t.best_f1
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth_cmd(cli, a),
        Command::Ingest(a) => ingest_cmd(&run_config(cli, a)?),
        Command::Rank(a) => rank_cmd(&run_config(cli, &a.run)?, a),
        Command::Select(a) => select_cmd(&run_config(cli, a)?),
        Command::Run(a) => {
            let out = cmd_run(&run_config(cli, a)?)?;
            let m = &out.report.cv.metrics;
            let h = &out.report.holdout.metrics;
            println!(
                "cv: f1 {:.4} acc {:.4} sen {:.4} spe {:.4} | holdout: f1 {:.4} acc {:.4} sen {:.4} spe {:.4}",
                m.f1, m.accuracy, m.sensitivity, m.specificity, h.f1, h.accuracy, h.sensitivity, h.specificity
            );
            Ok(())
        }
        Command::Grid(a) => {
            let grid = cmd_grid(&run_config(cli, a)?)?;
            print!("{}", grid_table(&grid));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
