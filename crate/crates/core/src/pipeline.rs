//! End-to-end runs and the ranking x classifier x comparison grid.
//!
//! Order is fixed: load, clean, stratified holdout split of the full cohort,
//! then ranking and selection on the training part only. The split is made
//! once on all three diagnoses and then restricted to the comparison, which
//! gives the same partition as splitting the pair directly.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anova::{rank_features, Grouping, RankedFeatureList, DEFAULT_LOS};
use crate::cohort::{
    clean, load_csv, split_holdout, subset_pair, CleanPolicy, Comparison, Diagnosis,
    FeatureTable, Hemisphere, SchemaMode,
};
use crate::dual::{fit_dual, DualSpaceModel};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, evaluate_holdout, CvResult, DualRecipe, FoldAssignment, HoldoutResult,
    DEFAULT_FOLDS,
};
use crate::gda::GdaConfig;
use crate::parallel::par_map;
use crate::selection::{select_global, select_local, SelectionConfig, SelectionTrajectory, Strategy};

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const MODEL_FILE: &str = "model.json";
pub const GRID_FILE: &str = "grid.json";
pub const GRID_TABLE_FILE: &str = "grid.txt";

/// Local: per-comparison ranking or per-hemisphere selection.
/// Global: three-group ranking or combined dual-space selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Local,
    Global,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Local => "local",
            Mode::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub schema_mode: SchemaMode,
    pub clean: CleanPolicy,
    pub comparison: Comparison,
    pub ranking: Mode,
    pub classifier: Mode,
    pub los: f64,
    pub folds: usize,
    pub holdout: f64,
    pub gda: GdaConfig,
    pub strategy: Strategy,
    pub patience: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            schema_mode: SchemaMode::Infer,
            clean: CleanPolicy::default(),
            comparison: Comparison::CnVsMci,
            ranking: Mode::Global,
            classifier: Mode::Global,
            los: DEFAULT_LOS,
            folds: DEFAULT_FOLDS,
            holdout: 0.2,
            gda: GdaConfig::default(),
            strategy: Strategy::GreedyKeepIfImproves,
            patience: None,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            strategy: self.strategy,
            patience: self.patience,
            folds: self.folds,
            seed: self.seed,
            gda: self.gda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gda.validate()?;
        if !(self.los > 0.0 && self.los <= 1.0) {
            return Err(Error::Config(format!("los must lie in (0, 1], got {}", self.los)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!("holdout must lie in (0, 1), got {}", self.holdout)));
        }
        Ok(())
    }
}

/// A cleaned cohort split once into training and held-out parts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: Option<String>,
    pub loaded: usize,
    pub removed: Vec<String>,
    pub train: FeatureTable,
    pub test: FeatureTable,
}

pub fn prepare_table(table: &FeatureTable, config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (cleaned, removed) = clean(table, config.clean)?;
    let (train, test) = split_holdout(&cleaned, config.holdout, config.seed)?;
    Ok(Prepared {
        source: table.provenance.source.clone(),
        loaded: table.len(),
        removed,
        train,
        test,
    })
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let table = load_csv(input, config.schema_mode)?;
    prepare_table(&table, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsets {
    pub left: Vec<FeatureRef>,
    pub right: Vec<FeatureRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: Option<String>,
    pub loaded: usize,
    pub removed: Vec<String>,
    pub train_counts: BTreeMap<Diagnosis, usize>,
    pub test_counts: BTreeMap<Diagnosis, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificantCounts {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub comparison: Comparison,
    pub ranking_mode: Mode,
    pub classifier_mode: Mode,
    pub seed: u64,
    pub config: RunConfig,
    pub data: DataSummary,
    pub significant: SignificantCounts,
    pub cv: CvResult,
    pub holdout: HoldoutResult,
    pub subsets: Subsets,
    pub trajectory_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub comparison: Comparison,
    pub ranking_mode: Mode,
    pub classifier_mode: Mode,
    pub seed: u64,
    pub trajectories: Vec<SelectionTrajectory>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub trajectory: TrajectoryFile,
    pub model: DualSpaceModel,
}

/// Ranked lists (left, right) for the configured ranking mode.
pub fn rank_both(
    prepared: &Prepared,
    config: &RunConfig,
) -> Result<(FeatureTable, [RankedFeatureList; 2])> {
    let pair_train = subset_pair(&prepared.train, config.comparison)?;
    let (table, grouping) = match config.ranking {
        Mode::Local => (&pair_train, Grouping::Pairwise(config.comparison)),
        Mode::Global => (&prepared.train, Grouping::AllThree),
    };
    let left = rank_features(table, Hemisphere::Left, grouping, config.los)?;
    let right = rank_features(table, Hemisphere::Right, grouping, config.los)?;
    Ok((pair_train, [left, right]))
}

/// Selection per the configured classifier mode. Local selection tolerates a
/// hemisphere without significant features as long as the other has some.
pub fn select(
    pair_train: &FeatureTable,
    ranked: &[RankedFeatureList; 2],
    config: &RunConfig,
) -> Result<Vec<SelectionTrajectory>> {
    let sel = config.selection();
    match config.classifier {
        Mode::Global => Ok(vec![select_global(pair_train, &ranked[0], &ranked[1], &sel)?]),
        Mode::Local => {
            let mut out = Vec::new();
            for (hemi, r) in Hemisphere::BOTH.into_iter().zip(ranked) {
                match select_local(pair_train, hemi, r, &sel) {
                    Ok(t) => out.push(t),
                    Err(Error::NoSignificantFeatures) => {}
                    Err(e) => return Err(e),
                }
            }
            if out.is_empty() {
                return Err(Error::NoSignificantFeatures);
            }
            Ok(out)
        }
    }
}

fn final_subsets(trajectories: &[SelectionTrajectory]) -> [Vec<usize>; 2] {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for t in trajectories {
        left.extend_from_slice(&t.left_subset);
        right.extend_from_slice(&t.right_subset);
    }
    [left, right]
}

pub fn run_prepared(prepared: &Prepared, config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (pair_train, ranked) = rank_both(prepared, config)?;
    let pair_test = subset_pair(&prepared.test, config.comparison)?;
    let trajectories = select(&pair_train, &ranked, config)?;
    let [left, right] = final_subsets(&trajectories);

    let model = fit_dual(&pair_train, &left, &right, &config.gda)?;
    let folds = FoldAssignment::stratified(&pair_train, config.folds, config.seed)?;
    let recipe = DualRecipe {
        left_subset: left.clone(),
        right_subset: right.clone(),
        gda: config.gda,
    };
    let cv = cross_validate(&pair_train, &recipe, &folds)?;
    let holdout = evaluate_holdout(&model, &pair_test)?;

    let schema = pair_train.schema();
    let refs = |hemi, idx: &[usize]| {
        idx.iter()
            .map(|&i| FeatureRef {
                index: i,
                name: schema.column_name(hemi, i),
            })
            .collect()
    };
    let counts = |t: &FeatureTable| t.class_counts();
    let report = Report {
        comparison: config.comparison,
        ranking_mode: config.ranking,
        classifier_mode: config.classifier,
        seed: config.seed,
        config: config.clone(),
        data: DataSummary {
            source: prepared.source.clone(),
            loaded: prepared.loaded,
            removed: prepared.removed.clone(),
            train_counts: counts(&pair_train),
            test_counts: counts(&pair_test),
        },
        significant: SignificantCounts {
            left: ranked[0].significant().len(),
            right: ranked[1].significant().len(),
        },
        cv,
        holdout,
        subsets: Subsets {
            left: refs(Hemisphere::Left, &left),
            right: refs(Hemisphere::Right, &right),
        },
        trajectory_ref: TRAJECTORY_FILE.to_string(),
    };
    let trajectory = TrajectoryFile {
        comparison: config.comparison,
        ranking_mode: config.ranking,
        classifier_mode: config.classifier,
        seed: config.seed,
        trajectories,
    };
    Ok(RunOutput {
        report,
        trajectory,
        model,
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_run(out: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(out.join(REPORT_FILE), &output.report)?;
    write_json(out.join(TRAJECTORY_FILE), &output.trajectory)?;
    write_json(out.join(MODEL_FILE), &output.model)
}

/// Loads, runs and writes `report.json`, `trajectory.json` and `model.json`.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutput> {
    let prepared = prepare(config)?;
    let output = run_prepared(&prepared, config)?;
    write_run(&config.out, &output)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub f1: f64,
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub comparison: Comparison,
    pub ranking: Mode,
    pub classifier: Mode,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
    pub cv: Option<CellMetrics>,
    pub holdout: Option<CellMetrics>,
    pub left_size: Option<usize>,
    pub right_size: Option<usize>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub seed: u64,
    pub config: RunConfig,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn cell(&self, comparison: Comparison, ranking: Mode, classifier: Mode) -> Option<&GridCell> {
        self.cells.iter().find(|c| {
            c.comparison == comparison && c.ranking == ranking && c.classifier == classifier
        })
    }
}

/// Machine-readable error payload, also used by the CLI.
pub fn error_json(e: &Error) -> serde_json::Value {
    serde_json::json!({ "error": e.kind().as_str(), "message": e.to_string() })
}

fn cell_metrics(m: &crate::evaluation::Metrics) -> CellMetrics {
    CellMetrics {
        f1: m.f1,
        acc: m.accuracy,
        sen: m.sensitivity,
        spe: m.specificity,
    }
}

/// Cells in column order: comparison, then ranking, then classifier.
pub fn grid_cells() -> Vec<(Comparison, Mode, Mode)> {
    let mut cells = Vec::with_capacity(12);
    for c in Comparison::ALL {
        for r in [Mode::Local, Mode::Global] {
            for k in [Mode::Local, Mode::Global] {
                cells.push((c, r, k));
            }
        }
    }
    cells
}

/// Runs every cell on one prepared split. Cells run concurrently and fail
/// independently. When `write` is set each cell's files go to
/// `<out>/<comparison>_<ranking>_<classifier>/`.
pub fn run_grid_prepared(prepared: &Prepared, base: &RunConfig, write: bool) -> Result<GridReport> {
    base.validate()?;
    let cells = grid_cells();
    let results = par_map(&cells, |&(comparison, ranking, classifier)| {
        let dir = format!("{comparison}_{ranking}_{classifier}");
        let config = RunConfig {
            comparison,
            ranking,
            classifier,
            out: base.out.join(&dir),
            ..base.clone()
        };
        let outcome = run_prepared(prepared, &config).and_then(|o| {
            if write {
                write_run(&config.out, &o)?;
            }
            Ok(o)
        });
        match outcome {
            Ok(o) => GridCell {
                comparison,
                ranking,
                classifier,
                status: "ok".into(),
                error: None,
                cv: Some(cell_metrics(&o.report.cv.metrics)),
                holdout: Some(cell_metrics(&o.report.holdout.metrics)),
                left_size: Some(o.report.subsets.left.len()),
                right_size: Some(o.report.subsets.right.len()),
                report: Some(format!("{dir}/{REPORT_FILE}")),
            },
            Err(e) => GridCell {
                comparison,
                ranking,
                classifier,
                status: "failed".into(),
                error: Some(error_json(&e)),
                cv: None,
                holdout: None,
                left_size: None,
                right_size: None,
                report: None,
            },
        }
    });
    Ok(GridReport {
        seed: base.seed,
        config: base.clone(),
        cells: results,
    })
}

/// Plain-text table laid out like a cross-validation summary: one column per
/// cell, metric rows in percent, then subset sizes per hemisphere.
pub fn grid_table(grid: &GridReport) -> String {
    let mut s = String::new();
    let label_w = 16;
    let col_w = 9;
    let mut row = |label: &str, cells: Vec<String>| {
        let _ = write!(s, "{label:<label_w$}");
        for c in cells {
            let _ = write!(s, "{c:>col_w$}");
        }
        s.push('\n');
    };
    row("Comparison", grid.cells.iter().map(|c| c.comparison.to_string()).collect());
    row("Feature ranking", grid.cells.iter().map(|c| c.ranking.to_string()).collect());
    row("Classifier", grid.cells.iter().map(|c| c.classifier.to_string()).collect());
    let pct = |f: fn(&CellMetrics) -> f64| -> Vec<String> {
        grid.cells
            .iter()
            .map(|c| c.cv.as_ref().map_or("failed".into(), |m| format!("{:.2}", 100.0 * f(m))))
            .collect()
    };
    row("F1 score %", pct(|m| m.f1));
    row("Accuracy %", pct(|m| m.acc));
    row("Sensitivity %", pct(|m| m.sen));
    row("Specificity %", pct(|m| m.spe));
    let size = |f: fn(&GridCell) -> Option<usize>| -> Vec<String> {
        grid.cells
            .iter()
            .map(|c| f(c).map_or("-".into(), |n| n.to_string()))
            .collect()
    };
    row("Left", size(|c| c.left_size));
    row("Right", size(|c| c.right_size));
    s
}

pub fn cmd_grid(base: &RunConfig) -> Result<GridReport> {
    let prepared = prepare(base)?;
    let grid = run_grid_prepared(&prepared, base, true)?;
    fs::create_dir_all(&base.out).map_err(|e| Error::io(&base.out, e))?;
    write_json(base.out.join(GRID_FILE), &grid)?;
    let table_path = base.out.join(GRID_TABLE_FILE);
    fs::write(&table_path, grid_table(&grid)).map_err(|e| Error::io(&table_path, e))?;
    Ok(grid)
}
