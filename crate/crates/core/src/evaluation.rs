//! Confusion-matrix metrics, stratified k-fold cross-validation and held-out
//! evaluation.
//!
//! Cross-validated metrics are micro-pooled: confusion counts are summed over
//! folds before any ratio is taken. Fold-averaged (macro) metrics are reported
//! alongside for transparency.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, FeatureTable, Hemisphere};
use crate::dual::{fuse, DualSpaceModel};
use crate::error::{Error, Result};
use crate::gda::{Decision, GdaConfig, GdaModel, Moments};
use crate::parallel::par_map_range;
use crate::rng::{SeededRng, Stream};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth_positive: bool, predicted_positive: bool) {
        match (truth_positive, predicted_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f1: f64,
    #[serde(rename = "acc")]
    pub accuracy: f64,
    #[serde(rename = "sen")]
    pub sensitivity: f64,
    #[serde(rename = "spe")]
    pub specificity: f64,
    pub precision: f64,
    /// Metrics whose ratio was 0/0 and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl Metrics {
    fn mean_of(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            f1: avg(|m| m.f1),
            accuracy: avg(|m| m.accuracy),
            sensitivity: avg(|m| m.sensitivity),
            specificity: avg(|m| m.specificity),
            precision: avg(|m| m.precision),
            undefined: Vec::new(),
        }
    }
}

/// Undefined ratios (0/0) are reported as 0 and named in `undefined`.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Metrics {
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let sensitivity = ratio("sen", cm.tp, cm.tp + cm.fn_);
    let specificity = ratio("spe", cm.tn, cm.tn + cm.fp);
    let precision = ratio("precision", cm.tp, cm.tp + cm.fp);
    let accuracy = ratio("acc", cm.tp + cm.tn, cm.total());
    // 2PR/(P+R) written in counts
    let f1 = ratio("f1", 2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_);
    Metrics {
        f1,
        accuracy,
        sensitivity,
        specificity,
        precision,
        undefined,
    }
}

/// Stratified fold membership of every subject of a table, in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub subject_ids: Vec<String>,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Shuffles each class on its own stream and deals it round-robin into
    /// `k` folds. Each class starts where the previous one stopped, so fold
    /// totals stay balanced too.
    pub fn stratified(table: &FeatureTable, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {k}")));
        }
        let mut fold_of = vec![0; table.len()];
        let mut next = 0usize;
        for class in table.classes() {
            let mut members: Vec<usize> = table
                .subjects()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.diagnosis == class)
                .map(|(i, _)| i)
                .collect();
            SeededRng::new(seed, Stream::Folds, class.ordinal() as u64).shuffle(&mut members);
            for &i in &members {
                fold_of[i] = next % k;
                next += 1;
            }
        }
        Ok(FoldAssignment {
            k,
            seed,
            subject_ids: table.subject_ids().map(str::to_string).collect(),
            fold_of,
        })
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    fn check_table(&self, table: &FeatureTable) -> Result<()> {
        if self.subject_ids.len() != table.len()
            || self.subject_ids.iter().map(String::as_str).ne(table.subject_ids())
        {
            return Err(Error::Consistency(
                "fold assignment was built for a different table".into(),
            ));
        }
        Ok(())
    }

    fn check_classes(&self, table: &FeatureTable, classes: [Diagnosis; 2]) -> Result<()> {
        for f in 0..self.k {
            let present: HashSet<Diagnosis> = self
                .test_rows(f)
                .iter()
                .map(|&i| table.subjects()[i].diagnosis)
                .collect();
            if classes.iter().any(|c| !present.contains(c)) {
                return Err(Error::FoldMissingClass(f));
            }
        }
        Ok(())
    }
}

/// One subject's out-of-sample prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub truth_positive: bool,
    pub predicted_positive: bool,
    pub log_odds: f64,
    pub left: Option<bool>,
    pub right: Option<bool>,
}

impl RowPrediction {
    fn from_decisions(
        classes: [Diagnosis; 2],
        truth: Diagnosis,
        left: Option<Decision>,
        right: Option<Decision>,
    ) -> Self {
        let fused = fuse(classes, left, right);
        RowPrediction {
            truth_positive: truth == classes[1],
            predicted_positive: fused.label == classes[1],
            log_odds: fused.log_odds,
            left: left.map(|d| d.label == classes[1]),
            right: right.map(|d| d.label == classes[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub left: Option<Metrics>,
    pub right: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    #[serde(rename = "macro")]
    pub macro_metrics: Metrics,
    pub per_fold: Vec<FoldSummary>,
    pub per_space: SpaceSummary,
    #[serde(skip)]
    pub predictions: Vec<RowPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub per_space: SpaceSummary,
    #[serde(skip)]
    pub predictions: Vec<RowPrediction>,
}

fn per_space(predictions: &[RowPrediction]) -> SpaceSummary {
    let side = |pick: fn(&RowPrediction) -> Option<bool>| {
        let pairs: Option<Vec<(bool, bool)>> = predictions
            .iter()
            .map(|p| pick(p).map(|s| (p.truth_positive, s)))
            .collect();
        pairs
            .filter(|v| !v.is_empty())
            .map(|v| metrics_from_confusion(&ConfusionMatrix::from_pairs(v)))
    };
    SpaceSummary {
        left: side(|p| p.left),
        right: side(|p| p.right),
    }
}

/// Every subject flagged by either space must be flagged by the fused rule,
/// and nothing else may be.
fn check_fusion(predictions: &[RowPrediction]) -> Result<()> {
    for (i, p) in predictions.iter().enumerate() {
        if p.left.is_none() && p.right.is_none() {
            continue;
        }
        let any = p.left == Some(true) || p.right == Some(true);
        if any != p.predicted_positive {
            return Err(Error::Consistency(format!(
                "row {i}: fused label disagrees with the OR of its spaces"
            )));
        }
    }
    Ok(())
}

fn summarize(folds: &FoldAssignment, predictions: Vec<RowPrediction>) -> Result<CvResult> {
    check_fusion(&predictions)?;
    let mut per_fold = Vec::with_capacity(folds.k);
    let mut pooled = ConfusionMatrix::default();
    for f in 0..folds.k {
        let cm = ConfusionMatrix::from_pairs(
            folds
                .test_rows(f)
                .into_iter()
                .map(|i| (predictions[i].truth_positive, predictions[i].predicted_positive)),
        );
        pooled.merge(&cm);
        per_fold.push(FoldSummary {
            fold: f,
            confusion: cm,
            metrics: metrics_from_confusion(&cm),
        });
    }
    let recount = ConfusionMatrix::from_pairs(
        predictions
            .iter()
            .map(|p| (p.truth_positive, p.predicted_positive)),
    );
    if recount != pooled || pooled.total() as usize != predictions.len() {
        return Err(Error::Consistency(format!(
            "pooled confusion {pooled:?} differs from recount {recount:?}"
        )));
    }
    let fold_metrics: Vec<Metrics> = per_fold.iter().map(|f| f.metrics.clone()).collect();
    Ok(CvResult {
        metrics: metrics_from_confusion(&pooled),
        confusion: pooled,
        macro_metrics: Metrics::mean_of(&fold_metrics),
        per_fold,
        per_space: per_space(&predictions),
        predictions,
    })
}

/// Generic k-fold loop: `predict(train_rows, test_rows)` must return one
/// prediction per test row, in order.
pub fn cross_validate_with<F>(
    table: &FeatureTable,
    folds: &FoldAssignment,
    predict: F,
) -> Result<CvResult>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<RowPrediction>> + Sync + Send,
{
    folds.check_table(table)?;
    let classes = table.binary_classes()?;
    folds.check_classes(table, [classes.0, classes.1])?;
    let per_fold = par_map_range(folds.k, |f| {
        let test = folds.test_rows(f);
        let preds = predict(&folds.train_rows(f), &test)?;
        if preds.len() != test.len() {
            return Err(Error::Consistency("fold prediction count mismatch".into()));
        }
        Ok((test, preds))
    });
    let mut predictions: Vec<Option<RowPrediction>> = vec![None; table.len()];
    for result in per_fold {
        let (rows, preds) = result?;
        for (r, p) in rows.into_iter().zip(preds) {
            predictions[r] = Some(p);
        }
    }
    let predictions = predictions
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Consistency("a row was never predicted".into()))?;
    summarize(folds, predictions)
}

/// Feature subsets plus GDA settings: everything needed to refit a dual model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRecipe {
    pub left_subset: Vec<usize>,
    pub right_subset: Vec<usize>,
    pub gda: GdaConfig,
}

/// Out-of-fold machinery for one table and one fold assignment. Training
/// moments of every fold are precomputed over all features of both
/// hemispheres, so fitting any subset costs O(d²) extraction plus a Cholesky.
pub struct CvCache<'a> {
    table: &'a FeatureTable,
    classes: [Diagnosis; 2],
    fold_rows: Vec<Vec<usize>>,
    /// `[hemisphere][fold][class]` training moments.
    train_moments: [Vec<[Moments; 2]>; 2],
}

impl<'a> CvCache<'a> {
    pub fn new(table: &'a FeatureTable, folds: &FoldAssignment) -> Result<Self> {
        folds.check_table(table)?;
        let (neg, pos) = table.binary_classes()?;
        let classes = [neg, pos];
        folds.check_classes(table, classes)?;
        let width = table.schema().len();
        let fold_rows: Vec<Vec<usize>> = (0..folds.k).map(|f| folds.test_rows(f)).collect();
        let build = |hemi: Hemisphere| -> Vec<[Moments; 2]> {
            let n = table.len() as f64;
            let mut origin = vec![0.0; width];
            for s in table.subjects() {
                for (o, v) in origin.iter_mut().zip(s.values(hemi)) {
                    *o += v / n;
                }
            }
            let blank = || [Moments::zero(origin.clone()), Moments::zero(origin.clone())];
            let mut total = blank();
            let mut per_fold: Vec<[Moments; 2]> = (0..folds.k).map(|_| blank()).collect();
            for (i, s) in table.subjects().iter().enumerate() {
                let c = usize::from(s.diagnosis == pos);
                total[c].add(s.values(hemi));
                per_fold[folds.fold_of[i]][c].add(s.values(hemi));
            }
            per_fold
                .iter()
                .map(|held| [total[0].minus(&held[0]), total[1].minus(&held[1])])
                .collect()
        };
        Ok(CvCache {
            table,
            classes,
            fold_rows,
            train_moments: [build(Hemisphere::Left), build(Hemisphere::Right)],
        })
    }

    pub fn classes(&self) -> [Diagnosis; 2] {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn truth(&self, row: usize) -> Diagnosis {
        self.table.subjects()[row].diagnosis
    }

    /// Out-of-fold decisions of a single-hemisphere GDA over `subset`, in row order.
    pub fn space_decisions(
        &self,
        hemisphere: Hemisphere,
        subset: &[usize],
        config: &GdaConfig,
    ) -> Result<Vec<Decision>> {
        let width = self.table.schema().len();
        if let Some(&j) = subset.iter().find(|&&j| j >= width) {
            return Err(Error::SubsetOutOfRange { index: j, len: width });
        }
        let moments = &self.train_moments[hemisphere as usize];
        let mut out = vec![
            Decision {
                label: self.classes[0],
                log_odds: 0.0
            };
            self.table.len()
        ];
        for (f, rows) in self.fold_rows.iter().enumerate() {
            let neg = moments[f][0].class_stats(subset);
            let pos = moments[f][1].class_stats(subset);
            let model = GdaModel::from_stats(hemisphere, subset, self.classes, [&neg, &pos], config)?;
            for &r in rows {
                out[r] = model.classify_hemisphere(self.table.subjects()[r].values(hemisphere))?;
            }
        }
        Ok(out)
    }

    /// Combines per-space out-of-fold decisions into fused row predictions.
    pub fn fuse_rows(
        &self,
        left: Option<&[Decision]>,
        right: Option<&[Decision]>,
    ) -> Vec<RowPrediction> {
        (0..self.table.len())
            .map(|r| {
                RowPrediction::from_decisions(
                    self.classes,
                    self.truth(r),
                    left.map(|v| v[r]),
                    right.map(|v| v[r]),
                )
            })
            .collect()
    }
}

/// Pooled confusion of fused predictions; the fast path used during selection.
pub fn pooled_confusion(predictions: &[RowPrediction]) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        predictions
            .iter()
            .map(|p| (p.truth_positive, p.predicted_positive)),
    )
}

/// Cross-validates a dual-space recipe with fixed feature subsets.
pub fn cross_validate(
    train: &FeatureTable,
    recipe: &DualRecipe,
    folds: &FoldAssignment,
) -> Result<CvResult> {
    if recipe.left_subset.is_empty() && recipe.right_subset.is_empty() {
        return Err(Error::BothSubsetsEmpty);
    }
    let cache = CvCache::new(train, folds)?;
    let side = |hemi, subset: &[usize]| {
        (!subset.is_empty())
            .then(|| cache.space_decisions(hemi, subset, &recipe.gda))
            .transpose()
    };
    let left = side(Hemisphere::Left, &recipe.left_subset)?;
    let right = side(Hemisphere::Right, &recipe.right_subset)?;
    summarize(folds, cache.fuse_rows(left.as_deref(), right.as_deref()))
}

/// Single pass over a held-out set. Rejects any subject the model was trained on.
pub fn evaluate_holdout(model: &DualSpaceModel, test: &FeatureTable) -> Result<HoldoutResult> {
    let overlap = test
        .subject_ids()
        .filter(|id| model.trained_on.binary_search_by(|t| t.as_str().cmp(id)).is_ok())
        .count();
    if overlap > 0 {
        return Err(Error::TrainTestOverlap(overlap));
    }
    let classes = model.classes();
    let predictions = test
        .subjects()
        .iter()
        .map(|s| {
            let d = model.classify_detailed(s)?;
            Ok(RowPrediction::from_decisions(classes, s.diagnosis, d.left, d.right))
        })
        .collect::<Result<Vec<_>>>()?;
    check_fusion(&predictions)?;
    let confusion = pooled_confusion(&predictions);
    Ok(HoldoutResult {
        metrics: metrics_from_confusion(&confusion),
        confusion,
        per_space: per_space(&predictions),
        predictions,
    })
}
