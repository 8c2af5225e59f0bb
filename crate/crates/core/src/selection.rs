//! Incremental error analysis: forward feature introduction scored by
//! cross-validated F1.
//!
//! Folds are fixed once per selection run, from the configured seed, and every
//! candidate subset is scored on exactly those folds.

use serde::{Deserialize, Serialize};

use crate::anova::RankedFeatureList;
use crate::cohort::{FeatureTable, Hemisphere};
use crate::error::{Error, Result};
use crate::evaluation::{
    metrics_from_confusion, pooled_confusion, CvCache, FoldAssignment, Metrics, DEFAULT_FOLDS,
};
use crate::gda::{Decision, GdaConfig};
use crate::parallel::par_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Keep a feature only if it strictly improves the incumbent F1; skip it otherwise.
    GreedyKeepIfImproves,
    /// Score every prefix of the ranked list and keep the best one.
    PrefixArgmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    /// Stop after this many consecutive non-improving phases. `None` scans everything.
    pub patience: Option<usize>,
    pub folds: usize,
    pub seed: u64,
    pub gda: GdaConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            strategy: Strategy::GreedyKeepIfImproves,
            patience: None,
            folds: DEFAULT_FOLDS,
            seed: 0,
            gda: GdaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub hemisphere: Hemisphere,
    pub feature: usize,
    pub name: String,
    pub accepted: bool,
    pub cv_f1: f64,
    pub cv_metrics: Option<Metrics>,
    /// Why the candidate could not be fitted, if it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    /// Candidates scored in this phase (global search only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates_evaluated: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrajectory {
    pub scope: Scope,
    pub strategy: Strategy,
    pub phases: Vec<Phase>,
    pub left_subset: Vec<usize>,
    pub right_subset: Vec<usize>,
    pub best_f1: f64,
}

impl SelectionTrajectory {
    pub fn final_subset(&self, hemisphere: Hemisphere) -> &[usize] {
        match hemisphere {
            Hemisphere::Left => &self.left_subset,
            Hemisphere::Right => &self.right_subset,
        }
    }

    /// F1 of accepted phases, in order. Under the greedy strategies this is
    /// strictly increasing.
    pub fn accepted_f1(&self) -> Vec<f64> {
        self.phases
            .iter()
            .filter(|p| p.accepted)
            .map(|p| p.cv_f1)
            .collect()
    }

    pub fn check_strictly_increasing(&self) -> Result<()> {
        let f1 = self.accepted_f1();
        if f1.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Consistency(format!(
                "accepted-phase F1 not strictly increasing: {f1:?}"
            )));
        }
        Ok(())
    }
}

fn score(cache: &CvCache, left: Option<&[Decision]>, right: Option<&[Decision]>) -> Metrics {
    metrics_from_confusion(&pooled_confusion(&cache.fuse_rows(left, right)))
}

/// Forward selection within one hemisphere over its significant features.
pub fn select_local(
    train: &FeatureTable,
    hemisphere: Hemisphere,
    ranked: &RankedFeatureList,
    config: &SelectionConfig,
) -> Result<SelectionTrajectory> {
    let candidates = ranked.significant_indices();
    if candidates.is_empty() {
        return Err(Error::NoSignificantFeatures);
    }
    let folds = FoldAssignment::stratified(train, config.folds, config.seed)?;
    let cache = CvCache::new(train, &folds)?;
    let schema = train.schema();

    let evaluate = |subset: &[usize]| -> Result<Metrics> {
        let d = cache.space_decisions(hemisphere, subset, &config.gda)?;
        Ok(match hemisphere {
            Hemisphere::Left => score(&cache, Some(&d), None),
            Hemisphere::Right => score(&cache, None, Some(&d)),
        })
    };

    let mut phases = Vec::with_capacity(candidates.len());
    let mut incumbent: Vec<usize> = Vec::new();
    let mut best: Option<(f64, usize)> = None; // (f1, prefix length) for prefix_argmax
    let mut best_f1: Option<f64> = None;
    let mut stale = 0usize;
    for (i, &feature) in candidates.iter().enumerate() {
        let trial: Vec<usize> = match config.strategy {
            Strategy::GreedyKeepIfImproves => {
                incumbent.iter().copied().chain(std::iter::once(feature)).collect()
            }
            Strategy::PrefixArgmax => candidates[..=i].to_vec(),
        };
        let outcome = evaluate(&trial);
        let (cv_f1, metrics, failed) = match outcome {
            Ok(m) => (m.f1, Some(m), None),
            Err(e @ (Error::SingularCovariance(_) | Error::ClassTooSmall { .. })) => {
                (f64::NAN, None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let improves = failed.is_none() && best_f1.is_none_or(|b| cv_f1 > b);
        if improves {
            best_f1 = Some(cv_f1);
            match config.strategy {
                Strategy::GreedyKeepIfImproves => incumbent = trial,
                Strategy::PrefixArgmax => best = Some((cv_f1, i + 1)),
            }
            stale = 0;
        } else {
            stale += 1;
        }
        phases.push(Phase {
            hemisphere,
            feature,
            name: schema.column_name(hemisphere, feature),
            accepted: improves,
            cv_f1,
            cv_metrics: metrics,
            failed,
            candidates_evaluated: None,
        });
        if config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    if let Some((_, len)) = best {
        incumbent = candidates[..len].to_vec();
    }
    let best_f1 = best_f1.ok_or(Error::SelectionFailed)?;
    let (left_subset, right_subset) = match hemisphere {
        Hemisphere::Left => (incumbent, Vec::new()),
        Hemisphere::Right => (Vec::new(), incumbent),
    };
    let trajectory = SelectionTrajectory {
        scope: Scope::Local,
        strategy: config.strategy,
        phases,
        left_subset,
        right_subset,
        best_f1,
    };
    if config.strategy == Strategy::GreedyKeepIfImproves {
        trajectory.check_strictly_increasing()?;
    }
    Ok(trajectory)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    hemisphere: Hemisphere,
    feature: usize,
    rank: usize,
}

/// Greedy best-first search over the union of both hemispheres' significant
/// features, scoring the OR-fused dual model at every step.
///
/// Equal F1 ties go to the better ANOVA rank, then Left, then the lower index.
pub fn select_global(
    train: &FeatureTable,
    ranked_left: &RankedFeatureList,
    ranked_right: &RankedFeatureList,
    config: &SelectionConfig,
) -> Result<SelectionTrajectory> {
    let mut pool: Vec<Candidate> = [(Hemisphere::Left, ranked_left), (Hemisphere::Right, ranked_right)]
        .into_iter()
        .flat_map(|(hemisphere, ranked)| {
            ranked
                .significant()
                .iter()
                .enumerate()
                .map(move |(rank, s)| Candidate {
                    hemisphere,
                    feature: s.descriptor.index,
                    rank,
                })
        })
        .collect();
    if pool.is_empty() {
        return Err(Error::NoSignificantFeatures);
    }
    // pool order is the tie-break order
    pool.sort_by_key(|c| (c.rank, c.hemisphere, c.feature));

    let folds = FoldAssignment::stratified(train, config.folds, config.seed)?;
    let cache = CvCache::new(train, &folds)?;
    let schema = train.schema();

    let mut subsets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut decisions: [Option<Vec<Decision>>; 2] = [None, None];
    let mut best_f1: Option<f64> = None;
    let mut phases = Vec::new();

    while !pool.is_empty() {
        let scored = par_map(&pool, |c| {
            let h = c.hemisphere as usize;
            let mut trial = subsets[h].clone();
            trial.push(c.feature);
            match cache.space_decisions(c.hemisphere, &trial, &config.gda) {
                Ok(d) => {
                    let m = match c.hemisphere {
                        Hemisphere::Left => score(&cache, Some(&d), decisions[1].as_deref()),
                        Hemisphere::Right => score(&cache, decisions[0].as_deref(), Some(&d)),
                    };
                    Ok(Some((m, d)))
                }
                Err(Error::SingularCovariance(_) | Error::ClassTooSmall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        });
        let evaluated = pool.len();
        let mut winner: Option<(usize, Metrics, Vec<Decision>)> = None;
        let mut failed = Vec::new();
        for (i, s) in scored.into_iter().enumerate() {
            match s? {
                None => failed.push(i),
                Some((m, d)) => {
                    if winner.as_ref().is_none_or(|(_, w, _)| m.f1 > w.f1) {
                        winner = Some((i, m, d));
                    }
                }
            }
        }
        let Some((wi, metrics, d)) = winner else {
            break;
        };
        let c = pool[wi];
        let improves = best_f1.is_none_or(|b| metrics.f1 > b);
        phases.push(Phase {
            hemisphere: c.hemisphere,
            feature: c.feature,
            name: schema.column_name(c.hemisphere, c.feature),
            accepted: improves,
            cv_f1: metrics.f1,
            cv_metrics: Some(metrics.clone()),
            failed: None,
            candidates_evaluated: Some(evaluated),
        });
        if !improves {
            break;
        }
        best_f1 = Some(metrics.f1);
        let h = c.hemisphere as usize;
        subsets[h].push(c.feature);
        decisions[h] = Some(d);
        // drop the winner and anything that cannot be fitted
        failed.push(wi);
        failed.sort_unstable();
        for i in failed.into_iter().rev() {
            pool.remove(i);
        }
    }

    let best_f1 = best_f1.ok_or(Error::SelectionFailed)?;
    let [left_subset, right_subset] = subsets;
    let trajectory = SelectionTrajectory {
        scope: Scope::Global,
        strategy: Strategy::GreedyKeepIfImproves,
        phases,
        left_subset,
        right_subset,
        best_f1,
    };
    trajectory.check_strictly_increasing()?;
    Ok(trajectory)
}
