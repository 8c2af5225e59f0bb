//! Dual decision spaces: one GDA model per hemisphere, fused by OR.

use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, FeatureTable, Hemisphere, SubjectRecord};
use crate::error::{Error, Result};
use crate::gda::{self, Decision, GdaConfig, GdaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSpaceModel {
    pub left: Option<GdaModel>,
    pub right: Option<GdaModel>,
    pub fusion: Fusion,
    /// Sorted ids of the training subjects, used to reject leaky test sets.
    pub trained_on: Vec<String>,
}

/// The fused decision together with what each present space said.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualDecision {
    pub fused: Decision,
    pub left: Option<Decision>,
    pub right: Option<Decision>,
}

impl DualSpaceModel {
    pub fn new(left: Option<GdaModel>, right: Option<GdaModel>, trained_on: Vec<String>) -> Result<Self> {
        match (&left, &right) {
            (None, None) => return Err(Error::BothSubsetsEmpty),
            (Some(l), Some(r)) if l.classes() != r.classes() => {
                return Err(Error::Consistency(
                    "hemisphere models disagree on the class pair".into(),
                ))
            }
            _ => {}
        }
        Ok(DualSpaceModel {
            left,
            right,
            fusion: Fusion::Or,
            trained_on,
        })
    }

    /// (negative, positive)
    pub fn classes(&self) -> [Diagnosis; 2] {
        self.left
            .as_ref()
            .or(self.right.as_ref())
            .map(GdaModel::classes)
            .expect("at least one space is present")
    }

    pub fn space(&self, hemisphere: Hemisphere) -> Option<&GdaModel> {
        match hemisphere {
            Hemisphere::Left => self.left.as_ref(),
            Hemisphere::Right => self.right.as_ref(),
        }
    }

    pub fn subset(&self, hemisphere: Hemisphere) -> &[usize] {
        self.space(hemisphere).map_or(&[], GdaModel::feature_subset)
    }

    pub fn classify_detailed(&self, subject: &SubjectRecord) -> Result<DualDecision> {
        let left = self.left.as_ref().map(|m| m.classify_subject(subject)).transpose()?;
        let right = self.right.as_ref().map(|m| m.classify_subject(subject)).transpose()?;
        Ok(DualDecision {
            fused: fuse(self.classes(), left, right),
            left,
            right,
        })
    }
}

/// OR rule on labels; the fused score is the larger log-odds, which agrees
/// with the OR label at threshold zero.
pub fn fuse(classes: [Diagnosis; 2], left: Option<Decision>, right: Option<Decision>) -> Decision {
    let log_odds = [left, right]
        .into_iter()
        .flatten()
        .map(|d| d.log_odds)
        .fold(f64::NEG_INFINITY, f64::max);
    let positive = [left, right]
        .into_iter()
        .flatten()
        .any(|d| d.label == classes[1]);
    Decision {
        label: if positive { classes[1] } else { classes[0] },
        log_odds,
    }
}

/// Fits each non-empty hemisphere subset independently on the same subjects.
pub fn fit_dual(
    train: &FeatureTable,
    left_subset: &[usize],
    right_subset: &[usize],
    config: &GdaConfig,
) -> Result<DualSpaceModel> {
    if left_subset.is_empty() && right_subset.is_empty() {
        return Err(Error::BothSubsetsEmpty);
    }
    let fit_side = |hemi, subset: &[usize]| {
        (!subset.is_empty())
            .then(|| gda::fit(train, hemi, subset, config))
            .transpose()
    };
    let left = fit_side(Hemisphere::Left, left_subset)?;
    let right = fit_side(Hemisphere::Right, right_subset)?;
    let mut ids: Vec<String> = train.subject_ids().map(str::to_string).collect();
    ids.sort_unstable();
    DualSpaceModel::new(left, right, ids)
}

pub fn classify_dual(model: &DualSpaceModel, subject: &SubjectRecord) -> Result<Decision> {
    model.classify_detailed(subject).map(|d| d.fused)
}
