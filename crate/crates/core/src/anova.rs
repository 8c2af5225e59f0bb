//! One-way ANOVA per feature and the resulting p-value ranking.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cohort::{Comparison, Diagnosis, FeatureDescriptor, FeatureTable, Hemisphere};
use crate::error::{Error, Result};
use crate::parallel::par_map_range;
use crate::special::f_sf;

pub const DEFAULT_LOS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneWay {
    pub f_stat: f64,
    pub df_between: u64,
    pub df_within: u64,
    /// Set when the groups are perfectly separated (SSW = 0, SSB > 0); `f_stat` is infinite.
    pub zero_within_variance: bool,
}

impl OneWay {
    pub fn p_value(&self) -> f64 {
        if self.zero_within_variance {
            0.0
        } else {
            f_sf(self.f_stat, self.df_between, self.df_within)
        }
    }
}

/// Classical one-way ANOVA, F = (SSB / (k - 1)) / (SSW / (n - k)).
pub fn f_oneway(groups: &[&[f64]]) -> Result<OneWay> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::DegenerateInput);
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let k = groups.len();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    let df_between = (k - 1) as u64;
    let df_within = (n - k) as u64;
    let (f_stat, zero_within_variance) = if ssb == 0.0 {
        (0.0, false)
    } else if ssw == 0.0 {
        (f64::INFINITY, true)
    } else {
        ((ssb / df_between as f64) / (ssw / df_within as f64), false)
    };
    Ok(OneWay {
        f_stat,
        df_between,
        df_within,
        zero_within_variance,
    })
}

/// Which subjects an ANOVA compares: one pairwise task, or all three diagnoses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Pairwise(Comparison),
    AllThree,
}

impl Grouping {
    pub fn classes(self) -> Vec<Diagnosis> {
        match self {
            Grouping::Pairwise(c) => vec![c.negative(), c.positive()],
            Grouping::AllThree => Diagnosis::ALL.to_vec(),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::Pairwise(c) => f.write_str(c.as_str()),
            Grouping::AllThree => f.write_str("all"),
        }
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            Ok(Grouping::AllThree)
        } else {
            s.parse().map(Grouping::Pairwise)
        }
    }
}

impl Serialize for Grouping {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grouping {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub descriptor: FeatureDescriptor,
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: u64,
    pub df_within: u64,
    pub zero_within_variance: bool,
}

impl FeatureScore {
    /// p ascending, then F descending, then feature index ascending.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.p_value
            .total_cmp(&other.p_value)
            .then_with(|| other.f_stat.total_cmp(&self.f_stat))
            .then_with(|| self.descriptor.index.cmp(&other.descriptor.index))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeatureList {
    pub grouping: Grouping,
    pub hemisphere: Hemisphere,
    pub los: f64,
    pub scores: Vec<FeatureScore>,
}

impl RankedFeatureList {
    /// The prefix of `scores` with p below the significance level.
    pub fn significant(&self) -> &[FeatureScore] {
        let n = self.scores.partition_point(|s| s.p_value < self.los);
        &self.scores[..n]
    }

    pub fn significant_indices(&self) -> Vec<usize> {
        self.significant().iter().map(|s| s.descriptor.index).collect()
    }

    /// Position of a feature in the ranking.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.scores.iter().position(|s| s.descriptor.index == index)
    }

    pub fn to_report(&self) -> RankReport {
        RankReport {
            grouping: self.grouping,
            hemisphere: self.hemisphere,
            los: self.los,
            scores: self
                .scores
                .iter()
                .map(|s| RankEntry {
                    feature: s.descriptor.name(),
                    index: s.descriptor.index,
                    f: s.f_stat.is_finite().then_some(s.f_stat),
                    p: s.p_value,
                    significant: s.p_value < self.los,
                    zero_within_variance: s.zero_within_variance,
                })
                .collect(),
        }
    }
}

/// JSON shape of the `rank` command output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub grouping: Grouping,
    pub hemisphere: Hemisphere,
    pub los: f64,
    pub scores: Vec<RankEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: String,
    pub index: usize,
    /// `null` when the F statistic is infinite.
    pub f: Option<f64>,
    pub p: f64,
    pub significant: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_within_variance: bool,
}

/// Scores every feature of one hemisphere and sorts by the ranking order.
pub fn rank_features(
    table: &FeatureTable,
    hemisphere: Hemisphere,
    grouping: Grouping,
    los: f64,
) -> Result<RankedFeatureList> {
    let classes = grouping.classes();
    let counts = table.class_counts();
    for c in &classes {
        if !counts.contains_key(c) {
            return Err(Error::EmptyClass(*c));
        }
    }
    let members: Vec<Vec<&[f64]>> = classes
        .iter()
        .map(|c| {
            table
                .subjects()
                .iter()
                .filter(|s| s.diagnosis == *c)
                .map(|s| s.values(hemisphere))
                .collect()
        })
        .collect();

    let schema = table.schema();
    let scored = par_map_range(schema.len(), |j| {
        let columns: Vec<Vec<f64>> = members
            .iter()
            .map(|rows| rows.iter().map(|r| r[j]).collect())
            .collect();
        let groups: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
        let ow = f_oneway(&groups)?;
        Ok(FeatureScore {
            descriptor: schema.descriptor(hemisphere, j),
            f_stat: ow.f_stat,
            p_value: ow.p_value(),
            df_between: ow.df_between,
            df_within: ow.df_within,
            zero_within_variance: ow.zero_within_variance,
        })
    });
    let mut scores = scored.into_iter().collect::<Result<Vec<_>>>()?;
    scores.sort_by(FeatureScore::rank_cmp);
    Ok(RankedFeatureList {
        grouping,
        hemisphere,
        los,
        scores,
    })
}
