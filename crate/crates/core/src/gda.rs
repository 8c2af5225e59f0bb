//! Gaussian discriminant analysis over a feature subset of one hemisphere.
//!
//! Each class is modelled as a multivariate normal; a subject is labelled by
//! the posterior log-odds of the positive (more severe) class. Fitting goes
//! through [`Moments`], raw first and second moments about an origin, so that
//! cross-validation can derive training statistics for any fold and any
//! subset by subtraction instead of re-scanning subjects.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, FeatureTable, Hemisphere, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

pub const DEFAULT_SHRINKAGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// One pooled covariance, linear boundary.
    Shared,
    /// One covariance per class, quadratic boundary.
    PerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkTarget {
    /// `(1 - λ) Σ + λ diag(Σ)`; commutes with per-feature rescaling.
    Diagonal,
    /// `(1 - λ) Σ + λ (tr Σ / d) I`.
    ScaledIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Empirical,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Divide scatter by n.
    MaximumLikelihood,
    /// Divide scatter by n - 1 (pooled: N - 2).
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdaConfig {
    pub covariance_mode: CovarianceMode,
    pub shrinkage: f64,
    pub shrink_target: ShrinkTarget,
    pub prior_mode: PriorMode,
    pub estimator: Estimator,
}

impl Default for GdaConfig {
    fn default() -> Self {
        GdaConfig {
            covariance_mode: CovarianceMode::PerClass,
            shrinkage: DEFAULT_SHRINKAGE,
            shrink_target: ShrinkTarget::Diagonal,
            prior_mode: PriorMode::Empirical,
            estimator: Estimator::MaximumLikelihood,
        }
    }
}

impl GdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.shrinkage) {
            return Err(Error::Config(format!(
                "shrinkage must lie in [0, 1), got {}",
                self.shrinkage
            )));
        }
        Ok(())
    }
}

/// Raw moments of a row set about a fixed origin, over every feature of a
/// hemisphere: `sum = Σ (x - o)` and `cross = Σ (x - o)(x - o)ᵀ`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: usize,
    origin: Vec<f64>,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    pub fn zero(origin: Vec<f64>) -> Self {
        let w = origin.len();
        Moments {
            n: 0,
            origin,
            sum: vec![0.0; w],
            cross: vec![0.0; w * w],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        let w = self.origin.len();
        let c: Vec<f64> = x.iter().zip(&self.origin).map(|(x, o)| x - o).collect();
        for i in 0..w {
            self.sum[i] += c[i];
            let row = &mut self.cross[i * w..i * w + w];
            for j in 0..=i {
                row[j] += c[i] * c[j];
            }
        }
        self.n += 1;
    }

    /// `self - other`; both must share the origin.
    pub fn minus(&self, other: &Moments) -> Moments {
        debug_assert_eq!(self.origin, other.origin);
        Moments {
            n: self.n - other.n,
            origin: self.origin.clone(),
            sum: self.sum.iter().zip(&other.sum).map(|(a, b)| a - b).collect(),
            cross: self
                .cross
                .iter()
                .zip(&other.cross)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Two-pass moments of `rows`: the origin is the row mean, so the stored
    /// scatter is already centred.
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, width: usize) -> Self {
        let mut origin = vec![0.0; width];
        let mut n = 0usize;
        for r in rows.clone() {
            for (o, x) in origin.iter_mut().zip(r) {
                *o += x;
            }
            n += 1;
        }
        if n > 0 {
            origin.iter_mut().for_each(|o| *o /= n as f64);
        }
        let mut m = Moments::zero(origin);
        for r in rows {
            m.add(r);
        }
        m
    }

    /// Mean and centred scatter restricted to `subset`.
    pub fn class_stats(&self, subset: &[usize]) -> ClassStats {
        let w = self.origin.len();
        let d = subset.len();
        let n = self.n as f64;
        let shift: Vec<f64> = subset.iter().map(|&j| self.sum[j] / n).collect();
        let mean = subset
            .iter()
            .zip(&shift)
            .map(|(&j, s)| self.origin[j] + s)
            .collect();
        let mut scatter = vec![0.0; d * d];
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate().take(a + 1) {
                let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                let v = self.cross[hi * w + lo] - n * shift[a] * shift[b];
                scatter[a * d + b] = v;
                scatter[b * d + a] = v;
            }
        }
        ClassStats {
            n: self.n,
            mean,
            scatter,
        }
    }
}

/// Sample count, mean and centred scatter of one class over a feature subset.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub n: usize,
    pub mean: Vec<f64>,
    pub scatter: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Diagnosis,
    /// Positive-class log posterior minus negative-class log posterior.
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GdaModelData {
    hemisphere: Hemisphere,
    feature_subset: Vec<usize>,
    /// (negative, positive)
    classes: [Diagnosis; 2],
    means: [Vec<f64>; 2],
    /// Row-major; one matrix when shared, else negative then positive.
    covariances: Vec<Vec<f64>>,
    log_priors: [f64; 2],
    covariance_mode: CovarianceMode,
    shrinkage: f64,
    shrink_target: ShrinkTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GdaModelData", into = "GdaModelData")]
pub struct GdaModel {
    data: GdaModelData,
    factors: Vec<Cholesky>,
}

impl TryFrom<GdaModelData> for GdaModel {
    type Error = Error;

    fn try_from(data: GdaModelData) -> Result<Self> {
        let d = data.feature_subset.len();
        let expected = match data.covariance_mode {
            CovarianceMode::Shared => 1,
            CovarianceMode::PerClass => 2,
        };
        if data.covariances.len() != expected
            || data.means.iter().any(|m| m.len() != d)
            || data.covariances.iter().any(|c| c.len() != d * d)
        {
            return Err(Error::Consistency("model payload has inconsistent dimensions".into()));
        }
        let factors = data
            .covariances
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Cholesky::factor(c, d).ok_or(Error::SingularCovariance(data.classes[i.min(1)]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GdaModel { data, factors })
    }
}

impl From<GdaModel> for GdaModelData {
    fn from(m: GdaModel) -> Self {
        m.data
    }
}

fn shrink(cov: &mut [f64], d: usize, lambda: f64, target: ShrinkTarget) {
    if lambda == 0.0 {
        return;
    }
    let diag: Vec<f64> = (0..d).map(|i| cov[i * d + i]).collect();
    cov.iter_mut().for_each(|v| *v *= 1.0 - lambda);
    match target {
        ShrinkTarget::Diagonal => {
            for (i, v) in diag.iter().enumerate() {
                cov[i * d + i] += lambda * v;
            }
        }
        ShrinkTarget::ScaledIdentity => {
            let mu = diag.iter().sum::<f64>() / d as f64;
            for i in 0..d {
                cov[i * d + i] += lambda * mu;
            }
        }
    }
}

impl GdaModel {
    /// Builds a model from per-class statistics over `subset`, ordered
    /// (negative, positive).
    pub fn from_stats(
        hemisphere: Hemisphere,
        subset: &[usize],
        classes: [Diagnosis; 2],
        stats: [&ClassStats; 2],
        config: &GdaConfig,
    ) -> Result<Self> {
        config.validate()?;
        let d = subset.len();
        let need = match config.covariance_mode {
            CovarianceMode::PerClass => d + 1,
            CovarianceMode::Shared => 2,
        };
        for (class, s) in classes.iter().zip(stats) {
            if s.n < need {
                return Err(Error::ClassTooSmall {
                    class: *class,
                    have: s.n,
                    need,
                });
            }
        }
        let unbiased = config.estimator == Estimator::Unbiased;
        let covariances: Vec<Vec<f64>> = match config.covariance_mode {
            CovarianceMode::PerClass => stats
                .iter()
                .map(|s| {
                    let denom = if unbiased { s.n - 1 } else { s.n } as f64;
                    s.scatter.iter().map(|v| v / denom).collect()
                })
                .collect(),
            CovarianceMode::Shared => {
                let n = stats[0].n + stats[1].n;
                let denom = if unbiased { n - 2 } else { n } as f64;
                vec![stats[0]
                    .scatter
                    .iter()
                    .zip(&stats[1].scatter)
                    .map(|(a, b)| (a + b) / denom)
                    .collect()]
            }
        };
        let covariances: Vec<Vec<f64>> = covariances
            .into_iter()
            .map(|mut c| {
                // exact symmetry
                for i in 0..d {
                    for j in 0..i {
                        let v = 0.5 * (c[i * d + j] + c[j * d + i]);
                        c[i * d + j] = v;
                        c[j * d + i] = v;
                    }
                }
                shrink(&mut c, d, config.shrinkage, config.shrink_target);
                c
            })
            .collect();
        let log_priors = match config.prior_mode {
            PriorMode::Uniform => [0.5f64.ln(); 2],
            PriorMode::Empirical => {
                let total = (stats[0].n + stats[1].n) as f64;
                [
                    (stats[0].n as f64 / total).ln(),
                    (stats[1].n as f64 / total).ln(),
                ]
            }
        };
        GdaModel::try_from(GdaModelData {
            hemisphere,
            feature_subset: subset.to_vec(),
            classes,
            means: [stats[0].mean.clone(), stats[1].mean.clone()],
            covariances,
            log_priors,
            covariance_mode: config.covariance_mode,
            shrinkage: config.shrinkage,
            shrink_target: config.shrink_target,
        })
    }

    pub fn hemisphere(&self) -> Hemisphere {
        self.data.hemisphere
    }

    pub fn feature_subset(&self) -> &[usize] {
        &self.data.feature_subset
    }

    pub fn dim(&self) -> usize {
        self.data.feature_subset.len()
    }

    /// (negative, positive)
    pub fn classes(&self) -> [Diagnosis; 2] {
        self.data.classes
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.data.means[class]
    }

    pub fn covariance(&self, class: usize) -> &[f64] {
        &self.data.covariances[class.min(self.data.covariances.len() - 1)]
    }

    pub fn log_priors(&self) -> [f64; 2] {
        self.data.log_priors
    }

    pub fn covariance_mode(&self) -> CovarianceMode {
        self.data.covariance_mode
    }

    fn class_slot(&self, class: Diagnosis) -> Result<usize> {
        self.data
            .classes
            .iter()
            .position(|c| *c == class)
            .ok_or(Error::EmptyClass(class))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// −½[d ln 2π + ln det Σ + (x − μ)ᵀ Σ⁻¹ (x − μ)] via the Cholesky factor.
    fn log_density_slot(&self, slot: usize, x: &[f64]) -> f64 {
        let factor = &self.factors[slot.min(self.factors.len() - 1)];
        let mut diff: Vec<f64> = x.iter().zip(&self.data.means[slot]).map(|(x, m)| x - m).collect();
        let maha = factor.mahalanobis_sq(&mut diff);
        -0.5 * (self.dim() as f64 * TAU.ln() + factor.log_det() + maha)
    }

    pub fn log_density(&self, class: Diagnosis, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_slot(self.class_slot(class)?, x))
    }

    /// Classifies a subset-ordered feature vector. Ties (log-odds exactly 0)
    /// go to the negative class.
    pub fn classify(&self, x: &[f64]) -> Result<Decision> {
        self.check_dim(x)?;
        Ok(self.decide(x))
    }

    fn decide(&self, x: &[f64]) -> Decision {
        let [lp_neg, lp_pos] = self.data.log_priors;
        let log_odds =
            (self.log_density_slot(1, x) + lp_pos) - (self.log_density_slot(0, x) + lp_neg);
        let label = if log_odds > 0.0 {
            self.data.classes[1]
        } else {
            self.data.classes[0]
        };
        Decision { label, log_odds }
    }

    /// Gathers the subset from a full hemisphere vector and classifies it.
    pub fn classify_hemisphere(&self, values: &[f64]) -> Result<Decision> {
        let x = self
            .data
            .feature_subset
            .iter()
            .map(|&j| {
                values.get(j).copied().ok_or(Error::SubsetOutOfRange {
                    index: j,
                    len: values.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.decide(&x))
    }

    pub fn classify_subject(&self, subject: &SubjectRecord) -> Result<Decision> {
        self.classify_hemisphere(subject.values(self.hemisphere()))
    }

    pub fn is_positive(&self, d: &Decision) -> bool {
        d.label == self.data.classes[1]
    }
}

fn validate_subset(subset: &[usize], width: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Config("feature subset is empty".into()));
    }
    for &j in subset {
        if j >= width {
            return Err(Error::SubsetOutOfRange { index: j, len: width });
        }
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("feature subset contains duplicates".into()));
    }
    Ok(())
}

/// Fits a GDA model on a two-class table.
pub fn fit(
    train: &FeatureTable,
    hemisphere: Hemisphere,
    subset: &[usize],
    config: &GdaConfig,
) -> Result<GdaModel> {
    let rows: Vec<usize> = (0..train.len()).collect();
    fit_rows(train, &rows, hemisphere, subset, config)
}

/// Fits on the given rows of `table` only.
pub fn fit_rows(
    table: &FeatureTable,
    rows: &[usize],
    hemisphere: Hemisphere,
    subset: &[usize],
    config: &GdaConfig,
) -> Result<GdaModel> {
    let (neg, pos) = table.binary_classes()?;
    validate_subset(subset, table.schema().len())?;
    let stats = [neg, pos].map(|class| {
        let members = rows
            .iter()
            .map(|&r| &table.subjects()[r])
            .filter(|s| s.diagnosis == class)
            .map(|s| s.values(hemisphere));
        // project first so the moments are d x d, not full-width
        let projected: Vec<Vec<f64>> =
            members.map(|v| subset.iter().map(|&j| v[j]).collect()).collect();
        let all: Vec<usize> = (0..subset.len()).collect();
        Moments::from_rows(projected.iter().map(Vec::as_slice), subset.len()).class_stats(&all)
    });
    GdaModel::from_stats(hemisphere, subset, [neg, pos], [&stats[0], &stats[1]], config)
}
