//! Synthetic morphometric cohorts with planted class effects.
//!
//! Every value is `mean + sd * (z + effect[class])`, where `z` is standard
//! normal, optionally correlated with coefficient `ρ` across the measures of
//! one region (compound-symmetric block, realized through its Cholesky factor).
//! Draw order: subjects in id order, left then right hemisphere, regions in
//! schema order, measures in schema order. Zero corruption is drawn afterwards
//! from a separate stream.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{self, Diagnosis, FeatureTable, Hemisphere, Schema, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::rng::{SeededRng, Stream, GENERATOR_ID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDistribution {
    pub mean: f64,
    pub sd: f64,
}

/// Plausible positive location and scale per shape measure, so that an exact
/// zero is always abnormal.
pub fn default_base(measure: &str) -> BaseDistribution {
    let (mean, sd) = match measure {
        "surface_area" => (1500.0, 250.0),
        "travel_depth" => (8.0, 1.2),
        "geodesic_depth" => (11.0, 1.6),
        "mean_curvature" => (0.6, 0.08),
        "convexity" => (4.0, 0.6),
        "thickness" => (2.5, 0.3),
        "volume" => (5000.0, 800.0),
        _ => (10.0, 1.0),
    };
    BaseDistribution { mean, sd }
}

/// A feature with class mean offsets in units of its standard deviation,
/// ordered (CN, MCI, AD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFeature {
    pub hemisphere: Hemisphere,
    pub index: usize,
    pub effects: [f64; 3],
}

/// How many subjects get one value overwritten with 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZeroNoise {
    Total(usize),
    /// (CN, MCI, AD)
    PerClass([usize; 3]),
}

impl Default for ZeroNoise {
    fn default() -> Self {
        ZeroNoise::Total(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    /// (CN, MCI, AD)
    pub n_per_class: [usize; 3],
    pub schema: Schema,
    pub signal_features: Vec<SignalFeature>,
    /// One entry per schema measure; empty means [`default_base`].
    pub base: Vec<BaseDistribution>,
    /// Within-region correlation across measures, in [0, 0.95].
    pub correlation: Option<f64>,
    pub zero_noise_subjects: ZeroNoise,
    pub seed: u64,
    /// Permit effects that are not ordered CN <= MCI <= AD.
    pub allow_unordered_effects: bool,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_per_class: [100, 100, 100],
            schema: Schema::default(),
            signal_features: Vec::new(),
            base: Vec::new(),
            correlation: None,
            zero_noise_subjects: ZeroNoise::default(),
            seed: 0,
            allow_unordered_effects: false,
        }
    }
}

/// Right-hemisphere peak effects relative to the left in the paper-scale preset.
pub const DEFAULT_RIGHT_SCALE: f64 = 0.5;

/// Regions that carry signal in the paper-scale preset, strongest first.
const SIGNATURE_REGIONS: [&str; 10] = [
    "entorhinal",
    "middle_temporal",
    "inferior_temporal",
    "fusiform",
    "parahippocampal",
    "superior_temporal",
    "precuneus",
    "inferior_parietal",
    "isthmus_cingulate",
    "posterior_cingulate",
];

impl CohortSpec {
    /// Cohort sized like the original study: 190/305/133 subjects, nine of
    /// them (3/4/2) corrupted with a zero, signal in ten temporal and parietal
    /// regions of both hemispheres. `strength` scales every effect; the right
    /// hemisphere carries [`DEFAULT_RIGHT_SCALE`] of the left's peak signal.
    pub fn paper_scale(seed: u64, strength: f64) -> Self {
        Self::paper_scale_lateralized(seed, strength, DEFAULT_RIGHT_SCALE)
    }

    /// [`CohortSpec::paper_scale`] with an explicit right/left peak ratio.
    pub fn paper_scale_lateralized(seed: u64, strength: f64, right_scale: f64) -> Self {
        let schema = Schema::default();
        let mut signal_features = Vec::new();
        for hemisphere in Hemisphere::BOTH {
            let side = if hemisphere == Hemisphere::Left { 1.0 } else { right_scale };
            for (rank, region) in SIGNATURE_REGIONS.iter().enumerate() {
                let r = schema.regions.iter().position(|x| x == region).expect("default region");
                for m in 0..schema.measures.len() {
                    // thickness and volume carry the most atrophy signal
                    let measure_weight = match schema.measures[m].as_str() {
                        "thickness" | "volume" => 1.0,
                        "surface_area" | "travel_depth" | "geodesic_depth" => 0.6,
                        _ => 0.35,
                    };
                    // a shared floor keeps every signature feature detectable; only the peak is lateralized
                    let peak = side * 0.9 * measure_weight / (1.0 + 0.25 * rank as f64);
                    let ad = strength * (0.35 + peak);
                    signal_features.push(SignalFeature {
                        hemisphere,
                        index: schema.index_of(m, r),
                        effects: [0.0, 0.45 * ad, ad],
                    });
                }
            }
        }
        CohortSpec {
            n_per_class: [190, 305, 133],
            schema,
            signal_features,
            base: Vec::new(),
            correlation: Some(0.3),
            zero_noise_subjects: ZeroNoise::PerClass([3, 4, 2]),
            seed,
            allow_unordered_effects: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let width = self.schema.len();
        if width == 0 {
            return bad("schema has no features".into());
        }
        if let Some(rho) = self.correlation {
            if !(0.0..=0.95).contains(&rho) {
                return bad(format!("correlation {rho} outside [0, 0.95]"));
            }
        }
        if !self.base.is_empty() && self.base.len() != self.schema.measures.len() {
            return bad(format!(
                "{} base distributions for {} measures",
                self.base.len(),
                self.schema.measures.len()
            ));
        }
        if self.base.iter().any(|b| !b.sd.is_finite() || b.sd <= 0.0 || !b.mean.is_finite()) {
            return bad("base distributions need finite means and positive sd".into());
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.signal_features {
            if s.index >= width {
                return bad(format!("signal feature index {} >= {width}", s.index));
            }
            if !seen.insert((s.hemisphere, s.index)) {
                return bad(format!("signal feature {:?}/{} listed twice", s.hemisphere, s.index));
            }
            if s.effects.iter().any(|e| !e.is_finite()) {
                return bad("non-finite effect".into());
            }
            let ordered = s.effects[0] <= s.effects[1] && s.effects[1] <= s.effects[2];
            if !ordered && !self.allow_unordered_effects {
                return bad(format!(
                    "effects {:?} not ordered CN <= MCI <= AD (set allow_unordered_effects)",
                    s.effects
                ));
            }
        }
        let total: usize = self.n_per_class.iter().sum();
        match self.zero_noise_subjects {
            ZeroNoise::Total(n) if n > total => {
                return bad(format!("{n} zero-noise subjects but only {total} subjects"))
            }
            ZeroNoise::PerClass(per) => {
                for (i, (&z, &n)) in per.iter().zip(&self.n_per_class).enumerate() {
                    if z > n {
                        return bad(format!("{z} zero-noise subjects in {}", Diagnosis::ALL[i]));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn base_for(&self, measure: usize) -> BaseDistribution {
        self.base
            .get(measure)
            .copied()
            .unwrap_or_else(|| default_base(&self.schema.measures[measure]))
    }
}

/// Draws a cohort from `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &CohortSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let schema = &spec.schema;
    let width = schema.len();
    let n_measures = schema.measures.len();
    let n_regions = schema.regions.len();

    let mut effects = vec![vec![[0.0f64; 3]; width]; 2];
    for s in &spec.signal_features {
        effects[s.hemisphere as usize][s.index] = s.effects;
    }
    let block = spec.correlation.filter(|&r| r > 0.0).map(|rho| {
        let mut m = vec![rho; n_measures * n_measures];
        for i in 0..n_measures {
            m[i * n_measures + i] = 1.0;
        }
        Cholesky::factor(&m, n_measures).expect("compound symmetry with rho < 1 is positive definite")
    });
    let bases: Vec<BaseDistribution> = (0..n_measures).map(|m| spec.base_for(m)).collect();

    let mut rng = SeededRng::new(spec.seed, Stream::Cohort, 0);
    let total: usize = spec.n_per_class.iter().sum();
    let id_width = total.to_string().len().max(4);
    let mut subjects = Vec::with_capacity(total);
    let mut z = vec![0.0; n_measures];
    for (class, &n) in Diagnosis::ALL.iter().zip(&spec.n_per_class) {
        for _ in 0..n {
            let mut hemis = [vec![0.0; width], vec![0.0; width]];
            for (h, values) in hemis.iter_mut().enumerate() {
                for r in 0..n_regions {
                    z.iter_mut().for_each(|v| *v = rng.standard_normal());
                    let y: Vec<f64> = match &block {
                        None => z.clone(),
                        Some(chol) => {
                            let l = chol.lower();
                            (0..n_measures)
                                .map(|i| (0..=i).map(|k| l[i * n_measures + k] * z[k]).sum())
                                .collect()
                        }
                    };
                    for (m, y) in y.into_iter().enumerate() {
                        let j = schema.index_of(m, r);
                        let b = bases[m];
                        values[j] = b.mean + b.sd * (y + effects[h][j][class.ordinal()]);
                    }
                }
            }
            let [left, right] = hemis;
            subjects.push(SubjectRecord {
                subject_id: format!("SUB{:0id_width$}", subjects.len() + 1),
                diagnosis: *class,
                left,
                right,
            });
        }
    }

    let mut corrupt = SeededRng::new(spec.seed, Stream::Corruption, 0);
    let mut pick = |pool: Vec<usize>, k: usize, subjects: &mut [SubjectRecord]| {
        let mut pool = pool;
        // partial Fisher-Yates: the first k slots are the sample
        for i in 0..k {
            let j = i + corrupt.below(pool.len() - i);
            pool.swap(i, j);
        }
        let mut chosen = pool[..k].to_vec();
        chosen.sort_unstable();
        for s in chosen {
            let hemi = corrupt.below(2);
            let j = corrupt.below(width);
            let rec = &mut subjects[s];
            if hemi == 0 {
                rec.left[j] = 0.0;
            } else {
                rec.right[j] = 0.0;
            }
        }
    };
    match spec.zero_noise_subjects {
        ZeroNoise::Total(k) => pick((0..total).collect(), k, &mut subjects),
        ZeroNoise::PerClass(per) => {
            let mut start = 0;
            for (k, &n) in per.iter().zip(&spec.n_per_class) {
                pick((start..start + n).collect(), *k, &mut subjects);
                start += n;
            }
        }
    }
    let mut table = FeatureTable::new(schema.clone(), subjects)?;
    table.provenance.source = Some(format!("synthetic seed={} generator={GENERATOR_ID}", spec.seed));
    Ok(table)
}

pub use cohort::{write_csv, write_csv_to};

/// Sidecar written next to a generated CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortMeta {
    pub generator: String,
    pub spec: CohortSpec,
}

pub fn write_meta(spec: &CohortSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let meta = CohortMeta {
        generator: GENERATOR_ID.to_string(),
        spec: spec.clone(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
