#![allow(dead_code)]

pub mod oracle;

use dualspace::cohort::{Diagnosis, FeatureTable, Hemisphere, Schema, SubjectRecord};
use dualspace::rng::{SeededRng, Stream};
use dualspace::synth::{generate, CohortSpec, SignalFeature};

pub fn schema(measures: usize, regions: usize) -> Schema {
    Schema {
        measures: (0..measures).map(|m| format!("m{m}")).collect(),
        regions: (0..regions).map(|r| format!("r{r}")).collect(),
    }
}

/// CN vs AD cohort on a one-measure schema of `width` regions, with the
/// listed (hemisphere, index, AD effect in sd) features planted.
pub fn planted(seed: u64, per_class: usize, width: usize, signal: &[(Hemisphere, usize, f64)]) -> FeatureTable {
    let spec = CohortSpec {
        n_per_class: [per_class, 0, per_class],
        schema: schema(1, width),
        signal_features: signal
            .iter()
            .map(|&(hemisphere, index, ad)| SignalFeature {
                hemisphere,
                index,
                effects: [0.0, ad / 2.0, ad],
            })
            .collect(),
        seed,
        ..CohortSpec::default()
    };
    generate(&spec).unwrap()
}

/// Two-class table from explicit left-hemisphere rows; the right
/// hemisphere mirrors the left.
pub fn table_from_rows(neg: &[Vec<f64>], pos: &[Vec<f64>]) -> FeatureTable {
    let width = neg[0].len();
    let mut subjects = Vec::new();
    for (class, rows) in [(Diagnosis::CN, neg), (Diagnosis::AD, pos)] {
        for row in rows {
            subjects.push(SubjectRecord {
                subject_id: format!("S{:04}", subjects.len()),
                diagnosis: class,
                left: row.clone(),
                right: row.clone(),
            });
        }
    }
    FeatureTable::new(schema(1, width), subjects).unwrap()
}

pub fn gaussian_rows(rng: &mut SeededRng, n: usize, mean: &[f64], sd: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| mean.iter().map(|m| m + sd * rng.standard_normal()).collect())
        .collect()
}

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::new(seed, Stream::Cohort, 99)
}
