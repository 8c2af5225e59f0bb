//! Browser demo over the `dualspace` library. Every export takes plain
//! numbers or strings and returns a JSON string for the page to draw.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use dualspace::anova::{rank_features, Grouping};
use dualspace::cohort::{clean, CleanPolicy, Comparison, Diagnosis, FeatureTable, Hemisphere, Schema, SubjectRecord};
use dualspace::gda::{fit, CovarianceMode, GdaConfig};
use dualspace::pipeline::{prepare_table, run_prepared, Mode, RunConfig};
use dualspace::rng::{SeededRng, Stream};
use dualspace::synth::{generate, CohortSpec};

type Result<T> = std::result::Result<T, String>;

fn to_json(value: &impl Serialize) -> Result<String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn paper_cohort(seed: u64, strength: f64) -> Result<FeatureTable> {
    let table = generate(&CohortSpec::paper_scale(seed, strength)).map_err(|e| e.to_string())?;
    let (cleaned, _) = clean(&table, CleanPolicy::default()).map_err(|e| e.to_string())?;
    Ok(cleaned)
}

/// ANOVA ranking of both hemispheres of a synthetic paper-scale cohort.
/// `grouping` is `all`, `cn-mci`, `cn-ad` or `mci-ad`.
pub fn rank_json(seed: u64, strength: f64, grouping: &str, los: f64, top: usize) -> Result<String> {
    let grouping: Grouping = grouping.parse()?;
    let table = paper_cohort(seed, strength)?;
    let mut sides = Vec::new();
    for h in Hemisphere::BOTH {
        let ranked = rank_features(&table, h, grouping, los).map_err(|e| e.to_string())?;
        let report = ranked.to_report();
        sides.push(json!({
            "hemisphere": h,
            "significant": ranked.significant().len(),
            "total": ranked.scores.len(),
            "top": &report.scores[..top.min(report.scores.len())],
        }));
    }
    to_json(&json!({ "subjects": table.len(), "grouping": grouping, "los": los, "hemispheres": sides }))
}

fn two_class_table(points: &[(Diagnosis, [f64; 2])]) -> Result<FeatureTable> {
    let schema = Schema {
        measures: vec!["m".into()],
        regions: vec!["x".into(), "y".into()],
    };
    let subjects = points
        .iter()
        .enumerate()
        .map(|(i, (d, p))| SubjectRecord {
            subject_id: format!("P{i:04}"),
            diagnosis: *d,
            left: p.to_vec(),
            right: p.to_vec(),
        })
        .collect();
    FeatureTable::new(schema, subjects).map_err(|e| e.to_string())
}

/// Decision map of a 2-D GDA fit: two Gaussian classes `separation` apart,
/// the negative one correlated, the positive one stretched along x.
/// Returns the sample, the grid extent and row-major log-odds.
pub fn gda_map_json(seed: u64, separation: f64, shared: bool, per_class: usize, resolution: usize) -> Result<String> {
    if per_class < 3 || !(2..=400).contains(&resolution) {
        return Err("need at least 3 points per class and a resolution in 2..=400".into());
    }
    let mut rng = SeededRng::new(seed, Stream::Cohort, 0);
    let mut points = Vec::with_capacity(2 * per_class);
    for _ in 0..per_class {
        let (a, b) = (rng.standard_normal(), rng.standard_normal());
        points.push((Diagnosis::CN, [a, 0.7 * a + 0.71 * b]));
    }
    for _ in 0..per_class {
        let (a, b) = (rng.standard_normal(), rng.standard_normal());
        points.push((Diagnosis::AD, [separation + 1.6 * a, 0.5 * separation + 0.6 * b]));
    }
    let table = two_class_table(&points)?;
    let config = GdaConfig {
        covariance_mode: if shared { CovarianceMode::Shared } else { CovarianceMode::PerClass },
        ..GdaConfig::default()
    };
    let model = fit(&table, Hemisphere::Left, &[0, 1], &config).map_err(|e| e.to_string())?;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (_, p) in &points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..2 {
        let pad = 0.1 * (hi[k] - lo[k]).max(1.0);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let step = |k: usize| (hi[k] - lo[k]) / (resolution - 1) as f64;
    let mut log_odds = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let y = hi[1] - row as f64 * step(1);
        for col in 0..resolution {
            let x = lo[0] + col as f64 * step(0);
            log_odds.push(model.classify(&[x, y]).map_err(|e| e.to_string())?.log_odds);
        }
    }
    let mut correct = 0;
    for (d, p) in &points {
        if model.classify(p).map_err(|e| e.to_string())?.label == *d {
            correct += 1;
        }
    }
    to_json(&json!({
        "points": points.iter().map(|(d, p)| json!([p[0], p[1], *d == Diagnosis::AD])).collect::<Vec<_>>(),
        "extent": [lo[0], hi[0], lo[1], hi[1]],
        "resolution": resolution,
        "log_odds": log_odds,
        "train_accuracy": correct as f64 / points.len() as f64,
    }))
}

/// One pipeline cell on a synthetic paper-scale cohort: the selection
/// trajectories plus cross-validated and held-out metrics.
/// `mode` is `local` or `global` and sets both ranking and classifier.
pub fn selection_json(seed: u64, strength: f64, comparison: &str, mode: &str) -> Result<String> {
    let comparison: Comparison = comparison.parse()?;
    let mode: Mode = serde_json::from_value(json!(mode)).map_err(|e| e.to_string())?;
    let table = generate(&CohortSpec::paper_scale(seed, strength)).map_err(|e| e.to_string())?;
    let config = RunConfig {
        comparison,
        ranking: mode,
        classifier: mode,
        seed,
        ..RunConfig::default()
    };
    let prepared = prepare_table(&table, &config).map_err(|e| e.to_string())?;
    let out = run_prepared(&prepared, &config).map_err(|e| e.to_string())?;
    to_json(&json!({
        "comparison": comparison,
        "mode": mode,
        "significant": out.report.significant,
        "trajectories": out.trajectory.trajectories,
        "subsets": out.report.subsets,
        "cv": out.report.cv,
        "holdout": out.report.holdout,
    }))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rank(seed: u32, strength: f64, grouping: &str, los: f64, top: u32) -> std::result::Result<String, JsError> {
    js(rank_json(seed.into(), strength, grouping, los, top as usize))
}

#[wasm_bindgen]
pub fn gda_map(seed: u32, separation: f64, shared: bool, per_class: u32, resolution: u32) -> std::result::Result<String, JsError> {
    js(gda_map_json(seed.into(), separation, shared, per_class as usize, resolution as usize))
}

#[wasm_bindgen]
pub fn selection(seed: u32, strength: f64, comparison: &str, mode: &str) -> std::result::Result<String, JsError> {
    js(selection_json(seed.into(), strength, comparison, mode))
}
