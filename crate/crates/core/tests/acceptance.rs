//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::oracle::{brute_force_f, exact, f_sf_quadrature, model, pooled_t, random_groups, random_spd, random_vec, stats};
use dualspace::anova::{f_oneway, rank_features, Grouping};
use dualspace::cohort::{clean, write_csv, CleanPolicy, Comparison, Diagnosis, Hemisphere};
use dualspace::evaluation::{
    cross_validate, metrics_from_confusion, ConfusionMatrix, CvResult, DualRecipe, FoldAssignment, HoldoutResult,
    Metrics, RowPrediction,
};
use dualspace::gda::{CovarianceMode, GdaConfig};
use dualspace::pipeline::{cmd_grid, cmd_run, grid_table, prepare_table, run_prepared, Mode, RunConfig, RunOutput, GRID_FILE};
use dualspace::selection::{select_local, SelectionConfig, SelectionTrajectory};
use dualspace::special::f_sf;
use dualspace::synth::{generate, CohortSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Every evaluation and selection run made during the acceptance run, for
/// the criteria that must hold on all of them.
#[derive(Default)]
struct Pool {
    cv: Vec<(String, CvResult)>,
    holdout: Vec<(String, HoldoutResult)>,
    trajectories: Vec<(String, SelectionTrajectory)>,
}

impl Pool {
    fn add_run(&mut self, label: String, out: &RunOutput) {
        self.cv.push((label.clone(), out.report.cv.clone()));
        self.holdout.push((label.clone(), out.report.holdout.clone()));
        for t in &out.trajectory.trajectories {
            self.trajectories.push((label.clone(), t.clone()));
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(101);
    let (mut worst_f, mut worst_t) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let groups = random_groups(&mut rng);
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let got = f_oneway(&refs).unwrap().f_stat;
        let want = brute_force_f(&groups);
        worst_f = worst_f.max((got - want).abs() / want.max(1.0));

        let pair = [&groups[0][..], &groups[1][..]];
        let f2 = f_oneway(&pair).unwrap().f_stat;
        let t = pooled_t(pair[0], pair[1]);
        worst_t = worst_t.max((f2 - t * t).abs() / f2.max(1.0));
    }
    let elapsed = start.elapsed();
    outcome(
        worst_f <= 1e-9 && worst_t <= 1e-8 && elapsed < Duration::from_secs(5),
        format!("max rel err F {worst_f:.1e} (tol 1e-9), F vs t^2 {worst_t:.1e} (tol 1e-8), {}", secs(elapsed)),
    )
}

fn criterion_2() -> Outcome {
    let median = [1, 2, 5, 10, 100]
        .into_iter()
        .map(|d| (f_sf(1.0, d, d) - 0.5).abs())
        .fold(0.0, f64::max);
    let mut rng = common::rng(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = (rng.uniform() * (30f64.ln() - 0.01f64.ln()) + 0.01f64.ln()).exp();
        let d1 = 1 + rng.below(40) as u64;
        let d2 = 1 + rng.below(400) as u64;
        worst = worst.max((f_sf(f, d1, d2) - f_sf_quadrature(f, d1, d2)).abs());
    }
    outcome(
        median <= 1e-9 && worst <= 1e-9,
        format!("median err {median:.1e}, quadrature max err {worst:.1e} (tol 1e-9)"),
    )
}

fn criterion_3(pool: &mut Pool) -> Outcome {
    let start = Instant::now();
    let half_ln_tau = 0.5 * TAU.ln();
    let m = model(&stats(10, &[0.0], &[1.0]), &stats(10, &[5.0], &[1.0]), &exact());
    let m2 = model(
        &stats(10, &[0.0, 0.0], &[4.0, 0.0, 0.0, 9.0]),
        &stats(10, &[1.0, 1.0], &[2.0, 1.0, 1.0, 2.0]),
        &exact(),
    );
    let closed = [
        (m.log_density(Diagnosis::CN, &[0.0]).unwrap(), -half_ln_tau),
        (m.log_density(Diagnosis::CN, &[2.0]).unwrap(), -half_ln_tau - 2.0),
        (m.log_density(Diagnosis::AD, &[5.0]).unwrap(), -half_ln_tau),
        (
            m2.log_density(Diagnosis::CN, &[1.0, -3.0]).unwrap(),
            -TAU.ln() - 0.5 * 36f64.ln() - 0.5 * (1.0f64 / 4.0 + 1.0),
        ),
        (
            m2.log_density(Diagnosis::AD, &[2.0, 2.0]).unwrap(),
            -TAU.ln() - 0.5 * 3f64.ln() - 0.5 * (2.0 / 3.0),
        ),
    ];
    let density_err = closed.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut rng = common::rng(303);
    let shared = GdaConfig {
        covariance_mode: CovarianceMode::Shared,
        ..GdaConfig::default()
    };
    let mut affine_err = 0.0f64;
    for _ in 0..100 {
        let d = 1 + rng.below(8);
        let a = stats(20 + rng.below(50), &random_vec(&mut rng, d, 2.0), &random_spd(&mut rng, d));
        let b = stats(20 + rng.below(50), &random_vec(&mut rng, d, 2.0), &random_spd(&mut rng, d));
        let m = model(&a, &b, &shared);
        let x = random_vec(&mut rng, d, 3.0);
        let y = random_vec(&mut rng, d, 3.0);
        let alpha = 4.0 * rng.uniform() - 2.0;
        let z: Vec<f64> = x.iter().zip(&y).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let lo = |v: &[f64]| m.classify(v).unwrap().log_odds;
        let (lx, ly, lz) = (lo(&x), lo(&y), lo(&z));
        let err = (lz - (alpha * lx + (1.0 - alpha) * ly)).abs() / (1.0 + lx.abs() + ly.abs());
        affine_err = affine_err.max(err);
    }

    // 200 per class, means at -3 and +3 sd on the first of three features
    let neg = common::gaussian_rows(&mut rng, 200, &[-3.0, 0.0, 0.0], 1.0);
    let pos = common::gaussian_rows(&mut rng, 200, &[3.0, 0.0, 0.0], 1.0);
    let table = common::table_from_rows(&neg, &pos);
    let folds = FoldAssignment::stratified(&table, 10, 303).unwrap();
    let recipe = DualRecipe {
        left_subset: vec![0, 1, 2],
        right_subset: vec![],
        gda: GdaConfig::default(),
    };
    let cv = cross_validate(&table, &recipe, &folds).unwrap();
    let accuracy = cv.metrics.accuracy;
    pool.cv.push(("separated 400".into(), cv));
    let elapsed = start.elapsed();
    outcome(
        density_err <= 1e-12 && affine_err <= 1e-8 && accuracy >= 0.99 && elapsed < Duration::from_secs(10),
        format!(
            "density err {density_err:.1e} (tol 1e-12), affinity err {affine_err:.1e} over 100 models (tol 1e-8), CV acc {accuracy:.4} on 400 subjects, {}",
            secs(elapsed)
        ),
    )
}

/// Subject-level OR containment: the fused positives are exactly the union
/// of the per-space positives. Also checks the rate inequalities it implies.
fn or_violations(predictions: &[RowPrediction], fused: &Metrics, left: Option<&Metrics>, right: Option<&Metrics>) -> usize {
    let mut bad = 0;
    for p in predictions {
        let any = p.left == Some(true) || p.right == Some(true);
        if any != p.predicted_positive {
            bad += 1;
        }
    }
    for side in [left, right].into_iter().flatten() {
        if fused.sensitivity < side.sensitivity || fused.specificity > side.specificity {
            bad += 1;
        }
    }
    bad
}

fn criterion_4(pool: &Pool) -> Outcome {
    let mut runs = 0;
    let mut bad = Vec::new();
    for (label, cv) in &pool.cv {
        runs += 1;
        let n = or_violations(&cv.predictions, &cv.metrics, cv.per_space.left.as_ref(), cv.per_space.right.as_ref());
        if n > 0 {
            bad.push(format!("{label} cv: {n}"));
        }
    }
    for (label, h) in &pool.holdout {
        runs += 1;
        let n = or_violations(&h.predictions, &h.metrics, h.per_space.left.as_ref(), h.per_space.right.as_ref());
        if n > 0 {
            bad.push(format!("{label} holdout: {n}"));
        }
    }
    outcome(
        bad.is_empty() && runs > 0,
        format!("{runs} evaluation runs, violations: {}", if bad.is_empty() { "none".into() } else { bad.join(", ") }),
    )
}

fn strictly_increasing(t: &SelectionTrajectory) -> bool {
    let f1: Vec<f64> = t.phases.iter().filter(|p| p.accepted).map(|p| p.cv_f1).collect();
    f1.windows(2).all(|w| w[1] > w[0])
}

const PLANTED: [usize; 5] = [3, 11, 19, 27, 42];

fn criterion_5(pool: &mut Pool) -> Outcome {
    let start = Instant::now();
    let mut found = Vec::new();
    for seed in 0..10 {
        let signal: Vec<_> = PLANTED.iter().map(|&j| (Hemisphere::Left, j, 2.0)).collect();
        let t = common::planted(seed, 200, 50, &signal);
        let r = rank_features(&t, Hemisphere::Left, Grouping::Pairwise(Comparison::CnVsAd), 0.01).unwrap();
        let config = SelectionConfig {
            seed,
            ..SelectionConfig::default()
        };
        let traj = select_local(&t, Hemisphere::Left, &r, &config).unwrap();
        found.push(traj.left_subset.iter().filter(|j| PLANTED.contains(j)).count());
        pool.trajectories.push((format!("planted seed {seed}"), traj));
    }
    let elapsed = start.elapsed();
    let recovered = found.iter().filter(|&&n| n >= 4).count();
    let not_increasing: Vec<&str> = pool
        .trajectories
        .iter()
        .filter(|(_, t)| !strictly_increasing(t))
        .map(|(l, _)| l.as_str())
        .collect();
    outcome(
        recovered >= 9 && not_increasing.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            ">=4 of 5 planted in {recovered}/10 seeds (found {found:?}), F1 strictly increasing on {}/{} trajectories, {}",
            pool.trajectories.len() - not_increasing.len(),
            pool.trajectories.len(),
            secs(elapsed)
        ),
    )
}

fn recount(predictions: &[RowPrediction]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for p in predictions {
        match (p.truth_positive, p.predicted_positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

fn criterion_6(pool: &Pool) -> Outcome {
    let m = metrics_from_confusion(&ConfusionMatrix { tp: 9, fn_: 1, tn: 5, fp: 5 });
    let fixture = (m.f1, m.accuracy, m.sensitivity, m.specificity) == (0.75, 0.7, 0.9, 0.5);
    let mut mismatches = Vec::new();
    for (label, cv) in &pool.cv {
        let mut folds = ConfusionMatrix::default();
        for f in &cv.per_fold {
            folds.tp += f.confusion.tp;
            folds.fp += f.confusion.fp;
            folds.tn += f.confusion.tn;
            folds.fn_ += f.confusion.fn_;
        }
        if recount(&cv.predictions) != cv.confusion || folds != cv.confusion {
            mismatches.push(format!("{label} cv"));
        }
    }
    for (label, h) in &pool.holdout {
        if recount(&h.predictions) != h.confusion {
            mismatches.push(format!("{label} holdout"));
        }
    }
    let runs = pool.cv.len() + pool.holdout.len();
    outcome(
        fixture && mismatches.is_empty(),
        format!(
            "fixture (f1 {}, acc {}, sen {}, spe {}), recount matches on {}/{runs} runs",
            m.f1,
            m.accuracy,
            m.sensitivity,
            m.specificity,
            runs - mismatches.len()
        ),
    )
}

fn criterion_7(pool: &mut Pool, dir: &Path) -> Outcome {
    let table = generate(&CohortSpec::paper_scale(7, 1.0)).unwrap();
    let (cleaned, removed) = clean(&table, CleanPolicy::default()).unwrap();
    let input = dir.join("paper_scale.csv");
    write_csv(&table, &input).unwrap();
    let config = RunConfig {
        input: Some(input),
        seed: 7,
        out: dir.join("grid"),
        ..RunConfig::default()
    };
    let start = Instant::now();
    let grid = cmd_grid(&config).unwrap();
    let elapsed = start.elapsed();

    let text = grid_table(&grid);
    let rows: Vec<&str> = text.lines().map(|l| l[..16].trim()).collect();
    let shaped = rows[3..] == ["F1 score %", "Accuracy %", "Sensitivity %", "Specificity %", "Left", "Right"]
        && text.lines().all(|l| l[16..].split_whitespace().count() == 12);
    let ok_cells = grid.cells.iter().filter(|c| c.status == "ok").count();
    let complete = grid.cells.iter().all(|c| {
        c.cv.is_some() && c.holdout.is_some() && c.left_size.is_some() && c.right_size.is_some()
    });

    let prepared = prepare_table(&table, &config).unwrap();
    for c in &grid.cells {
        let cell = RunConfig {
            comparison: c.comparison,
            ranking: c.ranking,
            classifier: c.classifier,
            ..config.clone()
        };
        if let Ok(out) = run_prepared(&prepared, &cell) {
            pool.add_run(format!("grid {}_{}_{}", c.comparison, c.ranking, c.classifier), &out);
        }
    }

    outcome(
        cleaned.len() == 619 && removed.len() == 9 && grid.cells.len() == 12 && ok_cells == 12 && complete && shaped
            && elapsed < Duration::from_secs(600),
        format!(
            "{} loaded, {} after cleaning, {ok_cells}/12 cells ok, table shape {}, grid {}",
            table.len(),
            cleaned.len(),
            if shaped { "ok" } else { "wrong" },
            secs(elapsed)
        ),
    )
}

fn criterion_8(pool: &mut Pool, dir: &Path) -> Outcome {
    let mut wins = 0;
    let mut ties = 0;
    let mut pairs = Vec::new();
    for seed in 1..=10u64 {
        let table = generate(&CohortSpec::paper_scale(seed, 2.0)).unwrap();
        let base = RunConfig {
            comparison: Comparison::CnVsMci,
            seed,
            out: dir.join(format!("c8_{seed}")),
            ..RunConfig::default()
        };
        let prepared = prepare_table(&table, &base).unwrap();
        let f1 = |mode: Mode, pool: &mut Pool| {
            let config = RunConfig {
                ranking: mode,
                classifier: mode,
                ..base.clone()
            };
            let out = run_prepared(&prepared, &config).unwrap();
            pool.add_run(format!("strength 2 seed {seed} {mode}/{mode}"), &out);
            out.report.cv.metrics.f1
        };
        let (global, local) = (f1(Mode::Global, pool), f1(Mode::Local, pool));
        if global > local {
            wins += 1;
        } else if global == local {
            ties += 1;
        }
        pairs.push(format!("{:.3}/{:.3}", global, local));
    }
    outcome(
        wins >= 8,
        format!("global/global beats local/local on cn-mci CV F1 in {wins}/10 seeds ({ties} ties): {}", pairs.join(" ")),
    )
}

fn criterion_9(dir: &Path) -> Outcome {
    let table = generate(&CohortSpec::paper_scale(9, 1.0)).unwrap();
    let input = dir.join("det.csv");
    write_csv(&table, &input).unwrap();
    let config = RunConfig {
        input: Some(input.clone()),
        seed: 9,
        comparison: Comparison::CnVsAd,
        out: dir.join("det_run"),
        ..RunConfig::default()
    };
    let mut compared = 0;
    let mut differ = Vec::new();
    let mut same = |name: &str, a: Vec<u8>, b: Vec<u8>| {
        compared += 1;
        if a != b {
            differ.push(name.to_string());
        }
    };

    let snapshot = |files: &[&str], dir: &Path| -> Vec<u8> {
        files.iter().flat_map(|f| fs::read(dir.join(f)).unwrap()).collect()
    };
    let run_files = ["report.json", "trajectory.json", "model.json"];
    cmd_run(&config).unwrap();
    let a = snapshot(&run_files, &config.out);
    fs::remove_dir_all(&config.out).unwrap();
    cmd_run(&config).unwrap();
    same("run", a, snapshot(&run_files, &config.out));

    let grid_config = RunConfig {
        out: dir.join("det_grid"),
        ..config.clone()
    };
    cmd_grid(&grid_config).unwrap();
    let a = snapshot(&[GRID_FILE], &grid_config.out);
    cmd_grid(&grid_config).unwrap();
    same("grid", a, snapshot(&[GRID_FILE], &grid_config.out));

    #[cfg(feature = "cli")]
    {
        let exe = env!("CARGO_BIN_EXE_dualspace");
        let input = input.to_str().unwrap();
        let commands: [(&str, Vec<&str>, &[&str]); 5] = [
            ("cli synth", vec!["synth", "--paper-scale"], &["cohort.csv", "cohort_meta.json"]),
            ("cli ingest", vec!["ingest", "--input", input], &["cleaned.csv", "cleaning_log.jsonl"]),
            ("cli rank", vec!["rank", "--input", input], &["rank_left.json", "rank_right.json"]),
            ("cli select", vec!["select", "--input", input], &["trajectory.json"]),
            ("cli run", vec!["run", "--input", input, "--comparison", "mci-ad"], &run_files),
        ];
        for (name, args, files) in commands {
            let out = dir.join(name.replace(' ', "_"));
            let mut outputs = Vec::new();
            for _ in 0..2 {
                let status = std::process::Command::new(exe)
                    .args(&args)
                    .args(["--seed", "9", "--out", out.to_str().unwrap()])
                    .output()
                    .unwrap();
                assert!(status.status.success(), "{name}: {}", String::from_utf8_lossy(&status.stderr));
                outputs.push([status.stdout, snapshot(files, &out)].concat());
                fs::remove_dir_all(&out).unwrap();
            }
            let b = outputs.pop().unwrap();
            same(name, outputs.pop().unwrap(), b);
        }
    }

    outcome(
        differ.is_empty(),
        format!("{compared} commands repeated, differing: {}", if differ.is_empty() { "none".into() } else { differ.join(", ") }),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = Pool::default();
    let mut results: Vec<(u32, Outcome)> = vec![(1, criterion_1()), (2, criterion_2()), (3, criterion_3(&mut pool))];
    results.push((7, criterion_7(&mut pool, dir.path())));
    results.push((8, criterion_8(&mut pool, dir.path())));
    results.push((9, criterion_9(dir.path())));
    // these three hold over every run collected above
    results.push((5, criterion_5(&mut pool)));
    results.push((4, criterion_4(&pool)));
    results.push((6, criterion_6(&pool)));
    results.sort_by_key(|(n, _)| *n);

    println!();
    for (n, o) in &results {
        println!("criterion {n}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("\nacceptance: {}/{} criteria pass\n", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
