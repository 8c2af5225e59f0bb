//! Independent reference computations shared by the oracle suites and the
//! acceptance run.

use std::f64::consts::FRAC_PI_2;

use dualspace::cohort::{Diagnosis, Hemisphere};
use dualspace::gda::{ClassStats, GdaConfig, GdaModel};
use dualspace::rng::SeededRng;

/// Integrand of the incomplete beta after t = sin²θ, divided by its peak so
/// large exponents neither underflow nor dominate the tolerance:
/// 2 sin^(2a-1)θ cos^(2b-1)θ / peak.
struct BetaIntegrand {
    p: f64,
    q: f64,
    log_peak: f64,
}

impl BetaIntegrand {
    fn new(a: f64, b: f64) -> Self {
        let (p, q) = (2.0 * a - 1.0, 2.0 * b - 1.0);
        let theta = if p + q > 0.0 { (p / (p + q)).sqrt().asin() } else { FRAC_PI_2 / 2.0 };
        let mut s = BetaIntegrand { p, q, log_peak: 0.0 };
        s.log_peak = s.log_raw(theta);
        s
    }

    fn log_raw(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let term = |e: f64, v: f64| if e == 0.0 { 0.0 } else { e * v.ln() };
        term(self.p, s) + term(self.q, c)
    }

    fn eval(&self, theta: f64) -> f64 {
        (self.log_raw(theta) - self.log_peak).exp()
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // split into panels first so a narrow peak is never missed
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// P(F > f) for F ~ F(d1, d2) as I_x(d2/2, d1/2), x = d2 / (d2 + d1 f).
pub fn f_sf_quadrature(f: f64, d1: u64, d2: u64) -> f64 {
    let (a, b) = (d2 as f64 / 2.0, d1 as f64 / 2.0);
    let x = d2 as f64 / (d2 as f64 + d1 as f64 * f);
    let g = BetaIntegrand::new(a, b);
    let integrand = |t: f64| g.eval(t);
    let theta_x = x.sqrt().asin();
    let total = integrate(&integrand, 0.0, FRAC_PI_2, 1e-14);
    let lower = integrate(&integrand, 0.0, theta_x, 1e-14);
    let upper = integrate(&integrand, theta_x, FRAC_PI_2, 1e-14);
    // take the smaller piece directly to avoid cancellation
    if lower <= upper {
        lower / total
    } else {
        1.0 - upper / total
    }
}

/// F from pairwise differences only, never forming a group mean:
/// SSW_i = Σ_{a<b} (y_a - y_b)² / n_i and SSB = Σ_{i<j} n_i n_j (ȳ_i - ȳ_j)² / N.
pub fn brute_force_f(groups: &[Vec<f64>]) -> f64 {
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let mut ssw = 0.0;
    for g in groups {
        let mut s = 0.0;
        for a in 0..g.len() {
            for b in a + 1..g.len() {
                s += (g[a] - g[b]).powi(2);
            }
        }
        ssw += s / g.len() as f64;
    }
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let mut ssb = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            ssb += (groups[i].len() * groups[j].len()) as f64 * (means[i] - means[j]).powi(2);
        }
    }
    ssb /= n as f64;
    (ssb / (k - 1) as f64) / (ssw / (n - k) as f64)
}

pub fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(a, ma) + ss(b, mb)) / (na + nb - 2.0);
    (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

pub fn random_groups(rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let k = 2 + rng.below(2);
    (0..k)
        .map(|_| {
            let n = 3 + rng.below(28);
            let shift = 2.0 * rng.standard_normal();
            let scale = 0.1 + 5.0 * rng.uniform();
            (0..n).map(|_| shift + scale * rng.standard_normal()).collect()
        })
        .collect()
}

pub const CLASSES: [Diagnosis; 2] = [Diagnosis::CN, Diagnosis::AD];

pub fn exact() -> GdaConfig {
    GdaConfig {
        shrinkage: 0.0,
        ..GdaConfig::default()
    }
}

/// Stats whose ML covariance is exactly `cov`.
pub fn stats(n: usize, mean: &[f64], cov: &[f64]) -> ClassStats {
    ClassStats {
        n,
        mean: mean.to_vec(),
        scatter: cov.iter().map(|v| v * n as f64).collect(),
    }
}

pub fn model(a: &ClassStats, b: &ClassStats, config: &GdaConfig) -> GdaModel {
    let subset: Vec<usize> = (0..a.mean.len()).collect();
    GdaModel::from_stats(Hemisphere::Left, &subset, CLASSES, [a, b], config).unwrap()
}

/// A A^T + d I, well conditioned and symmetric.
pub fn random_spd(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d).map(|_| rng.standard_normal()).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>();
        }
        m[i * d + i] += d as f64;
    }
    m
}

pub fn random_vec(rng: &mut SeededRng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.standard_normal()).collect()
}

