//! Brute-force reference implementations and shared fixtures.
#![allow(dead_code)]

pub mod oracle_suite;
pub mod property_suite;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use semigen::Sample;

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| r.sample(StandardNormal))
}

pub fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

/// Small sample with binary outcome, two `X` columns and two `Z` columns.
pub fn small_sample(r: &mut ChaCha8Rng, n: usize) -> Sample<f64> {
    let z = normal_matrix(r, n, 2);
    let d: Vec<f64> = (0..n)
        .map(|i| 0.7 * (z[[i, 0]] + z[[i, 1]]) + r.sample::<f64, _>(StandardNormal))
        .collect();
    let x = Array2::from_shape_fn((n, 2), |(i, c)| if c == 0 { d[i] } else { z[[i, 0]] });
    let y = (0..n)
        .map(|i| {
            let u: f64 = r.sample(StandardNormal);
            if d[i] + z[[i, 0]] >= 2.0 * u {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Sample::new(y, d, x, z).unwrap()
}

/// Product Gaussian kernel weight `∏ φ((a_c - b_c)/h_c)/h_c`.
pub fn kernel(a: &[f64], b: &[f64], h: &[f64]) -> f64 {
    let mut kv = 1.0;
    for c in 0..h.len() {
        let u = (a[c] - b[c]) / h[c];
        kv *= (-0.5 * u * u).exp() / SQRT_2PI / h[c];
    }
    kv
}

pub fn row(m: &Array2<f64>, i: usize) -> Vec<f64> {
    m.row(i).to_vec()
}

/// `(Σ t_j K_ij, Σ K_ij) / count` over units `j` with `keep[j]` and `j != skip`.
pub fn sums(
    targets: &[f64],
    points: &Array2<f64>,
    at: &[f64],
    h: &[f64],
    keep: Option<&[bool]>,
    skip: Option<usize>,
) -> (f64, f64) {
    let n = points.nrows();
    let count = if skip.is_some() { n - 1 } else { n } as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..n {
        if Some(j) == skip || keep.is_some_and(|k| !k[j]) {
            continue;
        }
        let kv = kernel(at, &row(points, j), h);
        num += targets[j] * kv;
        den += kv;
    }
    (num / count, den / count)
}

pub fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Boosted full-sample smooth at the data points: the base fit uses
/// `base_keep`, the residual correction uses `corr_keep`.
pub fn boosted_fit(
    targets: &[f64],
    points: &Array2<f64>,
    h: &[f64],
    base_keep: Option<&[bool]>,
    corr_keep: Option<&[bool]>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = points.nrows();
    let mut base = vec![0.0; n];
    let mut dens = vec![0.0; n];
    for i in 0..n {
        let (a, b) = sums(targets, points, &row(points, i), h, base_keep, None);
        base[i] = ratio(a, b);
        dens[i] = b;
    }
    let resid: Vec<f64> = (0..n).map(|i| targets[i] - base[i]).collect();
    let mut boosted = vec![0.0; n];
    for i in 0..n {
        let (c, _) = sums(&resid, points, &row(points, i), h, corr_keep, None);
        boosted[i] = if dens[i] > 0.0 { base[i] + c / dens[i] } else { 0.0 };
    }
    (base, boosted, dens)
}

pub fn gram(nu: &Array2<f64>) -> Array2<f64> {
    let n = nu.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let sq: f64 = (0..nu.ncols()).map(|c| (nu[[i, c]] - nu[[j, c]]).powi(2)).sum();
        (-0.5 * sq).exp()
    })
}

pub fn quad(v: &[f64], g: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            s += v[i] * g[[i, j]] * v[j];
        }
    }
    s
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn all_close(name: &str, got: &[f64], want: &[f64], tol: f64) -> Result<(), String> {
    ensure(got.len() == want.len(), || format!("{name}: length {} vs {}", got.len(), want.len()))?;
    for (i, (&a, &b)) in got.iter().zip(want).enumerate() {
        ensure(close(a, b, tol), || format!("{name}[{i}]: {a} vs {b}"))?;
    }
    Ok(())
}

pub type Check = (&'static str, fn() -> Result<(), String>);

/// Runs every check, printing failures; returns the number of failures.
pub fn run_checks(checks: &[Check]) -> usize {
    let mut failed = 0;
    for (name, check) in checks {
        if let Err(e) = check() {
            eprintln!("  {name}: {e}");
            failed += 1;
        }
    }
    failed
}
