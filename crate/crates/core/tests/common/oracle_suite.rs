//! Library routines against direct loops and independent computations.

use ndarray::{array, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use semigen::cvm::{bandwidth_objective, select_bandwidth_on, statistic, third_step_on_index};
use semigen::kernels::SymmetricKernel;
use semigen::sls::{build_index, fit_sls, loo_criterion, SlsOptions};
use semigen::{
    boost_correct, compute_trimming, fit_first_step_on, nu_values, nw_fit, nw_fit_loo, BandwidthSpec, KernelSpec,
    ModelSpec, Sample, TrimmingSpec,
};

use super::*;

const SPEC: KernelSpec = KernelSpec::GaussianOrder2;
const TOL: f64 = 1e-10;

pub fn checks() -> Vec<Check> {
    vec![
        ("nw_fit_hand_points", nw_fit_hand_points),
        ("nw_fit_random", nw_fit_random),
        ("nw_fit_loo_loop", nw_fit_loo_loop),
        ("nw_fit_loo_subsample", nw_fit_loo_subsample),
        ("boost_correct_two_pass", boost_correct_two_pass),
        ("symmetric_kernel_smooths", symmetric_kernel_smooths),
        ("first_step_two_pass", first_step_two_pass),
        ("third_step_two_pass", third_step_two_pass),
        ("statistic_double_sum", statistic_double_sum),
        ("statistic_integral_form", statistic_integral_form),
        ("sls_criterion_double_loop", sls_criterion_double_loop),
        ("bandwidth_objective_loop", bandwidth_objective_loop),
        ("sls_below_grid", sls_below_grid),
        ("bandwidth_below_grid", bandwidth_below_grid),
    ]
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn trim_some(n: usize, every: usize) -> Vec<bool> {
    (0..n).map(|i| i % every != 1).collect()
}

fn nw_fit_hand_points() -> Result<(), String> {
    let pts = array![[0.0], [1.0], [-0.5], [2.0]];
    let t = [1.0, 3.0, -2.0, 0.5];
    let at = array![[0.3]];
    let h = [0.8];
    let fit = nw_fit(&t, pts.view(), at.view(), &h, SPEC, None).map_err(err)?;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..4 {
        let u: f64 = (0.3 - pts[[j, 0]]) / 0.8;
        let k = (-0.5 * u * u).exp() / SQRT_2PI / 0.8;
        num += t[j] * k;
        den += k;
    }
    ensure(close(fit.numerator[0], num / 4.0, 1e-12), || "numerator".into())?;
    ensure(close(fit.denominator[0], den / 4.0, 1e-12), || "denominator".into())?;
    ensure(close(fit.ratio[0], num / den, 1e-12), || "ratio".into())
}

fn nw_fit_random() -> Result<(), String> {
    let mut r = rng(11);
    for n in 2..=8 {
        let pts = normal_matrix(&mut r, n, 2);
        let at = normal_matrix(&mut r, 3, 2);
        let t = normal_vec(&mut r, n);
        let h = [0.6, 1.3];
        let keep = trim_some(n, 3);
        let fit = nw_fit(&t, pts.view(), at.view(), &h, SPEC, Some(&keep)).map_err(err)?;
        for e in 0..3 {
            let (a, b) = sums(&t, &pts, &row(&at, e), &h, Some(&keep), None);
            ensure(close(fit.numerator[e], a, TOL) && close(fit.denominator[e], b, TOL), || {
                format!("n={n} eval {e}")
            })?;
        }
    }
    Ok(())
}

fn nw_fit_loo_loop() -> Result<(), String> {
    let mut r = rng(12);
    for n in 2..=8 {
        let pts = normal_matrix(&mut r, n, 2);
        let t = normal_vec(&mut r, n);
        let h = [0.9, 0.5];
        for keep in [None, Some(trim_some(n, 4))] {
            let fit = nw_fit_loo(&t, pts.view(), &h, SPEC, keep.as_deref()).map_err(err)?;
            for i in 0..n {
                let (a, b) = sums(&t, &pts, &row(&pts, i), &h, keep.as_deref(), Some(i));
                ensure(close(fit.numerator[i], a, TOL) && close(fit.denominator[i], b, TOL), || {
                    format!("n={n} unit {i}")
                })?;
                ensure(close(fit.ratio[i], ratio(a, b), TOL), || format!("ratio n={n} unit {i}"))?;
            }
        }
    }
    Ok(())
}

fn nw_fit_loo_subsample() -> Result<(), String> {
    let mut r = rng(13);
    let pts = normal_matrix(&mut r, 5, 1);
    let t = normal_vec(&mut r, 5);
    let h = [0.7];
    let loo = nw_fit_loo(&t, pts.view(), &h, SPEC, None).map_err(err)?;
    for i in 0..5 {
        let rest: Vec<usize> = (0..5).filter(|&j| j != i).collect();
        let sub = Array2::from_shape_fn((4, 1), |(r, _)| pts[[rest[r], 0]]);
        let sub_t: Vec<f64> = rest.iter().map(|&j| t[j]).collect();
        let at = array![[pts[[i, 0]]]];
        let full = nw_fit(&sub_t, sub.view(), at.view(), &h, SPEC, None).map_err(err)?;
        ensure(close(loo.ratio[i], full.ratio[0], 1e-12), || format!("unit {i}"))?;
        ensure(close(loo.denominator[i], full.denominator[0], 1e-12), || format!("density {i}"))?;
    }
    Ok(())
}

fn boost_correct_two_pass() -> Result<(), String> {
    let mut r = rng(14);
    let pts = normal_matrix(&mut r, 6, 2);
    let t = normal_vec(&mut r, 6);
    let h = [0.8, 0.8];
    let keep = trim_some(6, 3);
    let base = nw_fit(&t, pts.view(), pts.view(), &h, SPEC, Some(&keep)).map_err(err)?;
    let boosted = boost_correct(&t, pts.view(), &h, SPEC, Some(&keep), &base).map_err(err)?;
    let (b, want, _) = boosted_fit(&t, &pts, &h, Some(&keep), Some(&keep));
    all_close("base", &base.ratio, &b, TOL)?;
    all_close("boosted", &boosted.ratio, &want, TOL)
}

fn symmetric_kernel_smooths() -> Result<(), String> {
    let mut r = rng(15);
    let n = 8;
    let pts = normal_matrix(&mut r, n, 2);
    let t = normal_vec(&mut r, n);
    let h = [0.5, 1.1];
    let km = SymmetricKernel::new(pts.view(), &h, SPEC).map_err(err)?;
    let keep = trim_some(n, 3);
    for leave_out in [false, true] {
        for weights in [None, Some(keep.as_slice())] {
            let s = km.smooth(&t, weights, leave_out);
            for i in 0..n {
                let skip = leave_out.then_some(i);
                let (a, b) = sums(&t, &pts, &row(&pts, i), &h, weights, skip);
                ensure(close(s.numerator[i], a, TOL) && close(s.denominator[i], b, TOL), || {
                    format!("leave_out={leave_out} weighted={} unit {i}", weights.is_some())
                })?;
            }
        }
    }
    Ok(())
}

fn first_step_two_pass() -> Result<(), String> {
    let mut r = rng(16);
    let z = normal_matrix(&mut r, 6, 2);
    let d = normal_vec(&mut r, 6);
    let h = [0.7, 0.9];
    let trim = trim_some(6, 4);
    let fit = fit_first_step_on(&d, z.view(), SPEC, &h, &trim, true).map_err(err)?;
    let (base, boosted, dens) = boosted_fit(&d, &z, &h, None, Some(&trim));
    all_close("h_hat", &fit.h_hat, &base, TOL)?;
    all_close("h_tilde", &fit.h_tilde, &boosted, TOL)?;
    all_close("f_z", &fit.f_z, &dens, TOL)?;
    let plain = fit_first_step_on(&d, z.view(), SPEC, &h, &trim, false).map_err(err)?;
    ensure(plain.h_tilde == plain.h_hat, || "uncorrected fit must equal the plain fit".into())
}

fn third_step_two_pass() -> Result<(), String> {
    let mut r = rng(17);
    let w = normal_matrix(&mut r, 7, 1);
    let y: Vec<f64> = (0..7).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
    let trim = trim_some(7, 3);
    let fit = third_step_on_index(&y, w.view(), 0.6, SPEC, &trim, true).map_err(err)?;
    let (base, boosted, dens) = boosted_fit(&y, &w, &[0.6], Some(&trim), Some(&trim));
    all_close("g_hat", &fit.g_hat, &base, TOL)?;
    all_close("g_tilde", &fit.g_tilde, &boosted, TOL)?;
    all_close("f_w", &fit.f_w, &dens, TOL)?;
    let resid: Vec<f64> = y.iter().zip(&boosted).map(|(a, b)| a - b).collect();
    all_close("residuals", &fit.residuals, &resid, TOL)
}

fn fixture(seed: u64, n: usize) -> (Sample<f64>, ModelSpec, semigen::FirstStepFit<f64>) {
    let mut r = rng(seed);
    let sample = small_sample(&mut r, n);
    let model = ModelSpec::control_function_index(2, Some(0), vec![(-1.0, 3.0), (-3.0, 2.0)]).unwrap();
    let trim = compute_trimming(&sample, &TrimmingSpec::QuantilePrior { rate: 0.1 }, SPEC, None).unwrap();
    let first = semigen::fit_first_step(&sample, SPEC, &BandwidthSpec::default(), &trim, true).unwrap();
    (sample, model, first)
}

fn statistic_double_sum() -> Result<(), String> {
    let (sample, model, first) = fixture(18, 8);
    let beta = [0.8, -0.6];
    let index = build_index(&beta, &sample, &first, &model, true).map_err(err)?;
    let third = third_step_on_index(&sample.y, index.view(), 0.9, SPEC, &first.trim, true).map_err(err)?;
    let nu = nu_values(&sample, &first, &model, true, false);
    let s = statistic(&third, &nu, &first.trim);
    let n = sample.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !(first.trim[i] && first.trim[j]) {
                continue;
            }
            let sq: f64 = (0..3).map(|c| (nu.nu[[i, c]] - nu.nu[[j, c]]).powi(2)).sum();
            total += third.residuals[i] * third.f_w[i] * third.residuals[j] * third.f_w[j] * (-0.5 * sq).exp();
        }
    }
    ensure(close(s, total / n as f64, TOL), || format!("{s} vs {}", total / n as f64))
}

/// `(1/n) E_s |Σ a_i exp(i sᵀν_i)|²` with `s ~ N(0, I)` equals the closed form.
fn statistic_integral_form() -> Result<(), String> {
    let mut r = rng(19);
    let n = 10;
    let nu = normal_matrix(&mut r, n, 3);
    let a = normal_vec(&mut r, n);
    let closed = quad(&a, &gram(&nu)) / n as f64;
    let draws = 200_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let s: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let phase: f64 = (0..3).map(|c| s[c] * nu[[i, c]]).sum();
            re += a[i] * phase.cos();
            im += a[i] * phase.sin();
        }
        let v = (re * re + im * im) / n as f64;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    ensure((mean - closed).abs() <= 3.0 * se, || {
        format!("closed {closed}, integral {mean} ± {se}")
    })
}

fn sls_criterion_double_loop() -> Result<(), String> {
    let (sample, model, first) = fixture(20, 8);
    let beta = [1.3, -0.4];
    let h = 0.75;
    let index = build_index(&beta, &sample, &first, &model, true).map_err(err)?;
    let got = loo_criterion(&sample.y, index.view(), h, SPEC, &first.trim).map_err(err)?;
    let w: Vec<f64> = (0..8)
        .map(|i| sample.x[[i, 0]] + beta[0] * sample.x[[i, 1]] + beta[1] * (sample.d[i] - first.h_tilde[i]))
        .collect();
    let mut want = 0.0;
    for i in 0..8 {
        if !first.trim[i] {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..8 {
            if j != i {
                let k = kernel(&[w[i]], &[w[j]], &[h]);
                num += sample.y[j] * k;
                den += k;
            }
        }
        want += (sample.y[i] - ratio(num, den)).powi(2);
    }
    ensure(close(got, want, TOL), || format!("{got} vs {want}"))
}

fn bandwidth_objective_loop() -> Result<(), String> {
    let (sample, model, first) = fixture(21, 8);
    let beta = [0.9, -1.1];
    let index = build_index(&beta, &sample, &first, &model, true).map_err(err)?;
    let nu = nu_values(&sample, &first, &model, true, false);
    let w = index.w.clone();
    let h = [0.8];
    for bc in [true, false] {
        let got = bandwidth_objective(&sample.y, index.view(), 0.8, SPEC, &first.trim, &nu.gram, bc).map_err(err)?;
        let eps: Vec<f64> = (0..8)
            .map(|i| {
                let (a, b) = sums(&sample.y, &w, &row(&w, i), &h, None, Some(i));
                sample.y[i] - ratio(a, b)
            })
            .collect();
        let resid: Vec<f64> = (0..8)
            .map(|i| {
                if !bc {
                    return eps[i];
                }
                let (a, b) = sums(&eps, &w, &row(&w, i), &h, Some(&first.trim), Some(i));
                eps[i] - ratio(a, b)
            })
            .collect();
        let want = quad(&resid, &gram(&nu.nu)) / 64.0;
        ensure(close(got, want, TOL), || format!("bc={bc}: {got} vs {want}"))?;
    }
    Ok(())
}

fn sls_below_grid() -> Result<(), String> {
    let mut r = rng(22);
    let sample = small_sample(&mut r, 40);
    let model = ModelSpec::sample_selection(2, Some(0), vec![(-2.0, 2.0)]).map_err(err)?;
    let trim = vec![true; 40];
    let first = semigen::fit_first_step(&sample, SPEC, &BandwidthSpec::default(), &trim, true).map_err(err)?;
    let fit = fit_sls(&sample, &first, &model, SPEC, &SlsOptions::default(), true).map_err(err)?;
    let mut grid_min = f64::INFINITY;
    for b in 0..50 {
        let beta = [-2.0 + 4.0 * b as f64 / 49.0];
        let index = build_index(&beta, &sample, &first, &model, true).map_err(err)?;
        for k in 0..41 {
            let h = (-3.0 + 4.0 * k as f64 / 40.0).exp();
            grid_min = grid_min.min(loo_criterion(&sample.y, index.view(), h, SPEC, &trim).map_err(err)?);
        }
    }
    ensure(fit.criterion_value <= grid_min + 1e-6, || {
        format!("optimizer {} above grid minimum {grid_min}", fit.criterion_value)
    })
}

fn bandwidth_below_grid() -> Result<(), String> {
    let (sample, model, first) = fixture(23, 60);
    let beta = [1.0, -1.0];
    let index = build_index(&beta, &sample, &first, &model, true).map_err(err)?;
    let nu = nu_values(&sample, &first, &model, true, false);
    let sel = select_bandwidth_on(&sample.y, &index, SPEC, &first.trim, &nu.gram, true).map_err(err)?;
    let center = sel.h_rule.ln();
    let mut grid_min = f64::INFINITY;
    for k in 0..25 {
        let h = (center - 2.0 + 4.0 * k as f64 / 24.0).exp();
        let v = bandwidth_objective(&sample.y, index.view(), h, SPEC, &first.trim, &nu.gram, true).map_err(err)?;
        grid_min = grid_min.min(v);
    }
    let at_selected =
        bandwidth_objective(&sample.y, index.view(), sel.h, SPEC, &first.trim, &nu.gram, true).map_err(err)?;
    ensure(close(at_selected, sel.objective, 1e-12), || "reported objective".into())?;
    ensure(sel.objective <= grid_min + 1e-6, || {
        format!("selected {} above grid minimum {grid_min}", sel.objective)
    })
}
