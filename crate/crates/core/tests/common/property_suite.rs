//! Structural properties of the statistic, the bootstrap and the drivers.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;
use semigen::bootstrap::fit_sample_side;
use semigen::cvm::{fit_third_step, quadratic_form, statistic};
use semigen::pipeline::PipelineOptions;
use semigen::rng::{domain, stream};
use semigen::simulation::simulation_model;
use semigen::{
    compute_trimming, critical_value, fit_first_step, generate_dgp, gram_matrix, nu_values, p_value,
    run_mc_experiment, run_test, BandwidthMode, BandwidthSpec, DgpSpec, DgpVariant, KernelSpec, McReport,
    Sample, SlsOptions, TestConfig, ThirdBandwidth, TrimmingSpec,
};

use super::*;

const SPEC: KernelSpec = KernelSpec::GaussianOrder2;

pub fn checks() -> Vec<Check> {
    vec![
        ("statistic_nonnegative_and_permutation_invariant", statistic_nonnegative_and_permutation_invariant),
        ("gram_is_psd", gram_is_psd),
        ("bootstrap_imposes_null", bootstrap_imposes_null),
        ("shared_weight_coupling", shared_weight_coupling),
        ("weight_stream_moments", weight_stream_moments),
        ("critical_values_monotone", critical_values_monotone),
        ("p_value_range", p_value_range),
        ("seeded_test_is_deterministic", seeded_test_is_deterministic),
        ("report_is_deterministic", report_is_deterministic),
    ]
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn statistic_at(sample: &Sample<f64>, beta: &[f64], h: f64) -> Result<f64, String> {
    let model = simulation_model();
    let trim = compute_trimming(sample, &TrimmingSpec::default(), SPEC, None).map_err(err)?;
    let first = fit_first_step(sample, SPEC, &BandwidthSpec::default(), &trim, true).map_err(err)?;
    let third = fit_third_step(sample, &first, beta, h, &model, SPEC, true).map_err(err)?;
    let nu = nu_values(sample, &first, &model, true, false);
    Ok(statistic(&third, &nu, &first.trim))
}

fn statistic_nonnegative_and_permutation_invariant() -> Result<(), String> {
    let mut r = rng(31);
    for case in 0..200 {
        let n = r.random_range(8..40);
        let sample = small_sample(&mut r, n);
        let beta = [r.random_range(-1.0..3.0), r.random_range(-3.0..2.0)];
        let h = r.random_range(0.2..2.0);
        let s = statistic_at(&sample, &beta, h)?;
        ensure(s >= -1e-14, || format!("case {case}: S_n = {s}"))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let permuted = statistic_at(&sample.permuted(&order), &beta, h)?;
        ensure(close(s, permuted, 1e-9), || format!("case {case}: {s} vs permuted {permuted}"))?;
    }
    Ok(())
}

fn gram_is_psd() -> Result<(), String> {
    let mut r = rng(32);
    for _ in 0..20 {
        let nu = normal_matrix(&mut r, 6, 3);
        let g = gram_matrix(nu.view());
        for _ in 0..100 {
            let v = normal_vec(&mut r, 6);
            let q = quadratic_form(&v, &g);
            ensure(q >= -1e-10, || format!("vᵀGv = {q}"))?;
        }
    }
    Ok(())
}

fn dgp_sample(n: usize, seed: u64) -> Sample<f64> {
    let spec = DgpSpec::new(DgpVariant::Dgp1Normal, 0.0, n).unwrap();
    generate_dgp(&spec, &mut stream(seed, domain::DATA, 0))
}

fn sample_side(sample: &Sample<f64>) -> Result<semigen::bootstrap::SampleSide<f64>, String> {
    let opts = PipelineOptions::new(true, ThirdBandwidth::Auto, false, SlsOptions::default());
    fit_sample_side(sample, &simulation_model(), SPEC, &TrimmingSpec::default(), &opts).map_err(err)
}

fn bootstrap_imposes_null() -> Result<(), String> {
    let sample = dgp_sample(60, 5);
    let side = sample_side(&sample)?;
    let draws = 4000;
    let mut mean_y = vec![0.0; 60];
    let mut mean_d = vec![0.0; 60];
    for j in 0..draws {
        let draw = side.bootstrap_draw(&sample, &mut stream(9, domain::BOOTSTRAP, j));
        for i in 0..60 {
            mean_y[i] += draw.y_star[i] / draws as f64;
            mean_d[i] += draw.d_star[i] / draws as f64;
        }
    }
    // Per-unit bound widened to 4 standard errors for the 120 comparisons;
    // the pooled standardized deviation is held to 3.
    let h_hat = &side.fit.index.first.h_hat;
    let root = (draws as f64).sqrt();
    let mut pooled = 0.0;
    let mut terms = 0usize;
    for i in 0..60 {
        for (name, mean, center, obs) in [
            ("Y*", mean_y[i], side.g_null[i], sample.y[i]),
            ("D*", mean_d[i], h_hat[i], sample.d[i]),
        ] {
            let se = (obs - center).abs() / root;
            if se == 0.0 {
                ensure((mean - center).abs() < 1e-12, || format!("unit {i}: {name} moved"))?;
                continue;
            }
            let z = (mean - center) / se;
            ensure(z.abs() <= 4.0, || format!("unit {i}: mean {name} {mean} vs {center} (z = {z:.2})"))?;
            pooled += z;
            terms += 1;
        }
    }
    let pooled = pooled / (terms as f64).sqrt();
    ensure(pooled.abs() <= 3.0, || format!("pooled z = {pooled:.2}"))
}

fn shared_weight_coupling() -> Result<(), String> {
    let sample = dgp_sample(60, 6);
    let side = sample_side(&sample)?;
    let h_hat = &side.fit.index.first.h_hat;
    let draws = 500;
    let mut cross = vec![0.0; 60];
    for j in 0..draws {
        let draw = side.bootstrap_draw(&sample, &mut stream(10, domain::BOOTSTRAP, j));
        for i in 0..60 {
            let ey = draw.y_star[i] - side.g_null[i];
            let ed = draw.d_star[i] - h_hat[i];
            ensure(draw.xi[i] == 1.0 || draw.xi[i] == -1.0, || "non-Rademacher weight".into())?;
            cross[i] += ey * ed / draws as f64;
        }
    }
    for i in 0..60 {
        let want = (sample.y[i] - side.g_null[i]) * (sample.d[i] - h_hat[i]);
        ensure(close(cross[i], want, 1e-10), || format!("unit {i}: {} vs {want}", cross[i]))?;
    }
    Ok(())
}

fn weight_stream_moments() -> Result<(), String> {
    let sample = dgp_sample(60, 7);
    let side = sample_side(&sample)?;
    let draws = 10_000;
    let mut sum = vec![0.0; 60];
    let mut sum_sq = vec![0.0; 60];
    for j in 0..draws {
        let draw = side.bootstrap_draw(&sample, &mut stream(11, domain::BOOTSTRAP, j));
        for (i, &x) in draw.xi.iter().enumerate() {
            sum[i] += x;
            sum_sq[i] += x * x;
        }
    }
    for i in 0..60 {
        let mean = sum[i] / draws as f64;
        ensure(mean.abs() <= 0.05, || format!("unit {i}: mean weight {mean}"))?;
        ensure(sum_sq[i] == draws as f64, || format!("unit {i}: squared weights"))?;
    }
    Ok(())
}

fn proptest_check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn critical_values_monotone() -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-10.0f64..10.0, 1..300),
        0.001f64..0.999,
        0.001f64..0.999,
    );
    proptest_check(500, strategy, |(draws, a, b)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        match (critical_value(&draws, lo), critical_value(&draws, hi)) {
            (Some(c_lo), Some(c_hi)) => prop_assert!(c_lo >= c_hi),
            // A level too small to resolve has no critical value; larger levels may.
            (None, _) => {}
            (Some(_), None) => prop_assert!(false, "smaller level resolved but larger did not"),
        }
        Ok(())
    })
}

fn p_value_range() -> Result<(), String> {
    let strategy = (prop::collection::vec(-10.0f64..10.0, 1..300), -12.0f64..12.0);
    proptest_check(500, strategy, |(draws, s)| {
        let p = p_value(s, &draws);
        let floor = 1.0 / (draws.len() + 1) as f64;
        prop_assert!(p >= floor - 1e-15 && p <= 1.0);
        Ok(())
    })
}

fn seeded_test_is_deterministic() -> Result<(), String> {
    let sample = dgp_sample(60, 8);
    let config = TestConfig {
        n_bootstrap: 20,
        seed: 2024,
        ..TestConfig::default()
    };
    let model = simulation_model();
    let run = || run_test(&sample, &model, SPEC, &TrimmingSpec::default(), &config).map_err(err);
    let first = run()?;
    let second = run()?;
    let two_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .map_err(err)?
        .install(run)?;
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let reference = sorted(&first.s_star);
    for other in [&second, &two_threads] {
        all_close("s_star", &sorted(&other.s_star), &reference, 1e-10)?;
        ensure(other.s_n == first.s_n && other.p_value == first.p_value, || "statistic differs".into())?;
    }
    Ok(())
}

fn without_runtime(mut report: McReport) -> McReport {
    report.runtime_seconds = 0.0;
    report
}

fn report_is_deterministic() -> Result<(), String> {
    let dgp = DgpSpec::new(DgpVariant::Dgp2ChiSq, 0.0, 60).unwrap();
    let config = TestConfig {
        seed: 77,
        ..TestConfig::default()
    };
    let run = || run_mc_experiment::<f64>(&dgp, &config, 4, true, BandwidthMode::Selected).map_err(err);
    let a = without_runtime(run()?);
    let b = without_runtime(run()?);
    ensure(a == b, || "reports differ".into())?;
    ensure(a.rejection_freq.iter().all(|r| (0.0..=1.0).contains(&r.frequency)), || {
        "frequency outside [0, 1]".into()
    })
}
