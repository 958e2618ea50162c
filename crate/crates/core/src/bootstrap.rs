//! Wild bootstrap: resampling under the null, bootstrap statistics, critical
//! values and p-values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_step::{compute_trimming, silverman_bandwidth};
use crate::kernels::SymmetricKernel;
use crate::pipeline::{run_pipeline, PipelineFit, PipelineOptions};
use crate::rng::{domain, rademacher, stream};
use crate::scalar::Scalar;
use crate::sls::{build_index, StartTrace};
use crate::types::{KernelSpec, ModelSpec, Sample, TestConfig, TrimmingSpec};

/// One bootstrap sample: `Y* = Ĝ + ξ(Y - Ĝ)` and `D* = Ĥ + ξ(D - Ĥ)` with a shared `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw<T> {
    pub y_star: Vec<T>,
    pub d_star: Vec<T>,
    pub xi: Vec<T>,
}

/// Draws Rademacher weights from `rng` and builds the bootstrap sample.
///
/// `g_hat` is the uncorrected index regression at the fitted index and `h_hat`
/// the uncorrected first-step fit.
pub fn draw_bootstrap<T: Scalar, R: Rng + ?Sized>(
    sample: &Sample<T>,
    g_hat: &[T],
    h_hat: &[T],
    rng: &mut R,
) -> BootstrapDraw<T> {
    let xi: Vec<T> = (0..sample.n()).map(|_| T::lit(rademacher(rng))).collect();
    draw_with_weights(sample, g_hat, h_hat, xi)
}

pub fn draw_with_weights<T: Scalar>(sample: &Sample<T>, g_hat: &[T], h_hat: &[T], xi: Vec<T>) -> BootstrapDraw<T> {
    let perturb = |fit: &[T], obs: &[T]| -> Vec<T> {
        fit.iter()
            .zip(obs)
            .zip(&xi)
            .map(|((&f, &o), &x)| if x == T::one() { o } else { f + x * (o - f) })
            .collect()
    };
    BootstrapDraw {
        y_star: perturb(g_hat, &sample.y),
        d_star: perturb(h_hat, &sample.d),
        xi,
    }
}

/// Center of the bootstrap outcome equation: trimmed full-sample regression of
/// `Y` on the index built from the uncorrected first step at `(β̂, ĥ)`.
pub fn null_regression<T: Scalar>(
    sample: &Sample<T>,
    fit: &PipelineFit<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
) -> Result<Vec<T>> {
    let first = &fit.index.first;
    let index = build_index(&fit.index.beta_hat, sample, first, model, false)?;
    let h = vec![fit.test.h_third; index.d];
    let km = SymmetricKernel::new(index.view(), &h, kspec)?;
    Ok(km.smooth(&sample.y, Some(&first.trim), false).ratio)
}

/// `S*` for one bootstrap sample: the full pipeline rerun on `(Y*, D*, X, Z)`
/// with the sample's trimming and first-step bandwidth.
pub fn bootstrap_statistic<T: Scalar>(
    sample: &Sample<T>,
    draw: &BootstrapDraw<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    h_first: &[T],
    trim: &[bool],
    opts: &PipelineOptions<T>,
) -> Result<T> {
    let boot = sample.with_outcome(draw.y_star.clone())?;
    let fit = run_pipeline(&boot, &draw.d_star, model, kspec, h_first, trim, opts)?;
    Ok(fit.test.s_n)
}

/// Decision at one nominal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub alpha: f64,
    /// `None` when `J` is too small to resolve this level; the test never rejects then.
    pub critical_value: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDiagnostics {
    pub n: usize,
    pub n_trimmed: usize,
    pub h_first: Vec<f64>,
    pub h_bar: Option<f64>,
    pub sls_criterion: Option<f64>,
    pub optimizer_trace: Vec<StartTrace>,
    pub bandwidth_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub s_n: f64,
    pub s_star: Vec<f64>,
    pub levels: Vec<LevelDecision>,
    pub p_value: f64,
    pub beta_hat: Vec<f64>,
    pub h_selected: f64,
    pub bias_corrected: bool,
    pub pinned_bootstrap: bool,
    pub seed: u64,
    pub diagnostics: TestDiagnostics,
}

/// `⌈(1-α)(J+1)⌉`-th smallest bootstrap statistic, or `None` if that exceeds `J`.
pub fn critical_value(s_star: &[f64], alpha: f64) -> Option<f64> {
    let j = s_star.len();
    // The small slack keeps e.g. 0.95 * 1000 from rounding up to 951.
    let k = (((1.0 - alpha) * (j + 1) as f64) - 1e-9).ceil().max(1.0) as usize;
    if k > j {
        return None;
    }
    let mut sorted = s_star.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[k - 1])
}

/// `(1 + #{s* ≥ s}) / (J + 1)`.
pub fn p_value(s_n: f64, s_star: &[f64]) -> f64 {
    let exceed = s_star.iter().filter(|&&v| v >= s_n).count();
    (1 + exceed) as f64 / (s_star.len() + 1) as f64
}

/// Warp-speed p-values: statistic `m` is compared with the pooled draws of all replications.
pub fn warp_speed_pvalues(mc_statistics: &[f64], pooled_bootstrap: &[f64]) -> Result<Vec<f64>> {
    if mc_statistics.len() != pooled_bootstrap.len() {
        return Err(Error::LengthMismatch {
            left: mc_statistics.len(),
            right: pooled_bootstrap.len(),
        });
    }
    if mc_statistics.is_empty() {
        return Err(Error::InvalidSpec("warp-speed p-values need at least one replication".into()));
    }
    let mut sorted = pooled_bootstrap.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    Ok(mc_statistics
        .iter()
        .map(|&s| {
            let below = sorted.partition_point(|&v| v < s);
            (1 + m - below) as f64 / (m + 1) as f64
        })
        .collect())
}

/// Decisions for each nominal level from `s_n` and the bootstrap draws.
pub fn decide(s_n: f64, s_star: &[f64], alpha_levels: &[f64]) -> Vec<LevelDecision> {
    alpha_levels
        .iter()
        .map(|&alpha| {
            let critical_value = critical_value(s_star, alpha);
            LevelDecision {
                alpha,
                critical_value,
                reject: critical_value.is_some_and(|c| s_n > c),
            }
        })
        .collect()
}

/// Sample-side setup shared by [`run_test`] and the Monte Carlo harness.
pub struct SampleSide<T> {
    pub trim: Vec<bool>,
    pub h_first: Vec<T>,
    pub fit: PipelineFit<T>,
    pub g_null: Vec<T>,
}

pub fn fit_sample_side<T: Scalar>(
    sample: &Sample<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    trim_spec: &TrimmingSpec,
    opts: &PipelineOptions<T>,
) -> Result<SampleSide<T>> {
    let trim = compute_trimming(sample, trim_spec, kspec, None)?;
    let h_first = silverman_bandwidth(sample.z_view(), kspec.order())?;
    let fit = run_pipeline(sample, &sample.d, model, kspec, &h_first, &trim, opts)?;
    let g_null = null_regression(sample, &fit, model, kspec)?;
    Ok(SampleSide {
        trim,
        h_first,
        fit,
        g_null,
    })
}

impl<T: Scalar> SampleSide<T> {
    /// Options for the bootstrap replications: identical to the sample side,
    /// or with `(β̂, ĥ)` pinned when `pin` is set.
    pub fn bootstrap_options(&self, opts: &PipelineOptions<T>, pin: bool) -> PipelineOptions<T> {
        let mut boot = opts.clone();
        if pin {
            boot.pinned_beta = Some(self.fit.index.beta_hat.clone());
            boot.pinned_h = Some(self.fit.test.h_third);
        }
        boot
    }

    pub fn bootstrap_draw<R: Rng + ?Sized>(&self, sample: &Sample<T>, rng: &mut R) -> BootstrapDraw<T> {
        draw_bootstrap(sample, &self.g_null, &self.fit.index.first.h_hat, rng)
    }
}

/// Runs the specification test with `config.n_bootstrap` wild-bootstrap draws.
///
/// Draw `j` uses its own random stream, so the result depends only on the
/// seed. With `config.pin_bootstrap` the bootstrap reuses `(β̂, ĥ)` instead of
/// re-optimizing, which is faster but not the procedure the test is built on.
pub fn run_test<T: Scalar>(
    sample: &Sample<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    trim_spec: &TrimmingSpec,
    config: &TestConfig,
) -> Result<TestResult> {
    config.validate()?;
    model.validate()?;
    trim_spec.validate()?;
    let opts = PipelineOptions::new(
        config.bias_corrected,
        config.bandwidth,
        config.standardize_nu,
        config.optimizer.clone(),
    );
    let side = fit_sample_side(sample, model, kspec, trim_spec, &opts)?;
    let boot_opts = side.bootstrap_options(&opts, config.pin_bootstrap);

    let s_star: Vec<f64> = (0..config.n_bootstrap)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(config.seed, domain::BOOTSTRAP, j as u64);
            let draw = side.bootstrap_draw(sample, &mut rng);
            bootstrap_statistic(sample, &draw, model, kspec, &side.h_first, &side.trim, &boot_opts).map(T::as_f64)
        })
        .collect::<Result<_>>()?;

    let s_n = side.fit.test.s_n.as_f64();
    let sls = side.fit.index.sls.as_ref();
    Ok(TestResult {
        s_n,
        levels: decide(s_n, &s_star, &config.alpha_levels),
        p_value: p_value(s_n, &s_star),
        s_star,
        beta_hat: side.fit.index.beta_hat.iter().map(|b| b.as_f64()).collect(),
        h_selected: side.fit.test.h_third.as_f64(),
        bias_corrected: config.bias_corrected,
        pinned_bootstrap: config.pin_bootstrap,
        seed: config.seed,
        diagnostics: TestDiagnostics {
            n: sample.n(),
            n_trimmed: side.trim.iter().filter(|&&t| !t).count(),
            h_first: side.h_first.iter().map(|h| h.as_f64()).collect(),
            h_bar: sls.map(|s| s.h_bar.as_f64()),
            sls_criterion: sls.map(|s| s.criterion_value.as_f64()),
            optimizer_trace: sls.map(|s| s.optimizer_trace.clone()).unwrap_or_default(),
            bandwidth_objective: side.fit.test.selection.as_ref().map(|s| s.objective.as_f64()),
        },
    })
}
