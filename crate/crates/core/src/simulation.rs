//! Monte Carlo harness: the simulation designs, rejection frequencies and ERP curves.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_statistic, fit_sample_side, run_test, warp_speed_pvalues, SampleSide};
use crate::cvm::scaled_rule_bandwidth;
use crate::error::{Error, Result};
use crate::first_step::{compute_trimming, silverman_bandwidth, FirstStepFit};
use crate::pipeline::{fit_index_stage, fit_test_stage, PipelineFit, PipelineOptions};
use crate::bootstrap::null_regression;
use crate::rng::{derive_seed, domain, rademacher, stream};
use crate::scalar::Scalar;
use crate::sls::build_index;
use crate::types::{KernelSpec, ModelSpec, Sample, TestConfig, ThirdBandwidth, TrimmingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpVariant {
    Dgp1Normal,
    Dgp2ChiSq,
    Dgp3Mixture,
}

impl DgpVariant {
    pub fn number(self) -> u8 {
        match self {
            DgpVariant::Dgp1Normal => 1,
            DgpVariant::Dgp2ChiSq => 2,
            DgpVariant::Dgp3Mixture => 3,
        }
    }

    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(DgpVariant::Dgp1Normal),
            2 => Some(DgpVariant::Dgp2ChiSq),
            3 => Some(DgpVariant::Dgp3Mixture),
            _ => None,
        }
    }
}

/// Simulation design: binary outcome `Y = 1{D + Z_in ≥ u}` with
/// `u = ε + V + (p/4)(V² - 1)`; `p = 0` is the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: DgpVariant,
    pub p: f64,
    pub n: usize,
}

impl DgpSpec {
    pub fn new(variant: DgpVariant, p: f64, n: usize) -> Result<Self> {
        let spec = DgpSpec { variant, p, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 0.0) {
            return Err(Error::InvalidSpec(format!("departure p = {} must be nonnegative", self.p)));
        }
        if self.n < 50 {
            return Err(Error::InvalidSpec(format!("sample size {} is below 50", self.n)));
        }
        Ok(())
    }
}

/// Coefficients of `H(Z_in, Z_ex) = (1, Z_in, Z_ex) α`.
pub const ALPHA_COEF: [f64; 3] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];

const EXP_TRUNCATION: f64 = 3.0;

/// Mean and standard deviation of a unit-rate exponential truncated to `[0, c]`.
fn truncated_exp_moments(c: f64) -> (f64, f64) {
    let tail = (-c).exp();
    let mass = 1.0 - tail;
    let m1 = (1.0 - (1.0 + c) * tail) / mass;
    let m2 = (2.0 - (c * c + 2.0 * c + 2.0) * tail) / mass;
    (m1, (m2 - m1 * m1).sqrt())
}

/// All latent and observed variables of one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentDraw {
    pub v: f64,
    pub z_in: f64,
    pub z_ex: f64,
    pub eps: f64,
    pub u: f64,
    pub h: f64,
    pub d: f64,
    pub y: f64,
}

fn draw_error<R: Rng + ?Sized>(variant: DgpVariant, rng: &mut R) -> f64 {
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    match variant {
        DgpVariant::Dgp1Normal => 7f64.sqrt() * normal(rng),
        DgpVariant::Dgp2ChiSq => {
            let chi = ChiSquared::new(5.0).expect("valid degrees of freedom");
            (0.7f64).sqrt() * (chi.sample(rng) - 5.0)
        }
        DgpVariant::Dgp3Mixture => {
            if rng.random::<f64>() < 0.8 {
                -2.5 + 3.5f64.sqrt() * normal(rng)
            } else {
                2.5 + normal(rng)
            }
        }
    }
}

pub fn draw_latent<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> LatentDraw {
    let (exp_mean, exp_sd) = truncated_exp_moments(EXP_TRUNCATION);
    let v: f64 = rng.sample(StandardNormal);
    let z_in: f64 = rng.sample(StandardNormal);
    let raw_ex = loop {
        let e: f64 = rng.sample(Exp1);
        if e <= EXP_TRUNCATION {
            break e;
        }
    };
    let z_ex = (raw_ex - exp_mean) / exp_sd;
    let eps = draw_error(spec.variant, rng);
    let u = eps + v + spec.p / 4.0 * (v * v - 1.0);
    let h = ALPHA_COEF[0] + ALPHA_COEF[1] * z_in + ALPHA_COEF[2] * z_ex;
    let d = h + v;
    let y = if d + z_in >= u { 1.0 } else { 0.0 };
    LatentDraw {
        v,
        z_in,
        z_ex,
        eps,
        u,
        h,
        d,
        y,
    }
}

/// Draws a sample with `X = (D, Z_in)` and `Z = (Z_in, Z_ex)`.
pub fn generate_dgp<T: Scalar, R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Sample<T> {
    let draws: Vec<LatentDraw> = (0..spec.n).map(|_| draw_latent(spec, rng)).collect();
    let n = spec.n;
    let y = draws.iter().map(|d| T::lit(d.y)).collect();
    let d = draws.iter().map(|d| T::lit(d.d)).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, c)| T::lit(if c == 0 { draws[i].d } else { draws[i].z_in }));
    let z = Array2::from_shape_fn((n, 2), |(i, c)| T::lit(if c == 0 { draws[i].z_in } else { draws[i].z_ex }));
    Sample { y, d, x, z }
}

/// Moments of the latent variables used to check the design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpMoments {
    pub var_u: f64,
    pub corr_u_v: f64,
    pub corr_u_d: f64,
    pub var_d_plus_z_in: f64,
    pub mean_z_ex: f64,
    pub var_z_ex: f64,
}

pub fn dgp_moments<R: Rng + ?Sized>(variant: DgpVariant, p: f64, draws: usize, rng: &mut R) -> DgpMoments {
    let spec = DgpSpec { variant, p, n: draws };
    // Columns: u, v, d, d + z_in, z_ex.
    let mut sum = [0.0f64; 5];
    let mut cross = [[0.0f64; 5]; 5];
    for _ in 0..draws {
        let l = draw_latent(&spec, rng);
        let row = [l.u, l.v, l.d, l.d + l.z_in, l.z_ex];
        for a in 0..5 {
            sum[a] += row[a];
            for b in a..5 {
                cross[a][b] += row[a] * row[b];
            }
        }
    }
    let m = draws as f64;
    let cov = |a: usize, b: usize| (cross[a.min(b)][a.max(b)] - sum[a] * sum[b] / m) / (m - 1.0);
    DgpMoments {
        var_u: cov(0, 0),
        corr_u_v: cov(0, 1) / (cov(0, 0) * cov(1, 1)).sqrt(),
        corr_u_d: cov(0, 2) / (cov(0, 0) * cov(2, 2)).sqrt(),
        var_d_plus_z_in: cov(3, 3),
        mean_z_ex: sum[4] / m,
        var_z_ex: cov(4, 4),
    }
}

/// Model of the simulation study: index `D + θ Z_in + γ (D - H)`.
pub fn simulation_model() -> ModelSpec {
    ModelSpec::control_function_index(2, Some(0), vec![(-1.0, 3.0), (-3.0, 2.0)])
        .expect("valid simulation model")
}

/// `C · σ̂(index) · n^(-1/6)` at `beta_hat`, using the first step's `H̃`.
pub fn bandwidth_rule_c<T: Scalar>(
    sample: &Sample<T>,
    beta_hat: &[T],
    first_step: &FirstStepFit<T>,
    model: &ModelSpec,
    c: f64,
) -> Result<T> {
    let index = build_index(beta_hat, sample, first_step, model, true)?;
    scaled_rule_bandwidth(&index, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    Selected,
    RuleC(f64),
}

impl BandwidthMode {
    fn third(self) -> ThirdBandwidth {
        match self {
            BandwidthMode::Selected => ThirdBandwidth::Auto,
            BandwidthMode::RuleC(c) => ThirdBandwidth::RuleOfThumb(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVariant {
    Bc,
    Un,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub dgp: DgpVariant,
    pub n: usize,
    pub p: f64,
    pub alpha: f64,
    pub variant: TestVariant,
    pub bandwidth: BandwidthMode,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpRow {
    pub c: f64,
    pub nominal: f64,
    pub erp_bc: f64,
    pub erp_un: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_reps: usize,
    pub seed: u64,
    pub warp_speed: bool,
    pub rejection_freq: Vec<RejectionRow>,
    pub erp: Vec<ErpRow>,
    pub runtime_seconds: f64,
}

impl McReport {
    pub fn frequency(&self, variant: TestVariant, bandwidth: BandwidthMode, alpha: f64) -> Option<f64> {
        self.rejection_freq
            .iter()
            .find(|r| r.variant == variant && r.bandwidth == bandwidth && (r.alpha - alpha).abs() < 1e-12)
            .map(|r| r.frequency)
    }
}

/// Share of p-values at or below each level.
pub fn aggregate_rejections(p_values: &[f64], alpha_levels: &[f64]) -> Vec<f64> {
    alpha_levels
        .iter()
        .map(|&a| p_values.iter().filter(|&&p| p <= a).count() as f64 / p_values.len().max(1) as f64)
        .collect()
}

fn replication_sample<T: Scalar>(dgp: &DgpSpec, seed: u64, rep: usize) -> Sample<T> {
    generate_dgp(dgp, &mut stream(seed, domain::DATA, rep as u64))
}

fn replication_weights(n: usize, seed: u64, rep: usize) -> Vec<f64> {
    let mut rng = stream(seed, domain::WARP, rep as u64);
    (0..n).map(|_| rademacher(&mut rng)).collect()
}

/// Rejection frequencies over `n_reps` simulated samples.
///
/// With `warp_speed` each replication contributes its statistic and a single
/// bootstrap statistic; p-values compare every statistic with the pooled
/// bootstrap draws. Otherwise every replication runs the full `J`-draw test.
pub fn run_mc_experiment<T: Scalar>(
    dgp: &DgpSpec,
    config: &TestConfig,
    n_reps: usize,
    warp_speed: bool,
    bandwidth_mode: BandwidthMode,
) -> Result<McReport> {
    dgp.validate()?;
    config.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidSpec("at least one replication is required".into()));
    }
    let start = Instant::now();
    let model = simulation_model();
    let kspec = KernelSpec::default();
    let trim_spec = TrimmingSpec::default();
    let opts = PipelineOptions::<T>::new(
        config.bias_corrected,
        bandwidth_mode.third(),
        config.standardize_nu,
        config.optimizer.clone(),
    );

    let frequencies = if warp_speed {
        let pairs: Vec<(f64, f64)> = (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let sample = replication_sample::<T>(dgp, config.seed, rep);
                let side = fit_sample_side(&sample, &model, kspec, &trim_spec, &opts)?;
                let boot_opts = side.bootstrap_options(&opts, config.pin_bootstrap);
                let mut rng = stream(config.seed, domain::WARP, rep as u64);
                let draw = side.bootstrap_draw(&sample, &mut rng);
                let s_star = bootstrap_statistic(&sample, &draw, &model, kspec, &side.h_first, &side.trim, &boot_opts)?;
                Ok((side.fit.test.s_n.as_f64(), s_star.as_f64()))
            })
            .collect::<Result<_>>()?;
        let (s, s_star): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let p = warp_speed_pvalues(&s, &s_star)?;
        aggregate_rejections(&p, &config.alpha_levels)
    } else {
        let mut rep_config = config.clone();
        rep_config.bandwidth = bandwidth_mode.third();
        let rejections: Vec<Vec<bool>> = (0..n_reps)
            .map(|rep| {
                let sample = replication_sample::<T>(dgp, config.seed, rep);
                let mut c = rep_config.clone();
                c.seed = derive_seed(config.seed, domain::REPLICATION, rep as u64);
                let result = run_test(&sample, &model, kspec, &trim_spec, &c)?;
                Ok(result.levels.iter().map(|l| l.reject).collect())
            })
            .collect::<Result<_>>()?;
        (0..config.alpha_levels.len())
            .map(|k| rejections.iter().filter(|r| r[k]).count() as f64 / n_reps as f64)
            .collect()
    };

    let variant = if config.bias_corrected { TestVariant::Bc } else { TestVariant::Un };
    let rejection_freq = config
        .alpha_levels
        .iter()
        .zip(frequencies)
        .map(|(&alpha, frequency)| RejectionRow {
            dgp: dgp.variant,
            n: dgp.n,
            p: dgp.p,
            alpha,
            variant,
            bandwidth: bandwidth_mode,
            frequency,
        })
        .collect();
    Ok(McReport {
        n_reps,
        seed: config.seed,
        warp_speed,
        rejection_freq,
        erp: Vec::new(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Default grid of rule-of-thumb multipliers for the ERP experiment.
pub const DEFAULT_C_GRID: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

/// Statistic and one bootstrap statistic per `C` for one variant of one replication.
fn erp_replication<T: Scalar>(
    sample: &Sample<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    trim: &[bool],
    h_first: &[T],
    xi: &[f64],
    c_grid: &[f64],
    opts: &PipelineOptions<T>,
) -> Result<Vec<(f64, f64)>> {
    let index = fit_index_stage(sample, &sample.d, model, kspec, h_first, trim, opts)?;
    c_grid
        .iter()
        .map(|&c| {
            let mut copts = opts.clone();
            copts.bandwidth = ThirdBandwidth::RuleOfThumb(c);
            let test = fit_test_stage(sample, &index, model, kspec, &copts)?;
            let fit = PipelineFit {
                index: index.clone(),
                test,
            };
            let side = SampleSide {
                trim: trim.to_vec(),
                h_first: h_first.to_vec(),
                g_null: null_regression(sample, &fit, model, kspec)?,
                fit,
            };
            let draw = crate::bootstrap::draw_with_weights(
                sample,
                &side.g_null,
                &side.fit.index.first.h_hat,
                xi.iter().map(|&x| T::lit(x)).collect(),
            );
            let s_star = bootstrap_statistic(sample, &draw, model, kspec, h_first, trim, &copts)?;
            Ok((side.fit.test.s_n.as_f64(), s_star.as_f64()))
        })
        .collect()
}

/// Error in rejection probability of the BC and UN tests under the null for
/// third-step bandwidths `C · h_S`, by warp-speed simulation.
///
/// Both variants and all `C` values share each replication's sample and
/// bootstrap weights. `dgp.p` should be zero for the ERP to be meaningful.
pub fn run_erp_experiment<T: Scalar>(
    dgp: &DgpSpec,
    config: &TestConfig,
    n_reps: usize,
    c_grid: &[f64],
) -> Result<McReport> {
    dgp.validate()?;
    config.validate()?;
    if n_reps == 0 || c_grid.is_empty() {
        return Err(Error::InvalidSpec("need at least one replication and one C value".into()));
    }
    if let Some(c) = c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::InvalidSpec(format!("bandwidth multiplier {c} must be positive")));
    }
    let start = Instant::now();
    let model = simulation_model();
    let kspec = KernelSpec::default();
    let trim_spec = TrimmingSpec::default();
    let variants = [(TestVariant::Bc, true), (TestVariant::Un, false)];

    // Per replication: for each variant, (s, s*) per C.
    let per_rep: Vec<Vec<Vec<(f64, f64)>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let sample = replication_sample::<T>(dgp, config.seed, rep);
            let trim = compute_trimming(&sample, &trim_spec, kspec, None)?;
            let h_first = silverman_bandwidth(sample.z_view(), kspec.order())?;
            let xi = replication_weights(dgp.n, config.seed, rep);
            variants
                .iter()
                .map(|&(_, bc)| {
                    let opts = PipelineOptions::<T>::new(
                        bc,
                        ThirdBandwidth::Auto,
                        config.standardize_nu,
                        config.optimizer.clone(),
                    );
                    erp_replication(&sample, &model, kspec, &trim, &h_first, &xi, c_grid, &opts)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rejection_freq = Vec::new();
    let mut erp = Vec::new();
    for (ci, &c) in c_grid.iter().enumerate() {
        let mut freqs = Vec::new();
        for (vi, &(variant, _)) in variants.iter().enumerate() {
            let (s, s_star): (Vec<f64>, Vec<f64>) = per_rep.iter().map(|r| r[vi][ci]).unzip();
            let p = warp_speed_pvalues(&s, &s_star)?;
            let f = aggregate_rejections(&p, &config.alpha_levels);
            for (&alpha, &frequency) in config.alpha_levels.iter().zip(&f) {
                rejection_freq.push(RejectionRow {
                    dgp: dgp.variant,
                    n: dgp.n,
                    p: dgp.p,
                    alpha,
                    variant,
                    bandwidth: BandwidthMode::RuleC(c),
                    frequency,
                });
            }
            freqs.push(f);
        }
        for (k, &nominal) in config.alpha_levels.iter().enumerate() {
            erp.push(ErpRow {
                c,
                nominal,
                erp_bc: freqs[0][k] - nominal,
                erp_un: freqs[1][k] - nominal,
            });
        }
    }
    Ok(McReport {
        n_reps,
        seed: config.seed,
        warp_speed: true,
        rejection_freq,
        erp,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
