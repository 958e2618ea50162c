//! The three estimation steps chained together, shared by the sample and the
//! bootstrap side of the test.

use crate::cvm::{
    nu_values, scaled_rule_bandwidth, select_bandwidth_on, statistic, third_step_on_index,
    BandwidthSelection, NuValues, ThirdStepFit,
};
use crate::error::Result;
use crate::first_step::{fit_first_step_on, FirstStepFit};
use crate::scalar::Scalar;
use crate::sls::{build_index, fit_sls, SlsFit, SlsOptions};
use crate::types::{KernelSpec, ModelSpec, Sample, ThirdBandwidth};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions<T> {
    pub bias_corrected: bool,
    pub bandwidth: ThirdBandwidth,
    pub standardize_nu: bool,
    pub sls: SlsOptions,
    /// Skips the index optimization and uses these coefficients.
    pub pinned_beta: Option<Vec<T>>,
    /// Skips bandwidth selection and uses this third-step bandwidth.
    pub pinned_h: Option<T>,
}

impl<T: Scalar> PipelineOptions<T> {
    pub fn new(bias_corrected: bool, bandwidth: ThirdBandwidth, standardize_nu: bool, sls: SlsOptions) -> Self {
        PipelineOptions {
            bias_corrected,
            bandwidth,
            standardize_nu,
            sls,
            pinned_beta: None,
            pinned_h: None,
        }
    }
}

/// First step and index coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexStage<T> {
    pub first: FirstStepFit<T>,
    pub sls: Option<SlsFit<T>>,
    pub beta_hat: Vec<T>,
}

/// Third step and statistic for given index coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TestStage<T> {
    pub h_third: T,
    pub selection: Option<BandwidthSelection<T>>,
    pub third: ThirdStepFit<T>,
    pub nu: NuValues<T>,
    pub s_n: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFit<T> {
    pub index: IndexStage<T>,
    pub test: TestStage<T>,
}

/// First step on `first_target` (the sample's `D`, or `D*` in the bootstrap)
/// followed by the index optimization.
///
/// The generated covariate `D - H` always uses the sample's own `D`.
#[allow(clippy::too_many_arguments)]
pub fn fit_index_stage<T: Scalar>(
    sample: &Sample<T>,
    first_target: &[T],
    model: &ModelSpec,
    kspec: KernelSpec,
    h_first: &[T],
    trim: &[bool],
    opts: &PipelineOptions<T>,
) -> Result<IndexStage<T>> {
    let first = fit_first_step_on(first_target, sample.z_view(), kspec, h_first, trim, opts.bias_corrected)?;
    match &opts.pinned_beta {
        Some(beta) => Ok(IndexStage {
            first,
            sls: None,
            beta_hat: beta.clone(),
        }),
        None => {
            let sls = fit_sls(sample, &first, model, kspec, &opts.sls, opts.bias_corrected)?;
            Ok(IndexStage {
                beta_hat: sls.beta_hat.clone(),
                first,
                sls: Some(sls),
            })
        }
    }
}

/// Third-step bandwidth, bias-corrected residuals and the statistic.
pub fn fit_test_stage<T: Scalar>(
    sample: &Sample<T>,
    stage: &IndexStage<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    opts: &PipelineOptions<T>,
) -> Result<TestStage<T>> {
    let bc = opts.bias_corrected;
    let trim = &stage.first.trim;
    let index = build_index(&stage.beta_hat, sample, &stage.first, model, bc)?;
    let nu = nu_values(sample, &stage.first, model, bc, opts.standardize_nu);
    let (h_third, selection) = match (opts.pinned_h, opts.bandwidth) {
        (Some(h), _) => (h, None),
        (None, ThirdBandwidth::Fixed(h)) => (T::lit(h), None),
        (None, ThirdBandwidth::RuleOfThumb(c)) => (scaled_rule_bandwidth(&index, c)?, None),
        (None, ThirdBandwidth::Auto) => {
            let sel = select_bandwidth_on(&sample.y, &index, kspec, trim, &nu.gram, bc)?;
            (sel.h, Some(sel))
        }
    };
    let third = third_step_on_index(&sample.y, index.view(), h_third, kspec, trim, bc)?;
    let s_n = statistic(&third, &nu, trim);
    Ok(TestStage {
        h_third,
        selection,
        third,
        nu,
        s_n,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_pipeline<T: Scalar>(
    sample: &Sample<T>,
    first_target: &[T],
    model: &ModelSpec,
    kspec: KernelSpec,
    h_first: &[T],
    trim: &[bool],
    opts: &PipelineOptions<T>,
) -> Result<PipelineFit<T>> {
    let index = fit_index_stage(sample, first_target, model, kspec, h_first, trim, opts)?;
    let test = fit_test_stage(sample, &index, model, kspec, opts)?;
    Ok(PipelineFit { index, test })
}
