//! Wild-bootstrap Cramér-von Mises specification test for semiparametric index
//! models with nonparametrically generated regressors.
//!
//! The estimation code is generic over the floating point type through
//! [`Scalar`]; the `*64` and `*32` aliases below fix it.
//!
//! ```no_run
//! use semigen::{run_test, KernelSpec, ModelSpec, TestConfig, TrimmingSpec};
//!
//! let sample = semigen::read_sample_csv::<f64>("data.csv")?;
//! let model = ModelSpec::control_function_index(2, Some(0), vec![(-1.0, 3.0), (-3.0, 2.0)])?;
//! let config = TestConfig { n_bootstrap: 199, ..TestConfig::default() };
//! let result = run_test(&sample, &model, KernelSpec::default(), &TrimmingSpec::default(), &config)?;
//! println!("S_n = {}, p = {}", result.s_n, result.p_value);
//! # Ok::<(), semigen::Error>(())
//! ```

pub mod bootstrap;
pub mod cvm;
pub mod error;
pub mod first_step;
pub mod io;
pub mod kernels;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod sls;
pub mod types;

pub use bootstrap::{
    bootstrap_statistic, critical_value, draw_bootstrap, draw_with_weights, p_value, run_test,
    warp_speed_pvalues, BootstrapDraw, LevelDecision, TestResult,
};
pub use cvm::{
    fit_third_step, gram_matrix, nu_values, select_bandwidth, statistic, NuValues, ThirdStepFit,
};
pub use error::{Error, Result};
pub use first_step::{compute_trimming, fit_first_step, fit_first_step_on, silverman_bandwidth, FirstStepFit};
pub use io::{read_sample, read_sample_csv};
pub use kernels::{boost_correct, kernel_value, nw_fit, nw_fit_loo, SmoothEval};
pub use scalar::Scalar;
pub use simulation::{
    bandwidth_rule_c, generate_dgp, run_erp_experiment, run_mc_experiment, simulation_model,
    BandwidthMode, DgpSpec, DgpVariant, ErpRow, McReport, RejectionRow, TestVariant,
};
pub use sls::{build_index, fit_sls, sls_criterion, IndexValues, SlsFit, SlsOptions};
pub use types::{
    validate_sample, BandwidthSpec, GeneratedCovariate, IndexForm, KernelSpec, ModelSpec, Sample,
    TestConfig, ThirdBandwidth, TrimmingSpec,
};

pub type Sample64 = Sample<f64>;
pub type Sample32 = Sample<f32>;
pub type FirstStepFit64 = FirstStepFit<f64>;
pub type FirstStepFit32 = FirstStepFit<f32>;
pub type SlsFit64 = SlsFit<f64>;
pub type SlsFit32 = SlsFit<f32>;
pub type ThirdStepFit64 = ThirdStepFit<f64>;
pub type ThirdStepFit32 = ThirdStepFit<f32>;
pub type SmoothEval64 = SmoothEval<f64>;
pub type SmoothEval32 = SmoothEval<f32>;
pub type BootstrapDraw64 = BootstrapDraw<f64>;
pub type BootstrapDraw32 = BootstrapDraw<f32>;
