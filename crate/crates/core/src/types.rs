//! Shared data model: samples, model specification, bandwidth and trimming
//! choices, and the test configuration.
//!
//! Numerical containers ([`Sample`]) are generic over the scalar type. The
//! configuration types hold plain `f64` values and are converted on use.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sls::SlsOptions;

/// Observed data `(Y, D, X, Z)` for `n` units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    /// Outcome.
    pub y: Vec<T>,
    /// Variable projected on `Z` in the first step.
    pub d: Vec<T>,
    /// Covariates, `n × p_X`.
    pub x: Array2<T>,
    /// First-step conditioning variables, `n × p`.
    pub z: Array2<T>,
}

impl<T: Scalar> Sample<T> {
    /// Builds and validates a sample.
    pub fn new(y: Vec<T>, d: Vec<T>, x: Array2<T>, z: Array2<T>) -> Result<Self> {
        validate_sample(Sample { y, d, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x_view(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn z_view(&self) -> ArrayView2<'_, T> {
        self.z.view()
    }

    /// Same covariates with a different outcome vector.
    pub fn with_outcome(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: self.n(),
            });
        }
        Ok(Sample {
            y,
            d: self.d.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
        })
    }

    /// Reorders units; used to check permutation invariance.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &[T]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_rows = |m: &Array2<T>| {
            Array2::from_shape_fn((order.len(), m.ncols()), |(r, c)| m[[order[r], c]])
        };
        Sample {
            y: pick(&self.y),
            d: pick(&self.d),
            x: pick_rows(&self.x),
            z: pick_rows(&self.z),
        }
    }
}

/// Checks the sample invariants: common length `n >= 2`, at least one `Z`
/// column, and only finite entries.
pub fn validate_sample<T: Scalar>(sample: Sample<T>) -> Result<Sample<T>> {
    let n = sample.y.len();
    let lengths = [
        ("d", sample.d.len()),
        ("x", sample.x.nrows()),
        ("z", sample.z.nrows()),
    ];
    for (name, len) in lengths {
        if len != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows but {name} has {len}"
            )));
        }
    }
    if sample.z.ncols() == 0 {
        return Err(Error::DimensionMismatch("z must have at least one column".into()));
    }
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    for (field, v) in [("y", &sample.y), ("d", &sample.d)] {
        if let Some(row) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { field, row, column: 0 });
        }
    }
    for (field, m) in [("x", &sample.x), ("z", &sample.z)] {
        if let Some(((row, column), _)) = m.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(Error::NonFiniteValue { field, row, column });
        }
    }
    Ok(sample)
}

/// Whether the generated variable entering `ν` and `q` is the first-step
/// residual `D - H(Z)` or the fitted level `H(Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratedCovariate {
    Residual,
    Level,
}

/// Shape of the index `q(β, X, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexForm {
    /// Scalar index `β₁'X + β₂ g`.
    CombinedIndex,
    /// Two-dimensional index `(β'X, g)`.
    PartialIndex,
}

/// The null-hypothesis model: which generated variable is used and how the
/// index is formed.
///
/// The full coefficient vector has `p_X + 1` entries for a combined index
/// (`X` coefficients, then the coefficient of the generated variable) and
/// `p_X` entries for a partial index. When `normalization` is set, that entry
/// is fixed to one and the remaining `beta_dim` entries are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub generated_covariate: GeneratedCovariate,
    pub index_form: IndexForm,
    pub normalization: Option<usize>,
    pub beta_dim: usize,
    pub beta_box: Vec<(f64, f64)>,
}

impl ModelSpec {
    pub fn new(
        generated_covariate: GeneratedCovariate,
        index_form: IndexForm,
        normalization: Option<usize>,
        p_x: usize,
        beta_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let total = match index_form {
            IndexForm::CombinedIndex => p_x + 1,
            IndexForm::PartialIndex => p_x,
        };
        let beta_dim = total.saturating_sub(usize::from(normalization.is_some()));
        let spec = ModelSpec {
            generated_covariate,
            index_form,
            normalization,
            beta_dim,
            beta_box,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Binary choice with a control function: `ν = (X, D - H)`,
    /// `q = β₁'X + β₂ (D - H)`.
    pub fn control_function_index(
        p_x: usize,
        normalization: Option<usize>,
        beta_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        Self::new(
            GeneratedCovariate::Residual,
            IndexForm::CombinedIndex,
            normalization,
            p_x,
            beta_box,
        )
    }

    /// Control function with a partial index: `q = (β'X, D - H)`.
    pub fn control_function_partial(
        p_x: usize,
        normalization: Option<usize>,
        beta_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        Self::new(
            GeneratedCovariate::Residual,
            IndexForm::PartialIndex,
            normalization,
            p_x,
            beta_box,
        )
    }

    /// Sample selection: `ν = (X, H)`, `q = (β'X, H)`.
    pub fn sample_selection(
        p_x: usize,
        normalization: Option<usize>,
        beta_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        Self::new(
            GeneratedCovariate::Level,
            IndexForm::PartialIndex,
            normalization,
            p_x,
            beta_box,
        )
    }

    /// Binary game with incomplete information: `ν = (X, H)`, `q = γ'X + α H`.
    pub fn binary_game(
        p_x: usize,
        normalization: Option<usize>,
        beta_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        Self::new(
            GeneratedCovariate::Level,
            IndexForm::CombinedIndex,
            normalization,
            p_x,
            beta_box,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_dim == 0 {
            return Err(Error::InvalidSpec("model needs at least one free coefficient".into()));
        }
        if self.beta_box.len() != self.beta_dim {
            return Err(Error::InvalidSpec(format!(
                "beta_box has {} intervals but beta_dim is {}",
                self.beta_box.len(),
                self.beta_dim
            )));
        }
        for (k, &(lo, hi)) in self.beta_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidSpec(format!(
                    "beta_box interval {k} = [{lo}, {hi}] must have positive width"
                )));
            }
        }
        if let Some(k) = self.normalization {
            if k >= self.n_coefficients() {
                return Err(Error::InvalidSpec(format!(
                    "normalization index {k} out of range for {} coefficients",
                    self.n_coefficients()
                )));
            }
        }
        Ok(())
    }

    /// Length of the full coefficient vector, normalized entry included.
    pub fn n_coefficients(&self) -> usize {
        self.beta_dim + usize::from(self.normalization.is_some())
    }

    /// Number of `X` columns the model expects.
    pub fn p_x(&self) -> usize {
        match self.index_form {
            IndexForm::CombinedIndex => self.n_coefficients() - 1,
            IndexForm::PartialIndex => self.n_coefficients(),
        }
    }

    /// Dimension `d` of the index.
    pub fn index_dim(&self) -> usize {
        match self.index_form {
            IndexForm::CombinedIndex => 1,
            IndexForm::PartialIndex => 2,
        }
    }

    /// Inserts the normalized unit coefficient into a free parameter vector.
    pub fn full_coefficients<T: Scalar>(&self, beta: &[T]) -> Vec<T> {
        let mut full = beta.to_vec();
        if let Some(k) = self.normalization {
            full.insert(k, T::one());
        }
        full
    }

    pub fn box_center(&self) -> Vec<f64> {
        self.beta_box.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        beta.len() == self.beta_dim
            && beta
                .iter()
                .zip(&self.beta_box)
                .all(|(&b, &(lo, hi))| b >= lo && b <= hi)
    }
}

/// Univariate kernel family; multivariate kernels are products across
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    GaussianOrder2,
}

impl KernelSpec {
    pub fn order(self) -> u32 {
        match self {
            KernelSpec::GaussianOrder2 => 2,
        }
    }
}

/// Third-step bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThirdBandwidth {
    /// Minimize the leave-one-out Cramér-von Mises distance to the null.
    #[default]
    Auto,
    /// Fixed value.
    Fixed(f64),
    /// `C · σ̂(index) · n^(-1/6)`.
    RuleOfThumb(f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthSpec {
    /// First-step bandwidth per `Z` column; Silverman's rule when `None`.
    pub h_first: Option<Vec<f64>>,
    pub h_third: ThirdBandwidth,
    /// Bandwidth per `(X, Z)` column for the joint density used by density
    /// trimming; rule of thumb when `None`.
    pub h_density: Option<Vec<f64>>,
}

impl BandwidthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.iter().all(|h| h.is_finite() && *h > 0.0);
        if let Some(h) = &self.h_first {
            if !positive(h) {
                return Err(Error::BandwidthNonPositive);
            }
        }
        if let Some(h) = &self.h_density {
            if !positive(h) {
                return Err(Error::BandwidthNonPositive);
            }
        }
        match self.h_third {
            ThirdBandwidth::Fixed(h) | ThirdBandwidth::RuleOfThumb(h) if !(h.is_finite() && h > 0.0) => {
                Err(Error::BandwidthNonPositive)
            }
            _ => Ok(()),
        }
    }
}

/// How the trimming indicators `t̂` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimmingSpec {
    /// Drop units whose `|X|` or `|Z|` exceeds the per-coordinate empirical
    /// `1 - rate` quantile.
    QuantilePrior { rate: f64 },
    /// Keep units whose joint kernel density estimate of `(X, Z)` is at least `tau`.
    DensityThreshold { tau: f64 },
}

impl Default for TrimmingSpec {
    fn default() -> Self {
        TrimmingSpec::QuantilePrior { rate: 0.01 }
    }
}

impl TrimmingSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrimmingSpec::QuantilePrior { rate } if !(0.0..0.5).contains(&rate) => Err(
                Error::InvalidSpec(format!("trimming rate {rate} must lie in [0, 0.5)")),
            ),
            TrimmingSpec::DensityThreshold { tau } if !(tau.is_finite() && tau > 0.0) => Err(
                Error::InvalidSpec(format!("density threshold {tau} must be positive")),
            ),
            _ => Ok(()),
        }
    }
}

/// Settings for one run of the bootstrap test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Number of bootstrap replications `J`.
    pub n_bootstrap: usize,
    pub alpha_levels: Vec<f64>,
    /// Use the boosted first- and third-step estimators (BC test) or the
    /// plain Nadaraya-Watson ones (UN test).
    pub bias_corrected: bool,
    pub seed: u64,
    /// Standardize the columns of `ν` before building the Gaussian gram.
    /// Off by default; not part of the reference procedure.
    pub standardize_nu: bool,
    pub bandwidth: ThirdBandwidth,
    /// Reuse the sample `β̂` and third-step bandwidth in every bootstrap
    /// replication instead of re-estimating them. Much faster but not the
    /// reference procedure; intended for smoke tests.
    pub pin_bootstrap: bool,
    pub optimizer: SlsOptions,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            n_bootstrap: 999,
            alpha_levels: vec![0.01, 0.05, 0.10],
            bias_corrected: true,
            seed: 0,
            standardize_nu: false,
            bandwidth: ThirdBandwidth::Auto,
            pin_bootstrap: false,
            optimizer: SlsOptions::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bootstrap == 0 {
            return Err(Error::InvalidSpec("number of bootstrap draws must be at least 1".into()));
        }
        if self.alpha_levels.is_empty() {
            return Err(Error::InvalidSpec("at least one nominal level is required".into()));
        }
        if let Some(a) = self.alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidSpec(format!("nominal level {a} must lie in (0, 1)")));
        }
        BandwidthSpec {
            h_third: self.bandwidth,
            ..BandwidthSpec::default()
        }
        .validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Sample<f64> {
        Sample {
            y: vec![0.0, 1.0, 0.5],
            d: vec![1.0, 2.0, 3.0],
            x: array![[1.0], [2.0], [3.0]],
            z: array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]],
        }
    }

    #[test]
    fn consistent_sample_passes_unchanged() {
        let s = tiny();
        assert_eq!(validate_sample(s.clone()).unwrap(), s);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut s = tiny();
        s.z = array![[0.1], [0.2], [0.3], [0.4]];
        assert!(matches!(validate_sample(s), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nan_rejected() {
        let mut s = tiny();
        s.y[1] = f64::NAN;
        assert_eq!(
            validate_sample(s),
            Err(Error::NonFiniteValue { field: "y", row: 1, column: 0 })
        );
        let mut s = tiny();
        s.z[[2, 1]] = f64::INFINITY;
        assert_eq!(
            validate_sample(s),
            Err(Error::NonFiniteValue { field: "z", row: 2, column: 1 })
        );
    }

    #[test]
    fn single_unit_rejected() {
        let s = Sample {
            y: vec![1.0],
            d: vec![1.0],
            x: array![[1.0]],
            z: array![[1.0]],
        };
        assert_eq!(validate_sample(s), Err(Error::TooFewObservations(1)));
    }

    #[test]
    fn model_dimensions() {
        let m = ModelSpec::control_function_index(2, Some(0), vec![(-1.0, 3.0), (-3.0, 2.0)]).unwrap();
        assert_eq!(m.beta_dim, 2);
        assert_eq!(m.n_coefficients(), 3);
        assert_eq!(m.p_x(), 2);
        assert_eq!(m.full_coefficients(&[0.5, -0.25]), vec![1.0, 0.5, -0.25]);

        let sel = ModelSpec::sample_selection(3, None, vec![(-1.0, 1.0); 3]).unwrap();
        assert_eq!(sel.index_dim(), 2);
        assert_eq!(sel.p_x(), 3);
    }

    #[test]
    fn model_rejects_bad_box_and_normalization() {
        assert!(ModelSpec::control_function_index(1, Some(0), vec![(1.0, 1.0)]).is_err());
        assert!(ModelSpec::control_function_index(1, Some(5), vec![(0.0, 1.0)]).is_err());
        assert!(ModelSpec::control_function_index(1, None, vec![(0.0, 1.0)]).is_err());
    }

    #[test]
    fn config_defaults() {
        let c = TestConfig::default();
        assert_eq!(c.n_bootstrap, 999);
        assert_eq!(c.alpha_levels, vec![0.01, 0.05, 0.10]);
        assert!(c.bias_corrected);
        assert_eq!(TrimmingSpec::default(), TrimmingSpec::QuantilePrior { rate: 0.01 });
    }
}
