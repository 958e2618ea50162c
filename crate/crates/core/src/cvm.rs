//! Third step: bias-corrected index regression, bandwidth selection and the
//! Cramér-von Mises statistic in closed form.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::first_step::FirstStepFit;
use crate::kernels::{apply_correction, SymmetricKernel};
use crate::optim::grid_then_golden;
use crate::scalar::{mean_sd, Scalar};
use crate::sls::{build_index, generated_covariate, index_rule_of_thumb, IndexValues};
use crate::types::{KernelSpec, ModelSpec, Sample};

/// Instruments `ν(X_i, H(Z_i)) = (X_i, g_i)` and their Gaussian gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NuValues<T> {
    pub nu: Array2<T>,
    pub gram: Array2<T>,
}

/// `exp(-‖ν_i - ν_j‖² / 2)` for every pair of rows.
pub fn gram_matrix<T: Scalar>(nu: ArrayView2<'_, T>) -> Array2<T> {
    let n = nu.nrows();
    let half = T::lit(0.5);
    let mut gram = Array2::from_elem((n, n), T::one());
    for i in 0..n {
        let ri = nu.row(i);
        for j in (i + 1)..n {
            let sq: T = ri
                .iter()
                .zip(nu.row(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            let v = (-half * sq).exp();
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
    }
    gram
}

/// Builds `ν` from the sample and the boosted (or plain) first-step fit.
///
/// With `standardize` each column is divided by its sample standard deviation
/// before the gram matrix is formed; constant columns are left as they are.
pub fn nu_values<T: Scalar>(
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    model: &ModelSpec,
    use_boosted: bool,
    standardize: bool,
) -> NuValues<T> {
    let n = sample.n();
    let p_x = sample.x.ncols();
    let g = generated_covariate(sample, first_step.fitted(use_boosted), model.generated_covariate);
    let mut nu = Array2::from_shape_fn((n, p_x + 1), |(i, c)| if c < p_x { sample.x[[i, c]] } else { g[i] });
    if standardize {
        for mut col in nu.columns_mut() {
            let (_, sd) = mean_sd(col.iter().copied());
            if sd > T::zero() {
                col.mapv_inplace(|v| v / sd);
            }
        }
    }
    let gram = gram_matrix(nu.view());
    NuValues { nu, gram }
}

/// `vᵀ G v`.
pub fn quadratic_form<T: Scalar>(v: &[T], gram: &Array2<T>) -> T {
    let mut total = T::zero();
    for (i, row) in gram.rows().into_iter().enumerate() {
        if v[i] == T::zero() {
            continue;
        }
        let inner: T = row.iter().zip(v).map(|(&g, &x)| g * x).sum();
        total += v[i] * inner;
    }
    total
}

/// Third-step fits at the data points.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdStepFit<T> {
    pub g_hat: Vec<T>,
    pub g_tilde: Vec<T>,
    pub f_w: Vec<T>,
    pub residuals: Vec<T>,
    pub h_selected: T,
}

/// Third step at the index built from `beta_hat`.
pub fn fit_third_step<T: Scalar>(
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    beta_hat: &[T],
    h: T,
    model: &ModelSpec,
    kspec: KernelSpec,
    bias_corrected: bool,
) -> Result<ThirdStepFit<T>> {
    let index = build_index(beta_hat, sample, first_step, model, bias_corrected)?;
    third_step_on_index(&sample.y, index.view(), h, kspec, &first_step.trim, bias_corrected)
}

/// Trimmed Nadaraya-Watson fit of `y` on the index (own point included), its
/// one-step boosting correction and the trimmed index density.
pub fn third_step_on_index<T: Scalar>(
    y: &[T],
    index: ArrayView2<'_, T>,
    h: T,
    kspec: KernelSpec,
    trim: &[bool],
    bias_corrected: bool,
) -> Result<ThirdStepFit<T>> {
    let hv = vec![h; index.ncols()];
    let km = SymmetricKernel::new(index, &hv, kspec)?;
    let base = km.smooth(y, Some(trim), false);
    let g_tilde = if bias_corrected {
        let eps: Vec<T> = y.iter().zip(&base.ratio).map(|(&a, &b)| a - b).collect();
        let corr = km.smooth(&eps, Some(trim), false);
        apply_correction(&base, &corr.numerator).ratio
    } else {
        base.ratio.clone()
    };
    let residuals = y.iter().zip(&g_tilde).map(|(&a, &b)| a - b).collect();
    Ok(ThirdStepFit {
        g_hat: base.ratio,
        g_tilde,
        f_w: base.denominator,
        residuals,
        h_selected: h,
    })
}

/// `S_n = (1/n) aᵀ G a` with `a_i = ε̃_i f̂_W(W_i) t̂_i`.
pub fn statistic<T: Scalar>(third: &ThirdStepFit<T>, nu: &NuValues<T>, trim: &[bool]) -> T {
    let a = statistic_weights(third, trim);
    quadratic_form(&a, &nu.gram) / T::from_usize_lossy(a.len())
}

pub fn statistic_weights<T: Scalar>(third: &ThirdStepFit<T>, trim: &[bool]) -> Vec<T> {
    third
        .residuals
        .iter()
        .zip(&third.f_w)
        .zip(trim)
        .map(|((&e, &f), &t)| if t { e * f } else { T::zero() })
        .collect()
}

/// Leave-one-out residuals `Y_i - G̃^{-i}(W_i)` used by the bandwidth selector.
///
/// `Ĝ^{-i}` smooths all other units. The correction smooths the trimmed
/// leave-one-out residuals `(Y_j - Ĝ^{-j}(W_j)) t̂_j` over `j != i` and divides by
/// the matching trimmed leave-one-out density.
pub fn loo_corrected_residuals<T: Scalar>(
    y: &[T],
    index: ArrayView2<'_, T>,
    h: T,
    kspec: KernelSpec,
    trim: &[bool],
    bias_corrected: bool,
) -> Result<Vec<T>> {
    let hv = vec![h; index.ncols()];
    let km = SymmetricKernel::new(index, &hv, kspec)?;
    let loo = km.smooth(y, None, true);
    let eps: Vec<T> = y.iter().zip(&loo.ratio).map(|(&a, &b)| a - b).collect();
    if !bias_corrected {
        return Ok(eps);
    }
    let corr = km.smooth(&eps, Some(trim), true);
    Ok(eps.iter().zip(&corr.ratio).map(|(&e, &c)| e - c).collect())
}

/// Closed-form double sum `(1/n²) Σ r_i r_j G_ij` minimized by the selector.
pub fn bandwidth_objective<T: Scalar>(
    y: &[T],
    index: ArrayView2<'_, T>,
    h: T,
    kspec: KernelSpec,
    trim: &[bool],
    gram: &Array2<T>,
    bias_corrected: bool,
) -> Result<T> {
    let r = loo_corrected_residuals(y, index, h, kspec, trim, bias_corrected)?;
    let n = T::from_usize_lossy(r.len());
    Ok(quadratic_form(&r, gram) / (n * n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection<T> {
    pub h: T,
    pub objective: T,
    /// Rule-of-thumb value the search is centred on.
    pub h_rule: T,
    /// `(log h, objective)` on the initial grid.
    pub grid: Vec<(f64, f64)>,
}

pub const SELECTION_GRID_POINTS: usize = 25;
pub const SELECTION_LOG_RANGE: f64 = 2.0;
pub const SELECTION_TOL: f64 = 1e-4;

/// Minimizes [`bandwidth_objective`] over `log h ∈ [log h_S - 2, log h_S + 2]`.
///
/// A 25-point grid brackets the minimum and golden-section search refines it.
/// The rule-of-thumb value `h_S` is kept whenever nothing beats it.
pub fn select_bandwidth_on<T: Scalar>(
    y: &[T],
    index: &IndexValues<T>,
    kspec: KernelSpec,
    trim: &[bool],
    gram: &Array2<T>,
    bias_corrected: bool,
) -> Result<BandwidthSelection<T>> {
    let h_rule = index_rule_of_thumb(index, kspec);
    let center = h_rule.as_f64().ln();
    let mut failure = None;
    let objective = |log_h: f64| -> f64 {
        match bandwidth_objective(y, index.view(), T::lit(log_h.exp()), kspec, trim, gram, bias_corrected) {
            Ok(v) => v.as_f64(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let (best, grid) = grid_then_golden(
        objective,
        center - SELECTION_LOG_RANGE,
        center + SELECTION_LOG_RANGE,
        SELECTION_GRID_POINTS,
        SELECTION_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let at_rule = grid[SELECTION_GRID_POINTS / 2].1;
    let (h, objective) = if at_rule <= best.value {
        (h_rule, T::lit(at_rule))
    } else {
        (T::lit(best.x.exp()), T::lit(best.value))
    };
    Ok(BandwidthSelection {
        h,
        objective,
        h_rule,
        grid,
    })
}

/// Data-driven third-step bandwidth for the sample at `beta_hat`.
pub fn select_bandwidth<T: Scalar>(
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    beta_hat: &[T],
    model: &ModelSpec,
    kspec: KernelSpec,
    bias_corrected: bool,
) -> Result<T> {
    let index = build_index(beta_hat, sample, first_step, model, bias_corrected)?;
    let nu = nu_values(sample, first_step, model, bias_corrected, false);
    Ok(select_bandwidth_on(&sample.y, &index, kspec, &first_step.trim, &nu.gram, bias_corrected)?.h)
}

/// `C · σ̂(W) · n^(-1/6)`, the scaled rule of thumb for the third step.
pub fn scaled_rule_bandwidth<T: Scalar>(index: &IndexValues<T>, c: f64) -> Result<T> {
    let s = index.spread();
    if !(s.is_finite() && s > T::zero()) {
        return Err(Error::DegenerateIndex);
    }
    let n = T::from_usize_lossy(index.w.nrows());
    Ok(T::lit(c) * s * n.powf(-T::one() / T::lit(6.0)))
}
