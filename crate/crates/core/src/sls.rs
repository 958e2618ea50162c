//! Semiparametric least squares for the index coefficients.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_step::FirstStepFit;
use crate::kernels::nw_fit_loo;
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};
use crate::scalar::{mean_sd, Scalar};
use crate::types::{GeneratedCovariate, IndexForm, KernelSpec, ModelSpec, Sample};

/// Index values `W_i(β) = q(β, X_i, H(Z_i))`, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexValues<T> {
    pub w: Array2<T>,
    pub d: usize,
}

impl<T: Scalar> IndexValues<T> {
    pub fn view(&self) -> ArrayView2<'_, T> {
        self.w.view()
    }

    /// Rule-of-thumb scale of the index: its sample standard deviation, or the
    /// geometric mean of the column deviations for a two-dimensional index.
    pub fn spread(&self) -> T {
        let sds: Vec<T> = self
            .w
            .columns()
            .into_iter()
            .map(|c| mean_sd(c.iter().copied()).1)
            .collect();
        let log_mean = sds.iter().map(|s| s.ln()).sum::<T>() / T::from_usize_lossy(sds.len());
        log_mean.exp()
    }
}

/// Generated covariate entering the index: `D - H` or `H`.
pub fn generated_covariate<T: Scalar>(
    sample: &Sample<T>,
    fitted_h: &[T],
    kind: GeneratedCovariate,
) -> Vec<T> {
    match kind {
        GeneratedCovariate::Residual => sample.d.iter().zip(fitted_h).map(|(&d, &h)| d - h).collect(),
        GeneratedCovariate::Level => fitted_h.to_vec(),
    }
}

/// Builds the index at `beta` from the boosted (`use_boosted`) or plain first-step fit.
pub fn build_index<T: Scalar>(
    beta: &[T],
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    model: &ModelSpec,
    use_boosted: bool,
) -> Result<IndexValues<T>> {
    build_index_from(beta, sample, first_step.fitted(use_boosted), model)
}

pub(crate) fn build_index_from<T: Scalar>(
    beta: &[T],
    sample: &Sample<T>,
    fitted_h: &[T],
    model: &ModelSpec,
) -> Result<IndexValues<T>> {
    if beta.len() != model.beta_dim {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, model expects {}",
            beta.len(),
            model.beta_dim
        )));
    }
    if sample.x.ncols() != model.p_x() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} X columns, sample has {}",
            model.p_x(),
            sample.x.ncols()
        )));
    }
    if fitted_h.len() != sample.n() {
        return Err(Error::DimensionMismatch(format!(
            "first-step fit has {} values for {} units",
            fitted_h.len(),
            sample.n()
        )));
    }
    let coef = model.full_coefficients(beta);
    let p_x = model.p_x();
    let g = generated_covariate(sample, fitted_h, model.generated_covariate);
    let n = sample.n();
    let linear = |i: usize| -> T {
        sample
            .x
            .row(i)
            .iter()
            .zip(&coef[..p_x])
            .map(|(&x, &b)| x * b)
            .sum()
    };
    let w = match model.index_form {
        IndexForm::CombinedIndex => {
            Array2::from_shape_fn((n, 1), |(i, _)| linear(i) + coef[p_x] * g[i])
        }
        IndexForm::PartialIndex => {
            let mut w = Array2::zeros((n, 2));
            for i in 0..n {
                w[[i, 0]] = linear(i);
                w[[i, 1]] = g[i];
            }
            w
        }
    };
    Ok(IndexValues {
        d: model.index_dim(),
        w,
    })
}

/// Sum over trimmed-in units of squared leave-one-out residuals of `y` smoothed on the index.
///
/// The leave-one-out fit uses every other unit, trimmed or not.
pub fn loo_criterion<T: Scalar>(
    y: &[T],
    index: ArrayView2<'_, T>,
    h: T,
    kspec: KernelSpec,
    trim: &[bool],
) -> Result<T> {
    let hv = vec![h; index.ncols()];
    let fit = nw_fit_loo(y, index, &hv, kspec, None)?;
    Ok(y.iter()
        .zip(&fit.ratio)
        .zip(trim)
        .filter(|(_, &t)| t)
        .map(|((&yi, &g), _)| (yi - g) * (yi - g))
        .sum())
}

/// Least-squares criterion at `(beta, exp(log_h))`, built on the boosted first step
/// (or the plain one when `use_boosted` is false).
pub fn sls_criterion<T: Scalar>(
    beta: &[T],
    log_h: T,
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    use_boosted: bool,
) -> Result<T> {
    let index = build_index(beta, sample, first_step, model, use_boosted)?;
    loo_criterion(&sample.y, index.view(), log_h.exp(), kspec, &first_step.trim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlsOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Offset in `log h` applied, alternating in sign, to starts after the first.
    pub log_h_offset: f64,
    /// Half-width of the admissible `log h` interval around the rule-of-thumb value.
    pub log_h_range: f64,
}

impl Default for SlsOptions {
    fn default() -> Self {
        SlsOptions {
            n_starts: 5,
            max_iter: 500,
            tol: 1e-6,
            log_h_offset: 0.7,
            log_h_range: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlsFit<T> {
    pub beta_hat: Vec<T>,
    pub h_bar: T,
    pub criterion_value: T,
    pub optimizer_trace: Vec<StartTrace>,
}

/// Start points for `β`: box center, then corners, then center-corner midpoints.
pub fn start_points(model: &ModelSpec, count: usize) -> Vec<Vec<f64>> {
    let center = model.box_center();
    let dim = model.beta_dim;
    let mut starts = vec![center.clone()];
    let n_corners = if dim >= usize::BITS as usize { usize::MAX } else { 1usize << dim };
    let corners: Vec<Vec<f64>> = (0..n_corners)
        .take(count)
        .map(|mask| {
            model
                .beta_box
                .iter()
                .enumerate()
                .map(|(k, &(lo, hi))| if mask >> k & 1 == 0 { lo } else { hi })
                .collect()
        })
        .collect();
    starts.extend(corners.iter().cloned());
    starts.extend(corners.iter().map(|c| {
        c.iter().zip(&center).map(|(a, b)| 0.5 * (a + b)).collect()
    }));
    starts.truncate(count.max(1));
    starts
}

/// Rule-of-thumb bandwidth `σ̂(W) n^(-1/(2+2r))`, falling back to 1 for a constant index.
pub fn index_rule_of_thumb<T: Scalar>(index: &IndexValues<T>, kspec: KernelSpec) -> T {
    let n = T::from_usize_lossy(index.w.nrows());
    let rate = n.powf(-T::one() / T::from_u32(2 + 2 * kspec.order()).unwrap());
    let s = index.spread();
    if s.is_finite() && s > T::zero() {
        s * rate
    } else {
        T::one()
    }
}

/// Joint minimization of [`sls_criterion`] over `(β, log h)` by multi-start Nelder-Mead.
///
/// `β` is kept inside the model box and `log h` within `log_h_range` of the
/// rule-of-thumb value at the box center. Starts are tried in order and the
/// lowest criterion wins, earlier starts winning ties.
pub fn fit_sls<T: Scalar>(
    sample: &Sample<T>,
    first_step: &FirstStepFit<T>,
    model: &ModelSpec,
    kspec: KernelSpec,
    opts: &SlsOptions,
    use_boosted: bool,
) -> Result<SlsFit<T>> {
    model.validate()?;
    let fitted = first_step.fitted(use_boosted);
    let dim = model.beta_dim;
    let to_t = |v: &[f64]| v.iter().map(|&b| T::lit(b)).collect::<Vec<T>>();
    let log_h_at = |beta: &[f64]| -> Result<f64> {
        let index = build_index_from(&to_t(beta), sample, fitted, model)?;
        Ok(index_rule_of_thumb(&index, kspec).as_f64().ln())
    };

    let center_log_h = log_h_at(&model.box_center())?;
    let mut lower: Vec<f64> = model.beta_box.iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = model.beta_box.iter().map(|b| b.1).collect();
    lower.push(center_log_h - opts.log_h_range);
    upper.push(center_log_h + opts.log_h_range);
    let bounds = Bounds { lower, upper };

    let mut failure = None;
    let mut objective = |x: &[f64]| -> f64 {
        let (beta, log_h) = x.split_at(dim);
        match build_index_from(&to_t(beta), sample, fitted, model).and_then(|idx| {
            loo_criterion(&sample.y, idx.view(), T::lit(log_h[0]).exp(), kspec, &first_step.trim)
        }) {
            Ok(v) => v.as_f64(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };

    let nm_opts = NelderMeadOptions {
        max_iter: opts.max_iter,
        tol: opts.tol,
    };
    let center = model.box_center();
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (k, beta0) in start_points(model, opts.n_starts).into_iter().enumerate() {
        let shift = match k {
            0 => 0.0,
            k if k % 2 == 1 => opts.log_h_offset,
            _ => -opts.log_h_offset,
        };
        let mut x0 = beta0.clone();
        x0.push(log_h_at(&beta0)? + shift);
        bounds.project(&mut x0);
        // Edges point toward the box center so corner starts keep a full simplex.
        let mut step: Vec<f64> = model
            .beta_box
            .iter()
            .zip(&beta0)
            .zip(&center)
            .map(|((&(lo, hi), &b), &c)| {
                let len = 0.25 * (hi - lo);
                if b > c {
                    -len
                } else {
                    len
                }
            })
            .collect();
        step.push(if shift > 0.0 { -0.5 } else { 0.5 });

        let r = nelder_mead(&mut objective, &x0, &step, Some(&bounds), nm_opts);
        trace.push(StartTrace {
            start: x0.clone(),
            end: r.x.clone(),
            value: r.value,
            iterations: r.iterations,
            evaluations: r.evaluations,
            converged: r.converged,
        });
        if best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let (x, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::OptimizerDidNotMove);
    }
    let moved = trace.iter().any(|t| t.start != t.end);
    if !moved && value > 0.0 {
        return Err(Error::OptimizerDidNotMove);
    }
    Ok(SlsFit {
        beta_hat: to_t(&x[..dim]),
        h_bar: T::lit(x[dim]).exp(),
        criterion_value: T::lit(value),
        optimizer_trace: trace,
    })
}
