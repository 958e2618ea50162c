//! First-step estimation of `H(Z) = E[D | Z]`.

use ndarray::{concatenate, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernels::{apply_correction, check_bandwidth, nw_fit, SymmetricKernel};
use crate::scalar::{mean_sd, Scalar};
use crate::types::{BandwidthSpec, KernelSpec, Sample, TrimmingSpec};

/// Fitted generated regressor at the data points.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStepFit<T> {
    /// Plain Nadaraya-Watson fit `Ĥ(Z_i)`.
    pub h_hat: Vec<T>,
    /// Boosted fit `H̃(Z_i)`; equal to `h_hat` for the uncorrected variant.
    pub h_tilde: Vec<T>,
    /// Trimming indicators `t̂_i`.
    pub trim: Vec<bool>,
    /// Density estimate `f̂_Z(Z_i)`.
    pub f_z: Vec<T>,
    /// Bandwidth per `Z` column.
    pub h_used: Vec<T>,
}

impl<T: Scalar> FirstStepFit<T> {
    /// `Ĥ` or `H̃` depending on the variant in use.
    pub fn fitted(&self, boosted: bool) -> &[T] {
        if boosted {
            &self.h_tilde
        } else {
            &self.h_hat
        }
    }
}

/// Per-column rule of thumb `σ̂_k · n^(-1 / (2 + 2r))` for a kernel of order `r`.
pub fn silverman_bandwidth<T: Scalar>(z: ArrayView2<'_, T>, order: u32) -> Result<Vec<T>> {
    let n = z.nrows();
    let rate = T::from_usize_lossy(n).powf(-T::one() / T::from_u32(2 + 2 * order).unwrap());
    z.columns()
        .into_iter()
        .enumerate()
        .map(|(k, col)| {
            let (_, sd) = mean_sd(col.iter().copied());
            if sd > T::zero() && sd.is_finite() {
                Ok(sd * rate)
            } else {
                Err(Error::DegenerateColumn(k))
            }
        })
        .collect()
}

/// Linear-interpolation (type 7) empirical quantile of already sorted values.
pub(crate) fn sorted_quantile<T: Scalar>(sorted: &[T], prob: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Trimming indicators `t̂` (`true` keeps the unit).
///
/// For [`TrimmingSpec::QuantilePrior`], each column of `(|X|, |Z|)` gets its
/// empirical `1 - rate` quantile and a unit is dropped when any of its
/// coordinates lies strictly above it. For [`TrimmingSpec::DensityThreshold`],
/// a unit is kept when the joint kernel density of `(X, Z)` at its own point is
/// at least `tau`.
pub fn compute_trimming<T: Scalar>(
    sample: &Sample<T>,
    spec: &TrimmingSpec,
    kspec: KernelSpec,
    h_density: Option<&[T]>,
) -> Result<Vec<bool>> {
    spec.validate()?;
    let n = sample.n();
    let joint = concatenate(Axis(1), &[sample.x_view(), sample.z_view()])
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    match *spec {
        TrimmingSpec::QuantilePrior { rate } => {
            let mut keep = vec![true; n];
            for col in joint.columns() {
                let mut abs: Vec<T> = col.iter().map(|v| v.abs()).collect();
                abs.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
                let q = sorted_quantile(&abs, 1.0 - rate);
                for (k, v) in keep.iter_mut().zip(col.iter()) {
                    if v.abs() > q {
                        *k = false;
                    }
                }
            }
            Ok(keep)
        }
        TrimmingSpec::DensityThreshold { tau } => {
            let h = match h_density {
                Some(h) => h.to_vec(),
                None => density_rule_of_thumb(joint.view()),
            };
            check_bandwidth(&h, joint.ncols())?;
            let ones = vec![T::one(); n];
            let fit = nw_fit(&ones, joint.view(), joint.view(), &h, kspec, None)?;
            let tau = T::lit(tau);
            Ok(fit.denominator.iter().map(|&f| f >= tau).collect())
        }
    }
}

/// `σ̂_k · n^(-1/(4+k))` per column, with unit bandwidth for constant columns.
fn density_rule_of_thumb<T: Scalar>(points: ArrayView2<'_, T>) -> Vec<T> {
    let n = T::from_usize_lossy(points.nrows());
    let dim = points.ncols();
    let rate = n.powf(-T::one() / T::from_usize_lossy(4 + dim));
    points
        .columns()
        .into_iter()
        .map(|col| {
            let (_, sd) = mean_sd(col.iter().copied());
            if sd > T::zero() {
                sd * rate
            } else {
                T::one()
            }
        })
        .collect()
}

/// First-step fit of the sample's `D` on `Z`.
pub fn fit_first_step<T: Scalar>(
    sample: &Sample<T>,
    kspec: KernelSpec,
    bands: &BandwidthSpec,
    trim: &[bool],
    bias_corrected: bool,
) -> Result<FirstStepFit<T>> {
    bands.validate()?;
    let h = match &bands.h_first {
        Some(h) => h.iter().map(|&v| T::lit(v)).collect(),
        None => silverman_bandwidth(sample.z_view(), kspec.order())?,
    };
    fit_first_step_on(&sample.d, sample.z_view(), kspec, &h, trim, bias_corrected)
}

/// First-step fit of an arbitrary target on `z`; the bootstrap uses this with `D*`.
///
/// `Ĥ` uses untrimmed sums. The boosting term smooths the trimmed residuals
/// `(D_i - Ĥ(Z_i)) t̂_i` and divides by the same untrimmed `f̂_Z`.
pub fn fit_first_step_on<T: Scalar>(
    target: &[T],
    z: ArrayView2<'_, T>,
    kspec: KernelSpec,
    h: &[T],
    trim: &[bool],
    bias_corrected: bool,
) -> Result<FirstStepFit<T>> {
    let n = z.nrows();
    if target.len() != n || trim.len() != n {
        return Err(Error::LengthMismatch {
            left: target.len().max(trim.len()),
            right: n,
        });
    }
    let km = SymmetricKernel::new(z, h, kspec)?;
    let base = km.smooth(target, None, false);
    let h_tilde = if bias_corrected {
        let resid: Vec<T> = target.iter().zip(&base.ratio).map(|(&d, &f)| d - f).collect();
        let corr = km.smooth(&resid, Some(trim), false);
        apply_correction(&base, &corr.numerator).ratio
    } else {
        base.ratio.clone()
    };
    Ok(FirstStepFit {
        h_hat: base.ratio,
        h_tilde,
        trim: trim.to_vec(),
        f_z: base.denominator,
        h_used: h.to_vec(),
    })
}
