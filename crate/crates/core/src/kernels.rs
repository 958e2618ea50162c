//! Kernel smoothing primitives.
//!
//! All smoothers use direct `O(n·m)` summation with the product Gaussian
//! kernel. Sums are normalized as `1 / (n ∏h)` (or `1 / ((n-1) ∏h)` for
//! leave-one-out sums), so `denominator` is a kernel density estimate and
//! `numerator` the matching `T̂`-type sum. Weights are trimming indicators.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::KernelSpec;

/// Numerator and denominator sums of a Nadaraya-Watson smooth and their ratio.
///
/// `ratio[i]` is `numerator[i] / denominator[i]` when the denominator is
/// positive and zero otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEval<T> {
    pub numerator: Vec<T>,
    pub denominator: Vec<T>,
    pub ratio: Vec<T>,
}

impl<T: Scalar> SmoothEval<T> {
    pub fn from_sums(numerator: Vec<T>, denominator: Vec<T>) -> Self {
        let ratio = numerator
            .iter()
            .zip(&denominator)
            .map(|(&a, &b)| safe_ratio(a, b))
            .collect();
        SmoothEval {
            numerator,
            denominator,
            ratio,
        }
    }

    pub fn len(&self) -> usize {
        self.ratio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratio.is_empty()
    }
}

#[inline]
pub(crate) fn safe_ratio<T: Scalar>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// Product kernel evaluated at `u`.
pub fn kernel_value<T: Scalar>(u: &[T], spec: KernelSpec) -> T {
    match spec {
        KernelSpec::GaussianOrder2 => {
            let sq: T = u.iter().map(|&v| v * v).sum();
            gaussian_constant::<T>(u.len()) * (-T::lit(0.5) * sq).exp()
        }
    }
}

/// `(2π)^(-k/2)`, the normalizing constant of the `k`-variate product kernel.
fn gaussian_constant<T: Scalar>(k: usize) -> T {
    T::lit((2.0 * std::f64::consts::PI).powf(-(k as f64) / 2.0))
}

/// Unnormalized kernel of a squared scaled distance.
#[inline]
fn profile<T: Scalar>(sq: T) -> T {
    (-T::lit(0.5) * sq).kernel_exp()
}

/// Kernel values between point `i` and every later point, written to `out`.
#[inline]
fn upper_row<T: Scalar>(p: &[T], k: usize, i: usize, out: &mut [T]) {
    let pi = &p[i * k..(i + 1) * k];
    let rest = &p[(i + 1) * k..];
    if k == 1 {
        let a = pi[0];
        for (o, &b) in out.iter_mut().zip(rest) {
            let d = a - b;
            *o = profile(d * d);
        }
    } else {
        for (o, q) in out.iter_mut().zip(rest.chunks_exact(k)) {
            *o = profile(sq_dist(pi, q));
        }
    }
}

/// `(Σ a_j b_j, Σ c_j b_j)` with four partial sums.
#[inline]
fn dot2<T: Scalar>(a: &[T], c: &[T], b: &[T]) -> (T, T) {
    let mut s = [T::zero(); 4];
    let mut t = [T::zero(); 4];
    let (a4, ar) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let (c4, cr) = (c.chunks_exact(4), c.chunks_exact(4).remainder());
    let (b4, br) = (b.chunks_exact(4), b.chunks_exact(4).remainder());
    for ((x, z), y) in a4.zip(c4).zip(b4) {
        for q in 0..4 {
            s[q] += x[q] * y[q];
            t[q] += z[q] * y[q];
        }
    }
    for ((&x, &z), &y) in ar.iter().zip(cr).zip(br) {
        s[0] += x * y;
        t[0] += z * y;
    }
    ((s[0] + s[1]) + (s[2] + s[3]), (t[0] + t[1]) + (t[2] + t[3]))
}

pub(crate) fn check_bandwidth<T: Scalar>(h: &[T], dim: usize) -> Result<()> {
    if h.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{} bandwidths for {dim}-dimensional points",
            h.len()
        )));
    }
    if h.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
        return Err(Error::BandwidthNonPositive);
    }
    Ok(())
}

fn check_weights(weights: Option<&[bool]>, n: usize) -> Result<()> {
    match weights {
        Some(w) if w.len() != n => Err(Error::LengthMismatch {
            left: w.len(),
            right: n,
        }),
        _ => Ok(()),
    }
}

/// Rows of `points` divided coordinatewise by `h`, flattened row-major.
fn scaled_rows<T: Scalar>(points: ArrayView2<'_, T>, h: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(points.len());
    for row in points.rows() {
        out.extend(row.iter().zip(h).map(|(&p, &hk)| p / hk));
    }
    out
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn normalization<T: Scalar>(h: &[T], count: usize, spec: KernelSpec) -> T {
    let hprod = h.iter().fold(T::one(), |acc, &v| acc * v);
    match spec {
        KernelSpec::GaussianOrder2 => {
            gaussian_constant::<T>(h.len()) / (T::from_usize_lossy(count) * hprod)
        }
    }
}

/// Nadaraya-Watson sums of `targets` observed at `points`, evaluated at the
/// rows of `eval_at`.
pub fn nw_fit<T: Scalar>(
    targets: &[T],
    points: ArrayView2<'_, T>,
    eval_at: ArrayView2<'_, T>,
    h: &[T],
    spec: KernelSpec,
    weights: Option<&[bool]>,
) -> Result<SmoothEval<T>> {
    let n = points.nrows();
    let k = points.ncols();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: n,
        });
    }
    if eval_at.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "evaluation points have {} columns, data points {k}",
            eval_at.ncols()
        )));
    }
    check_bandwidth(h, k)?;
    check_weights(weights, n)?;

    let p = scaled_rows(points, h);
    let e = scaled_rows(eval_at, h);
    let norm = normalization(h, n.max(1), spec);
    let m = eval_at.nrows();
    let mut num = vec![T::zero(); m];
    let mut den = vec![T::zero(); m];
    for j in 0..m {
        let ej = &e[j * k..(j + 1) * k];
        let (mut a, mut b) = (T::zero(), T::zero());
        for i in 0..n {
            if weights.is_some_and(|w| !w[i]) {
                continue;
            }
            let kv = profile(sq_dist(ej, &p[i * k..(i + 1) * k]));
            a += targets[i] * kv;
            b += kv;
        }
        num[j] = a * norm;
        den[j] = b * norm;
    }
    Ok(SmoothEval::from_sums(num, den))
}

/// Leave-one-out Nadaraya-Watson sums at the data points: entry `i` uses
/// units `j != i` only, normalized by `1 / ((n-1) ∏h)`.
pub fn nw_fit_loo<T: Scalar>(
    targets: &[T],
    points: ArrayView2<'_, T>,
    h: &[T],
    spec: KernelSpec,
    weights: Option<&[bool]>,
) -> Result<SmoothEval<T>> {
    let n = points.nrows();
    let k = points.ncols();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: n,
        });
    }
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    check_bandwidth(h, k)?;
    check_weights(weights, n)?;

    let p = scaled_rows(points, h);
    // Masked copies so that trimmed units contribute nothing as neighbours.
    let kept: Vec<T> = (0..n)
        .map(|j| if weights.is_none_or(|w| w[j]) { T::one() } else { T::zero() })
        .collect();
    let kept_targets: Vec<T> = targets.iter().zip(&kept).map(|(&t, &w)| t * w).collect();
    let mut num = vec![T::zero(); n];
    let mut den = vec![T::zero(); n];
    let mut buf = vec![T::zero(); n];
    for i in 0..n {
        let row = &mut buf[..n - i - 1];
        upper_row(&p, k, i, row);
        let (a, b) = dot2(&kept_targets[i + 1..], &kept[i + 1..], row);
        num[i] += a;
        den[i] += b;
        let (ti, wi) = (kept_targets[i], kept[i]);
        if wi > T::zero() {
            for ((nj, dj), &kv) in num[i + 1..].iter_mut().zip(den[i + 1..].iter_mut()).zip(row.iter()) {
                *nj += ti * kv;
                *dj += kv;
            }
        }
    }
    let norm = normalization(h, n - 1, spec);
    for (a, b) in num.iter_mut().zip(den.iter_mut()) {
        *a *= norm;
        *b *= norm;
    }
    Ok(SmoothEval::from_sums(num, den))
}

/// One-step L2-boosting correction of a smooth computed at the data points.
///
/// Adds the smooth of the weighted residuals `targets - base.ratio` divided by
/// the base denominator: `ratio = base.ratio + T̂^{resid}/f̂`. The returned
/// numerator is `base.numerator + T̂^{resid}`, so `ratio = numerator /
/// denominator` still holds.
pub fn boost_correct<T: Scalar>(
    targets: &[T],
    points: ArrayView2<'_, T>,
    h: &[T],
    spec: KernelSpec,
    weights: Option<&[bool]>,
    base_fit: &SmoothEval<T>,
) -> Result<SmoothEval<T>> {
    let n = points.nrows();
    if base_fit.len() != n || targets.len() != n {
        return Err(Error::LengthMismatch {
            left: base_fit.len(),
            right: n,
        });
    }
    let resid: Vec<T> = targets
        .iter()
        .zip(&base_fit.ratio)
        .map(|(&t, &r)| t - r)
        .collect();
    let correction = nw_fit(&resid, points, points, h, spec, weights)?;
    Ok(apply_correction(base_fit, &correction.numerator))
}

pub(crate) fn apply_correction<T: Scalar>(base: &SmoothEval<T>, corr_num: &[T]) -> SmoothEval<T> {
    let ratio = base
        .ratio
        .iter()
        .zip(corr_num)
        .zip(&base.denominator)
        .map(|((&r, &c), &f)| if f > T::zero() { r + c / f } else { T::zero() })
        .collect();
    let numerator = base
        .numerator
        .iter()
        .zip(corr_num)
        .map(|(&a, &c)| a + c)
        .collect();
    SmoothEval {
        numerator,
        denominator: base.denominator.clone(),
        ratio,
    }
}

/// Kernel weights between all pairs of data points for one bandwidth.
///
/// Stores the symmetric `n × n` matrix of unnormalized kernel values so
/// several smooths over the same points (full-sample, leave-one-out, with and
/// without trimming) cost one pass of kernel evaluations.
#[derive(Debug, Clone)]
pub struct SymmetricKernel<T> {
    n: usize,
    values: Vec<T>,
    /// `(2π)^(-k/2) / ∏h`.
    scale: T,
}

impl<T: Scalar> SymmetricKernel<T> {
    pub fn new(points: ArrayView2<'_, T>, h: &[T], spec: KernelSpec) -> Result<Self> {
        let n = points.nrows();
        let k = points.ncols();
        check_bandwidth(h, k)?;
        let p = scaled_rows(points, h);
        let mut values = vec![T::zero(); n * n];
        let mut buf = vec![T::zero(); n];
        for i in 0..n {
            values[i * n + i] = T::one();
            let row = &mut buf[..n - i - 1];
            upper_row(&p, k, i, row);
            values[i * n + i + 1..(i + 1) * n].copy_from_slice(row);
            for (j, &kv) in (i + 1..n).zip(row.iter()) {
                values[j * n + i] = kv;
            }
        }
        Ok(SymmetricKernel {
            n,
            values,
            scale: normalization(h, 1, spec),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Full-sample (`leave_out = false`) or leave-one-out sums at the data points.
    pub fn smooth(&self, targets: &[T], weights: Option<&[bool]>, leave_out: bool) -> SmoothEval<T> {
        let (num, den) = self.raw_sums(targets, weights, leave_out);
        let count = if leave_out { self.n - 1 } else { self.n };
        let norm = self.scale / T::from_usize_lossy(count.max(1));
        SmoothEval::from_sums(
            num.into_iter().map(|v| v * norm).collect(),
            den.into_iter().map(|v| v * norm).collect(),
        )
    }

    fn raw_sums(&self, targets: &[T], weights: Option<&[bool]>, leave_out: bool) -> (Vec<T>, Vec<T>) {
        debug_assert_eq!(targets.len(), self.n);
        let mut num = vec![T::zero(); self.n];
        let mut den = vec![T::zero(); self.n];
        let kept: Vec<T> = (0..self.n)
            .map(|j| if weights.is_none_or(|w| w[j]) { T::one() } else { T::zero() })
            .collect();
        let kept_targets: Vec<T> = targets.iter().zip(&kept).map(|(&t, &w)| t * w).collect();
        for i in 0..self.n {
            let row = self.row(i);
            let (a, b) = if leave_out {
                let (a0, b0) = dot2(&kept_targets[..i], &kept[..i], &row[..i]);
                let (a1, b1) = dot2(&kept_targets[i + 1..], &kept[i + 1..], &row[i + 1..]);
                (a0 + a1, b0 + b1)
            } else {
                dot2(&kept_targets, &kept, row)
            };
            num[i] = a;
            den[i] = b;
        }
        (num, den)
    }
}
