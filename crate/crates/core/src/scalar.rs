use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating point type the estimation pipeline is generic over.
///
/// Implemented for `f32` and `f64`. Configuration values (nominal levels,
/// box bounds, seeds) stay in `f64`/`u64` and are converted with [`Scalar::lit`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// `exp(x)` for `x <= 0`, used for kernel weights. Arguments below about
    /// `-700` may return zero.
    #[inline(always)]
    fn kernel_exp(self) -> Self {
        self.exp()
    }
}

impl Scalar for f32 {}

impl Scalar for f64 {
    #[inline(always)]
    fn kernel_exp(self) -> f64 {
        exp_nonpositive(self)
    }
}

/// Branch-free `exp` on `[-700, 0]` with relative error below `3e-16`, so the
/// kernel loops vectorize. Range reduction by `ln 2`, then a degree 13 Taylor
/// polynomial on `|r| <= ln(2)/2`.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const COEF: [f64; 14] = [
        1.0 / 6_227_020_800.0,
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let xc = x.max(-700.0);
    let shifted = xc * std::f64::consts::LOG2_E + SHIFT;
    let k = shifted - SHIFT;
    let r = (xc - k * LN2_HI) - k * LN2_LO;
    let mut p = COEF[0];
    for &c in &COEF[1..] {
        p = p * r + c;
    }
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    if x < -700.0 {
        0.0
    } else {
        p * scale
    }
}

/// Sample mean and standard deviation with the `n - 1` denominator.
pub(crate) fn mean_sd<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let mut n = 0usize;
    let mut sum = T::zero();
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let mean = sum / T::from_usize_lossy(n);
    if n < 2 {
        return (mean, T::zero());
    }
    let ss: T = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / T::from_usize_lossy(n - 1)).sqrt())
}
