//! Unitary DFTs, cyclic-prefix handling, and arithmetic-cost instrumentation.
//!
//! Every metered transform advances an [`OpCounter`] by the model cost of an
//! N-point radix-2 transform, independent of how the transform is actually
//! computed:
//!
//! ```text
//! C_A(N) = 3 N log2 N - 3 N + 4   real additions
//! C_M(N) =   N log2 N - 3 N + 4   real multiplications
//! ```
//!
//! Element-wise complex operations are metered through [`count_elementwise`]:
//! an addition costs 2 real additions, a multiplication 4 real
//! multiplications and 2 real additions, and a division is priced as a
//! multiplication by a precomputed inverse. Slicing, copying, windowing and
//! index gather/scatter are free.
//!
//! Both transform directions use unitary `1/sqrt(N)` scaling, so round trips
//! are exact and Parseval holds without bookkeeping.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

/// Errors from transform-layer operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformError {
    /// Input length is not a power of two.
    NotPowerOfTwo(usize),
    /// Cyclic prefix longer than the symbol body.
    CpTooLong { n: usize, n_cp: usize },
    /// Input length does not match the expected `N + N_cp`.
    LengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformError::NotPowerOfTwo(n) => {
                write!(f, "transform length {n} is not a power of two")
            }
            TransformError::CpTooLong { n, n_cp } => {
                write!(f, "cyclic prefix length {n_cp} exceeds symbol length {n}")
            }
            TransformError::LengthMismatch { expected, got } => {
                write!(f, "expected vector of length {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for TransformError {}

// ---------------------------------------------------------------------------
// Operation counter
// ---------------------------------------------------------------------------

/// Running totals of real additions and real multiplications.
///
/// Counts are monotone during a receiver run; a fresh counter is used per run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    real_adds: u64,
    real_mults: u64,
}

/// Element-wise complex operation kinds priced by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    ComplexAdd,
    ComplexMult,
    ComplexDiv,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn real_adds(&self) -> u64 {
        self.real_adds
    }

    pub fn real_mults(&self) -> u64 {
        self.real_mults
    }

    /// Charge one N-point transform at the model cost.
    pub fn charge_transform(&mut self, n: usize) {
        let (a, m) = transform_cost(n);
        self.real_adds += a;
        self.real_mults += m;
    }

    /// Charge `count` element-wise complex additions.
    pub fn charge_complex_adds(&mut self, count: usize) {
        self.real_adds += 2 * count as u64;
    }

    /// Charge `count` element-wise complex multiplications.
    pub fn charge_complex_mults(&mut self, count: usize) {
        self.real_mults += 4 * count as u64;
        self.real_adds += 2 * count as u64;
    }

    /// Charge `count` element-wise complex divisions (priced as
    /// multiplications by a precomputed inverse).
    pub fn charge_complex_divs(&mut self, count: usize) {
        self.charge_complex_mults(count);
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Fold another counter's totals into this one.
    pub fn merge(&mut self, other: &OpCounter) {
        self.real_adds += other.real_adds;
        self.real_mults += other.real_mults;
    }
}

/// Charge `count` element-wise operations of the given kind.
pub fn count_elementwise(kind: ElementwiseKind, count: usize, counter: &mut OpCounter) {
    match kind {
        ElementwiseKind::ComplexAdd => counter.charge_complex_adds(count),
        ElementwiseKind::ComplexMult => counter.charge_complex_mults(count),
        ElementwiseKind::ComplexDiv => counter.charge_complex_divs(count),
    }
}

/// Model cost `(C_A, C_M)` of one N-point transform.
pub fn transform_cost(n: usize) -> (u64, u64) {
    debug_assert!(n.is_power_of_two());
    let n64 = n as u64;
    let lg = n.trailing_zeros() as u64;
    let c_a = 3 * n64 * lg + 4 - 3 * n64;
    let c_m = n64 * lg + 4 - 3 * n64;
    (c_a, c_m)
}

// ---------------------------------------------------------------------------
// Radix-2 transforms
// ---------------------------------------------------------------------------

fn bit_reverse_permute(x: &mut [Complex64]) {
    let n = x.len();
    let shift = usize::BITS - n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits().wrapping_shr(shift);
        if j > i {
            x.swap(i, j);
        }
    }
}

fn fft_in_place(x: &mut [Complex64], inverse: bool) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    bit_reverse_permute(x);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let w_len = Complex64::new(ang.cos(), ang.sin());
        for chunk in x.chunks_mut(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for i in 0..len / 2 {
                let a = chunk[i];
                let b = chunk[i + len / 2] * w;
                chunk[i] = a + b;
                chunk[i + len / 2] = a - b;
                w *= w_len;
            }
        }
        len <<= 1;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in x.iter_mut() {
        *v *= scale;
    }
}

/// Unmetered unitary forward transform. Used for channel synthesis and for
/// steps the cost model does not bill; receiver loops go through [`fft`].
pub fn fft_raw(x: &[Complex64]) -> Result<Vec<Complex64>, TransformError> {
    if !x.len().is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(x.len()));
    }
    let mut out = x.to_vec();
    fft_in_place(&mut out, false);
    Ok(out)
}

/// Unmetered unitary inverse transform.
pub fn ifft_raw(x: &[Complex64]) -> Result<Vec<Complex64>, TransformError> {
    if !x.len().is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(x.len()));
    }
    let mut out = x.to_vec();
    fft_in_place(&mut out, true);
    Ok(out)
}

/// Metered unitary forward transform: advances `counter` by `(C_A, C_M)`.
pub fn fft(x: &[Complex64], counter: &mut OpCounter) -> Result<Vec<Complex64>, TransformError> {
    if !x.len().is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(x.len()));
    }
    counter.charge_transform(x.len());
    fft_raw(x)
}

/// Metered unitary inverse transform: advances `counter` by `(C_A, C_M)`.
pub fn ifft(x: &[Complex64], counter: &mut OpCounter) -> Result<Vec<Complex64>, TransformError> {
    if !x.len().is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(x.len()));
    }
    counter.charge_transform(x.len());
    ifft_raw(x)
}

// ---------------------------------------------------------------------------
// Cyclic prefix
// ---------------------------------------------------------------------------

/// Prepend the last `n_cp` samples of `x` to the front. Pure copy, no cost.
pub fn add_cp(x: &[Complex64], n_cp: usize) -> Result<Vec<Complex64>, TransformError> {
    let n = x.len();
    if n_cp > n {
        return Err(TransformError::CpTooLong { n, n_cp });
    }
    let mut out = Vec::with_capacity(n + n_cp);
    out.extend_from_slice(&x[n - n_cp..]);
    out.extend_from_slice(x);
    Ok(out)
}

/// Drop the first `n_cp` samples, returning the symbol body.
pub fn remove_cp(y: &[Complex64], n_cp: usize) -> Result<Vec<Complex64>, TransformError> {
    if y.len() < n_cp {
        return Err(TransformError::LengthMismatch {
            expected: n_cp,
            got: y.len(),
        });
    }
    Ok(y[n_cp..].to_vec())
}
