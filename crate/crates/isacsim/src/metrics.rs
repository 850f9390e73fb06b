//! Sensing/communication NMSE, BER, spectral efficiency, and convergence
//! detection.
//!
//! Per-realization values feed the per-iteration traces; ensemble values are
//! aggregated with numerator and denominator energies accumulated separately
//! across trials (the expectation-ratio form), merged associatively so trial
//! order never matters.

use crate::config::ReceiverKind;
use num_complex::Complex64;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    LengthMismatch { expected: usize, got: usize },
    ZeroReference,
    EmptyInput,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { expected, got } => {
                write!(f, "expected length {expected}, got {got}")
            }
            MetricsError::ZeroReference => write!(f, "reference vector has zero energy"),
            MetricsError::EmptyInput => write!(f, "empty input"),
        }
    }
}

impl std::error::Error for MetricsError {}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn error_energy(truth: &[Complex64], est: &[Complex64]) -> f64 {
    truth.iter().zip(est).map(|(t, e)| (t - e).norm_sqr()).sum()
}

/// Per-realization sensing NMSE: `(1/U) Σ_u ||h_u - ĥ_u||² / ||h_u||²`.
pub fn sensing_nmse(
    h_true: &[Vec<Complex64>],
    h_hat: &[Vec<Complex64>],
) -> Result<f64, MetricsError> {
    if h_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if h_true.len() != h_hat.len() {
        return Err(MetricsError::LengthMismatch {
            expected: h_true.len(),
            got: h_hat.len(),
        });
    }
    let mut acc = 0.0;
    for (t, e) in h_true.iter().zip(h_hat) {
        if t.len() != e.len() {
            return Err(MetricsError::LengthMismatch {
                expected: t.len(),
                got: e.len(),
            });
        }
        let den = energy(t);
        if den == 0.0 {
            return Err(MetricsError::ZeroReference);
        }
        acc += error_energy(t, e) / den;
    }
    Ok(acc / h_true.len() as f64)
}

/// Per-realization communication NMSE (single-link version).
pub fn comm_nmse(h_true: &[Complex64], h_hat: &[Complex64]) -> Result<f64, MetricsError> {
    if h_true.len() != h_hat.len() {
        return Err(MetricsError::LengthMismatch {
            expected: h_true.len(),
            got: h_hat.len(),
        });
    }
    let den = energy(h_true);
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(error_energy(h_true, h_hat) / den)
}

/// Fraction of differing bits.
pub fn ber(bits_true: &[u8], bits_hat: &[u8]) -> Result<f64, MetricsError> {
    if bits_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if bits_true.len() != bits_hat.len() {
        return Err(MetricsError::LengthMismatch {
            expected: bits_true.len(),
            got: bits_hat.len(),
        });
    }
    let errors = bits_true
        .iter()
        .zip(bits_hat)
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / bits_true.len() as f64)
}

/// Symbol-goodput spectral efficiency: `log2(M) * (1 - SER)` in bits per
/// channel use, halved for the TDM communication-only bound.
pub fn spectral_efficiency(
    symbol_errors: u64,
    symbols: u64,
    m: usize,
    receiver: ReceiverKind,
) -> f64 {
    if symbols == 0 {
        return 0.0;
    }
    let ser = symbol_errors as f64 / symbols as f64;
    let se = (m as f64).log2() * (1.0 - ser);
    match receiver {
        ReceiverKind::CommOnlyLb => 0.5 * se,
        _ => se,
    }
}

/// Smallest index `q >= 1` with relative improvement
/// `|m[q] - m[q-1]| / m[q-1] < threshold`, or `trace.len()` if none.
pub fn convergence_index(trace: &[f64], threshold: f64) -> usize {
    for q in 1..trace.len() {
        let prev = trace[q - 1];
        if prev == 0.0 {
            if trace[q] == 0.0 {
                return q;
            }
            continue;
        }
        if ((trace[q] - prev) / prev).abs() < threshold {
            return q;
        }
    }
    trace.len()
}

// ---------------------------------------------------------------------------
// Ensemble aggregation
// ---------------------------------------------------------------------------

/// Per-iteration partial sums across trials.
#[derive(Debug, Clone, Default)]
pub struct IterationAggregate {
    pub sensing_num: f64,
    pub sensing_den: f64,
    pub comm_num: f64,
    pub comm_den: f64,
    pub bit_errors: u64,
    pub bits: u64,
}

/// Associatively mergeable accumulator for one (SNR, configuration) cell.
#[derive(Debug, Clone, Default)]
pub struct CellAccumulator {
    /// One (numerator, denominator) energy pair per STX.
    pub sensing: Vec<(f64, f64)>,
    pub comm_num: f64,
    pub comm_den: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub symbol_errors: u64,
    pub symbols: u64,
    pub trials: u64,
    pub per_iteration: Vec<IterationAggregate>,
}

impl CellAccumulator {
    /// Fold in one trial's sensing contribution for STX `u` (0-based).
    pub fn add_sensing(&mut self, u: usize, num: f64, den: f64) {
        if self.sensing.len() <= u {
            self.sensing.resize(u + 1, (0.0, 0.0));
        }
        self.sensing[u].0 += num;
        self.sensing[u].1 += den;
    }

    pub fn merge(&mut self, other: &CellAccumulator) {
        if self.sensing.len() < other.sensing.len() {
            self.sensing.resize(other.sensing.len(), (0.0, 0.0));
        }
        for (a, b) in self.sensing.iter_mut().zip(&other.sensing) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self.comm_num += other.comm_num;
        self.comm_den += other.comm_den;
        self.bit_errors += other.bit_errors;
        self.bits += other.bits;
        self.symbol_errors += other.symbol_errors;
        self.symbols += other.symbols;
        self.trials += other.trials;
        if self.per_iteration.len() < other.per_iteration.len() {
            self.per_iteration
                .resize(other.per_iteration.len(), IterationAggregate::default());
        }
        for (a, b) in self.per_iteration.iter_mut().zip(&other.per_iteration) {
            a.sensing_num += b.sensing_num;
            a.sensing_den += b.sensing_den;
            a.comm_num += b.comm_num;
            a.comm_den += b.comm_den;
            a.bit_errors += b.bit_errors;
            a.bits += b.bits;
        }
    }

    /// Ensemble sensing NMSE in the expectation-ratio form.
    pub fn sensing_nmse(&self) -> f64 {
        if self.sensing.is_empty() {
            return f64::NAN;
        }
        let mut acc = 0.0;
        for &(num, den) in &self.sensing {
            if den == 0.0 {
                return f64::NAN;
            }
            acc += num / den;
        }
        acc / self.sensing.len() as f64
    }

    pub fn comm_nmse(&self) -> f64 {
        if self.comm_den == 0.0 {
            f64::NAN
        } else {
            self.comm_num / self.comm_den
        }
    }

    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            f64::NAN
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    /// Ensemble per-iteration sensing NMSE trace (pooled over STXs).
    pub fn sensing_trace(&self) -> Vec<f64> {
        self.per_iteration
            .iter()
            .map(|it| {
                if it.sensing_den == 0.0 {
                    f64::NAN
                } else {
                    it.sensing_num / it.sensing_den
                }
            })
            .collect()
    }

    pub fn comm_trace(&self) -> Vec<f64> {
        self.per_iteration
            .iter()
            .map(|it| {
                if it.comm_den == 0.0 {
                    f64::NAN
                } else {
                    it.comm_num / it.comm_den
                }
            })
            .collect()
    }

    pub fn ber_trace(&self) -> Vec<f64> {
        self.per_iteration
            .iter()
            .map(|it| {
                if it.bits == 0 {
                    f64::NAN
                } else {
                    it.bit_errors as f64 / it.bits as f64
                }
            })
            .collect()
    }
}

/// Aggregated metrics of one cell.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub snr_db: f64,
    pub scheme: crate::config::Scheme,
    pub receiver: ReceiverKind,
    pub m: usize,
    pub u: usize,
    pub sensing_nmse: f64,
    pub comm_nmse: f64,
    pub ber: f64,
    pub se: f64,
    pub trials: u64,
    pub sensing_trace: Vec<f64>,
    pub comm_trace: Vec<f64>,
    pub ber_trace: Vec<f64>,
}
