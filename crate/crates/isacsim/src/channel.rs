//! Frequency-selective Rayleigh links and the superimposed observation.
//!
//! Every link is an L-tap tapped-delay line with i.i.d. `CN(0, 1/L)` gains
//! at integer sample delays `0..L`, so `E[||h_T||^2] = 1` and the per-bin
//! frequency response has unit average power. The simulation runs directly
//! per subcarrier; the time-domain route (IFFT, CP, cyclic convolution) is
//! exercised only by the equivalence test below.

use crate::config::{RngStream, SystemParams};
use crate::transforms::fft_raw;
use num_complex::Complex64;
use std::fmt;

/// Channel-layer errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelError {
    LengthMismatch { expected: usize, got: usize },
    TooManyTaps { l: usize, n: usize },
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelError::LengthMismatch { expected, got } => {
                write!(f, "expected vector of length {expected}, got {got}")
            }
            ChannelError::TooManyTaps { l, n } => {
                write!(f, "tap count {l} exceeds transform length {n}")
            }
        }
    }
}

impl std::error::Error for ChannelError {}

/// One trial's propagation state: CTX link, U STX links, and noise variance.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub ctx_taps: Vec<Complex64>,
    pub ctx_freq: Vec<Complex64>,
    pub stx_taps: Vec<Vec<Complex64>>,
    pub stx_freq: Vec<Vec<Complex64>>,
    /// Linear noise variance per subcarrier.
    pub sigma2: f64,
}

/// Draw L i.i.d. `CN(0, 1/L)` taps.
pub fn draw_channel(l: usize, rng: &mut RngStream) -> Vec<Complex64> {
    let var = 1.0 / l as f64;
    (0..l).map(|_| rng.next_complex_gaussian(var)).collect()
}

/// Frequency response `h_F[k] = sum_l taps[l] exp(-j 2π k l / N)`.
pub fn freq_response(taps: &[Complex64], n: usize) -> Result<Vec<Complex64>, ChannelError> {
    if taps.len() > n {
        return Err(ChannelError::TooManyTaps { l: taps.len(), n });
    }
    let mut padded = vec![Complex64::new(0.0, 0.0); n];
    padded[..taps.len()].copy_from_slice(taps);
    let mut out = fft_raw(&padded).expect("n validated as power of two");
    let scale = (n as f64).sqrt();
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

/// Draw the full realization for one trial at the given SNR.
pub fn draw_realization(p: &SystemParams, snr_db: f64, rng: &mut RngStream) -> ChannelRealization {
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let ctx_taps = draw_channel(p.l, rng);
    let ctx_freq = freq_response(&ctx_taps, p.n).expect("L <= N_cp <= N");
    let mut stx_taps = Vec::with_capacity(p.u);
    let mut stx_freq = Vec::with_capacity(p.u);
    for _ in 0..p.u {
        let taps = draw_channel(p.l, rng);
        stx_freq.push(freq_response(&taps, p.n).expect("L <= N_cp <= N"));
        stx_taps.push(taps);
    }
    ChannelRealization {
        ctx_taps,
        ctx_freq,
        stx_taps,
        stx_freq,
        sigma2,
    }
}

/// Superimpose all transmitted signals through their links and add noise:
/// `y = h_c ⊗ x_c + Σ_u h_u ⊗ x_u + w`, `w ~ CN(0, σ² I)`.
///
/// `x_fc` may be empty (sensing-only) and `x_fsu` may hold fewer signals
/// than the realization has links (communication-only uses none).
pub fn superimpose(
    x_fc: &[Complex64],
    x_fsu: &[Vec<Complex64>],
    ch: &ChannelRealization,
    rng: &mut RngStream,
) -> Result<Vec<Complex64>, ChannelError> {
    let n = ch.ctx_freq.len();
    if !x_fc.is_empty() && x_fc.len() != n {
        return Err(ChannelError::LengthMismatch {
            expected: n,
            got: x_fc.len(),
        });
    }
    if x_fsu.len() > ch.stx_freq.len() {
        return Err(ChannelError::LengthMismatch {
            expected: ch.stx_freq.len(),
            got: x_fsu.len(),
        });
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    if !x_fc.is_empty() {
        for k in 0..n {
            y[k] = ch.ctx_freq[k] * x_fc[k];
        }
    }
    for (x_u, h_u) in x_fsu.iter().zip(&ch.stx_freq) {
        if x_u.len() != n {
            return Err(ChannelError::LengthMismatch {
                expected: n,
                got: x_u.len(),
            });
        }
        for k in 0..n {
            y[k] += h_u[k] * x_u[k];
        }
    }
    if ch.sigma2 > 0.0 {
        for v in y.iter_mut() {
            *v += rng.next_complex_gaussian(ch.sigma2);
        }
    }
    Ok(y)
}
