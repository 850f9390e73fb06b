//! Iterative interference cancellation receivers and their sub-steps.
//!
//! Both receivers alternate between two estimation families over a shared
//! observation: subtract the reconstructed communication signal, extract the
//! sensing channels in the delay domain (phase-shift windows or comb
//! de-aliasing), subtract the reconstructed sensing signals, and re-estimate
//! the communication channel for detection.
//!
//! The joint receiver refreshes everything each pass. The sequential
//! receiver freezes the initial pilot-based communication estimate for `Q1`
//! passes — which only works when that estimate is interference-free, i.e.
//! for the nulling layouts — then unfreezes it with decision-directed
//! delay-truncated refinement for `Q2` more.
//!
//! # Cost accounting
//!
//! Each step advances the run's [`OpCounter`] by its cost-model price, listed
//! per iteration below (`T` = one N-point transform):
//!
//! ```text
//! joint:        (U+3)T | 2U+2 T,  4(U+5)N real mults, 4(U+3)N real adds
//! sequential 1: (U+1)T | 2U   T,  4(U+2)N real mults, 4(U+1)N real adds
//! sequential 2: (U+3)T | 2U+2 T,  4(U+5)N real mults, 4(U+3)N real adds
//! ```
//!
//! The first transform count of each pair applies to phase-shifted layouts,
//! the second to combs. The sequential initialization and the common
//! front-end FFT are outside the model and charge nothing. The
//! [`crate::complexity`] module evaluates the same budgets in closed form;
//! the audit requires exact agreement.

use crate::config::{ReceiverKind, Scheme, SystemParams};
use crate::metrics;
use crate::modem::{Constellation, ModemError};
use crate::pilots::{PilotError, PilotPlan, StxAlloc};
use crate::transforms::{fft, fft_raw, ifft, ifft_raw, OpCounter, TransformError};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

/// Magnitudes below this are clamped before zero-forcing division.
const ZF_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ReceiverError {
    /// Step called with the wrong pilot scheme.
    SchemeMismatch {
        expected: &'static str,
        got: Scheme,
    },
    /// `baseline` called with a non-baseline receiver kind.
    NotABaseline(ReceiverKind),
    /// Pilot comb is not uniform from subcarrier zero.
    NonUniformPilots,
    /// The nulled-bin completion system is singular.
    FillSingular,
    LengthMismatch {
        expected: usize,
        got: usize,
    },
    Transform(TransformError),
    Pilot(PilotError),
    Modem(ModemError),
}

impl fmt::Display for ReceiverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReceiverError::SchemeMismatch { expected, got } => {
                write!(f, "step requires a {expected} scheme, got {got}")
            }
            ReceiverError::NotABaseline(kind) => {
                write!(f, "receiver kind {kind} is not a lower-bound baseline")
            }
            ReceiverError::NonUniformPilots => write!(f, "pilot comb is not uniform"),
            ReceiverError::FillSingular => write!(f, "nulled-bin completion is singular"),
            ReceiverError::LengthMismatch { expected, got } => {
                write!(f, "expected vector of length {expected}, got {got}")
            }
            ReceiverError::Transform(e) => write!(f, "{e}"),
            ReceiverError::Pilot(e) => write!(f, "{e}"),
            ReceiverError::Modem(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ReceiverError {}

impl From<TransformError> for ReceiverError {
    fn from(e: TransformError) -> Self {
        ReceiverError::Transform(e)
    }
}

impl From<PilotError> for ReceiverError {
    fn from(e: PilotError) -> Self {
        ReceiverError::Pilot(e)
    }
}

impl From<ModemError> for ReceiverError {
    fn from(e: ModemError) -> Self {
        ReceiverError::Modem(e)
    }
}

/// How to complete the composite estimate on nulled subcarriers (PSN/CIN
/// divide by a probing sequence that is zero there).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullFillMode {
    /// Least-squares completion constrained to the `U·N_cp` delay support.
    #[default]
    DelaySubspace,
    /// Average of the cyclically nearest non-nulled neighbors.
    Linear,
    /// Leave nulled bins at zero.
    Zero,
}

impl std::str::FromStr for NullFillMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "subspace" | "delay-subspace" => Ok(NullFillMode::DelaySubspace),
            "linear" => Ok(NullFillMode::Linear),
            "zero" => Ok(NullFillMode::Zero),
            other => Err(format!("unknown fill mode '{other}'")),
        }
    }
}

/// Ground truth supplied in simulation mode to populate traces.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub h_fc: &'a [Complex64],
    pub h_fs: &'a [Vec<Complex64>],
    pub bits: &'a [u8],
}

/// One iteration's metrics against ground truth.
#[derive(Debug, Clone, Default)]
pub struct IterationRecord {
    pub sensing_nmse: Option<f64>,
    pub comm_nmse: Option<f64>,
    pub ber: Option<f64>,
}

/// Final estimates, detected bits, per-iteration trace, and the arithmetic
/// counter of one receiver run.
#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    pub h_hat_fc: Vec<Complex64>,
    pub h_hat_fs: Vec<Vec<Complex64>>,
    pub bits_hat: Vec<u8>,
    pub x_hat_dd: Vec<Complex64>,
    pub trace: Vec<IterationRecord>,
    pub counter: OpCounter,
}

// ---------------------------------------------------------------------------
// Unmetered vector math
// ---------------------------------------------------------------------------

fn sub_product(y: &[Complex64], h: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    y.iter()
        .zip(h.iter().zip(x))
        .map(|(&yk, (&hk, &xk))| yk - hk * xk)
        .collect()
}

fn clamp_small(h: Complex64) -> Complex64 {
    let mag = h.norm();
    if mag >= ZF_CLAMP {
        h
    } else if mag == 0.0 {
        Complex64::new(ZF_CLAMP, 0.0)
    } else {
        h * (ZF_CLAMP / mag)
    }
}

// ---------------------------------------------------------------------------
// Nulled-bin completion
// ---------------------------------------------------------------------------

fn fourier_row(k: usize, n: usize, support: usize) -> Vec<Complex64> {
    (0..support)
        .map(|l| {
            let ang = -2.0 * PI * (k * l) as f64 / n as f64;
            Complex64::new(ang.cos(), ang.sin())
        })
        .collect()
}

/// Completes the composite frequency estimate on unobserved bins: the
/// layout's nulled subcarriers plus any per-pass erasures. The completion
/// fits the delay support the composite can occupy and extrapolates, so an
/// unobserved bin contributes neither interference nor a wrong value.
#[derive(Debug, Clone)]
pub struct NullFill {
    mode: NullFillMode,
    nulls: Vec<usize>,
    n: usize,
    support: usize,
    /// Cholesky factor of the normal matrix over the observed bins.
    chol_base: Vec<Vec<Complex64>>,
}

impl NullFill {
    /// Build the completion operator for `plan`. The delay support is
    /// `U·N_cp`, the span the phase-shifted composite occupies.
    pub fn new(plan: &PilotPlan, mode: NullFillMode) -> Result<Self, ReceiverError> {
        let n = plan.n;
        let nulls: Vec<usize> = (0..n).filter(|&k| plan.null_mask[k]).collect();
        let support = plan.u_count * plan.n_cp;
        if mode != NullFillMode::DelaySubspace {
            return Ok(NullFill {
                mode,
                nulls,
                n,
                support,
                chol_base: Vec::new(),
            });
        }
        let mut a = vec![vec![Complex64::new(0.0, 0.0); support]; support];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = Complex64::new(n as f64, 0.0);
        }
        subtract_outer_products(&mut a, &nulls, n, support);
        let chol = cholesky(&a).ok_or(ReceiverError::FillSingular)?;
        Ok(NullFill {
            mode,
            nulls,
            n,
            support,
            chol_base: chol,
        })
    }

    /// Fill the layout's nulled entries of `breve` in place.
    pub fn apply(&self, breve: &mut [Complex64]) -> Result<(), ReceiverError> {
        match self.mode {
            NullFillMode::Zero => {
                for &k in &self.nulls {
                    breve[k] = Complex64::new(0.0, 0.0);
                }
            }
            NullFillMode::Linear => {
                if self.nulls.is_empty() {
                    return Ok(());
                }
                let n = self.n;
                let is_null: Vec<bool> = {
                    let mut m = vec![false; n];
                    for &k in &self.nulls {
                        m[k] = true;
                    }
                    m
                };
                let originals = breve.to_vec();
                for &k in &self.nulls {
                    let mut lo = (k + n - 1) % n;
                    while is_null[lo] {
                        lo = (lo + n - 1) % n;
                    }
                    let mut hi = (k + 1) % n;
                    while is_null[hi] {
                        hi = (hi + 1) % n;
                    }
                    breve[k] = (originals[lo] + originals[hi]) * 0.5;
                }
            }
            NullFillMode::DelaySubspace => {
                if self.nulls.is_empty() {
                    return Ok(());
                }
                for &k in &self.nulls {
                    breve[k] = Complex64::new(0.0, 0.0);
                }
                // bᵢ = Σ_{k observed} breve[k] e^{+j2πki/N} = √N·ifft(breve)ᵢ
                let t = ifft_raw(breve)?;
                let scale = (self.n as f64).sqrt();
                let b: Vec<Complex64> = t[..self.support].iter().map(|v| v * scale).collect();
                let g = chol_solve(&self.chol_base, &b);
                for &k in &self.nulls {
                    let row = fourier_row(k, self.n, self.support);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (gl, fl) in g.iter().zip(&row) {
                        acc += gl * fl;
                    }
                    breve[k] = acc;
                }
            }
        }
        Ok(())
    }
}

/// `a -= Σ_k f_k f_kᴴ` for the Fourier rows of the given bins.
fn subtract_outer_products(a: &mut [Vec<Complex64>], bins: &[usize], n: usize, support: usize) {
    for &k in bins {
        let row = fourier_row(k, n, support);
        for i in 0..support {
            for j in 0..support {
                a[i][j] -= row[i].conj() * row[j];
            }
        }
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
fn cholesky(a: &[Vec<Complex64>]) -> Option<Vec<Vec<Complex64>>> {
    let d = a.len();
    let mut l = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for j in 0..d {
        let mut diag = a[j][j].re;
        diag -= l[j][..j].iter().map(|v| v.norm_sqr()).sum::<f64>();
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let dj = diag.sqrt();
        l[j][j] = Complex64::new(dj, 0.0);
        for i in j + 1..d {
            let mut s = a[i][j];
            let (li, lj) = (&l[i], &l[j]);
            for (x, y) in li[..j].iter().zip(&lj[..j]) {
                s -= x * y.conj();
            }
            l[i][j] = s / dj;
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<Complex64>], b: &[Complex64]) -> Vec<Complex64> {
    let d = l.len();
    let mut y = vec![Complex64::new(0.0, 0.0); d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i].re;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k][i].conj() * x[k];
        }
        x[i] = s / l[i][i].re;
    }
    x
}

// ---------------------------------------------------------------------------
// Receiver sub-steps
// ---------------------------------------------------------------------------

/// Subtract the reconstructed communication signal: `y - ĥ_c ⊗ x_dd`.
pub fn cancel_comm(
    y_f: &[Complex64],
    h_hat_c: &[Complex64],
    x_dd: &[Complex64],
    counter: &mut OpCounter,
) -> Vec<Complex64> {
    counter.charge_complex_mults(y_f.len());
    counter.charge_complex_adds(y_f.len());
    sub_product(y_f, h_hat_c, x_dd)
}

/// Phase-shift sensing extraction: composite LS division, one composite
/// inverse transform, and one per-STX window + forward transform.
///
/// Returns the estimated frequency response of every STX link.
pub fn estimate_sensing_ps(
    y_tilde_s: &[Complex64],
    x_fr: &[Complex64],
    plan: &PilotPlan,
    fill: &NullFill,
    erased: &[usize],
    prev: Option<&[Vec<Complex64>]>,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<Complex64>>, ReceiverError> {
    if !plan.scheme.is_phase_shifted() {
        return Err(ReceiverError::SchemeMismatch {
            expected: "phase-shifted",
            got: plan.scheme,
        });
    }
    let n = plan.n;
    counter.charge_complex_divs(n);
    let mut breve = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        if !plan.null_mask[k] {
            breve[k] = y_tilde_s[k] / x_fr[k];
        }
    }
    // Erased bins carry the previous composite instead of unreliable data.
    if let Some(prev) = prev {
        for &k in erased {
            if plan.null_mask[k] {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (u, h_prev) in prev.iter().enumerate() {
                let offset = (u * plan.n_cp) as f64;
                let ang = -2.0 * PI * (k as f64) * offset / n as f64;
                acc += h_prev[k] * Complex64::new(ang.cos(), ang.sin());
            }
            breve[k] = acc;
        }
    }
    fill.apply(&mut breve)?;
    let composite_t = ifft(&breve, counter)?;
    let mut out = Vec::with_capacity(plan.u_count);
    for u in 1..=plan.u_count {
        let offset = plan
            .shift_offset(u)
            .expect("phase-shifted plan carries offsets");
        // Window [(u-1)N_cp, uN_cp) and undo the cyclic shift; both are free.
        let mut taps = vec![Complex64::new(0.0, 0.0); n];
        taps[..plan.n_cp].copy_from_slice(&composite_t[offset..offset + plan.n_cp]);
        out.push(fft(&taps, counter)?);
    }
    Ok(out)
}

/// Comb sensing extraction: per-STX LS on its active tones, inverse
/// transform, principal-replica window scaled back to full amplitude, and a
/// forward transform. Erased tones are excluded by refitting the CP-span
/// delay taps over the remaining ones.
pub fn estimate_sensing_comb(
    y_tilde_s: &[Complex64],
    x_fr: &[Complex64],
    plan: &PilotPlan,
    erased: &[usize],
    counter: &mut OpCounter,
) -> Result<Vec<Vec<Complex64>>, ReceiverError> {
    if plan.scheme.is_phase_shifted() {
        return Err(ReceiverError::SchemeMismatch {
            expected: "interleaved",
            got: plan.scheme,
        });
    }
    let n = plan.n;
    let n_cp = plan.n_cp;
    // One LS pass over the band regardless of how the combs split it.
    counter.charge_complex_divs(n);
    let mut out = Vec::with_capacity(plan.u_count);
    for u in 1..=plan.u_count {
        let StxAlloc::Comb { period, .. } = plan.stx_alloc[u - 1] else {
            unreachable!("comb plan carries comb allocations");
        };
        let boost = (period as f64).sqrt();
        let active = plan.active_indices(u);
        let dropped: Vec<usize> = erased
            .iter()
            .copied()
            .filter(|k| active.binary_search(k).is_ok())
            .collect();
        // Refit only while it stays well conditioned; otherwise keep the
        // plain estimate.
        let drop_set: Vec<usize> = if dropped.len() * 4 <= active.len() {
            dropped
        } else {
            Vec::new()
        };
        let mut comb_ls = vec![Complex64::new(0.0, 0.0); n];
        for &k in &active {
            if drop_set.binary_search(&k).is_err() {
                comb_ls[k] = y_tilde_s[k] / (x_fr[k] * boost);
            }
        }
        let t = ifft(&comb_ls, counter)?;
        let mut taps = vec![Complex64::new(0.0, 0.0); n];
        if !active.is_empty() {
            let scale = (n as f64).sqrt();
            let b: Vec<Complex64> = t[..n_cp].iter().map(|v| v * scale).collect();
            let g = if drop_set.is_empty() {
                let inv = 1.0 / active.len() as f64;
                b.iter().map(|v| v * inv).collect()
            } else {
                let mut a = vec![vec![Complex64::new(0.0, 0.0); n_cp]; n_cp];
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] = Complex64::new(active.len() as f64, 0.0);
                }
                subtract_outer_products(&mut a, &drop_set, n, n_cp);
                match cholesky(&a) {
                    Some(l) => chol_solve(&l, &b),
                    None => {
                        let inv = 1.0 / active.len() as f64;
                        b.iter().map(|v| v * inv).collect()
                    }
                }
            };
            let obs: Vec<usize> = active
                .iter()
                .copied()
                .filter(|k| drop_set.binary_search(k).is_err())
                .collect();
            let g = robust_refit(&comb_ls, &obs, &g, n, n_cp);
            for (l, v) in g.iter().enumerate() {
                taps[l] = v * scale;
            }
        }
        out.push(fft(&taps, counter)?);
    }
    Ok(out)
}

/// Robust refit of a comb's delay taps. Consistent decision ghosts survive
/// the confidence gate but not the fit: they leave a heavy-tailed residual
/// pattern across the comb. When such a pattern appears, the taps are
/// re-estimated from the best-agreeing half of the tones (which out-votes a
/// ghost holding under half of them), then consistent tones are re-included.
/// Homogeneous residuals leave the fit untouched.
fn robust_refit(
    comb_ls: &[Complex64],
    obs: &[usize],
    g: &[Complex64],
    n: usize,
    n_cp: usize,
) -> Vec<Complex64> {
    if obs.len() < 4 * n_cp {
        return g.to_vec();
    }
    let model = |k: usize, g: &[Complex64]| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, gl) in g.iter().enumerate() {
            let ang = -2.0 * PI * (k * l) as f64 / n as f64;
            acc += gl * Complex64::new(ang.cos(), ang.sin());
        }
        acc
    };
    let residuals = |g: &[Complex64]| -> Vec<f64> {
        obs.iter()
            .map(|&k| (comb_ls[k] - model(k, g)).norm())
            .collect()
    };
    let median = |r: &[f64]| -> f64 {
        let mut s = r.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s[s.len() / 2]
    };
    let fit = |keep: &dyn Fn(usize, f64) -> f64, resid: &[f64]| -> Option<Vec<Complex64>> {
        let mut a = vec![vec![Complex64::new(0.0, 0.0); n_cp]; n_cp];
        let mut b = vec![Complex64::new(0.0, 0.0); n_cp];
        for (idx, (&k, &r)) in obs.iter().zip(resid).enumerate() {
            let w = keep(idx, r);
            if w == 0.0 {
                continue;
            }
            let row = fourier_row(k, n, n_cp);
            for i in 0..n_cp {
                for j in 0..n_cp {
                    a[i][j] += row[i].conj() * row[j] * w;
                }
                b[i] += comb_ls[k] * row[i].conj() * w;
            }
        }
        cholesky(&a).map(|l| chol_solve(&l, &b))
    };

    let rms = (obs.iter().map(|&k| comb_ls[k].norm_sqr()).sum::<f64>() / obs.len() as f64).sqrt();
    let r0 = residuals(g);
    let med0 = median(&r0);
    // A ghost shows as a cluster of tones far outside the residual bulk;
    // noise tails and dust-scale heterogeneity never reach this.
    let far = r0.iter().filter(|&&r| r > 4.0 * med0).count();
    if med0 <= 1e-9 * rms || far < 4.max(n_cp / 2) {
        return g.to_vec();
    }
    // Trim to the best-agreeing half, then re-include consistent tones.
    let mut current = g.to_vec();
    for _ in 0..2 {
        let resid = residuals(&current);
        let mut order: Vec<usize> = (0..obs.len()).collect();
        order.sort_by(|&a, &b| resid[a].partial_cmp(&resid[b]).unwrap());
        let keep_set: Vec<bool> = {
            let mut m = vec![false; obs.len()];
            for &idx in &order[..obs.len() / 2] {
                m[idx] = true;
            }
            m
        };
        match fit(&|idx, _| if keep_set[idx] { 1.0 } else { 0.0 }, &resid) {
            Some(gh) => current = gh,
            None => return g.to_vec(),
        }
    }
    let resid = residuals(&current);
    let med = median(&resid).max(1e-12 * rms);
    let cutoff = 3.0 * med;
    match fit(
        &|_, r| {
            if r <= cutoff {
                1.0
            } else {
                (cutoff / r) * (cutoff / r)
            }
        },
        &resid,
    ) {
        Some(gh) => gh,
        None => current,
    }
}

/// Dispatch to the extraction matching the plan's scheme.
pub fn estimate_sensing(
    y_tilde_s: &[Complex64],
    x_fr: &[Complex64],
    plan: &PilotPlan,
    fill: &NullFill,
    erased: &[usize],
    prev: Option<&[Vec<Complex64>]>,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<Complex64>>, ReceiverError> {
    if plan.scheme.is_phase_shifted() {
        estimate_sensing_ps(y_tilde_s, x_fr, plan, fill, erased, prev, counter)
    } else {
        estimate_sensing_comb(y_tilde_s, x_fr, plan, erased, counter)
    }
}

/// Subtract every reconstructed sensing signal: `y - Σ_u ĥ_u ⊗ x_u`.
pub fn cancel_sensing(
    y_f: &[Complex64],
    h_hat_fs: &[Vec<Complex64>],
    x_fsu: &[Vec<Complex64>],
    counter: &mut OpCounter,
) -> Vec<Complex64> {
    let n = y_f.len();
    let u = h_hat_fs.len();
    counter.charge_complex_mults(u * n);
    counter.charge_complex_adds(u * n);
    let mut out = y_f.to_vec();
    for (h_u, x_u) in h_hat_fs.iter().zip(x_fsu) {
        for k in 0..n {
            out[k] -= h_u[k] * x_u[k];
        }
    }
    out
}

fn pilot_estimate_core(
    y_tilde_c: &[Complex64],
    plan: &PilotPlan,
) -> Result<Vec<Complex64>, ReceiverError> {
    let n = plan.n;
    let np = plan.k_p.len();
    // Require the uniform comb the DFT interpolation assumes.
    let spacing = n / np;
    if plan.k_p.iter().enumerate().any(|(j, &k)| k != j * spacing) {
        return Err(ReceiverError::NonUniformPilots);
    }
    let ls: Vec<Complex64> = plan
        .k_p
        .iter()
        .zip(&plan.p_fc)
        .map(|(&k, &p)| y_tilde_c[k] / p)
        .collect();
    let g = ifft_raw(&ls)?;
    // The delay image repeats every |K_p| samples; keeping the CP span drops
    // the aliases and the out-of-support noise.
    let mut padded = vec![Complex64::new(0.0, 0.0); n];
    padded[..plan.n_cp].copy_from_slice(&g[..plan.n_cp]);
    let mut h = fft_raw(&padded)?;
    let scale = (n as f64 / np as f64).sqrt();
    for v in &mut h {
        *v *= scale;
    }
    Ok(h)
}

/// Pilot LS estimate on `K_p` followed by DFT interpolation to the full
/// band. Charged as one division pass plus two transforms.
pub fn estimate_comm_pilot(
    y_tilde_c: &[Complex64],
    plan: &PilotPlan,
    counter: &mut OpCounter,
) -> Result<Vec<Complex64>, ReceiverError> {
    counter.charge_complex_divs(plan.n);
    counter.charge_transform(plan.n);
    counter.charge_transform(plan.n);
    pilot_estimate_core(y_tilde_c, plan)
}

/// Detection products: soft values, the full decision-directed vector, the
/// reliability-gated copy used for interference reconstruction, the per-bin
/// confidence mask, the erasure candidates, and bits.
struct Detection {
    x_soft: Vec<Complex64>,
    x_dd: Vec<Complex64>,
    x_dd_cancel: Vec<Complex64>,
    confident: Vec<bool>,
    /// Unconfident comb tones: the sensing fit drops them rather than
    /// absorb a doubtful reconstruction or raw payload leak.
    erasable: Vec<bool>,
    bits: Vec<u8>,
}

fn zf_core(
    y_tilde_c: &[Complex64],
    h_hat: &[Complex64],
    plan: &PilotPlan,
    table: &Constellation,
) -> Detection {
    let n = plan.n;
    let x_soft: Vec<Complex64> = (0..n)
        .map(|k| y_tilde_c[k] / clamp_small(h_hat[k]))
        .collect();
    // Confidence ball: half the minimum constellation distance.
    let d_min = table
        .points()
        .iter()
        .enumerate()
        .flat_map(|(i, a)| table.points()[i + 1..].iter().map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min);
    let comb_scheme = !plan.scheme.is_phase_shifted();
    let gate = 0.5 * d_min;
    let mut x_dd = vec![Complex64::new(0.0, 0.0); n];
    let mut x_dd_cancel = vec![Complex64::new(0.0, 0.0); n];
    let mut confident = vec![false; n];
    let mut erasable = vec![false; n];
    for (&k, &p) in plan.k_p.iter().zip(&plan.p_fc) {
        x_dd[k] = p;
        x_dd_cancel[k] = p;
        confident[k] = true;
    }
    let mut bits = Vec::with_capacity(plan.k_d.len() * table.bits_per_symbol());
    for &k in &plan.k_d {
        let label = table.nearest_label(x_soft[k]);
        let point = table.point(label);
        x_dd[k] = point;
        let dist = (x_soft[k] - point).norm();
        if dist.is_finite() && dist < gate {
            x_dd_cancel[k] = point;
            confident[k] = true;
        } else if comb_scheme {
            // A doubtful decision can lodge a consistent ghost inside a
            // comb's small delay space: reconstruct nothing there and drop
            // the tone from the sensing fit.
            erasable[k] = true;
        } else {
            // Full-band layouts disperse decision errors across the whole
            // delay axis, so the slice remains the best reconstruction.
            x_dd_cancel[k] = point;
        }
        for i in (0..table.bits_per_symbol()).rev() {
            bits.push(((label >> i) & 1) as u8);
        }
    }
    Detection {
        x_soft,
        x_dd,
        x_dd_cancel,
        confident,
        erasable,
        bits,
    }
}

/// Zero-forcing detection: equalize, slice the data tones, pin the pilots.
///
/// Returns `(x_soft, x_dd, bits_hat)`.
pub fn zf_detect(
    y_tilde_c: &[Complex64],
    h_hat: &[Complex64],
    plan: &PilotPlan,
    table: &Constellation,
    counter: &mut OpCounter,
) -> (Vec<Complex64>, Vec<Complex64>, Vec<u8>) {
    counter.charge_complex_divs(plan.n);
    let det = zf_core(y_tilde_c, h_hat, plan, table);
    (det.x_soft, det.x_dd, det.bits)
}

/// Decision-directed full-band refinement: `y ⊘ x_dd`.
pub fn dd_refine_fullband(
    y_tilde_c: &[Complex64],
    x_dd: &[Complex64],
    counter: &mut OpCounter,
) -> Vec<Complex64> {
    counter.charge_complex_divs(y_tilde_c.len());
    y_tilde_c.iter().zip(x_dd).map(|(&y, &x)| y / x).collect()
}

/// Decision-directed refinement with delay-domain denoising: divide,
/// transform to the delay domain, keep the CP span, transform back.
pub fn dd_refine_denoised(
    y_tilde_c: &[Complex64],
    x_dd: &[Complex64],
    n_cp: usize,
    counter: &mut OpCounter,
) -> Result<Vec<Complex64>, ReceiverError> {
    let n = y_tilde_c.len();
    counter.charge_complex_divs(n);
    let ratio: Vec<Complex64> = y_tilde_c.iter().zip(x_dd).map(|(&y, &x)| y / x).collect();
    let mut t = ifft(&ratio, counter)?;
    for v in t.iter_mut().skip(n_cp) {
        *v = Complex64::new(0.0, 0.0);
    }
    Ok(fft(&t, counter)?)
}

/// [`dd_refine_denoised`] with soft fallback: bins whose decision failed the
/// confidence gate carry the previous channel estimate into the delay-domain
/// smoothing instead of a division by a doubtful symbol. Same charge.
fn dd_refine_denoised_masked(
    y_tilde_c: &[Complex64],
    det: &Detection,
    h_prev: &[Complex64],
    n_cp: usize,
    counter: &mut OpCounter,
) -> Result<Vec<Complex64>, ReceiverError> {
    let n = y_tilde_c.len();
    counter.charge_complex_divs(n);
    let ratio: Vec<Complex64> = (0..n)
        .map(|k| {
            if det.confident[k] {
                y_tilde_c[k] / det.x_dd[k]
            } else {
                h_prev[k]
            }
        })
        .collect();
    let mut t = ifft(&ratio, counter)?;
    for v in t.iter_mut().skip(n_cp) {
        *v = Complex64::new(0.0, 0.0);
    }
    Ok(fft(&t, counter)?)
}

// ---------------------------------------------------------------------------
// Full receivers
// ---------------------------------------------------------------------------

fn record_iteration(
    truth: Option<&Truth<'_>>,
    h_fs: &[Vec<Complex64>],
    h_fc: &[Complex64],
    bits: &[u8],
) -> IterationRecord {
    match truth {
        None => IterationRecord::default(),
        Some(t) => IterationRecord {
            sensing_nmse: metrics::sensing_nmse(t.h_fs, h_fs).ok(),
            comm_nmse: metrics::comm_nmse(t.h_fc, h_fc).ok(),
            ber: metrics::ber(t.bits, bits).ok(),
        },
    }
}

/// Data bins the sensing fit should drop: previous decision unreliable and
/// channel strong enough to leak.
fn erased_bins(plan: &PilotPlan, det: Option<&Detection>) -> Vec<usize> {
    match det {
        None => Vec::new(),
        Some(d) => plan
            .k_d
            .iter()
            .copied()
            .filter(|&k| d.erasable[k])
            .collect(),
    }
}

fn stx_signals(plan: &PilotPlan, x_fr: &[Complex64]) -> Result<Vec<Vec<Complex64>>, PilotError> {
    (1..=plan.u_count)
        .map(|u| crate::pilots::build_stx_signal(plan, u, x_fr))
        .collect()
}

/// Joint iterative interference cancellation (`Q` full passes).
///
/// The first pass bootstraps the communication channel from the pilot comb;
/// later passes refresh it from the previous decision-directed symbol vector
/// with delay-domain denoising, at the same per-iteration transform and
/// division budget. The refreshed estimate feeds the next iteration's
/// communication cancellation; the full-band decision-directed division is
/// the iteration's reported communication estimate. Works for every scheme.
pub fn joint_iic(
    y_f: &[Complex64],
    plan: &PilotPlan,
    params: &SystemParams,
    x_fr: &[Complex64],
    fill_mode: NullFillMode,
    truth: Option<&Truth<'_>>,
) -> Result<ReceiverOutput, ReceiverError> {
    let n = plan.n;
    if y_f.len() != n {
        return Err(ReceiverError::LengthMismatch {
            expected: n,
            got: y_f.len(),
        });
    }
    let mut counter = OpCounter::new();
    let table = Constellation::new(params.m)?;
    let fill = NullFill::new(plan, fill_mode)?;
    let x_fsu = stx_signals(plan, x_fr)?;

    let mut h_fed = vec![Complex64::new(0.0, 0.0); n];
    let mut prev_det: Option<Detection> = None;
    // The drop set is frozen at the first detection so later fits share one
    // geometry; churn in the fitted bin set would otherwise show up as
    // spurious trace movement.
    let mut erased: Option<Vec<usize>> = None;
    let mut trace = Vec::with_capacity(params.q);
    let mut h_fs = Vec::new();
    let mut h_dd = vec![Complex64::new(0.0, 0.0); n];

    for _ in 0..params.q {
        // Reconstruction uses the reliability-gated decisions.
        let y_tilde_s = match &prev_det {
            None => cancel_comm(
                y_f,
                &h_fed,
                &vec![Complex64::new(0.0, 0.0); n],
                &mut counter,
            ),
            Some(det) => cancel_comm(y_f, &h_fed, &det.x_dd_cancel, &mut counter),
        };
        if erased.is_none() {
            erased = prev_det.as_ref().map(|det| erased_bins(plan, Some(det)));
        }
        let drop_set = erased.as_deref().unwrap_or(&[]);
        let prev_fs = if h_fs.is_empty() {
            None
        } else {
            Some(h_fs.clone())
        };
        h_fs = estimate_sensing(
            &y_tilde_s,
            x_fr,
            plan,
            &fill,
            drop_set,
            prev_fs.as_deref(),
            &mut counter,
        )?;
        let y_tilde_c = cancel_sensing(y_f, &h_fs, &x_fsu, &mut counter);
        let h_est = match &prev_det {
            None => estimate_comm_pilot(&y_tilde_c, plan, &mut counter)?,
            Some(det) => {
                dd_refine_denoised_masked(&y_tilde_c, det, &h_fed, plan.n_cp, &mut counter)?
            }
        };
        counter.charge_complex_divs(n);
        let det = zf_core(&y_tilde_c, &h_est, plan, &table);
        h_dd = dd_refine_fullband(&y_tilde_c, &det.x_dd, &mut counter);
        trace.push(record_iteration(truth, &h_fs, &h_dd, &det.bits));
        h_fed = h_est;
        prev_det = Some(det);
    }

    let det = prev_det.expect("Q >= 1");
    Ok(ReceiverOutput {
        h_hat_fc: h_dd,
        h_hat_fs: h_fs,
        bits_hat: det.bits,
        x_hat_dd: det.x_dd,
        trace,
        counter,
    })
}

/// Sequential interference cancellation: `Q1` passes against the frozen
/// initial communication estimate, then `Q2` passes with decision-directed
/// delay-truncated refinement.
pub fn sequential_iic(
    y_f: &[Complex64],
    plan: &PilotPlan,
    params: &SystemParams,
    x_fr: &[Complex64],
    fill_mode: NullFillMode,
    truth: Option<&Truth<'_>>,
) -> Result<ReceiverOutput, ReceiverError> {
    let n = plan.n;
    if y_f.len() != n {
        return Err(ReceiverError::LengthMismatch {
            expected: n,
            got: y_f.len(),
        });
    }
    let mut counter = OpCounter::new();
    let table = Constellation::new(params.m)?;
    let fill = NullFill::new(plan, fill_mode)?;
    let x_fsu = stx_signals(plan, x_fr)?;

    // Initialization is outside the per-iteration cost model.
    let h0 = pilot_estimate_core(y_f, plan)?;
    let mut h_curr = h0.clone();
    let mut prev_det: Option<Detection> = None;
    let mut erased: Option<Vec<usize>> = None;
    let mut trace = Vec::with_capacity(params.q1 + params.q2);
    let mut h_fs = Vec::new();

    for q in 1..=(params.q1 + params.q2) {
        if q <= params.q1 {
            // Phase 1 budget: reconstruction multiply, LS divide, U+1 (or
            // 2U) transforms, and the sensing cancellation. Detection
            // against the frozen channel is not rated.
            counter.charge_complex_mults(n);
            let y_tilde_s = match &prev_det {
                None => y_f.to_vec(),
                Some(det) => sub_product(y_f, &h0, &det.x_dd_cancel),
            };
            if erased.is_none() {
                erased = prev_det.as_ref().map(|det| erased_bins(plan, Some(det)));
            }
            let drop_set = erased.as_deref().unwrap_or(&[]);
            let prev_fs = if h_fs.is_empty() {
                None
            } else {
                Some(h_fs.clone())
            };
            h_fs = estimate_sensing(
                &y_tilde_s,
                x_fr,
                plan,
                &fill,
                drop_set,
                prev_fs.as_deref(),
                &mut counter,
            )?;
            let y_tilde_c = cancel_sensing(y_f, &h_fs, &x_fsu, &mut counter);
            let det = zf_core(&y_tilde_c, &h0, plan, &table);
            trace.push(record_iteration(truth, &h_fs, &h0, &det.bits));
            prev_det = Some(det);
        } else {
            let last = prev_det.as_ref().expect("Q1 >= 1");
            let y_tilde_s = cancel_comm(y_f, &h_curr, &last.x_dd_cancel, &mut counter);
            if erased.is_none() {
                erased = Some(erased_bins(plan, Some(last)));
            }
            let drop_set = erased.as_deref().unwrap_or(&[]);
            let prev_fs = if h_fs.is_empty() {
                None
            } else {
                Some(h_fs.clone())
            };
            h_fs = estimate_sensing(
                &y_tilde_s,
                x_fr,
                plan,
                &fill,
                drop_set,
                prev_fs.as_deref(),
                &mut counter,
            )?;
            let y_tilde_c = cancel_sensing(y_f, &h_fs, &x_fsu, &mut counter);
            let h_ref =
                dd_refine_denoised_masked(&y_tilde_c, last, &h_curr, plan.n_cp, &mut counter)?;
            counter.charge_complex_divs(n);
            let det = zf_core(&y_tilde_c, &h_ref, plan, &table);
            // Refinement passes are rated at the joint per-iteration price.
            counter.charge_complex_divs(n);
            trace.push(record_iteration(truth, &h_fs, &h_ref, &det.bits));
            h_curr = h_ref;
            prev_det = Some(det);
        }
    }

    let det = prev_det.expect("Q1 >= 1");
    Ok(ReceiverOutput {
        h_hat_fc: h_curr,
        h_hat_fs: h_fs,
        bits_hat: det.bits,
        x_hat_dd: det.x_dd,
        trace,
        counter,
    })
}

/// Interference-free baselines: a single sensing-estimation pass over a
/// sensing-only observation, or a single pilot estimation and detection pass
/// over a communication-only observation.
pub fn baseline(
    kind: ReceiverKind,
    y_f: &[Complex64],
    plan: &PilotPlan,
    params: &SystemParams,
    x_fr: &[Complex64],
    fill_mode: NullFillMode,
    truth: Option<&Truth<'_>>,
) -> Result<ReceiverOutput, ReceiverError> {
    let n = plan.n;
    let mut counter = OpCounter::new();
    match kind {
        ReceiverKind::SensingOnlyLb => {
            let fill = NullFill::new(plan, fill_mode)?;
            let h_fs = estimate_sensing(y_f, x_fr, plan, &fill, &[], None, &mut counter)?;
            let rec = match truth {
                Some(t) => IterationRecord {
                    sensing_nmse: metrics::sensing_nmse(t.h_fs, &h_fs).ok(),
                    comm_nmse: None,
                    ber: None,
                },
                None => IterationRecord::default(),
            };
            Ok(ReceiverOutput {
                h_hat_fc: vec![Complex64::new(0.0, 0.0); n],
                h_hat_fs: h_fs,
                bits_hat: Vec::new(),
                x_hat_dd: Vec::new(),
                trace: vec![rec],
                counter,
            })
        }
        ReceiverKind::CommOnlyLb => {
            let table = Constellation::new(params.m)?;
            let h = estimate_comm_pilot(y_f, plan, &mut counter)?;
            let (_, x_dd, bits) = zf_detect(y_f, &h, plan, &table, &mut counter);
            let rec = match truth {
                Some(t) => IterationRecord {
                    sensing_nmse: None,
                    comm_nmse: metrics::comm_nmse(t.h_fc, &h).ok(),
                    ber: metrics::ber(t.bits, &bits).ok(),
                },
                None => IterationRecord::default(),
            };
            Ok(ReceiverOutput {
                h_hat_fc: h,
                h_hat_fs: Vec::new(),
                bits_hat: bits,
                x_hat_dd: x_dd,
                trace: vec![rec],
                counter,
            })
        }
        other => Err(ReceiverError::NotABaseline(other)),
    }
}

/// Run the receiver selected by `params.receiver`.
pub fn run_receiver(
    y_f: &[Complex64],
    plan: &PilotPlan,
    params: &SystemParams,
    x_fr: &[Complex64],
    fill_mode: NullFillMode,
    truth: Option<&Truth<'_>>,
) -> Result<ReceiverOutput, ReceiverError> {
    match params.receiver {
        ReceiverKind::Joint => joint_iic(y_f, plan, params, x_fr, fill_mode, truth),
        ReceiverKind::Sequential => sequential_iic(y_f, plan, params, x_fr, fill_mode, truth),
        kind => baseline(kind, y_f, plan, params, x_fr, fill_mode, truth),
    }
}
