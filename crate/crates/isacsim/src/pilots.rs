//! Frequency-domain resource allocation for the four pilot architectures.
//!
//! The CTX always transmits a uniform pilot comb `K_p` plus data on the
//! complement `K_d`. STXs share a common unit-modulus probing sequence and
//! differ by either a cyclic phase shift (PS/PSN) that parks each CIR in its
//! own delay window `[(u-1)·N_cp, u·N_cp)`, or by a disjoint residue-class
//! comb (CI/CIN) boosted by `sqrt(U)` so the radiated power over the band
//! stays at one. Nulling variants zero the probing sequence on `K_p`.

use crate::config::{ConfigError, RngStream, Scheme, SystemParams};
use crate::modem;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

/// Per-STX allocation descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StxAlloc {
    /// Cyclic time shift of `offset` samples (phase ramp in frequency).
    PhaseShift { offset: usize },
    /// Subcarriers `{k : k mod period == offset}`.
    Comb { offset: usize, period: usize },
}

/// Immutable description of one frame's resource allocation.
#[derive(Debug, Clone)]
pub struct PilotPlan {
    pub scheme: Scheme,
    pub n: usize,
    pub n_cp: usize,
    pub u_count: usize,
    /// Sorted CTX pilot subcarriers.
    pub k_p: Vec<usize>,
    /// Sorted CTX data subcarriers.
    pub k_d: Vec<usize>,
    /// CTX pilot symbols, one per entry of `k_p`, unit modulus.
    pub p_fc: Vec<Complex64>,
    pub stx_alloc: Vec<StxAlloc>,
    /// True where sensing sequences are forced to zero.
    pub null_mask: Vec<bool>,
}

/// Pilot-layer errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PilotError {
    /// Operation requires a phase-shifted scheme.
    NotPhaseShifted(Scheme),
    /// STX index outside `1..=U`.
    StxOutOfRange {
        u: usize,
        u_count: usize,
    },
    /// Payload bit count does not match `|K_d| * log2(M)`.
    PayloadLength {
        expected: usize,
        got: usize,
    },
    Config(ConfigError),
    Modem(modem::ModemError),
}

impl fmt::Display for PilotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PilotError::NotPhaseShifted(s) => {
                write!(f, "phase shift is undefined for scheme {s}")
            }
            PilotError::StxOutOfRange { u, u_count } => {
                write!(f, "STX index {u} outside 1..={u_count}")
            }
            PilotError::PayloadLength { expected, got } => {
                write!(f, "payload needs {expected} bits, got {got}")
            }
            PilotError::Config(e) => write!(f, "{e}"),
            PilotError::Modem(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PilotError {}

impl From<ConfigError> for PilotError {
    fn from(e: ConfigError) -> Self {
        PilotError::Config(e)
    }
}

impl From<modem::ModemError> for PilotError {
    fn from(e: modem::ModemError) -> Self {
        PilotError::Modem(e)
    }
}

impl PilotPlan {
    /// Subcarriers assigned to STX `u` (1-based) before nulling.
    pub fn comb_indices(&self, u: usize) -> Vec<usize> {
        match self.stx_alloc[u - 1] {
            StxAlloc::Comb { offset, period } => {
                (0..self.n).filter(|k| k % period == offset).collect()
            }
            StxAlloc::PhaseShift { .. } => (0..self.n).collect(),
        }
    }

    /// Subcarriers STX `u` actually radiates on (nulling applied).
    pub fn active_indices(&self, u: usize) -> Vec<usize> {
        self.comb_indices(u)
            .into_iter()
            .filter(|&k| !self.null_mask[k])
            .collect()
    }

    /// Delay-shift of STX `u` for phase-shifted schemes.
    pub fn shift_offset(&self, u: usize) -> Option<usize> {
        match self.stx_alloc[u - 1] {
            StxAlloc::PhaseShift { offset } => Some(offset),
            StxAlloc::Comb { .. } => None,
        }
    }
}

/// Build the allocation of a validated parameter set. `rng` supplies the
/// CTX pilot symbols.
pub fn build_pilot_plan(p: &SystemParams, rng: &mut RngStream) -> Result<PilotPlan, PilotError> {
    let k_p: Vec<usize> = (0..p.n).step_by(p.pilot_spacing).collect();
    let k_d: Vec<usize> = (0..p.n).filter(|k| k % p.pilot_spacing != 0).collect();
    let p_fc: Vec<Complex64> = k_p.iter().map(|_| rng.next_qpsk()).collect();
    let stx_alloc: Vec<StxAlloc> = (1..=p.u)
        .map(|u| match p.scheme {
            Scheme::Ps | Scheme::Psn => StxAlloc::PhaseShift {
                offset: (u - 1) * p.n_cp,
            },
            Scheme::Ci | Scheme::Cin => StxAlloc::Comb {
                offset: u - 1,
                period: p.u,
            },
        })
        .collect();
    let mut null_mask = vec![false; p.n];
    if p.scheme.is_nulling() {
        for &k in &k_p {
            null_mask[k] = true;
        }
    }
    Ok(PilotPlan {
        scheme: p.scheme,
        n: p.n,
        n_cp: p.n_cp,
        u_count: p.u,
        k_p,
        k_d,
        p_fc,
        stx_alloc,
        null_mask,
    })
}

/// Draw the common probing sequence: unit-modulus QPSK on every non-nulled
/// subcarrier, exactly zero on nulled ones.
pub fn generate_reference_sequence(
    n: usize,
    null_mask: &[bool],
    rng: &mut RngStream,
) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let v = rng.next_qpsk();
            if null_mask[k] {
                Complex64::new(0.0, 0.0)
            } else {
                v
            }
        })
        .collect()
}

/// Apply STX `u`'s cyclic phase shift `exp(-j 2π k n_u / N)` to the probing
/// sequence. Only defined for phase-shifted schemes.
pub fn apply_phase_shift(
    x_fr: &[Complex64],
    u: usize,
    p: &SystemParams,
) -> Result<Vec<Complex64>, PilotError> {
    if !p.scheme.is_phase_shifted() {
        return Err(PilotError::NotPhaseShifted(p.scheme));
    }
    if u == 0 || u > p.u {
        return Err(PilotError::StxOutOfRange { u, u_count: p.u });
    }
    let n = x_fr.len();
    let offset = (u - 1) * p.n_cp;
    Ok(phase_ramp(x_fr, offset, n))
}

fn phase_ramp(x: &[Complex64], offset: usize, n: usize) -> Vec<Complex64> {
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            let ang = -2.0 * PI * (k as f64) * (offset as f64) / n as f64;
            v * Complex64::new(ang.cos(), ang.sin())
        })
        .collect()
}

/// Frequency-domain signal radiated by STX `u` given the probing sequence.
pub fn build_stx_signal(
    plan: &PilotPlan,
    u: usize,
    x_fr: &[Complex64],
) -> Result<Vec<Complex64>, PilotError> {
    if u == 0 || u > plan.u_count {
        return Err(PilotError::StxOutOfRange {
            u,
            u_count: plan.u_count,
        });
    }
    match plan.stx_alloc[u - 1] {
        StxAlloc::PhaseShift { offset } => Ok(phase_ramp(x_fr, offset, plan.n)),
        StxAlloc::Comb { offset, period } => {
            let boost = (period as f64).sqrt();
            let mut out = vec![Complex64::new(0.0, 0.0); plan.n];
            for k in (offset..plan.n).step_by(period) {
                out[k] = x_fr[k] * boost;
            }
            Ok(out)
        }
    }
}

/// CTX payload: pilots on `K_p`, modulated data bits on `K_d`.
pub fn build_ctx_payload(
    plan: &PilotPlan,
    bits: &[u8],
    m: usize,
) -> Result<Vec<Complex64>, PilotError> {
    let table = modem::Constellation::new(m)?;
    let expected = plan.k_d.len() * table.bits_per_symbol();
    if bits.len() != expected {
        return Err(PilotError::PayloadLength {
            expected,
            got: bits.len(),
        });
    }
    let data = modem::modulate(bits, m)?;
    let mut out = vec![Complex64::new(0.0, 0.0); plan.n];
    for (&k, &p) in plan.k_p.iter().zip(&plan.p_fc) {
        out[k] = p;
    }
    for (&k, &d) in plan.k_d.iter().zip(&data) {
        out[k] = d;
    }
    Ok(out)
}
