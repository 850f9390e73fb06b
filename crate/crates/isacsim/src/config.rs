//! Experiment configuration, validation, and deterministic seeding.
//!
//! [`SystemParams`] carries the whole experiment description. It is validated
//! once and then shared immutably; every stochastic draw goes through an
//! [`RngStream`] derived from `(seed, trial, purpose)` so that trials can run
//! in any order, or concurrently, with bit-identical results.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Pilot architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Conventional interleaved combs.
    Ci,
    /// Interleaved combs with spectral nulling at communication pilots.
    Cin,
    /// Full-band phase-shifted probing.
    Ps,
    /// Phase-shifted probing with spectral nulling at communication pilots.
    Psn,
}

impl Scheme {
    /// Nulling variants zero their probing sequence on the CTX pilot comb.
    pub fn is_nulling(self) -> bool {
        matches!(self, Scheme::Cin | Scheme::Psn)
    }

    /// Phase-shifted variants separate STXs in the delay domain.
    pub fn is_phase_shifted(self) -> bool {
        matches!(self, Scheme::Ps | Scheme::Psn)
    }

    /// Receiver used for this scheme throughout the experiments: joint for
    /// the non-nulling layouts, sequential for the nulling ones.
    pub fn designated_receiver(self) -> ReceiverKind {
        if self.is_nulling() {
            ReceiverKind::Sequential
        } else {
            ReceiverKind::Joint
        }
    }

    pub const ALL: [Scheme; 4] = [Scheme::Ci, Scheme::Cin, Scheme::Ps, Scheme::Psn];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Ci => "CI",
            Scheme::Cin => "CIN",
            Scheme::Ps => "PS",
            Scheme::Psn => "PSN",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_uppercase().as_str() {
            "CI" => Ok(Scheme::Ci),
            "CIN" => Ok(Scheme::Cin),
            "PS" => Ok(Scheme::Ps),
            "PSN" => Ok(Scheme::Psn),
            _ => Err(ConfigError::BadValue {
                key: "scheme".into(),
                value: s.into(),
            }),
        }
    }
}

/// Receiver architecture for a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverKind {
    /// Iterative cancellation refreshing both channel families every pass.
    Joint,
    /// Two-phase cancellation with a frozen initial communication estimate.
    Sequential,
    /// Interference-free sensing-only lower bound.
    SensingOnlyLb,
    /// Interference-free communication-only lower bound (TDM split).
    CommOnlyLb,
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReceiverKind::Joint => "JOINT",
            ReceiverKind::Sequential => "SEQUENTIAL",
            ReceiverKind::SensingOnlyLb => "SENSING_ONLY_LB",
            ReceiverKind::CommOnlyLb => "COMM_ONLY_LB",
        };
        f.write_str(s)
    }
}

impl FromStr for ReceiverKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_uppercase().as_str() {
            "JOINT" => Ok(ReceiverKind::Joint),
            "SEQUENTIAL" => Ok(ReceiverKind::Sequential),
            "SENSING_ONLY_LB" => Ok(ReceiverKind::SensingOnlyLb),
            "COMM_ONLY_LB" => Ok(ReceiverKind::CommOnlyLb),
            _ => Err(ConfigError::BadValue {
                key: "receiver".into(),
                value: s.into(),
            }),
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Subcarrier count (power of two).
    pub n: usize,
    /// Cyclic-prefix length in samples.
    pub n_cp: usize,
    /// Resolvable tap count of every link.
    pub l: usize,
    /// Number of sensing transmitters.
    pub u: usize,
    /// CTX constellation order.
    pub m: usize,
    /// OFDM symbols per frame (quasi-static channel within a frame).
    pub m_sym: usize,
    /// Joint-receiver iteration budget.
    pub q: usize,
    /// Sequential-receiver phase-1 budget.
    pub q1: usize,
    /// Sequential-receiver phase-2 budget.
    pub q2: usize,
    /// SNR points in dB.
    pub snr_db_grid: Vec<f64>,
    pub scheme: Scheme,
    pub receiver: ReceiverKind,
    /// Monte Carlo realizations per SNR point.
    pub trials: usize,
    /// Master seed for all derived streams.
    pub seed: u64,
    /// CTX pilot period in subcarriers.
    pub pilot_spacing: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            n: 512,
            n_cp: 8,
            l: 8,
            u: 4,
            m: 4,
            m_sym: 1,
            q: 7,
            q1: 3,
            q2: 4,
            snr_db_grid: (0..=8).map(|i| 5.0 * i as f64).collect(),
            scheme: Scheme::Ps,
            receiver: ReceiverKind::Joint,
            trials: 200,
            seed: 1,
            pilot_spacing: 8,
        }
    }
}

/// Configuration and validation errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// A `SystemParams` invariant does not hold; the message names it.
    Invalid(String),
    /// Unknown configuration key.
    UnknownKey(String),
    /// A value failed to parse for the given key.
    BadValue { key: String, value: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Invalid(msg) => write!(f, "invalid parameters: {msg}"),
            ConfigError::UnknownKey(k) => write!(f, "unknown configuration key '{k}'"),
            ConfigError::BadValue { key, value } => {
                write!(f, "cannot parse value '{value}' for key '{key}'")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Check every invariant, returning the parameters unchanged on success.
///
/// The error names the first violated invariant.
pub fn validate_params(p: SystemParams) -> Result<SystemParams, ConfigError> {
    let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
    if !p.n.is_power_of_two() {
        return fail("N is not a power of two");
    }
    if p.l == 0 {
        return fail("L < 1");
    }
    if p.n_cp < p.l {
        return fail("N_cp < L");
    }
    if p.n_cp > p.n {
        return fail("N_cp > N");
    }
    if p.u == 0 {
        return fail("U < 1");
    }
    match p.scheme {
        Scheme::Ps | Scheme::Psn => {
            if p.u * p.n_cp > p.n {
                return fail("U·N_cp > N");
            }
        }
        Scheme::Ci | Scheme::Cin => {
            if !p.n.is_multiple_of(p.u) {
                return fail("N mod U ≠ 0");
            }
            if p.n / p.u < p.n_cp {
                return fail("N/U < N_cp");
            }
        }
    }
    if !matches!(p.m, 2 | 4 | 16) {
        return fail("M not in {2, 4, 16}");
    }
    if p.m_sym == 0 {
        return fail("M_sym < 1");
    }
    if p.pilot_spacing == 0 || !p.n.is_multiple_of(p.pilot_spacing) {
        return fail("pilot_spacing does not divide N");
    }
    if p.n / p.pilot_spacing < p.n_cp {
        return fail("N/pilot_spacing < N_cp");
    }
    if p.q == 0 {
        return fail("Q < 1");
    }
    if p.q1 == 0 {
        return fail("Q1 < 1");
    }
    if p.trials == 0 {
        return fail("trials < 1");
    }
    if p.snr_db_grid.is_empty() {
        return fail("snr_db_grid is empty");
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Deterministic stream derivation
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based deterministic generator keyed by `(seed, trial, purpose)`.
///
/// Streams with the same key are bit-identical; distinct keys are
/// statistically independent. The generator walks a per-stream gamma through
/// a SplitMix64 finalizer, so no state is shared between streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    state: u64,
    gamma: u64,
}

/// Derive the stream for `(seed, trial, purpose)`.
pub fn derive_stream(seed: u64, trial: u64, purpose: &str) -> RngStream {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix64(h ^ trial.wrapping_mul(0xff51_afd7_ed55_8ccd));
    for &b in purpose.as_bytes() {
        h = mix64(h ^ u64::from(b));
    }
    let gamma = mix64(h ^ 0xc2b2_ae3d_27d4_eb4f) | 1;
    RngStream { state: h, gamma }
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(self.gamma);
        mix64(self.state)
    }

    /// Uniform in the half-open interval (0, 1].
    pub fn next_f64(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Pair of independent standard normals (Box-Muller).
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let ang = 2.0 * std::f64::consts::PI * u2;
        (r * ang.cos(), r * ang.sin())
    }

    /// Circularly symmetric complex Gaussian with the given variance.
    pub fn next_complex_gaussian(&mut self, variance: f64) -> num_complex::Complex64 {
        let (a, b) = self.next_gaussian_pair();
        let s = (variance / 2.0).sqrt();
        num_complex::Complex64::new(a * s, b * s)
    }

    /// Unit-modulus QPSK symbol, uniform over the four phases.
    pub fn next_qpsk(&mut self) -> num_complex::Complex64 {
        let bits = self.next_u64();
        let re = if bits & 1 == 0 { 1.0 } else { -1.0 };
        let im = if bits & 2 == 0 { 1.0 } else { -1.0 };
        num_complex::Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// One uniform bit.
    pub fn next_bit(&mut self) -> u8 {
        (self.next_u64() & 1) as u8
    }
}

// ---------------------------------------------------------------------------
// Config file and overrides
// ---------------------------------------------------------------------------

/// Apply one `key=value` setting. Keys match the parameter names used in the
/// config file format exactly.
pub fn apply_setting(p: &mut SystemParams, key: &str, value: &str) -> Result<(), ConfigError> {
    fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
        })
    }
    match key {
        "N" => p.n = parse(key, value)?,
        "N_cp" => p.n_cp = parse(key, value)?,
        "L" => p.l = parse(key, value)?,
        "U" => p.u = parse(key, value)?,
        "M" => p.m = parse(key, value)?,
        "M_sym" => p.m_sym = parse(key, value)?,
        "Q" => p.q = parse(key, value)?,
        "Q1" => p.q1 = parse(key, value)?,
        "Q2" => p.q2 = parse(key, value)?,
        "snr_db_grid" => {
            let mut grid = Vec::new();
            for part in value.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                grid.push(parse::<f64>(key, part)?);
            }
            p.snr_db_grid = grid;
        }
        "scheme" => p.scheme = value.parse()?,
        "receiver" => p.receiver = value.parse()?,
        "trials" => p.trials = parse(key, value)?,
        "seed" => p.seed = parse(key, value)?,
        "pilot_spacing" => p.pilot_spacing = parse(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

/// Parse a flat `key=value` config file on top of the defaults.
///
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_config(text: &str) -> Result<SystemParams, ConfigError> {
    let mut p = SystemParams::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("expected key=value, got '{line}'")))?;
        apply_setting(&mut p, key.trim(), value.trim())?;
    }
    Ok(p)
}

/// Render the parameters in config-file form (stable key order).
pub fn render_config(p: &SystemParams) -> String {
    let mut map = BTreeMap::new();
    map.insert("N", p.n.to_string());
    map.insert("N_cp", p.n_cp.to_string());
    map.insert("L", p.l.to_string());
    map.insert("U", p.u.to_string());
    map.insert("M", p.m.to_string());
    map.insert("M_sym", p.m_sym.to_string());
    map.insert("Q", p.q.to_string());
    map.insert("Q1", p.q1.to_string());
    map.insert("Q2", p.q2.to_string());
    map.insert(
        "snr_db_grid",
        p.snr_db_grid
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    map.insert("scheme", p.scheme.to_string());
    map.insert("receiver", p.receiver.to_string());
    map.insert("trials", p.trials.to_string());
    map.insert("seed", p.seed.to_string());
    map.insert("pilot_spacing", p.pilot_spacing.to_string());
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    }
    out
}
