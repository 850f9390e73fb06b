//! Monte Carlo driver: per-trial pipeline, cell aggregation, sweeps, and CSV.
//!
//! Every trial derives its own streams from `(seed, trial, purpose)`, so a
//! cell's result is a fold over independent trial contributions and is
//! reproducible byte-for-byte regardless of execution order.

use crate::channel::{draw_realization, superimpose, ChannelError};
use crate::complexity::{self, Budget};
use crate::config::{derive_stream, ReceiverKind, Scheme, SystemParams};
use crate::metrics::{CellAccumulator, MetricsRecord};
use crate::modem::Constellation;
use crate::pilots::{build_ctx_payload, build_pilot_plan, build_stx_signal, PilotError};
use crate::receivers::{run_receiver, NullFillMode, ReceiverError, ReceiverOutput, Truth};
use crate::transforms::OpCounter;
use num_complex::Complex64;
use std::fmt;
use std::time::Instant;

#[derive(Debug)]
pub enum HarnessError {
    Receiver(ReceiverError),
    Pilot(PilotError),
    Channel(ChannelError),
    Modem(crate::modem::ModemError),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Receiver(e) => write!(f, "{e}"),
            HarnessError::Pilot(e) => write!(f, "{e}"),
            HarnessError::Channel(e) => write!(f, "{e}"),
            HarnessError::Modem(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ReceiverError> for HarnessError {
    fn from(e: ReceiverError) -> Self {
        HarnessError::Receiver(e)
    }
}
impl From<PilotError> for HarnessError {
    fn from(e: PilotError) -> Self {
        HarnessError::Pilot(e)
    }
}
impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        HarnessError::Channel(e)
    }
}
impl From<crate::modem::ModemError> for HarnessError {
    fn from(e: crate::modem::ModemError) -> Self {
        HarnessError::Modem(e)
    }
}

/// One trial's outputs: receiver result, ground truth contributions already
/// folded into an accumulator fragment, and both node counters.
#[derive(Debug)]
pub struct TrialResult {
    pub acc: CellAccumulator,
    pub stx_counter: OpCounter,
    pub rx_counter: OpCounter,
    pub output: ReceiverOutput,
}

/// Run one trial of `params` at `snr_db`.
pub fn run_trial(
    params: &SystemParams,
    snr_db: f64,
    trial: u64,
    fill: NullFillMode,
) -> Result<TrialResult, HarnessError> {
    let mut pilot_rng = derive_stream(params.seed, trial, "pilot");
    let plan = build_pilot_plan(params, &mut pilot_rng)?;
    let mut probe_rng = derive_stream(params.seed, trial, "probe");
    let x_fr =
        crate::pilots::generate_reference_sequence(params.n, &plan.null_mask, &mut probe_rng);
    let table = Constellation::new(params.m)?;
    // Quasi-static frame: one channel draw, fresh bits and noise per symbol.
    let mut ch_rng = derive_stream(params.seed, trial, "channel");
    let ch = draw_realization(params, snr_db, &mut ch_rng);
    let x_fsu: Vec<Vec<Complex64>> = (1..=params.u)
        .map(|u| build_stx_signal(&plan, u, &x_fr))
        .collect::<Result<_, _>>()?;

    let mut stx_counter = OpCounter::new();
    let stx_in_air = match params.receiver {
        ReceiverKind::CommOnlyLb => 0,
        _ => params.u,
    };

    let mut acc = CellAccumulator {
        trials: 1,
        ..Default::default()
    };
    let senses = params.receiver != ReceiverKind::CommOnlyLb;
    let detects = params.receiver != ReceiverKind::SensingOnlyLb;
    let mut rx_counter = OpCounter::new();
    let mut last_output = None;

    for sym in 0..params.m_sym as u64 {
        complexity::charge_stx_node(params.scheme, params.n, stx_in_air, &mut stx_counter);
        let mut bits_rng = derive_stream(params.seed, trial, &format!("bits/{sym}"));
        let bits: Vec<u8> = (0..plan.k_d.len() * table.bits_per_symbol())
            .map(|_| bits_rng.next_bit())
            .collect();
        let x_fc = build_ctx_payload(&plan, &bits, params.m)?;
        let mut noise_rng = derive_stream(params.seed, trial, &format!("noise/{sym}"));

        // Lower bounds see only their own signal class.
        let empty: Vec<Complex64> = Vec::new();
        let y = match params.receiver {
            ReceiverKind::SensingOnlyLb => superimpose(&empty, &x_fsu, &ch, &mut noise_rng)?,
            ReceiverKind::CommOnlyLb => superimpose(&x_fc, &[], &ch, &mut noise_rng)?,
            _ => superimpose(&x_fc, &x_fsu, &ch, &mut noise_rng)?,
        };

        let truth = Truth {
            h_fc: &ch.ctx_freq,
            h_fs: &ch.stx_freq,
            bits: &bits,
        };
        let output = run_receiver(&y, &plan, params, &x_fr, fill, Some(&truth))?;

        if senses {
            for (u, (h_true, h_hat)) in ch.stx_freq.iter().zip(&output.h_hat_fs).enumerate() {
                let num: f64 = h_true
                    .iter()
                    .zip(h_hat)
                    .map(|(t, e)| (t - e).norm_sqr())
                    .sum();
                let den: f64 = h_true.iter().map(|t| t.norm_sqr()).sum();
                acc.add_sensing(u, num, den);
            }
        }
        if detects {
            let num: f64 = ch
                .ctx_freq
                .iter()
                .zip(&output.h_hat_fc)
                .map(|(t, e)| (t - e).norm_sqr())
                .sum();
            let den: f64 = ch.ctx_freq.iter().map(|t| t.norm_sqr()).sum();
            acc.comm_num += num;
            acc.comm_den += den;
            acc.bit_errors += bits
                .iter()
                .zip(&output.bits_hat)
                .filter(|(a, b)| a != b)
                .count() as u64;
            acc.bits += bits.len() as u64;
            acc.symbols += plan.k_d.len() as u64;
            acc.symbol_errors += plan
                .k_d
                .iter()
                .filter(|&&k| (output.x_hat_dd[k] - x_fc[k]).norm() > 1e-9)
                .count() as u64;
        }
        // Per-iteration traces.
        for (q, rec) in output.trace.iter().enumerate() {
            if acc.per_iteration.len() <= q {
                acc.per_iteration.resize(q + 1, Default::default());
            }
            let slot = &mut acc.per_iteration[q];
            if let Some(nmse) = rec.sensing_nmse {
                // Re-derive pooled energies so the ensemble trace uses the
                // expectation-ratio form; the per-trial record only holds
                // the ratio, so fold it against the trial's true energy.
                let den: f64 = ch
                    .stx_freq
                    .iter()
                    .map(|h| h.iter().map(|t| t.norm_sqr()).sum::<f64>())
                    .sum();
                slot.sensing_num += nmse * den / params.u as f64;
                slot.sensing_den += den / params.u as f64;
            }
            if let Some(nmse) = rec.comm_nmse {
                let den: f64 = ch.ctx_freq.iter().map(|t| t.norm_sqr()).sum();
                slot.comm_num += nmse * den;
                slot.comm_den += den;
            }
            if let Some(b) = rec.ber {
                slot.bit_errors += (b * bits.len() as f64).round() as u64;
                slot.bits += bits.len() as u64;
            }
        }
        rx_counter.merge(&output.counter);
        last_output = Some(output);
    }

    Ok(TrialResult {
        acc,
        stx_counter,
        rx_counter,
        output: last_output.expect("M_sym >= 1"),
    })
}

/// Run all trials of one (configuration, SNR) cell and aggregate.
pub fn run_cell(
    params: &SystemParams,
    snr_db: f64,
    fill: NullFillMode,
) -> Result<MetricsRecord, HarnessError> {
    let mut acc = CellAccumulator::default();
    for trial in 0..params.trials as u64 {
        let r = run_trial(params, snr_db, trial, fill)?;
        acc.merge(&r.acc);
    }
    Ok(finish_record(params, snr_db, &acc))
}

fn finish_record(params: &SystemParams, snr_db: f64, acc: &CellAccumulator) -> MetricsRecord {
    MetricsRecord {
        snr_db,
        scheme: params.scheme,
        receiver: params.receiver,
        m: params.m,
        u: params.u,
        sensing_nmse: acc.sensing_nmse(),
        comm_nmse: acc.comm_nmse(),
        ber: acc.ber(),
        se: crate::metrics::spectral_efficiency(
            acc.symbol_errors,
            acc.symbols,
            params.m,
            params.receiver,
        ),
        trials: acc.trials,
        sensing_trace: acc.sensing_trace(),
        comm_trace: acc.comm_trace(),
        ber_trace: acc.ber_trace(),
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Sweep results plus run metadata.
#[derive(Debug)]
pub struct ExperimentResult {
    pub records: Vec<MetricsRecord>,
    pub errors: Vec<(String, String)>,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// Expand a preset name into its cell list.
///
/// `fig3` compares both receivers on every scheme; `fig4`/`fig7` sweep the
/// modulation order; `fig6`/`fig8` sweep the STX count. All presets include
/// the sensing-only and communication-only bounds.
pub fn preset_cells(name: &str, base: &SystemParams) -> Result<Vec<SystemParams>, String> {
    let mut cells = Vec::new();
    let mut push = |scheme: Scheme, receiver: ReceiverKind, m: usize, u: usize| {
        cells.push(SystemParams {
            scheme,
            receiver,
            m,
            u,
            ..base.clone()
        });
    };
    match name {
        "fig3" => {
            for scheme in Scheme::ALL {
                push(scheme, ReceiverKind::Joint, base.m, base.u);
                push(scheme, ReceiverKind::Sequential, base.m, base.u);
            }
            push(Scheme::Ps, ReceiverKind::SensingOnlyLb, base.m, base.u);
            push(Scheme::Ci, ReceiverKind::SensingOnlyLb, base.m, base.u);
        }
        "fig4" | "fig7" => {
            for m in [2, 4, 16] {
                for scheme in Scheme::ALL {
                    push(scheme, scheme.designated_receiver(), m, base.u);
                }
                push(Scheme::Ps, ReceiverKind::CommOnlyLb, m, base.u);
            }
            push(Scheme::Ps, ReceiverKind::SensingOnlyLb, base.m, base.u);
            push(Scheme::Ci, ReceiverKind::SensingOnlyLb, base.m, base.u);
        }
        "fig6" | "fig8" => {
            for u in [2, 4, 16] {
                for scheme in Scheme::ALL {
                    push(scheme, scheme.designated_receiver(), base.m, u);
                }
                push(Scheme::Ps, ReceiverKind::SensingOnlyLb, base.m, u);
                push(Scheme::Ci, ReceiverKind::SensingOnlyLb, base.m, u);
            }
            push(Scheme::Ps, ReceiverKind::CommOnlyLb, base.m, base.u);
        }
        other => return Err(format!("unknown preset '{other}'")),
    }
    Ok(cells)
}

/// Run every cell across its SNR grid. Cells that fail are recorded and the
/// sweep continues.
pub fn run_sweep(cells: &[SystemParams], fill: NullFillMode) -> ExperimentResult {
    let started = Instant::now();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let seed = cells.first().map_or(0, |c| c.seed);
    for params in cells {
        for &snr in &params.snr_db_grid {
            match run_cell(params, snr, fill) {
                Ok(rec) => records.push(rec),
                Err(e) => errors.push((
                    format!(
                        "scheme={} receiver={} M={} U={} snr={snr}",
                        params.scheme, params.receiver, params.m, params.u
                    ),
                    e.to_string(),
                )),
            }
        }
    }
    ExperimentResult {
        records,
        errors,
        seed,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Deterministic float formatting for CSV.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.10e}")
    }
}

/// Render records as CSV with the fixed schema
/// `snr_db,scheme,receiver,M,U,sensing_nmse,comm_nmse,ber,se,trials`.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("snr_db,scheme,receiver,M,U,sensing_nmse,comm_nmse,ber,se,trials\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.snr_db,
            r.scheme,
            r.receiver,
            r.m,
            r.u,
            fmt_f64(r.sensing_nmse),
            fmt_f64(r.comm_nmse),
            fmt_f64(r.ber),
            fmt_f64(r.se),
            r.trials
        ));
    }
    out
}

/// Plan-dump CSV: `subcarrier,owner,type` rows describing the allocation.
pub fn plan_dump_csv(params: &SystemParams) -> Result<String, HarnessError> {
    let mut rng = derive_stream(params.seed, 0, "pilot");
    let plan = build_pilot_plan(params, &mut rng)?;
    let mut out = String::from("subcarrier,owner,type\n");
    for k in 0..plan.n {
        if plan.k_p.binary_search(&k).is_ok() {
            out.push_str(&format!("{k},ctx,pilot\n"));
        } else {
            out.push_str(&format!("{k},ctx,data\n"));
        }
        for u in 1..=plan.u_count {
            let owns = match plan.stx_alloc[u - 1] {
                crate::pilots::StxAlloc::PhaseShift { .. } => true,
                crate::pilots::StxAlloc::Comb { offset, period } => k % period == offset,
            };
            if owns {
                let kind = if plan.null_mask[k] { "null" } else { "probe" };
                out.push_str(&format!("{k},stx{u},{kind}\n"));
            }
        }
    }
    Ok(out)
}

/// The canonical audit pairing for a scheme under the given iteration
/// budgets taken from `params`.
pub fn designated_budget(params: &SystemParams) -> Budget {
    match params.receiver {
        ReceiverKind::Sequential => Budget::Sequential {
            q1: params.q1,
            q2: params.q2,
        },
        _ => Budget::Joint { q: params.q },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_params;

    fn quick_params(scheme: Scheme, receiver: ReceiverKind, trials: usize) -> SystemParams {
        validate_params(SystemParams {
            scheme,
            receiver,
            trials,
            snr_db_grid: vec![10.0, 20.0],
            ..SystemParams::default()
        })
        .unwrap()
    }

    #[test]
    fn trial_is_reproducible() {
        let p = quick_params(Scheme::Psn, ReceiverKind::Sequential, 1);
        let a = run_trial(&p, 20.0, 3, NullFillMode::DelaySubspace).unwrap();
        let b = run_trial(&p, 20.0, 3, NullFillMode::DelaySubspace).unwrap();
        assert_eq!(a.output.h_hat_fc, b.output.h_hat_fc);
        assert_eq!(a.rx_counter, b.rx_counter);
        assert_eq!(a.acc.bit_errors, b.acc.bit_errors);
    }

    #[test]
    fn merge_order_does_not_change_the_record() {
        let p = quick_params(Scheme::Ps, ReceiverKind::Joint, 8);
        let trials: Vec<TrialResult> = (0..8)
            .map(|t| run_trial(&p, 15.0, t, NullFillMode::DelaySubspace).unwrap())
            .collect();
        let mut forward = CellAccumulator::default();
        for t in &trials {
            forward.merge(&t.acc);
        }
        let mut backward = CellAccumulator::default();
        for t in trials.iter().rev() {
            backward.merge(&t.acc);
        }
        let a = finish_record(&p, 15.0, &forward);
        let b = finish_record(&p, 15.0, &backward);
        // Counts merge exactly; energy sums agree to rounding order.
        assert_eq!(a.ber, b.ber);
        assert_eq!(a.se, b.se);
        assert!((a.sensing_nmse - b.sensing_nmse).abs() < 1e-14 * a.sensing_nmse.abs());
        assert!((a.comm_nmse - b.comm_nmse).abs() < 1e-14 * a.comm_nmse.abs());
    }

    #[test]
    fn sweep_csv_is_byte_identical() {
        let p = quick_params(Scheme::Cin, ReceiverKind::Sequential, 3);
        let cells = vec![p.clone()];
        let a = to_csv(&run_sweep(&cells, NullFillMode::DelaySubspace).records);
        let b = to_csv(&run_sweep(&cells, NullFillMode::DelaySubspace).records);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + p.snr_db_grid.len());
        assert!(a.starts_with("snr_db,scheme,receiver,M,U,sensing_nmse,comm_nmse,ber,se,trials\n"));
    }

    #[test]
    fn presets_expand_to_expected_cells() {
        let base = SystemParams::default();
        let fig4 = preset_cells("fig4", &base).unwrap();
        // 3 modulation orders x (4 schemes + CO LB) + 2 sensing LBs.
        assert_eq!(fig4.len(), 3 * 5 + 2);
        let fig6 = preset_cells("fig6", &base).unwrap();
        // 3 densities x (4 schemes + 2 sensing LBs) + CO LB.
        assert_eq!(fig6.len(), 3 * 6 + 1);
        let fig3 = preset_cells("fig3", &base).unwrap();
        assert_eq!(fig3.len(), 4 * 2 + 2);
        assert!(preset_cells("fig99", &base).is_err());
        // Row count = |grid| * |cells|.
        let small = SystemParams {
            trials: 2,
            snr_db_grid: vec![0.0, 30.0],
            ..base
        };
        let cells = preset_cells("fig3", &small).unwrap();
        let result = run_sweep(&cells, NullFillMode::DelaySubspace);
        assert!(result.errors.is_empty(), "{:?}", result.errors);
        assert_eq!(result.records.len(), cells.len() * 2);
    }

    #[test]
    fn plan_dump_shape() {
        let p = quick_params(Scheme::Cin, ReceiverKind::Sequential, 1);
        let csv = plan_dump_csv(&p).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        // Header + one ctx row per subcarrier + one row per comb membership.
        assert_eq!(lines.len(), 1 + 512 + 512);
        assert!(lines[1].starts_with("0,ctx,pilot"));
        assert!(csv.contains("4,stx1,probe"));
        assert!(csv.contains("0,stx1,null"));
    }
}
