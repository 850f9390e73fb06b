//! Command-line front end.
//!
//! ```text
//! isacsim sweep  [--preset NAME] [--config FILE] [--out FILE] [--key=value ...]
//! isacsim cell   [--snr_db X] [--audit] [--config FILE] [--key=value ...]
//! isacsim complexity --arch PS [--N 512 --U 4 --Q 7 | --Q1 3 --Q2 4]
//! isacsim plan-dump [--key=value ...]
//! isacsim convergence [--snr_db X] [--threshold 1e-4] [--metric sensing|comm|ber]
//! ```
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use crate::complexity::{audit, closed_form, group_digits, Budget};
use crate::config::{
    apply_setting, parse_config, validate_params, ReceiverKind, Scheme, SystemParams,
};
use crate::harness::{
    designated_budget, plan_dump_csv, preset_cells, run_sweep, run_trial, to_csv,
};
use crate::metrics::{convergence_index, CellAccumulator};
use crate::receivers::NullFillMode;
use std::str::FromStr;

const USAGE: &str = "usage: isacsim <sweep|cell|complexity|plan-dump|convergence> [--key=value ...]
  common keys: any config key (N, N_cp, L, U, M, M_sym, Q, Q1, Q2, snr_db_grid,
               scheme, receiver, trials, seed, pilot_spacing), plus
               --config FILE, --fill subspace|linear|zero
  sweep:       --preset fig3|fig4|fig6|fig7|fig8, --out FILE
  cell:        --snr_db X, --audit
  complexity:  --arch PS|CI|PSN|CIN (budgets from Q or Q1/Q2)
  convergence: --snr_db X, --threshold T, --metric sensing|comm|ber";

/// Flags that are not `SystemParams` keys.
#[derive(Debug, Default)]
struct ExtraFlags {
    preset: Option<String>,
    out: Option<String>,
    snr_db: Option<f64>,
    arch: Option<Scheme>,
    fill: NullFillMode,
    audit: bool,
    threshold: f64,
    metric: String,
}

fn split_flag(arg: &str) -> Option<(&str, Option<&str>)> {
    let stripped = arg.strip_prefix("--")?;
    match stripped.split_once('=') {
        Some((k, v)) => Some((k, Some(v))),
        None => Some((stripped, None)),
    }
}

struct ParsedArgs {
    params: SystemParams,
    extra: ExtraFlags,
}

fn parse_args(args: &[String]) -> Result<ParsedArgs, String> {
    let mut params = SystemParams::default();
    let mut extra = ExtraFlags {
        threshold: 1e-4,
        metric: "sensing".to_string(),
        ..ExtraFlags::default()
    };
    let mut pending_config: Option<String> = None;
    let mut i = 0;
    // First pass picks up --config so explicit flags override the file.
    while i < args.len() {
        let (key, value) = split_flag(&args[i])
            .ok_or_else(|| format!("unexpected positional argument '{}'", args[i]))?;
        let mut take = |inline: Option<&str>| -> Result<String, String> {
            if let Some(v) = inline {
                return Ok(v.to_string());
            }
            i += 1;
            args.get(i)
                .map(|s| s.to_string())
                .ok_or_else(|| format!("flag --{key} needs a value"))
        };
        if key == "config" {
            pending_config = Some(take(value)?);
        } else if value.is_none() && !matches!(key, "audit") {
            // Consume the next token so the second pass sees pairs.
            take(value)?;
        }
        i += 1;
    }
    if let Some(path) = pending_config {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read config file '{path}': {e}"))?;
        params = parse_config(&text).map_err(|e| e.to_string())?;
    }
    let mut i = 0;
    while i < args.len() {
        let (key, value) = split_flag(&args[i]).expect("validated above");
        let mut take = |inline: Option<&str>| -> String {
            if let Some(v) = inline {
                return v.to_string();
            }
            i += 1;
            args[i].clone()
        };
        match key {
            "config" => {
                let _ = take(value);
            }
            "preset" => extra.preset = Some(take(value)),
            "out" => extra.out = Some(take(value)),
            "snr_db" => {
                let v = take(value);
                extra.snr_db = Some(v.parse().map_err(|_| format!("bad --snr_db value '{v}'"))?);
            }
            "arch" => {
                let v = take(value);
                extra.arch = Some(Scheme::from_str(&v).map_err(|e| e.to_string())?);
            }
            "fill" => {
                let v = take(value);
                extra.fill = v.parse()?;
            }
            "audit" => extra.audit = true,
            "threshold" => {
                let v = take(value);
                extra.threshold = v
                    .parse()
                    .map_err(|_| format!("bad --threshold value '{v}'"))?;
            }
            "metric" => extra.metric = take(value),
            _ => {
                let v = take(value);
                apply_setting(&mut params, key, &v).map_err(|e| e.to_string())?;
            }
        }
        i += 1;
    }
    Ok(ParsedArgs { params, extra })
}

fn write_out(path: &Option<String>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write '{p}': {e}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_sweep(parsed: ParsedArgs) -> Result<(), (i32, String)> {
    let params = validate_params(parsed.params).map_err(|e| (1, e.to_string()))?;
    let cells = match &parsed.extra.preset {
        Some(name) => preset_cells(name, &params).map_err(|e| (1, e))?,
        None => vec![params.clone()],
    };
    for cell in &cells {
        validate_params(cell.clone()).map_err(|e| {
            (
                2,
                format!(
                    "preset cell scheme={} U={} invalid: {e}",
                    cell.scheme, cell.u
                ),
            )
        })?;
    }
    let result = run_sweep(&cells, parsed.extra.fill);
    for (cell, err) in &result.errors {
        eprintln!("cell failed ({cell}): {err}");
    }
    let csv = to_csv(&result.records);
    write_out(&parsed.extra.out, &csv).map_err(|e| (2, e))?;
    eprintln!(
        "{} records, seed {}, {:.2}s",
        result.records.len(),
        result.seed,
        result.wall_seconds
    );
    if result.errors.is_empty() {
        Ok(())
    } else {
        Err((2, format!("{} cell(s) failed", result.errors.len())))
    }
}

fn cmd_cell(parsed: ParsedArgs) -> Result<(), (i32, String)> {
    let params = validate_params(parsed.params).map_err(|e| (1, e.to_string()))?;
    let snr = parsed.extra.snr_db.unwrap_or_else(|| params.snr_db_grid[0]);
    let mut acc = CellAccumulator::default();
    let mut audit_pass = true;
    let budget = designated_budget(&params);
    for trial in 0..params.trials as u64 {
        let r =
            run_trial(&params, snr, trial, parsed.extra.fill).map_err(|e| (2, e.to_string()))?;
        acc.merge(&r.acc);
        if parsed.extra.audit
            && matches!(
                params.receiver,
                ReceiverKind::Joint | ReceiverKind::Sequential
            )
        {
            let (mut stx, mut rx) = closed_form(params.scheme, params.n, params.u, budget);
            // Closed forms are per symbol; a trial runs M_sym of them.
            let frame = params.m_sym as u64;
            stx.closed_form_adds *= frame;
            stx.closed_form_mults *= frame;
            rx.closed_form_adds *= frame;
            rx.closed_form_mults *= frame;
            let stx_ok = audit(&mut stx, &r.stx_counter);
            let rx_ok = audit(&mut rx, &r.rx_counter);
            if !(stx_ok.pass && rx_ok.pass) {
                audit_pass = false;
                eprintln!(
                    "audit mismatch at trial {trial}: STX delta ({}, {}), RX delta ({}, {})",
                    stx_ok.delta_adds, stx_ok.delta_mults, rx_ok.delta_adds, rx_ok.delta_mults
                );
            }
        }
    }
    let mut cellp = params.clone();
    cellp.snr_db_grid = vec![snr];
    let record = {
        use crate::metrics::MetricsRecord;
        MetricsRecord {
            snr_db: snr,
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
    };
    print!("{}", to_csv(std::slice::from_ref(&record)));
    if parsed.extra.audit {
        if audit_pass {
            println!("audit: PASS (instrumented counts equal closed form)");
        } else {
            return Err((2, "audit: FAIL".to_string()));
        }
    }
    Ok(())
}

fn cmd_complexity(parsed: ParsedArgs) -> Result<(), (i32, String)> {
    let params = parsed.params;
    let schemes: Vec<Scheme> = match parsed.extra.arch {
        Some(s) => vec![s],
        None => Scheme::ALL.to_vec(),
    };
    println!(
        "N={}, U={}, Q={}, Q1={}, Q2={}",
        params.n, params.u, params.q, params.q1, params.q2
    );
    println!(
        "{:<6} {:<12} {:>16} {:>16} {:>16} {:>16}",
        "Arch", "Strategy", "STX adds", "STX mults", "RX adds", "RX mults"
    );
    for scheme in schemes {
        let budget = match scheme.designated_receiver() {
            ReceiverKind::Sequential => Budget::Sequential {
                q1: params.q1,
                q2: params.q2,
            },
            _ => Budget::Joint { q: params.q },
        };
        let (stx, rx) = closed_form(scheme, params.n, params.u, budget);
        let strategy = match budget {
            Budget::Joint { q } => format!("Joint({q})"),
            Budget::Sequential { q1, q2 } => format!("Seq({q1}+{q2})"),
        };
        println!(
            "{:<6} {:<12} {:>16} {:>16} {:>16} {:>16}",
            scheme.to_string(),
            strategy,
            group_digits(stx.closed_form_adds),
            group_digits(stx.closed_form_mults),
            group_digits(rx.closed_form_adds),
            group_digits(rx.closed_form_mults)
        );
    }
    Ok(())
}

fn cmd_plan_dump(parsed: ParsedArgs) -> Result<(), (i32, String)> {
    let params = validate_params(parsed.params).map_err(|e| (1, e.to_string()))?;
    let csv = plan_dump_csv(&params).map_err(|e| (2, e.to_string()))?;
    write_out(&parsed.extra.out, &csv).map_err(|e| (2, e))?;
    Ok(())
}

fn cmd_convergence(parsed: ParsedArgs) -> Result<(), (i32, String)> {
    let params = validate_params(parsed.params).map_err(|e| (1, e.to_string()))?;
    let snr = parsed
        .extra
        .snr_db
        .unwrap_or_else(|| *params.snr_db_grid.last().unwrap());
    let mut acc = CellAccumulator::default();
    for trial in 0..params.trials as u64 {
        let r =
            run_trial(&params, snr, trial, parsed.extra.fill).map_err(|e| (2, e.to_string()))?;
        acc.merge(&r.acc);
    }
    let trace = match parsed.extra.metric.as_str() {
        "sensing" => acc.sensing_trace(),
        "comm" => acc.comm_trace(),
        "ber" => acc.ber_trace(),
        other => return Err((1, format!("unknown metric '{other}'"))),
    };
    println!("iteration,{}", parsed.extra.metric);
    for (q, v) in trace.iter().enumerate() {
        println!("{},{v:e}", q + 1);
    }
    let idx = convergence_index(&trace, parsed.extra.threshold);
    println!(
        "convergence index (threshold {:e}): {}",
        parsed.extra.threshold, idx
    );
    Ok(())
}

/// Entry point. Returns the process exit code.
pub fn cli_entry(argv: &[String]) -> i32 {
    let Some(cmd) = argv.first() else {
        eprintln!("{USAGE}");
        return 1;
    };
    let rest = &argv[1..];
    let parsed = match parse_args(rest) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}\n{USAGE}");
            return 1;
        }
    };
    let result = match cmd.as_str() {
        "sweep" => cmd_sweep(parsed),
        "cell" => cmd_cell(parsed),
        "complexity" => cmd_complexity(parsed),
        "plan-dump" => cmd_plan_dump(parsed),
        "convergence" => cmd_convergence(parsed),
        other => {
            eprintln!("error: unknown subcommand '{other}'\n{USAGE}");
            return 1;
        }
    };
    match result {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
