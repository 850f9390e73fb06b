//! Closed-form arithmetic cost model and the audit against instrumented
//! counters.
//!
//! All counts are exact integers built from the transform costs
//! `C_A(N), C_M(N)` and linear element-wise terms. STX-side cost is the
//! per-STX generation transform plus, for phase-shifted layouts, the `4N`
//! multiplication / `2N` addition phase-rotation overhead. Receiver-side
//! cost is the per-iteration budget documented in [`crate::receivers`]
//! multiplied out over the iteration schedule.
//!
//! The audit demands bit-exact equality between these closed forms and the
//! [`OpCounter`] totals of live runs; it binds the receivers' transform and
//! element-wise structure to the model.

use crate::config::{ReceiverKind, Scheme};
use crate::transforms::{transform_cost, OpCounter};
use std::fmt;

/// Iteration schedule of a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Joint receiver, `q` full passes.
    Joint { q: usize },
    /// Sequential receiver, `q1` frozen passes then `q2` refinement passes.
    Sequential { q1: usize, q2: usize },
}

impl Budget {
    pub fn receiver(&self) -> ReceiverKind {
        match self {
            Budget::Joint { .. } => ReceiverKind::Joint,
            Budget::Sequential { .. } => ReceiverKind::Sequential,
        }
    }
}

/// Processing node a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Stx,
    Rx,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Stx => f.write_str("STX"),
            Node::Rx => f.write_str("RX"),
        }
    }
}

/// Closed-form (and optionally instrumented) counts for one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityReport {
    pub scheme: Scheme,
    pub budget: Budget,
    pub node: Node,
    pub closed_form_adds: u64,
    pub closed_form_mults: u64,
    pub instrumented_adds: Option<u64>,
    pub instrumented_mults: Option<u64>,
    pub asymptotic: String,
}

/// Outcome of comparing a closed form against an instrumented counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditResult {
    pub pass: bool,
    /// instrumented - closed form
    pub delta_adds: i64,
    pub delta_mults: i64,
}

/// Number of transforms one sensing extraction uses.
fn sensing_transforms(scheme: Scheme, u: u64) -> u64 {
    if scheme.is_phase_shifted() {
        u + 1
    } else {
        2 * u
    }
}

/// Closed-form STX-side cost.
pub fn stx_closed_form(scheme: Scheme, n: usize, u: usize, budget: Budget) -> ComplexityReport {
    let (c_a, c_m) = transform_cost(n);
    let (n64, u64v) = (n as u64, u as u64);
    let (adds, mults) = if scheme.is_phase_shifted() {
        (u64v * (c_a + 2 * n64), u64v * (c_m + 4 * n64))
    } else {
        (u64v * c_a, u64v * c_m)
    };
    ComplexityReport {
        scheme,
        budget,
        node: Node::Stx,
        closed_form_adds: adds,
        closed_form_mults: mults,
        instrumented_adds: None,
        instrumented_mults: None,
        asymptotic: "O(U N log2 N)".to_string(),
    }
}

/// Closed-form receiver-side cost for any scheme/budget pairing.
pub fn rx_closed_form(scheme: Scheme, n: usize, u: usize, budget: Budget) -> ComplexityReport {
    let (c_a, c_m) = transform_cost(n);
    let (n64, u64v) = (n as u64, u as u64);
    let t_full = sensing_transforms(scheme, u64v) + 2;
    let (adds, mults, asymptotic) = match budget {
        Budget::Joint { q } => {
            let q = q as u64;
            let adds = q * (t_full * c_a + 4 * (u64v + 3) * n64);
            let mults = q * (t_full * c_m + 4 * (u64v + 5) * n64);
            let label = if scheme.is_phase_shifted() {
                "O(Q(U+3) N log2 N)"
            } else {
                "O(Q(2U+2) N log2 N)"
            };
            (adds, mults, label.to_string())
        }
        Budget::Sequential { q1, q2 } => {
            let (q1, q2) = (q1 as u64, q2 as u64);
            let t_frozen = sensing_transforms(scheme, u64v);
            let adds = q1 * (t_frozen * c_a + 4 * (u64v + 1) * n64)
                + q2 * (t_full * c_a + 4 * (u64v + 3) * n64);
            let mults = q1 * (t_frozen * c_m + 4 * (u64v + 2) * n64)
                + q2 * (t_full * c_m + 4 * (u64v + 5) * n64);
            let label = if scheme.is_phase_shifted() {
                "O([Q1(U+1) + Q2(U+3)] N log2 N)"
            } else {
                "O([Q1(2U) + Q2(2U+2)] N log2 N)"
            };
            (adds, mults, label.to_string())
        }
    };
    ComplexityReport {
        scheme,
        budget,
        node: Node::Rx,
        closed_form_adds: adds,
        closed_form_mults: mults,
        instrumented_adds: None,
        instrumented_mults: None,
        asymptotic,
    }
}

/// Closed forms for both nodes under one budget.
pub fn closed_form(
    scheme: Scheme,
    n: usize,
    u: usize,
    budget: Budget,
) -> (ComplexityReport, ComplexityReport) {
    (
        stx_closed_form(scheme, n, u, budget),
        rx_closed_form(scheme, n, u, budget),
    )
}

/// Compare a closed form against a live counter: pass iff exactly equal.
/// The report's instrumented fields are filled in.
pub fn audit(report: &mut ComplexityReport, counter: &OpCounter) -> AuditResult {
    report.instrumented_adds = Some(counter.real_adds());
    report.instrumented_mults = Some(counter.real_mults());
    let delta_adds = counter.real_adds() as i64 - report.closed_form_adds as i64;
    let delta_mults = counter.real_mults() as i64 - report.closed_form_mults as i64;
    AuditResult {
        pass: delta_adds == 0 && delta_mults == 0,
        delta_adds,
        delta_mults,
    }
}

/// Charge the STX-side model cost onto a counter: one generation transform
/// per STX, plus the phase rotation for phase-shifted layouts.
pub fn charge_stx_node(scheme: Scheme, n: usize, u: usize, counter: &mut OpCounter) {
    for _ in 0..u {
        counter.charge_transform(n);
        if scheme.is_phase_shifted() {
            counter.charge_complex_mults(n);
        }
    }
}

/// Group digits in threes for table printing.
pub fn group_digits(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::OpCounter;

    const N: usize = 512;
    const U: usize = 4;

    #[test]
    fn default_parameter_table() {
        // (scheme, budget, stx_adds, stx_mults, rx_adds, rx_mults)
        let joint = Budget::Joint { q: 7 };
        let seq = Budget::Sequential { q1: 3, q2: 4 };
        let cases = [
            (Scheme::Ps, joint, 53_264, 20_496, 702_660, 279_748),
            (Scheme::Ci, joint, 49_168, 12_304, 960_792, 344_344),
            (Scheme::Psn, seq, 53_264, 20_496, 616_620, 242_860),
            (Scheme::Cin, seq, 49_168, 12_304, 874_752, 307_456),
        ];
        for (scheme, budget, sa, sm, ra, rm) in cases {
            let (stx, rx) = closed_form(scheme, N, U, budget);
            assert_eq!(stx.closed_form_adds, sa, "{scheme} STX adds");
            assert_eq!(stx.closed_form_mults, sm, "{scheme} STX mults");
            assert_eq!(rx.closed_form_adds, ra, "{scheme} RX adds");
            assert_eq!(rx.closed_form_mults, rm, "{scheme} RX mults");
        }
    }

    #[test]
    fn documented_reductions_follow() {
        let joint = Budget::Joint { q: 7 };
        let seq = Budget::Sequential { q1: 3, q2: 4 };
        let ps = rx_closed_form(Scheme::Ps, N, U, joint).closed_form_mults as f64;
        let ci = rx_closed_form(Scheme::Ci, N, U, joint).closed_form_mults as f64;
        let psn = rx_closed_form(Scheme::Psn, N, U, seq).closed_form_mults as f64;
        let cin = rx_closed_form(Scheme::Cin, N, U, seq).closed_form_mults as f64;
        assert!(((1.0 - ps / ci) * 100.0 - 18.8).abs() < 0.1);
        assert!(((1.0 - psn / cin) * 100.0 - 21.0).abs() < 0.1);
    }

    #[test]
    fn phase_rotation_overhead_is_exactly_linear() {
        for budget in [Budget::Joint { q: 7 }, Budget::Sequential { q1: 3, q2: 4 }] {
            let ps = stx_closed_form(Scheme::Ps, N, U, budget);
            let ci = stx_closed_form(Scheme::Ci, N, U, budget);
            assert_eq!(
                ps.closed_form_adds - ci.closed_form_adds,
                (U * 2 * N) as u64
            );
            assert_eq!(
                ps.closed_form_mults - ci.closed_form_mults,
                (U * 4 * N) as u64
            );
        }
    }

    #[test]
    fn audit_detects_an_extra_transform() {
        let (_, mut rx) = closed_form(Scheme::Ps, N, U, Budget::Joint { q: 7 });
        let mut counter = OpCounter::new();
        // Reproduce the closed form, then inject one extra transform.
        for _ in 0..7 {
            for _ in 0..(U + 3) {
                counter.charge_transform(N);
            }
            counter.charge_complex_mults((U + 1) * N);
            counter.charge_complex_adds((U + 1) * N);
            counter.charge_complex_divs(4 * N);
        }
        let ok = audit(&mut rx, &counter);
        assert!(ok.pass, "deltas {ok:?}");
        counter.charge_transform(N);
        let bad = audit(&mut rx, &counter);
        assert!(!bad.pass);
        assert_eq!(bad.delta_adds, 12_292);
        assert_eq!(bad.delta_mults, 3_076);
    }

    #[test]
    fn stx_charging_matches_closed_form() {
        for scheme in Scheme::ALL {
            let budget = Budget::Joint { q: 7 };
            let mut report = stx_closed_form(scheme, N, U, budget);
            let mut counter = OpCounter::new();
            charge_stx_node(scheme, N, U, &mut counter);
            assert!(audit(&mut report, &counter).pass, "{scheme}");
        }
    }

    #[test]
    fn digit_grouping() {
        assert_eq!(group_digits(0), "0");
        assert_eq!(group_digits(999), "999");
        assert_eq!(group_digits(702_660), "702,660");
        assert_eq!(group_digits(1_234_567), "1,234,567");
    }
}
