//! Bit/symbol mapping and hard slicing for M in {2, 4, 16}.
//!
//! Constellations are Gray-labeled and normalized to unit average energy:
//! BPSK is `{+1, -1}`, QPSK is `(±1 ± j)/√2` with the first bit steering the
//! real sign, and 16-QAM uses per-axis levels `{±1, ±3}/√10` with the
//! per-axis Gray sequence `{00, 01, 11, 10}` over increasing level. The first
//! half of a label addresses the real axis. No point is ever zero, so
//! decision-directed division by sliced symbols is always defined.

use num_complex::Complex64;
use std::fmt;

/// Modem-layer errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModemError {
    /// Constellation order outside {2, 4, 16}.
    UnsupportedOrder(usize),
    /// Bit-stream length not divisible by log2(M).
    BitLength { len: usize, bits_per_symbol: usize },
}

impl fmt::Display for ModemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModemError::UnsupportedOrder(m) => write!(f, "unsupported constellation order {m}"),
            ModemError::BitLength {
                len,
                bits_per_symbol,
            } => write!(
                f,
                "bit stream length {len} is not divisible by {bits_per_symbol}"
            ),
        }
    }
}

impl std::error::Error for ModemError {}

/// Gray-labeled constellation with unit average energy.
#[derive(Debug, Clone)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

/// Gray sequence position -> axis level for one axis of side `side`.
fn axis_levels(side: usize) -> Vec<f64> {
    (0..side)
        .map(|i| 2.0 * i as f64 - (side as f64 - 1.0))
        .collect()
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

impl Constellation {
    /// Build the constellation for order `m`.
    pub fn new(m: usize) -> Result<Self, ModemError> {
        match m {
            2 => Ok(Constellation {
                order: 2,
                bits_per_symbol: 1,
                points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            }),
            4 | 16 => {
                let bits_per_symbol = if m == 4 { 2 } else { 4 };
                let half = bits_per_symbol / 2;
                let side = 1usize << half;
                let levels = axis_levels(side);
                // Gray sequence walks the axis from the positive end, so a
                // leading 0 bit lands on a positive level as in BPSK.
                let mut axis_label_to_level = vec![0.0; side];
                for i in 0..side {
                    axis_label_to_level[gray(i)] = levels[side - 1 - i];
                }
                let norm = {
                    let mean_axis: f64 = levels.iter().map(|v| v * v).sum::<f64>() / side as f64;
                    (2.0 * mean_axis).sqrt()
                };
                let mut points = vec![Complex64::new(0.0, 0.0); m];
                for (label, point) in points.iter_mut().enumerate() {
                    let re_bits = label >> half;
                    let im_bits = label & (side - 1);
                    *point = Complex64::new(
                        axis_label_to_level[re_bits] / norm,
                        axis_label_to_level[im_bits] / norm,
                    );
                }
                Ok(Constellation {
                    order: m,
                    bits_per_symbol,
                    points,
                })
            }
            other => Err(ModemError::UnsupportedOrder(other)),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Label of the Euclidean-nearest point. Ties break to the lowest label;
    /// non-finite inputs map to label 0.
    pub fn nearest_label(&self, x: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = (x - self.points[0]).norm_sqr();
        for (label, &p) in self.points.iter().enumerate().skip(1) {
            let d = (x - p).norm_sqr();
            if d < best_d {
                best = label;
                best_d = d;
            }
        }
        if best_d.is_nan() {
            0
        } else {
            best
        }
    }

    fn label_bits(&self, label: usize, out: &mut Vec<u8>) {
        for i in (0..self.bits_per_symbol).rev() {
            out.push(((label >> i) & 1) as u8);
        }
    }
}

/// Map a bit stream (MSB of each symbol first) to constellation symbols.
pub fn modulate(bits: &[u8], m: usize) -> Result<Vec<Complex64>, ModemError> {
    let table = Constellation::new(m)?;
    let k = table.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        return Err(ModemError::BitLength {
            len: bits.len(),
            bits_per_symbol: k,
        });
    }
    Ok(bits
        .chunks(k)
        .map(|chunk| {
            let mut label = 0usize;
            for &b in chunk {
                label = (label << 1) | usize::from(b & 1);
            }
            table.point(label)
        })
        .collect())
}

/// Map each soft value to its nearest constellation point.
pub fn slice(soft: &[Complex64], m: usize) -> Result<Vec<Complex64>, ModemError> {
    let table = Constellation::new(m)?;
    Ok(soft
        .iter()
        .map(|&x| table.point(table.nearest_label(x)))
        .collect())
}

/// Hard-demap symbols to the bits of the nearest constellation point.
pub fn demodulate(symbols: &[Complex64], m: usize) -> Result<Vec<u8>, ModemError> {
    let table = Constellation::new(m)?;
    let mut out = Vec::with_capacity(symbols.len() * table.bits_per_symbol());
    for &s in symbols {
        let label = table.nearest_label(s);
        table.label_bits(label, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_stream;

    #[test]
    fn fixed_mappings() {
        assert_eq!(modulate(&[0], 2).unwrap()[0], Complex64::new(1.0, 0.0));
        assert_eq!(modulate(&[1], 2).unwrap()[0], Complex64::new(-1.0, 0.0));
        let q = modulate(&[0, 0], 4).unwrap()[0];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((q - Complex64::new(s, s)).norm() < 1e-15);
        let q = modulate(&[1, 0], 4).unwrap()[0];
        assert!((q - Complex64::new(-s, s)).norm() < 1e-15);
    }

    #[test]
    fn unit_energy_and_no_zero_point() {
        for &m in &[2usize, 4, 16] {
            let table = Constellation::new(m).unwrap();
            let mean: f64 = table.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((mean - 1.0).abs() < 1e-12, "M={m} mean power {mean}");
            assert!(table.points().iter().all(|p| p.norm() > 0.1));
        }
    }

    #[test]
    fn square_qam_labels_are_gray_per_axis() {
        for &m in &[4usize, 16] {
            let table = Constellation::new(m).unwrap();
            let pts = table.points();
            // Nearest neighbors along either axis differ in exactly one bit.
            for a in 0..m {
                for b in 0..m {
                    if a == b {
                        continue;
                    }
                    let d = (pts[a] - pts[b]).norm();
                    let min_d = if m == 4 {
                        2.0 / 2f64.sqrt()
                    } else {
                        2.0 / 10f64.sqrt()
                    };
                    if (d - min_d).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "labels {a} and {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_all_orders() {
        let mut rng = derive_stream(3, 0, "modem-bits");
        for &m in &[2usize, 4, 16] {
            let k = Constellation::new(m).unwrap().bits_per_symbol();
            let bits: Vec<u8> = (0..120 * k).map(|_| rng.next_bit()).collect();
            let syms = modulate(&bits, m).unwrap();
            assert_eq!(syms.len(), bits.len() / k);
            assert_eq!(demodulate(&syms, m).unwrap(), bits);
        }
    }

    #[test]
    fn rejects_bad_lengths_and_orders() {
        assert!(modulate(&[0, 1, 0], 4).is_err());
        assert!(modulate(&[0], 8).is_err());
    }

    #[test]
    fn slice_is_idempotent_and_nearest() {
        let mut rng = derive_stream(9, 0, "modem-slice");
        for &m in &[2usize, 4, 16] {
            let table = Constellation::new(m).unwrap();
            let soft: Vec<Complex64> = (0..500).map(|_| rng.next_complex_gaussian(2.0)).collect();
            let hard = slice(&soft, m).unwrap();
            let twice = slice(&hard, m).unwrap();
            assert_eq!(hard, twice);
            for (x, y) in soft.iter().zip(&hard) {
                // Exhaustive check against every candidate point.
                for p in table.points() {
                    assert!((x - y).norm_sqr() <= (x - p).norm_sqr() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bpsk_decides_on_real_part() {
        let hard = slice(&[Complex64::new(0.3, -0.9)], 2).unwrap();
        assert_eq!(hard[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn midpoints_break_to_lower_label() {
        // Exhaustive midpoint scan: whenever the two distances tie exactly,
        // the lower label must win.
        let mut exact_ties = 0usize;
        for &m in &[2usize, 4, 16] {
            let table = Constellation::new(m).unwrap();
            for a in 0..m {
                for b in (a + 1)..m {
                    let mid = (table.point(a) + table.point(b)) * 0.5;
                    let label = table.nearest_label(mid);
                    let d_win = (mid - table.point(label)).norm_sqr();
                    assert!(d_win <= (mid - table.point(a)).norm_sqr());
                    assert!(d_win <= (mid - table.point(b)).norm_sqr());
                    let d_a = (mid - table.point(a)).norm_sqr();
                    let d_b = (mid - table.point(b)).norm_sqr();
                    if d_a == d_b && d_win == d_a {
                        exact_ties += 1;
                        assert!(label <= a, "tie between {a} and {b} chose {label}");
                    }
                }
            }
        }
        assert!(exact_ties > 0);
        // A hand-built exact tie: 0 is equidistant from the BPSK points.
        let table = Constellation::new(2).unwrap();
        assert_eq!(table.nearest_label(Complex64::new(0.0, 0.0)), 0);
    }

    #[test]
    fn non_finite_inputs_slice_to_label_zero() {
        let bad = [
            Complex64::new(f64::NAN, 0.0),
            Complex64::new(f64::INFINITY, f64::NEG_INFINITY),
        ];
        for &m in &[2usize, 4, 16] {
            let table = Constellation::new(m).unwrap();
            let out = slice(&bad, m).unwrap();
            assert_eq!(out[0], table.point(0));
            // Infinities still produce a defined label.
            assert!(out[1].norm() > 0.0);
        }
    }

    #[test]
    fn demodulate_nearest_quadrant() {
        // -0.9 + 0.1j sits in the (-,+) quadrant of QPSK: bits [1, 0].
        let bits = demodulate(&[Complex64::new(-0.9, 0.1)], 4).unwrap();
        assert_eq!(bits, vec![1, 0]);
    }

    #[test]
    fn empirical_energy_converges_to_one() {
        let mut rng = derive_stream(11, 0, "modem-energy");
        for &m in &[2usize, 4, 16] {
            let k = Constellation::new(m).unwrap().bits_per_symbol();
            let count = 100_000;
            let bits: Vec<u8> = (0..count * k).map(|_| rng.next_bit()).collect();
            let syms = modulate(&bits, m).unwrap();
            let mean: f64 = syms.iter().map(|s| s.norm_sqr()).sum::<f64>() / syms.len() as f64;
            assert!((mean - 1.0).abs() < 0.01, "M={m}: mean power {mean}");
        }
    }
}
