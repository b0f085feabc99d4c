//! Gray-mapped square QAM mapping and (soft) demapping.
//!
//! Labels are built per axis: the first `m/2` bits of a symbol label
//! select the in-phase level, the last `m/2` the quadrature level, each
//! through an independent reflected Gray code. Constellations are scaled
//! to unit average symbol energy.

use crate::bits::BitVector;
use crate::error::{Error, Result};
use num_complex::Complex64;

/// A square QAM constellation with Gray labeling.
#[derive(Debug, Clone)]
pub struct Constellation {
    m: usize,
    /// Point for each m-bit label, indexed by the label value (MSB-first).
    points: Vec<Complex64>,
}

fn gray_to_binary(mut g: u32) -> u32 {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    /// Supported orders: m = 2 (QPSK), 4 (16-QAM), 6 (64-QAM).
    pub fn new(m: usize) -> Result<Self> {
        if !matches!(m, 2 | 4 | 6) {
            return Err(Error::invalid(format!(
                "bits per symbol m = {m} not in {{2, 4, 6}}"
            )));
        }
        let half = m / 2;
        let levels = 1usize << half; // per-axis levels
        // E[|p|^2] = 2 * (L^2 - 1) / 3 for levels +-1, +-3, ...
        let scale = (3.0 / (2.0 * ((levels * levels - 1) as f64))).sqrt();
        let axis_amplitude = |bits: u32| -> f64 {
            let idx = gray_to_binary(bits);
            (levels as f64 - 1.0 - 2.0 * idx as f64) * scale
        };
        let points = (0..1u32 << m)
            .map(|label| {
                let i_bits = label >> half;
                let q_bits = label & ((1 << half) - 1);
                Complex64::new(axis_amplitude(i_bits), axis_amplitude(q_bits))
            })
            .collect();
        Ok(Self { m, points })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Maps bits to symbols; the bit count must divide evenly into m-bit groups.
    pub fn map(&self, bits: &BitVector) -> Result<Vec<Complex64>> {
        if bits.len() % self.m != 0 {
            return Err(Error::invalid(format!(
                "bit count {} not divisible by m = {}",
                bits.len(),
                self.m
            )));
        }
        let mut out = Vec::with_capacity(bits.len() / self.m);
        for i in (0..bits.len()).step_by(self.m) {
            let label = bits.read_uint(i, self.m)? as usize;
            out.push(self.points[label]);
        }
        Ok(out)
    }

    /// Nearest-point hard decision per symbol; ties break toward the
    /// smaller label value.
    pub fn demap_hard(&self, symbols: &[Complex64]) -> BitVector {
        let mut out = BitVector::new();
        for &y in symbols {
            let label = self.nearest_label(y);
            out.push_uint(label as u64, self.m);
        }
        out
    }

    pub fn nearest_label(&self, y: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (label, &p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    /// Exact per-bit LLRs (positive favors 0) under circular complex
    /// Gaussian noise of total variance `noise_var`.
    pub fn demap_llr(&self, symbols: &[Complex64], noise_var: f64) -> Result<Vec<f64>> {
        self.demap_llr_impl(symbols, &vec![noise_var; symbols.len()], false)
    }

    /// Like [`demap_llr`](Self::demap_llr) with a per-symbol noise variance.
    pub fn demap_llr_per_symbol(
        &self,
        symbols: &[Complex64],
        noise_vars: &[f64],
    ) -> Result<Vec<f64>> {
        self.demap_llr_impl(symbols, noise_vars, false)
    }

    /// Max-log approximation of the LLRs.
    pub fn demap_llr_maxlog(&self, symbols: &[Complex64], noise_var: f64) -> Result<Vec<f64>> {
        self.demap_llr_impl(symbols, &vec![noise_var; symbols.len()], true)
    }

    fn demap_llr_impl(
        &self,
        symbols: &[Complex64],
        noise_vars: &[f64],
        max_log: bool,
    ) -> Result<Vec<f64>> {
        if noise_vars.len() != symbols.len() {
            return Err(Error::invalid("noise variance count != symbol count"));
        }
        if let Some(&v) = noise_vars.iter().find(|&&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::invalid(format!("noise variance {v} must be > 0")));
        }
        let mut out = Vec::with_capacity(symbols.len() * self.m);
        let mut metric = vec![0.0; self.points.len()];
        for (&y, &var) in symbols.iter().zip(noise_vars) {
            for (label, &p) in self.points.iter().enumerate() {
                metric[label] = -(y - p).norm_sqr() / var;
            }
            for bit in 0..self.m {
                let shift = self.m - 1 - bit; // bit 0 is the label MSB
                let (mut m0, mut m1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                let (mut s0, mut s1) = (0.0f64, 0.0f64);
                for (label, &t) in metric.iter().enumerate() {
                    if (label >> shift) & 1 == 0 {
                        if t > m0 {
                            m0 = t;
                        }
                    } else if t > m1 {
                        m1 = t;
                    }
                }
                if max_log {
                    out.push(m0 - m1);
                    continue;
                }
                for (label, &t) in metric.iter().enumerate() {
                    if (label >> shift) & 1 == 0 {
                        s0 += (t - m0).exp();
                    } else {
                        s1 += (t - m1).exp();
                    }
                }
                out.push(m0 + s0.ln() - (m1 + s1.ln()));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_bits(len: usize, rng: &mut rng::Rng) -> BitVector {
        BitVector::from_slice(&(0..len).map(|_| rng.gen_range(0..=1u8)).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn unit_average_energy_all_orders() {
        for m in [2, 4, 6] {
            let c = Constellation::new(m).unwrap();
            let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>()
                / c.points().len() as f64;
            assert!((mean - 1.0).abs() < 1e-12, "m = {m}: mean energy {mean}");
        }
    }

    // Oracle: enumerate the 4-point Gray square directly.
    #[test]
    fn qpsk_matches_enumerated_square() {
        let c = Constellation::new(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let mapped = c
            .map(&BitVector::from_slice(&[0, 0, 0, 1, 1, 0, 1, 1]).unwrap())
            .unwrap();
        let expected = [
            Complex64::new(s, s),
            Complex64::new(s, -s),
            Complex64::new(-s, s),
            Complex64::new(-s, -s),
        ];
        for (a, b) in mapped.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    /// Gray property: points adjacent along either axis differ in exactly
    /// one label bit. Exhaustive over every supported order.
    #[test]
    fn gray_adjacency_exhaustive() {
        for m in [2usize, 4, 6] {
            let c = Constellation::new(m).unwrap();
            let pts = c.points();
            let levels = 1usize << (m / 2);
            let step = 2.0 * (3.0 / (2.0 * ((levels * levels - 1) as f64))).sqrt();
            for (a, &pa) in pts.iter().enumerate() {
                for (b, &pb) in pts.iter().enumerate().skip(a + 1) {
                    let d = pb - pa;
                    let adjacent = (d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9
                        || (d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9;
                    if adjacent {
                        assert_eq!(
                            (a ^ b).count_ones(),
                            1,
                            "m = {m}: labels {a:#b} and {b:#b} are neighbors"
                        );
                    }
                }
            }
            // labeling is a bijection onto distinct points
            for (a, &pa) in pts.iter().enumerate() {
                for &pb in pts.iter().skip(a + 1) {
                    assert!((pa - pb).norm() > 1e-9);
                }
            }
        }
    }

    #[test]
    fn sixteen_qam_all_patterns_distinct_unit_energy() {
        let c = Constellation::new(4).unwrap();
        let mut bits = BitVector::new();
        for label in 0..16u64 {
            bits.push_uint(label, 4);
        }
        let syms = c.map(&bits).unwrap();
        assert_eq!(syms.len(), 16);
        let mean: f64 = syms.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_maps_to_empty() {
        let c = Constellation::new(4).unwrap();
        assert!(c.map(&BitVector::new()).unwrap().is_empty());
    }

    #[test]
    fn map_rejects_ragged_length() {
        let c = Constellation::new(4).unwrap();
        assert!(c.map(&BitVector::zeros(6)).is_err());
    }

    #[test]
    fn hard_demap_round_trip() {
        let mut rng = rng::stream(21, "modem-roundtrip", &[]);
        for m in [2, 4, 6] {
            let c = Constellation::new(m).unwrap();
            let bits = random_bits(m * 100, &mut rng);
            let syms = c.map(&bits).unwrap();
            assert_eq!(c.demap_hard(&syms), bits);
        }
    }

    #[test]
    fn hard_demap_survives_small_perturbation() {
        let c = Constellation::new(4).unwrap();
        let bits = BitVector::from_slice(&[1, 0, 1, 1]).unwrap();
        let mut syms = c.map(&bits).unwrap();
        syms[0] += Complex64::new(0.05, -0.05); // well under half min-distance
        assert_eq!(c.demap_hard(&syms), bits);
    }

    #[test]
    fn hard_demap_tie_breaks_to_lower_label() {
        let c = Constellation::new(2).unwrap();
        // midway between labels 0 (+,+) and 1 (+,-): on the I axis
        let y = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        assert_eq!(c.nearest_label(y), 0);
        // the exact origin ties all four points
        assert_eq!(c.nearest_label(Complex64::new(0.0, 0.0)), 0);
    }

    #[test]
    fn llr_signs_match_bits_at_low_noise() {
        let mut rng = rng::stream(22, "modem-llr-sign", &[]);
        for m in [2, 4, 6] {
            let c = Constellation::new(m).unwrap();
            let bits = random_bits(m * 50, &mut rng);
            let syms = c.map(&bits).unwrap();
            let llrs = c.demap_llr(&syms, 1e-3).unwrap();
            for (b, l) in bits.iter().zip(&llrs) {
                assert_eq!(b == 1, *l < 0.0);
            }
        }
    }

    #[test]
    fn origin_symbol_gives_zero_llrs() {
        // QPSK is fully symmetric about the origin, so every bit ties.
        let c = Constellation::new(2).unwrap();
        let llrs = c.demap_llr(&[Complex64::new(0.0, 0.0)], 0.5).unwrap();
        for l in llrs {
            assert!(l.abs() < 1e-12, "LLR {l} not zero at the origin");
        }
        // For 16-QAM only the per-axis sign bits (label bits 0 and 2) tie
        // at the origin; the amplitude bits do not.
        let c16 = Constellation::new(4).unwrap();
        let llrs16 = c16.demap_llr(&[Complex64::new(0.0, 0.0)], 0.5).unwrap();
        assert!(llrs16[0].abs() < 1e-12);
        assert!(llrs16[2].abs() < 1e-12);
    }

    // Oracle: naive per-bit probability sums over all 16 points.
    #[test]
    fn exact_llr_matches_naive_summation() {
        let c = Constellation::new(4).unwrap();
        let y = Complex64::new(0.3, -0.55);
        let var = 0.5;
        let llrs = c.demap_llr(&[y], var).unwrap();
        for bit in 0..4 {
            let shift = 3 - bit;
            let (mut p0, mut p1) = (0.0f64, 0.0f64);
            for (label, &p) in c.points().iter().enumerate() {
                let lik = (-(y - p).norm_sqr() / var).exp();
                if (label >> shift) & 1 == 0 {
                    p0 += lik;
                } else {
                    p1 += lik;
                }
            }
            let naive = (p0 / p1).ln();
            assert!(
                (llrs[bit] - naive).abs() < 1e-10,
                "bit {bit}: {} vs naive {naive}",
                llrs[bit]
            );
        }
    }

    #[test]
    fn maxlog_tracks_exact_at_low_noise() {
        let c = Constellation::new(4).unwrap();
        let y = Complex64::new(0.31, -0.92);
        let exact = c.demap_llr(&[y], 0.01).unwrap();
        let approx = c.demap_llr_maxlog(&[y], 0.01).unwrap();
        for (a, b) in exact.iter().zip(&approx) {
            assert!((a - b).abs() / a.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn llr_rejects_bad_noise_variance() {
        let c = Constellation::new(4).unwrap();
        assert!(c.demap_llr(&[Complex64::new(0.0, 0.0)], 0.0).is_err());
        assert!(c.demap_llr(&[Complex64::new(0.0, 0.0)], -1.0).is_err());
    }
}
